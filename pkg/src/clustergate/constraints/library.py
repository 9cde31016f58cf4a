"""Built-in checks standing in for the stock Gatekeeper template library.

Each check receives validated parameters and one object and yields one
message per offending container or field.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterator, Mapping

from ..errors import ConstraintLoadError, QuantityError
from ..model import BINDING_KINDS, ClusterObject, Container, Pod, WorkloadObject
from ..quantity import Quantity, ResourceKind, format_quantity, parse_quantity

PARAM_TYPES = ("string-list", "quantity", "number", "range-list", "string")
RESOURCE_NAMES = ("cpu", "memory")
PROBE_NAMES = ("readinessProbe", "livenessProbe")


@dataclass(frozen=True)
class ParamSpec:
    type: str
    required: bool = False

    def __post_init__(self) -> None:
        if self.type not in PARAM_TYPES:
            raise ConstraintLoadError(f"unknown parameter type {self.type!r}")


@dataclass(frozen=True)
class ConstraintTemplate:
    name: str
    check_id: str
    parameter_schema: dict[str, ParamSpec] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.check_id not in CHECKS:
            raise ConstraintLoadError(f"template {self.name!r}: no built-in check {self.check_id!r}")


CheckFn = Callable[[Mapping[str, Any], ClusterObject], Iterator[str]]
CHECKS: dict[str, CheckFn] = {}


def check(check_id: str) -> Callable[[CheckFn], CheckFn]:
    def register(fn: CheckFn) -> CheckFn:
        CHECKS[check_id] = fn
        return fn

    return register


# ---------------------------------------------------------------- parameter coercion


def coerce_param(name: str, spec: ParamSpec, value: Any) -> Any:
    where = f"parameter {name!r}"
    if spec.type == "string":
        if not isinstance(value, str):
            raise ConstraintLoadError(f"{where} must be a string")
        return value
    if spec.type == "string-list":
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            raise ConstraintLoadError(f"{where} must be a list of strings")
        return tuple(value)
    if spec.type == "quantity":
        if name not in RESOURCE_NAMES:
            raise ConstraintLoadError(f"{where}: quantity parameters must be named cpu or memory")
        try:
            return parse_quantity(value, ResourceKind(name))
        except QuantityError as exc:
            raise ConstraintLoadError(f"{where}: {exc}") from exc
    if spec.type == "number":
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ConstraintLoadError(f"{where} must be a number")
        try:
            number = Fraction(str(value))
        except (ValueError, ZeroDivisionError) as exc:
            raise ConstraintLoadError(f"{where}: {value!r} is not a number") from exc
        if number < 0:
            raise ConstraintLoadError(f"{where} must be non-negative")
        return number
    # range-list
    if not isinstance(value, list) or not value:
        raise ConstraintLoadError(f"{where} must be a non-empty list of ranges")
    ranges = []
    for i, r in enumerate(value):
        if not isinstance(r, dict):
            raise ConstraintLoadError(f"{where}[{i}] must be a mapping with min_replicas/max_replicas")
        lo, hi = r.get("min_replicas"), r.get("max_replicas")
        if not all(isinstance(x, int) and not isinstance(x, bool) for x in (lo, hi)) or lo > hi:
            raise ConstraintLoadError(f"{where}[{i}] needs integer min_replicas <= max_replicas")
        ranges.append((lo, hi))
    return tuple(ranges)


def validate_parameters(template: ConstraintTemplate, params: Mapping[str, Any] | None) -> dict[str, Any]:
    params = dict(params or {})
    unknown = sorted(set(params) - set(template.parameter_schema))
    if unknown:
        raise ConstraintLoadError(f"template {template.name} does not accept parameters {unknown}")
    out = {}
    for name, spec in template.parameter_schema.items():
        if name not in params:
            if spec.required:
                raise ConstraintLoadError(f"template {template.name} requires parameter {name!r}")
            continue
        value = coerce_param(name, spec, params[name])
        domain = ENUM_PARAMS.get((template.check_id, name))
        if domain is not None and not set(value) <= set(domain):
            raise ConstraintLoadError(f"parameter {name!r} of {template.name} accepts only {list(domain)}")
        out[name] = value
    return out


# ---------------------------------------------------------------- object helpers


def pod_of(obj: ClusterObject) -> Pod | None:
    if isinstance(obj, Pod):
        return obj
    return obj.pod_template


def containers_of(obj: ClusterObject, *, include_init: bool = True) -> tuple[Container, ...]:
    pod = pod_of(obj)
    if pod is None:
        return ()
    return pod.containers + (pod.init_containers if include_init else ())


def _q(q: Quantity) -> str:
    return format_quantity(q)


# ---------------------------------------------------------------- checks


@check("k8sallowedrepos")
def allowed_repos(params, obj):
    repos = params["repos"]
    for c in containers_of(obj):
        if not any(c.image.startswith(r) for r in repos):
            yield f"container <{c.name}> has an invalid image repo <{c.image}>, allowed repos are {list(repos)}"


def _bounded(params, obj, attr: str, noun: str):
    for c in containers_of(obj):
        values = getattr(c, attr)
        for res in RESOURCE_NAMES:
            if res not in values:
                yield f"container <{c.name}> has no {res} {noun}"
            elif res in params and values[res].value > params[res].value:
                yield (f"container <{c.name}> {res} {noun} <{_q(values[res])}> is higher than "
                       f"the maximum allowed of <{_q(params[res])}>")


@check("k8scontainerlimits")
def container_limits(params, obj):
    yield from _bounded(params, obj, "limits", "limit")


@check("k8scontainerrequests")
def container_requests(params, obj):
    yield from _bounded(params, obj, "requests", "request")


@check("k8scontainerratios")
def container_ratios(params, obj):
    ratio: Fraction = params["ratio"]
    for c in containers_of(obj):
        for res in RESOURCE_NAMES:
            if res not in c.limits:
                continue
            if res not in c.requests:
                yield f"container <{c.name}> has a {res} limit <{_q(c.limits[res])}> but no {res} request"
                continue
            limit, request = c.limits[res].value, c.requests[res].value
            # limit/request <= n/d  <=>  limit*d <= n*request, all integers
            if limit * ratio.denominator > ratio.numerator * request:
                yield (f"container <{c.name}> {res} limit <{_q(c.limits[res])}> to request "
                       f"<{_q(c.requests[res])}> ratio is higher than the maximum allowed ratio of <{ratio}>")


@check("k8srequiredresources")
def required_resources(params, obj):
    for c in containers_of(obj):
        for res in params.get("limits", ()):
            if res not in c.limits:
                yield f"container <{c.name}> does not have <{res}> limits defined"
        for res in params.get("requests", ()):
            if res not in c.requests:
                yield f"container <{c.name}> does not have <{res}> requests defined"


ANONYMOUS_SUBJECTS = {("Group", "system:unauthenticated"), ("User", "system:anonymous")}


@check("k8sdisallowanonymous")
def disallow_anonymous(params, obj):
    if not isinstance(obj, WorkloadObject) or obj.kind not in BINDING_KINDS:
        return
    for s in obj.subjects:
        if (s.kind, s.name) in ANONYMOUS_SUBJECTS:
            yield f"{obj.kind} <{obj.name}> grants access to {s.kind} <{s.name}>, which is not allowed"


@check("k8sreplicalimits")
def replica_limits(params, obj):
    replicas = getattr(obj, "replicas", None)
    if replicas is None:
        return
    ranges = params["ranges"]
    if not any(lo <= replicas <= hi for lo, hi in ranges):
        allowed = ", ".join(f"{lo}-{hi}" for lo, hi in ranges)
        yield f"replicas={replicas} is outside the allowed ranges [{allowed}]"


@check("k8srequiredprobes")
def required_probes(params, obj):
    attrs = {"readinessProbe": "readiness_probe", "livenessProbe": "liveness_probe"}
    # init containers cannot carry probes, so they are never checked here
    for c in containers_of(obj, include_init=False):
        for probe in params["probes"]:
            if getattr(c, attrs[probe]) is None:
                yield f"container <{c.name}> has no <{probe}>"


@check("k8spspcapabilities")
def capabilities(params, obj):
    # capability names compare case-insensitively; messages keep the configured spelling
    allowed = list(params.get("allowedCapabilities", ()))
    allowed_keys = {a.upper() for a in allowed}
    must_drop = list(params.get("requiredDropCapabilities", ()))
    for c in containers_of(obj):
        if "*" not in allowed_keys:
            bad = sorted(a for a in c.capabilities_add if a.upper() not in allowed_keys)
            if bad:
                yield f"container <{c.name}> has a disallowed capability {bad}, allowed capabilities are {sorted(allowed)}"
        dropped = {d.upper() for d in c.capabilities_drop}
        missing = sorted(d for d in must_drop if d.upper() not in dropped)
        if "ALL" not in dropped and missing:
            yield f"container <{c.name}> is not dropping all required capabilities, missing {missing}"


@check("k8spsphostnamespaces")
def host_namespaces(params, obj):
    pod = pod_of(obj)
    if pod is None:
        return
    if pod.host_pid:
        yield f"sharing the host PID namespace is not allowed: hostPID=true on <{obj.name}>"
    if pod.host_ipc:
        yield f"sharing the host IPC namespace is not allowed: hostIPC=true on <{obj.name}>"


BUILTIN_TEMPLATES: dict[str, ConstraintTemplate] = {
    t.name: t
    for t in (
        ConstraintTemplate("k8sallowedrepos", "k8sallowedrepos", {"repos": ParamSpec("string-list", True)}),
        ConstraintTemplate("k8scontainerlimits", "k8scontainerlimits",
                           {"cpu": ParamSpec("quantity"), "memory": ParamSpec("quantity")}),
        ConstraintTemplate("k8scontainerrequests", "k8scontainerrequests",
                           {"cpu": ParamSpec("quantity"), "memory": ParamSpec("quantity")}),
        ConstraintTemplate("k8scontainerratios", "k8scontainerratios", {"ratio": ParamSpec("number", True)}),
        ConstraintTemplate("k8srequiredresources", "k8srequiredresources",
                           {"limits": ParamSpec("string-list"), "requests": ParamSpec("string-list")}),
        ConstraintTemplate("k8sdisallowanonymous", "k8sdisallowanonymous"),
        ConstraintTemplate("k8sreplicalimits", "k8sreplicalimits", {"ranges": ParamSpec("range-list", True)}),
        ConstraintTemplate("k8srequiredprobes", "k8srequiredprobes", {"probes": ParamSpec("string-list", True)}),
        ConstraintTemplate("k8spspcapabilities", "k8spspcapabilities",
                           {"allowedCapabilities": ParamSpec("string-list"),
                            "requiredDropCapabilities": ParamSpec("string-list")}),
        ConstraintTemplate("k8spsphostnamespaces", "k8spsphostnamespaces"),
    )
}

# value-domain restrictions beyond the declared parameter type
ENUM_PARAMS = {
    ("k8srequiredresources", "limits"): RESOURCE_NAMES,
    ("k8srequiredresources", "requests"): RESOURCE_NAMES,
    ("k8srequiredprobes", "probes"): PROBE_NAMES,
}
