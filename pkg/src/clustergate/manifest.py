"""Manifest parsing and canonical serialization.

Documents follow upstream Kubernetes field spellings. ``to_document`` emits the
canonical JSON form and ``from_document`` is its inverse for every model type.
"""
from __future__ import annotations

import json
import warnings
from pathlib import Path
from typing import Any, Iterable, Union

import yaml

from .errors import ManifestError, QuantityError, UnknownKindError
from .model import (
    BINDING_KINDS,
    CLUSTER_SCOPED_KINDS,
    POD_TEMPLATE_KINDS,
    ClusterState,
    Container,
    IPBlock,
    Namespace,
    NetworkPolicy,
    Peer,
    Pod,
    PolicyType,
    PortSpec,
    Requirement,
    Rule,
    Selector,
    Subject,
    Volume,
    VolumeMount,
    WorkloadObject,
)
from .quantity import ResourceKind, format_quantity, parse_quantity

Manifest = Union[Pod, WorkloadObject, NetworkPolicy]

KNOWN_KINDS = frozenset({"Pod", "NetworkPolicy"}) | POD_TEMPLATE_KINDS | BINDING_KINDS

_API_VERSIONS = {
    "Pod": "v1",
    "Deployment": "apps/v1",
    "ReplicaSet": "apps/v1",
    "StatefulSet": "apps/v1",
    "RoleBinding": "rbac.authorization.k8s.io/v1",
    "ClusterRoleBinding": "rbac.authorization.k8s.io/v1",
    "NetworkPolicy": "networking.k8s.io/v1",
}


class ManifestWarning(UserWarning):
    pass


# ---------------------------------------------------------------- decoding


def load_documents(data: bytes | str, fmt: str = "json") -> list[Any]:
    """Decode raw bytes into one or more documents, reporting syntax positions."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ManifestError(f"manifest is not UTF-8: {exc}") from exc
    if fmt == "json":
        try:
            return [json.loads(data)]
        except json.JSONDecodeError as exc:
            raise ManifestError(f"JSON syntax error: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    if fmt == "yaml":
        try:
            return [d for d in yaml.safe_load_all(data) if d is not None]
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            problem = getattr(exc, "problem", None) or str(exc)
            if mark is not None:
                raise ManifestError(f"YAML syntax error: {problem}", line=mark.line + 1, column=mark.column + 1) from exc
            raise ManifestError(f"YAML syntax error: {problem}") from exc
    raise ValueError(f"unknown manifest format {fmt!r}")


def format_for_path(path: str | Path) -> str:
    return "json" if str(path).endswith(".json") else "yaml"


def parse_manifest(data: bytes | str, fmt: str = "json", *, strict: bool = False) -> Manifest:
    docs = load_documents(data, fmt)
    if len(docs) != 1:
        raise ManifestError(f"expected exactly one document, found {len(docs)}")
    return from_document(docs[0], strict=strict)


def parse_manifest_stream(data: bytes | str, fmt: str = "yaml", *, strict: bool = False) -> list[Manifest]:
    return [from_document(d, strict=strict) for d in load_documents(data, fmt)]


def read_manifests(path: str | Path, *, strict: bool = False) -> list[Manifest]:
    return parse_manifest_stream(Path(path).read_bytes(), format_for_path(path), strict=strict)


# ---------------------------------------------------------------- helpers


def _mapping(value: Any, where: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ManifestError(f"{where} must be a mapping, got {type(value).__name__}")
    return value


def _list(value: Any, where: str) -> list:
    if value is None:
        return []
    if not isinstance(value, list):
        raise ManifestError(f"{where} must be a list, got {type(value).__name__}")
    return value


def _str_map(value: Any, where: str) -> dict[str, str]:
    out = {}
    for k, v in _mapping(value, where).items():
        if v is None:
            v = ""
        if not isinstance(v, str):
            raise ManifestError(f"{where}.{k} must be a string")
        out[str(k)] = v
    return out


def _bool(value: Any, where: str) -> bool:
    if value is None:
        return False
    if not isinstance(value, bool):
        raise ManifestError(f"{where} must be a boolean")
    return value


def _strict_keys(doc: dict, allowed: Iterable[str], where: str, strict: bool) -> None:
    if not strict:
        return
    extra = sorted(set(doc) - set(allowed))
    if extra:
        warnings.warn(f"{where}: ignoring unknown fields {extra}", ManifestWarning, stacklevel=3)


# ---------------------------------------------------------------- parsing


def parse_selector(doc: Any, where: str = "selector") -> Selector:
    doc = _mapping(doc, where)
    exprs = []
    for i, e in enumerate(_list(doc.get("matchExpressions"), f"{where}.matchExpressions")):
        e = _mapping(e, f"{where}.matchExpressions[{i}]")
        if "key" not in e or "operator" not in e:
            raise ManifestError(f"{where}.matchExpressions[{i}] needs key and operator")
        try:
            exprs.append(Requirement(e["key"], e["operator"], tuple(_list(e.get("values"), "values"))))
        except ValueError as exc:
            raise ManifestError(f"{where}.matchExpressions[{i}]: {exc}") from exc
    return Selector(_str_map(doc.get("matchLabels"), f"{where}.matchLabels"), tuple(exprs))


def _resources(doc: Any, where: str) -> dict:
    out = {}
    for name, raw in _mapping(doc, where).items():
        if name not in ("cpu", "memory"):
            continue  # other resource names are not modeled
        try:
            out[name] = parse_quantity(raw, ResourceKind(name))
        except QuantityError as exc:
            raise ManifestError(f"{where}.{name}: {exc}") from exc
    return out


def _probe(value: Any, where: str) -> dict | None:
    if value is None:
        return None
    return _mapping(value, where)


def parse_container(doc: Any, where: str, strict: bool = False) -> Container:
    doc = _mapping(doc, where)
    _strict_keys(doc, {"name", "image", "resources", "readinessProbe", "livenessProbe",
                       "securityContext", "volumeMounts", "ports", "args", "command", "env"}, where, strict)
    if not doc.get("name"):
        raise ManifestError(f"{where}.name is required")
    if not isinstance(doc.get("image"), str) or not doc["image"]:
        raise ManifestError(f"{where}.image is required")
    resources = _mapping(doc.get("resources"), f"{where}.resources")
    caps = _mapping(_mapping(doc.get("securityContext"), "securityContext").get("capabilities"), "capabilities")
    mounts = []
    for i, m in enumerate(_list(doc.get("volumeMounts"), f"{where}.volumeMounts")):
        m = _mapping(m, f"{where}.volumeMounts[{i}]")
        if not m.get("name") or not m.get("mountPath"):
            raise ManifestError(f"{where}.volumeMounts[{i}] needs name and mountPath")
        mounts.append(VolumeMount(m["name"], m["mountPath"]))
    return Container(
        name=str(doc["name"]),
        image=doc["image"],
        requests=_resources(resources.get("requests"), f"{where}.resources.requests"),
        limits=_resources(resources.get("limits"), f"{where}.resources.limits"),
        readiness_probe=_probe(doc.get("readinessProbe"), f"{where}.readinessProbe"),
        liveness_probe=_probe(doc.get("livenessProbe"), f"{where}.livenessProbe"),
        capabilities_add=tuple(str(c) for c in _list(caps.get("add"), "capabilities.add")),
        capabilities_drop=tuple(str(c) for c in _list(caps.get("drop"), "capabilities.drop")),
        volume_mounts=tuple(mounts),
    )


def _pod_from_parts(name: str, namespace: str, meta: dict, spec: dict, pod_ip: str | None,
                    where: str, strict: bool) -> Pod:
    _strict_keys(spec, {"containers", "initContainers", "serviceAccountName", "serviceAccount",
                        "hostPID", "hostIPC", "volumes", "hostNetwork", "nodeName"}, f"{where}.spec", strict)
    containers = [parse_container(c, f"{where}.spec.containers[{i}]", strict)
                  for i, c in enumerate(_list(spec.get("containers"), f"{where}.spec.containers"))]
    if not containers:
        raise ManifestError(f"{where}.spec.containers must be a non-empty list")
    init = [parse_container(c, f"{where}.spec.initContainers[{i}]", strict)
            for i, c in enumerate(_list(spec.get("initContainers"), f"{where}.spec.initContainers"))]
    volumes = []
    for i, v in enumerate(_list(spec.get("volumes"), f"{where}.spec.volumes")):
        v = _mapping(v, f"{where}.spec.volumes[{i}]")
        if not v.get("name"):
            raise ManifestError(f"{where}.spec.volumes[{i}].name is required")
        medium = _mapping(v.get("emptyDir"), "emptyDir").get("medium", "") or ""
        volumes.append(Volume(v["name"], medium))
    return Pod(
        name=name,
        namespace=namespace,
        containers=tuple(containers),
        labels=_str_map(meta.get("labels"), f"{where}.metadata.labels"),
        annotations=_str_map(meta.get("annotations"), f"{where}.metadata.annotations"),
        service_account=spec.get("serviceAccountName") or spec.get("serviceAccount") or "default",
        init_containers=tuple(init),
        host_pid=_bool(spec.get("hostPID"), f"{where}.spec.hostPID"),
        host_ipc=_bool(spec.get("hostIPC"), f"{where}.spec.hostIPC"),
        pod_ip=pod_ip,
        volumes=tuple(volumes),
    )


def _parse_rules(items: Any, peer_key: str, where: str) -> tuple[Rule, ...]:
    rules = []
    for i, r in enumerate(_list(items, where)):
        r = _mapping(r, f"{where}[{i}]")
        peers = []
        for j, p in enumerate(_list(r.get(peer_key), f"{where}[{i}].{peer_key}")):
            p = _mapping(p, f"{where}[{i}].{peer_key}[{j}]")
            ip_block = None
            if "ipBlock" in p:
                b = _mapping(p["ipBlock"], "ipBlock")
                if "cidr" not in b:
                    raise ManifestError(f"{where}[{i}].{peer_key}[{j}].ipBlock.cidr is required")
                ip_block = IPBlock(b["cidr"], tuple(_list(b.get("except"), "ipBlock.except")))
            pod_sel = parse_selector(p["podSelector"], "podSelector") if "podSelector" in p else None
            ns_sel = parse_selector(p["namespaceSelector"], "namespaceSelector") if "namespaceSelector" in p else None
            try:
                peers.append(Peer(pod_sel, ns_sel, ip_block))
            except ManifestError as exc:
                raise ManifestError(f"{where}[{i}].{peer_key}[{j}]: {exc}") from exc
        ports = []
        for j, pt in enumerate(_list(r.get("ports"), f"{where}[{i}].ports")):
            pt = _mapping(pt, f"{where}[{i}].ports[{j}]")
            if "endPort" in pt:
                raise ManifestError(f"{where}[{i}].ports[{j}]: endPort ranges are not supported")
            try:
                ports.append(PortSpec(pt.get("protocol") or "TCP", pt.get("port")))
            except ValueError as exc:
                raise ManifestError(f"{where}[{i}].ports[{j}]: {exc}") from exc
        rules.append(Rule(tuple(peers), tuple(ports)))
    return tuple(rules)


def parse_network_policy(name: str, namespace: str, spec: dict, where: str) -> NetworkPolicy:
    types = spec.get("policyTypes")
    if types is not None:
        try:
            types = frozenset(PolicyType(t) for t in _list(types, f"{where}.spec.policyTypes"))
        except ValueError as exc:
            raise ManifestError(f"{where}.spec.policyTypes: {exc}") from exc
    return NetworkPolicy(
        name=name,
        namespace=namespace,
        pod_selector=parse_selector(spec.get("podSelector"), f"{where}.spec.podSelector"),
        policy_types=types,
        ingress=_parse_rules(spec.get("ingress"), "from", f"{where}.spec.ingress"),
        egress=_parse_rules(spec.get("egress"), "to", f"{where}.spec.egress"),
    )


def from_document(doc: Any, *, strict: bool = False, default_namespace: str = "default") -> Manifest:
    doc = _mapping(doc, "document")
    kind = doc.get("kind")
    if kind not in KNOWN_KINDS:
        raise UnknownKindError(f"unknown kind {kind!r}")
    _strict_keys(doc, {"apiVersion", "kind", "metadata", "spec", "status", "subjects", "roleRef"}, kind, strict)
    meta = _mapping(doc.get("metadata"), "metadata")
    name = meta.get("name")
    if not name or not isinstance(name, str):
        raise ManifestError(f"{kind}: metadata.name is required")
    namespace = "" if kind in CLUSTER_SCOPED_KINDS else (meta.get("namespace") or default_namespace)
    where = f"{kind} {name}"
    spec = _mapping(doc.get("spec"), f"{where}.spec")

    if kind == "Pod":
        pod_ip = _mapping(doc.get("status"), "status").get("podIP")
        return _pod_from_parts(name, namespace, meta, spec, pod_ip, where, strict)
    if kind == "NetworkPolicy":
        return parse_network_policy(name, namespace, spec, where)

    labels = _str_map(meta.get("labels"), f"{where}.metadata.labels")
    annotations = _str_map(meta.get("annotations"), f"{where}.metadata.annotations")
    if kind in POD_TEMPLATE_KINDS:
        template = _mapping(spec.get("template"), f"{where}.spec.template")
        tmeta = _mapping(template.get("metadata"), "template.metadata")
        pod_template = None
        if template:
            pod_template = _pod_from_parts(name, namespace, tmeta, _mapping(template.get("spec"), "template.spec"),
                                           None, f"{where}.spec.template", strict)
        replicas = spec.get("replicas")
        if replicas is not None and (isinstance(replicas, bool) or not isinstance(replicas, int)):
            raise ManifestError(f"{where}.spec.replicas must be an integer")
        return WorkloadObject(kind, name, namespace, labels, annotations, replicas=replicas, pod_template=pod_template)

    subjects = []
    for i, s in enumerate(_list(doc.get("subjects"), f"{where}.subjects")):
        s = _mapping(s, f"{where}.subjects[{i}]")
        if not s.get("kind") or not s.get("name"):
            raise ManifestError(f"{where}.subjects[{i}] needs kind and name")
        subjects.append(Subject(s["kind"], s["name"], s.get("namespace") or ""))
    role_ref = None
    if doc.get("roleRef"):
        rr = _mapping(doc["roleRef"], "roleRef")
        role_ref = (rr.get("kind", ""), rr.get("name", ""))
    return WorkloadObject(kind, name, namespace, labels, annotations, subjects=tuple(subjects), role_ref=role_ref)


# ---------------------------------------------------------------- serializing


def selector_document(sel: Selector) -> dict:
    out: dict[str, Any] = {}
    if sel.match_labels:
        out["matchLabels"] = dict(sel.match_labels)
    if sel.match_expressions:
        out["matchExpressions"] = [
            {"key": r.key, "operator": r.operator.value, **({"values": list(r.values)} if r.values else {})}
            for r in sel.match_expressions
        ]
    return out


def container_document(c: Container) -> dict:
    out: dict[str, Any] = {"name": c.name, "image": c.image}
    resources = {}
    if c.requests:
        resources["requests"] = {k: format_quantity(v) for k, v in sorted(c.requests.items())}
    if c.limits:
        resources["limits"] = {k: format_quantity(v) for k, v in sorted(c.limits.items())}
    if resources:
        out["resources"] = resources
    if c.readiness_probe is not None:
        out["readinessProbe"] = c.readiness_probe
    if c.liveness_probe is not None:
        out["livenessProbe"] = c.liveness_probe
    caps = {}
    if c.capabilities_add:
        caps["add"] = list(c.capabilities_add)
    if c.capabilities_drop:
        caps["drop"] = list(c.capabilities_drop)
    if caps:
        out["securityContext"] = {"capabilities": caps}
    if c.volume_mounts:
        out["volumeMounts"] = [{"name": m.name, "mountPath": m.mount_path} for m in c.volume_mounts]
    return out


def _metadata(name: str, namespace: str, labels: dict, annotations: dict) -> dict:
    meta: dict[str, Any] = {"name": name}
    if namespace:
        meta["namespace"] = namespace
    if labels:
        meta["labels"] = dict(labels)
    if annotations:
        meta["annotations"] = dict(annotations)
    return meta


def pod_spec_document(pod: Pod) -> dict:
    spec: dict[str, Any] = {"containers": [container_document(c) for c in pod.containers]}
    if pod.init_containers:
        spec["initContainers"] = [container_document(c) for c in pod.init_containers]
    if pod.service_account != "default":
        spec["serviceAccountName"] = pod.service_account
    if pod.host_pid:
        spec["hostPID"] = True
    if pod.host_ipc:
        spec["hostIPC"] = True
    if pod.volumes:
        spec["volumes"] = [
            {"name": v.name, "emptyDir": {"medium": v.medium} if v.medium else {}} for v in pod.volumes
        ]
    return spec


def _rules_document(rules: tuple[Rule, ...], peer_key: str) -> list:
    out = []
    for rule in rules:
        r: dict[str, Any] = {}
        if rule.peers:
            peers = []
            for p in rule.peers:
                d: dict[str, Any] = {}
                if p.pod_selector is not None:
                    d["podSelector"] = selector_document(p.pod_selector)
                if p.namespace_selector is not None:
                    d["namespaceSelector"] = selector_document(p.namespace_selector)
                if p.ip_block is not None:
                    d["ipBlock"] = {"cidr": p.ip_block.cidr}
                    if p.ip_block.except_:
                        d["ipBlock"]["except"] = list(p.ip_block.except_)
                peers.append(d)
            r[peer_key] = peers
        if rule.ports:
            r["ports"] = [
                {"protocol": pt.protocol.value, **({"port": pt.port} if pt.port is not None else {})}
                for pt in rule.ports
            ]
        out.append(r)
    return out


def to_document(obj: Manifest) -> dict:
    """Canonical JSON-ready document for any model object."""
    if isinstance(obj, Pod):
        doc: dict[str, Any] = {
            "apiVersion": "v1",
            "kind": "Pod",
            "metadata": _metadata(obj.name, obj.namespace, obj.labels, obj.annotations),
            "spec": pod_spec_document(obj),
        }
        if obj.pod_ip is not None:
            doc["status"] = {"podIP": obj.pod_ip}
        return doc
    if isinstance(obj, NetworkPolicy):
        spec: dict[str, Any] = {
            "podSelector": selector_document(obj.pod_selector),
            "policyTypes": sorted(t.value for t in obj.policy_types),
        }
        if obj.ingress:
            spec["ingress"] = _rules_document(obj.ingress, "from")
        if obj.egress:
            spec["egress"] = _rules_document(obj.egress, "to")
        return {
            "apiVersion": "networking.k8s.io/v1",
            "kind": "NetworkPolicy",
            "metadata": {"name": obj.name, "namespace": obj.namespace},
            "spec": spec,
        }
    if isinstance(obj, WorkloadObject):
        doc = {
            "apiVersion": _API_VERSIONS[obj.kind],
            "kind": obj.kind,
            "metadata": _metadata(obj.name, obj.namespace, obj.labels, obj.annotations),
        }
        if obj.kind in POD_TEMPLATE_KINDS:
            spec = {}
            if obj.replicas is not None:
                spec["replicas"] = obj.replicas
            if obj.pod_template is not None:
                t = obj.pod_template
                tmeta = {}
                if t.labels:
                    tmeta["labels"] = dict(t.labels)
                if t.annotations:
                    tmeta["annotations"] = dict(t.annotations)
                spec["template"] = {"metadata": tmeta, "spec": pod_spec_document(t)}
            doc["spec"] = spec
        else:
            doc["subjects"] = [
                {"kind": s.kind, "name": s.name, **({"namespace": s.namespace} if s.namespace else {})}
                for s in obj.subjects
            ]
            if obj.role_ref is not None:
                doc["roleRef"] = {"kind": obj.role_ref[0], "name": obj.role_ref[1]}
        return doc
    raise TypeError(f"cannot serialize {type(obj).__name__}")


# ---------------------------------------------------------------- cluster state


def state_from_document(doc: Any) -> ClusterState:
    """Build a ClusterState from the fixture format.

    Top-level keys are ``namespaces``, ``pods``, ``objects`` and
    ``networkPolicies``. Namespaces are ``{"name": ..., "labels": {...}}``;
    the rest are ordinary manifests.
    """
    doc = _mapping(doc, "state")
    namespaces = []
    for i, ns in enumerate(_list(doc.get("namespaces"), "namespaces")):
        if isinstance(ns, str):
            ns = {"name": ns}
        ns = _mapping(ns, f"namespaces[{i}]")
        if not ns.get("name"):
            raise ManifestError(f"namespaces[{i}].name is required")
        namespaces.append(Namespace(ns["name"], _str_map(ns.get("labels"), f"namespaces[{i}].labels")))
    pods = []
    for d in _list(doc.get("pods"), "pods"):
        obj = from_document({"kind": "Pod", **d} if "kind" not in d else d)
        if not isinstance(obj, Pod):
            raise ManifestError(f"pods entry {obj.name!r} is a {obj.kind}")
        pods.append(obj)
    objects = []
    for d in _list(doc.get("objects"), "objects"):
        obj = from_document(d)
        if not isinstance(obj, WorkloadObject):
            raise ManifestError(f"objects entry {obj.name!r} must be a workload object, got {obj.kind}")
        objects.append(obj)
    policies = []
    for d in _list(doc.get("networkPolicies"), "networkPolicies"):
        obj = from_document({"kind": "NetworkPolicy", **d} if "kind" not in d else d)
        if not isinstance(obj, NetworkPolicy):
            raise ManifestError(f"networkPolicies entry {obj.name!r} is a {obj.kind}")
        policies.append(obj)
    return ClusterState(tuple(namespaces), tuple(pods), tuple(objects), tuple(policies))


def state_to_document(state: ClusterState) -> dict:
    return {
        "namespaces": [{"name": ns.name, "labels": dict(ns.labels)} for ns in state.namespaces],
        "pods": [to_document(p) for p in state.pods],
        "objects": [to_document(o) for o in state.objects],
        "networkPolicies": [to_document(np) for np in state.network_policies],
    }


def load_state(path: str | Path) -> ClusterState:
    docs = load_documents(Path(path).read_bytes(), format_for_path(path))
    if len(docs) != 1:
        raise ManifestError(f"{path}: expected a single state document")
    return state_from_document(docs[0])
