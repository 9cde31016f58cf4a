"""Value types for the modeled cluster.

Everything here is a frozen dataclass. Mapping-valued fields are plain dicts
for ergonomic construction; callers must treat them as read-only.
"""
from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Union

from .errors import ManifestError, NotFoundError
from .quantity import Quantity

NAMESPACE_NAME_LABEL = "kubernetes.io/metadata.name"

POD_TEMPLATE_KINDS = frozenset({"Deployment", "ReplicaSet", "StatefulSet"})
BINDING_KINDS = frozenset({"RoleBinding", "ClusterRoleBinding"})
CLUSTER_SCOPED_KINDS = frozenset({"ClusterRoleBinding"})
WORKLOAD_KINDS = POD_TEMPLATE_KINDS | BINDING_KINDS


def validate_labels(labels: Mapping[str, str], what: str = "label") -> dict[str, str]:
    out = {}
    for key, value in labels.items():
        if not isinstance(key, str) or not key:
            raise ManifestError(f"{what} keys must be non-empty strings, got {key!r}")
        if value is None:
            value = ""
        if not isinstance(value, str):
            raise ManifestError(f"{what} {key!r} must have a string value, got {value!r}")
        if any(ch.isspace() for ch in key) or any(ch.isspace() for ch in value):
            raise ManifestError(f"{what} {key}={value!r} contains whitespace")
        out[key] = value
    return out


class Operator(str, Enum):
    IN = "In"
    NOT_IN = "NotIn"
    EXISTS = "Exists"
    DOES_NOT_EXIST = "DoesNotExist"


@dataclass(frozen=True)
class Requirement:
    key: str
    operator: Operator
    values: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "operator", Operator(self.operator))
        object.__setattr__(self, "values", tuple(self.values))
        if not self.key:
            raise ManifestError("selector requirement key must be non-empty")
        if self.operator in (Operator.IN, Operator.NOT_IN) and not self.values:
            raise ManifestError(f"operator {self.operator.value} on {self.key!r} needs values")
        if self.operator in (Operator.EXISTS, Operator.DOES_NOT_EXIST) and self.values:
            raise ManifestError(f"operator {self.operator.value} on {self.key!r} takes no values")

    def holds(self, labels: Mapping[str, str]) -> bool:
        if self.operator is Operator.IN:
            return self.key in labels and labels[self.key] in self.values
        if self.operator is Operator.NOT_IN:
            # absent key satisfies NotIn, as upstream
            return labels.get(self.key) not in self.values
        if self.operator is Operator.EXISTS:
            return self.key in labels
        return self.key not in labels


@dataclass(frozen=True)
class Selector:
    match_labels: dict[str, str] = field(default_factory=dict)
    match_expressions: tuple[Requirement, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "match_labels", validate_labels(self.match_labels))
        object.__setattr__(self, "match_expressions", tuple(self.match_expressions))

    @property
    def empty(self) -> bool:
        return not self.match_labels and not self.match_expressions

    def matches(self, labels: Mapping[str, str]) -> bool:
        return selector_matches(self, labels)


def selector_matches(selector: Selector, labels: Mapping[str, str]) -> bool:
    for key, value in selector.match_labels.items():
        if labels.get(key) != value:
            return False
    return all(req.holds(labels) for req in selector.match_expressions)


@dataclass(frozen=True)
class VolumeMount:
    name: str
    mount_path: str


@dataclass(frozen=True)
class Volume:
    name: str
    medium: str = ""


@dataclass(frozen=True)
class Container:
    name: str
    image: str
    requests: dict[str, Quantity] = field(default_factory=dict)
    limits: dict[str, Quantity] = field(default_factory=dict)
    readiness_probe: dict | None = None
    liveness_probe: dict | None = None
    capabilities_add: tuple[str, ...] = ()
    capabilities_drop: tuple[str, ...] = ()
    volume_mounts: tuple[VolumeMount, ...] = ()

    def __post_init__(self) -> None:
        for name in ("capabilities_add", "capabilities_drop", "volume_mounts"):
            object.__setattr__(self, name, tuple(getattr(self, name)))


@dataclass(frozen=True)
class Pod:
    name: str
    namespace: str
    containers: tuple[Container, ...]
    labels: dict[str, str] = field(default_factory=dict)
    annotations: dict[str, str] = field(default_factory=dict)
    service_account: str = "default"
    init_containers: tuple[Container, ...] = ()
    host_pid: bool = False
    host_ipc: bool = False
    pod_ip: str | None = None
    volumes: tuple[Volume, ...] = ()

    kind = "Pod"

    def __post_init__(self) -> None:
        object.__setattr__(self, "containers", tuple(self.containers))
        object.__setattr__(self, "init_containers", tuple(self.init_containers))
        object.__setattr__(self, "volumes", tuple(self.volumes))
        object.__setattr__(self, "labels", validate_labels(self.labels))
        if not self.name:
            raise ManifestError("pod name must be non-empty")
        if not self.containers:
            raise ManifestError(f"pod {self.namespace}/{self.name} has no containers")
        names = [c.name for c in self.all_containers]
        if len(set(names)) != len(names):
            raise ManifestError(f"pod {self.namespace}/{self.name} has duplicate container names")
        if self.pod_ip is not None:
            try:
                ipaddress.IPv4Address(self.pod_ip)
            except ValueError as exc:
                raise ManifestError(f"pod {self.name}: invalid podIP {self.pod_ip!r}") from exc

    @property
    def all_containers(self) -> tuple[Container, ...]:
        return self.init_containers + self.containers

    @property
    def ref(self) -> "PodRef":
        return PodRef(self.namespace, self.name)


@dataclass(frozen=True)
class Subject:
    kind: str
    name: str
    namespace: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ("User", "Group", "ServiceAccount"):
            raise ManifestError(f"unknown subject kind {self.kind!r}")


@dataclass(frozen=True)
class WorkloadObject:
    kind: str
    name: str
    namespace: str = "default"
    labels: dict[str, str] = field(default_factory=dict)
    annotations: dict[str, str] = field(default_factory=dict)
    replicas: int | None = None
    pod_template: Pod | None = None
    subjects: tuple[Subject, ...] = ()
    role_ref: tuple[str, str] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "labels", validate_labels(self.labels))
        if self.kind not in WORKLOAD_KINDS:
            raise ManifestError(f"unsupported workload kind {self.kind!r}")
        if not self.name:
            raise ManifestError("metadata.name must be non-empty")
        if self.replicas is not None and self.kind not in POD_TEMPLATE_KINDS:
            raise ManifestError(f"{self.kind} cannot carry replicas")
        if self.subjects and self.kind not in BINDING_KINDS:
            raise ManifestError(f"{self.kind} cannot carry subjects")
        if self.replicas is not None and (isinstance(self.replicas, bool) or not isinstance(self.replicas, int)):
            raise ManifestError(f"replicas must be an integer, got {self.replicas!r}")


# Network policy types live here so ClusterState can hold them without an
# import cycle; netpol re-exports them.


class Protocol(str, Enum):
    TCP = "TCP"
    UDP = "UDP"


class PolicyType(str, Enum):
    INGRESS = "Ingress"
    EGRESS = "Egress"


@dataclass(frozen=True)
class PortSpec:
    protocol: Protocol = Protocol.TCP
    port: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        if self.port is not None:
            if isinstance(self.port, bool) or not isinstance(self.port, int):
                raise ManifestError(f"named or non-integer ports are not supported: {self.port!r}")
            if not 1 <= self.port <= 65535:
                raise ManifestError(f"port {self.port} out of range 1-65535")

    def admits(self, port: int, protocol: Protocol) -> bool:
        return self.protocol is protocol and (self.port is None or self.port == port)


@dataclass(frozen=True)
class IPBlock:
    cidr: str
    except_: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "except_", tuple(self.except_))
        try:
            net = ipaddress.IPv4Network(self.cidr, strict=False)
            excepts = [ipaddress.IPv4Network(c, strict=False) for c in self.except_]
        except ValueError as exc:
            raise ManifestError(f"invalid IPv4 CIDR in ipBlock: {exc}") from exc
        object.__setattr__(self, "_net", net)
        object.__setattr__(self, "_excepts", tuple(excepts))

    def contains(self, ip: str) -> bool:
        value = int(ipaddress.IPv4Address(ip))

        def inside(net: ipaddress.IPv4Network) -> bool:
            return value & int(net.netmask) == int(net.network_address)

        return inside(self._net) and not any(inside(e) for e in self._excepts)


@dataclass(frozen=True)
class Peer:
    pod_selector: Selector | None = None
    namespace_selector: Selector | None = None
    ip_block: IPBlock | None = None

    def __post_init__(self) -> None:
        has_selector = self.pod_selector is not None or self.namespace_selector is not None
        if has_selector == (self.ip_block is not None):
            raise ManifestError("a peer needs exactly one of selectors or ipBlock")


@dataclass(frozen=True)
class Rule:
    peers: tuple[Peer, ...] = ()
    ports: tuple[PortSpec, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "peers", tuple(self.peers))
        object.__setattr__(self, "ports", tuple(self.ports))


@dataclass(frozen=True)
class NetworkPolicy:
    name: str
    namespace: str
    pod_selector: Selector = field(default_factory=Selector)
    policy_types: frozenset[PolicyType] | None = None
    ingress: tuple[Rule, ...] = ()
    egress: tuple[Rule, ...] = ()

    kind = "NetworkPolicy"

    def __post_init__(self) -> None:
        object.__setattr__(self, "ingress", tuple(self.ingress))
        object.__setattr__(self, "egress", tuple(self.egress))
        if self.policy_types is None:
            types = {PolicyType.INGRESS}
            if self.egress:
                types.add(PolicyType.EGRESS)
        else:
            types = {PolicyType(t) for t in self.policy_types}
        object.__setattr__(self, "policy_types", frozenset(types))
        if not self.name:
            raise ManifestError("network policy name must be non-empty")

    def rules(self, direction: PolicyType) -> tuple[Rule, ...]:
        return self.ingress if direction is PolicyType.INGRESS else self.egress


@dataclass(frozen=True, order=True)
class PodRef:
    namespace: str
    name: str

    @classmethod
    def parse(cls, text: str) -> "PodRef":
        ns, sep, name = text.partition("/")
        if not sep or not ns or not name:
            raise ValueError(f"expected namespace/name, got {text!r}")
        return cls(ns, name)

    def __str__(self) -> str:
        return f"{self.namespace}/{self.name}"


@dataclass(frozen=True)
class Namespace:
    name: str
    labels: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        labels = validate_labels(self.labels)
        labels[NAMESPACE_NAME_LABEL] = self.name  # always the real name, as the API server enforces
        object.__setattr__(self, "labels", labels)


ClusterObject = Union[Pod, WorkloadObject]


@dataclass(frozen=True)
class ClusterState:
    namespaces: tuple[Namespace, ...] = ()
    pods: tuple[Pod, ...] = ()
    objects: tuple[WorkloadObject, ...] = ()
    network_policies: tuple[NetworkPolicy, ...] = ()
    _pods_by_ref: dict = field(init=False, repr=False, compare=False)
    _ns_by_name: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        for name in ("namespaces", "pods", "objects", "network_policies"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        ns_by_name = {}
        for ns in self.namespaces:
            if ns.name in ns_by_name:
                raise ManifestError(f"duplicate namespace {ns.name!r}")
            ns_by_name[ns.name] = ns
        pods = {}
        ips = {}
        for pod in self.pods:
            if pod.namespace not in ns_by_name:
                raise ManifestError(f"pod {pod.ref} is in undeclared namespace {pod.namespace!r}")
            if pod.ref in pods:
                raise ManifestError(f"duplicate pod {pod.ref}")
            pods[pod.ref] = pod
            if pod.pod_ip is not None:
                if pod.pod_ip in ips:
                    raise ManifestError(f"pods {ips[pod.pod_ip]} and {pod.ref} share IP {pod.pod_ip}")
                ips[pod.pod_ip] = pod.ref
        object.__setattr__(self, "_pods_by_ref", pods)
        object.__setattr__(self, "_ns_by_name", ns_by_name)

    def pod(self, ref: PodRef) -> Pod:
        try:
            return self._pods_by_ref[ref]
        except KeyError:
            raise NotFoundError(f"pod {ref} not found") from None

    def pod_by_ip(self, ip: str) -> Pod | None:
        for pod in self.pods:
            if pod.pod_ip == ip:
                return pod
        return None

    def namespace_labels(self, name: str) -> dict[str, str]:
        ns = self._ns_by_name.get(name)
        return ns.labels if ns is not None else {}

    def all_objects(self) -> tuple[ClusterObject, ...]:
        return self.pods + self.objects


def object_ref(obj: ClusterObject) -> tuple[str, str, str]:
    return (obj.kind, obj.namespace, obj.name)
