"""Allow/deny decisions for single connections under Kubernetes network policies.

A direction (egress at the source, ingress at the destination) is open unless
some policy selects the endpoint for that direction; once selected, traffic
needs at least one rule of one selecting policy to admit it.
"""
from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from typing import Any, Mapping, Union

from .errors import QueryError
from .model import (
    ClusterState,
    IPBlock,
    NetworkPolicy,
    Peer,
    Pod,
    PodRef,
    PolicyType,
    PortSpec,
    Protocol,
    Rule,
    selector_matches,
)

__all__ = [
    "ExternalIP",
    "IPBlock",
    "NetworkPolicy",
    "Peer",
    "PodRef",
    "PolicyType",
    "PortSpec",
    "Protocol",
    "Rule",
    "TraceEntry",
    "TrafficQuery",
    "Verdict",
    "evaluate",
    "parse_endpoint",
    "policies_selecting",
]


@dataclass(frozen=True)
class ExternalIP:
    address: str

    def __post_init__(self) -> None:
        try:
            ipaddress.IPv4Address(self.address)
        except ValueError as exc:
            raise QueryError(f"invalid IPv4 address {self.address!r}") from exc

    def __str__(self) -> str:
        return self.address


Endpoint = Union[PodRef, ExternalIP]


def parse_endpoint(text: str) -> Endpoint:
    """``ns/pod`` names a pod; a bare dotted quad names an external address."""
    if "/" in text:
        try:
            return PodRef.parse(text)
        except ValueError as exc:
            raise QueryError(str(exc)) from exc
    return ExternalIP(text)


@dataclass(frozen=True)
class TrafficQuery:
    src: Endpoint
    dst: Endpoint
    port: int
    protocol: Protocol = Protocol.TCP

    def __post_init__(self) -> None:
        object.__setattr__(self, "protocol", Protocol(self.protocol))
        if self.src == self.dst:
            raise QueryError("source and destination must differ")
        if isinstance(self.src, ExternalIP) and isinstance(self.dst, ExternalIP):
            raise QueryError("at least one endpoint must be a pod")
        if isinstance(self.port, bool) or not isinstance(self.port, int) or not 1 <= self.port <= 65535:
            raise QueryError(f"port must be an integer in 1-65535, got {self.port!r}")


@dataclass(frozen=True)
class TraceEntry:
    direction: PolicyType
    policy: str
    rule_index: int  # -1 marks a selecting policy with no rules for the direction
    matched: bool

    def as_dict(self) -> dict:
        return {
            "direction": self.direction.value,
            "policy": self.policy,
            "rule": self.rule_index,
            "matched": self.matched,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TraceEntry":
        return cls(PolicyType(d["direction"]), d["policy"], d["rule"], d["matched"])


@dataclass(frozen=True)
class Verdict:
    egress_allowed: bool
    ingress_allowed: bool
    trace: tuple[TraceEntry, ...] = field(default=())

    @property
    def allowed(self) -> bool:
        return self.egress_allowed and self.ingress_allowed

    def as_dict(self) -> dict:
        return {
            "allowed": self.allowed,
            "egressAllowed": self.egress_allowed,
            "ingressAllowed": self.ingress_allowed,
            "trace": [t.as_dict() for t in self.trace],
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Verdict":
        return cls(d["egressAllowed"], d["ingressAllowed"], tuple(TraceEntry.from_dict(t) for t in d.get("trace", ())))


def _selects(policy: NetworkPolicy, pod: Pod, direction: PolicyType) -> bool:
    return (
        policy.namespace == pod.namespace
        and direction in policy.policy_types
        and selector_matches(policy.pod_selector, pod.labels)
    )


def policies_selecting(state: ClusterState, pod: PodRef, direction: PolicyType | str) -> list[NetworkPolicy]:
    direction = PolicyType(direction)
    target = state.pod(pod)
    return [p for p in state.network_policies if _selects(p, target, direction)]


def _peer_matches(state: ClusterState, policy: NetworkPolicy, peer: Peer, other: Pod | ExternalIP) -> bool:
    if peer.ip_block is not None:
        return isinstance(other, ExternalIP) and peer.ip_block.contains(other.address)
    if isinstance(other, ExternalIP):
        return False
    if peer.namespace_selector is None and other.namespace != policy.namespace:
        return False
    if peer.namespace_selector is not None and not selector_matches(
        peer.namespace_selector, state.namespace_labels(other.namespace)
    ):
        return False
    return peer.pod_selector is None or selector_matches(peer.pod_selector, other.labels)


def _rule_admits(state: ClusterState, policy: NetworkPolicy, rule: Rule, other, port: int, protocol: Protocol) -> bool:
    if rule.ports and not any(p.admits(port, protocol) for p in rule.ports):
        return False
    return not rule.peers or any(_peer_matches(state, policy, peer, other) for peer in rule.peers)


def _direction(state, pod, other, direction, port, protocol, trace) -> bool:
    selecting = [p for p in state.network_policies if _selects(p, pod, direction)]
    if not selecting:
        return True
    allowed = False
    for policy in selecting:
        rules = policy.rules(direction)
        if not rules:
            trace.append(TraceEntry(direction, f"{policy.namespace}/{policy.name}", -1, False))
        for i, rule in enumerate(rules):
            hit = _rule_admits(state, policy, rule, other, port, protocol)
            trace.append(TraceEntry(direction, f"{policy.namespace}/{policy.name}", i, hit))
            allowed = allowed or hit
    return allowed


def _resolve(state: ClusterState, endpoint: Endpoint) -> Pod | ExternalIP:
    if isinstance(endpoint, PodRef):
        return state.pod(endpoint)
    owner = state.pod_by_ip(endpoint.address)
    if owner is not None:
        raise QueryError(f"{endpoint.address} belongs to pod {owner.ref}; query it by name")
    return endpoint


def evaluate(state: ClusterState, query: TrafficQuery) -> Verdict:
    src = _resolve(state, query.src)
    dst = _resolve(state, query.dst)
    trace: list[TraceEntry] = []
    egress = True
    if isinstance(src, Pod):
        egress = _direction(state, src, dst, PolicyType.EGRESS, query.port, query.protocol, trace)
    ingress = True
    if isinstance(dst, Pod):
        ingress = _direction(state, dst, src, PolicyType.INGRESS, query.port, query.protocol, trace)
    return Verdict(egress, ingress, tuple(trace))
