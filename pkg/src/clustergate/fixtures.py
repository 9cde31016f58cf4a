"""Reconstructed CMSWEB-style cluster fixtures.

The crab/auth topology mirrors the test environment: three frontend proxies in
``auth`` may reach ``crabserver``; everything else, including crabserver's own
outgoing traffic, is blocked. Ports and label keys are a reconstruction.
"""
from __future__ import annotations

from .model import (
    ClusterState,
    Container,
    Namespace,
    NetworkPolicy,
    Operator,
    Peer,
    Pod,
    PolicyType,
    PortSpec,
    Protocol,
    Requirement,
    Rule,
    Selector,
    NAMESPACE_NAME_LABEL,
)

FRONTENDS = {
    "test": ("auth-proxy-server", "scitokens-proxy-server", "x509-proxy-server"),
    "preprod": ("frontend",),
    "prod": ("nginx-ingress",),
}
CRABSERVER_PORTS = (8270, 8443, 18270)
REGISTRY = "registry.cern.ch/cmsweb/"


def _pod(namespace: str, name: str, ip: str, **extra) -> Pod:
    container = Container(name=name, image=f"{REGISTRY}{name}:v1")
    return Pod(name=name, namespace=namespace, containers=(container,), labels={"app": name},
               service_account=name, pod_ip=ip, **extra)


def crab_policy(frontends: tuple[str, ...]) -> NetworkPolicy:
    from_auth = Peer(
        pod_selector=Selector(match_expressions=(Requirement("app", Operator.IN, frontends),)),
        namespace_selector=Selector({NAMESPACE_NAME_LABEL: "auth"}),
    )
    return NetworkPolicy(
        name="crab-allow-auth",
        namespace="crab",
        pod_selector=Selector({"app": "crabserver"}),
        policy_types=frozenset({PolicyType.INGRESS, PolicyType.EGRESS}),
        ingress=(Rule((from_auth,), tuple(PortSpec(Protocol.TCP, p) for p in CRABSERVER_PORTS)),),
        egress=(),
    )


def dns_egress_policy() -> NetworkPolicy:
    dns = Peer(namespace_selector=Selector({NAMESPACE_NAME_LABEL: "kube-system"}),
               pod_selector=Selector({"k8s-app": "kube-dns"}))
    return NetworkPolicy(
        name="crab-allow-dns",
        namespace="crab",
        pod_selector=Selector({"app": "crabserver"}),
        policy_types=frozenset({PolicyType.EGRESS}),
        egress=(Rule((dns,), (PortSpec(Protocol.UDP, 53), PortSpec(Protocol.TCP, 53))),),
    )


def cmsweb_state(environment: str = "test", *, allow_dns: bool = False) -> ClusterState:
    """Cluster with the crab namespace locked down to the frontend services."""
    frontends = FRONTENDS[environment]
    namespaces = [Namespace(n) for n in ("auth", "crab", "dbs", "das", "default")]
    pods = [_pod("auth", name, f"10.0.1.{i + 10}") for i, name in enumerate(frontends)]
    pods += [
        _pod("auth", "auth-monitor", "10.0.1.50"),
        _pod("crab", "crabserver", "10.0.2.10"),
        _pod("dbs", "dbs-pod", "10.0.3.10"),
        _pod("das", "das-server", "10.0.4.10"),
        _pod("default", "debug", "10.0.5.10"),
    ]
    policies = [crab_policy(frontends)]
    if allow_dns:
        namespaces.append(Namespace("kube-system"))
        pods.append(Pod(name="coredns", namespace="kube-system", labels={"k8s-app": "kube-dns"},
                        containers=(Container("coredns", "registry.k8s.io/coredns:1.11"),), pod_ip="10.0.0.10"))
        policies.append(dns_egress_policy())
    return ClusterState(tuple(namespaces), tuple(pods), (), tuple(policies))
