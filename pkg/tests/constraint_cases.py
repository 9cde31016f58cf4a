"""Passing and violating objects for every built-in template.

Each case lists the constraint document, the object document and the number
of violations a correct check must report, counted by hand.
"""
from __future__ import annotations

from dataclasses import dataclass

REG = "registry.cern.ch/cmsweb/"


def container(name="app", image=REG + "app:v1", *, requests=None, limits=None, probes=True, add=(), drop=()):
    c = {"name": name, "image": image}
    resources = {}
    if requests is not None:
        resources["requests"] = requests
    if limits is not None:
        resources["limits"] = limits
    if resources:
        c["resources"] = resources
    if probes:
        c["readinessProbe"] = {"httpGet": {"path": "/ready", "port": 8080}}
        c["livenessProbe"] = {"httpGet": {"path": "/live", "port": 8080}}
    if add or drop:
        caps = {}
        if add:
            caps["add"] = list(add)
        if drop:
            caps["drop"] = list(drop)
        c["securityContext"] = {"capabilities": caps}
    return c


def pod(name="app", namespace="crab", containers=None, *, init=None, labels=None, annotations=None, **spec_extra):
    spec = {"containers": containers or [container(name)], **spec_extra}
    if init:
        spec["initContainers"] = init
    meta = {"name": name, "namespace": namespace}
    if labels:
        meta["labels"] = labels
    if annotations:
        meta["annotations"] = annotations
    return {"apiVersion": "v1", "kind": "Pod", "metadata": meta, "spec": spec}


def deployment(name="app", namespace="crab", replicas=2, containers=None):
    spec = {"template": {"metadata": {"labels": {"app": name}}, "spec": {"containers": containers or [container(name)]}}}
    if replicas is not None:
        spec["replicas"] = replicas
    return {"apiVersion": "apps/v1", "kind": "Deployment", "metadata": {"name": name, "namespace": namespace},
            "spec": spec}


def binding(name="view", subjects=(), kind="RoleBinding", namespace="crab"):
    meta = {"name": name}
    if kind == "RoleBinding":
        meta["namespace"] = namespace
    return {"apiVersion": "rbac.authorization.k8s.io/v1", "kind": kind, "metadata": meta,
            "roleRef": {"kind": "ClusterRole", "name": "view"},
            "subjects": [{"kind": k, "name": n} for k, n in subjects]}


def constraint(template, parameters=None, kinds=(), name=None, action="deny"):
    doc = {"name": name or f"test-{template}", "template": template, "enforcementAction": action}
    if kinds:
        doc["match"] = {"kinds": list(kinds)}
    if parameters is not None:
        doc["parameters"] = parameters
    return doc


@dataclass(frozen=True)
class Case:
    id: str
    constraint: dict
    obj: dict
    expected: int


RESOURCES = {"requests": {"cpu": "250m", "memory": "256Mi"}, "limits": {"cpu": "500m", "memory": "512Mi"}}

CASES = [
    Case("allowedrepos-pass", constraint("k8sallowedrepos", {"repos": [REG]}),
         pod(containers=[container(image=REG + "crabserver:v3")]), 0),
    Case("allowedrepos-violate", constraint("k8sallowedrepos", {"repos": [REG]}),
         deployment(containers=[container(image="docker.io/library/nginx:1.25")]), 1),
    Case("allowedrepos-init-violate", constraint("k8sallowedrepos", {"repos": [REG]}),
         pod(init=[container("setup", "quay.io/setup:1", probes=False)]), 1),
    Case("containerlimits-pass", constraint("k8scontainerlimits", {"cpu": "1500m", "memory": "1Gi"}),
         pod(containers=[container(limits={"cpu": "1", "memory": "1Gi"})]), 0),
    Case("containerlimits-violate", constraint("k8scontainerlimits", {"cpu": "1500m", "memory": "1Gi"}),
         pod(containers=[container(limits={"cpu": "2000m"})]), 2),
    Case("containerrequests-pass", constraint("k8scontainerrequests", {"cpu": "500m", "memory": "512Mi"}),
         pod(containers=[container(requests={"cpu": "500m", "memory": "500Mi"})]), 0),
    Case("containerrequests-violate", constraint("k8scontainerrequests", {"cpu": "500m", "memory": "512Mi"}),
         pod(containers=[container(requests={"cpu": "1", "memory": "1G"})]), 2),
    Case("containerratios-pass", constraint("k8scontainerratios", {"ratio": 2}),
         pod(containers=[container(requests={"cpu": "500m"}, limits={"cpu": "1"})]), 0),
    Case("containerratios-violate", constraint("k8scontainerratios", {"ratio": 2}),
         pod(containers=[container(requests={"cpu": "400m"}, limits={"cpu": "1000m"})]), 1),
    Case("containerratios-missing-request", constraint("k8scontainerratios", {"ratio": "1.5"}),
         pod(containers=[container(limits={"memory": "1Gi"})]), 1),
    Case("requiredresources-pass", constraint("k8srequiredresources", {"limits": ["cpu", "memory"],
                                                                        "requests": ["cpu"]}),
         pod(containers=[container(**RESOURCES)]), 0),
    Case("requiredresources-violate", constraint("k8srequiredresources", {"limits": ["cpu", "memory"],
                                                                           "requests": ["cpu"]}),
         deployment(containers=[container(limits={"cpu": "1"})]), 2),
    Case("disallowanonymous-pass", constraint("k8sdisallowanonymous", kinds=["RoleBinding", "ClusterRoleBinding"]),
         binding(subjects=[("Group", "cms-operators")]), 0),
    Case("disallowanonymous-violate", constraint("k8sdisallowanonymous", kinds=["RoleBinding", "ClusterRoleBinding"]),
         binding(kind="ClusterRoleBinding", subjects=[("Group", "system:unauthenticated"),
                                                      ("User", "system:anonymous"), ("User", "alice")]), 2),
    Case("replicalimits-pass", constraint("k8sreplicalimits", {"ranges": [{"min_replicas": 1, "max_replicas": 10}]}),
         deployment(replicas=3), 0),
    Case("replicalimits-violate", constraint("k8sreplicalimits",
                                             {"ranges": [{"min_replicas": 1, "max_replicas": 10}]}),
         deployment(replicas=0), 1),
    Case("requiredprobes-pass", constraint("k8srequiredprobes", {"probes": ["readinessProbe", "livenessProbe"]}),
         pod(), 0),
    Case("requiredprobes-violate", constraint("k8srequiredprobes", {"probes": ["readinessProbe", "livenessProbe"]}),
         pod(containers=[container(probes=False), container("side")]), 2),
    Case("pspcapabilities-pass", constraint("k8spspcapabilities", {"allowedCapabilities": ["NET_BIND_SERVICE"],
                                                                    "requiredDropCapabilities": ["NET_RAW"]}),
         pod(containers=[container(add=["NET_BIND_SERVICE"], drop=["ALL"])]), 0),
    Case("pspcapabilities-violate", constraint("k8spspcapabilities", {"allowedCapabilities": ["NET_BIND_SERVICE"],
                                                                       "requiredDropCapabilities": ["NET_RAW"]}),
         pod(containers=[container(add=["SYS_ADMIN"])]), 2),
    Case("psphostnamespaces-pass", constraint("k8spsphostnamespaces"), pod(hostPID=False), 0),
    Case("psphostnamespaces-violate", constraint("k8spsphostnamespaces"), pod(hostPID=True, hostIPC=False), 1),
]

TEMPLATES = sorted({c.constraint["template"] for c in CASES})


# ------------------------------------------------------------------ audit fixture with five seeded violations

AUDIT_CONSTRAINTS = [
    {**constraint("k8sallowedrepos", {"repos": [REG]}, name="repos"),
     "match": {"excludedNamespaces": ["kube-system"]}},
    constraint("k8srequiredprobes", {"probes": ["readinessProbe", "livenessProbe"]}, name="probes"),
    constraint("k8sreplicalimits", {"ranges": [{"min_replicas": 1, "max_replicas": 10}]}, name="replicas"),
    constraint("k8spsphostnamespaces", name="host-namespaces"),
    constraint("k8sdisallowanonymous", name="no-anonymous", kinds=["RoleBinding", "ClusterRoleBinding"]),
]


def _no_readiness():
    c = container("no-probe")
    del c["readinessProbe"]
    return c


AUDIT_STATE = {
    "namespaces": [{"name": n} for n in ("crab", "dbs", "das", "default", "kube-system")],
    "pods": [
        pod("crabserver", "crab"),
        pod("bad-image", "crab", [container("bad-image", "docker.io/evil/miner:latest")]),
        pod("no-probe", "dbs", [_no_readiness()]),
        pod("hostpid", "default", hostPID=True),
        pod("coredns", "kube-system", [container("coredns", "registry.k8s.io/coredns:1.11")]),
    ],
    "objects": [
        deployment("das-server", "das", replicas=20),
        deployment("dbs-reader", "dbs", replicas=3),
        binding("anon", [("Group", "system:unauthenticated")], kind="ClusterRoleBinding"),
        binding("ops", [("Group", "cms-operators")], namespace="crab"),
    ],
    "networkPolicies": [],
}

# (constraint, kind, namespace, name) of every seeded violation
AUDIT_EXPECTED = {
    ("repos", "Pod", "crab", "bad-image"),
    ("probes", "Pod", "dbs", "no-probe"),
    ("replicas", "Deployment", "das", "das-server"),
    ("host-namespaces", "Pod", "default", "hostpid"),
    ("no-anonymous", "ClusterRoleBinding", "", "anon"),
}
