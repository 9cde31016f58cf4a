"""Reference implementations used to cross-check the engines.

These work on raw documents and plain strings, and share no code with the
package. Keep them naive: clarity beats speed here.
"""
from __future__ import annotations

import ipaddress
import itertools
import random
import re

NAME_LABEL = "kubernetes.io/metadata.name"


# ------------------------------------------------------------------ label selectors


def selector_ok(sel: dict | None, labels: dict) -> bool:
    """Upstream semantics: every matchLabels pair and every expression must hold."""
    sel = sel or {}
    for k, v in (sel.get("matchLabels") or {}).items():
        if labels.get(k) != v:
            return False
    for expr in sel.get("matchExpressions") or []:
        key, op, vals = expr["key"], expr["operator"], expr.get("values") or []
        present = key in labels
        if op == "In" and not (present and labels[key] in vals):
            return False
        if op == "NotIn" and present and labels[key] in vals:
            return False
        if op == "Exists" and not present:
            return False
        if op == "DoesNotExist" and present:
            return False
    return True


# ------------------------------------------------------------------ network policies


def _ns_labels(state: dict, ns: str) -> dict:
    for entry in state["namespaces"]:
        if entry["name"] == ns:
            return {**entry.get("labels", {}), NAME_LABEL: ns}
    raise KeyError(ns)


def _pod(state: dict, ref: str) -> dict:
    ns, name = ref.split("/")
    for p in state["pods"]:
        if p["metadata"]["name"] == name and p["metadata"].get("namespace", "default") == ns:
            return p
    raise KeyError(ref)


def _types(pol: dict) -> set[str]:
    spec = pol.get("spec", {})
    if spec.get("policyTypes") is not None:
        return set(spec["policyTypes"])
    return {"Ingress"} | ({"Egress"} if spec.get("egress") else set())


def _peer_ok(state: dict, pol_ns: str, peer: dict, other) -> bool:
    if "ipBlock" in peer:
        if isinstance(other, dict):
            return False
        ip = ipaddress.ip_address(other)
        block = peer["ipBlock"]
        if ip not in ipaddress.ip_network(block["cidr"], strict=False):
            return False
        return not any(ip in ipaddress.ip_network(e, strict=False) for e in block.get("except", []))
    if not isinstance(other, dict):
        return False
    other_ns = other["metadata"].get("namespace", "default")
    if "namespaceSelector" in peer:
        if not selector_ok(peer["namespaceSelector"], _ns_labels(state, other_ns)):
            return False
    elif other_ns != pol_ns:
        return False
    if "podSelector" in peer:
        return selector_ok(peer["podSelector"], other["metadata"].get("labels", {}))
    return True


def _port_ok(entry: dict, port: int, protocol: str) -> bool:
    if entry.get("protocol", "TCP") != protocol:
        return False
    return entry.get("port") is None or entry["port"] == port


def _side_allowed(state: dict, pod: dict, other, direction: str, port: int, protocol: str) -> bool:
    ns = pod["metadata"].get("namespace", "default")
    selecting = [
        pol for pol in state["networkPolicies"]
        if pol["metadata"]["namespace"] == ns
        and direction in _types(pol)
        and selector_ok(pol["spec"].get("podSelector"), pod["metadata"].get("labels", {}))
    ]
    if not selecting:
        return True
    rules_key, peer_key = ("ingress", "from") if direction == "Ingress" else ("egress", "to")
    for pol in selecting:
        for rule in pol["spec"].get(rules_key) or []:
            peers = rule.get(peer_key) or []
            ports = rule.get("ports") or []
            peer_hit = not peers or any(_peer_ok(state, ns, p, other) for p in peers)
            port_hit = not ports or any(_port_ok(e, port, protocol) for e in ports)
            if peer_hit and port_hit:
                return True
    return False


def brute_force_verdict(state: dict, src: str, dst: str, port: int, protocol: str = "TCP") -> tuple[bool, bool]:
    """(egress allowed, ingress allowed); endpoints are ``ns/name`` or an IPv4 string."""
    s = _pod(state, src) if "/" in src else src
    d = _pod(state, dst) if "/" in dst else dst
    egress = _side_allowed(state, s, d, "Egress", port, protocol) if isinstance(s, dict) else True
    ingress = _side_allowed(state, d, s, "Ingress", port, protocol) if isinstance(d, dict) else True
    return egress, ingress


# ------------------------------------------------------------------ random clusters

LABEL_KEYS = {"app": ["web", "api", "db"], "tier": ["front", "back"]}
NS_LABEL_KEYS = {"team": ["red", "blue"]}
EXTERNAL_IPS = ["192.168.0.7", "192.168.1.9", "8.8.8.8"]
CIDRS = ["10.0.0.0/16", "192.168.0.0/16", "192.168.0.0/24", "0.0.0.0/0", "10.0.1.0/24"]
PORTS = [53, 80, 443, 8443]


def _rand_labels(rng: random.Random, keys: dict) -> dict:
    return {k: rng.choice(v) for k, v in keys.items() if rng.random() < 0.7}


def _rand_selector(rng: random.Random, keys: dict) -> dict:
    sel: dict = {}
    if rng.random() < 0.5:
        k = rng.choice(sorted(keys))
        sel["matchLabels"] = {k: rng.choice(keys[k])}
    if rng.random() < 0.4:
        k = rng.choice(sorted(keys))
        op = rng.choice(["In", "NotIn", "Exists", "DoesNotExist"])
        expr = {"key": k, "operator": op}
        if op in ("In", "NotIn"):
            expr["values"] = rng.sample(keys[k], rng.randint(1, len(keys[k])))
        sel["matchExpressions"] = [expr]
    return sel


def _rand_peer(rng: random.Random, namespaces: list[str]) -> dict:
    roll = rng.random()
    if roll < 0.2:
        block = {"cidr": rng.choice(CIDRS)}
        if rng.random() < 0.4:
            block["except"] = [rng.choice(["192.168.1.0/24", "8.8.8.0/24", "10.0.1.0/24"])]
        return {"ipBlock": block}
    peer = {}
    if roll < 0.6:
        peer["podSelector"] = _rand_selector(rng, LABEL_KEYS)
    if roll >= 0.45:
        if rng.random() < 0.5:
            peer["namespaceSelector"] = {"matchLabels": {NAME_LABEL: rng.choice(namespaces)}}
        else:
            peer["namespaceSelector"] = _rand_selector(rng, NS_LABEL_KEYS)
    return peer


def _rand_rule(rng: random.Random, peer_key: str, namespaces: list[str]) -> dict:
    rule = {}
    if rng.random() < 0.8:
        rule[peer_key] = [_rand_peer(rng, namespaces) for _ in range(rng.randint(1, 2))]
    if rng.random() < 0.7:
        ports = []
        for _ in range(rng.randint(1, 2)):
            entry = {"protocol": rng.choice(["TCP", "UDP"])}
            if rng.random() < 0.8:
                entry["port"] = rng.choice(PORTS)
            ports.append(entry)
        rule["ports"] = ports
    return rule


def random_cluster(rng: random.Random) -> dict:
    """Raw state document: ≤4 namespaces, ≤8 pods, ≤6 policies, ≤3 rules per direction."""
    namespaces = [f"ns{i}" for i in range(rng.randint(1, 4))]
    state = {
        "namespaces": [{"name": n, "labels": _rand_labels(rng, NS_LABEL_KEYS)} for n in namespaces],
        "pods": [],
        "objects": [],
        "networkPolicies": [],
    }
    for i in range(rng.randint(1, 8)):
        state["pods"].append({
            "apiVersion": "v1",
            "kind": "Pod",
            "metadata": {"name": f"p{i}", "namespace": rng.choice(namespaces), "labels": _rand_labels(rng, LABEL_KEYS)},
            "spec": {"containers": [{"name": "c", "image": "img"}]},
            "status": {"podIP": f"10.0.{rng.choice([0, 1])}.{i + 10}"},
        })
    for i in range(rng.randint(0, 6)):
        spec: dict = {"podSelector": _rand_selector(rng, LABEL_KEYS)}
        if rng.random() < 0.8:
            spec["ingress"] = [_rand_rule(rng, "from", namespaces) for _ in range(rng.randint(0, 3))]
        if rng.random() < 0.6:
            spec["egress"] = [_rand_rule(rng, "to", namespaces) for _ in range(rng.randint(0, 3))]
        if rng.random() < 0.5:
            spec["policyTypes"] = rng.choice([["Ingress"], ["Egress"], ["Ingress", "Egress"]])
        state["networkPolicies"].append({
            "apiVersion": "networking.k8s.io/v1",
            "kind": "NetworkPolicy",
            "metadata": {"name": f"np{i}", "namespace": rng.choice(namespaces)},
            "spec": spec,
        })
    return state


def endpoint_pairs(state: dict):
    pods = [f"{p['metadata']['namespace']}/{p['metadata']['name']}" for p in state["pods"]]
    for src, dst in itertools.permutations(pods + EXTERNAL_IPS, 2):
        if "/" in src or "/" in dst:
            yield src, dst


# ------------------------------------------------------------------ vault ACL


ACL_SEGMENTS = ["cmsweb", "crab", "dbs", "a", "b"]


def random_acl_triple(rng: random.Random):
    pattern = "/".join(rng.choice(ACL_SEGMENTS + ["*", "*"]) for _ in range(rng.randint(1, 4)))
    if rng.random() < 0.5:
        # derive from the pattern so matches are common, then sometimes perturb
        segs = [rng.choice(ACL_SEGMENTS) if s == "*" else s for s in pattern.split("/")]
        roll = rng.random()
        if roll < 0.2:
            segs.append(rng.choice(ACL_SEGMENTS))
        elif roll < 0.35 and len(segs) > 1:
            segs.pop()
        path = "/".join(segs)
    else:
        path = "/".join(rng.choice(ACL_SEGMENTS) for _ in range(rng.randint(1, 4)))
    cap = rng.choice(["create", "read", "update", "delete", "list"])
    caps = set(rng.sample(["create", "read", "update", "delete", "list"], rng.randint(1, 3)))
    return pattern, caps, path, cap


def acl_regex(pattern: str) -> re.Pattern:
    segs = [s for s in pattern.split("/") if s]
    body = "/".join("[^/]+" if s == "*" else re.escape(s) for s in segs)
    return re.compile(f"/*{body}/*")


def acl_allows(rules: list[tuple[str, set[str]]], capability: str, path: str) -> bool:
    return any(capability in caps and acl_regex(pat).fullmatch(path) for pat, caps in rules)


# ------------------------------------------------------------------ quantities

_CPU = {"": 1000, "m": 1}
_MEM = {"": 1, "K": 10**3, "M": 10**6, "G": 10**9, "Ki": 2**10, "Mi": 2**20, "Gi": 2**30}


def quantity_base_units(text: str, kind: str) -> int:
    table = _CPU if kind == "cpu" else _MEM
    digits = text.rstrip("".join({c for s in table for c in s}))
    suffix = text[len(digits):]
    return int(digits) * table[suffix]
