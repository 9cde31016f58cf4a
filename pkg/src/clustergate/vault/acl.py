"""Path-capability policies.

A pattern is a slash-separated path where a ``*`` segment stands for exactly
one arbitrary segment. Patterns are mount-qualified, e.g. ``cmsweb/crab/*``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

CAPABILITIES = frozenset({"create", "read", "update", "delete", "list"})


class PolicyError(ValueError):
    pass


def split_path(path: str) -> list[str]:
    return [seg for seg in path.strip("/").split("/") if seg]


def pattern_matches(pattern: str, path: str) -> bool:
    pat, segs = split_path(pattern), split_path(path)
    if len(pat) != len(segs):
        return False
    return all(p == "*" or p == s for p, s in zip(pat, segs))


@dataclass(frozen=True)
class PolicyRule:
    path: str
    capabilities: frozenset[str]

    def __post_init__(self) -> None:
        caps = frozenset(self.capabilities)
        unknown = caps - CAPABILITIES
        if unknown:
            raise PolicyError(f"unknown capabilities {sorted(unknown)} for {self.path!r}")
        if not caps:
            raise PolicyError(f"rule for {self.path!r} grants no capabilities")
        if not split_path(self.path):
            raise PolicyError("rule path must be non-empty")
        object.__setattr__(self, "capabilities", caps)


@dataclass(frozen=True)
class PolicyDoc:
    name: str
    rules: tuple[PolicyRule, ...]
    # reserved for time-based access limits; stored but not enforced
    rate_limit: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "rules", tuple(self.rules))
        if not self.name or "/" in self.name:
            raise PolicyError(f"invalid policy name {self.name!r}")
        if not self.rules:
            raise PolicyError(f"policy {self.name!r} needs at least one rule")

    def allows(self, capability: str, path: str) -> bool:
        return any(capability in r.capabilities and pattern_matches(r.path, path) for r in self.rules)

    def as_dict(self) -> dict:
        out: dict[str, Any] = {
            "name": self.name,
            "rules": [{"path": r.path, "capabilities": sorted(r.capabilities)} for r in self.rules],
        }
        if self.rate_limit is not None:
            out["rateLimit"] = self.rate_limit
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], name: str | None = None) -> "PolicyDoc":
        rules = d.get("rules")
        if not isinstance(rules, list):
            raise PolicyError("policy document needs a list of rules")
        parsed = []
        for r in rules:
            if not isinstance(r, dict) or "path" not in r or not isinstance(r.get("capabilities"), list):
                raise PolicyError("each rule needs a path and a capabilities list")
            parsed.append(PolicyRule(r["path"], frozenset(r["capabilities"])))
        return cls(name or d.get("name", ""), tuple(parsed), d.get("rateLimit"))


def authorize(policies: Iterable[PolicyDoc], capability: str, path: str) -> bool:
    return any(p.allows(capability, path) for p in policies)


@dataclass(frozen=True)
class Role:
    name: str
    bound_service_accounts: tuple[str, ...]
    bound_namespaces: tuple[str, ...]
    policies: tuple[str, ...]
    token_ttl: int = 3600

    def __post_init__(self) -> None:
        for attr in ("bound_service_accounts", "bound_namespaces", "policies"):
            object.__setattr__(self, attr, tuple(getattr(self, attr)))
        if not self.name or "/" in self.name:
            raise PolicyError(f"invalid role name {self.name!r}")
        if not self.bound_service_accounts or not self.bound_namespaces:
            raise PolicyError(f"role {self.name!r} must bind at least one service account and namespace")
        if isinstance(self.token_ttl, bool) or not isinstance(self.token_ttl, int) or self.token_ttl <= 0:
            raise PolicyError(f"role {self.name!r} needs a positive integer TTL")

    def binds(self, service_account: str, namespace: str) -> bool:
        def hit(values: tuple[str, ...], v: str) -> bool:
            return "*" in values or v in values

        return hit(self.bound_service_accounts, service_account) and hit(self.bound_namespaces, namespace)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "boundServiceAccounts": list(self.bound_service_accounts),
            "boundNamespaces": list(self.bound_namespaces),
            "policies": list(self.policies),
            "tokenTTL": self.token_ttl,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], name: str | None = None) -> "Role":
        def strings(key: str) -> tuple[str, ...]:
            v = d.get(key) or []
            if isinstance(v, str):
                v = [v]
            if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
                raise PolicyError(f"{key} must be a list of strings")
            return tuple(v)

        return cls(
            name or d.get("name", ""),
            strings("boundServiceAccounts"),
            strings("boundNamespaces"),
            strings("policies"),
            d.get("tokenTTL", 3600),
        )


@dataclass(frozen=True)
class AuthToken:
    id: str
    policies: tuple[str, ...]
    issued_at: float
    expires_at: float | None
    root: bool = False
    meta: dict[str, str] = field(default_factory=dict)

    def expired(self, now: float) -> bool:
        return self.expires_at is not None and now >= self.expires_at
