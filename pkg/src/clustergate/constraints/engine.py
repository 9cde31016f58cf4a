from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from ..errors import ConstraintLoadError
from ..model import ClusterObject, ClusterState, Selector, object_ref, selector_matches
from .library import BUILTIN_TEMPLATES, CHECKS, ConstraintTemplate, validate_parameters


class EnforcementAction(str, Enum):
    DENY = "deny"
    WARN = "warn"
    DRYRUN = "dryrun"


class Operation(str, Enum):
    CREATE = "create"
    UPDATE = "update"
    DELETE = "delete"


@dataclass(frozen=True)
class Match:
    kinds: tuple[str, ...] = ()
    namespaces: tuple[str, ...] = ()
    excluded_namespaces: tuple[str, ...] = ()
    label_selector: Selector = field(default_factory=Selector)


@dataclass(frozen=True)
class Constraint:
    name: str
    template: ConstraintTemplate
    parameters: dict[str, Any] = field(default_factory=dict)
    enforcement_action: EnforcementAction = EnforcementAction.DENY
    match: Match = field(default_factory=Match)

    @classmethod
    def create(cls, name: str, template: str | ConstraintTemplate, parameters: Mapping[str, Any] | None = None,
               enforcement_action: str = "deny", match: Match | None = None,
               templates: Mapping[str, ConstraintTemplate] = BUILTIN_TEMPLATES) -> "Constraint":
        """Resolve the template by name and validate parameters against its schema."""
        if isinstance(template, str):
            if template not in templates:
                raise ConstraintLoadError(f"constraint {name!r}: unknown template {template!r}")
            template = templates[template]
        try:
            action = EnforcementAction(enforcement_action)
        except ValueError:
            raise ConstraintLoadError(
                f"constraint {name!r}: enforcementAction must be deny, warn or dryrun") from None
        try:
            params = validate_parameters(template, parameters)
        except ConstraintLoadError as exc:
            raise ConstraintLoadError(f"constraint {name!r}: {exc}") from None
        return cls(name, template, params, action, match or Match())


@dataclass(frozen=True)
class Violation:
    constraint_name: str
    kind: str
    namespace: str
    name: str
    message: str
    enforcement_action: EnforcementAction

    @property
    def object_ref(self) -> tuple[str, str, str]:
        return (self.kind, self.namespace, self.name)

    def as_dict(self) -> dict:
        return {
            "constraint": self.constraint_name,
            "kind": self.kind,
            "namespace": self.namespace,
            "name": self.name,
            "message": self.message,
            "enforcementAction": self.enforcement_action.value,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Violation":
        return cls(d["constraint"], d["kind"], d["namespace"], d["name"], d["message"],
                   EnforcementAction(d["enforcementAction"]))


@dataclass(frozen=True)
class ReviewRequest:
    operation: Operation
    object: ClusterObject
    old_object: ClusterObject | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "operation", Operation(self.operation))
        if (self.old_object is None) != (self.operation is Operation.CREATE):
            raise ValueError("oldObject must be present exactly when the operation is update or delete")


@dataclass(frozen=True)
class Decision:
    allowed: bool
    violations: tuple[Violation, ...] = ()

    @property
    def denials(self) -> tuple[Violation, ...]:
        return tuple(v for v in self.violations if v.enforcement_action is EnforcementAction.DENY)

    @property
    def warnings(self) -> tuple[Violation, ...]:
        return tuple(v for v in self.violations if v.enforcement_action is EnforcementAction.WARN)


@dataclass(frozen=True)
class AuditReport:
    per_constraint: dict[str, tuple[Violation, ...]]

    @property
    def total(self) -> int:
        return sum(len(v) for v in self.per_constraint.values())

    def violations(self) -> list[Violation]:
        return [v for name in sorted(self.per_constraint) for v in self.per_constraint[name]]

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "perConstraint": {
                name: [v.as_dict() for v in self.per_constraint[name]] for name in sorted(self.per_constraint)
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "AuditReport":
        return cls({name: tuple(Violation.from_dict(v) for v in items) for name, items in d["perConstraint"].items()})


def constraint_matches(constraint: Constraint, obj: ClusterObject) -> bool:
    m = constraint.match
    if m.kinds and obj.kind not in m.kinds:
        return False
    # cluster-scoped objects carry no namespace and ignore namespace filters
    if obj.namespace:
        if obj.namespace in m.excluded_namespaces:
            return False
        if m.namespaces and obj.namespace not in m.namespaces:
            return False
    return selector_matches(m.label_selector, obj.labels)


def check(constraint: Constraint, obj: ClusterObject) -> list[Violation]:
    kind, namespace, name = object_ref(obj)
    fn = CHECKS[constraint.template.check_id]
    return [
        Violation(constraint.name, kind, namespace, name, message, constraint.enforcement_action)
        for message in fn(constraint.parameters, obj)
    ]


def evaluate_object(obj: ClusterObject, constraints: Iterable[Constraint]) -> list[Violation]:
    out = []
    for constraint in sorted(constraints, key=lambda c: c.name):
        if constraint_matches(constraint, obj):
            out.extend(check(constraint, obj))
    return out


def review(request: ReviewRequest, constraints: Sequence[Constraint]) -> Decision:
    violations = tuple(evaluate_object(request.object, constraints))
    if request.operation is Operation.DELETE:
        return Decision(True, violations)
    blocked = any(v.enforcement_action is EnforcementAction.DENY for v in violations)
    return Decision(not blocked, violations)


def _object_key(obj: ClusterObject) -> tuple[str, str, str]:
    return (obj.namespace, obj.name, obj.kind)


def audit(state: ClusterState, constraints: Sequence[Constraint]) -> AuditReport:
    objects = sorted(state.all_objects(), key=_object_key)
    per: dict[str, tuple[Violation, ...]] = {}
    for constraint in sorted(constraints, key=lambda c: c.name):
        found = []
        for obj in objects:
            if constraint_matches(constraint, obj):
                found.extend(check(constraint, obj))
        per[constraint.name] = tuple(found)
    return AuditReport(per)
