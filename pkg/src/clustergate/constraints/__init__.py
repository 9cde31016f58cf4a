"""Parameterized admission constraints evaluated at admission time and in audit sweeps."""

from .engine import (
    AuditReport,
    Constraint,
    Decision,
    EnforcementAction,
    Match,
    Operation,
    ReviewRequest,
    Violation,
    audit,
    check,
    constraint_matches,
    evaluate_object,
    review,
)
from .library import BUILTIN_TEMPLATES, ConstraintTemplate, ParamSpec
from .loader import constraint_from_document, constraint_to_document, load_constraint_file, load_constraints

__all__ = [
    "AuditReport",
    "BUILTIN_TEMPLATES",
    "Constraint",
    "ConstraintTemplate",
    "Decision",
    "EnforcementAction",
    "Match",
    "Operation",
    "ParamSpec",
    "ReviewRequest",
    "Violation",
    "audit",
    "check",
    "constraint_from_document",
    "constraint_matches",
    "constraint_to_document",
    "evaluate_object",
    "load_constraint_file",
    "load_constraints",
    "review",
]
