"""Reading constraint files (JSON or YAML, one or more documents each)."""
from __future__ import annotations

from pathlib import Path
from typing import Any, Mapping

from ..errors import ConstraintLoadError, ManifestError
from ..manifest import format_for_path, load_documents, parse_selector, selector_document
from ..quantity import Quantity, format_quantity
from .engine import Constraint, Match
from .library import BUILTIN_TEMPLATES, ConstraintTemplate

CONSTRAINT_SUFFIXES = (".json", ".yaml", ".yml")


def _names(value: Any, where: str) -> tuple[str, ...]:
    if value is None:
        return ()
    if not isinstance(value, list):
        raise ConstraintLoadError(f"{where} must be a list")
    out = []
    for item in value:
        # accept the upstream [{apiGroups, kinds}] form as well as bare names
        if isinstance(item, dict):
            out.extend(_names(item.get("kinds"), where))
        elif isinstance(item, str):
            out.append(item)
        else:
            raise ConstraintLoadError(f"{where} entries must be strings")
    return tuple(out)


def parse_match(doc: Any) -> Match:
    if doc is None:
        return Match()
    if not isinstance(doc, dict):
        raise ConstraintLoadError("match must be a mapping")
    try:
        selector = parse_selector(doc.get("labelSelector"), "match.labelSelector")
    except ManifestError as exc:
        raise ConstraintLoadError(str(exc)) from exc
    return Match(
        kinds=_names(doc.get("kinds"), "match.kinds"),
        namespaces=_names(doc.get("namespaces"), "match.namespaces"),
        excluded_namespaces=_names(doc.get("excludedNamespaces"), "match.excludedNamespaces"),
        label_selector=selector,
    )


def constraint_from_document(doc: Any, templates: Mapping[str, ConstraintTemplate] = BUILTIN_TEMPLATES) -> Constraint:
    if not isinstance(doc, dict):
        raise ConstraintLoadError("constraint document must be a mapping")
    name = doc.get("name")
    if not name or not isinstance(name, str):
        raise ConstraintLoadError("constraint needs a name")
    if not doc.get("template"):
        raise ConstraintLoadError(f"constraint {name!r} needs a template")
    return Constraint.create(
        name,
        doc["template"],
        doc.get("parameters"),
        doc.get("enforcementAction") or "deny",
        parse_match(doc.get("match")),
        templates,
    )


def constraint_to_document(c: Constraint) -> dict:
    def plain(v):
        if isinstance(v, Quantity):
            return format_quantity(v)
        if isinstance(v, tuple) and v and isinstance(v[0], tuple):
            return [{"min_replicas": lo, "max_replicas": hi} for lo, hi in v]
        if isinstance(v, tuple):
            return list(v)
        if hasattr(v, "denominator"):
            return str(v)
        return v

    match: dict[str, Any] = {}
    if c.match.kinds:
        match["kinds"] = list(c.match.kinds)
    if c.match.namespaces:
        match["namespaces"] = list(c.match.namespaces)
    if c.match.excluded_namespaces:
        match["excludedNamespaces"] = list(c.match.excluded_namespaces)
    if not c.match.label_selector.empty:
        match["labelSelector"] = selector_document(c.match.label_selector)
    return {
        "template": c.template.name,
        "name": c.name,
        "enforcementAction": c.enforcement_action.value,
        "match": match,
        "parameters": {k: plain(v) for k, v in c.parameters.items()},
    }


def load_constraint_file(path: str | Path) -> list[Constraint]:
    path = Path(path)
    try:
        docs = load_documents(path.read_bytes(), format_for_path(path))
    except ManifestError as exc:
        raise ConstraintLoadError(f"{path}: {exc}") from exc
    out = []
    for doc in docs:
        try:
            out.append(constraint_from_document(doc))
        except ConstraintLoadError as exc:
            raise ConstraintLoadError(f"{path}: {exc}") from exc
    return out


def load_constraints(directory: str | Path) -> list[Constraint]:
    """Load every constraint file in ``directory``; names must be unique."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ConstraintLoadError(f"{directory} is not a directory")
    constraints: dict[str, Constraint] = {}
    for path in sorted(directory.iterdir()):
        if path.suffix not in CONSTRAINT_SUFFIXES or not path.is_file():
            continue
        for c in load_constraint_file(path):
            if c.name in constraints:
                raise ConstraintLoadError(f"{path}: duplicate constraint name {c.name!r}")
            constraints[c.name] = c
    return [constraints[n] for n in sorted(constraints)]
