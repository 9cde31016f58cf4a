"""Webhook decision logic, independent of the HTTP framework.

Pipeline per request: parse the object, match constraints, run checks,
decide. Any unexpected error on a security-relevant path yields a denial
unless the controller was built with ``fail_open=True``.
"""
from __future__ import annotations

import dataclasses
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from ..constraints import AuditReport, Constraint, Operation, ReviewRequest, Violation, audit, load_constraints
from ..constraints import review as review_request
from ..errors import ClusterGateError, ManifestError, UnknownKindError
from ..manifest import from_document, load_state
from ..model import ClusterState, Namespace, NetworkPolicy, Pod, WorkloadObject, object_ref
from ..vault.errors import VaultError
from ..vault.inject import ANNOTATION_INJECT, InjectorConfig, VaultHandle, inject, injection_patch

log = logging.getLogger(__name__)


class NoStateError(ClusterGateError):
    pass


@dataclass(frozen=True)
class AdmissionReview:
    uid: str
    operation: str
    object: dict | None = None
    old_object: dict | None = None
    request_kind: str = ""
    namespace: str | None = None

    def __post_init__(self) -> None:
        if not self.uid:
            raise ValueError("uid must be non-empty")
        if self.operation not in ("CREATE", "UPDATE", "DELETE"):
            raise ValueError(f"unsupported operation {self.operation!r}")


@dataclass(frozen=True)
class AdmissionResponse:
    uid: str
    allowed: bool
    status_message: str = ""
    patch: list[dict] | None = None
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.patch and not self.allowed:
            raise ValueError("a patch can only accompany an allowed response")
        if not self.allowed and not self.status_message:
            raise ValueError("a denial needs a status message")


def _describe(v: Violation) -> str:
    return f"[{v.constraint_name}] {v.message}"


class AdmissionController:
    """Holds the loaded constraint set, optional cluster state and vault handle."""

    def __init__(self, constraints: Sequence[Constraint] = (), *, constraints_dir: str | Path | None = None,
                 state: ClusterState | None = None, track_admitted: bool = False,
                 vault: VaultHandle | None = None, injector: InjectorConfig = InjectorConfig(),
                 fail_open: bool = False):
        self.constraints_dir = Path(constraints_dir) if constraints_dir is not None else None
        self._constraints: tuple[Constraint, ...] = tuple(constraints)
        if self.constraints_dir is not None and not constraints:
            self._constraints = tuple(load_constraints(self.constraints_dir))
        self._base_state = state
        self.track_admitted = track_admitted
        self._admitted: dict[tuple[str, str, str], Any] = {}
        self._state_lock = threading.Lock()
        self.vault = vault
        self.injector = injector
        self.fail_open = fail_open

    @classmethod
    def from_paths(cls, constraints_dir: str | Path | None = None, state_file: str | Path | None = None,
                   **kwargs) -> "AdmissionController":
        state = load_state(state_file) if state_file is not None else None
        return cls(constraints_dir=constraints_dir, state=state, **kwargs)

    @property
    def constraints(self) -> tuple[Constraint, ...]:
        return self._constraints

    def reload(self) -> int:
        """Re-read the constraint directory and swap the set in one assignment."""
        if self.constraints_dir is None:
            raise ClusterGateError("no constraint directory configured")
        fresh = tuple(load_constraints(self.constraints_dir))
        self._constraints = fresh
        log.info("reloaded %d constraints from %s", len(fresh), self.constraints_dir)
        return len(fresh)

    # ------------------------------------------------------------ state

    def current_state(self) -> ClusterState:
        with self._state_lock:
            if self._base_state is None and not self.track_admitted:
                raise NoStateError("no cluster state configured; start with --state or --track-admitted")
            base = self._base_state or ClusterState()
            if not self._admitted:
                return base
            replaced = set(self._admitted)
            pods = [p for p in base.pods if object_ref(p) not in replaced]
            objects = [o for o in base.objects if object_ref(o) not in replaced]
            for obj in self._admitted.values():
                (pods if isinstance(obj, Pod) else objects).append(obj)
            names = {ns.name for ns in base.namespaces}
            namespaces = list(base.namespaces)
            for p in pods:
                if p.namespace not in names:
                    names.add(p.namespace)
                    namespaces.append(Namespace(p.namespace))
            # admitted pods never carry IPs, so uniqueness holds
            return ClusterState(tuple(namespaces), tuple(pods), tuple(objects), base.network_policies)

    def _remember(self, operation: str, obj) -> None:
        if not self.track_admitted or not isinstance(obj, (Pod, WorkloadObject)):
            return
        with self._state_lock:
            key = object_ref(obj)
            if operation == "DELETE":
                self._admitted.pop(key, None)
            else:
                if isinstance(obj, Pod) and obj.pod_ip is not None:
                    obj = dataclasses.replace(obj, pod_ip=None)
                self._admitted[key] = obj

    def handle_audit(self) -> AuditReport:
        return audit(self.current_state(), self._constraints)

    # ------------------------------------------------------------ validating webhook

    def _parse(self, review: AdmissionReview, doc: dict | None):
        if doc is None:
            raise ManifestError("request carries no object")
        return from_document(doc, default_namespace=review.namespace or "default")

    def handle_validate(self, review: AdmissionReview) -> AdmissionResponse:
        try:
            return self._validate(review)
        except Exception as exc:  # fail closed on anything unexpected
            log.exception("validation of %s failed", review.uid)
            return self._internal_error(review, f"internal error during validation: {exc}")

    def _internal_error(self, review: AdmissionReview, message: str) -> AdmissionResponse:
        if self.fail_open:
            return AdmissionResponse(review.uid, True, warnings=[f"fail-open: {message}"])
        return AdmissionResponse(review.uid, False, message)

    def _validate(self, review: AdmissionReview) -> AdmissionResponse:
        constraints = self._constraints  # one snapshot per request
        if review.operation == "DELETE":
            doc = review.object if review.object is not None else review.old_object
            try:
                obj = self._parse(review, doc)
            except ManifestError as exc:
                return AdmissionResponse(review.uid, True, warnings=[f"object not evaluated: {exc}"])
            warnings = []
            if isinstance(obj, (Pod, WorkloadObject)):
                decision = review_object(Operation.DELETE, obj, constraints)
                warnings = [_describe(v) for v in decision.violations]
            self._remember("DELETE", obj)
            return AdmissionResponse(review.uid, True, warnings=warnings)

        try:
            obj = self._parse(review, review.object)
        except UnknownKindError as exc:
            return AdmissionResponse(review.uid, True, warnings=[f"not evaluated: {exc}"])
        except ManifestError as exc:
            return AdmissionResponse(review.uid, False, f"cannot parse object: {exc}")
        if isinstance(obj, NetworkPolicy):
            return AdmissionResponse(review.uid, True)
        old = obj
        if review.operation == "UPDATE" and review.old_object is not None:
            try:
                old = self._parse(review, review.old_object)
            except ManifestError:
                old = obj
        decision = review_request(ReviewRequest(Operation(review.operation.lower()), obj,
                                        None if review.operation == "CREATE" else old), constraints)
        warnings = [_describe(v) for v in decision.warnings]
        if not decision.allowed:
            message = "; ".join(_describe(v) for v in decision.denials)
            return AdmissionResponse(review.uid, False, message, warnings=warnings)
        self._remember(review.operation, obj)
        return AdmissionResponse(review.uid, True, warnings=warnings)

    # ------------------------------------------------------------ mutating webhook

    def handle_mutate(self, review: AdmissionReview) -> AdmissionResponse:
        doc = review.object or {}
        annotated = str(((doc.get("metadata") or {}).get("annotations") or {}).get(ANNOTATION_INJECT, "")).lower() \
            == "true"
        try:
            return self._mutate(review)
        except Exception as exc:
            log.exception("mutation of %s failed", review.uid)
            if not annotated:
                return AdmissionResponse(review.uid, True, warnings=[f"mutation skipped: {exc}"])
            return self._internal_error(review, f"internal error during injection: {exc}")

    def _mutate(self, review: AdmissionReview) -> AdmissionResponse:
        doc = review.object
        if review.operation != "CREATE" or not isinstance(doc, dict) or doc.get("kind") != "Pod":
            return AdmissionResponse(review.uid, True)
        annotations = (doc.get("metadata") or {}).get("annotations") or {}
        if str(annotations.get(ANNOTATION_INJECT, "")).lower() != "true":
            return AdmissionResponse(review.uid, True)
        try:
            pod = self._parse(review, doc)
        except ManifestError as exc:
            return AdmissionResponse(review.uid, False, f"cannot parse pod for injection: {exc}")
        if self.vault is None:
            return AdmissionResponse(review.uid, False, "injection requested but no vault is configured")
        try:
            result = inject(pod, self.vault, self.injector)
        except VaultError as exc:
            return AdmissionResponse(review.uid, False, f"secret injection denied: {exc}")
        patch = injection_patch(doc, result, self.injector)
        return AdmissionResponse(review.uid, True, patch=patch or None)


def review_object(operation: Operation, obj, constraints: Sequence[Constraint]):
    old = None if operation is Operation.CREATE else obj
    return review_request(ReviewRequest(operation, obj, old), constraints)
