"""Admission webhook and vault HTTP service."""

from .admission import AdmissionController, AdmissionResponse, AdmissionReview, NoStateError
from .app import ServiceSettings, create_app, decode_patch

__all__ = [
    "AdmissionController",
    "AdmissionResponse",
    "AdmissionReview",
    "NoStateError",
    "ServiceSettings",
    "create_app",
    "decode_patch",
]
