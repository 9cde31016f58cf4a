"""Secrets vault: seal/unseal, versioned KV, path ACLs, roles, injection."""

from .acl import AuthToken, PolicyDoc, PolicyError, PolicyRule, Role, authorize, pattern_matches
from .core import (
    AuditRecord,
    DEFAULT_MOUNT,
    SealState,
    SecretsResult,
    Vault,
    decode_secret_files,
    read_secret_dir,
    token_digest,
)
from .errors import (
    AlreadyInitializedError,
    AuthenticationError,
    DestroyedVersionError,
    DuplicateShareError,
    InvalidRequestError,
    InvalidShareError,
    NotInitializedError,
    PermissionDenied,
    SealedError,
    SecretNotFound,
    VaultError,
)
from .inject import InjectionError, InjectionResult, InjectorConfig, inject, injection_patch
from .templates import MissingKeyError, TemplateError, TemplateSyntaxError, render_template

__all__ = [
    "AlreadyInitializedError",
    "AuditRecord",
    "AuthToken",
    "AuthenticationError",
    "DEFAULT_MOUNT",
    "DestroyedVersionError",
    "DuplicateShareError",
    "InjectionError",
    "InjectionResult",
    "InjectorConfig",
    "InvalidRequestError",
    "InvalidShareError",
    "MissingKeyError",
    "NotInitializedError",
    "PermissionDenied",
    "PolicyDoc",
    "PolicyError",
    "PolicyRule",
    "Role",
    "SealState",
    "SealedError",
    "SecretNotFound",
    "SecretsResult",
    "TemplateError",
    "TemplateSyntaxError",
    "Vault",
    "VaultError",
    "authorize",
    "decode_secret_files",
    "inject",
    "injection_patch",
    "pattern_matches",
    "read_secret_dir",
    "render_template",
    "token_digest",
]
