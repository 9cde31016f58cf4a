from ..errors import ClusterGateError


class VaultError(ClusterGateError):
    """Base class for vault failures."""


class NotInitializedError(VaultError):
    pass


class AlreadyInitializedError(VaultError):
    pass


class SealedError(VaultError):
    pass


class InvalidShareError(VaultError):
    pass


class DuplicateShareError(VaultError):
    pass


class PermissionDenied(VaultError):
    pass


class AuthenticationError(VaultError):
    pass


class SecretNotFound(VaultError, LookupError):
    pass


class DestroyedVersionError(VaultError):
    pass


class InvalidRequestError(VaultError, ValueError):
    pass


# wire names used by the HTTP API and its client, with their status codes
WIRE_ERRORS: dict[str, tuple[type[VaultError], int]] = {
    "not_initialized": (NotInitializedError, 503),
    "already_initialized": (AlreadyInitializedError, 400),
    "sealed": (SealedError, 503),
    "invalid_share": (InvalidShareError, 400),
    "duplicate_share": (DuplicateShareError, 400),
    "permission_denied": (PermissionDenied, 403),
    "authentication_failed": (AuthenticationError, 403),
    "not_found": (SecretNotFound, 404),
    "destroyed": (DestroyedVersionError, 404),
    "invalid_request": (InvalidRequestError, 400),
}


def wire_name(exc: VaultError) -> tuple[str, int]:
    for name, (cls, status) in WIRE_ERRORS.items():
        if type(exc) is cls:
            return name, status
    for name, (cls, status) in WIRE_ERRORS.items():
        if isinstance(exc, cls):
            return name, status
    return "error", 500
