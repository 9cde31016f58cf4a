"""Identity-based secrets vault with a versioned key-value engine.

Storage holds a plaintext header followed by records sealed with AES-256-GCM
under a master key. The master key never touches disk: ``init`` splits it into
key shares and ``unseal`` rebuilds it once enough distinct shares arrive,
verified by decrypting the first sealed record. Every public operation appends
exactly one audit record, denials included.
"""
from __future__ import annotations

import base64
import hashlib
import json
import logging
import secrets
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import shamir
from .acl import AuthToken, PolicyDoc, PolicyRule, Role, authorize, split_path
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
from .storage import HEADER, SEALED, RecordFile, StorageError

log = logging.getLogger(__name__)

DEFAULT_MOUNT = "cmsweb"
BINARY_PREFIX = "__binary:"
KEY_BYTES = 32
NONCE_BYTES = 12
_AAD = b"clustergate-vault-v1"


def token_digest(token_id: str | None) -> str:
    if not token_id:
        return ""
    return hashlib.sha256(token_id.encode()).hexdigest()


@dataclass(frozen=True)
class SealState:
    initialized: bool
    sealed: bool
    shares: int
    threshold: int
    progress: int

    def as_dict(self) -> dict:
        return {
            "initialized": self.initialized,
            "sealed": self.sealed,
            "n": self.shares,
            "t": self.threshold,
            "progress": self.progress,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SealState":
        return cls(d["initialized"], d["sealed"], d["n"], d["t"], d["progress"])


@dataclass(frozen=True)
class AuditRecord:
    timestamp: float
    token_digest: str
    operation: str
    path: str
    outcome: str

    def as_dict(self) -> dict:
        return {
            "time": self.timestamp,
            "tokenDigest": self.token_digest,
            "operation": self.operation,
            "path": self.path,
            "outcome": self.outcome,
        }


@dataclass
class KVVersion:
    version: int
    data: dict[str, str] | None
    created_at: float
    destroyed: bool = False

    def metadata(self) -> dict:
        return {"version": self.version, "created_time": self.created_at, "destroyed": self.destroyed}


@dataclass(frozen=True)
class SecretsResult:
    secret_path: str
    policy_name: str
    role_name: str
    version: int
    binary_keys: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        return {
            "secretPath": self.secret_path,
            "policyName": self.policy_name,
            "roleName": self.role_name,
            "version": self.version,
            "binaryKeys": list(self.binary_keys),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SecretsResult":
        return cls(d["secretPath"], d["policyName"], d["roleName"], d["version"], tuple(d.get("binaryKeys", ())))


@dataclass
class _Index:
    """Decrypted view of storage, present only while unsealed."""

    mounts: set[str] = field(default_factory=set)
    kv: dict[tuple[str, str], list[KVVersion]] = field(default_factory=dict)
    policies: dict[str, PolicyDoc] = field(default_factory=dict)
    roles: dict[str, Role] = field(default_factory=dict)
    tokens: dict[str, dict] = field(default_factory=dict)

    def apply(self, rec: Mapping[str, Any]) -> None:
        op = rec["op"]
        if op == "sentinel":
            return
        if op == "mount":
            self.mounts.add(rec["path"])
        elif op == "kv_put":
            versions = self.kv.setdefault((rec["mount"], rec["path"]), [])
            if rec["version"] != len(versions) + 1:
                raise StorageError(f"version gap at {rec['mount']}/{rec['path']}")
            versions.append(KVVersion(rec["version"], dict(rec["data"]), rec["createdAt"]))
        elif op == "kv_destroy":
            for v in self.kv.get((rec["mount"], rec["path"]), []):
                if v.version in rec["versions"]:
                    v.destroyed = True
                    v.data = None
        elif op == "policy":
            self.policies[rec["name"]] = PolicyDoc.from_dict(rec["doc"], rec["name"])
        elif op == "role":
            self.roles[rec["name"]] = Role.from_dict(rec["doc"], rec["name"])
        elif op == "token":
            self.tokens[rec["digest"]] = rec
        elif op == "revoke":
            self.tokens.pop(rec["digest"], None)
        else:
            raise StorageError(f"unknown record op {op!r}")


def encode_share(share: bytes) -> str:
    return share.hex()


def decode_share(text: str | bytes) -> bytes:
    if isinstance(text, bytes):
        text = text.decode("ascii", "replace")
    try:
        raw = bytes.fromhex(text.strip())
    except ValueError:
        raise InvalidShareError("key share is not valid hex") from None
    if len(raw) != KEY_BYTES + 1 or raw[0] == 0:
        raise InvalidShareError("key share has the wrong length or a zero index")
    return raw


class Vault:
    """Sealable secrets store.

    ``storage`` is a file path, or ``None`` for a purely in-memory vault.
    ``clock`` returns seconds since the epoch and drives token expiry.
    """

    def __init__(self, storage: str | Path | None = None, *, clock: Callable[[], float] = time.time,
                 audit_path: str | Path | None = None, fsync: bool = False):
        self._store = RecordFile(storage, fsync=fsync)
        self._clock = clock
        self._lock = threading.RLock()
        self._audit: list[AuditRecord] = []
        self._audit_path = Path(audit_path) if audit_path is not None else None
        self._key: bytes | None = None
        self._index: _Index | None = None
        self._pending: dict[int, bytes] = {}
        self._next_nonce = 0
        self._header = self._read_header()

    # ------------------------------------------------------------ internals

    def _read_header(self) -> dict | None:
        for kind, payload in self._store.records():
            if kind != HEADER:
                raise StorageError("storage does not start with a header record")
            return json.loads(payload)
        return None

    @property
    def audit_log(self) -> list[AuditRecord]:
        return list(self._audit)

    def _record(self, operation: str, path: str, token: str | None, outcome: str) -> None:
        rec = AuditRecord(self._clock(), token_digest(token), operation, path, outcome)
        self._audit.append(rec)
        if self._audit_path is not None:
            with open(self._audit_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec.as_dict(), sort_keys=True) + "\n")

    @contextmanager
    def _audited(self, operation: str, path: str = "", token: str | None = None) -> Iterator[None]:
        try:
            yield
        except PermissionDenied:
            self._record(operation, path, token, "deny")
            raise
        except BaseException:
            self._record(operation, path, token, "error")
            raise
        self._record(operation, path, token, "allow")

    def _seal_record(self, rec: Mapping[str, Any], key: bytes | None = None) -> None:
        key = key or self._key
        nonce_value = self._next_nonce
        if nonce_value >= 1 << (8 * NONCE_BYTES):
            raise VaultError("nonce space exhausted")
        self._next_nonce += 1
        nonce = nonce_value.to_bytes(NONCE_BYTES, "big")
        blob = AESGCM(key).encrypt(nonce, json.dumps(rec, sort_keys=True).encode(), _AAD)
        self._store.append(SEALED, nonce + blob)

    def _commit(self, rec: Mapping[str, Any]) -> None:
        self._seal_record(rec)
        self._index.apply(rec)

    def _live_index(self) -> _Index:
        if self._header is None:
            raise NotInitializedError("vault is not initialized")
        index = self._index
        if index is None:
            raise SealedError("vault is sealed")
        return index

    def _token(self, token: str | None, index: _Index) -> dict:
        entry = index.tokens.get(token_digest(token)) if token else None
        if entry is None:
            raise PermissionDenied("permission denied: invalid token")
        if entry["expiresAt"] is not None and self._clock() >= entry["expiresAt"]:
            raise PermissionDenied("permission denied: token expired")
        return entry

    def _require(self, token: str | None, capability: str, path: str) -> dict:
        index = self._live_index()
        entry = self._token(token, index)
        if entry["root"]:
            return entry
        policies = [index.policies[p] for p in entry["policies"] if p in index.policies]
        if not authorize(policies, capability, path):
            raise PermissionDenied(f"permission denied: {capability} on {path}")
        return entry

    def _unlock(self, key: bytes) -> _Index:
        index = _Index()
        highest = -1
        first = True
        for kind, payload in self._store.records():
            if kind != SEALED:
                continue
            nonce, blob = payload[:NONCE_BYTES], payload[NONCE_BYTES:]
            try:
                plain = AESGCM(key).decrypt(nonce, blob, _AAD)
            except InvalidTag:
                if first:
                    raise InvalidShareError("reconstructed key failed verification") from None
                raise StorageError("sealed record failed authentication") from None
            first = False
            highest = max(highest, int.from_bytes(nonce, "big"))
            index.apply(json.loads(plain))
        if first:
            raise StorageError("storage has no sentinel record")
        self._next_nonce = highest + 1
        return index

    # ------------------------------------------------------------ seal lifecycle

    def status(self) -> SealState:
        with self._audited("status", "sys/seal-status"):
            return self._status()

    def _status(self) -> SealState:
        if self._header is None:
            return SealState(False, True, 0, 0, 0)
        return SealState(True, self._index is None, self._header["shares"], self._header["threshold"],
                         len(self._pending))

    def init(self, shares: int = 5, threshold: int = 3, mounts: tuple[str, ...] = (DEFAULT_MOUNT,)
             ) -> tuple[list[str], str]:
        """Create the master key and return ``(key shares, root token)``.

        The vault is left sealed; shares are returned once and never stored.
        """
        with self._audited("init", "sys/init"), self._lock:
            if self._header is not None:
                raise AlreadyInitializedError("vault is already initialized")
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in (shares, threshold)) \
                    or not 1 <= threshold <= shares <= 255:
                raise InvalidRequestError("need 1 <= threshold <= shares <= 255")
            key = secrets.token_bytes(KEY_BYTES)
            header = {"format": 1, "shares": shares, "threshold": threshold, "createdAt": self._clock()}
            self._store.append(HEADER, json.dumps(header, sort_keys=True).encode())
            self._next_nonce = 0
            self._seal_record({"op": "sentinel"}, key)
            for mount in mounts:
                self._seal_record({"op": "mount", "path": mount}, key)
            root = secrets.token_hex(16)
            self._seal_record(self._token_record(root, ("root",), None, root=True), key)
            self._header = header
            parts = [encode_share(s) for s in shamir.split(key, shares, threshold)]
            del key
            log.info("vault initialized with %d shares, threshold %d", shares, threshold)
            return parts, root

    def unseal(self, share: str | bytes) -> SealState:
        with self._audited("unseal", "sys/unseal"), self._lock:
            if self._header is None:
                raise NotInitializedError("vault is not initialized")
            if self._index is not None:
                return self._status()
            raw = decode_share(share)
            if raw[0] in self._pending:
                raise DuplicateShareError(f"share {raw[0]} was already submitted")
            self._pending[raw[0]] = raw
            if len(self._pending) < self._header["threshold"]:
                return self._status()
            key = shamir.combine(list(self._pending.values()))
            self._pending.clear()
            self._index = self._unlock(key)
            self._key = key
            log.info("vault unsealed")
            return self._status()

    def seal(self, token: str | None) -> SealState:
        with self._audited("seal", "sys/seal", token), self._lock:
            self._require(token, "update", "sys/seal")
            self._key = None
            self._index = None
            self._pending.clear()
            return self._status()

    # ------------------------------------------------------------ tokens and auth

    def _token_record(self, token_id: str, policies: tuple[str, ...], ttl: int | None, *, root: bool = False,
                      meta: Mapping[str, str] | None = None) -> dict:
        now = self._clock()
        return {
            "op": "token",
            "digest": token_digest(token_id),
            "policies": list(policies),
            "issuedAt": now,
            "expiresAt": None if ttl is None else now + ttl,
            "root": root,
            "meta": dict(meta or {}),
        }

    def login(self, service_account: str, namespace: str, role: str | None = None) -> AuthToken:
        """Exchange an asserted (service account, namespace) identity for a token.

        The caller is trusted to have verified the identity; no JWT review
        happens here.
        """
        with self._audited("login", f"auth/kubernetes/login/{role or ''}".rstrip("/")), self._lock:
            index = self._live_index()
            if role is not None:
                candidate = index.roles.get(role)
                if candidate is None or not candidate.binds(service_account, namespace):
                    raise AuthenticationError(f"role {role!r} does not bind {namespace}/{service_account}")
            else:
                matches = [r for n, r in sorted(index.roles.items()) if r.binds(service_account, namespace)]
                if not matches:
                    raise AuthenticationError(f"no role binds {namespace}/{service_account}")
                candidate = matches[0]
            missing = [p for p in candidate.policies if p not in index.policies]
            if missing:
                raise AuthenticationError(f"role {candidate.name!r} references missing policies {missing}")
            token_id = secrets.token_hex(16)
            rec = self._token_record(token_id, candidate.policies, candidate.token_ttl,
                                     meta={"role": candidate.name, "serviceAccount": service_account,
                                           "namespace": namespace})
            self._commit(rec)
            return AuthToken(token_id, tuple(candidate.policies), rec["issuedAt"], rec["expiresAt"], False,
                             rec["meta"])

    def lookup_token(self, token: str | None) -> AuthToken:
        with self._audited("token-lookup", "auth/token/lookup-self", token):
            entry = self._token(token, self._live_index())
            return AuthToken(token, tuple(entry["policies"]), entry["issuedAt"], entry["expiresAt"],
                             entry["root"], dict(entry["meta"]))

    def revoke_token(self, token: str | None, target: str | None = None) -> None:
        """Revoke ``target``, or the calling token itself when no target is given."""
        with self._audited("token-revoke", "auth/token/revoke", token), self._lock:
            index = self._live_index()
            if target is None or target == token:
                self._token(token, index)
                target = token
            else:
                self._require(token, "update", "auth/token/revoke")
                if token_digest(target) not in index.tokens:
                    raise SecretNotFound("no such token")
            self._commit({"op": "revoke", "digest": token_digest(target)})

    # ------------------------------------------------------------ policies and roles

    def _upsert_policy(self, token, policy: PolicyDoc) -> bool:
        index = self._live_index()
        if policy.name == "root":
            raise InvalidRequestError("the root policy cannot be modified")
        existing = index.policies.get(policy.name)
        self._require(token, "update" if existing else "create", f"sys/policies/{policy.name}")
        if existing == policy:
            return False
        self._commit({"op": "policy", "name": policy.name, "doc": policy.as_dict()})
        return True

    def write_policy(self, token: str | None, policy: PolicyDoc) -> None:
        with self._audited("policy-write", f"sys/policies/{policy.name}", token), self._lock:
            self._upsert_policy(token, policy)

    def read_policy(self, token: str | None, name: str) -> PolicyDoc:
        with self._audited("policy-read", f"sys/policies/{name}", token):
            index = self._live_index()
            self._require(token, "read", f"sys/policies/{name}")
            if name not in index.policies:
                raise SecretNotFound(f"no policy named {name!r}")
            return index.policies[name]

    def _upsert_role(self, token, role: Role) -> bool:
        index = self._live_index()
        existing = index.roles.get(role.name)
        self._require(token, "update" if existing else "create", f"auth/kubernetes/role/{role.name}")
        if existing == role:
            return False
        self._commit({"op": "role", "name": role.name, "doc": role.as_dict()})
        return True

    def write_role(self, token: str | None, role: Role) -> None:
        with self._audited("role-write", f"auth/kubernetes/role/{role.name}", token), self._lock:
            self._upsert_role(token, role)

    def read_role(self, token: str | None, name: str) -> Role:
        with self._audited("role-read", f"auth/kubernetes/role/{name}", token):
            index = self._live_index()
            self._require(token, "read", f"auth/kubernetes/role/{name}")
            if name not in index.roles:
                raise SecretNotFound(f"no role named {name!r}")
            return index.roles[name]

    # ------------------------------------------------------------ kv engine

    @staticmethod
    def _kv_path(mount: str, path: str) -> tuple[str, str]:
        mount = "/".join(split_path(mount))
        path = "/".join(split_path(path))
        if not mount or not path:
            raise InvalidRequestError("mount and path must be non-empty")
        return mount, path

    def _put(self, token, mount: str, path: str, data: Mapping[str, str]) -> int:
        index = self._live_index()
        if not isinstance(data, Mapping) or not all(
                isinstance(k, str) and k and isinstance(v, str) for k, v in data.items()):
            raise InvalidRequestError("secret data must map non-empty string keys to string values")
        versions = index.kv.get((mount, path))
        self._require(token, "update" if versions else "create", f"{mount}/{path}")
        if mount not in index.mounts:
            raise SecretNotFound(f"no secrets engine mounted at {mount!r}")
        version = len(versions or ()) + 1
        self._commit({"op": "kv_put", "mount": mount, "path": path, "version": version,
                      "data": dict(data), "createdAt": self._clock()})
        return version

    def kv_put(self, token: str | None, mount: str, path: str, data: Mapping[str, str]) -> int:
        """Write a new version of the secret at ``mount/path``; returns its number."""
        with self._audited("kv-put", f"{mount}/{path}", token), self._lock:
            mount, path = self._kv_path(mount, path)
            return self._put(token, mount, path, data)

    def _get(self, token, mount: str, path: str, version: int | None) -> KVVersion:
        index = self._live_index()
        self._require(token, "read", f"{mount}/{path}")
        versions = index.kv.get((mount, path))
        if not versions:
            raise SecretNotFound(f"no secret at {mount}/{path}")
        if version is None:
            live = [v for v in versions if not v.destroyed]
            if not live:
                raise DestroyedVersionError(f"every version of {mount}/{path} is destroyed")
            return live[-1]
        if not 1 <= version <= len(versions):
            raise SecretNotFound(f"{mount}/{path} has no version {version}")
        entry = versions[version - 1]
        if entry.destroyed:
            raise DestroyedVersionError(f"version {version} of {mount}/{path} is destroyed")
        return entry

    def kv_get(self, token: str | None, mount: str, path: str, version: int | None = None) -> dict[str, str]:
        return dict(self.kv_read(token, mount, path, version).data)

    def kv_read(self, token: str | None, mount: str, path: str, version: int | None = None) -> KVVersion:
        """Like ``kv_get`` but returns the version record with its metadata."""
        with self._audited("kv-get", f"{mount}/{path}", token):
            mount, path = self._kv_path(mount, path)
            entry = self._get(token, mount, path, version)
            return KVVersion(entry.version, dict(entry.data), entry.created_at, entry.destroyed)

    def kv_destroy(self, token: str | None, mount: str, path: str, versions: list[int]) -> None:
        with self._audited("kv-destroy", f"{mount}/{path}", token), self._lock:
            mount, path = self._kv_path(mount, path)
            index = self._live_index()
            self._require(token, "delete", f"{mount}/{path}")
            existing = index.kv.get((mount, path))
            if not existing:
                raise SecretNotFound(f"no secret at {mount}/{path}")
            bad = [v for v in versions if not isinstance(v, int) or not 1 <= v <= len(existing)]
            if bad or not versions:
                raise InvalidRequestError(f"unknown versions {bad or versions}")
            self._commit({"op": "kv_destroy", "mount": mount, "path": path, "versions": sorted(set(versions))})

    def kv_list(self, token: str | None, mount: str, prefix: str = "") -> list[str]:
        """Immediate children under ``prefix``; sub-directories end with ``/``."""
        mount = "/".join(split_path(mount))
        prefix_segs = split_path(prefix)
        acl_path = "/".join([mount, *prefix_segs])
        with self._audited("kv-list", acl_path, token):
            index = self._live_index()
            self._require(token, "list", acl_path)
            children = set()
            for (m, p) in index.kv:
                segs = p.split("/")
                if m != mount or segs[:len(prefix_segs)] != prefix_segs or len(segs) == len(prefix_segs):
                    continue
                rest = segs[len(prefix_segs):]
                children.add(rest[0] + ("/" if len(rest) > 1 else ""))
            return sorted(children)

    # ------------------------------------------------------------ secrets-from-files workflow

    def create_secrets_from_files(self, token: str | None, namespace: str, service: str,
                                  files: Mapping[str, bytes], mount: str = DEFAULT_MOUNT,
                                  token_ttl: int = 3600) -> SecretsResult:
        """Store ``files`` as one secret and grant the service account read access.

        File names become keys and contents become values. Content that is not
        UTF-8 is base64-encoded under a ``__binary:``-prefixed key. Policy and
        role are upserted, so reruns only add a secret version.
        """
        secret_path = f"{namespace}/{service}-secrets"
        with self._audited("create-secrets", f"{mount}/{secret_path}", token), self._lock:
            if not namespace or not service or "/" in namespace or "/" in service:
                raise InvalidRequestError("namespace and service must be non-empty and slash-free")
            if not files:
                raise InvalidRequestError("no files to store")
            data: dict[str, str] = {}
            binary = []
            for name, content in sorted(files.items()):
                if not name or "/" in name or name.startswith(BINARY_PREFIX):
                    raise InvalidRequestError(f"invalid file name {name!r}")
                try:
                    data[name] = content.decode("utf-8")
                except UnicodeDecodeError:
                    data[BINARY_PREFIX + name] = base64.b64encode(content).decode("ascii")
                    binary.append(name)
            policy = PolicyDoc(f"{namespace}-{service}-read",
                               (PolicyRule(f"{mount}/{secret_path}", frozenset({"read"})),))
            role = Role(f"{namespace}-{service}", (service,), (namespace,), (policy.name,), token_ttl)
            # authorize every step before writing anything
            index = self._live_index()
            self._require(token, "update" if policy.name in index.policies else "create",
                          f"sys/policies/{policy.name}")
            self._require(token, "update" if role.name in index.roles else "create",
                          f"auth/kubernetes/role/{role.name}")
            version = self._put(token, *self._kv_path(mount, secret_path), data)
            self._upsert_policy(token, policy)
            self._upsert_role(token, role)
            return SecretsResult(f"{mount}/{secret_path}", policy.name, role.name, version, tuple(binary))

    def create_secrets_from_dir(self, token: str | None, namespace: str, service: str,
                                directory: str | Path, mount: str = DEFAULT_MOUNT) -> SecretsResult:
        return self.create_secrets_from_files(token, namespace, service, read_secret_dir(directory), mount)


def read_secret_dir(directory: str | Path) -> dict[str, bytes]:
    directory = Path(directory)
    if not directory.is_dir():
        raise InvalidRequestError(f"{directory} is not a directory")
    files = {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}
    if not files:
        raise InvalidRequestError(f"{directory} contains no regular files")
    return files


def decode_secret_files(data: Mapping[str, str]) -> dict[str, bytes]:
    """One file per key; ``__binary:`` entries are base64-decoded."""
    out = {}
    for key, value in data.items():
        if key.startswith(BINARY_PREFIX):
            out[key[len(BINARY_PREFIX):]] = base64.b64decode(value)
        else:
            out[key] = value.encode("utf-8")
    return out


__all__ = [
    "AuditRecord",
    "DEFAULT_MOUNT",
    "KVVersion",
    "SealState",
    "SecretsResult",
    "Vault",
    "decode_secret_files",
    "read_secret_dir",
    "token_digest",
]
