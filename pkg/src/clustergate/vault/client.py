"""HTTP client for a remote vault, mirroring the in-process ``Vault`` methods.

Errors come back as ``{"errors": [...], "type": <wire name>}`` and are
re-raised as the matching local exception class.
"""
from __future__ import annotations

import base64
import time
from typing import Any, Mapping

import httpx

from .acl import AuthToken, PolicyDoc, Role
from .core import SealState, SecretsResult
from .errors import WIRE_ERRORS, VaultError


class VaultClient:
    def __init__(self, base: str | httpx.Client, token: str | None = None, *, timeout: float = 10.0):
        self._http = base if isinstance(base, httpx.Client) else httpx.Client(base_url=base, timeout=timeout)
        self.token = token

    def close(self) -> None:
        self._http.close()

    def _call(self, method: str, url: str, *, token: str | None = None, json: Any = None,
              params: Mapping[str, Any] | None = None) -> Any:
        headers = {}
        token = token if token is not None else self.token
        if token:
            headers["X-Vault-Token"] = token
        try:
            resp = self._http.request(method, url, json=json, params=params, headers=headers)
        except httpx.HTTPError as exc:
            raise VaultError(f"vault unreachable: {exc}") from exc
        if resp.status_code == 204:
            return None
        try:
            body = resp.json()
        except ValueError:
            body = {}
        if resp.is_success:
            return body
        if isinstance(body, dict) and "errors" in body:
            cls = WIRE_ERRORS.get(body.get("type", ""), (VaultError, 0))[0]
            raise cls("; ".join(str(e) for e in body["errors"]))
        detail = body.get("detail") if isinstance(body, dict) else None
        raise VaultError(f"vault returned HTTP {resp.status_code}: {detail or resp.text}")

    @staticmethod
    def _seal(body: Mapping[str, Any]) -> SealState:
        return SealState.from_dict(body)

    def status(self) -> SealState:
        return self._seal(self._call("GET", "/v1/sys/seal-status"))

    def init(self, shares: int = 5, threshold: int = 3) -> tuple[list[str], str]:
        body = self._call("POST", "/v1/sys/init", json={"secret_shares": shares, "secret_threshold": threshold})
        return body["keys"], body["root_token"]

    def unseal(self, share: str) -> SealState:
        return self._seal(self._call("POST", "/v1/sys/unseal", json={"key": share}))

    def seal(self, token: str | None = None) -> SealState:
        return self._seal(self._call("POST", "/v1/sys/seal", token=token))

    def login(self, service_account: str, namespace: str, role: str | None = None) -> AuthToken:
        auth = self._call("POST", "/v1/auth/kubernetes/login",
                          json={"service_account": service_account, "namespace": namespace, "role": role})["auth"]
        now = time.time()
        lease = auth.get("lease_duration") or 0
        return AuthToken(auth["client_token"], tuple(auth["policies"]), now, now + lease if lease else None,
                         False, dict(auth.get("metadata") or {}))

    def kv_put(self, token: str | None, mount: str, path: str, data: Mapping[str, str]) -> int:
        body = self._call("POST", f"/v1/{mount}/data/{path}", token=token, json={"data": dict(data)})
        return body["data"]["version"]

    def kv_get(self, token: str | None, mount: str, path: str, version: int | None = None) -> dict[str, str]:
        params = {"version": version} if version is not None else None
        return self._call("GET", f"/v1/{mount}/data/{path}", token=token, params=params)["data"]["data"]

    def kv_read(self, token: str | None, mount: str, path: str, version: int | None = None) -> dict:
        params = {"version": version} if version is not None else None
        return self._call("GET", f"/v1/{mount}/data/{path}", token=token, params=params)["data"]

    def write_policy(self, token: str | None, policy: PolicyDoc) -> None:
        body = policy.as_dict()
        self._call("PUT", f"/v1/sys/policies/{policy.name}", token=token,
                   json={"rules": body["rules"], "rateLimit": body.get("rateLimit")})

    def write_role(self, token: str | None, role: Role) -> None:
        self._call("PUT", f"/v1/auth/kubernetes/role/{role.name}", token=token, json={
            "bound_service_account_names": list(role.bound_service_accounts),
            "bound_service_account_namespaces": list(role.bound_namespaces),
            "policies": list(role.policies),
            "ttl": role.token_ttl,
        })

    def create_secrets_from_files(self, token: str | None, namespace: str, service: str,
                                  files: Mapping[str, bytes], mount: str = "cmsweb") -> SecretsResult:
        payload = {name: base64.b64encode(content).decode() for name, content in files.items()}
        body = self._call("POST", "/v1/sys/tools/create-secrets", token=token, json={
            "namespace": namespace, "service": service, "files": payload, "mount": mount})
        return SecretsResult.from_dict(body["data"])
