"""FastAPI application: admission webhooks, audit endpoint and the vault HTTP API."""
from __future__ import annotations

import base64
import binascii
import json
import logging
import os
from dataclasses import dataclass
from typing import Optional

from fastapi import APIRouter, Depends, FastAPI, Header, HTTPException, Query, Request
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from pydantic import ValidationError
from fastapi.concurrency import run_in_threadpool

from ..errors import ClusterGateError
from ..vault import PolicyDoc, PolicyError, PolicyRule, Role, Vault, VaultError
from ..vault.client import VaultClient
from ..vault.errors import InvalidRequestError, wire_name
from ..vault.inject import InjectorConfig
from . import schemas
from .admission import AdmissionController, AdmissionResponse, AdmissionReview, NoStateError

log = logging.getLogger(__name__)


@dataclass
class ServiceSettings:
    constraints_dir: Optional[str] = None
    state_file: Optional[str] = None
    vault_storage: Optional[str] = None
    vault_addr: Optional[str] = None
    vault_token: Optional[str] = None
    vault_audit_log: Optional[str] = None
    track_admitted: bool = False
    fail_open: bool = False
    auth_token: Optional[str] = None
    agent_image: Optional[str] = None


def response_model(resp: AdmissionResponse) -> schemas.AdmissionReviewResponse:
    out = schemas.AdmissionResponseModel(uid=resp.uid, allowed=resp.allowed, warnings=list(resp.warnings))
    if not resp.allowed:
        out.status = schemas.StatusModel(message=resp.status_message, code=403)
    elif resp.status_message:
        out.status = schemas.StatusModel(message=resp.status_message)
    if resp.patch:
        out.patchType = "JSONPatch"
        out.patch = base64.b64encode(json.dumps(resp.patch).encode()).decode()
    return schemas.AdmissionReviewResponse(response=out)


def decode_patch(response: dict) -> list[dict]:
    """Inverse of the base64 patch encoding, for clients and tests."""
    raw = response.get("patch")
    return json.loads(base64.b64decode(raw)) if raw else []


async def _review_from_request(request: Request) -> AdmissionReview:
    try:
        body = await request.json()
        model = schemas.AdmissionReviewModel.model_validate(body)
    except (ValueError, ValidationError) as exc:
        raise HTTPException(400, f"malformed AdmissionReview: {exc}") from None
    req = model.request
    return AdmissionReview(
        uid=req.uid,
        operation=req.operation,
        object=req.object,
        old_object=req.oldObject,
        request_kind=req.kind.kind if req.kind else "",
        namespace=req.namespace,
    )


def _vault_error(exc: VaultError) -> JSONResponse:
    name, status = wire_name(exc)
    return JSONResponse({"errors": [str(exc)], "type": name}, status_code=status)


def build_vault_router(vault: Vault) -> APIRouter:
    router = APIRouter(prefix="/v1")
    token_header = Header(default=None, alias="X-Vault-Token")

    @router.post("/sys/init", response_model=schemas.InitResponse)
    def sys_init(body: schemas.InitRequest):
        keys, root = vault.init(body.secret_shares, body.secret_threshold)
        return schemas.InitResponse(keys=keys, root_token=root)

    @router.post("/sys/unseal", response_model=schemas.SealStatus)
    def sys_unseal(body: schemas.UnsealRequest):
        return vault.unseal(body.key).as_dict()

    @router.get("/sys/seal-status", response_model=schemas.SealStatus)
    def sys_seal_status():
        return vault.status().as_dict()

    @router.post("/sys/seal", response_model=schemas.SealStatus)
    def sys_seal(token: Optional[str] = token_header):
        return vault.seal(token).as_dict()

    @router.put("/sys/policies/{name}", status_code=204)
    def policy_write(name: str, body: schemas.PolicyRequest, token: Optional[str] = token_header):
        try:
            doc = PolicyDoc(name, tuple(PolicyRule(r.path, frozenset(r.capabilities)) for r in body.rules),
                            body.rateLimit)
        except PolicyError as exc:
            raise InvalidRequestError(str(exc)) from None
        vault.write_policy(token, doc)
        return Response(status_code=204)

    @router.get("/sys/policies/{name}")
    def policy_read(name: str, token: Optional[str] = token_header):
        return {"data": vault.read_policy(token, name).as_dict()}

    @router.put("/auth/kubernetes/role/{name}", status_code=204)
    def role_write(name: str, body: schemas.RoleRequest, token: Optional[str] = token_header):
        try:
            role = Role(name, tuple(body.bound_service_account_names), tuple(body.bound_service_account_namespaces),
                        tuple(body.policies), body.ttl)
        except PolicyError as exc:
            raise InvalidRequestError(str(exc)) from None
        vault.write_role(token, role)
        return Response(status_code=204)

    @router.get("/auth/kubernetes/role/{name}")
    def role_read(name: str, token: Optional[str] = token_header):
        return {"data": vault.read_role(token, name).as_dict()}

    @router.post("/auth/kubernetes/login")
    def login(body: schemas.LoginRequest):
        tok = vault.login(body.service_account, body.namespace, body.role)
        lease = 0 if tok.expires_at is None else int(tok.expires_at - tok.issued_at)
        return {"auth": {"client_token": tok.id, "policies": list(tok.policies), "lease_duration": lease,
                         "metadata": tok.meta}}

    @router.post("/auth/token/revoke-self", status_code=204)
    def revoke_self(token: Optional[str] = token_header):
        vault.revoke_token(token)
        return Response(status_code=204)

    @router.post("/sys/tools/create-secrets")
    def create_secrets(body: schemas.CreateSecretsRequest, token: Optional[str] = token_header):
        try:
            files = {name: base64.b64decode(content, validate=True) for name, content in body.files.items()}
        except (binascii.Error, ValueError):
            raise InvalidRequestError("file contents must be base64-encoded") from None
        result = vault.create_secrets_from_files(token, body.namespace, body.service, files, body.mount)
        return {"data": result.as_dict()}

    @router.get("/{mount}/data/{path:path}")
    def kv_get(mount: str, path: str, version: Optional[int] = Query(None, ge=1),
               token: Optional[str] = token_header):
        entry = vault.kv_read(token, mount, path, version)
        return {"data": {"data": entry.data, "metadata": entry.metadata()}}

    @router.post("/{mount}/data/{path:path}")
    def kv_put(mount: str, path: str, body: schemas.KVWriteRequest, token: Optional[str] = token_header):
        version = vault.kv_put(token, mount, path, body.data)
        return {"data": {"version": version}}

    @router.post("/{mount}/destroy/{path:path}", status_code=204)
    def kv_destroy(mount: str, path: str, body: schemas.DestroyRequest, token: Optional[str] = token_header):
        vault.kv_destroy(token, mount, path, body.versions)
        return Response(status_code=204)

    @router.get("/{mount}/metadata/{path:path}")
    def kv_list(mount: str, path: str = "", token: Optional[str] = token_header):
        return {"data": {"keys": vault.kv_list(token, mount, path)}}

    return router


def create_app(settings: ServiceSettings | None = None, *, controller: AdmissionController | None = None,
               vault: Vault | None = None) -> FastAPI:
    """Build the service. Pass ``controller``/``vault`` directly to skip file loading."""
    settings = settings or ServiceSettings()
    if vault is None and settings.vault_addr is None:
        vault = Vault(settings.vault_storage, audit_path=settings.vault_audit_log)
    if controller is None:
        handle = vault
        if settings.vault_addr is not None:
            handle = VaultClient(settings.vault_addr, token=settings.vault_token)
        injector = InjectorConfig(agent_image=settings.agent_image) if settings.agent_image else InjectorConfig()
        controller = AdmissionController.from_paths(
            settings.constraints_dir, settings.state_file, track_admitted=settings.track_admitted,
            vault=handle, injector=injector, fail_open=settings.fail_open)

    app = FastAPI(title="clustergate", version="0.1.0")
    app.state.controller = controller
    app.state.vault = vault

    def require_bearer(authorization: Optional[str] = Header(default=None)) -> None:
        if settings.auth_token and authorization != f"Bearer {settings.auth_token}":
            raise HTTPException(401, "missing or invalid bearer token")

    @app.exception_handler(VaultError)
    async def on_vault_error(request: Request, exc: VaultError):
        return _vault_error(exc)

    @app.get("/healthz", response_class=PlainTextResponse)
    def healthz():
        return "ok"

    @app.post("/validate", response_model=schemas.AdmissionReviewResponse, dependencies=[Depends(require_bearer)])
    async def validate(request: Request):
        review = await _review_from_request(request)
        return response_model(controller.handle_validate(review))

    @app.post("/mutate", response_model=schemas.AdmissionReviewResponse, dependencies=[Depends(require_bearer)])
    async def mutate(request: Request):
        review = await _review_from_request(request)
        # vault calls may block, keep them off the event loop
        return response_model(await run_in_threadpool(controller.handle_mutate, review))

    @app.get("/audit", dependencies=[Depends(require_bearer)])
    def audit_report():
        try:
            report = controller.handle_audit()
        except NoStateError as exc:
            raise HTTPException(409, str(exc)) from None
        return report.as_dict()

    @app.post("/-/reload", dependencies=[Depends(require_bearer)])
    def reload():
        try:
            count = controller.reload()
        except ClusterGateError as exc:
            raise HTTPException(400, f"reload failed, keeping previous constraints: {exc}") from None
        return {"constraints": count}

    if vault is not None:
        app.include_router(build_vault_router(vault))
    return app


def settings_from_env() -> ServiceSettings:
    """Settings from ``CLUSTERGATE_*`` variables, used by ``uvicorn --factory``."""
    env = os.environ.get
    return ServiceSettings(
        constraints_dir=env("CLUSTERGATE_CONSTRAINTS"),
        state_file=env("CLUSTERGATE_STATE"),
        vault_storage=env("CLUSTERGATE_VAULT_STORAGE"),
        vault_addr=env("CLUSTERGATE_VAULT_ADDR"),
        vault_token=env("CLUSTERGATE_VAULT_TOKEN"),
        vault_audit_log=env("CLUSTERGATE_VAULT_AUDIT_LOG"),
        track_admitted=env("CLUSTERGATE_TRACK_ADMITTED", "") == "1",
        fail_open=env("CLUSTERGATE_FAIL_OPEN", "") == "1",
        auth_token=env("CLUSTERGATE_AUTH_TOKEN"),
        agent_image=env("CLUSTERGATE_AGENT_IMAGE"),
    )


def app_from_env() -> FastAPI:
    return create_app(settings_from_env())


__all__ = ["ServiceSettings", "create_app", "decode_patch", "response_model", "app_from_env"]
