"""Pydantic request/response models for the HTTP API."""
from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class GroupVersionKind(BaseModel):
    group: str = ""
    version: str = ""
    kind: str = ""


class AdmissionRequestModel(BaseModel):
    model_config = ConfigDict(extra="ignore")

    uid: str = Field(min_length=1)
    kind: Optional[GroupVersionKind] = None
    operation: Literal["CREATE", "UPDATE", "DELETE"]
    namespace: Optional[str] = None
    object: Optional[dict[str, Any]] = None
    oldObject: Optional[dict[str, Any]] = None


class AdmissionReviewModel(BaseModel):
    model_config = ConfigDict(extra="ignore")

    apiVersion: str = "admission.k8s.io/v1"
    kind: Literal["AdmissionReview"] = "AdmissionReview"
    request: AdmissionRequestModel


class StatusModel(BaseModel):
    message: str = ""
    code: Optional[int] = None


class AdmissionResponseModel(BaseModel):
    uid: str
    allowed: bool
    status: Optional[StatusModel] = None
    patchType: Optional[Literal["JSONPatch"]] = None
    patch: Optional[str] = None
    warnings: list[str] = []


class AdmissionReviewResponse(BaseModel):
    apiVersion: str = "admission.k8s.io/v1"
    kind: str = "AdmissionReview"
    response: AdmissionResponseModel


class InitRequest(BaseModel):
    secret_shares: int = Field(5, ge=1, le=255)
    secret_threshold: int = Field(3, ge=1, le=255)


class InitResponse(BaseModel):
    keys: list[str]
    root_token: str


class UnsealRequest(BaseModel):
    key: str


class SealStatus(BaseModel):
    initialized: bool
    sealed: bool
    n: int
    t: int
    progress: int


class LoginRequest(BaseModel):
    service_account: str = Field(min_length=1)
    namespace: str = Field(min_length=1)
    role: Optional[str] = None


class KVWriteRequest(BaseModel):
    data: dict[str, str]


class DestroyRequest(BaseModel):
    versions: list[int]


class PolicyRuleModel(BaseModel):
    path: str
    capabilities: list[str]


class PolicyRequest(BaseModel):
    rules: list[PolicyRuleModel]
    rateLimit: Optional[str] = None


class RoleRequest(BaseModel):
    bound_service_account_names: list[str]
    bound_service_account_namespaces: list[str]
    policies: list[str] = []
    ttl: int = 3600


class CreateSecretsRequest(BaseModel):
    namespace: str
    service: str
    files: dict[str, str] = Field(description="file name to base64-encoded content")
    mount: str = "cmsweb"
