"""Annotation-driven sidecar injection.

A pod opts in with ``vault.inject: "true"``. The injector logs in as the pod's
service account, reads the annotated secret, renders the files the agent will
write, and adds an agent container plus an in-memory volume mounted at
``/vault/secrets``. Nothing is mutated unless every step succeeds.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Mapping, Protocol

from ..manifest import container_document
from ..model import Container, Pod, Volume, VolumeMount
from ..quantity import parse_quantity
from .acl import split_path
from .core import BINARY_PREFIX, decode_secret_files
from .errors import VaultError
from .templates import TemplateError, render_template

ANNOTATION_INJECT = "vault.inject"
ANNOTATION_ROLE = "vault.role"
ANNOTATION_SECRET_PATH = "vault.secret-path"
ANNOTATION_TEMPLATE_PREFIX = "vault.template-"
ANNOTATION_STATUS = "vault.status"


class InjectionError(VaultError):
    pass


class VaultHandle(Protocol):
    def login(self, service_account: str, namespace: str, role: str | None = None) -> Any: ...

    def kv_get(self, token: str, mount: str, path: str, version: int | None = None) -> dict[str, str]: ...


@dataclass(frozen=True)
class InjectorConfig:
    agent_image: str = "registry.cern.ch/cmsweb/vault-agent:1.15"
    agent_name: str = "vault-agent"
    volume_name: str = "vault-secrets"
    mount_path: str = "/vault/secrets"
    agent_requests: dict = field(default_factory=lambda: {"cpu": "50m", "memory": "64Mi"})
    agent_limits: dict = field(default_factory=lambda: {"cpu": "250m", "memory": "128Mi"})

    def agent_container(self) -> Container:
        probe = {"exec": {"command": ["/bin/sh", "-c", f"test -d {self.mount_path}"]}, "periodSeconds": 10}
        return Container(
            name=self.agent_name,
            image=self.agent_image,
            requests={k: parse_quantity(v, k) for k, v in self.agent_requests.items()},
            limits={k: parse_quantity(v, k) for k, v in self.agent_limits.items()},
            readiness_probe=probe,
            liveness_probe=probe,
            capabilities_drop=("ALL",),
            volume_mounts=(VolumeMount(self.volume_name, self.mount_path),),
        )


@dataclass(frozen=True)
class InjectionResult:
    pod: Pod
    files: dict[str, bytes]
    injected: bool

    @property
    def agent(self) -> Container | None:
        return self.pod.containers[-1] if self.injected else None


def wants_injection(pod: Pod) -> bool:
    return pod.annotations.get(ANNOTATION_INJECT, "").lower() == "true" \
        and pod.annotations.get(ANNOTATION_STATUS) != "injected"


def split_secret_path(text: str) -> tuple[str, str]:
    segs = split_path(text)
    if len(segs) > 2 and segs[1] == "data":
        segs = [segs[0], *segs[2:]]  # kv-v2 API form mount/data/path
    if len(segs) < 2:
        raise InjectionError(f"secret path {text!r} must be mount/path")
    return segs[0], "/".join(segs[1:])


def _template_data(data: Mapping[str, str]) -> dict[str, str]:
    # binary entries are exposed to templates under their plain key, still base64
    return {k[len(BINARY_PREFIX):] if k.startswith(BINARY_PREFIX) else k: v for k, v in data.items()}


def inject(pod: Pod, vault: VaultHandle, config: InjectorConfig = InjectorConfig()) -> InjectionResult:
    if not wants_injection(pod):
        return InjectionResult(pod, {}, False)
    annotations = pod.annotations
    templates = {k[len(ANNOTATION_TEMPLATE_PREFIX):]: v for k, v in sorted(annotations.items())
                 if k.startswith(ANNOTATION_TEMPLATE_PREFIX)}
    secret_path = annotations.get(ANNOTATION_SECRET_PATH)
    if not secret_path:
        what = "templates reference" if templates else "injection requires"
        raise InjectionError(f"{what} a secret but annotation {ANNOTATION_SECRET_PATH} is missing")
    if any(not name or "/" in name for name in templates):
        raise InjectionError("template annotation names must be non-empty file names")
    mount, path = split_secret_path(secret_path)
    try:
        token = vault.login(pod.service_account, pod.namespace, annotations.get(ANNOTATION_ROLE) or None)
        data = vault.kv_get(token.id, mount, path)
    except VaultError as exc:
        raise InjectionError(f"cannot read {secret_path} for {pod.namespace}/{pod.service_account}: {exc}") from exc

    if templates:
        tdata = _template_data(data)
        try:
            files = {name: render_template(t, tdata).encode("utf-8") for name, t in templates.items()}
        except TemplateError as exc:
            raise InjectionError(f"template rendering failed: {exc}") from exc
    else:
        files = decode_secret_files(data)

    shared = VolumeMount(config.volume_name, config.mount_path)
    app_containers = tuple(
        c if shared in c.volume_mounts else dataclasses.replace(c, volume_mounts=c.volume_mounts + (shared,))
        for c in pod.containers
    )
    mutated = dataclasses.replace(
        pod,
        containers=app_containers + (config.agent_container(),),
        volumes=pod.volumes + (Volume(config.volume_name, "Memory"),),
        annotations={**annotations, ANNOTATION_STATUS: "injected"},
    )
    return InjectionResult(mutated, files, True)


def _escape(token: str) -> str:
    return token.replace("~", "~0").replace("/", "~1")


def injection_patch(document: Mapping[str, Any], result: InjectionResult,
                    config: InjectorConfig = InjectorConfig()) -> list[dict]:
    """JSON Patch turning the submitted pod document into the injected pod."""
    if not result.injected:
        return []
    spec = document.get("spec") or {}
    ops: list[dict] = []
    for i, c in enumerate(spec.get("containers") or []):
        mounts = c.get("volumeMounts")
        entry = {"name": config.volume_name, "mountPath": config.mount_path}
        if mounts is None:
            ops.append({"op": "add", "path": f"/spec/containers/{i}/volumeMounts", "value": [entry]})
        elif entry not in mounts:
            ops.append({"op": "add", "path": f"/spec/containers/{i}/volumeMounts/-", "value": entry})
    ops.append({"op": "add", "path": "/spec/containers/-", "value": container_document(result.agent)})
    volume = {"name": config.volume_name, "emptyDir": {"medium": "Memory"}}
    if spec.get("volumes") is None:
        ops.append({"op": "add", "path": "/spec/volumes", "value": [volume]})
    else:
        ops.append({"op": "add", "path": "/spec/volumes/-", "value": volume})
    ops.append({"op": "add", "path": f"/metadata/annotations/{_escape(ANNOTATION_STATUS)}", "value": "injected"})
    return ops
