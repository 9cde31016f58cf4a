import base64
import copy

import jsonpatch
import pytest

from clustergate.manifest import from_document, to_document
from clustergate.vault import InjectionError, InjectorConfig, PolicyDoc, PolicyRule, Role, inject, injection_patch
from clustergate.vault.inject import split_secret_path

from constraint_cases import container, pod


def pod_doc(name="crabserver", namespace="crab", sa="crabserver", annotations=None, **kw):
    doc = pod(name, namespace, [container(name)], annotations=annotations, **kw)
    doc["spec"]["serviceAccountName"] = sa
    return doc


INJECT = {"vault.inject": "true", "vault.secret-path": "cmsweb/crab/crabserver-secrets"}


@pytest.fixture
def crab_vault(open_vault):
    v, _, root = open_vault
    v.create_secrets_from_files(root, "crab", "crabserver",
                                {"proxy.cert": b"CERT", "key.der": b"\x00\xffbin", "user": b"crab"})
    return v


def test_unannotated_pod_is_identity(crab_vault):
    p = from_document(pod_doc())
    result = inject(p, crab_vault)
    assert not result.injected and result.pod is p and result.files == {}
    assert injection_patch(pod_doc(), result) == []


def test_injection_adds_agent_volume_and_files(crab_vault):
    doc = pod_doc(annotations=INJECT)
    result = inject(from_document(doc), crab_vault)
    assert result.injected
    assert result.files == {"proxy.cert": b"CERT", "key.der": b"\x00\xffbin", "user": b"crab"}
    assert [c.name for c in result.pod.containers] == ["crabserver", "vault-agent"]
    assert result.agent.capabilities_drop == ("ALL",)
    assert any(v.name == "vault-secrets" for v in result.pod.volumes)
    for c in result.pod.containers:
        assert any(m.mount_path == "/vault/secrets" for m in c.volume_mounts)
    assert result.pod.annotations["vault.status"] == "injected"


def test_patch_reproduces_injected_pod(crab_vault):
    doc = pod_doc(annotations=INJECT, volumes=[{"name": "cfg", "emptyDir": {}}])
    doc["spec"]["containers"][0]["volumeMounts"] = [{"name": "cfg", "mountPath": "/etc/cfg"}]
    original = copy.deepcopy(doc)
    result = inject(from_document(doc), crab_vault)
    patched = jsonpatch.apply_patch(doc, injection_patch(doc, result))
    assert doc == original
    assert to_document(from_document(patched)) == to_document(result.pod)


def test_injection_is_not_repeated(crab_vault):
    doc = pod_doc(annotations=INJECT)
    first = inject(from_document(doc), crab_vault)
    second = inject(first.pod, crab_vault)
    assert not second.injected


def test_templates_render_files(crab_vault):
    ann = {**INJECT, "vault.template-client.conf": "user={{ .Data.user }}\nkey={{ .Data.key.der }}"}
    result = inject(from_document(pod_doc(annotations=ann)), crab_vault)
    assert result.files == {"client.conf": b"user=crab\nkey=" + base64.b64encode(b"\x00\xffbin")}


@pytest.mark.parametrize("ann,match", [
    ({"vault.inject": "true"}, "secret-path"),
    ({"vault.inject": "true", "vault.template-x": "{{ .Data.user }}"}, "templates reference"),
    ({**INJECT, "vault.template-x": "{{ .Data.absent }}"}, "missing key"),
    ({**INJECT, "vault.template-x": "{{ .Data.user"}, "line 1, column 1"),
    ({**INJECT, "vault.secret-path": "cmsweb"}, "mount/path"),
    ({**INJECT, "vault.secret-path": "cmsweb/dbs/dbs-secrets"}, "cannot read"),
    ({**INJECT, "vault.role": "other"}, "cannot read"),
])
def test_failures_leave_pod_untouched(crab_vault, ann, match):
    p = from_document(pod_doc(annotations=ann))
    before = to_document(p)
    with pytest.raises(InjectionError, match=match):
        inject(p, crab_vault)
    assert to_document(p) == before


def test_wrong_namespace_denied(crab_vault):
    with pytest.raises(InjectionError, match="cannot read"):
        inject(from_document(pod_doc(namespace="dbs", annotations=INJECT)), crab_vault)


def test_wrong_service_account_denied(crab_vault):
    with pytest.raises(InjectionError):
        inject(from_document(pod_doc(sa="default", annotations=INJECT)), crab_vault)


def test_role_annotation_selects_role(open_vault):
    v, _, root = open_vault
    v.write_policy(root, PolicyDoc("p", (PolicyRule("cmsweb/shared/*", frozenset({"read"})),)))
    v.write_role(root, Role("shared", ("*",), ("crab",), ("p",)))
    v.kv_put(root, "cmsweb", "shared/conf", {"a": "b"})
    ann = {"vault.inject": "true", "vault.role": "shared", "vault.secret-path": "cmsweb/data/shared/conf"}
    result = inject(from_document(pod_doc(sa="anything", annotations=ann)), v)
    assert result.files == {"a": b"b"}


def test_custom_agent_image(crab_vault):
    cfg = InjectorConfig(agent_image="example.org/agent:2")
    result = inject(from_document(pod_doc(annotations=INJECT)), crab_vault, cfg)
    assert result.agent.image == "example.org/agent:2"


@pytest.mark.parametrize("text,expected", [
    ("cmsweb/crab/x", ("cmsweb", "crab/x")),
    ("cmsweb/data/crab/x", ("cmsweb", "crab/x")),
    ("/cmsweb/a/", ("cmsweb", "a")),
])
def test_split_secret_path(text, expected):
    assert split_secret_path(text) == expected
