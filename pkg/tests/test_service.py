import json

import jsonpatch
import pytest
from fastapi.testclient import TestClient

from clustergate.constraints import constraint_from_document
from clustergate.manifest import state_from_document
from clustergate.service import AdmissionController, ServiceSettings, create_app, decode_patch
from clustergate.service.app import settings_from_env
from clustergate.vault import Vault
from clustergate.vault.client import VaultClient
from clustergate.vault import (AuthenticationError, DuplicateShareError, PermissionDenied, SealedError,
                               SecretNotFound)

from constraint_cases import AUDIT_CONSTRAINTS, AUDIT_EXPECTED, AUDIT_STATE, REG, container, deployment, pod
from helpers import review_envelope, unsealed


@pytest.fixture
def cms_app(policies_dir, tmp_path):
    vault = Vault(tmp_path / "vault.db")
    controller = AdmissionController(constraints_dir=policies_dir, vault=vault)
    return TestClient(create_app(controller=controller, vault=vault)), vault


def good_pod(**kw):
    res = {"requests": {"cpu": "250m", "memory": "256Mi"}, "limits": {"cpu": "500m", "memory": "512Mi"}}
    return pod("crabserver", "crab", [container("crabserver", REG + "crabserver:v3", drop=["ALL"], **res)], **kw)


def test_healthz(cms_app):
    client, _ = cms_app
    r = client.get("/healthz")
    assert r.status_code == 200 and r.text == "ok"


def test_validate_admits_and_denies(cms_app):
    client, _ = cms_app
    r = client.post("/validate", json=review_envelope(good_pod()))
    body = r.json()
    assert r.status_code == 200 and body["kind"] == "AdmissionReview"
    assert body["response"] == {"uid": "uid-1", "allowed": True, "status": None, "patchType": None,
                                "patch": None, "warnings": []}

    bad = pod("x", "crab", [container("x", "docker.io/evil:1")])
    resp = client.post("/validate", json=review_envelope(bad, uid="u2")).json()["response"]
    assert resp["uid"] == "u2" and not resp["allowed"]
    assert resp["status"]["code"] == 403
    assert "cmsweb-allowed-repos" in resp["status"]["message"]


def test_warn_constraints_surface_as_warnings(cms_app):
    client, _ = cms_app
    doc = good_pod()
    for key in ("readinessProbe", "livenessProbe"):
        del doc["spec"]["containers"][0][key]
    resp = client.post("/validate", json=review_envelope(doc)).json()["response"]
    assert resp["allowed"] and any("cmsweb-required-probes" in w for w in resp["warnings"])


def test_kube_system_is_exempt(cms_app):
    client, _ = cms_app
    doc = pod("coredns", "kube-system", [container("coredns", "registry.k8s.io/coredns:1.11")])
    assert client.post("/validate", json=review_envelope(doc)).json()["response"]["allowed"]


def test_unparseable_object_denied(cms_app):
    client, _ = cms_app
    doc = {"apiVersion": "v1", "kind": "Pod", "metadata": {"name": "x"}, "spec": {"containers": "nope"}}
    resp = client.post("/validate", json=review_envelope(doc)).json()["response"]
    assert not resp["allowed"] and "cannot parse" in resp["status"]["message"]


@pytest.mark.parametrize("body", [
    {"kind": "AdmissionReview"},
    {"kind": "AdmissionReview", "request": {"uid": "", "operation": "CREATE"}},
    {"kind": "AdmissionReview", "request": {"uid": "a", "operation": "PATCH"}},
    {"kind": "Other", "request": {"uid": "a", "operation": "CREATE"}},
])
def test_malformed_envelope_is_400(cms_app, body):
    client, _ = cms_app
    assert client.post("/validate", json=body).status_code == 400
    assert client.post("/mutate", json=body).status_code == 400


def test_non_json_body_is_400(cms_app):
    client, _ = cms_app
    assert client.post("/validate", content=b"{nope", headers={"content-type": "application/json"}).status_code == 400


def test_internal_errors_fail_closed(policies_dir):
    class Broken(AdmissionController):
        def _validate(self, review):
            raise RuntimeError("boom")

    client = TestClient(create_app(controller=Broken(constraints_dir=policies_dir), vault=None,
                                   settings=ServiceSettings(vault_addr="http://unused")))
    resp = client.post("/validate", json=review_envelope(good_pod())).json()["response"]
    assert not resp["allowed"] and "boom" in resp["status"]["message"]

    lenient = Broken(constraints_dir=policies_dir, fail_open=True)
    client = TestClient(create_app(controller=lenient, settings=ServiceSettings(vault_addr="http://unused")))
    resp = client.post("/validate", json=review_envelope(good_pod())).json()["response"]
    assert resp["allowed"] and resp["warnings"]


def test_mutate_injects_and_patch_applies(cms_app):
    client, vault = cms_app
    _, root = unsealed(vault)
    vault.create_secrets_from_files(root, "crab", "crabserver", {"proxy.cert": b"CERT"})
    doc = good_pod(serviceAccountName="crabserver")
    doc["metadata"]["annotations"] = {"vault.inject": "true", "vault.secret-path": "cmsweb/crab/crabserver-secrets"}
    resp = client.post("/mutate", json=review_envelope(doc)).json()["response"]
    assert resp["allowed"] and resp["patchType"] == "JSONPatch"
    patched = jsonpatch.apply_patch(doc, decode_patch(resp))
    assert [c["name"] for c in patched["spec"]["containers"]] == ["crabserver", "vault-agent"]
    again = client.post("/validate", json=review_envelope(patched)).json()["response"]
    assert again["allowed"], again


def test_mutate_denies_on_vault_failure(cms_app):
    client, vault = cms_app
    doc = good_pod(serviceAccountName="crabserver")
    doc["metadata"]["annotations"] = {"vault.inject": "true", "vault.secret-path": "cmsweb/crab/crabserver-secrets"}
    # vault is still uninitialised
    resp = client.post("/mutate", json=review_envelope(doc)).json()["response"]
    assert not resp["allowed"] and resp["patch"] is None


def test_mutate_passes_through_other_objects(cms_app):
    client, _ = cms_app
    for obj, op in ((good_pod(), "CREATE"), (deployment(), "CREATE"), (good_pod(), "DELETE")):
        resp = client.post("/mutate", json=review_envelope(obj, op)).json()["response"]
        assert resp["allowed"] and resp["patch"] is None


def _audit_controller(**kw):
    return AdmissionController([constraint_from_document(c) for c in AUDIT_CONSTRAINTS],
                               state=state_from_document(AUDIT_STATE), **kw)


def test_audit_endpoint(tmp_path):
    client = TestClient(create_app(controller=_audit_controller(), vault=Vault(tmp_path / "v.db")))
    body = client.get("/audit").json()
    assert body["total"] == 5
    found = {(name, v["kind"], v["namespace"], v["name"])
             for name, items in body["perConstraint"].items() for v in items}
    assert found == AUDIT_EXPECTED


def test_audit_without_state_is_409(cms_app):
    client, _ = cms_app
    assert client.get("/audit").status_code == 409


def test_audit_tracks_admitted_objects(policies_dir, tmp_path):
    controller = AdmissionController(constraints_dir=policies_dir, track_admitted=True)
    client = TestClient(create_app(controller=controller, vault=Vault(tmp_path / "v.db")))
    assert client.get("/audit").json()["total"] == 0
    doc = good_pod()
    for key in ("readinessProbe", "livenessProbe"):
        del doc["spec"]["containers"][0][key]
    client.post("/validate", json=review_envelope(doc))
    body = client.get("/audit").json()
    hit = [name for name, items in body["perConstraint"].items() if items]
    assert hit == ["cmsweb-required-probes"] and body["total"] == 2
    client.post("/validate", json=review_envelope(None, "DELETE", old=doc))
    assert client.get("/audit").json()["total"] == 0


def test_reload(tmp_path, policies_dir):
    d = tmp_path / "policies"
    d.mkdir()
    (d / "repos.yaml").write_text((policies_dir / "allowed-repos.yaml").read_text())
    client = TestClient(create_app(controller=AdmissionController(constraints_dir=d), vault=Vault(tmp_path / "v")))
    assert client.post("/-/reload").json() == {"constraints": 1}
    (d / "ratios.yaml").write_text((policies_dir / "container-ratios.yaml").read_text())
    assert client.post("/-/reload").json() == {"constraints": 2}
    (d / "broken.yaml").write_text("name: x\ntemplate: nosuchtemplate\n")
    r = client.post("/-/reload")
    assert r.status_code == 400 and "keeping previous" in r.json()["detail"]
    bad = pod("x", "crab", [container("x", "docker.io/evil:1")])
    assert not client.post("/validate", json=review_envelope(bad)).json()["response"]["allowed"]


def test_bearer_auth(policies_dir, tmp_path):
    app = create_app(ServiceSettings(constraints_dir=str(policies_dir), vault_storage=str(tmp_path / "v"),
                                     auth_token="s3cret"))
    client = TestClient(app)
    assert client.get("/healthz").status_code == 200
    assert client.post("/validate", json=review_envelope(good_pod())).status_code == 401
    ok = client.post("/validate", json=review_envelope(good_pod()), headers={"Authorization": "Bearer s3cret"})
    assert ok.status_code == 200


def test_settings_from_env(monkeypatch):
    monkeypatch.setenv("CLUSTERGATE_CONSTRAINTS", "/etc/c")
    monkeypatch.setenv("CLUSTERGATE_FAIL_OPEN", "1")
    monkeypatch.setenv("CLUSTERGATE_AGENT_IMAGE", "img:1")
    s = settings_from_env()
    assert (s.constraints_dir, s.fail_open, s.track_admitted, s.agent_image) == ("/etc/c", True, False, "img:1")


# ------------------------------------------------------------------ vault HTTP API


@pytest.fixture
def vault_http(tmp_path):
    vault = Vault(tmp_path / "vault.db")
    app = create_app(controller=AdmissionController(), vault=vault)
    return TestClient(app), vault


def test_vault_http_flow(vault_http):
    http, _ = vault_http
    assert http.get("/v1/sys/seal-status").json()["initialized"] is False
    init = http.post("/v1/sys/init", json={"secret_shares": 3, "secret_threshold": 2}).json()
    keys, root = init["keys"], init["root_token"]
    assert http.post("/v1/sys/unseal", json={"key": keys[0]}).json()["progress"] == 1
    r = http.post("/v1/sys/unseal", json={"key": keys[0]})
    assert r.status_code == 400 and r.json()["type"] == "duplicate_share"
    assert http.post("/v1/sys/unseal", json={"key": keys[1]}).json()["sealed"] is False

    h = {"X-Vault-Token": root}
    assert http.post("/v1/cmsweb/data/crab/s", json={"data": {"a": "1"}}, headers=h).json() == {"data": {"version": 1}}
    got = http.get("/v1/cmsweb/data/crab/s", headers=h).json()["data"]
    assert got["data"] == {"a": "1"} and got["metadata"]["version"] == 1
    assert http.get("/v1/cmsweb/metadata/crab", headers=h).json() == {"data": {"keys": ["s"]}}

    r = http.get("/v1/cmsweb/data/crab/s")
    assert r.status_code == 403 and r.json() == {"errors": [r.json()["errors"][0]], "type": "permission_denied"}
    assert http.get("/v1/cmsweb/data/none", headers=h).json()["type"] == "not_found"

    r = http.put("/v1/sys/policies/p", json={"rules": [{"path": "cmsweb/crab/*", "capabilities": ["sudo"]}]},
                 headers=h)
    assert r.status_code == 400 and r.json()["type"] == "invalid_request"

    assert http.post("/v1/cmsweb/destroy/crab/s", json={"versions": [1]}, headers=h).status_code == 204
    assert http.get("/v1/cmsweb/data/crab/s", headers=h).json()["type"] == "destroyed"
    assert http.post("/v1/sys/seal", headers=h).json()["sealed"] is True
    r = http.get("/v1/cmsweb/data/crab/s", headers=h)
    assert r.status_code == 503 and r.json()["type"] == "sealed"


def test_vault_client_round_trip(vault_http):
    http, _ = vault_http
    client = VaultClient(http)
    keys, root = client.init(3, 2)
    with pytest.raises(DuplicateShareError):
        client.unseal(keys[0]) and client.unseal(keys[0])
    assert client.unseal(keys[1]).sealed is False
    client.token = root
    result = client.create_secrets_from_files(root, "crab", "crabserver", {"k.der": b"\x00\xff", "u": b"crab"})
    assert result.binary_keys == ("k.der",) and result.version == 1
    tok = client.login("crabserver", "crab")
    assert tok.policies == ("crab-crabserver-read",)
    assert client.kv_get(tok.id, "cmsweb", "crab/crabserver-secrets")["u"] == "crab"
    with pytest.raises(PermissionDenied):
        client.kv_put(tok.id, "cmsweb", "crab/crabserver-secrets", {"a": "b"})
    with pytest.raises(AuthenticationError):
        client.login("crabserver", "dbs")
    with pytest.raises(SecretNotFound):
        client.kv_get(root, "cmsweb", "nothing")
    client.seal(root)
    with pytest.raises(SealedError):
        client.kv_get(root, "cmsweb", "crab/crabserver-secrets")


def test_revoke_self(vault_http):
    http, vault = vault_http
    _, root = unsealed(vault)
    vault.create_secrets_from_files(root, "crab", "crabserver", {"a": b"b"})
    tok = http.post("/v1/auth/kubernetes/login", json={"service_account": "crabserver", "namespace": "crab"}).json()
    h = {"X-Vault-Token": tok["auth"]["client_token"]}
    assert tok["auth"]["lease_duration"] > 0
    assert http.post("/v1/auth/token/revoke-self", headers=h).status_code == 204
    assert http.get("/v1/cmsweb/data/crab/crabserver-secrets", headers=h).status_code == 403


def test_create_secrets_rejects_bad_base64(vault_http):
    http, vault = vault_http
    _, root = unsealed(vault)
    r = http.post("/v1/sys/tools/create-secrets", headers={"X-Vault-Token": root},
                  json={"namespace": "crab", "service": "s", "files": {"a": "!!notbase64"}})
    assert r.status_code == 400 and r.json()["type"] == "invalid_request"


def test_unreachable_vault_maps_to_vault_error():
    from clustergate.vault import VaultError
    client = VaultClient("http://127.0.0.1:9", timeout=0.5)
    with pytest.raises(VaultError, match="unreachable"):
        client.status()


def test_policy_and_role_over_http(vault_http):
    http, vault = vault_http
    _, root = unsealed(vault)
    h = {"X-Vault-Token": root}
    rules = {"rules": [{"path": "cmsweb/dbs/*", "capabilities": ["read"]}], "rateLimit": "10/min"}
    assert http.put("/v1/sys/policies/dbs-read", json=rules, headers=h).status_code == 204
    got = http.get("/v1/sys/policies/dbs-read", headers=h).json()["data"]
    assert got["rules"] == [{"path": "cmsweb/dbs/*", "capabilities": ["read"]}]
    role = {"bound_service_account_names": ["dbs"], "bound_service_account_namespaces": ["dbs"],
            "policies": ["dbs-read"], "ttl": 60}
    assert http.put("/v1/auth/kubernetes/role/dbs", json=role, headers=h).status_code == 204
    assert http.get("/v1/auth/kubernetes/role/dbs", headers=h).json()["data"]["policies"] == ["dbs-read"]
    assert json.loads(json.dumps(got))
