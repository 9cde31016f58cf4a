"""Shared test helpers."""
from clustergate.vault import Vault


class FakeClock:
    def __init__(self, start: float = 1_700_000_000.0):
        self.now = start

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds


def unsealed(vault: Vault, shares: int = 5, threshold: int = 3):
    keys, root = vault.init(shares, threshold)
    for k in keys[:threshold]:
        vault.unseal(k)
    return keys, root


def review_envelope(obj: dict | None, operation: str = "CREATE", uid: str = "uid-1", old: dict | None = None) -> dict:
    """An AdmissionReview v1 request as the API server would send it."""
    meta = (obj or old or {}).get("metadata", {})
    request = {"uid": uid, "operation": operation, "namespace": meta.get("namespace"),
               "kind": {"group": "", "version": "v1", "kind": (obj or old or {}).get("kind", "")}}
    if obj is not None:
        request["object"] = obj
    if old is not None:
        request["oldObject"] = old
    return {"apiVersion": "admission.k8s.io/v1", "kind": "AdmissionReview", "request": request}
