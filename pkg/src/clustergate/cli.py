"""Operator command line.

Exit codes: 0 success or allow, 1 bad input, 2 usage error, 3 traffic denied,
4 validation denied, 5 vault or auth error.

Options resolve as flag, then ``CLUSTERGATE_*`` environment variable, then
the config file named by ``--config``.
"""
from __future__ import annotations

import json
import os
import sys
from pathlib import Path
from typing import Any, Callable, Iterable

import click
import yaml

from . import __version__
from .constraints import Operation, ReviewRequest, load_constraints, review
from .constraints import audit as run_audit
from .errors import ClusterGateError, UnknownKindError
from .manifest import load_documents, format_for_path, from_document, load_state, read_manifests, to_document
from .model import NetworkPolicy, Pod
from .netpol import TrafficQuery, evaluate, parse_endpoint
from .vault import InjectorConfig, PolicyDoc, PolicyError, Role, VaultError, inject, read_secret_dir
from .vault.client import VaultClient

EXIT_INPUT = 1
EXIT_DENIED = 3
EXIT_INVALID = 4
EXIT_VAULT = 5

DEFAULT_ADDR = "127.0.0.1:8200"

# config file key -> option name
CONFIG_KEYS = {
    "stateFile": "state",
    "constraintsDir": "constraints",
    "vaultAddr": "vault_addr",
    "vaultTokenFile": "vault_token_file",
    "outputFormat": "fmt",
    "addr": "addr",
}


def make_vault_client(addr: str, token: str | None) -> VaultClient:
    """Factory for the vault client; tests replace it to talk to an in-process app."""
    if "://" not in addr:
        addr = f"http://{addr}"
    return VaultClient(addr, token)


def _fail(code: int, message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _defaults_for(command: click.Command, flat: dict[str, Any]) -> dict[str, Any]:
    out: dict[str, Any] = {p.name: flat[p.name] for p in command.params if p.name in flat}
    if isinstance(command, click.Group):
        for name, sub in command.commands.items():
            out[name] = _defaults_for(sub, flat)
    return out


def read_config(path: str | Path) -> dict[str, Any]:
    doc = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(doc, dict):
        raise click.BadParameter("config file must hold a mapping", param_hint="--config")
    unknown = sorted(set(doc) - set(CONFIG_KEYS))
    if unknown:
        raise click.BadParameter(f"unknown config keys {unknown}", param_hint="--config")
    return {CONFIG_KEYS[k]: v for k, v in doc.items()}


def _emit_json(obj: Any) -> None:
    click.echo(json.dumps(obj, sort_keys=True))


def _table(rows: Iterable[Iterable[Any]], header: Iterable[str]) -> str:
    rows = [[str(c) for c in r] for r in rows]
    header = list(header)
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.upper().ljust(w) for h, w in zip(header, widths)).rstrip()]
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    return "\n".join(lines)


def _guard(fn: Callable) -> Callable:
    """Map library errors to exit codes."""

    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except VaultError as exc:
            _fail(EXIT_VAULT, str(exc))
        except (ClusterGateError, PolicyError, OSError, ValueError) as exc:
            _fail(EXIT_INPUT, str(exc))

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


format_option = click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table",
                             show_default=True, envvar="CLUSTERGATE_FORMAT", help="Output format.")
state_option = click.option("--state", type=click.Path(dir_okay=False), envvar="CLUSTERGATE_STATE",
                            help="ClusterState fixture (JSON).")
constraints_option = click.option("--constraints", type=click.Path(file_okay=False), envvar="CLUSTERGATE_CONSTRAINTS",
                                  help="Directory of constraint files.")
vault_addr_option = click.option("--vault-addr", envvar="CLUSTERGATE_VAULT_ADDR", default=DEFAULT_ADDR,
                                 show_default=True, help="Vault API address.")
token_file_option = click.option("--vault-token-file", type=click.Path(dir_okay=False),
                                 envvar="CLUSTERGATE_VAULT_TOKEN_FILE", help="File holding the vault token.")


def _require(value: Any, flag: str) -> Any:
    if value is None:
        raise click.UsageError(f"missing option {flag}")
    return value


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="clustergate")
@click.option("--config", type=click.Path(dir_okay=False, exists=True), envvar="CLUSTERGATE_CONFIG",
              help="YAML/JSON config file; flags and environment take precedence.")
@click.pass_context
def main(ctx: click.Context, config: str | None) -> None:
    """Cluster security policy engine: network policies, admission constraints and a secrets vault."""
    if config:
        ctx.default_map = _defaults_for(ctx.command, read_config(config))


# ------------------------------------------------------------------ simulate


@main.command()
@state_option
@click.option("--from", "src", required=True, help="Source: ns/pod or IPv4 address.")
@click.option("--to", "dst", required=True, help="Destination: ns/pod or IPv4 address.")
@click.option("--port", type=click.IntRange(1, 65535), required=True)
@click.option("--protocol", type=click.Choice(["tcp", "udp"], case_sensitive=False), default="tcp", show_default=True)
@click.option("--explain", is_flag=True, help="Print the policy trace.")
@format_option
@_guard
def simulate(state, src, dst, port, protocol, explain, fmt):
    """Decide whether one connection is allowed by the network policies."""
    cluster = load_state(_require(state, "--state"))
    query = TrafficQuery(parse_endpoint(src), parse_endpoint(dst), port, protocol.upper())
    verdict = evaluate(cluster, query)
    if fmt == "json":
        out = verdict.as_dict()
        if not explain:
            out.pop("trace")
        _emit_json(out)
    else:
        word = "ALLOW" if verdict.allowed else "DENY"
        click.echo(f"{word} {src} -> {dst} {protocol.lower()}/{port} "
                   f"(egress {'allowed' if verdict.egress_allowed else 'denied'}, "
                   f"ingress {'allowed' if verdict.ingress_allowed else 'denied'})")
        if explain:
            rows = [(t.direction.value, t.policy, "-" if t.rule_index < 0 else t.rule_index,
                     "yes" if t.matched else "no") for t in verdict.trace]
            click.echo(_table(rows, ["direction", "policy", "rule", "matched"]) if rows
                       else "no policy selects either endpoint")
    sys.exit(0 if verdict.allowed else EXIT_DENIED)


# ------------------------------------------------------------------ validate / audit


@main.command()
@click.option("-f", "--file", "file", type=click.Path(dir_okay=False, exists=True), required=True,
              help="Manifest file (one or more documents).")
@constraints_option
@_guard
def validate(file, constraints):
    """Review objects as if created; prints violations as JSON lines."""
    loaded = load_constraints(_require(constraints, "--constraints"))
    denied = False
    for obj in read_manifests(file):
        if isinstance(obj, NetworkPolicy):
            continue
        decision = review(ReviewRequest(Operation.CREATE, obj), loaded)
        denied = denied or not decision.allowed
        for v in decision.violations:
            _emit_json(v.as_dict())
    sys.exit(EXIT_INVALID if denied else 0)


@main.command()
@state_option
@constraints_option
@format_option
@_guard
def audit(state, constraints, fmt):
    """Report every constraint violation in a cluster state."""
    report = run_audit(load_state(_require(state, "--state")), load_constraints(_require(constraints, "--constraints")))
    if fmt == "json":
        _emit_json(report.as_dict())
        return
    rows = [(v.constraint_name, v.enforcement_action.value, v.kind, f"{v.namespace}/{v.name}".lstrip("/"), v.message)
            for v in report.violations()]
    if rows:
        click.echo(_table(rows, ["constraint", "action", "kind", "object", "message"]))
    click.echo(f"total: {report.total}")


# ------------------------------------------------------------------ serve


def _split_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not port.isdigit():
        raise click.BadParameter(f"expected host:port, got {addr!r}", param_hint="--addr")
    return host or "0.0.0.0", int(port)


def _read_token(path: str | None) -> str | None:
    if path is None:
        return None
    return Path(path).read_text().strip() or None


@main.command()
@click.option("--addr", default="0.0.0.0:8443", show_default=True, envvar="CLUSTERGATE_ADDR", help="Listen host:port.")
@constraints_option
@state_option
@click.option("--vault-addr", envvar="CLUSTERGATE_VAULT_ADDR", help="Remote vault; default serves an embedded one.")
@token_file_option
@click.option("--vault-storage", type=click.Path(dir_okay=False), envvar="CLUSTERGATE_VAULT_STORAGE",
              help="Storage file for the embedded vault (in memory when omitted).")
@click.option("--vault-audit-log", type=click.Path(dir_okay=False), envvar="CLUSTERGATE_VAULT_AUDIT_LOG")
@click.option("--tls-cert", type=click.Path(dir_okay=False, exists=True), envvar="CLUSTERGATE_TLS_CERT")
@click.option("--tls-key", type=click.Path(dir_okay=False, exists=True), envvar="CLUSTERGATE_TLS_KEY")
@click.option("--fail-open", is_flag=True, envvar="CLUSTERGATE_FAIL_OPEN", help="Admit on internal errors (lab use).")
@click.option("--track-admitted", is_flag=True, envvar="CLUSTERGATE_TRACK_ADMITTED",
              help="Audit objects admitted since startup.")
@click.option("--auth-token", envvar="CLUSTERGATE_AUTH_TOKEN", help="Shared bearer token for webhook callers.")
@click.option("--agent-image", envvar="CLUSTERGATE_AGENT_IMAGE", help="Override the agent sidecar image.")
@_guard
def serve(addr, constraints, state, vault_addr, vault_token_file, vault_storage, vault_audit_log, tls_cert, tls_key,
          fail_open, track_admitted, auth_token, agent_image):
    """Run the admission webhook and vault HTTP service."""
    import uvicorn

    from .service.app import ServiceSettings, create_app

    if bool(tls_cert) != bool(tls_key):
        raise click.UsageError("--tls-cert and --tls-key must be given together")
    host, port = _split_addr(addr)
    settings = ServiceSettings(
        constraints_dir=constraints, state_file=state, vault_storage=vault_storage, vault_addr=vault_addr,
        vault_token=_read_token(vault_token_file), vault_audit_log=vault_audit_log, track_admitted=track_admitted,
        fail_open=fail_open, auth_token=auth_token, agent_image=agent_image)
    uvicorn.run(create_app(settings), host=host, port=port, ssl_certfile=tls_cert, ssl_keyfile=tls_key)


# ------------------------------------------------------------------ vault


def _client(ctx: click.Context, need_token: bool = False) -> VaultClient:
    opts = ctx.find_root().obj or {}
    token = _read_token(opts.get("vault_token_file")) or _env_token()
    if need_token and not token:
        _fail(EXIT_VAULT, "no vault token; use --vault-token-file or CLUSTERGATE_VAULT_TOKEN")
    return make_vault_client(opts.get("vault_addr") or DEFAULT_ADDR, token)


def _env_token() -> str | None:
    return os.environ.get("CLUSTERGATE_VAULT_TOKEN") or None


@main.group()
@vault_addr_option
@token_file_option
@format_option
@click.pass_context
def vault(ctx, vault_addr, vault_token_file, fmt):
    """Vault administration over its HTTP API."""
    ctx.find_root().obj = {"vault_addr": vault_addr, "vault_token_file": vault_token_file, "fmt": fmt}


def _fmt(ctx: click.Context) -> str:
    return (ctx.find_root().obj or {}).get("fmt", "table")


def _status_line(s) -> str:
    if not s.initialized:
        return "initialized: false"
    return f"initialized: true\nsealed: {str(s.sealed).lower()}\nthreshold: {s.threshold}/{s.shares}\nprogress: {s.progress}"


@vault.command("init")
@click.option("--shares", type=click.IntRange(1, 255), default=5, show_default=True)
@click.option("--threshold", type=click.IntRange(1, 255), default=3, show_default=True)
@click.pass_context
@_guard
def vault_init(ctx, shares, threshold):
    """Initialize the vault; prints key shares and the root token once."""
    if threshold > shares:
        raise click.UsageError("--threshold cannot exceed --shares")
    keys, root = _client(ctx).init(shares, threshold)
    if _fmt(ctx) == "json":
        _emit_json({"keys": keys, "root_token": root})
        return
    for i, k in enumerate(keys, 1):
        click.echo(f"Unseal Key {i}: {k}")
    click.echo(f"Root Token: {root}")


@vault.command("unseal")
@click.pass_context
@_guard
def vault_unseal(ctx):
    """Submit key shares read from standard input, one per line."""
    shares = [line.strip() for line in click.get_text_stream("stdin") if line.strip()]
    if not shares:
        raise click.UsageError("no key shares on standard input")
    client = _client(ctx)
    state = None
    for share in shares:
        state = client.unseal(share)
        if not state.sealed:
            break
    if _fmt(ctx) == "json":
        _emit_json(state.as_dict())
    else:
        click.echo(_status_line(state))


@vault.command("status")
@click.pass_context
@_guard
def vault_status(ctx):
    """Show seal state; exits 5 unless initialized and unsealed."""
    state = _client(ctx).status()
    if _fmt(ctx) == "json":
        _emit_json(state.as_dict())
    else:
        click.echo(_status_line(state))
    if not state.initialized or state.sealed:
        sys.exit(EXIT_VAULT)


def _mount_path(text: str) -> tuple[str, str]:
    mount, _, path = text.strip("/").partition("/")
    if not mount or not path:
        raise click.BadParameter(f"expected mount/path, got {text!r}")
    return mount, path


@vault.group("kv")
def vault_kv():
    """Versioned key-value secrets."""


@vault_kv.command("put")
@click.argument("path")
@click.argument("pairs", nargs=-1, required=True)
@click.pass_context
@_guard
def kv_put(ctx, path, pairs):
    """Write KEY=VALUE pairs (KEY=@file reads the value from a file) as a new version."""
    data = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise click.BadParameter(f"expected KEY=VALUE, got {pair!r}")
        data[key] = Path(value[1:]).read_text() if value.startswith("@") else value
    version = _client(ctx, need_token=True).kv_put(None, *_mount_path(path), data)
    if _fmt(ctx) == "json":
        _emit_json({"version": version})
    else:
        click.echo(f"version: {version}")


@vault_kv.command("get")
@click.argument("path")
@click.option("--version", type=click.IntRange(min=1))
@click.pass_context
@_guard
def kv_get(ctx, path, version):
    """Read the latest or a specific version of a secret."""
    data = _client(ctx, need_token=True).kv_get(None, *_mount_path(path), version)
    if _fmt(ctx) == "json":
        _emit_json(data)
    else:
        click.echo(_table(sorted(data.items()), ["key", "value"]))


@vault.group("policy")
def vault_policy():
    """ACL policies."""


@vault_policy.command("write")
@click.argument("name")
@click.argument("file", type=click.Path(dir_okay=False, exists=True))
@click.pass_context
@_guard
def policy_write(ctx, name, file):
    """Create or replace a policy from a JSON/YAML file with a ``rules`` list."""
    docs = load_documents(Path(file).read_bytes(), format_for_path(file))
    if len(docs) != 1 or not isinstance(docs[0], dict):
        raise click.BadParameter("policy file must hold one mapping", param_hint="FILE")
    _client(ctx, need_token=True).write_policy(None, PolicyDoc.from_dict(docs[0], name))
    click.echo(f"policy {name} written")


@vault.group("role")
def vault_role():
    """Kubernetes auth roles."""


@vault_role.command("write")
@click.argument("name")
@click.option("--service-account", "service_accounts", multiple=True, required=True)
@click.option("--namespace", "namespaces", multiple=True, required=True)
@click.option("--policy", "policies", multiple=True)
@click.option("--ttl", type=click.IntRange(min=1), default=3600, show_default=True)
@click.pass_context
@_guard
def role_write(ctx, name, service_accounts, namespaces, policies, ttl):
    """Bind service accounts in namespaces to policies."""
    _client(ctx, need_token=True).write_role(None, Role(name, service_accounts, namespaces, policies, ttl))
    click.echo(f"role {name} written")


@vault.command("login")
@click.option("--service-account", required=True)
@click.option("--namespace", required=True)
@click.option("--role")
@click.pass_context
@_guard
def vault_login(ctx, service_account, namespace, role):
    """Exchange a service account identity for a token."""
    tok = _client(ctx).login(service_account, namespace, role)
    if _fmt(ctx) == "json":
        _emit_json({"token": tok.id, "policies": list(tok.policies), "expires_at": tok.expires_at})
    else:
        click.echo(f"token: {tok.id}\npolicies: {', '.join(tok.policies)}")


@vault.command("create-secrets")
@click.option("--namespace", required=True)
@click.option("--service", required=True)
@click.option("--dir", "directory", type=click.Path(file_okay=False, exists=True), required=True)
@click.option("--mount", default="cmsweb", show_default=True)
@click.pass_context
@_guard
def create_secrets(ctx, namespace, service, directory, mount):
    """Store a directory of files as <service>-secrets with a read policy and role."""
    result = _client(ctx, need_token=True).create_secrets_from_files(
        None, namespace, service, read_secret_dir(directory), mount)
    if _fmt(ctx) == "json":
        _emit_json(result.as_dict())
    else:
        click.echo(f"secret: {result.secret_path} (version {result.version})\n"
                   f"policy: {result.policy_name}\nrole: {result.role_name}")


# ------------------------------------------------------------------ inject


@main.command("inject")
@click.option("-f", "--file", "file", type=click.Path(dir_okay=False, exists=True), required=True,
              help="Pod manifest.")
@click.option("--out", type=click.Path(file_okay=False), help="Directory to write rendered secret files into.")
@vault_addr_option
@click.option("--agent-image", help="Override the agent sidecar image.")
@_guard
def inject_cmd(file, out, vault_addr, agent_image):
    """Dry-run sidecar injection; prints the mutated pod as JSON."""
    docs = load_documents(Path(file).read_bytes(), format_for_path(file))
    if len(docs) != 1:
        raise click.BadParameter("expected exactly one pod document", param_hint="-f")
    try:
        pod = from_document(docs[0])
    except UnknownKindError as exc:
        raise click.BadParameter(str(exc), param_hint="-f") from None
    if not isinstance(pod, Pod):
        raise click.BadParameter(f"expected a Pod, got {pod.kind}", param_hint="-f")
    config = InjectorConfig(agent_image=agent_image) if agent_image else InjectorConfig()
    result = inject(pod, make_vault_client(vault_addr, None), config)
    if out is not None:
        target = Path(out)
        target.mkdir(parents=True, exist_ok=True)
        for name, content in sorted(result.files.items()):
            (target / name).write_bytes(content)
    _emit_json(to_document(result.pod))


def run(argv: list[str] | None = None) -> int:
    """Run the CLI and return its exit code instead of exiting."""
    try:
        main.main(args=argv, prog_name="clustergate", standalone_mode=True)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else (0 if exc.code is None else 1)
    return 0


__all__ = ["main", "run", "make_vault_client"]
