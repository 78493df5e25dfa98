"""Run configuration: one YAML document plus flag overrides; env only for credentials."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .backends import BackendConfig

GENERATION_ROLES = ("rec", "rep", "reason")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    corpus: Path | None = None
    kb: Path | None = None
    out: Path = Path("out")
    concurrency: int = 1
    seed: int = 0
    language: str = "en"
    gen_temperature: float = 0.0
    backends: dict[str, BackendConfig] = field(default_factory=dict)
    roles: dict[str, object] = field(default_factory=dict)

    def backend_for(self, role: str) -> BackendConfig:
        backend_id = self.roles.get(role)
        if not isinstance(backend_id, str):
            raise ConfigError(f"role {role!r} is not configured")
        if backend_id not in self.backends:
            raise ConfigError(f"role {role!r} points at unknown backend {backend_id!r}")
        return self.backends[backend_id]

    def judge_backends(self) -> list[BackendConfig]:
        judges = self.roles.get("judges", [])
        if not isinstance(judges, list) or not judges:
            raise ConfigError("no judge backends configured under roles.judges")
        missing = [j for j in judges if j not in self.backends]
        if missing:
            raise ConfigError(f"unknown judge backends: {missing}")
        return [self.backends[j] for j in judges]

    def validate_paths(self, *, need_corpus: bool = False, need_kb: bool = False) -> None:
        if need_corpus and (self.corpus is None or not self.corpus.exists()):
            raise ConfigError(f"corpus path does not exist: {self.corpus}")
        if need_kb and (self.kb is None or not self.kb.exists()):
            raise ConfigError(f"kb path does not exist: {self.kb}")


def default_credential_env(backend_id: str) -> str:
    return re.sub(r"[^A-Z0-9]+", "_", backend_id.upper()).strip("_") + "_API_KEY"


def _backend_from_doc(backend_id: str, doc: dict, base_dir: Path) -> BackendConfig:
    script = None
    script_ref = doc.get("script")
    if script_ref:
        script_path = base_dir / script_ref
        if not script_path.is_file():
            raise ConfigError(f"backend {backend_id!r} script file missing: {script_path}")
        script = json.loads(script_path.read_text(encoding="utf-8"))
    endpoint = doc.get("endpoint", "mock")
    if "credential_env" in doc:
        credential_env = doc["credential_env"]  # explicit null disables auth
    else:
        credential_env = None if endpoint == "mock" else default_credential_env(backend_id)
    return BackendConfig(
        backend_id=backend_id,
        endpoint=endpoint,
        credential_env=credential_env,
        timeout=float(doc.get("timeout", 60.0)),
        max_retries=int(doc.get("max_retries", 2)),
        backoff_base=float(doc.get("backoff_base", 0.5)),
        max_concurrency=doc.get("max_concurrency"),
        protocol=doc.get("protocol", "generic"),
        script=script,
    )


def load_config(path: str | Path, **overrides) -> RunConfig:
    """Load the YAML config; keyword overrides win over file values."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    base_dir = path.parent

    def resolve(key: str) -> Path | None:
        value = overrides.get(key) or doc.get(key)
        if value is None:
            return None
        value = Path(value)
        return value if value.is_absolute() else base_dir / value

    backends = {
        backend_id: _backend_from_doc(backend_id, backend_doc or {}, base_dir)
        for backend_id, backend_doc in (doc.get("backends") or {}).items()
    }
    config = RunConfig(
        corpus=resolve("corpus"),
        kb=resolve("kb"),
        out=resolve("out") or Path("out"),
        concurrency=int(overrides.get("concurrency") or doc.get("concurrency", 1)),
        seed=int(
            overrides["seed"] if overrides.get("seed") is not None else doc.get("seed", 0)
        ),
        language=str(overrides.get("language") or doc.get("language", "en")),
        gen_temperature=float(doc.get("gen_temperature", 0.0)),
        backends=backends,
        roles=doc.get("roles") or {},
    )
    return config
