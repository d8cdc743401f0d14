"""Run configuration.

A run is configured by a TOML (or JSON) file with five sections::

    [provider]   kind ("mock" | "remote"), endpoint, model, credential_env,
                 temperature, max_retries, mock_script
    [pipeline]   exec_mode ("seq" | "mt" | "gp"), workers, batch_size,
                 sp, sfd, sample_size, seed, json_retries, pairs_per_dataset
    [bm25]       k1, b, epsilon
    [retrieval]  ks
    [paths]      manifest, benchmark_dir, output_dir

``${VAR}`` in any string value is replaced from the environment before
validation, so credentials and machine-specific paths stay out of the file.
Relative paths resolve against the config file's directory. Every omitted key
falls back to the defaults below; unknown keys are rejected so typos fail
loudly. The remote provider reads its API key from the environment variable
*named* by ``credential_env`` at construction time, so a missing credential
fails before any network call.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10: tomli is the same parser
    import tomli as tomllib

from .descriptions import PipelineSettings
from .errors import ConfigurationError
from .gateway import LlmGateway, MockProvider, RemoteProvider
from .semantic_profile import EXEC_MODES, SemanticSettings

DEFAULT_KS = (5, 10, 15, 20)

_ENV_RE = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def interpolate_env(value, environ=None):
    """Replace ``${VAR}`` in strings, recursing through dicts and lists."""
    environ = os.environ if environ is None else environ

    def substitute(match: re.Match) -> str:
        name = match.group(1)
        if name not in environ:
            raise ConfigurationError(
                f"config references undefined environment variable {name!r}"
            )
        return environ[name]

    if isinstance(value, str):
        return _ENV_RE.sub(substitute, value)
    if isinstance(value, dict):
        return {key: interpolate_env(item, environ) for key, item in value.items()}
    if isinstance(value, list):
        return [interpolate_env(item, environ) for item in value]
    return value


@dataclass(frozen=True)
class ProviderConfig:
    """LLM provider settings (the llm-gateway schema)."""

    kind: str = "mock"
    endpoint: str = ""
    model: str = "mock"
    credential_env: str = ""
    temperature: float = 0.0
    max_retries: int = 3
    mock_script: Path | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "remote"):
            raise ConfigurationError(
                f"provider kind must be 'mock' or 'remote', got {self.kind!r}"
            )
        if self.kind == "remote":
            if not self.endpoint:
                raise ConfigurationError("remote provider needs an endpoint URL")
            if not self.credential_env:
                raise ConfigurationError(
                    "remote provider needs credential_env (the name of the "
                    "environment variable holding the API key)"
                )
        if self.max_retries < 1:
            raise ConfigurationError("max_retries must be >= 1")
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigurationError("temperature must be in [0, 2]")


@dataclass(frozen=True)
class RunConfig:
    """Validated knobs for a full run; hashed to address the run directory."""

    provider: ProviderConfig = field(default_factory=ProviderConfig)
    exec_mode: str = "seq"
    workers: int = 64
    batch_size: int = 8
    sp_enabled: bool = True
    sfd_enabled: bool = True
    sample_size: int = 5
    seed: int = 0
    json_retries: int = 3
    pairs_per_dataset: int = 10
    k1: float = 1.5
    b: float = 0.75
    epsilon: float = 0.25
    ks: tuple[int, ...] = DEFAULT_KS
    manifest_path: Path | None = None
    benchmark_dir: Path | None = None
    output_dir: Path = Path("runs")

    def __post_init__(self) -> None:
        if self.exec_mode not in EXEC_MODES:
            raise ConfigurationError(
                f"exec_mode must be one of {EXEC_MODES}, got {self.exec_mode!r}"
            )
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.sample_size < 1:
            raise ConfigurationError("sample_size must be >= 1")
        if self.json_retries < 0:
            raise ConfigurationError("json_retries must be >= 0")
        if self.pairs_per_dataset < 1:
            raise ConfigurationError("pairs_per_dataset must be >= 1")
        if not self.ks:
            raise ConfigurationError("ks must be non-empty")
        if list(self.ks) != sorted(self.ks) or len(set(self.ks)) != len(self.ks):
            raise ConfigurationError("ks must be strictly ascending")
        if any(k < 1 for k in self.ks):
            raise ConfigurationError("every k must be >= 1")
        if self.k1 < 0 or not 0 <= self.b <= 1 or self.epsilon <= 0:
            raise ConfigurationError(
                "bm25 parameters need k1 >= 0, b in [0, 1], epsilon > 0"
            )

    def to_canonical_dict(self) -> dict:
        """Plain nested dict of every knob, with stable key order."""
        return {
            "provider": {
                "kind": self.provider.kind,
                "endpoint": self.provider.endpoint,
                "model": self.provider.model,
                "credential_env": self.provider.credential_env,
                "temperature": self.provider.temperature,
                "max_retries": self.provider.max_retries,
                "mock_script": (
                    self.provider.mock_script.as_posix()
                    if self.provider.mock_script
                    else None
                ),
            },
            "pipeline": {
                "exec_mode": self.exec_mode,
                "workers": self.workers,
                "batch_size": self.batch_size,
                "sp": self.sp_enabled,
                "sfd": self.sfd_enabled,
                "sample_size": self.sample_size,
                "seed": self.seed,
                "json_retries": self.json_retries,
                "pairs_per_dataset": self.pairs_per_dataset,
            },
            "bm25": {"k1": self.k1, "b": self.b, "epsilon": self.epsilon},
            "retrieval": {"ks": list(self.ks)},
            "paths": {
                "manifest": self.manifest_path.as_posix() if self.manifest_path else None,
                "benchmark_dir": (
                    self.benchmark_dir.as_posix() if self.benchmark_dir else None
                ),
                "output_dir": self.output_dir.as_posix(),
            },
        }

    def run_id(self) -> str:
        """Content address of the configuration: same knobs, same run dir."""
        canonical = json.dumps(self.to_canonical_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]

    def run_dir(self) -> Path:
        return Path(self.output_dir) / f"run-{self.run_id()}"

    def pipeline_settings(self) -> PipelineSettings:
        """The per-dataset pipeline view of this configuration.

        ``sample_size`` controls both the sample-row block fed to prompts and
        the per-column sample values in semantic payloads.
        """
        return PipelineSettings(
            sp_enabled=self.sp_enabled,
            sfd_enabled=self.sfd_enabled,
            semantic=SemanticSettings(
                mode=self.exec_mode,
                workers=self.workers,
                batch_size=self.batch_size,
                sample_size=self.sample_size,
                seed=self.seed,
                json_retries=self.json_retries,
                temperature=self.provider.temperature,
            ),
            row_sample_size=self.sample_size,
            seed=self.seed,
            temperature=self.provider.temperature,
            model_name=self.provider.model,
        )


_SECTION_KEYS = {
    "provider": {
        "kind", "endpoint", "model", "credential_env", "temperature",
        "max_retries", "mock_script",
    },
    "pipeline": {
        "exec_mode", "workers", "batch_size", "sp", "sfd", "sample_size",
        "seed", "json_retries", "pairs_per_dataset",
    },
    "bm25": {"k1", "b", "epsilon"},
    "retrieval": {"ks"},
    "paths": {"manifest", "benchmark_dir", "output_dir"},
}


def _check_keys(data: dict) -> None:
    unknown_sections = set(data) - set(_SECTION_KEYS)
    if unknown_sections:
        raise ConfigurationError(
            f"unknown config sections: {sorted(unknown_sections)}"
        )
    for section, keys in _SECTION_KEYS.items():
        section_data = data.get(section, {})
        if not isinstance(section_data, dict):
            raise ConfigurationError(f"config section {section!r} must be a table")
        unknown = set(section_data) - keys
        if unknown:
            raise ConfigurationError(
                f"unknown keys in [{section}]: {sorted(unknown)}"
            )


def _resolve(base: Path, value: str | None) -> Path | None:
    if value is None or value == "":
        return None
    path = Path(value)
    return path if path.is_absolute() else base / path


def config_from_dict(data: dict, base_dir: str | Path = ".") -> RunConfig:
    """Build a validated RunConfig from parsed config data."""
    base = Path(base_dir)
    _check_keys(data)
    provider_data = data.get("provider", {})
    pipeline = data.get("pipeline", {})
    bm25 = data.get("bm25", {})
    retrieval = data.get("retrieval", {})
    paths = data.get("paths", {})
    try:
        provider = ProviderConfig(
            kind=str(provider_data.get("kind", "mock")),
            endpoint=str(provider_data.get("endpoint", "")),
            model=str(provider_data.get("model", "mock")),
            credential_env=str(provider_data.get("credential_env", "")),
            temperature=float(provider_data.get("temperature", 0.0)),
            max_retries=int(provider_data.get("max_retries", 3)),
            mock_script=_resolve(base, provider_data.get("mock_script")),
        )
        return RunConfig(
            provider=provider,
            exec_mode=str(pipeline.get("exec_mode", "seq")),
            workers=int(pipeline.get("workers", 64)),
            batch_size=int(pipeline.get("batch_size", 8)),
            sp_enabled=bool(pipeline.get("sp", True)),
            sfd_enabled=bool(pipeline.get("sfd", True)),
            sample_size=int(pipeline.get("sample_size", 5)),
            seed=int(pipeline.get("seed", 0)),
            json_retries=int(pipeline.get("json_retries", 3)),
            pairs_per_dataset=int(pipeline.get("pairs_per_dataset", 10)),
            k1=float(bm25.get("k1", 1.5)),
            b=float(bm25.get("b", 0.75)),
            epsilon=float(bm25.get("epsilon", 0.25)),
            ks=tuple(int(k) for k in retrieval.get("ks", DEFAULT_KS)),
            manifest_path=_resolve(base, paths.get("manifest")),
            benchmark_dir=_resolve(base, paths.get("benchmark_dir")),
            output_dir=_resolve(base, paths.get("output_dir")) or Path("runs"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid config value: {exc}") from exc


def load_config(path: str | Path, environ=None) -> RunConfig:
    """Load and validate a TOML or JSON run configuration file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".toml":
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid TOML: {exc}") from exc
    elif path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON: {exc}") from exc
    else:
        raise ConfigurationError(
            f"config file must end in .toml or .json, got {path.name!r}"
        )
    data = interpolate_env(data, environ)
    return config_from_dict(data, base_dir=path.parent)


def build_provider(provider_config: ProviderConfig):
    """Construct the configured provider; remote fails fast on a missing key."""
    if provider_config.kind == "mock":
        if provider_config.mock_script is not None:
            return MockProvider.from_file(provider_config.mock_script)
        return MockProvider({})
    return RemoteProvider(
        endpoint=provider_config.endpoint,
        model=provider_config.model,
        api_key_env=provider_config.credential_env,
    )


def build_gateway(config: RunConfig, provider=None, ledger=None) -> LlmGateway:
    if provider is None:
        provider = build_provider(config.provider)
    return LlmGateway(
        provider, ledger=ledger, max_retries=config.provider.max_retries
    )


def apply_overrides(config: RunConfig, **overrides) -> RunConfig:
    """Apply CLI flag overrides (None values mean "keep the config value")."""
    changes = {key: value for key, value in overrides.items() if value is not None}
    if not changes:
        return config
    return replace(config, **changes)
