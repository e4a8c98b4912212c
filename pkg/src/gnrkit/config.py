"""Run configuration: one YAML file capturing everything but credentials.

Secrets never appear in the config; backends name the environment
variable holding their token (``auth_env``) and the gateway reads it at
call time. All randomness (validation-split carving, any future shot
sampling) flows from the single top-level ``seed``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .gateway import (
    BackendDescriptor,
    BackendKind,
    Gateway,
    HttpBackend,
    MockBackend,
    ResponseCache,
    load_mock_table,
)
from .judge import GENDERED_KEYWORDS, NEUTRAL_KEYWORDS, Judge, VerdictCache, load_judge_prompt
from .similarity import (
    HashLikelihoodScorer,
    HashTokenEncoder,
    Seq2SeqScorer,
    TableEncoder,
    TokenEncoder,
    load_encoder_plugin,
)


class ConfigError(ValueError):
    pass


@dataclass
class BackendSpec:
    id: str
    kind: BackendKind
    model_name: str
    size_billion_params: float | None = None
    endpoint: str | None = None
    auth_env: str | None = None
    mode: str = "echo"
    fixed_text: str = ""
    table_path: str | None = None

    def descriptor(self) -> BackendDescriptor:
        return BackendDescriptor(self.id, self.kind, self.model_name, self.size_billion_params)


@dataclass
class GenerationSettings:
    max_new_tokens: int = 256
    temperature: float = 0.0
    seed: int | None = None
    retries: int = 3
    backoff_s: float = 0.5
    timeout_s: float = 60.0


@dataclass
class JudgeSettings:
    backend: BackendSpec | None = None
    prompt_path: str | None = None
    max_attempts: int = 3
    max_new_tokens: int = 32
    neutral_keywords: tuple[str, ...] = NEUTRAL_KEYWORDS
    gendered_keywords: tuple[str, ...] = GENDERED_KEYWORDS


@dataclass
class EncoderSettings:
    kind: str = "hash"  # hash | table | plugin
    dim: int = 64
    seed: int = 0
    table_path: str | None = None
    plugin: str | None = None


@dataclass
class LikelihoodSettings:
    kind: str = "none"  # none | hash
    seed: int = 0


@dataclass
class RunConfig:
    corpus_path: str | None = None
    backends: list[BackendSpec] = field(default_factory=list)
    conditions: list[str] = field(default_factory=list)
    shots_path: str | None = None
    judge: JudgeSettings = field(default_factory=JudgeSettings)
    encoder: EncoderSettings = field(default_factory=EncoderSettings)
    likelihood: LikelihoodSettings = field(default_factory=LikelihoodSettings)
    generation: GenerationSettings = field(default_factory=GenerationSettings)
    output_dir: str = "out"
    cache_dir: str | None = None
    max_in_flight: int = 4
    seed: int = 0

    def resolved_cache_dir(self) -> Path:
        return Path(self.cache_dir) if self.cache_dir else Path(self.output_dir) / "cache"


def _backend_spec(obj: dict, where: str) -> BackendSpec:
    try:
        kind = BackendKind(obj["kind"])
    except (KeyError, ValueError):
        raise ConfigError(
            f"{where}: backend kind must be one of {[k.value for k in BackendKind]}"
        ) from None
    for key in ("id", "model_name"):
        if not obj.get(key):
            raise ConfigError(f"{where}: backend is missing {key!r}")
    return BackendSpec(
        id=obj["id"],
        kind=kind,
        model_name=obj["model_name"],
        size_billion_params=obj.get("size_billion_params"),
        endpoint=obj.get("endpoint"),
        auth_env=obj.get("auth_env"),
        mode=obj.get("mode", "echo"),
        fixed_text=obj.get("fixed_text", ""),
        table_path=obj.get("table"),
    )


def load_config(path: str | Path) -> RunConfig:
    raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config root must be a mapping")

    config = RunConfig()
    config.corpus_path = raw.get("corpus")
    config.conditions = list(raw.get("conditions") or [])
    config.shots_path = raw.get("shots")
    config.output_dir = raw.get("output_dir", "out")
    config.cache_dir = raw.get("cache_dir")
    config.max_in_flight = int(raw.get("max_in_flight", 4))
    config.seed = int(raw.get("seed", 0))
    config.backends = [
        _backend_spec(b, f"{path}: backends[{i}]") for i, b in enumerate(raw.get("backends") or [])
    ]

    gen = raw.get("generation") or {}
    config.generation = GenerationSettings(
        max_new_tokens=int(gen.get("max_new_tokens", 256)),
        temperature=float(gen.get("temperature", 0.0)),
        seed=gen.get("seed"),
        retries=int(gen.get("retries", 3)),
        backoff_s=float(gen.get("backoff_s", 0.5)),
        timeout_s=float(gen.get("timeout_s", 60.0)),
    )

    judge_raw = raw.get("judge") or {}
    judge_backend = None
    if judge_raw.get("backend"):
        judge_backend = _backend_spec(judge_raw["backend"], f"{path}: judge.backend")
    config.judge = JudgeSettings(
        backend=judge_backend,
        prompt_path=judge_raw.get("prompt"),
        max_attempts=int(judge_raw.get("max_attempts", 3)),
        max_new_tokens=int(judge_raw.get("max_new_tokens", 32)),
        neutral_keywords=tuple(judge_raw.get("neutral_keywords") or NEUTRAL_KEYWORDS),
        gendered_keywords=tuple(judge_raw.get("gendered_keywords") or GENDERED_KEYWORDS),
    )

    enc = raw.get("encoder") or {}
    config.encoder = EncoderSettings(
        kind=enc.get("kind", "hash"),
        dim=int(enc.get("dim", 64)),
        seed=int(enc.get("seed", 0)),
        table_path=enc.get("table"),
        plugin=enc.get("plugin"),
    )

    lik = raw.get("likelihood") or {}
    config.likelihood = LikelihoodSettings(
        kind=lik.get("kind", "none"), seed=int(lik.get("seed", 0))
    )
    return config


def validate_for_evaluate(config: RunConfig) -> None:
    problems = []
    if not config.corpus_path:
        problems.append("corpus path is required")
    elif not Path(config.corpus_path).is_file():
        problems.append(f"corpus file not found: {config.corpus_path}")
    if not config.backends:
        problems.append("at least one backend is required")
    if not config.conditions:
        problems.append("at least one condition is required")
    if config.judge.backend is None:
        problems.append("judge backend is required")
    if config.shots_path and not Path(config.shots_path).is_file():
        problems.append(f"shots file not found: {config.shots_path}")
    if config.max_in_flight < 1:
        problems.append("max_in_flight must be >= 1")
    if problems:
        raise ConfigError("; ".join(problems))


def validate_for_scoring(config: RunConfig) -> None:
    if not config.corpus_path:
        raise ConfigError("corpus path is required")
    if not Path(config.corpus_path).is_file():
        raise ConfigError(f"corpus file not found: {config.corpus_path}")


def build_backend(spec: BackendSpec, generation: GenerationSettings):
    if spec.kind is BackendKind.MOCK:
        table = load_mock_table(spec.table_path) if spec.table_path else None
        return MockBackend(mode=spec.mode, fixed_text=spec.fixed_text, table=table)
    if not spec.endpoint:
        raise ConfigError(f"backend {spec.id!r} of kind {spec.kind.value} needs an endpoint")
    return HttpBackend(
        endpoint=spec.endpoint,
        model_name=spec.model_name,
        auth_env=spec.auth_env,
        timeout_s=generation.timeout_s,
    )


def build_gateway(config: RunConfig, with_cache: bool = True) -> Gateway:
    """Gateway with all configured backends (under test plus judge) registered."""
    cache = None
    if with_cache:
        cache = ResponseCache(config.resolved_cache_dir() / "generations")
    gateway = Gateway(cache=cache)
    specs = list(config.backends)
    if config.judge.backend is not None:
        specs.append(config.judge.backend)
    for spec in specs:
        gateway.register(
            spec.descriptor(),
            build_backend(spec, config.generation),
            retries=config.generation.retries,
            backoff_s=config.generation.backoff_s,
        )
    return gateway


def build_encoder(settings: EncoderSettings) -> TokenEncoder:
    if settings.kind == "hash":
        return HashTokenEncoder(dim=settings.dim, seed=settings.seed)
    if settings.kind == "table":
        if not settings.table_path:
            raise ConfigError("table encoder needs a table path")
        return TableEncoder.from_file(settings.table_path)
    if settings.kind == "plugin":
        if not settings.plugin:
            raise ConfigError("plugin encoder needs a 'plugin' module:callable reference")
        return load_encoder_plugin(settings.plugin)
    raise ConfigError(f"unknown encoder kind: {settings.kind!r}")


def build_likelihood_scorer(settings: LikelihoodSettings) -> Seq2SeqScorer | None:
    if settings.kind == "none":
        return None
    if settings.kind == "hash":
        return HashLikelihoodScorer(seed=settings.seed)
    raise ConfigError(f"unknown likelihood scorer kind: {settings.kind!r}")


def build_judge(config: RunConfig, gateway: Gateway, with_cache: bool = True) -> Judge:
    if config.judge.backend is None:
        raise ConfigError("judge backend is not configured")
    cache = None
    if with_cache:
        cache = VerdictCache(config.resolved_cache_dir() / "judgments")
    return Judge(
        gateway=gateway,
        backend=config.judge.backend.descriptor(),
        prompt_template=load_judge_prompt(config.judge.prompt_path),
        max_attempts=config.judge.max_attempts,
        max_new_tokens=config.judge.max_new_tokens,
        neutral_keywords=config.judge.neutral_keywords,
        gendered_keywords=config.judge.gendered_keywords,
        cache=cache,
    )
