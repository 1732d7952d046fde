"""Pipeline configuration: INI file with flag overrides (flags win).

Sections: [corpus], [batching], [annotation], [clustering], plus one
[provider.<name>] per provider and one [extractor.<name>] per extractor.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError
from .gateway import ProviderConfig, RetryPolicy


@dataclass(frozen=True)
class ExtractorSpec:
    name: str
    provider: str
    model: str
    temperature: float = 0.0
    max_output_tokens: int = 2048


@dataclass
class PipelineConfig:
    window: tuple[int, int] = (1922, 1929)
    max_tokens: int = 1400
    min_words: int = 3
    token_counter: str = "whitespace"
    budget: int = 15_000
    batch_max_entries: int = 10
    panel_size: int = 3
    annotators: tuple[str, ...] = ("ann1", "ann2", "ann3")
    max_stalls: int = 2
    max_rounds: int = 50
    providers: dict[str, ProviderConfig] = field(default_factory=dict)
    extractors: dict[str, ExtractorSpec] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name, value in (
            ("max_tokens", self.max_tokens),
            ("min_words", self.min_words),
            ("budget", self.budget),
            ("batch_max_entries", self.batch_max_entries),
            ("panel_size", self.panel_size),
            ("max_stalls", self.max_stalls),
            ("max_rounds", self.max_rounds),
        ):
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.window[0] > self.window[1]:
            raise ConfigError(f"corpus window {self.window} is inverted")

    def extractor(self, name: str) -> ExtractorSpec:
        try:
            return self.extractors[name]
        except KeyError:
            raise ConfigError(
                f"extractor {name!r} not configured (have: {sorted(self.extractors) or 'none'})"
            ) from None

    def provider(self, name: str) -> ProviderConfig:
        try:
            return self.providers[name]
        except KeyError:
            raise ConfigError(
                f"provider {name!r} not configured (have: {sorted(self.providers) or 'none'})"
            ) from None

    def to_dict(self) -> dict:
        return {
            "window": list(self.window),
            "max_tokens": self.max_tokens,
            "min_words": self.min_words,
            "token_counter": self.token_counter,
            "budget": self.budget,
            "batch_max_entries": self.batch_max_entries,
            "panel_size": self.panel_size,
            "annotators": list(self.annotators),
            "max_stalls": self.max_stalls,
            "max_rounds": self.max_rounds,
            "providers": {n: asdict(p) for n, p in sorted(self.providers.items())},
            "extractors": {n: asdict(e) for n, e in sorted(self.extractors.items())},
        }


def _provider_from_section(name: str, section: configparser.SectionProxy) -> ProviderConfig:
    retry = RetryPolicy(
        max_attempts=section.getint("max_attempts", 3),
        base_backoff=section.getfloat("base_backoff", 0.5),
    )
    return ProviderConfig(
        name=name,
        kind=section.get("kind", ""),
        base_url=section.get("base_url"),
        api_key_env=section.get("api_key_env"),
        record_path=section.get("record_path"),
        script=section.get("script"),
        retry=retry,
        max_in_flight=section.getint("max_in_flight", 1),
        requests_per_minute=section.getfloat("requests_per_minute", fallback=None),
        timeout=section.getfloat("timeout", 60.0),
    )


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser()
    with path.open(encoding="utf-8") as fh:
        parser.read_file(fh)

    kwargs: dict = {}
    if parser.has_section("corpus"):
        corpus = parser["corpus"]
        kwargs["window"] = (corpus.getint("window_start", 1922), corpus.getint("window_end", 1929))
        kwargs["max_tokens"] = corpus.getint("max_tokens", 1400)
        kwargs["min_words"] = corpus.getint("min_words", 3)
        kwargs["token_counter"] = corpus.get("token_counter", "whitespace")
    if parser.has_section("batching"):
        batching = parser["batching"]
        kwargs["budget"] = batching.getint("budget", 15_000)
        kwargs["batch_max_entries"] = batching.getint("max_entries", 10)
    if parser.has_section("annotation"):
        annotation = parser["annotation"]
        kwargs["panel_size"] = annotation.getint("panel_size", 3)
        raw = annotation.get("annotators", "")
        if raw.strip():
            kwargs["annotators"] = tuple(a.strip() for a in raw.split(",") if a.strip())
    if parser.has_section("clustering"):
        clustering = parser["clustering"]
        kwargs["max_stalls"] = clustering.getint("max_stalls", 2)
        kwargs["max_rounds"] = clustering.getint("max_rounds", 50)

    providers: dict[str, ProviderConfig] = {}
    extractors: dict[str, ExtractorSpec] = {}
    for section_name in parser.sections():
        if section_name.startswith("provider."):
            name = section_name.split(".", 1)[1]
            providers[name] = _provider_from_section(name, parser[section_name])
        elif section_name.startswith("extractor."):
            name = section_name.split(".", 1)[1]
            section = parser[section_name]
            if not section.get("provider") or not section.get("model"):
                raise ConfigError(f"extractor {name!r} needs provider and model")
            extractors[name] = ExtractorSpec(
                name=name,
                provider=section["provider"],
                model=section["model"],
                temperature=section.getfloat("temperature", 0.0),
                max_output_tokens=section.getint("max_output_tokens", 2048),
            )
    for spec in extractors.values():
        if spec.provider not in providers:
            raise ConfigError(f"extractor {spec.name!r} references unknown provider {spec.provider!r}")
    return PipelineConfig(providers=providers, extractors=extractors, **kwargs)
