from __future__ import annotations

import pytest

from diarist.config import PipelineConfig, load_config
from diarist.demo import DATA_DIR
from diarist.errors import ConfigError


def write_config(tmp_path, body: str):
    path = tmp_path / "pipeline.ini"
    path.write_text(body, encoding="utf-8")
    return path


def test_defaults_without_config_file():
    cfg = load_config(None)
    assert cfg.window == (1922, 1929)
    assert cfg.max_tokens == 1400
    assert cfg.min_words == 3
    assert cfg.budget == 15_000
    assert cfg.batch_max_entries == 10
    assert cfg.panel_size == 3
    assert cfg.max_stalls == 2 and cfg.max_rounds == 50


def test_demo_config_parses():
    cfg = load_config(DATA_DIR / "config.ini")
    assert set(cfg.extractors) == {"alpha", "beta"}
    assert cfg.extractor("alpha").provider == "demo-alpha"
    assert cfg.provider("demo-alpha").kind == "scripted"
    assert cfg.annotators == ("ann1", "ann2", "ann3")


def test_full_sections_and_overridden_values(tmp_path):
    path = write_config(
        tmp_path,
        """
[corpus]
window_start = 1900
window_end = 1950
max_tokens = 700
min_words = 2
token_counter = chars:4

[batching]
budget = 9000
max_entries = 5

[annotation]
panel_size = 5
annotators = x, y, z, w, v

[clustering]
max_stalls = 4
max_rounds = 12

[provider.live]
kind = http_openai_compatible
base_url = https://api.example.test/v1
api_key_env = KEY
max_attempts = 5
base_backoff = 1.5
max_in_flight = 3
requests_per_minute = 30

[extractor.big]
provider = live
model = model-x
temperature = 0.2
max_output_tokens = 512
""",
    )
    cfg = load_config(path)
    assert cfg.window == (1900, 1950)
    assert cfg.token_counter == "chars:4"
    assert cfg.budget == 9000 and cfg.batch_max_entries == 5
    assert cfg.panel_size == 5 and len(cfg.annotators) == 5
    provider = cfg.provider("live")
    assert provider.retry.max_attempts == 5
    assert provider.retry.base_backoff == 1.5
    assert provider.requests_per_minute == 30
    spec = cfg.extractor("big")
    assert (spec.model, spec.temperature, spec.max_output_tokens) == ("model-x", 0.2, 512)


def test_missing_file_and_bad_values(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, "[corpus]\nmax_tokens = -5\n"))
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, "[corpus]\nwindow_start = 1930\nwindow_end = 1922\n"))


def test_extractor_references_must_resolve(tmp_path):
    body = "[extractor.m]\nprovider = ghost\nmodel = x\n"
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, body))
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, "[extractor.m]\nmodel = x\n"))


def test_unknown_lookup_errors():
    cfg = PipelineConfig()
    with pytest.raises(ConfigError):
        cfg.extractor("nope")
    with pytest.raises(ConfigError):
        cfg.provider("nope")


def test_to_dict_is_stable_for_hashing():
    cfg = load_config(DATA_DIR / "config.ini")
    assert cfg.to_dict() == cfg.to_dict()
    assert "providers" in cfg.to_dict()
