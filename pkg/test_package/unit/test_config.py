import json

import pytest

import doc2eg.config as cfg
from doc2eg.gateway import (
    ChatGenerator,
    HashedBagOfWordsEmbedder,
    HttpEmbedder,
    ScriptedGenerator,
    Stage,
)
from test_package.utils import CAUSAL, HIERARCHICAL, TEMPORAL

CONFIG_YAML = """
provider:
  endpoint: http://localhost:8000/v1
  model: from-file
pipeline:
  max_rounds: 4
stages:
  graph:
    temperature: 0.2
"""


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "doc2eg.yaml"
    path.write_text(CONFIG_YAML)
    return path


def test_defaults():
    config = cfg.RunConfig.load(environ={})

    pipeline = config.pipeline_config()
    assert pipeline.max_rounds == 5
    assert pipeline.early_stop and pipeline.use_grader
    assert pipeline.relations == (HIERARCHICAL, TEMPORAL, CAUSAL)
    assert (pipeline.min_words, pipeline.max_words) == (100, 8500)
    assert config.get("parallelism.documents") == 4


@pytest.mark.parametrize(
    "use_file,environ,overrides,expected",
    [
        (False, {}, {}, 5),
        (True, {}, {}, 4),
        (True, {"DOC2EG_MAX_ROUNDS": "3"}, {}, 3),
        (True, {"DOC2EG_MAX_ROUNDS": "3"}, {"pipeline.max_rounds": 2}, 2),
        (False, {}, {"pipeline.max_rounds": 2}, 2),
        (True, {"DOC2EG_MAX_ROUNDS": ""}, {"pipeline.max_rounds": None}, 4),
    ],
)
def test_precedence(config_file, use_file, environ, overrides, expected):
    config = cfg.RunConfig.load(
        config_file if use_file else None, environ=environ, overrides=overrides
    )

    assert config.pipeline_config().max_rounds == expected


def test_stage_parameters_merge_per_key(config_file):
    config = cfg.RunConfig.load(config_file, environ={})

    params = config.stage_params()
    assert params[Stage.GRAPH].temperature == 0.2
    assert params[Stage.GRAPH].max_tokens == 4096
    assert params[Stage.SUMMARY].temperature == 0.8


def test_environment_conversions():
    config = cfg.RunConfig.load(
        environ={
            "DOC2EG_EARLY_STOP": "no",
            "DOC2EG_RELATIONS": "causal, temporal",
            "DOC2EG_PARALLELISM": "2",
        }
    )

    assert config.pipeline_config().early_stop is False
    assert config.relations == (CAUSAL, TEMPORAL)
    assert config.pipeline_config().relations == (TEMPORAL, CAUSAL)
    assert config.get("parallelism.documents") == 2


@pytest.mark.parametrize(
    "environ",
    [
        {"DOC2EG_MAX_ROUNDS": "many"},
        {"DOC2EG_EARLY_STOP": "maybe"},
        {"DOC2EG_MAX_ROUNDS": "0"},
        {"DOC2EG_RELATIONS": "before"},
        {"DOC2EG_PROVIDER": "carrier-pigeon"},
        {"DOC2EG_PROMPT_FORMAT": "yaml"},
        {"DOC2EG_PARALLELISM": "0"},
    ],
)
def test_invalid_environment(environ):
    with pytest.raises(cfg.ConfigError):
        cfg.RunConfig.load(environ=environ)


@pytest.mark.parametrize(
    "text",
    [
        "providr:\n  model: x\n",
        "provider:\n  modle: x\n",
        "provider: [1, 2]\n",
        "- just\n- a list\n",
        "provider: {model: [unclosed\n",
        "stages:\n  graph:\n    top_p: 2.0\n",
        "stages:\n  translation:\n    temperature: 0.1\n",
        "evaluation:\n  mentions: fuzzy\n",
    ],
)
def test_invalid_config_file(tmp_path, text):
    path = tmp_path / "bad.yaml"
    path.write_text(text)

    with pytest.raises(cfg.ConfigError):
        cfg.RunConfig.load(path, environ={})


def test_missing_config_file(tmp_path):
    with pytest.raises(cfg.ConfigError, match="cannot read"):
        cfg.RunConfig.load(tmp_path / "missing.yaml", environ={})


def test_empty_config_file(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")

    assert cfg.RunConfig.load(path, environ={}).get("pipeline.max_rounds") == 5


def test_http_generator_needs_endpoint_and_model():
    with pytest.raises(cfg.ConfigError, match="endpoint"):
        cfg.build_generator(cfg.RunConfig.load(environ={}), environ={})
    config = cfg.RunConfig.load(environ={"DOC2EG_ENDPOINT": "http://localhost/v1"})
    with pytest.raises(cfg.ConfigError, match="model"):
        cfg.build_generator(config, environ={})


def test_http_generator_uses_api_key_from_environment(config_file):
    config = cfg.RunConfig.load(config_file, environ={})

    generator = cfg.build_generator(config, environ={"DOC2EG_API_KEY": "secret"})

    assert isinstance(generator, ChatGenerator)
    assert generator.client.model == "from-file"
    assert generator.client.api.headers["Authorization"] == "Bearer secret"


def test_scripted_generator_from_fixtures(tmp_path):
    fixtures = tmp_path / "fixtures.jsonl"
    fixtures.write_text(
        json.dumps({"stage": "summary", "prompt": "p", "response": "r"}) + "\n"
    )
    config = cfg.RunConfig.load(
        environ={"DOC2EG_PROVIDER": "scripted", "DOC2EG_FIXTURES": str(fixtures)}
    )

    assert isinstance(cfg.build_generator(config), ScriptedGenerator)


@pytest.mark.parametrize("fixtures", [None, "missing.jsonl"])
def test_scripted_generator_without_usable_fixtures(tmp_path, fixtures):
    overrides = {"provider.kind": "scripted"}
    if fixtures:
        overrides["provider.fixtures"] = str(tmp_path / fixtures)
    config = cfg.RunConfig.load(environ={}, overrides=overrides)

    with pytest.raises(cfg.ConfigError):
        cfg.build_generator(config)


def test_embedders():
    hashed = cfg.build_embedder(cfg.RunConfig.load(environ={}))
    assert isinstance(hashed, HashedBagOfWordsEmbedder)
    assert hashed.dimension == 256

    config = cfg.RunConfig.load(
        environ={
            "DOC2EG_EMBEDDING": "http",
            "DOC2EG_ENDPOINT": "http://localhost/v1",
            "DOC2EG_EMBEDDING_MODEL": "embedder",
        }
    )
    assert isinstance(cfg.build_embedder(config, environ={}), HttpEmbedder)

    with pytest.raises(cfg.ConfigError):
        cfg.build_embedder(cfg.RunConfig.load(environ={"DOC2EG_EMBEDDING": "http"}))


def test_build_gateway(tmp_path):
    config = cfg.RunConfig.load(
        environ={
            "DOC2EG_CACHE_DIR": str(tmp_path / "cache"),
            "DOC2EG_MAX_CONCURRENT_REQUESTS": "2",
        }
    )

    gateway = cfg.build_gateway(
        config,
        environ={},
        generator_factory=lambda config, environ: ScriptedGenerator(),
    )

    assert isinstance(gateway.generator, ScriptedGenerator)
    assert isinstance(gateway.embedder, HashedBagOfWordsEmbedder)
    assert gateway.cache is not None


def test_build_gateway_for_evaluation_only():
    gateway = cfg.build_gateway(
        cfg.RunConfig.load(environ={}), environ={}, generator=False
    )

    assert gateway.generator is None
    assert gateway.cache is None


def test_templates_dir_reaches_the_prompt_library(tmp_path):
    config = cfg.RunConfig.load(
        environ={"DOC2EG_TEMPLATES_DIR": str(tmp_path), "DOC2EG_PROMPT_FORMAT": "json"}
    )

    library = config.prompt_library()

    assert library.templates_dir == tmp_path
    assert library.prompt_format == "json"
