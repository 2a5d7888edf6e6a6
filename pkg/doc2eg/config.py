"""
Run configuration: a YAML file, DOC2EG_* environment variables and
command-line flags layered over built-in defaults, in increasing order of
precedence.
"""
import copy
import os
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional

import yaml

from doc2eg.api import ChatCompletionClient, EmbeddingClient
from doc2eg.gateway import (
    ChatGenerator,
    Gateway,
    HashedBagOfWordsEmbedder,
    HttpEmbedder,
    ResponseCache,
    ScriptedGenerator,
    StageParams,
)
from doc2eg.graph import RELATION_ORDER, RelationType
from doc2eg.pipeline import PipelineConfig
from doc2eg.prompts import PROMPT_FORMATS, PromptLibrary


class ConfigError(ValueError):
    pass


DEFAULTS: Dict[str, Any] = {
    "provider": {
        "kind": "http",
        "endpoint": None,
        "model": None,
        "api_key_env": "DOC2EG_API_KEY",
        "fixtures": None,
        "max_retries": 3,
        "backoff_factor": 1.0,
        "timeout": 120.0,
        "verify": True,
    },
    "embedding": {
        "kind": "hashed",
        "endpoint": None,
        "model": None,
        "dimension": 256,
        "batch_size": 32,
    },
    "stages": {},
    "pipeline": {
        "max_rounds": 5,
        "early_stop": True,
        "use_grader": True,
        "dependent_relations": True,
        "prompt_format": "python",
        "relations": [relation.short_name for relation in RELATION_ORDER],
    },
    "filter": {"min_words": 100, "max_words": 8500, "ids_file": None},
    "paths": {
        "corpus": None,
        "output": "bundles",
        "cache": None,
        "manifest": None,
        "trace": None,
        "templates": None,
        "prompts": "prompts",
    },
    "evaluation": {
        "closure": True,
        "splitter": "regex",
        "lemmatizer": "naive",
        "mentions": "exact",
    },
    "parallelism": {"documents": 4, "requests": 4},
}


def _to_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _to_list(value: str):
    return [item.strip() for item in value.split(",") if item.strip()]


ENVIRONMENT_KEYS: Dict[str, tuple] = {
    "DOC2EG_PROVIDER": ("provider.kind", str),
    "DOC2EG_ENDPOINT": ("provider.endpoint", str),
    "DOC2EG_MODEL": ("provider.model", str),
    "DOC2EG_FIXTURES": ("provider.fixtures", str),
    "DOC2EG_MAX_RETRIES": ("provider.max_retries", int),
    "DOC2EG_TIMEOUT": ("provider.timeout", float),
    "DOC2EG_EMBEDDING": ("embedding.kind", str),
    "DOC2EG_EMBEDDING_ENDPOINT": ("embedding.endpoint", str),
    "DOC2EG_EMBEDDING_MODEL": ("embedding.model", str),
    "DOC2EG_MAX_ROUNDS": ("pipeline.max_rounds", int),
    "DOC2EG_EARLY_STOP": ("pipeline.early_stop", _to_bool),
    "DOC2EG_PROMPT_FORMAT": ("pipeline.prompt_format", str),
    "DOC2EG_RELATIONS": ("pipeline.relations", _to_list),
    "DOC2EG_CACHE_DIR": ("paths.cache", str),
    "DOC2EG_TEMPLATES_DIR": ("paths.templates", str),
    "DOC2EG_PARALLELISM": ("parallelism.documents", int),
    "DOC2EG_MAX_CONCURRENT_REQUESTS": ("parallelism.requests", int),
}


def _set_dotted(tree: Dict[str, Any], dotted_key: str, value):
    section, key = dotted_key.split(".", 1)
    tree.setdefault(section, {})[key] = value


def _merge(base: Dict[str, Any], layer: Mapping[str, Any], source: str):
    for section, values in layer.items():
        if section not in DEFAULTS:
            raise ConfigError(f"{source}: unknown section {section!r}")
        if values is None:
            continue
        if not isinstance(values, Mapping):
            raise ConfigError(f"{source}: section {section!r} must be a mapping")
        if section != "stages":
            unknown = set(values) - set(DEFAULTS[section])
            if unknown:
                raise ConfigError(
                    f"{source}: unknown keys in {section!r}: "
                    + ", ".join(sorted(unknown))
                )
        for key, value in values.items():
            if section == "stages" and isinstance(value, Mapping):
                base[section].setdefault(key, {}).update(value)
            else:
                base[section][key] = value


class RunConfig(object):
    def __init__(self, data: Dict[str, Any]):
        self.data = data
        self.validate()

    @classmethod
    def load(
        cls,
        config_path: Optional[Path] = None,
        environ: Optional[Mapping[str, str]] = None,
        overrides: Optional[Mapping[str, Any]] = None,
    ) -> "RunConfig":
        """
        Merge defaults, the YAML file, the environment and the overrides.

        Args:
            config_path: optional YAML file
            environ: environment mapping, os.environ when None
            overrides: dotted keys ("pipeline.max_rounds") set from the
              command line; None values are ignored
        """
        environ = os.environ if environ is None else environ
        data = copy.deepcopy(DEFAULTS)

        if config_path is not None:
            try:
                with open(config_path, encoding="utf-8") as config_file:
                    file_data = yaml.safe_load(config_file)
            except OSError as e:
                raise ConfigError(f"cannot read config file {config_path}: {e}") from e
            except yaml.YAMLError as e:
                raise ConfigError(f"{config_path} is not valid YAML: {e}") from e
            if file_data is not None:
                if not isinstance(file_data, dict):
                    raise ConfigError(f"{config_path}: the top level must be a mapping")
                _merge(data, file_data, str(config_path))

        environment_layer: Dict[str, Any] = dict()
        for variable, (dotted_key, convert) in ENVIRONMENT_KEYS.items():
            if environ.get(variable):
                try:
                    _set_dotted(
                        environment_layer, dotted_key, convert(environ[variable])
                    )
                except ValueError as e:
                    raise ConfigError(f"environment variable {variable}: {e}") from e
        _merge(data, environment_layer, "environment")

        flag_layer: Dict[str, Any] = dict()
        for dotted_key, value in (overrides or {}).items():
            if value is not None:
                _set_dotted(flag_layer, dotted_key, value)
        _merge(data, flag_layer, "command line")

        return cls(data)

    def get(self, dotted_key: str):
        section, key = dotted_key.split(".", 1)
        return self.data[section].get(key)

    def _path(self, dotted_key: str) -> Optional[Path]:
        value = self.get(dotted_key)
        return Path(value) if value else None

    def validate(self):
        try:
            self.pipeline_config()
            self.stage_params()
        except (ValueError, TypeError, KeyError) as e:
            raise ConfigError(str(e)) from e

        for dotted_key in ("parallelism.documents", "parallelism.requests"):
            value = self.get(dotted_key)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(
                    f"{dotted_key} must be an integer >= 1, got {value!r}"
                )
        if self.get("provider.kind") not in ("http", "scripted"):
            raise ConfigError("provider.kind must be http or scripted")
        if self.get("embedding.kind") not in ("http", "hashed"):
            raise ConfigError("embedding.kind must be http or hashed")
        if self.get("evaluation.mentions") not in ("exact", "llm"):
            raise ConfigError("evaluation.mentions must be exact or llm")
        if self.get("pipeline.prompt_format") not in PROMPT_FORMATS:
            raise ConfigError(
                f"pipeline.prompt_format must be one of {', '.join(PROMPT_FORMATS)}"
            )

    @property
    def relations(self):
        names = self.get("pipeline.relations")
        if isinstance(names, str):
            names = _to_list(names)
        return tuple(RelationType.from_name(name) for name in names)

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            max_rounds=int(self.get("pipeline.max_rounds")),
            early_stop=bool(self.get("pipeline.early_stop")),
            use_grader=bool(self.get("pipeline.use_grader")),
            dependent_relations=bool(self.get("pipeline.dependent_relations")),
            prompt_format=self.get("pipeline.prompt_format"),
            relations=self.relations,
            min_words=int(self.get("filter.min_words")),
            max_words=int(self.get("filter.max_words")),
        )

    def stage_params(self) -> StageParams:
        return StageParams.from_dict(self.data["stages"])

    def prompt_library(self) -> PromptLibrary:
        return PromptLibrary(
            self._path("paths.templates"),
            prompt_format=self.get("pipeline.prompt_format"),
        )

    def api_key(self, environ: Optional[Mapping[str, str]] = None) -> Optional[str]:
        environ = os.environ if environ is None else environ
        return environ.get(self.get("provider.api_key_env") or "DOC2EG_API_KEY")

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.data)


def build_generator(config: RunConfig, environ: Optional[Mapping[str, str]] = None):
    if config.get("provider.kind") == "scripted":
        fixtures = config._path("provider.fixtures")
        if fixtures is None:
            raise ConfigError("the scripted provider needs provider.fixtures")
        try:
            return ScriptedGenerator.from_file(fixtures)
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot load fixtures {fixtures}: {e}") from e

    if not config.get("provider.endpoint"):
        raise ConfigError(
            "provider.endpoint is required (config file, DOC2EG_ENDPOINT or --endpoint)"
        )
    if not config.get("provider.model"):
        raise ConfigError(
            "provider.model is required (config file, DOC2EG_MODEL or --model)"
        )
    return ChatGenerator(
        ChatCompletionClient(
            endpoint=config.get("provider.endpoint"),
            model=config.get("provider.model"),
            api_key=config.api_key(environ),
            verify=bool(config.get("provider.verify")),
            max_retries=int(config.get("provider.max_retries")),
            backoff_factor=float(config.get("provider.backoff_factor")),
            timeout=float(config.get("provider.timeout")),
        )
    )


def build_embedder(config: RunConfig, environ: Optional[Mapping[str, str]] = None):
    if config.get("embedding.kind") == "hashed":
        return HashedBagOfWordsEmbedder(int(config.get("embedding.dimension")))

    endpoint = config.get("embedding.endpoint") or config.get("provider.endpoint")
    if not endpoint or not config.get("embedding.model"):
        raise ConfigError(
            "an http embedder needs embedding.endpoint and embedding.model"
        )
    return HttpEmbedder(
        EmbeddingClient(
            endpoint=endpoint,
            model=config.get("embedding.model"),
            api_key=config.api_key(environ),
            verify=bool(config.get("provider.verify")),
            max_retries=int(config.get("provider.max_retries")),
            backoff_factor=float(config.get("provider.backoff_factor")),
            timeout=float(config.get("provider.timeout")),
        )
    )


def build_gateway(
    config: RunConfig,
    environ: Optional[Mapping[str, str]] = None,
    generator: bool = True,
    embedder: bool = True,
    cache_namespace: str = "",
    generator_factory: Optional[Callable] = None,
) -> Gateway:
    cache_dir = config._path("paths.cache")
    factory = generator_factory or build_generator
    return Gateway(
        generator=factory(config, environ) if generator else None,
        embedder=build_embedder(config, environ) if embedder else None,
        stage_params=config.stage_params(),
        cache=ResponseCache(cache_dir, cache_namespace) if cache_dir else None,
        max_concurrency=int(config.get("parallelism.requests")),
        embedding_batch_size=int(config.get("embedding.batch_size")),
    )
