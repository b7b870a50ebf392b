"""
Run configuration.

A run is described by a YAML file (every key is optional)::

    provider:
      kind: openai
      model: gpt-4o
    runs: 3
    temperature: 0.0
    concurrency: 4
    ablate_reasoning: false
    test: my_test.yaml          # bundled SCL-90 when omitted
    criteria: my_criteria.yaml  # bundled criteria when omitted
    templates:
      items_reasoning: reasoning.txt
      symptom_assessment: assessment.txt
    language: en
    history: {sessions: false, assessments: false, outcomes: false}
    positive_class: worsened    # positive (assessments), maintained_or_improved (outcomes) otherwise
    seed: 0
    out: results/gpt-4o

Command-line flags override the file. Credentials never appear here: they are
read from environment variables by the providers.
"""

import io
import os
from typing import Any, Dict, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from bronx.fancies import loggers

from . import prompts
from .core import HistoryFlags
from .engine import EngineConfig
from .metrics import DetectionLabel
from .outcome import Direction
from .psychometric import bundled_criteria, bundled_test, load_criteria_file, load_test_file
from .util import TherapyEvalError

#: No automatic export
__all__ = []

logger = loggers.getLogger(__name__)

#: Keys that must never be written in a configuration file
_SECRET_HINTS = ('key', 'token', 'secret', 'password')


class ConfigError(TherapyEvalError):
    """An invalid or unreadable run configuration."""
    pass


class HistoryConfig(BaseModel):
    model_config = ConfigDict(extra='forbid')

    sessions: bool = False
    assessments: bool = False
    outcomes: bool = False


class RunConfig(BaseModel):
    """Everything that defines a run."""

    model_config = ConfigDict(extra='forbid')

    provider: Dict[str, Any] = Field(default_factory=lambda: dict(kind='scripted'))
    model: Optional[str] = None
    test: Optional[str] = None
    criteria: Optional[str] = None
    templates: Dict[str, str] = Field(default_factory=dict)
    language: str = 'en'
    ablate_reasoning: bool = False
    runs: int = Field(default=3, ge=1)
    concurrency: int = Field(default=4, ge=1)
    temperature: float = Field(default=0.0, ge=0)
    max_output_tokens: int = Field(default=2048, gt=0)
    seed: int = 0
    out: Optional[str] = None
    history: HistoryConfig = Field(default_factory=HistoryConfig)
    positive_class: Optional[str] = None
    min_turns: Optional[int] = Field(default=None, ge=0)
    max_turns: Optional[int] = Field(default=None, ge=0)
    exemplars_k: int = Field(default=5, ge=1)

    @field_validator('provider')
    @classmethod
    def _check_provider(cls, value):
        if 'kind' not in value:
            raise ValueError('The provider description needs a kind')
        for k in value:
            if any(hint in k.lower() for hint in _SECRET_HINTS):
                raise ValueError('Credentials ({:s}) must be given through environment variables'.format(k))
        return value

    @field_validator('positive_class')
    @classmethod
    def _check_positive_class(cls, value):
        labels = [label.value for label in DetectionLabel] + [d.value for d in Direction]
        if value is not None and value not in labels:
            raise ValueError('Unknown positive class {!r} (one of: {:s})'.format(value, ', '.join(labels)))
        return value

    @field_validator('templates')
    @classmethod
    def _check_templates(cls, value):
        unknown = set(value) - {k.value for k in prompts.PromptKind}
        if unknown:
            raise ValueError('Unknown template kinds: {:s}'.format(', '.join(sorted(unknown))))
        return value

    @model_validator(mode='after')
    def _check_files(self):
        for path in [self.test, self.criteria] + list(self.templates.values()):
            if path is not None and not os.path.isfile(path):
                raise ValueError('No such file: {:s}'.format(path))
        return self

    def provider_description(self):
        """The footprint description of the provider."""
        description = dict(self.provider)
        if self.model:
            description['model'] = self.model
        description.setdefault('concurrency', self.concurrency)
        return description

    def load_test(self):
        return load_test_file(self.test) if self.test else bundled_test()

    def load_criteria(self):
        return load_criteria_file(self.criteria) if self.criteria else bundled_criteria()

    def history_flags(self):
        return HistoryFlags(sessions=self.history.sessions, assessments=self.history.assessments,
                            outcomes=self.history.outcomes)

    def engine_config(self, run_index=0, test=None, criteria=None):
        """The assessment engine configuration of one run."""
        test = test or self.load_test()
        criteria = criteria or self.load_criteria()
        components = {kind: prompts.load_components(kind, path=self.templates.get(kind.value),
                                                    language=self.language)
                      for kind in prompts.PromptKind}
        return EngineConfig.build(test, criteria,
                                  reasoning_components=components[prompts.PromptKind.ITEMS_REASONING],
                                  assessment_components=components[prompts.PromptKind.SYMPTOM_ASSESSMENT],
                                  ablate_reasoning=self.ablate_reasoning, run_index=run_index,
                                  model=self.model or self.provider.get('model'),
                                  temperature=self.temperature,
                                  max_output_tokens=self.max_output_tokens)

    def snapshot(self):
        """JSON-able copy of the configuration (stored in artifacts, output location excluded)."""
        return self.model_dump(mode='json', exclude={'out'})


def load_config(path=None, **overrides):
    """
    Read a configuration file (if any) and apply ``overrides`` (``None``
    values are ignored).
    """
    raw = dict()
    if path is not None:
        try:
            with io.open(path, encoding='utf-8') as fhconf:
                raw = yaml.safe_load(fhconf) or dict()
        except (OSError, yaml.YAMLError) as trouble:
            raise ConfigError('Could not read the configuration file {:s}: {!s}'.format(path, trouble))
        if not isinstance(raw, dict):
            raise ConfigError('The configuration file {:s} is not a mapping'.format(path))
    for k, v in overrides.items():
        if v is None:
            continue
        if k == 'provider' and isinstance(v, str):
            v = dict(raw.get('provider', dict()), kind=v)
        raw[k] = v
    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as trouble:
        raise ConfigError('Invalid configuration: {!s}'.format(trouble))
    logger.debug('Run configuration: %s', config.snapshot())
    return config
