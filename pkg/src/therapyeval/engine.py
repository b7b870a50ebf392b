"""
The two-stage assessment of a client: items-aware reasoning, then symptom
assessment conditioned on the reasoning.

Format errors never stop the pipeline:

  * a failed reasoning stage degrades to a reasoning-free assessment;
  * a failed assessment stage yields the all-(-1) fallback scores.

Transport errors (after the provider's retries) do propagate.
"""

import dataclasses
from typing import Optional, Tuple

from bronx.fancies import loggers

from . import prompts
from .core import render_context
from .gateway import (CompletionRequest, FormatError, ReasoningItem, complete,
                      decode_assessment, decode_reasoning, encode_reasoning)
from .psychometric import AssessmentScores

#: No automatic export
__all__ = []

logger = loggers.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class EngineConfig:
    """Everything an assessment needs besides the client and the provider."""

    test: object
    criteria: object
    reasoning_template: prompts.PromptTemplate
    assessment_template: prompts.PromptTemplate
    ablate_reasoning: bool = False
    run_index: int = 0
    model: Optional[str] = None
    temperature: float = 0.0
    max_output_tokens: int = 2048

    def __post_init__(self):
        if self.reasoning_template.kind is not prompts.PromptKind.ITEMS_REASONING:
            raise prompts.SlotMismatchError('The reasoning template has the wrong kind')
        if self.assessment_template.kind is not prompts.PromptKind.SYMPTOM_ASSESSMENT:
            raise prompts.SlotMismatchError('The assessment template has the wrong kind')

    @classmethod
    def build(cls, test, criteria, reasoning_components=None, assessment_components=None,
              language='en', **kw):
        """Build the templates (the bundled ones by default) and the configuration."""
        if reasoning_components is None:
            reasoning_components = prompts.load_components(prompts.PromptKind.ITEMS_REASONING,
                                                           language=language)
        if assessment_components is None:
            assessment_components = prompts.load_components(prompts.PromptKind.SYMPTOM_ASSESSMENT,
                                                            language=language)
        return cls(test=test, criteria=criteria,
                   reasoning_template=prompts.build_reasoning_prompt(reasoning_components, test),
                   assessment_template=prompts.build_assessment_prompt(assessment_components,
                                                                       test, criteria),
                   **kw)

    def with_run(self, run_index):
        return dataclasses.replace(self, run_index=run_index)

    def request_options(self):
        return dict(model=self.model, temperature=self.temperature,
                    max_output_tokens=self.max_output_tokens)


@dataclasses.dataclass(frozen=True)
class AssessmentRecord:
    """The result of one assessment."""

    client_id: str
    session_id: str
    reasoning: Tuple[ReasoningItem, ...]
    scores: AssessmentScores
    errors: Tuple[FormatError, ...] = ()
    run_index: int = 0
    provider_model: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'reasoning', tuple(self.reasoning))
        object.__setattr__(self, 'errors', tuple(self.errors))

    @property
    def key(self):
        return (self.client_id, self.session_id)

    def as_dict(self):
        return dict(client_id=self.client_id, session_id=self.session_id,
                    run_index=self.run_index, provider_model=self.provider_model,
                    reasoning=[i.as_dict() for i in self.reasoning],
                    scores=self.scores.as_dict(),
                    errors=[e.as_dict() for e in self.errors])

    @classmethod
    def from_dict(cls, rdict):
        return cls(client_id=rdict['client_id'], session_id=rdict['session_id'],
                   reasoning=[ReasoningItem.from_dict(i) for i in rdict.get('reasoning', ())],
                   scores=AssessmentScores(rdict['scores']),
                   errors=[FormatError.from_dict(e) for e in rdict.get('errors', ())],
                   run_index=rdict.get('run_index', 0),
                   provider_model=rdict.get('provider_model', ''))


def _request(messages, provider, model=None, temperature=0.0, max_output_tokens=2048):
    return CompletionRequest(messages=messages, model=model or provider.model,
                             temperature=temperature, max_output_tokens=max_output_tokens)


def run_items_reasoning(info, template, provider, **options):
    """
    Stage 1: link client statements to checklist items.

    Return ``(items, errors)``; on a decode failure ``items`` is empty.
    """
    if template.kind is not prompts.PromptKind.ITEMS_REASONING:
        raise prompts.SlotMismatchError('Expected an items-aware reasoning template')
    messages = prompts.render_messages(template, render_context(info))
    response = complete(provider, _request(messages, provider, **options))
    decoded = decode_reasoning(response.raw_text, template.test)
    if isinstance(decoded, FormatError):
        logger.warning('Reasoning stage failed for %s/%s: %s (%s)',
                       info.client_id, info.session_id, decoded.kind.value, decoded.detail)
        return [], [decoded]
    logger.debug('Reasoning stage for %s/%s: %d items', info.client_id, info.session_id, len(decoded))
    return decoded, []


def run_assessment(info, reasoning, template, provider, **options):
    """
    Stage 2: score every symptom dimension.

    An empty (or ``None``) ``reasoning`` leaves the reasoning block out of
    the prompt. Return ``(scores, errors)``; on a decode failure ``scores``
    is the all-(-1) fallback.
    """
    if template.kind is not prompts.PromptKind.SYMPTOM_ASSESSMENT:
        raise prompts.SlotMismatchError('Expected a symptom assessment template')
    reasoning_text = encode_reasoning(reasoning) if reasoning else None
    messages = prompts.render_messages(template, render_context(info), reasoning_text)
    response = complete(provider, _request(messages, provider, **options))
    decoded = decode_assessment(response.raw_text, template.test, template.criteria)
    if isinstance(decoded, FormatError):
        logger.warning('Assessment stage failed for %s/%s: %s (%s)',
                       info.client_id, info.session_id, decoded.kind.value, decoded.detail)
        return AssessmentScores.fallback(template.test), [decoded]
    return decoded, []


def assess(info, config, provider):
    """Run both stages for ``info`` (stage 1 is skipped when ablated)."""
    options = config.request_options()
    errors = list()
    reasoning = list()
    if not config.ablate_reasoning:
        reasoning, rerrors = run_items_reasoning(info, config.reasoning_template, provider, **options)
        errors.extend(rerrors)
    scores, aerrors = run_assessment(info, reasoning, config.assessment_template, provider, **options)
    errors.extend(aerrors)
    record = AssessmentRecord(client_id=info.client_id, session_id=info.session_id,
                              reasoning=reasoning, scores=scores, errors=errors,
                              run_index=config.run_index,
                              provider_model=config.model or provider.model)
    logger.info('Assessed %s/%s (run %d): %d reasoning items, %d errors',
                record.client_id, record.session_id, record.run_index,
                len(record.reasoning), len(record.errors))
    return record
