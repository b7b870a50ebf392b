"""
Chat-completion plumbing shared by every provider, strict decoding of the
structured outputs of both pipeline stages, and the format-error taxonomy.

Decoders never raise. They return either a decoded value or a
:class:`FormatError`: a model that does not follow the required structure is
something to measure, not to hide behind retries. Only transport-level
failures (network, rate limits, timeouts) are retried, by the providers
themselves (see :mod:`therapyeval.providers`).
"""

import dataclasses
import enum
import json
import re
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, StrictInt, ValidationError

from bronx.fancies import loggers

from .psychometric import AssessmentScores, definition_schema, validate_score
from .util import TherapyEvalError, digest, package_data

#: No automatic export
__all__ = []

logger = loggers.getLogger(__name__)

#: Name of the schema of the test-definition files
SCHEMA_TEST_DEFINITION = 'psychometric_test'

#: Maximum length of the raw text kept in a FormatError
EXCERPT_LENGTH = 200

#: Maximum number of opening brackets tried when salvaging a JSON document
SALVAGE_ATTEMPTS = 20

_FENCE = re.compile(r'```[ \t]*(?:json|JSON)?[ \t]*\n?(.*?)```', re.DOTALL)
_OPENERS = re.compile(r'[\{\[]')


# Transport errors

class ProviderError(TherapyEvalError):
    """A provider could not deliver a response."""
    pass


class TransportError(ProviderError):
    """Network-level failure (retried)."""
    pass


class RateLimitError(TransportError):
    """The remote service refused the request for quota reasons (retried)."""
    pass


class ProviderTimeout(TransportError):
    """No answer within the allotted time (retried)."""
    pass


class ScriptMissError(ProviderError):
    """A scripted or replayed provider has no response for a request."""
    pass


# Requests and responses

@dataclasses.dataclass(frozen=True)
class CompletionRequest:
    """One chat-completion call."""

    messages: Tuple[Dict[str, str], ...]
    model: str
    temperature: float = 0.0
    max_output_tokens: int = 2048

    def __post_init__(self):
        object.__setattr__(self, 'messages', tuple(dict(m) for m in self.messages))
        if not self.messages:
            raise ValueError('A completion request needs at least one message')
        if self.temperature < 0:
            raise ValueError('Negative temperature: {!s}'.format(self.temperature))
        if not isinstance(self.max_output_tokens, int) or self.max_output_tokens <= 0:
            raise ValueError('max_output_tokens must be a positive integer')

    def as_dict(self):
        return dict(messages=[dict(m) for m in self.messages], model=self.model,
                    temperature=self.temperature, max_output_tokens=self.max_output_tokens)

    @property
    def text(self):
        """All the message contents, concatenated."""
        return '\n'.join(m.get('content', '') for m in self.messages)


def request_digest(request):
    """Stable identifier of a request (sha256 of its canonical JSON form)."""
    return digest(request.as_dict())


@dataclasses.dataclass(frozen=True)
class ProviderResponse:
    """What a provider answered (``raw_text`` may be empty)."""

    raw_text: str
    usage: Optional[Dict[str, int]] = None
    latency: float = 0.0


def complete(provider, request):
    """Send ``request`` through ``provider`` (retry policy included)."""
    if not isinstance(request, CompletionRequest):
        raise TypeError('Expected a CompletionRequest, got {!r}'.format(type(request)))
    logger.debug('Completion request %s for model %s', request_digest(request)[:12], request.model)
    return provider.complete(request)


# Format errors

class FormatErrorKind(str, enum.Enum):
    """Everything that may go wrong when decoding a model output."""
    EMPTY_RESPONSE = 'empty_response'
    NOT_STRUCTURED = 'not_structured'
    SCHEMA_VIOLATION = 'schema_violation'
    UNKNOWN_DIMENSION = 'unknown_dimension'
    MISSING_DIMENSION = 'missing_dimension'
    INVALID_SCORE = 'invalid_score'


@dataclasses.dataclass(frozen=True)
class FormatError:
    """A decode failure (a value, not an exception)."""

    kind: FormatErrorKind
    detail: str
    raw_excerpt: str = ''
    stage: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'kind', FormatErrorKind(self.kind))
        object.__setattr__(self, 'raw_excerpt', (self.raw_excerpt or '')[:EXCERPT_LENGTH])

    def as_dict(self):
        return dict(kind=self.kind.value, detail=self.detail,
                    raw_excerpt=self.raw_excerpt, stage=self.stage)

    @classmethod
    def from_dict(cls, rdict):
        return cls(kind=rdict['kind'], detail=rdict['detail'],
                   raw_excerpt=rdict.get('raw_excerpt', ''), stage=rdict.get('stage', ''))


# Stage outputs

@dataclasses.dataclass(frozen=True)
class ReasoningItem:
    """A client statement linked to a symptom dimension, with a verdict."""

    client_statement: str
    symptom_category: str
    specific_symptom: str
    presence: bool
    explanation: str

    def __post_init__(self):
        for fname in ('client_statement', 'symptom_category', 'specific_symptom', 'explanation'):
            object.__setattr__(self, fname, str(getattr(self, fname)).strip())
        if not self.explanation:
            raise ValueError('A reasoning item needs an explanation')
        if not self.symptom_category:
            raise ValueError('A reasoning item needs a symptom category')
        object.__setattr__(self, 'presence', bool(self.presence))

    def as_dict(self):
        return dict(client_statement=self.client_statement,
                    symptom_category=self.symptom_category,
                    specific_symptom=self.specific_symptom,
                    presence=self.presence,
                    explanation=self.explanation)

    @classmethod
    def from_dict(cls, rdict):
        return cls(**{f.name: rdict[f.name] for f in dataclasses.fields(cls)})


class _ReasoningItemModel(BaseModel):
    model_config = ConfigDict(extra='forbid', str_strip_whitespace=True, title='Reasoning item')

    client_statement: str = Field(description="Part of the client's statements, quoted verbatim")
    symptom_category: str = Field(min_length=1, description='Name of the symptom dimension')
    specific_symptom: str = Field(description='Checklist item the statement relates to')
    presence: bool = Field(description='Whether the symptom is present')
    explanation: str = Field(min_length=1, description='Why the statement relates to the item')


class _ReasoningOutput(BaseModel):
    model_config = ConfigDict(extra='forbid', title='Items-aware reasoning result')

    items: List[_ReasoningItemModel]


class _AssessmentOutput(BaseModel):
    model_config = ConfigDict(extra='forbid', title='Symptom assessment scores')

    scores: Dict[str, StrictInt] = Field(description='One integer score per symptom dimension')


#: Decoding models of each stage output
_STAGE_MODELS = dict(items_reasoning=_ReasoningOutput, symptom_assessment=_AssessmentOutput)


def _as_text(raw):
    if raw is None:
        return ''
    if isinstance(raw, bytes):
        return raw.decode('utf-8', errors='replace')
    return str(raw)


def extract_structured(raw):
    """
    Find the structured document (a JSON object or array) in a model output.

    Markdown code fences are looked into first, then the whole text, then the
    text starting at each opening bracket, leftmost first. Return ``None`` when
    nothing decodes.
    """
    text = _as_text(raw).strip()
    candidates = [m.group(1).strip() for m in _FENCE.finditer(text)]
    candidates.append(text)
    for candidate in candidates:
        try:
            obj = json.loads(candidate)
        except (ValueError, RecursionError, TypeError):
            continue
        if isinstance(obj, (dict, list)):
            return obj
    decoder = json.JSONDecoder()
    for i, match in enumerate(_OPENERS.finditer(text)):
        if i >= SALVAGE_ATTEMPTS:
            break
        try:
            obj, _ = decoder.raw_decode(text, match.start())
        except (ValueError, RecursionError, TypeError):
            continue
        if isinstance(obj, (dict, list)):
            return obj
    return None


def _first_error(trouble):
    try:
        errors = trouble.errors()
    except Exception:
        return str(trouble)
    if not errors:
        return str(trouble)
    first = errors[0]
    return '{:s}: {:s}'.format('.'.join(str(p) for p in first.get('loc', ())) or '<root>',
                               first.get('msg', ''))


def _precheck(raw, stage):
    """Common first steps: empty text and unstructured text."""
    text = _as_text(raw)
    if not text.strip():
        return None, FormatError(FormatErrorKind.EMPTY_RESPONSE, 'The model returned no text', '', stage)
    obj = extract_structured(text)
    if obj is None:
        return None, FormatError(FormatErrorKind.NOT_STRUCTURED, 'No JSON document found', text, stage)
    return obj, None


def decode_reasoning(raw, test):
    """
    Decode the output of the items-aware reasoning stage.

    Return a list of :class:`ReasoningItem` (category names made canonical
    for ``test``) or a :class:`FormatError`.
    """
    stage = 'items_reasoning'
    obj, error = _precheck(raw, stage)
    if error:
        return error
    text = _as_text(raw)
    if isinstance(obj, list):
        obj = dict(items=obj)
    try:
        parsed = _ReasoningOutput.model_validate(obj)
    except (ValidationError, ValueError, TypeError, RecursionError) as trouble:
        return FormatError(FormatErrorKind.SCHEMA_VIOLATION, _first_error(trouble), text, stage)
    items = list()
    for i, pitem in enumerate(parsed.items):
        category = test.canonical(pitem.symptom_category)
        if category is None:
            return FormatError(FormatErrorKind.UNKNOWN_DIMENSION,
                               'Item {:d}: unknown symptom category {!r}'.format(i, pitem.symptom_category),
                               text, stage)
        items.append(ReasoningItem(client_statement=pitem.client_statement,
                                   symptom_category=category,
                                   specific_symptom=pitem.specific_symptom,
                                   presence=pitem.presence,
                                   explanation=pitem.explanation))
    return items


def decode_assessment(raw, test, criteria):
    """
    Decode the output of the symptom assessment stage.

    Return :class:`AssessmentScores` covering every dimension of ``test``
    (in the test's order) or a :class:`FormatError`.
    """
    stage = 'symptom_assessment'
    obj, error = _precheck(raw, stage)
    if error:
        return error
    text = _as_text(raw)
    if isinstance(obj, dict) and not isinstance(obj.get('scores'), dict):
        obj = dict(scores=obj)
    try:
        parsed = _AssessmentOutput.model_validate(obj)
    except (ValidationError, ValueError, TypeError, RecursionError) as trouble:
        return FormatError(FormatErrorKind.SCHEMA_VIOLATION, _first_error(trouble), text, stage)
    scores = dict()
    for name, value in parsed.scores.items():
        canonical = test.canonical(name)
        if canonical is None:
            return FormatError(FormatErrorKind.UNKNOWN_DIMENSION,
                               'Unknown dimension {!r}'.format(name), text, stage)
        if canonical in scores:
            return FormatError(FormatErrorKind.SCHEMA_VIOLATION,
                               'Dimension {!r} is scored twice'.format(canonical), text, stage)
        scores[canonical] = value
    missing = [name for name in test.dimension_names if name not in scores]
    if missing:
        return FormatError(FormatErrorKind.MISSING_DIMENSION,
                           'Missing dimensions: {:s}'.format(', '.join(missing)), text, stage)
    for name in test.dimension_names:
        if not validate_score(scores[name], criteria):
            return FormatError(FormatErrorKind.INVALID_SCORE,
                               'Invalid score {!s} for {:s}'.format(scores[name], name), text, stage)
    return AssessmentScores({name: scores[name] for name in test.dimension_names})


def encode_reasoning(items):
    """Canonical text of a list of reasoning items (what stage 2 is fed with)."""
    return json.dumps(dict(items=[item.as_dict() for item in items]), ensure_ascii=False, indent=2)


def encode_assessment(scores):
    """Canonical text of assessment scores."""
    return json.dumps(dict(scores=scores.as_dict()), ensure_ascii=False, indent=2)


# Format instructions

def json_schema(name):
    """
    JSON schema of a stage output (``items_reasoning``, ``symptom_assessment``)
    or of the test-definition files (``psychometric_test``), generated from
    the models the decoders validate with.
    """
    if name == SCHEMA_TEST_DEFINITION:
        return definition_schema()
    try:
        return _STAGE_MODELS[name].model_json_schema()
    except KeyError:
        raise ValueError('No schema named {!r}'.format(name))


def schema_path(name):
    """Path of the published copy of a schema."""
    return package_data('schemas', name + '.schema.json')


def load_schema_text(name):
    """Text of one of the JSON schemas."""
    return json.dumps(json_schema(name), ensure_ascii=False, indent=2)


def reasoning_format_instructions(test):
    """Default ``<Format Instructions>`` text of the items-aware reasoning stage."""
    return '\n'.join([
        'Answer with a single JSON object that validates against the following JSON schema:',
        load_schema_text('items_reasoning'),
        'Produce one item per extracted client statement.',
        'The "symptom_category" value must be one of: {:s}.'.format(', '.join(test.dimension_names)),
        'The "presence" value is true when the symptom is present and false otherwise.',
        'Do not write anything outside of the JSON object.',
    ])


def assessment_format_instructions(test, criteria):
    """Default ``<Format Instructions>`` text of the symptom assessment stage."""
    return '\n'.join([
        'Answer with a single JSON object that validates against the following JSON schema:',
        load_schema_text('symptom_assessment'),
        'The "scores" object must have exactly one key per symptom category: {:s}.'
        .format(', '.join(test.dimension_names)),
        'Each score must be one of: {:s}.'.format(', '.join(str(s) for s in criteria.scores)),
        'Do not write anything outside of the JSON object.',
    ])
