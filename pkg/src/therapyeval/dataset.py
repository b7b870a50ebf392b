"""
Transcript ingestion, session filtering, corpus statistics and the
construction of (initial stage, full session) pairs.

Transcripts come in two formats, each read by a footprint class of the
``transcriptreader`` collector:

  * ``speaker_lines``: one ``Speaker: text`` line per utterance;
  * ``structured_records``: a JSON object
    ``{"id": ..., "turns": [{"speaker": ..., "text": ...}], "phase": ..., "language": ...}``.

Token counts are delegated to the ``tokenizer`` collector (``whitespace`` or
``cjk_chars``).
"""

import dataclasses
import io
import json
import os
import random
import re
from typing import List, Literal, Optional, Tuple

import footprints
import numpy as np
from pydantic import BaseModel, ConfigDict, StrictInt, ValidationError

from bronx.fancies import loggers

from .core import CoreModelError, Phase, Session, Turn
from .gateway import CompletionRequest, FormatError, FormatErrorKind, complete, extract_structured
from .prompts import parse_components, template_path
from .util import TherapyEvalError, canonical_json, dump_jsonl, normalize_name, read_jsonl, text_fingerprint

#: No automatic export
__all__ = []

logger = loggers.getLogger(__name__)

#: Session length bounds (in utterances)
MIN_TURNS = 25
MAX_TURNS = 102

#: Number of exemplars shown to the model when extracting an initial stage
DEFAULT_EXEMPLARS = 5

#: Speaker labels always recognised
STRICT_ALIASES = {
    'therapist': 'therapist', '咨询师': 'therapist', '心理咨询师': 'therapist',
    'client': 'client', '来访者': 'client', '求助者': 'client',
}

#: Additional speaker labels recognised in lenient mode
LENIENT_ALIASES = {
    'counselor': 'therapist', 'counsellor': 'therapist', 'psychologist': 'therapist',
    'interviewer': 'therapist', 'doctor': 'therapist', 't': 'therapist', '医生': 'therapist',
    'patient': 'client', 'user': 'client', 'interviewee': 'client', 'c': 'client',
    '患者': 'client', '用户': 'client',
}

_SPEAKER_LINE = re.compile(r'^\s*([^:：]{1,40}?)\s*[:：]\s*(.*)$')
_CJK = r"\u3400-\u4dbf\u4e00-\u9fff\uf900-\ufaff"
_CJK_PUNCT = r"\u3000-\u303f\uff00-\uffef"
_CJK_TOKENS = re.compile('[{0:s}]|[^\\s{0:s}{1:s}]+'.format(_CJK, _CJK_PUNCT))


class DatasetError(TherapyEvalError):
    """Anything wrong with transcripts, corpora or pairs."""
    pass


class TranscriptFormatError(DatasetError, ValueError):
    """A transcript that does not follow its documented format."""
    pass


class UnknownSpeakerError(DatasetError, ValueError):
    pass


class EmptyTranscriptError(DatasetError, ValueError):
    pass


class InvalidBoundsError(DatasetError, ValueError):
    pass


class EmptyCorpusError(DatasetError, ValueError):
    pass


class PhaseFormatError(DatasetError):
    """The model's answer to an initial-stage extraction does not decode."""

    def __init__(self, format_error):
        super().__init__('{:s}: {:s}'.format(format_error.kind.value, format_error.detail))
        self.format_error = format_error


class NonPrefixSpanError(DatasetError, ValueError):
    """The extracted span is not a proper prefix of the session."""
    pass


# Tokenizers

class Tokenizer(footprints.FootprintBase):
    """Abstract tokenizer."""

    _abstract = True
    _collector = ('tokenizer',)
    _footprint = dict(
        info='Abstract tokenizer',
    )

    @property
    def realkind(self):
        return 'tokenizer'

    def tokens(self, text):
        raise NotImplementedError()

    def count(self, text):
        return len(self.tokens(text))


class WhitespaceTokenizer(Tokenizer):
    """Words are separated by blanks."""

    _footprint = dict(
        info='Whitespace-delimited words',
        attr=dict(
            kind=dict(
                values=['whitespace'],
            ),
        )
    )

    def tokens(self, text):
        return text.split()


class CjkCharTokenizer(Tokenizer):
    """Each CJK character is a token; other runs are whitespace-delimited words."""

    _footprint = dict(
        info='CJK characters',
        attr=dict(
            kind=dict(
                values=['cjk_chars'],
            ),
        )
    )

    def tokens(self, text):
        return _CJK_TOKENS.findall(text)


def get_tokenizer(tokenizer):
    """A tokenizer object from its kind (or the object itself)."""
    if isinstance(tokenizer, Tokenizer):
        return tokenizer
    found = footprints.proxy.tokenizer(kind=str(tokenizer))
    if found is None:
        raise DatasetError('Unknown tokenizer: {!s}'.format(tokenizer))
    return found


# Transcript readers

class _TurnRecord(BaseModel):
    model_config = ConfigDict(extra='forbid')

    speaker: str
    text: str


class _SessionRecord(BaseModel):
    model_config = ConfigDict(extra='forbid')

    id: str
    turns: List[_TurnRecord]
    phase: Optional[Literal['initial', 'final']] = None
    language: str = 'en'
    client_id: Optional[str] = None


class TranscriptReader(footprints.FootprintBase):
    """Abstract transcript reader."""

    _abstract = True
    _collector = ('transcriptreader',)
    _footprint = dict(
        info='Abstract transcript reader',
        attr=dict(
            strict=dict(
                info='Only accept the canonical speaker labels',
                type=bool,
                optional=True,
                default=True,
            ),
        )
    )

    @property
    def realkind(self):
        return 'transcriptreader'

    def speaker(self, label):
        """The normalized speaker for ``label`` (``None`` if unknown)."""
        key = normalize_name(label)
        found = STRICT_ALIASES.get(key)
        if found is None and not self.strict:
            found = LENIENT_ALIASES.get(key)
        return found

    def read(self, content, session_id=None, language='en', client_id=None):
        raise NotImplementedError()


class SpeakerLinesReader(TranscriptReader):
    """``Speaker: text`` lines; blank lines are skipped."""

    _footprint = dict(
        info='Speaker-prefixed lines',
        attr=dict(
            kind=dict(
                values=['speaker_lines'],
            ),
        )
    )

    def read(self, content, session_id=None, language='en', client_id=None):
        turns = list()
        for lineno, line in enumerate(content.splitlines(), start=1):
            if not line.strip():
                continue
            match = _SPEAKER_LINE.match(line)
            speaker = self.speaker(match.group(1)) if match else None
            if speaker is not None and match.group(2).strip():
                turns.append([speaker, match.group(2).strip()])
            elif speaker is not None:
                continue
            elif not self.strict and turns:
                turns[-1][1] += ' ' + line.strip()
            else:
                raise UnknownSpeakerError('Line {:d}: unknown speaker in {!r}'.format(lineno, line.strip()[:60]))
        if not turns:
            raise EmptyTranscriptError('Transcript {!s} has no utterance'.format(session_id))
        return Session(id=session_id or 'session', turns=[Turn(s, t) for s, t in turns],
                       language=language, client_id=client_id)


class StructuredRecordsReader(TranscriptReader):
    """One JSON record per session."""

    _footprint = dict(
        info='Structured session records',
        attr=dict(
            kind=dict(
                values=['structured_records'],
            ),
        )
    )

    def read(self, content, session_id=None, language='en', client_id=None):
        if isinstance(content, (str, bytes)):
            try:
                content = json.loads(content)
            except ValueError as trouble:
                raise TranscriptFormatError('Unparsable session record: {!s}'.format(trouble))
        try:
            record = _SessionRecord.model_validate(content)
        except ValidationError as trouble:
            raise TranscriptFormatError('Invalid session record: {!s}'.format(trouble))
        if not record.turns:
            raise EmptyTranscriptError('Session {:s} has no utterance'.format(record.id))
        turns = list()
        for turn in record.turns:
            speaker = self.speaker(turn.speaker)
            if speaker is None:
                raise UnknownSpeakerError('Session {:s}: unknown speaker {!r}'.format(record.id, turn.speaker))
            if turn.text.strip():
                turns.append(Turn(speaker, turn.text))
        if not turns:
            raise EmptyTranscriptError('Session {:s} has no utterance'.format(record.id))
        return Session(id=record.id, turns=turns, phase=record.phase, language=record.language,
                       client_id=record.client_id or client_id)


def get_reader(fmt, strict=True):
    found = footprints.proxy.transcriptreader(kind=str(fmt), strict=bool(strict))
    if found is None:
        raise DatasetError('Unknown transcript format: {!s}'.format(fmt))
    return found


def parse_transcript(content, fmt='speaker_lines', strict=True, **kw):
    """Read one session from ``content`` in the ``fmt`` format."""
    return get_reader(fmt, strict=strict).read(content, **kw)


# Corpora

@dataclasses.dataclass(frozen=True)
class Corpus:
    """A named collection of sessions, possibly with phase pairs."""

    name: str
    sessions: Tuple[Session, ...]
    pairs: Optional[Tuple[Tuple[Session, Session], ...]] = None

    def __post_init__(self):
        object.__setattr__(self, 'sessions', tuple(self.sessions))
        if self.pairs is not None:
            object.__setattr__(self, 'pairs', tuple(tuple(p) for p in self.pairs))
            known = {s.id for s in self.sessions}
            for initial, full in self.pairs:
                if initial.client_id != full.client_id:
                    raise DatasetError('Pair {:s}/{:s} mixes two clients'.format(initial.id, full.id))
                if initial.id not in known or full.id not in known:
                    raise DatasetError('Pair {:s}/{:s} is not part of corpus {:s}'
                                       .format(initial.id, full.id, self.name))

    def __len__(self):
        return len(self.sessions)

    def __iter__(self):
        yield from self.sessions

    def session(self, session_id):
        for s in self.sessions:
            if s.id == session_id:
                return s
        raise KeyError(session_id)

    @property
    def client_ids(self):
        return sorted({s.client_id for s in self.sessions})


@dataclasses.dataclass(frozen=True)
class DatasetStats:
    """Summary of a corpus (utterances per session, tokens per utterance)."""

    n_clients: int
    n_sessions: int
    avg_utterances: float
    std_utterances: float
    avg_words_per_utterance: float
    std_words_per_utterance: float

    def as_dict(self):
        return dataclasses.asdict(self)


def load_corpus(path, fmt=None, strict=True, language='en', name=None):
    """
    Load sessions from a JSONL file of structured records or from a directory
    of ``*.txt`` speaker-lines transcripts (the file stem is the session id).

    Return ``(corpus, errors)``, where ``errors`` lists ``(source, message)``
    pairs for the transcripts that could not be read.
    """
    sessions = list()
    errors = list()
    name = name or os.path.splitext(os.path.basename(os.path.normpath(path)))[0]
    if os.path.isdir(path):
        fmt = fmt or 'speaker_lines'
        for fname in sorted(os.listdir(path)):
            fpath = os.path.join(path, fname)
            if not os.path.isfile(fpath):
                continue
            if fmt == 'speaker_lines' and not fname.endswith('.txt'):
                continue
            with io.open(fpath, encoding='utf-8') as fhin:
                content = fhin.read()
            stem = os.path.splitext(fname)[0]
            try:
                sessions.append(parse_transcript(content, fmt, strict=strict, session_id=stem,
                                                 language=language))
            except (DatasetError, CoreModelError) as trouble:
                logger.warning('Ingestion error in %s: %s', fpath, trouble)
                errors.append((fpath, str(trouble)))
    elif os.path.isfile(path):
        for lineno, record in read_jsonl(path):
            source = '{:s}:{:d}'.format(path, lineno)
            if isinstance(record, Exception):
                logger.warning('Ingestion error in %s: %s', source, record)
                errors.append((source, str(record)))
                continue
            try:
                sessions.append(parse_transcript(record, fmt or 'structured_records', strict=strict))
            except (DatasetError, CoreModelError) as trouble:
                logger.warning('Ingestion error in %s: %s', source, trouble)
                errors.append((source, str(trouble)))
    else:
        raise DatasetError('No such corpus: {:s}'.format(path))
    seen = set()
    unique = list()
    for s in sessions:
        if s.id in seen:
            errors.append((s.id, 'Duplicate session identifier'))
            logger.warning('Duplicate session identifier %s in %s', s.id, path)
            continue
        seen.add(s.id)
        unique.append(s)
    logger.info('Corpus %s: %d sessions loaded, %d ingestion errors', name, len(unique), len(errors))
    return Corpus(name=name, sessions=unique), errors


def dump_sessions(path, sessions):
    """Write ``sessions`` as structured records (one per line)."""
    dump_jsonl(path, [s.as_dict() for s in sessions])


def filter_sessions(sessions, min_turns=MIN_TURNS, max_turns=MAX_TURNS):
    """The sessions whose number of utterances lies within the bounds (inclusive)."""
    if min_turns > max_turns or min_turns < 0:
        raise InvalidBoundsError('Invalid bounds: [{!s}, {!s}]'.format(min_turns, max_turns))
    kept = [s for s in sessions if min_turns <= len(s.turns) <= max_turns]
    logger.info('Filtering sessions within [%d, %d] turns: %d kept out of %d',
                min_turns, max_turns, len(kept), len(sessions))
    return kept


def _session_fingerprint(session):
    return text_fingerprint('{:s}:{:s}'.format(t.speaker.value, t.text) for t in session.turns)


def deduplicate_sessions(*collections):
    """Merge session collections, dropping exact textual duplicates (the first seen wins)."""
    seen = set()
    kept = list()
    for collection in collections:
        for session in collection:
            fingerprint = _session_fingerprint(session)
            if fingerprint in seen:
                logger.debug('Session %s is a duplicate', session.id)
                continue
            seen.add(fingerprint)
            kept.append(session)
    return kept


def corpus_stats(corpus, tokenizer='whitespace'):
    """Utterances per session and tokens per utterance (mean and population std)."""
    sessions = list(corpus)
    if not sessions:
        raise EmptyCorpusError('Statistics of an empty corpus are not defined')
    tokenizer = get_tokenizer(tokenizer)
    utterances = [len(s.turns) for s in sessions]
    words = [tokenizer.count(t.text) for s in sessions for t in s.turns]
    return DatasetStats(n_clients=len({s.client_id for s in sessions}),
                        n_sessions=len(sessions),
                        avg_utterances=float(np.mean(utterances)),
                        std_utterances=float(np.std(utterances)),
                        avg_words_per_utterance=float(np.mean(words)),
                        std_words_per_utterance=float(np.std(words)))


# Phase pairs

@dataclasses.dataclass(frozen=True)
class PhaseExemplar:
    """A session and the length of its initial stage, as shown to the model."""

    session: Session
    initial_turns: int

    def __post_init__(self):
        if not 1 <= self.initial_turns < len(self.session.turns):
            raise NonPrefixSpanError('Exemplar {:s}: the initial stage must be a proper prefix'
                                     .format(self.session.id))

    def as_dict(self):
        return dict(session=self.session.as_dict(), initial_turns=self.initial_turns)

    @classmethod
    def from_dict(cls, rdict):
        return cls(session=Session.from_dict(rdict['session']), initial_turns=rdict['initial_turns'])


@dataclasses.dataclass(frozen=True)
class PairingConfig:
    """How initial stages are extracted."""

    k: int = DEFAULT_EXEMPLARS
    seed: int = 0
    model: Optional[str] = None
    temperature: float = 0.0
    max_output_tokens: int = 256
    template: Optional[str] = None


class _PhaseSpan(BaseModel):
    model_config = ConfigDict(extra='forbid')

    first_turn: StrictInt
    last_turn: StrictInt


def load_exemplars(path):
    """Read exemplars from a JSONL file of ``{session, initial_turns}`` records."""
    exemplars = list()
    for lineno, record in read_jsonl(path):
        if isinstance(record, Exception):
            raise DatasetError('{:s}:{:d}: {!s}'.format(path, lineno, record))
        exemplars.append(PhaseExemplar.from_dict(record))
    return exemplars


def select_exemplars(exemplars, k=DEFAULT_EXEMPLARS, seed=0, exclude=None):
    """``k`` exemplars (randomly drawn with ``seed`` when more are available)."""
    pool = [e for e in exemplars if e.session.id != exclude]
    if not pool:
        raise DatasetError('At least one exemplar is needed')
    if len(pool) > k:
        pool = random.Random(seed).sample(pool, k)
    return pool


def _numbered(session, upto=None):
    turns = session.turns if upto is None else session.turns[:upto]
    return '\n'.join('{:d}. {:s}'.format(i, t.render()) for i, t in enumerate(turns, start=1))


def phase_messages(full, exemplars, template=None):
    """Chat messages asking for the initial stage of ``full``."""
    with io.open(template or template_path('phase_extraction'), encoding='utf-8') as fhtpl:
        components = parse_components(fhtpl.read())
    blocks = list()
    for i, exemplar in enumerate(exemplars, start=1):
        answer = canonical_json(dict(first_turn=1, last_turn=exemplar.initial_turns))
        blocks.append('Example {:d}:\n{:s}\nAnswer: {:s}'.format(i, _numbered(exemplar.session), answer))
    system = '\n\n'.join([
        'Role:\n' + components.role_text,
        'Directives:\n' + components.directives,
        'Additional Information:\n' + components.additional.replace('<Exemplars>', '\n\n'.join(blocks)),
        'Output Formatting:\n' + (components.output_format or
                                  'Answer with a single JSON object {"first_turn": 1, "last_turn": <n>} '
                                  'and nothing else.'),
    ])
    user = 'Session:\n{:s}'.format(_numbered(full))
    if components.closing:
        user += '\n\n' + components.closing
    return [dict(role='system', content=system), dict(role='user', content=user)]


def decode_phase_span(raw):
    """The ``(first_turn, last_turn)`` span of a model answer, or a :class:`FormatError`."""
    stage = 'phase_extraction'
    text = raw if isinstance(raw, str) else ''
    if not text.strip():
        return FormatError(FormatErrorKind.EMPTY_RESPONSE, 'The model returned no text', '', stage)
    obj = extract_structured(text)
    if obj is None:
        return FormatError(FormatErrorKind.NOT_STRUCTURED, 'No JSON document found', text, stage)
    try:
        span = _PhaseSpan.model_validate(obj)
    except (ValidationError, ValueError, TypeError) as trouble:
        return FormatError(FormatErrorKind.SCHEMA_VIOLATION, str(trouble).splitlines()[0], text, stage)
    return span.first_turn, span.last_turn


def build_phase_pair(full, exemplars, provider, config=PairingConfig()):
    """
    Ask the model for the initial stage of ``full`` and return the
    ``(initial, full)`` pair of sessions.
    """
    chosen = select_exemplars(exemplars, k=config.k, seed=config.seed, exclude=full.id)
    messages = phase_messages(full, chosen, config.template)
    request = CompletionRequest(messages=messages, model=config.model or provider.model,
                                temperature=config.temperature,
                                max_output_tokens=config.max_output_tokens)
    response = complete(provider, request)
    span = decode_phase_span(response.raw_text)
    if isinstance(span, FormatError):
        raise PhaseFormatError(span)
    first, last = span
    if first != 1 or not 1 <= last < len(full.turns):
        raise NonPrefixSpanError('Session {:s}: turns {:d}..{:d} are not a proper prefix of {:d} turns'
                                 .format(full.id, first, last, len(full.turns)))
    initial = Session(id='{:s}-initial'.format(full.id), turns=full.turns[:last], phase=Phase.INITIAL,
                      language=full.language, client_id=full.client_id)
    logger.info('Session %s: initial stage of %d turns out of %d', full.id, last, len(full.turns))
    return initial, dataclasses.replace(full, phase=Phase.FINAL)


def dump_pair_corpus(path, pairs):
    """Write the pair records ``{client_id, initial_session_id, full_session_id}``."""
    dump_jsonl(path, [dict(client_id=full.client_id, initial_session_id=initial.id,
                           full_session_id=full.id) for initial, full in pairs])


def load_pair_corpus(path, corpus):
    """
    Read pair records and resolve them against ``corpus``. Return
    ``(pairs, errors)`` where pairs are ``(client_id, initial, full)`` triples;
    unresolvable records are listed in ``errors``.
    """
    pairs = list()
    errors = list()
    for lineno, record in read_jsonl(path):
        source = '{:s}:{:d}'.format(path, lineno)
        if isinstance(record, Exception):
            errors.append((source, str(record)))
            continue
        if not isinstance(record, dict):
            errors.append((source, 'Not a pair record'))
            continue
        missing = [k for k in ('initial_session_id', 'full_session_id') if k not in record]
        if missing:
            errors.append((source, 'Missing field(s): {:s}'.format(', '.join(missing))))
            continue
        try:
            initial = corpus.session(record['initial_session_id'])
            full = corpus.session(record['full_session_id'])
        except KeyError as trouble:
            errors.append((source, 'Unknown session {!s}'.format(trouble)))
            continue
        pairs.append((record.get('client_id'), initial, full))
    return pairs, errors
