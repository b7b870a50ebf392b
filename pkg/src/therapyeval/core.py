"""
Domain types for clients and therapy sessions, and the assembly of the
client-contextual input fed to both assessment stages.

The composed input is made of the client profile, the current session and
an optional history (past sessions, past assessments, past outcomes)::

    >>> s1 = Session('S1', [Turn('therapist', 'Hi'), Turn('client', 'Hello')])
    >>> info = assemble_client_information(ClientProfile('P1'), s1, ClientHistory())
    >>> print(render_context(info))
    Client Profile:
    No profile information available.
    <BLANKLINE>
    Interview (S1):
    Therapist: Hi
    Client: Hello

"""

import dataclasses
import enum
from typing import Optional, Tuple

from bronx.fancies import loggers

from .util import TherapyEvalError

#: No automatic export
__all__ = []

logger = loggers.getLogger(__name__)

#: Rendered speaker labels
SPEAKER_LABELS = {'therapist': 'Therapist', 'client': 'Client'}


class CoreModelError(TherapyEvalError):
    """Inconsistent client or session material."""
    pass


class EmptySessionError(CoreModelError, ValueError):
    """A session without any turn."""
    pass


class HistoryLeakError(CoreModelError, ValueError):
    """The current session is also part of the history."""
    pass


class Speaker(str, enum.Enum):
    """The two parties of a clinical interview."""
    THERAPIST = 'therapist'
    CLIENT = 'client'

    @property
    def label(self):
        return SPEAKER_LABELS[self.value]


class Phase(str, enum.Enum):
    """Treatment phase of a session (when known)."""
    INITIAL = 'initial'
    FINAL = 'final'


@dataclasses.dataclass(frozen=True)
class Turn:
    """One utterance."""

    speaker: Speaker
    text: str

    def __post_init__(self):
        try:
            object.__setattr__(self, 'speaker', Speaker(self.speaker))
        except ValueError:
            raise CoreModelError('Unknown speaker {!r}'.format(self.speaker))
        if not isinstance(self.text, str) or not self.text.strip():
            raise CoreModelError('Empty utterance for speaker {:s}'.format(self.speaker.value))
        object.__setattr__(self, 'text', self.text.strip())

    def render(self):
        return '{:s}: {:s}'.format(self.speaker.label, self.text)

    def as_dict(self):
        return dict(speaker=self.speaker.value, text=self.text)


@dataclasses.dataclass(frozen=True)
class Session:
    """An ordered list of turns, optionally tagged with a treatment phase."""

    id: str
    turns: Tuple[Turn, ...]
    phase: Optional[Phase] = None
    language: str = 'en'
    client_id: Optional[str] = None

    def __post_init__(self):
        if not self.id:
            raise CoreModelError('A session needs a non-empty identifier')
        object.__setattr__(self, 'turns', tuple(self.turns))
        if not self.turns:
            raise EmptySessionError('Session {:s} has no turns'.format(self.id))
        if self.phase is not None:
            object.__setattr__(self, 'phase', Phase(self.phase))
        if self.client_id is None:
            object.__setattr__(self, 'client_id', self.id)

    def __len__(self):
        return len(self.turns)

    def render(self):
        """The transcript, one ``Speaker: text`` line per turn."""
        return '\n'.join(t.render() for t in self.turns)

    def as_dict(self):
        rdict = dict(id=self.id, client_id=self.client_id, language=self.language,
                     turns=[t.as_dict() for t in self.turns])
        if self.phase is not None:
            rdict['phase'] = self.phase.value
        return rdict

    @classmethod
    def from_dict(cls, rdict):
        return cls(id=rdict['id'],
                   turns=[Turn(t['speaker'], t['text']) for t in rdict['turns']],
                   phase=rdict.get('phase'),
                   language=rdict.get('language', 'en'),
                   client_id=rdict.get('client_id'))


@dataclasses.dataclass(frozen=True)
class ClientProfile:
    """Who the client is (demographics, presenting concern...)."""

    id: str
    attributes: Optional[str] = None

    def __post_init__(self):
        if not self.id:
            raise CoreModelError('A client profile needs a non-empty identifier')


@dataclasses.dataclass(frozen=True)
class ClientHistory:
    """
    Material from the past, in chronological order.

    ``past_assessments`` holds :class:`therapyeval.psychometric.AssessmentScores`
    objects, one per past session (``None`` when a session was not assessed),
    and ``past_outcomes`` holds :class:`therapyeval.outcome.OutcomeRecord` objects.
    """

    past_sessions: Tuple[Session, ...] = ()
    past_assessments: Tuple[object, ...] = ()
    past_outcomes: Tuple[object, ...] = ()

    def __post_init__(self):
        for fname in ('past_sessions', 'past_assessments', 'past_outcomes'):
            object.__setattr__(self, fname, tuple(getattr(self, fname)))

    def __bool__(self):
        return bool(self.past_sessions or self.past_assessments or self.past_outcomes)


@dataclasses.dataclass(frozen=True)
class HistoryFlags:
    """Which parts of the history are kept in the client information."""

    sessions: bool = False
    assessments: bool = False
    outcomes: bool = False

    @classmethod
    def all(cls):
        return cls(sessions=True, assessments=True, outcomes=True)


@dataclasses.dataclass(frozen=True)
class ClientInformation:
    """The client-informed input of one assessment."""

    profile: ClientProfile
    session: Session
    history: ClientHistory = dataclasses.field(default_factory=ClientHistory)

    def __post_init__(self):
        if any(s.id == self.session.id for s in self.history.past_sessions):
            raise HistoryLeakError('Session {:s} is both current and past material'
                                   .format(self.session.id))

    @property
    def client_id(self):
        return self.profile.id

    @property
    def session_id(self):
        return self.session.id


def assemble_client_information(profile, session, history, include=HistoryFlags()):
    """
    Compose the client information, keeping only the history parts selected
    by the ``include`` flags.
    """
    if not getattr(session, 'turns', None):
        raise EmptySessionError('Cannot assess an empty session')
    history = history or ClientHistory()
    kept = ClientHistory(
        past_sessions=history.past_sessions if include.sessions else (),
        past_assessments=history.past_assessments if include.assessments else (),
        past_outcomes=history.past_outcomes if include.outcomes else (),
    )
    if any(s.id == session.id for s in history.past_sessions):
        raise HistoryLeakError('Session {:s} is both current and past material'.format(session.id))
    logger.debug('Client information for %s/%s: %d past sessions, %d past assessments, %d past outcomes',
                 profile.id, session.id, len(kept.past_sessions),
                 len(kept.past_assessments), len(kept.past_outcomes))
    return ClientInformation(profile=profile, session=session, history=kept)


def _render_scores(scores):
    return '; '.join('{:s}: {:d}'.format(k, v) for k, v in scores.scores.items())


def _render_outcome(outcome):
    return 'PSDI {:.2f} -> {:.2f} (change {:+.2f}, {:s})'.format(
        outcome.psdi_initial.value, outcome.psdi_final.value,
        outcome.delta, outcome.direction.value
    )


def render_context(info):
    """
    Text of the client information: the profile, then the history blocks in
    chronological order, then the current interview.
    """
    blocks = ['Client Profile:\n{:s}'.format(info.profile.attributes or 'No profile information available.')]
    for i, past in enumerate(info.history.past_sessions, start=1):
        blocks.append('Past Session {:d} ({:s}):\n{:s}'.format(i, past.id, past.render()))
    for i, scores in enumerate(info.history.past_assessments, start=1):
        if scores is not None:
            blocks.append('Past Assessment {:d}:\n{:s}'.format(i, _render_scores(scores)))
    for i, outcome in enumerate(info.history.past_outcomes, start=1):
        blocks.append('Past Outcome {:d}:\n{:s}'.format(i, _render_outcome(outcome)))
    blocks.append('Interview ({:s}):\n{:s}'.format(info.session.id, info.session.render()))
    return '\n\n'.join(blocks)
