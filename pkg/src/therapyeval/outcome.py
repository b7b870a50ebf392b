"""
Treatment outcome: Positive Symptom Distress Index (PSDI) of an assessment,
its change between the initial and the final phase of a treatment, and the
resulting direction.

A dimension is *positive* when its score is at least :data:`POSITIVE_THRESHOLD`.
The PSDI is the mean score over positive dimensions; with no positive
dimension it is 0::

    >>> from therapyeval.psychometric import AssessmentScores
    >>> p = psdi(AssessmentScores({'Depression': 2, 'Anxiety': 1, 'Hostility': 0}))
    >>> p.value, p.positive_count
    (1.5, 2)
    >>> classify_outcome(delta_psdi(p, psdi(AssessmentScores({'Depression': 1}))))
    <Direction.MAINTAINED_OR_IMPROVED: 'maintained_or_improved'>

"""

from concurrent.futures import ThreadPoolExecutor
import dataclasses
import enum
from typing import FrozenSet

from bronx.fancies import loggers

from .engine import AssessmentRecord, assess
from .util import TherapyEvalError

#: No automatic export
__all__ = []

logger = loggers.getLogger(__name__)

#: Minimal score of a positive symptom
POSITIVE_THRESHOLD = 1


class OutcomeError(TherapyEvalError):
    """Anything wrong with an outcome evaluation."""
    pass


class ClientMismatchError(OutcomeError, ValueError):
    """The two phases of a pair do not belong to the same client."""
    pass


class Direction(str, enum.Enum):
    """How the symptoms evolved during the treatment."""
    WORSENED = 'worsened'
    MAINTAINED_OR_IMPROVED = 'maintained_or_improved'


@dataclasses.dataclass(frozen=True)
class PsdiValue:
    """
    Severity of one assessment: the mean score of the dimensions scored
    :data:`POSITIVE_THRESHOLD` or more (0. when there is none).
    """

    value: float
    positive_count: int
    positive_dimensions: FrozenSet[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, 'positive_dimensions', frozenset(self.positive_dimensions))
        if self.positive_count != len(self.positive_dimensions):
            raise ValueError('Inconsistent PSDI: {:d} positive dimensions announced, {:d} given'
                             .format(self.positive_count, len(self.positive_dimensions)))
        if self.positive_count == 0 and self.value != 0:
            raise ValueError('A PSDI without positive dimension must be 0')

    def as_dict(self):
        return dict(value=self.value, positive_count=self.positive_count,
                    positive_dimensions=sorted(self.positive_dimensions))

    @classmethod
    def from_dict(cls, rdict):
        return cls(value=rdict['value'], positive_count=rdict['positive_count'],
                   positive_dimensions=rdict.get('positive_dimensions', ()))


@dataclasses.dataclass(frozen=True)
class OutcomeRecord:
    """Both phase assessments of a client and the resulting outcome."""

    client_id: str
    initial: AssessmentRecord
    final: AssessmentRecord
    psdi_initial: PsdiValue
    psdi_final: PsdiValue
    delta: float
    direction: Direction

    def __post_init__(self):
        object.__setattr__(self, 'direction', Direction(self.direction))

    @property
    def run_index(self):
        return self.initial.run_index

    @property
    def errors(self):
        return self.initial.errors + self.final.errors

    def as_dict(self):
        return dict(client_id=self.client_id,
                    initial=self.initial.as_dict(), final=self.final.as_dict(),
                    psdi_initial=self.psdi_initial.as_dict(), psdi_final=self.psdi_final.as_dict(),
                    delta=self.delta, direction=self.direction.value,
                    run_index=self.run_index)

    @classmethod
    def from_dict(cls, rdict):
        return cls(client_id=rdict['client_id'],
                   initial=AssessmentRecord.from_dict(rdict['initial']),
                   final=AssessmentRecord.from_dict(rdict['final']),
                   psdi_initial=PsdiValue.from_dict(rdict['psdi_initial']),
                   psdi_final=PsdiValue.from_dict(rdict['psdi_final']),
                   delta=rdict['delta'], direction=rdict['direction'])


def positive_indices(scores):
    """The dimensions of ``scores`` with a positive symptom."""
    return {name for name, value in scores.items() if value >= POSITIVE_THRESHOLD}


def psdi(scores):
    """The Positive Symptom Distress Index of ``scores``."""
    positives = positive_indices(scores)
    if not positives:
        return PsdiValue(value=0., positive_count=0)
    total = sum(scores[name] for name in positives)
    return PsdiValue(value=float(total) / len(positives), positive_count=len(positives),
                     positive_dimensions=positives)


def delta_psdi(initial, final):
    """Change of the PSDI from the initial to the final phase."""
    return final.value - initial.value


def classify_outcome(delta):
    """A positive change of the PSDI means that the symptoms worsened."""
    return Direction.WORSENED if delta > 0 else Direction.MAINTAINED_OR_IMPROVED


def outcome_from_records(initial, final):
    """Build the outcome of two already assessed phases."""
    if initial.client_id != final.client_id:
        raise ClientMismatchError('Phases of different clients: {:s} and {:s}'
                                  .format(initial.client_id, final.client_id))
    p_initial = psdi(initial.scores)
    p_final = psdi(final.scores)
    delta = delta_psdi(p_initial, p_final)
    return OutcomeRecord(client_id=initial.client_id, initial=initial, final=final,
                         psdi_initial=p_initial, psdi_final=p_final,
                         delta=delta, direction=classify_outcome(delta))


def evaluate_outcome(pair, config, provider):
    """
    Assess both phases of ``pair`` (initial, final client information)
    independently and compute the outcome.
    """
    info_initial, info_final = pair
    if info_initial.client_id != info_final.client_id:
        raise ClientMismatchError('Phases of different clients: {:s} and {:s}'
                                  .format(info_initial.client_id, info_final.client_id))
    with ThreadPoolExecutor(max_workers=2) as executor:
        f_initial = executor.submit(assess, info_initial, config, provider)
        f_final = executor.submit(assess, info_final, config, provider)
        initial, final = f_initial.result(), f_final.result()
    record = outcome_from_records(initial, final)
    logger.info('Outcome of %s (run %d): PSDI %.2f -> %.2f, %s', record.client_id,
                record.run_index, record.psdi_initial.value, record.psdi_final.value,
                record.direction.value)
    return record
