"""
Metrics: classification scores, regression errors over PSDI values,
inter-annotator agreement and aggregation over several runs.

Conventions:

  * detection labels come from the scores: -1 (not addressed) is the negative
    class, any other score is positive;
  * a class without predicted or actual support contributes an F1 of 0;
    macro and weighted averages are taken over the labels present in either
    list;
  * when the positive class appears in neither list, precision, recall and
    binary F1 are 1 (nothing to find and nothing wrongly found);
  * run aggregation uses the population standard deviation by default.
"""

import dataclasses
import enum
from typing import Dict, Optional

import numpy as np
from sklearn import metrics as skm

from bronx.fancies import loggers

from .outcome import Direction, psdi
from .psychometric import NOT_ADDRESSED
from .util import TherapyEvalError

#: No automatic export
__all__ = []

logger = loggers.getLogger(__name__)

#: Admissible scores for detection
DETECTION_SCORES = (-1, 0, 1, 2)

#: Numeric fields of a MetricReport, in display order
CLASSIFICATION_FIELDS = ('accuracy', 'precision', 'recall', 'f1_binary', 'f1_macro', 'f1_weighted')
SEVERITY_FIELDS = ('mse', 'mae')


class MetricsError(TherapyEvalError):
    """Anything wrong while computing metrics."""
    pass


class LengthMismatchError(MetricsError, ValueError):
    """Predictions and references of different lengths."""
    pass


class EmptyInputError(MetricsError, ValueError):
    """Nothing to compute a metric on."""
    pass


class InvalidScoreError(MetricsError, ValueError):
    """A detection score outside of -1, 0, 1 and 2."""
    pass


class KeyMismatchError(MetricsError, KeyError):
    """Predictions and references do not cover the same keys (or metrics)."""

    def __str__(self):
        return str(self.args[0]) if self.args else ''


class DetectionLabel(str, enum.Enum):
    """Whether a symptom dimension is addressed (score 0 or more) or not (-1)."""
    NEGATIVE = 'negative'
    POSITIVE = 'positive'


@dataclasses.dataclass(frozen=True)
class MetricReport:
    """Classification metrics, optionally with regression errors."""

    accuracy: float
    precision: float
    recall: float
    f1_binary: float
    f1_macro: float
    f1_weighted: float
    mse: Optional[float] = None
    mae: Optional[float] = None
    support: Dict[str, int] = dataclasses.field(default_factory=dict)
    positive_class: str = DetectionLabel.POSITIVE.value

    def values(self):
        """The numeric metrics (regression errors only when present)."""
        rdict = {k: getattr(self, k) for k in CLASSIFICATION_FIELDS}
        for k in SEVERITY_FIELDS:
            if getattr(self, k) is not None:
                rdict[k] = getattr(self, k)
        return rdict

    def as_dict(self):
        rdict = self.values()
        rdict['support'] = dict(sorted(self.support.items()))
        rdict['positive_class'] = self.positive_class
        return rdict


@dataclasses.dataclass(frozen=True)
class RunAggregate:
    """Mean and standard deviation of each metric over several runs."""

    means: Dict[str, float]
    stds: Dict[str, float]
    runs: int

    def __post_init__(self):
        if self.runs < 1:
            raise EmptyInputError('An aggregate needs at least one run')

    def as_dict(self):
        return dict(runs=self.runs,
                    metrics={k: dict(mean=self.means[k], std=self.stds[k]) for k in self.means})

    @classmethod
    def from_dict(cls, rdict):
        return cls(means={k: v['mean'] for k, v in rdict['metrics'].items()},
                   stds={k: v['std'] for k, v in rdict['metrics'].items()},
                   runs=rdict['runs'])


def _label(value):
    return value.value if isinstance(value, enum.Enum) else value


def _check_pair(first, second):
    if len(first) != len(second):
        raise LengthMismatchError('Lists of different lengths: {:d} and {:d}'.format(len(first), len(second)))
    if not len(first):
        raise EmptyInputError('Metrics of empty lists are not defined')


def binarize_detection(score):
    """-1 is the negative class, 0, 1 and 2 are positive."""
    if isinstance(score, bool) or not isinstance(score, (int, np.integer)) or score not in DETECTION_SCORES:
        raise InvalidScoreError('Invalid detection score: {!r}'.format(score))
    return DetectionLabel.NEGATIVE if score == NOT_ADDRESSED else DetectionLabel.POSITIVE


def classification_metrics(predictions, references, positive_class=DetectionLabel.POSITIVE):
    """Accuracy, positive-class precision/recall/F1, macro and weighted F1."""
    _check_pair(predictions, references)
    y_pred = [_label(p) for p in predictions]
    y_true = [_label(r) for r in references]
    positive = _label(positive_class)
    labels = sorted(set(y_pred) | set(y_true), key=str)
    accuracy = float(skm.accuracy_score(y_true, y_pred))
    if positive not in labels:
        precision = recall = f1_binary = 1.
    else:
        p, r, f, _ = skm.precision_recall_fscore_support(y_true, y_pred, labels=[positive],
                                                         average=None, zero_division=0)
        precision, recall, f1_binary = float(p[0]), float(r[0]), float(f[0])
    f1_macro = float(skm.f1_score(y_true, y_pred, labels=labels, average='macro', zero_division=0))
    f1_weighted = float(skm.f1_score(y_true, y_pred, labels=labels, average='weighted', zero_division=0))
    support = {str(label): y_true.count(label) for label in labels}
    return MetricReport(accuracy=accuracy, precision=precision, recall=recall, f1_binary=f1_binary,
                        f1_macro=f1_macro, f1_weighted=f1_weighted, support=support,
                        positive_class=str(positive))


def severity_errors(predicted_psdi, reference_psdi):
    """Mean squared and mean absolute errors."""
    _check_pair(predicted_psdi, reference_psdi)
    return (float(skm.mean_squared_error(reference_psdi, predicted_psdi)),
            float(skm.mean_absolute_error(reference_psdi, predicted_psdi)))


def cohen_kappa(annotator_a, annotator_b):
    """
    Cohen's kappa between two annotators.

    When a single label is used overall (no chance-corrected agreement can be
    computed), the agreement is perfect and 1 is returned.
    """
    _check_pair(annotator_a, annotator_b)
    a = [_label(x) for x in annotator_a]
    b = [_label(x) for x in annotator_b]
    if len(set(a) | set(b)) == 1:
        return 1.
    return float(skm.cohen_kappa_score(a, b))


def aggregate_runs(reports, ddof=0):
    """Mean and standard deviation (population by default) of each metric."""
    if not reports:
        raise EmptyInputError('No run to aggregate')
    values = [r.values() if isinstance(r, MetricReport) else dict(r) for r in reports]
    keys = list(values[0].keys())
    for i, vdict in enumerate(values[1:], start=1):
        if set(vdict) != set(keys):
            raise KeyMismatchError('Run {:d} does not report the same metrics: {:s}'
                                   .format(i, ', '.join(sorted(set(vdict) ^ set(keys)))))
    means = dict()
    stds = dict()
    for k in keys:
        series = [float(v[k]) for v in values]
        if all(x == series[0] for x in series):
            means[k], stds[k] = series[0], 0.
        else:
            means[k] = float(np.mean(series))
            stds[k] = float(np.std(series, ddof=ddof)) if len(series) > ddof else 0.
    return RunAggregate(means=means, stds=stds, runs=len(values))


# Artifact-level helpers

def _paired(predictions, references):
    """Pair two ``key -> record`` mappings; keys must match exactly."""
    missing_p = sorted(set(references) - set(predictions))
    missing_r = sorted(set(predictions) - set(references))
    if missing_p or missing_r:
        chunks = list()
        if missing_p:
            chunks.append('missing in predictions: ' + ', '.join('/'.join(map(str, k)) for k in missing_p))
        if missing_r:
            chunks.append('missing in references: ' + ', '.join('/'.join(map(str, k)) for k in missing_r))
        raise KeyMismatchError('; '.join(chunks))
    if not references:
        raise EmptyInputError('Nothing to compare')
    return [(predictions[k], references[k]) for k in sorted(references)]


def detection_pairs(predictions, references):
    """
    Detection labels for every (session, dimension) of two ``key -> AssessmentRecord``
    mappings, in the reference dimension order.
    """
    y_pred, y_true = list(), list()
    for pred, ref in _paired(predictions, references):
        for name, score in ref.scores.items():
            y_true.append(binarize_detection(score))
            y_pred.append(binarize_detection(pred.scores.scores.get(name, NOT_ADDRESSED)))
    return y_pred, y_true


def severity_pairs(predictions, references):
    """PSDI values of every session of two ``key -> AssessmentRecord`` mappings."""
    pairs = _paired(predictions, references)
    return ([psdi(p.scores).value for p, _ in pairs], [psdi(r.scores).value for _, r in pairs])


def assessment_report(predictions, references, positive_class=DetectionLabel.POSITIVE):
    """Detection metrics completed with the PSDI errors."""
    report = classification_metrics(*detection_pairs(predictions, references),
                                    positive_class=positive_class)
    mse, mae = severity_errors(*severity_pairs(predictions, references))
    return dataclasses.replace(report, mse=mse, mae=mae)


def outcome_report(predictions, references, positive_class=Direction.MAINTAINED_OR_IMPROVED):
    """Outcome-direction metrics completed with the errors on the PSDI change."""
    pairs = _paired(predictions, references)
    report = classification_metrics([p.direction for p, _ in pairs], [r.direction for _, r in pairs],
                                    positive_class=positive_class)
    mse, mae = severity_errors([p.delta for p, _ in pairs], [r.delta for _, r in pairs])
    return dataclasses.replace(report, mse=mse, mae=mae)


def self_summary(records):
    """
    Reference-free summary of one run of assessments: mean PSDI, rate of
    positive dimensions and rate of fallback assessments.
    """
    if not records:
        raise EmptyInputError('No record to summarise')
    values = [psdi(r.scores).value for r in records]
    n_dims = sum(len(r.scores) for r in records)
    n_positive = sum(psdi(r.scores).positive_count for r in records)
    n_fallback = sum(1 for r in records if r.errors and r.scores.is_fallback())
    return dict(mean_psdi=float(np.mean(values)),
                positive_rate=float(n_positive) / n_dims if n_dims else 0.,
                fallback_rate=float(n_fallback) / len(records))


def outcome_summary(records):
    """Reference-free summary of one run of outcome evaluations."""
    if not records:
        raise EmptyInputError('No record to summarise')
    phases = [p for r in records for p in (r.initial, r.final)]
    return dict(mean_psdi_initial=float(np.mean([r.psdi_initial.value for r in records])),
                mean_psdi_final=float(np.mean([r.psdi_final.value for r in records])),
                mean_delta=float(np.mean([r.delta for r in records])),
                worsened_rate=float(sum(1 for r in records if r.direction is Direction.WORSENED)) / len(records),
                fallback_rate=float(sum(1 for p in phases if p.errors and p.scores.is_fallback())) / len(phases))
