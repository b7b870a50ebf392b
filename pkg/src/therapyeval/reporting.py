"""
Human-readable reports of run artifacts and metric files.

Every value shown comes from the artifact (or the metrics file): reports are
projections, nothing is recomputed here.
"""

from bronx.fancies import dump, loggers

from .metrics import RunAggregate

#: No automatic export
__all__ = []

logger = loggers.getLogger(__name__)

#: Format of an aggregated value
MEAN_STD_FORMAT = '{:.4f}±{:.2f}'

REPORT_NO_ERRORS = 'No format error recorded.'
REPORT_NO_AGGREGATE = 'No aggregate available (no run produced any record).'


def mean_std(mean, std):
    """
    >>> mean_std(0.5, 0.)
    '0.5000±0.00'
    """
    return MEAN_STD_FORMAT.format(mean, std)


class ErrorDistributionTable:
    """Counts of format errors per model and kind."""

    def __init__(self, distribution=None, indent='    '):
        self._indent = indent
        self._counts = dict()
        self.update(distribution or dict())

    def __len__(self):
        return len(self._counts)

    def __iter__(self):
        for (model, kind), count in sorted(self._counts.items()):
            yield model, kind, count

    def add(self, model, kind, count):
        if count:
            self._counts[(model, kind)] = self._counts.get((model, kind), 0) + int(count)

    def update(self, distribution):
        """Add the counts of a ``model -> kind -> count`` mapping."""
        for model, kinds in distribution.items():
            for kind, count in kinds.items():
                self.add(model, kind, count)

    def total(self, model=None):
        return sum(count for m, _, count in self if model is None or m == model)

    def lines(self):
        rows = list(self)
        if not rows:
            return [self._indent + REPORT_NO_ERRORS]
        mjust = max(len('model'), max(len(r[0]) for r in rows))
        kjust = max(len('kind'), max(len(r[1]) for r in rows))
        out = [self._indent + '{:s}  {:s}  {:s}'.format('model'.ljust(mjust), 'kind'.ljust(kjust), 'count')]
        for model, kind, count in rows:
            out.append(self._indent + '{:s}  {:s}  {:5d}'.format(model.ljust(mjust), kind.ljust(kjust), count))
        return out


class MetricTable:
    """Aggregated metrics (mean±std over runs), one line per metric."""

    def __init__(self, aggregate=None, indent='    ', attrjust=14):
        self._aggregate = aggregate
        self._indent = indent
        self._attrjust = attrjust

    def __len__(self):
        return len(self._aggregate.means) if self._aggregate else 0

    def cells(self):
        """``metric -> 'mean±std'`` in the aggregate order."""
        if self._aggregate is None:
            return dict()
        return {k: mean_std(v, self._aggregate.stds[k]) for k, v in self._aggregate.means.items()}

    def lines(self):
        if self._aggregate is None:
            return [self._indent + REPORT_NO_AGGREGATE]
        out = [self._indent + 'runs'.ljust(self._attrjust) + ': {:d}'.format(self._aggregate.runs)]
        for k, cell in self.cells().items():
            out.append(self._indent + k.ljust(self._attrjust) + ': ' + cell)
        return out


def artifact_report(artifact, title=None, with_config=False):
    """The text report of a :class:`therapyeval.artifacts.RunArtifact`."""
    out = ['{:s} artifact{:s}'.format(artifact.kind.capitalize(), ' ' + title if title else '')]
    out.append('  records: {:d} over {:d} run(s), logged errors: {:d}'
               .format(len(artifact.records), len(artifact.runs), len(artifact.errors)))
    out.append('')
    out.append('Summary (mean±std over runs):')
    out.extend(MetricTable(artifact.aggregate).lines())
    out.append('')
    out.append('Error distribution:')
    out.extend(ErrorDistributionTable(artifact.error_distribution).lines())
    failures = [e for e in artifact.errors if e.get('category') != 'format']
    if failures:
        out.append('')
        out.append('Failed work units:')
        for e in failures:
            out.append('    [{!s}] {!s} (run {!s}): {!s}'.format(e.get('category'), e.get('source'),
                                                               e.get('run_index', '-'), e.get('message')))
    if with_config:
        out.append('')
        out.append('Configuration:')
        out.append(dump.fulldump(artifact.config))
    return '\n'.join(out)


def error_comparison_report(artifacts, titles=None):
    """The error distributions of several artifacts, merged in one table."""
    table = ErrorDistributionTable()
    for artifact in artifacts:
        table.update(artifact.error_distribution)
    out = ['Error distribution over {:d} artifacts{:s}:'.format(
        len(artifacts), ' ({:s})'.format(', '.join(titles)) if titles else '')]
    out.extend(table.lines())
    return '\n'.join(out)


def metrics_report(metrics):
    """The text report of a metrics file content (see :func:`therapyeval.commands.cmd_metrics`)."""
    out = ['Metrics of {!s} against {!s} ({:s}, positive class: {:s})'.format(
        metrics.get('model'), metrics.get('reference_model'), metrics['kind'], metrics['positive_class'])]
    out.extend(MetricTable(RunAggregate.from_dict(metrics['aggregate'])).lines())
    return '\n'.join(out)


def softprint(text):
    """Print out a report."""
    print(text)
