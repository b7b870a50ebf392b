"""
Batch commands behind the command-line verbs.

Each command works on plain objects (configuration, sessions, artifacts)
and optionally writes its outputs in a directory, so that it can be used
from Python as well as from :mod:`therapyeval.cli`.

Work units (a client for assessments, a pair for outcomes, a session for
pair building) run in parallel up to the configured concurrency. A unit that
fails is logged and recorded in the error stream; the batch always completes.
"""

from concurrent.futures import ThreadPoolExecutor
import dataclasses
import io
import json
import os
from typing import Dict, List, Tuple

from bronx.fancies import loggers

from . import artifacts, metrics, reporting
from .core import ClientHistory, ClientProfile, assemble_client_information
from .dataset import (MAX_TURNS, MIN_TURNS, PairingConfig, build_phase_pair, corpus_stats,
                      dump_pair_corpus, dump_sessions, filter_sessions, load_corpus)
from .engine import assess
from .outcome import ClientMismatchError, Direction, evaluate_outcome
from .providers import get_provider
from .util import TherapyEvalError, canonical_json

#: No automatic export
__all__ = []

logger = loggers.getLogger(__name__)

METRICS_FILE = 'metrics.json'
DETECTION_CSV = 'detection.csv'
SEVERITY_CSV = 'severity.csv'
OUTCOME_CSV = 'outcome.csv'
STATS_FILE = 'stats.json'
PAIRS_FILE = 'pairs.jsonl'
PAIR_SESSIONS_FILE = 'sessions.jsonl'


def failure(category, source, trouble, run_index=None):
    """The error-stream entry of a failed work unit."""
    entry = dict(category=category, source=source, error=type(trouble).__name__, message=str(trouble))
    if run_index is not None:
        entry['run_index'] = run_index
    return entry


def _sorted_errors(errors):
    return sorted(errors, key=canonical_json)


def _run_summaries(records, runs, summarise):
    per_run = list()
    for run_index in range(runs):
        subset = [r for r in records if r.run_index == run_index]
        summary = dict(run_index=run_index, records=len(subset))
        if subset:
            summary['metrics'] = summarise(subset)
        per_run.append(summary)
    summaries = [s['metrics'] for s in per_run if 'metrics' in s]
    return per_run, metrics.aggregate_runs(summaries) if summaries else None


def _build_artifact(kind, config, records, errors, summarise, outdir=None):
    errors = list(errors) + artifacts.format_error_rows(records)
    per_run, aggregate = _run_summaries(records, config.runs, summarise)
    artifact = artifacts.RunArtifact(kind=kind, config=config.snapshot(),
                                     records=sorted(records, key=artifacts.record_sort_key),
                                     errors=_sorted_errors(errors),
                                     per_run=per_run, aggregate=aggregate,
                                     error_distribution=artifacts.error_distribution(records))
    if outdir:
        artifacts.write_artifact(outdir, artifact)
    return artifact


def _provider(config, provider):
    return provider if provider is not None else get_provider(config.provider_description())


# Corpus preparation

def prepare_sessions(config, path, fmt=None, strict=True):
    """
    Load the sessions of ``path`` and apply the turn-count filter when the
    configuration sets bounds. Return ``(sessions, ingestion errors)``.
    """
    corpus, errors = load_corpus(path, fmt=fmt, strict=strict, language=config.language)
    sessions = list(corpus)
    if config.min_turns is not None or config.max_turns is not None:
        sessions = filter_sessions(sessions,
                                   min_turns=MIN_TURNS if config.min_turns is None else config.min_turns,
                                   max_turns=MAX_TURNS if config.max_turns is None else config.max_turns)
    return sessions, ingestion_entries(errors)


def ingestion_entries(errors):
    """Error-stream entries of ``(source, message)`` ingestion errors."""
    return [dict(category='ingestion', source=source, message=message) for source, message in errors]


def _by_client(sessions):
    clients = dict()
    for session in sessions:
        clients.setdefault(session.client_id, list()).append(session)
    return clients


# Assessments

def _assess_client(client_id, sessions, engine_config, provider, history_flags):
    """
    Assess the sessions of one client in order; earlier material feeds the
    history. A failed session leaves a ``None`` in the past assessments so
    that they stay paired with the past sessions.
    """
    records = list()
    errors = list()
    past_scores = list()
    for i, session in enumerate(sessions):
        history = ClientHistory(past_sessions=sessions[:i], past_assessments=past_scores)
        try:
            info = assemble_client_information(ClientProfile(client_id), session, history,
                                               include=history_flags)
            record = assess(info, engine_config, provider)
        except TherapyEvalError as trouble:
            logger.warning('Assessment of %s/%s failed (run %d): %s',
                           client_id, session.id, engine_config.run_index, trouble)
            errors.append(failure('assessment', '{:s}/{:s}'.format(client_id, session.id),
                                  trouble, engine_config.run_index))
            past_scores.append(None)
            continue
        records.append(record)
        past_scores.append(record.scores)
    return records, errors


def cmd_assess(config, sessions, provider=None, outdir=None, ingestion_errors=()):
    """
    Assess every session ``config.runs`` times and build the assessment
    artifact (written in ``outdir`` when given).
    """
    provider = _provider(config, provider)
    test = config.load_test()
    criteria = config.load_criteria()
    clients = _by_client(sessions)
    history_flags = config.history_flags()
    logger.info('Assessing %d sessions of %d clients with %s, %d run(s)',
                len(sessions), len(clients), provider.describe(), config.runs)
    records = list()
    errors = list(ingestion_errors)
    for run_index in range(config.runs):
        engine_config = config.engine_config(run_index, test, criteria)
        with ThreadPoolExecutor(max_workers=config.concurrency) as executor:
            results = list(executor.map(
                lambda item: _assess_client(item[0], item[1], engine_config, provider, history_flags),
                clients.items()
            ))
        for unit_records, unit_errors in results:
            records.extend(unit_records)
            errors.extend(unit_errors)
        logger.info('Run %d done: %d records', run_index, sum(len(r) for r, _ in results))
    return _build_artifact(artifacts.KIND_ASSESSMENT, config, records, errors,
                           metrics.self_summary, outdir or config.out)


# Outcomes

def _evaluate_pair(pair, engine_config, provider):
    client_id, initial, full = pair
    source = '{!s}:{:s}/{:s}'.format(client_id, initial.id, full.id)
    try:
        if initial.client_id != full.client_id or (client_id and client_id != full.client_id):
            raise ClientMismatchError('Phases of different clients: {:s} and {:s}'
                                      .format(initial.client_id, full.client_id))
        profile = ClientProfile(full.client_id)
        pair_info = (assemble_client_information(profile, initial, ClientHistory()),
                     assemble_client_information(profile, full, ClientHistory()))
        return [evaluate_outcome(pair_info, engine_config, provider)], []
    except TherapyEvalError as trouble:
        logger.warning('Outcome of %s failed (run %d): %s', source, engine_config.run_index, trouble)
        return [], [failure('pair', source, trouble, engine_config.run_index)]


def cmd_outcome(config, pairs, provider=None, outdir=None, ingestion_errors=()):
    """
    Evaluate the outcome of every ``(client_id, initial, full)`` pair
    ``config.runs`` times and build the outcome artifact.
    """
    provider = _provider(config, provider)
    test = config.load_test()
    criteria = config.load_criteria()
    logger.info('Evaluating %d pairs with %s, %d run(s)', len(pairs), provider.describe(), config.runs)
    records = list()
    errors = list(ingestion_errors)
    for run_index in range(config.runs):
        engine_config = config.engine_config(run_index, test, criteria)
        with ThreadPoolExecutor(max_workers=config.concurrency) as executor:
            results = list(executor.map(lambda p: _evaluate_pair(p, engine_config, provider), pairs))
        for unit_records, unit_errors in results:
            records.extend(unit_records)
            errors.extend(unit_errors)
    return _build_artifact(artifacts.KIND_OUTCOME, config, records, errors,
                           metrics.outcome_summary, outdir or config.out)


# Metrics

@dataclasses.dataclass(frozen=True)
class MetricsOutput:
    """Per-run metric reports of a prediction artifact and their aggregate."""

    kind: str
    model: str
    reference_model: str
    positive_class: str
    reference_run: int
    reports: Tuple[metrics.MetricReport, ...]
    aggregate: metrics.RunAggregate

    def as_dict(self):
        return dict(kind=self.kind, model=self.model, reference_model=self.reference_model,
                    positive_class=self.positive_class, reference_run=self.reference_run,
                    per_run=[r.as_dict() for r in self.reports],
                    aggregate=self.aggregate.as_dict())


def _model_of(artifact):
    if artifact.records:
        record = artifact.records[0]
        return record.initial.provider_model if artifact.kind == artifacts.KIND_OUTCOME else record.provider_model
    provider = artifact.config.get('provider', dict())
    return artifact.config.get('model') or provider.get('model') or provider.get('kind', '')


def _positive_class(kind, value):
    if kind == artifacts.KIND_ASSESSMENT:
        labels, default = metrics.DetectionLabel, metrics.DetectionLabel.POSITIVE
    else:
        labels, default = Direction, Direction.MAINTAINED_OR_IMPROVED
    if value is None:
        return default
    try:
        return labels(getattr(value, 'value', value))
    except ValueError:
        raise metrics.MetricsError('Invalid positive class for {:s} metrics: {!s} (one of: {:s})'
                                   .format(kind, value, ', '.join(label.value for label in labels)))


def _metric_rows(model, reports, aggregate, fields):
    rows = list()
    for run_index, report in enumerate(reports):
        values = report.values()
        rows.append([model, str(run_index)] + ['{!r}'.format(values[f]) for f in fields])
    rows.append([model, 'mean'] + ['{!r}'.format(aggregate.means[f]) for f in fields])
    rows.append([model, 'std'] + ['{!r}'.format(aggregate.stds[f]) for f in fields])
    return rows


def cmd_metrics(predictions, references, outdir=None, positive_class=None, reference_run=0):
    """
    Score each run of the ``predictions`` artifact against one run of the
    ``references`` artifact (both are paths or :class:`RunArtifact` objects).
    ``positive_class`` defaults to ``positive`` for assessments and to
    ``maintained_or_improved`` for outcomes.
    """
    if not isinstance(predictions, artifacts.RunArtifact):
        predictions = artifacts.read_artifact(predictions)
    if not isinstance(references, artifacts.RunArtifact):
        references = artifacts.read_artifact(references)
    if predictions.kind != references.kind:
        raise artifacts.ArtifactError('Cannot compare a {:s} artifact with a {:s} artifact'
                                      .format(predictions.kind, references.kind))
    if reference_run not in references.runs:
        raise artifacts.ArtifactError('The references have no run {:d}'.format(reference_run))
    kind = predictions.kind
    positive = _positive_class(kind, positive_class)
    ref_map = references.keyed(reference_run)
    reports = list()
    for run_index in predictions.runs:
        pred_map = predictions.keyed(run_index)
        if kind == artifacts.KIND_ASSESSMENT:
            reports.append(metrics.assessment_report(pred_map, ref_map, positive_class=positive))
        else:
            reports.append(metrics.outcome_report(pred_map, ref_map, positive_class=positive))
    if not reports:
        raise metrics.EmptyInputError('The predictions hold no record')
    output = MetricsOutput(kind=kind, model=_model_of(predictions), reference_model=_model_of(references),
                           positive_class=positive.value, reference_run=reference_run,
                           reports=reports, aggregate=metrics.aggregate_runs(reports))
    logger.info('Metrics of %s against %s over %d run(s)', output.model, output.reference_model, len(reports))
    if outdir:
        os.makedirs(outdir, exist_ok=True)
        artifacts.write_json(os.path.join(outdir, METRICS_FILE), output.as_dict())
        if kind == artifacts.KIND_ASSESSMENT:
            tables = [(DETECTION_CSV, metrics.CLASSIFICATION_FIELDS), (SEVERITY_CSV, metrics.SEVERITY_FIELDS)]
        else:
            tables = [(OUTCOME_CSV, metrics.CLASSIFICATION_FIELDS + metrics.SEVERITY_FIELDS)]
        for fname, fields in tables:
            artifacts.write_csv(os.path.join(outdir, fname), ['model', 'run'] + list(fields),
                                _metric_rows(output.model, output.reports, output.aggregate, fields))
    return output


# Dataset tooling

def cmd_stats(path, tokenizer='whitespace', outdir=None, fmt=None, strict=True, language='en'):
    """Statistics of the corpus found at ``path``."""
    corpus, errors = load_corpus(path, fmt=fmt, strict=strict, language=language)
    stats = corpus_stats(corpus, tokenizer=tokenizer)
    logger.info('Corpus %s: %s', corpus.name, stats.as_dict())
    if errors:
        logger.warning('%d transcripts could not be read', len(errors))
    if outdir:
        os.makedirs(outdir, exist_ok=True)
        artifacts.write_json(os.path.join(outdir, STATS_FILE), stats.as_dict())
    return stats


def cmd_build_pairs(config, sessions, exemplars, provider=None, outdir=None,
                    template=None) -> Tuple[List, List[Dict]]:
    """
    Extract the initial stage of every session. Return ``(pairs, errors)``;
    the pair corpus (and the sessions it refers to) are written in
    ``outdir`` when given.
    """
    provider = _provider(config, provider)
    pairing = PairingConfig(k=config.exemplars_k, seed=config.seed, model=config.model,
                            temperature=config.temperature, template=template)

    def _one(session):
        try:
            return build_phase_pair(session, exemplars, provider, pairing), None
        except TherapyEvalError as trouble:
            logger.warning('No phase pair for %s: %s', session.id, trouble)
            return None, failure('pairing', session.id, trouble)

    with ThreadPoolExecutor(max_workers=config.concurrency) as executor:
        results = list(executor.map(_one, sessions))
    pairs = [pair for pair, _ in results if pair is not None]
    errors = [error for _, error in results if error is not None]
    logger.info('%d pairs built out of %d sessions', len(pairs), len(sessions))
    outdir = outdir or config.out
    if outdir:
        os.makedirs(outdir, exist_ok=True)
        dump_sessions(os.path.join(outdir, PAIR_SESSIONS_FILE), [s for pair in pairs for s in pair])
        dump_pair_corpus(os.path.join(outdir, PAIRS_FILE), pairs)
    return pairs, errors


# Reports

def cmd_report(paths, with_config=False):
    """
    The text report of the artifact in ``paths`` (a directory, or a list of
    directories), each followed by its metrics report when a metrics file
    sits next to it. Several artifacts end with their merged error
    distribution.
    """
    if isinstance(paths, str):
        paths = [paths]
    loaded = [(path, artifacts.read_artifact(path)) for path in paths]
    texts = list()
    titles = list()
    for path, artifact in loaded:
        title = os.path.basename(os.path.normpath(path))
        titles.append(title)
        text = reporting.artifact_report(artifact, title=title, with_config=with_config)
        metrics_path = os.path.join(path, METRICS_FILE)
        if os.path.isfile(metrics_path):
            with io.open(metrics_path, encoding='utf-8') as fhjson:
                text += '\n\n' + reporting.metrics_report(json.load(fhjson))
        texts.append(text)
    if len(loaded) > 1:
        texts.append(reporting.error_comparison_report([a for _, a in loaded], titles=titles))
    return '\n\n'.join(texts)
