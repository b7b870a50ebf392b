"""
Run artifacts: a directory holding everything a run produced.

Layout::

    manifest.json       written last (atomically): kind, counts and file digests
    config.json         the configuration snapshot
    records.jsonl       one AssessmentRecord or OutcomeRecord per line
    errors.jsonl        format errors and work-unit failures, one per line
    format_errors.csv   error distribution (model, kind, count)
    summary.json        per-run summaries, their aggregate and the error distribution

Nothing time-dependent is stored, so that the same run reproduces the same
files byte for byte.
"""

import collections
import csv
import dataclasses
import hashlib
import io
import json
import os
from typing import Dict, List, Tuple

from bronx.fancies import loggers

from .engine import AssessmentRecord
from .metrics import RunAggregate
from .outcome import OutcomeRecord
from .util import TherapyEvalError, atomic_write, dump_jsonl, read_jsonl

#: No automatic export
__all__ = []

logger = loggers.getLogger(__name__)

#: Version of the artifact layout
ARTIFACT_FORMAT = 1

KIND_ASSESSMENT = 'assessment'
KIND_OUTCOME = 'outcome'

_RECORD_CLASSES = {KIND_ASSESSMENT: AssessmentRecord, KIND_OUTCOME: OutcomeRecord}

MANIFEST = 'manifest.json'
CONFIG = 'config.json'
RECORDS = 'records.jsonl'
ERRORS = 'errors.jsonl'
FORMAT_ERRORS = 'format_errors.csv'
SUMMARY = 'summary.json'


class ArtifactError(TherapyEvalError):
    """Anything wrong with a run artifact."""
    pass


class MissingArtifactError(ArtifactError, FileNotFoundError):
    pass


@dataclasses.dataclass(frozen=True)
class RunArtifact:
    """The content of an artifact directory."""

    kind: str
    config: Dict
    records: Tuple = ()
    errors: Tuple[Dict, ...] = ()
    per_run: Tuple[Dict, ...] = ()
    aggregate: RunAggregate = None
    error_distribution: Dict[str, Dict[str, int]] = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _RECORD_CLASSES:
            raise ArtifactError('Unknown artifact kind: {!s}'.format(self.kind))
        object.__setattr__(self, 'records', tuple(self.records))
        object.__setattr__(self, 'errors', tuple(self.errors))
        object.__setattr__(self, 'per_run', tuple(self.per_run))

    @property
    def runs(self):
        return sorted({r.run_index for r in self.records})

    def records_of_run(self, run_index):
        return [r for r in self.records if r.run_index == run_index]

    def keyed(self, run_index):
        """``key -> record`` for one run (sessions for assessments, clients for outcomes)."""
        if self.kind == KIND_ASSESSMENT:
            return {r.key: r for r in self.records_of_run(run_index)}
        return {r.client_id: r for r in self.records_of_run(run_index)}


def record_sort_key(record):
    if isinstance(record, OutcomeRecord):
        return (record.run_index, record.client_id, '')
    return (record.run_index, record.client_id, record.session_id)


def error_distribution(records, errors=()):
    """``model -> kind -> count`` of the format errors found in ``records`` and ``errors``."""
    dist = collections.defaultdict(collections.Counter)
    for record in records:
        model = record.initial.provider_model if isinstance(record, OutcomeRecord) else record.provider_model
        for error in record.errors:
            dist[model][error.kind.value] += 1
    for error in errors:
        if error.get('category') == 'format':
            dist[error.get('model', '')][error['kind']] += 1
    return {model: dict(sorted(counter.items())) for model, counter in sorted(dist.items())}


def format_error_rows(records):
    """One row per format error of ``records`` (for ``errors.jsonl``)."""
    rows = list()
    for record in records:
        subrecords = [record.initial, record.final] if isinstance(record, OutcomeRecord) else [record]
        for sub in subrecords:
            for error in sub.errors:
                rows.append(dict(category='format', client_id=sub.client_id, session_id=sub.session_id,
                                 run_index=sub.run_index, model=sub.provider_model,
                                 **error.as_dict()))
    return rows


def _file_digest(path):
    sha = hashlib.sha256()
    with io.open(path, 'rb') as fhin:
        for chunk in iter(lambda: fhin.read(65536), b''):
            sha.update(chunk)
    return sha.hexdigest()


def _json_text(obj):
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, indent=2) + '\n'


def write_csv(path, header, rows):
    """A small CSV file with ``\\n`` line endings."""
    with io.open(path, 'w', encoding='utf-8', newline='') as fhcsv:
        writer = csv.writer(fhcsv, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path):
    with io.open(path, encoding='utf-8', newline='') as fhcsv:
        return list(csv.DictReader(fhcsv))


def write_json(path, obj):
    atomic_write(path, _json_text(obj))


def write_artifact(outdir, artifact):
    """Write ``artifact`` in the ``outdir`` directory (the manifest comes last)."""
    os.makedirs(outdir, exist_ok=True)
    manifest_path = os.path.join(outdir, MANIFEST)
    if os.path.exists(manifest_path):
        os.remove(manifest_path)
    records = sorted(artifact.records, key=record_sort_key)
    atomic_write(os.path.join(outdir, CONFIG), _json_text(artifact.config))
    dump_jsonl(os.path.join(outdir, RECORDS), [r.as_dict() for r in records])
    dump_jsonl(os.path.join(outdir, ERRORS), list(artifact.errors))
    write_csv(os.path.join(outdir, FORMAT_ERRORS), ['model', 'kind', 'count'],
              [(model, kind, count) for model, kinds in artifact.error_distribution.items()
               for kind, count in kinds.items()])
    summary = dict(per_run=list(artifact.per_run),
                   aggregate=artifact.aggregate.as_dict() if artifact.aggregate else None,
                   error_distribution=artifact.error_distribution)
    write_json(os.path.join(outdir, SUMMARY), summary)
    files = {name: _file_digest(os.path.join(outdir, name))
             for name in (CONFIG, RECORDS, ERRORS, FORMAT_ERRORS, SUMMARY)}
    manifest = dict(format=ARTIFACT_FORMAT, kind=artifact.kind, records=len(records),
                    errors=len(artifact.errors), runs=len({r.run_index for r in records}),
                    files=files)
    atomic_write(manifest_path, _json_text(manifest))
    logger.info('Artifact written in %s: %d records, %d errors', outdir, len(records), len(artifact.errors))
    return manifest_path


def read_artifact(path):
    """Read back an artifact directory."""
    manifest_path = os.path.join(path, MANIFEST)
    if not os.path.isfile(manifest_path):
        raise MissingArtifactError('No artifact in {:s} (missing {:s})'.format(path, MANIFEST))
    with io.open(manifest_path, encoding='utf-8') as fhjson:
        manifest = json.load(fhjson)
    kind = manifest.get('kind')
    if kind not in _RECORD_CLASSES:
        raise ArtifactError('Unknown artifact kind in {:s}: {!s}'.format(path, kind))
    with io.open(os.path.join(path, CONFIG), encoding='utf-8') as fhjson:
        config = json.load(fhjson)
    with io.open(os.path.join(path, SUMMARY), encoding='utf-8') as fhjson:
        summary = json.load(fhjson)
    records = list()
    for lineno, rdict in read_jsonl(os.path.join(path, RECORDS)):
        if isinstance(rdict, Exception):
            raise ArtifactError('{:s}, line {:d}: {!s}'.format(RECORDS, lineno, rdict))
        records.append(_RECORD_CLASSES[kind].from_dict(rdict))
    errors = list()
    for lineno, rdict in read_jsonl(os.path.join(path, ERRORS)):
        if isinstance(rdict, Exception):
            raise ArtifactError('{:s}, line {:d}: {!s}'.format(ERRORS, lineno, rdict))
        errors.append(rdict)
    aggregate = summary.get('aggregate')
    return RunArtifact(kind=kind, config=config, records=records, errors=errors,
                       per_run=summary.get('per_run', ()),
                       aggregate=RunAggregate.from_dict(aggregate) if aggregate else None,
                       error_distribution=summary.get('error_distribution', dict()))


def list_files(path) -> List[str]:
    """The files referenced by the manifest of an artifact."""
    with io.open(os.path.join(path, MANIFEST), encoding='utf-8') as fhjson:
        return sorted(json.load(fhjson)['files'])
