"""
The ``therapyeval`` command.

Verbs: ``assess``, ``outcome``, ``metrics``, ``stats``, ``build-pairs`` and
``report``. Global flags are given after the verb; they override the
values of the ``--config`` file.
"""

import argparse
import logging
import sys

from bronx.fancies import loggers

from . import commands, reporting
from .config import load_config
from .dataset import load_corpus, load_exemplars, load_pair_corpus
from .util import TherapyEvalError

#: No automatic export
__all__ = []

logger = loggers.getLogger(__name__)


def _global_flags():
    """Flags shared by every verb."""
    parser = argparse.ArgumentParser(add_help=False)
    group = parser.add_argument_group('run configuration')
    group.add_argument('--config', help='YAML run configuration file')
    group.add_argument('--provider', help='provider kind (scripted, cassette, openai, deepseek...)')
    group.add_argument('--model', help='model name sent to the provider')
    group.add_argument('--runs', type=int, help='number of runs (default: 3)')
    group.add_argument('--ablate-reasoning', action='store_true', default=None,
                       help='skip the items-aware reasoning stage')
    group.add_argument('--concurrency', type=int, help='parallel work units and in-flight requests')
    group.add_argument('--positive-class', help='positive class of the metrics (default: positive or maintained_or_improved)')
    group.add_argument('--out', help='output directory')
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='count', default=0, help='more log output')
    verbosity.add_argument('-q', '--quiet', action='store_true', help='warnings and errors only')
    return parser


def _corpus_flags(parser, required=True):
    parser.add_argument('--corpus', required=required,
                        help='JSONL file of session records or directory of transcripts')
    parser.add_argument('--format', dest='fmt', help='transcript format (speaker_lines, structured_records)')
    parser.add_argument('--lenient', action='store_true', help='lenient transcript reading')


def build_parser():
    flags = _global_flags()
    parser = argparse.ArgumentParser(prog='therapyeval',
                                     description='LLM psychological assessment and treatment outcome evaluation')
    verbs = parser.add_subparsers(dest='verb', required=True)

    p = verbs.add_parser('assess', parents=[flags], help='assess every session of a corpus')
    _corpus_flags(p)
    p.set_defaults(func=run_assess)

    p = verbs.add_parser('outcome', parents=[flags], help='evaluate the treatment outcome of phase pairs')
    _corpus_flags(p)
    p.add_argument('--pairs', required=True, help='pair corpus file')
    p.set_defaults(func=run_outcome)

    p = verbs.add_parser('metrics', parents=[flags], help='score a run against a reference run')
    p.add_argument('--predictions', required=True, help='artifact directory of the evaluated model')
    p.add_argument('--references', required=True, help='artifact directory of the reference model')
    p.add_argument('--reference-run', type=int, default=0, help='run of the references to compare with')
    p.set_defaults(func=run_metrics)

    p = verbs.add_parser('stats', parents=[flags], help='corpus statistics')
    _corpus_flags(p)
    p.add_argument('--tokenizer', default='whitespace', help='whitespace or cjk_chars')
    p.set_defaults(func=run_stats)

    p = verbs.add_parser('build-pairs', parents=[flags], help='extract the initial stage of each session')
    _corpus_flags(p)
    p.add_argument('--exemplars', required=True, help='JSONL file of annotated exemplars')
    p.add_argument('-k', type=int, dest='exemplars_k', help='number of exemplars in the prompt (default: 5)')
    p.add_argument('--template', help='phase extraction template file')
    p.set_defaults(func=run_build_pairs)

    p = verbs.add_parser('report', parents=[flags], help='print the report of artifacts')
    p.add_argument('artifact', nargs='+', help='artifact directories')
    p.add_argument('--with-config', action='store_true', help='also dump the configuration')
    p.set_defaults(func=run_report)
    return parser


def _config(args, **more):
    return load_config(args.config, provider=args.provider, model=args.model, runs=args.runs,
                       ablate_reasoning=args.ablate_reasoning, concurrency=args.concurrency,
                       positive_class=args.positive_class, out=args.out, **more)


def run_assess(args):
    config = _config(args)
    sessions, errors = commands.prepare_sessions(config, args.corpus, fmt=args.fmt, strict=not args.lenient)
    artifact = commands.cmd_assess(config, sessions, ingestion_errors=errors)
    reporting.softprint(reporting.artifact_report(artifact))


def run_outcome(args):
    config = _config(args)
    corpus, errors = load_corpus(args.corpus, fmt=args.fmt, strict=not args.lenient, language=config.language)
    pairs, pair_errors = load_pair_corpus(args.pairs, corpus)
    artifact = commands.cmd_outcome(config, pairs,
                                    ingestion_errors=commands.ingestion_entries(errors + pair_errors))
    reporting.softprint(reporting.artifact_report(artifact))


def run_metrics(args):
    config = _config(args)
    output = commands.cmd_metrics(args.predictions, args.references, outdir=config.out,
                                  positive_class=config.positive_class, reference_run=args.reference_run)
    reporting.softprint(reporting.metrics_report(output.as_dict()))


def run_stats(args):
    stats = commands.cmd_stats(args.corpus, tokenizer=args.tokenizer, outdir=args.out, fmt=args.fmt,
                               strict=not args.lenient)
    for k, v in stats.as_dict().items():
        reporting.softprint('{:s} : {!s}'.format(k.ljust(26), v))


def run_build_pairs(args):
    config = _config(args, exemplars_k=args.exemplars_k)
    sessions, _ = commands.prepare_sessions(config, args.corpus, fmt=args.fmt, strict=not args.lenient)
    pairs, errors = commands.cmd_build_pairs(config, sessions, load_exemplars(args.exemplars),
                                             template=args.template)
    reporting.softprint('{:d} pairs built, {:d} sessions failed'.format(len(pairs), len(errors)))


def run_report(args):
    reporting.softprint(commands.cmd_report(args.artifact, with_config=args.with_config))


def _verbosity(args):
    if args.quiet:
        return logging.WARNING
    return logging.DEBUG if args.verbose else logging.INFO


def main(argv=None):
    """Entry point of the ``therapyeval`` command; return the exit status."""
    args = build_parser().parse_args(argv)
    loggers.setGlobalLevel(_verbosity(args))
    try:
        args.func(args)
    except TherapyEvalError as trouble:
        logger.error('%s failed: %s', args.verb, trouble)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
