"""
LLM-based psychological assessment of therapy clients and evaluation of
treatment outcomes.

A client interview is assessed in two stages against a psychometric test
(SCL-90 by default): an items-aware reasoning stage links client statements
to checklist items, then a symptom assessment stage scores every dimension.
The Positive Symptom Distress Index (PSDI) of the initial and final phases of
a treatment gives the direction of the outcome.

Chat-completion providers, transcript readers and tokenizers are footprint
classes: they are selected with ``footprints.proxy`` descriptions such as
``dict(kind='openai', model='gpt-4o')``.
"""

from bronx.fancies import loggers

from .util import TherapyEvalError

from . import core, psychometric, prompts, gateway, providers, engine, outcome  # @UnusedImport
from . import metrics, dataset, config, artifacts, reporting, commands  # @UnusedImport

from .core import ClientHistory, ClientInformation, ClientProfile, Session, Turn, assemble_client_information
from .psychometric import AssessmentScores, bundled_criteria, bundled_test
from .engine import AssessmentRecord, EngineConfig, assess
from .outcome import Direction, OutcomeRecord, evaluate_outcome, psdi
from .providers import get_provider
from .config import RunConfig, load_config

assert TherapyEvalError
assert ClientHistory
assert ClientInformation
assert ClientProfile
assert Session
assert Turn
assert assemble_client_information
assert AssessmentScores
assert bundled_criteria
assert bundled_test
assert AssessmentRecord
assert EngineConfig
assert assess
assert Direction
assert OutcomeRecord
assert evaluate_outcome
assert psdi
assert get_provider
assert RunConfig
assert load_config

#: No automatic export
__all__ = []

# Default logging

logger = loggers.getLogger('therapyeval')
