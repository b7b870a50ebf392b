"""
Psychometric test definitions (SCL-90 by default), symptom dimensions and
scoring criteria.

Test definitions are data files (JSON or YAML) of the form::

    {"name": "SCL-90",
     "dimensions": [{"name": "Somatization",
                     "description": "...",
                     "items": ["Headaches", ...],
                     "aliases": []},
                    ...]}

Criteria files list the admissible scores::

    {"name": "...", "levels": [{"score": -1, "description": "Symptom not addressed."}, ...]}

"""

import dataclasses
import io
from typing import Dict, List, Mapping, Tuple

import yaml
from pydantic import BaseModel, ConfigDict, ValidationError

from bronx.fancies import loggers

from .util import TherapyEvalError, normalize_name, package_data

#: No automatic export
__all__ = []

logger = loggers.getLogger(__name__)

#: Score used when a symptom is not addressed (and for failed assessments)
NOT_ADDRESSED = -1

#: Name of the bundled test
DEFAULT_TEST = 'scl90'

#: Name of the bundled criteria
DEFAULT_CRITERIA = 'criteria'


class PsychometricError(TherapyEvalError):
    """Anything wrong with a test or criteria definition."""
    pass


class DefinitionParseError(PsychometricError, ValueError):
    """The definition does not parse or does not follow the documented schema."""
    pass


class DuplicateDimensionError(PsychometricError, ValueError):
    """Two dimensions share a name (or an alias)."""
    pass


class EmptyDimensionsError(PsychometricError, ValueError):
    """A test without any dimension."""
    pass


# Wire schemas of the definition files

class _DimensionDefinition(BaseModel):
    model_config = ConfigDict(extra='forbid', title='Symptom dimension')

    name: str
    description: str = ''
    items: List[str] = []
    aliases: List[str] = []


class _TestDefinition(BaseModel):
    model_config = ConfigDict(extra='forbid', title='Psychometric test definition')

    name: str
    dimensions: List[_DimensionDefinition]


class _LevelDefinition(BaseModel):
    model_config = ConfigDict(extra='forbid')

    score: int
    description: str


class _CriteriaDefinition(BaseModel):
    model_config = ConfigDict(extra='forbid')

    name: str = 'criteria'
    levels: List[_LevelDefinition]


# Domain types

@dataclasses.dataclass(frozen=True)
class SymptomDimension:
    """One symptom dimension and the checklist items mapped to it."""

    name: str
    description: str = ''
    item_descriptions: Tuple[str, ...] = ()
    aliases: Tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'item_descriptions', tuple(self.item_descriptions))
        object.__setattr__(self, 'aliases', tuple(self.aliases))

    @property
    def keys(self):
        """Normalized names under which the dimension may be referred to."""
        return {normalize_name(n) for n in (self.name,) + self.aliases}


@dataclasses.dataclass(frozen=True)
class PsychometricTest:
    """An ordered collection of symptom dimensions."""

    name: str
    dimensions: Tuple[SymptomDimension, ...]

    def __post_init__(self):
        object.__setattr__(self, 'dimensions', tuple(self.dimensions))
        if not self.dimensions:
            raise EmptyDimensionsError('Test {!s} has no dimension'.format(self.name))
        lookup = dict()
        for dim in self.dimensions:
            for key in dim.keys:
                if key in lookup:
                    raise DuplicateDimensionError('Duplicate dimension name {!r} in test {!s}'
                                                  .format(dim.name, self.name))
                lookup[key] = dim.name
        object.__setattr__(self, '_lookup', lookup)

    def __len__(self):
        return len(self.dimensions)

    def __iter__(self):
        yield from self.dimensions

    @property
    def dimension_names(self):
        return [d.name for d in self.dimensions]

    def canonical(self, name):
        """The dimension name matching ``name`` (or an alias of it), ``None`` if none."""
        return self._lookup.get(normalize_name(name))


@dataclasses.dataclass(frozen=True)
class ScoreCriteria:
    """Ordered map of admissible scores to their description."""

    levels: Mapping[int, str]
    name: str = 'criteria'

    def __post_init__(self):
        object.__setattr__(self, 'levels', dict(sorted(self.levels.items())))
        if not self.levels:
            raise DefinitionParseError('Score criteria without any level')

    def __contains__(self, score):
        return validate_score(score, self)

    @property
    def scores(self):
        return list(self.levels.keys())


@dataclasses.dataclass(frozen=True)
class AssessmentScores:
    """Per-dimension scores of one assessment, in the test's dimension order."""

    scores: Dict[str, int]

    def __post_init__(self):
        object.__setattr__(self, 'scores', dict(self.scores))

    def __getitem__(self, name):
        return self.scores[name]

    def __len__(self):
        return len(self.scores)

    def items(self):
        return self.scores.items()

    @classmethod
    def fallback(cls, test):
        """All dimensions scored as not addressed."""
        return cls({name: NOT_ADDRESSED for name in test.dimension_names})

    def is_fallback(self):
        return all(v == NOT_ADDRESSED for v in self.scores.values())

    def as_dict(self):
        return dict(self.scores)


# Module interface

def validate_score(score, criteria):
    """Check that ``score`` is one of the levels of ``criteria``."""
    return isinstance(score, int) and not isinstance(score, bool) and score in criteria.levels


def _parse_structured(definition):
    if isinstance(definition, (dict, list)):
        return definition
    if isinstance(definition, bytes):
        definition = definition.decode('utf-8')
    try:
        return yaml.safe_load(definition)
    except yaml.YAMLError as trouble:
        raise DefinitionParseError('Unparsable definition: {!s}'.format(trouble))


def load_test(definition):
    """
    Build a :class:`PsychometricTest` from a definition (JSON/YAML text or an
    already decoded mapping).
    """
    raw = _parse_structured(definition)
    try:
        tdef = _TestDefinition.model_validate(raw)
    except ValidationError as trouble:
        raise DefinitionParseError('Invalid test definition: {!s}'.format(trouble))
    if not tdef.dimensions:
        raise EmptyDimensionsError('Test {:s} has no dimension'.format(tdef.name))
    seen = set()
    for ddef in tdef.dimensions:
        if ddef.name in seen:
            raise DuplicateDimensionError('Duplicate dimension {!r} in test {:s}'.format(ddef.name, tdef.name))
        seen.add(ddef.name)
    test = PsychometricTest(
        name=tdef.name,
        dimensions=[SymptomDimension(name=d.name, description=d.description,
                                     item_descriptions=d.items, aliases=d.aliases)
                    for d in tdef.dimensions]
    )
    logger.debug('Loaded test %s with %d dimensions', test.name, len(test))
    return test


def dump_test(test):
    """Serialize ``test`` in the definition format (JSON text)."""
    tdef = _TestDefinition(
        name=test.name,
        dimensions=[_DimensionDefinition(name=d.name, description=d.description,
                                         items=list(d.item_descriptions), aliases=list(d.aliases))
                    for d in test.dimensions]
    )
    return tdef.model_dump_json(indent=2) + '\n'


def load_test_file(path):
    """Load a test definition file."""
    with io.open(path, encoding='utf-8') as fhdef:
        return load_test(fhdef.read())


def definition_schema():
    """JSON schema of the test-definition files."""
    return _TestDefinition.model_json_schema()


def bundled_test(name=DEFAULT_TEST):
    """One of the test definitions shipped with the package."""
    return load_test_file(package_data('data', name + '.json'))


def load_criteria(definition):
    """Build a :class:`ScoreCriteria` from a criteria definition."""
    raw = _parse_structured(definition)
    try:
        cdef = _CriteriaDefinition.model_validate(raw)
    except ValidationError as trouble:
        raise DefinitionParseError('Invalid criteria definition: {!s}'.format(trouble))
    levels = dict()
    for ldef in cdef.levels:
        if ldef.score in levels:
            raise DefinitionParseError('Duplicate score level {:d}'.format(ldef.score))
        levels[ldef.score] = ldef.description
    return ScoreCriteria(levels=levels, name=cdef.name)


def dump_criteria(criteria):
    """Serialize ``criteria`` in the criteria file format (JSON text)."""
    cdef = _CriteriaDefinition(name=criteria.name,
                               levels=[_LevelDefinition(score=k, description=v)
                                       for k, v in criteria.levels.items()])
    return cdef.model_dump_json(indent=2) + '\n'


def load_criteria_file(path):
    """Load a criteria definition file."""
    with io.open(path, encoding='utf-8') as fhdef:
        return load_criteria(fhdef.read())


def bundled_criteria(name=DEFAULT_CRITERIA):
    """The criteria shipped with the package."""
    return load_criteria_file(package_data('data', name + '.json'))


def render_test(test):
    """Text rendering of ``test`` (dimensions and their checklist items)."""
    lines = list()
    for i, dim in enumerate(test.dimensions, start=1):
        head = '{:d}. {:s}'.format(i, dim.name)
        if dim.description:
            head += ': ' + dim.description
        lines.append(head)
        lines.extend('   - ' + item for item in dim.item_descriptions)
    return '\n'.join(lines)


def render_criteria(criteria):
    """The criteria as a one-line ``Scoring criteria:`` statement."""
    return 'Scoring criteria: ' + ', '.join('{:d} ({:s})'.format(k, v.rstrip('.'))
                                            for k, v in criteria.levels.items()) + '.'
