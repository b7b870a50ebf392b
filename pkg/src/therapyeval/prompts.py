"""
Construction of the two prompts of the assessment pipeline (items-aware
reasoning, then symptom assessment) and their rendering as chat messages.

Prompt texts live in sectioned template files (see :func:`load_components`).
Once built, a :class:`PromptTemplate` holds a fully rendered system text and a
user layout where only the client-dependent slots remain::

    Client Information:
    <Interview>
    <Item-aware Reasoning Result>

    <closing text>

The reasoning slot only exists in symptom-assessment templates. When no
reasoning is supplied (ablation), the slot line disappears entirely.
"""

import dataclasses
import enum
import io
import re
from typing import Optional

from bronx.fancies import loggers

from . import gateway
from .psychometric import render_criteria, render_test
from .util import TherapyEvalError, package_data

#: No automatic export
__all__ = []

logger = loggers.getLogger(__name__)

SLOT_TEST = '<Psychometric Test>'
SLOT_FORMAT = '<Format Instructions>'
SLOT_INTERVIEW = '<Interview>'
SLOT_REASONING = '<Item-aware Reasoning Result>'

#: Slots with a stable meaning in template files
SLOTS = (SLOT_TEST, SLOT_FORMAT, SLOT_INTERVIEW, SLOT_REASONING)

_SECTION = re.compile(r'^\[(\w+)\]\s*$')
_SECTIONS = ('role', 'directives', 'additional', 'format', 'closing')


class PromptError(TherapyEvalError):
    """Anything wrong while building or rendering a prompt."""
    pass


class MissingComponentError(PromptError, ValueError):
    """A mandatory prompt component is missing or empty."""
    pass


class SlotMismatchError(PromptError, ValueError):
    """A slot is filled that the template does not have (or conversely)."""
    pass


class PromptKind(str, enum.Enum):
    """The two stages of the pipeline."""
    ITEMS_REASONING = 'items_reasoning'
    SYMPTOM_ASSESSMENT = 'symptom_assessment'


@dataclasses.dataclass(frozen=True)
class PromptComponents:
    """The building blocks of a prompt, as read in a template file."""

    role_text: str
    directives: str
    output_format: str = ''
    score_criteria: Optional[str] = None
    additional: str = SLOT_TEST
    closing: str = ''

    def __post_init__(self):
        for fname in ('role_text', 'directives'):
            if not (getattr(self, fname) or '').strip():
                raise MissingComponentError('The {:s} component of a prompt cannot be empty'.format(fname))


@dataclasses.dataclass(frozen=True)
class PromptTemplate:
    """A prompt ready to receive client material."""

    components: PromptComponents
    test: object
    kind: PromptKind
    system_text: str
    user_layout: str
    criteria: Optional[object] = None

    def __post_init__(self):
        object.__setattr__(self, 'kind', PromptKind(self.kind))
        has_criteria = self.components.score_criteria is not None
        if self.kind is PromptKind.SYMPTOM_ASSESSMENT and not has_criteria:
            raise MissingComponentError('A symptom assessment prompt needs score criteria')
        if self.kind is PromptKind.ITEMS_REASONING and has_criteria:
            raise SlotMismatchError('An items-aware reasoning prompt takes no score criteria')

    @property
    def has_reasoning_slot(self):
        return SLOT_REASONING in self.user_layout


def parse_components(text):
    """
    Read the sections of a template file.

    A section starts with a ``[name]`` line; known sections are ``role``,
    ``directives``, ``additional``, ``format`` and ``closing``.
    """
    sections = dict()
    current = None
    for line in text.splitlines():
        match = _SECTION.match(line)
        if match:
            current = match.group(1).lower()
            if current not in _SECTIONS:
                raise PromptError('Unknown template section [{:s}]'.format(current))
            sections[current] = list()
        elif current is not None:
            sections[current].append(line)
    sections = {k: '\n'.join(v).strip() for k, v in sections.items()}
    return PromptComponents(role_text=sections.get('role', ''),
                            directives=sections.get('directives', ''),
                            output_format=sections.get('format', ''),
                            additional=sections.get('additional', SLOT_TEST),
                            closing=sections.get('closing', ''))


def template_path(kind, language='en'):
    """Path of a bundled template file."""
    return package_data('templates', '{:s}.{:s}.txt'.format(getattr(kind, 'value', kind), language))


def load_components(kind, path=None, language='en'):
    """Load prompt components from ``path`` or from the bundled template of ``kind``."""
    path = path or template_path(kind, language)
    logger.debug('Loading %s prompt components from %s', getattr(kind, 'value', kind), path)
    with io.open(path, encoding='utf-8') as fhtpl:
        return parse_components(fhtpl.read())


def _substitute(layout, values):
    """Replace the slots of ``values`` in a single pass (substituted text is never rescanned)."""
    if not values:
        return layout
    pattern = re.compile('|'.join(re.escape(k) for k in values))
    return pattern.sub(lambda m: values[m.group(0)], layout)


def _system_text(components, test, format_text):
    blocks = ['Role:\n' + components.role_text.strip()]
    if components.score_criteria is not None:
        blocks.append('Score Criteria:\n' + components.score_criteria)
    blocks.append('Directives:\n' + components.directives.strip())
    blocks.append('Additional Information:\n' + components.additional.strip())
    blocks.append('Output Formatting:\n' + SLOT_FORMAT)
    layout = '\n\n'.join(blocks)
    if layout.count(SLOT_TEST) != 1:
        raise SlotMismatchError('The {:s} slot must appear exactly once'.format(SLOT_TEST))
    text = _substitute(layout, {SLOT_TEST: render_test(test),
                                SLOT_FORMAT: components.output_format.strip() or format_text})
    return text


def _user_layout(components, with_reasoning):
    lines = ['Client Information:', SLOT_INTERVIEW]
    if with_reasoning:
        lines.append(SLOT_REASONING)
    layout = '\n'.join(lines)
    if components.closing.strip():
        layout += '\n\n' + components.closing.strip()
    return layout


def build_reasoning_prompt(components, test):
    """The items-aware reasoning prompt for ``test``."""
    if components is None:
        raise MissingComponentError('No prompt components')
    if components.score_criteria is not None:
        raise SlotMismatchError('An items-aware reasoning prompt takes no score criteria')
    return PromptTemplate(
        components=components,
        test=test,
        kind=PromptKind.ITEMS_REASONING,
        system_text=_system_text(components, test, gateway.reasoning_format_instructions(test)),
        user_layout=_user_layout(components, with_reasoning=False),
    )


def build_assessment_prompt(components, test, criteria):
    """The symptom assessment prompt for ``test`` scored under ``criteria``."""
    if components is None:
        raise MissingComponentError('No prompt components')
    if criteria is None:
        raise MissingComponentError('A symptom assessment prompt needs score criteria')
    components = dataclasses.replace(components, score_criteria=render_criteria(criteria))
    return PromptTemplate(
        components=components,
        test=test,
        kind=PromptKind.SYMPTOM_ASSESSMENT,
        system_text=_system_text(components, test,
                                 gateway.assessment_format_instructions(test, criteria)),
        user_layout=_user_layout(components, with_reasoning=True),
        criteria=criteria,
    )


def render_messages(template, context, reasoning=None):
    """
    The chat messages (one system, one user) of ``template`` filled with the
    client ``context`` and, for assessment prompts, the optional ``reasoning``.
    """
    if reasoning is not None and not template.has_reasoning_slot:
        raise SlotMismatchError('A {:s} prompt has no reasoning slot'.format(template.kind.value))
    values = {SLOT_INTERVIEW: context}
    layout = template.user_layout
    if template.has_reasoning_slot:
        if reasoning is None:
            layout = layout.replace('\n' + SLOT_REASONING, '')
        else:
            values[SLOT_REASONING] = 'Items-Aware Reasoning Result:\n' + reasoning
    return [dict(role='system', content=template.system_text),
            dict(role='user', content=_substitute(layout, values))]
