from unittest import TestCase, main

from therapyeval import prompts
from therapyeval.prompts import (MissingComponentError, PromptComponents, PromptError, PromptKind,
                                 SlotMismatchError, SLOT_FORMAT, SLOT_REASONING, SLOT_TEST)
from therapyeval.psychometric import bundled_criteria, load_test, render_test

TINY_TEST = """
name: tiny
dimensions:
  - name: Depression
    items: [Feeling blue]
  - name: Anxiety
    items: [Nervousness]
"""

CONTEXT = 'Client Profile:\nNone\n\nInterview (S1):\nTherapist: Hello\nClient: I worry a lot.'


class utTemplates(TestCase):

    def setUp(self):
        self.test = load_test(TINY_TEST)
        self.criteria = bundled_criteria()

    def _reasoning(self):
        return prompts.build_reasoning_prompt(prompts.load_components(PromptKind.ITEMS_REASONING), self.test)

    def _assessment(self):
        return prompts.build_assessment_prompt(prompts.load_components(PromptKind.SYMPTOM_ASSESSMENT),
                                               self.test, self.criteria)

    def test_reasoning_system_text(self):
        template = self._reasoning()
        text = template.system_text
        self.assertTrue(text.startswith('Role:\nImagine you are a skilled psychologist'))
        self.assertEqual(text.count(render_test(self.test)), 1)
        self.assertNotIn(SLOT_TEST, text)
        self.assertNotIn(SLOT_FORMAT, text)
        self.assertNotIn('Score Criteria:', text)
        self.assertIn('Output Formatting:\nAnswer with a single JSON object', text)
        self.assertFalse(template.has_reasoning_slot)
        self.assertLess(text.index('Directives:'), text.index('Additional Information:'))

    def test_assessment_system_text(self):
        template = self._assessment()
        text = template.system_text
        self.assertIn('Score Criteria:\nScoring criteria: -1 (Symptom not addressed)', text)
        self.assertLess(text.index('Role:'), text.index('Score Criteria:'))
        self.assertLess(text.index('Score Criteria:'), text.index('Directives:'))
        self.assertTrue(template.has_reasoning_slot)
        self.assertIs(template.criteria, self.criteria)

    def test_render_without_reasoning(self):
        messages = prompts.render_messages(self._assessment(), CONTEXT)
        self.assertEqual([m['role'] for m in messages], ['system', 'user'])
        user = messages[1]['content']
        self.assertTrue(user.startswith('Client Information:\n' + CONTEXT + '\n\nPlease extract'))
        self.assertNotIn(SLOT_REASONING, user)
        self.assertNotIn('Items-Aware Reasoning Result', user)

    def test_render_with_reasoning(self):
        user = prompts.render_messages(self._assessment(), CONTEXT, '{"items": []}')[1]['content']
        self.assertIn(CONTEXT + '\nItems-Aware Reasoning Result:\n{"items": []}\n\n', user)

    def test_render_reasoning_stage(self):
        template = self._reasoning()
        user = prompts.render_messages(template, CONTEXT)[1]['content']
        self.assertEqual(user.splitlines()[0], 'Client Information:')
        with self.assertRaises(SlotMismatchError):
            prompts.render_messages(template, CONTEXT, 'some reasoning')

    def test_single_pass_substitution(self):
        tricky = 'Client: I typed <Item-aware Reasoning Result> and <Psychometric Test> by mistake.'
        user = prompts.render_messages(self._assessment(), tricky, 'R')[1]['content']
        self.assertIn(tricky, user)
        self.assertEqual(user.count('Items-Aware Reasoning Result:\nR'), 1)

    def test_chinese_templates(self):
        components = prompts.load_components(PromptKind.ITEMS_REASONING, language='zh')
        self.assertIn('SCL-90', components.role_text)
        prompts.build_reasoning_prompt(components, self.test)


class utComponents(TestCase):

    def setUp(self):
        self.test = load_test(TINY_TEST)

    def test_parse_sections(self):
        components = prompts.parse_components('[role]\nA role.\n[directives]\nDo it.\n\n'
                                              '[format]\nJSON please.\n[closing]\nThanks.\n')
        self.assertEqual(components.role_text, 'A role.')
        self.assertEqual(components.directives, 'Do it.')
        self.assertEqual(components.output_format, 'JSON please.')
        self.assertEqual(components.additional, SLOT_TEST)
        template = prompts.build_reasoning_prompt(components, self.test)
        self.assertTrue(template.system_text.endswith('Output Formatting:\nJSON please.'))
        self.assertTrue(template.user_layout.endswith('\n\nThanks.'))

    def test_bad_components(self):
        with self.assertRaises(PromptError):
            prompts.parse_components('[role]\nA role.\n[persona]\nBob.')
        with self.assertRaises(MissingComponentError):
            prompts.parse_components('[directives]\nDo it.')
        with self.assertRaises(MissingComponentError):
            PromptComponents(role_text='A role.', directives='  ')
        with self.assertRaises(MissingComponentError):
            prompts.build_reasoning_prompt(None, self.test)

    def test_slot_count(self):
        doubled = PromptComponents(role_text='R', directives='D', additional=SLOT_TEST + '\n' + SLOT_TEST)
        with self.assertRaises(SlotMismatchError):
            prompts.build_reasoning_prompt(doubled, self.test)
        missing = PromptComponents(role_text='R', directives='D', additional='Nothing here.')
        with self.assertRaises(SlotMismatchError):
            prompts.build_reasoning_prompt(missing, self.test)

    def test_criteria_rules(self):
        components = PromptComponents(role_text='R', directives='D')
        with self.assertRaises(MissingComponentError):
            prompts.build_assessment_prompt(components, self.test, None)
        with self.assertRaises(SlotMismatchError):
            prompts.build_reasoning_prompt(PromptComponents(role_text='R', directives='D', score_criteria='x'),
                                           self.test)


if __name__ == '__main__':
    main(verbosity=2)
