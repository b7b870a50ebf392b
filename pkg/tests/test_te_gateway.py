from unittest import TestCase, main

import json
import random

from therapyeval import gateway
from therapyeval.gateway import (CompletionRequest, FormatError, FormatErrorKind, ReasoningItem,
                                 decode_assessment, decode_reasoning, encode_assessment, encode_reasoning)
from therapyeval.psychometric import AssessmentScores, bundled_criteria, load_test

TINY_TEST = """
name: tiny
dimensions:
  - name: Depression
  - name: Anxiety
  - name: Interpersonal Sensitivity
    aliases: [Interpersonal Sensibility]
"""

GOOD_ITEM = dict(client_statement='I cry every night.', symptom_category='Depression',
                 specific_symptom='Crying easily', presence=True,
                 explanation='Frequent crying is a depressive item.')


class utRequests(TestCase):

    def test_request_checks(self):
        with self.assertRaises(ValueError):
            CompletionRequest(messages=[], model='m')
        with self.assertRaises(ValueError):
            CompletionRequest(messages=[dict(role='user', content='x')], model='m', temperature=-1)
        with self.assertRaises(ValueError):
            CompletionRequest(messages=[dict(role='user', content='x')], model='m', max_output_tokens=0)

    def test_digest(self):
        r1 = CompletionRequest(messages=[dict(role='user', content='x')], model='m')
        r2 = CompletionRequest(messages=[dict(content='x', role='user')], model='m')
        r3 = CompletionRequest(messages=[dict(role='user', content='y')], model='m')
        self.assertEqual(gateway.request_digest(r1), gateway.request_digest(r2))
        self.assertNotEqual(gateway.request_digest(r1), gateway.request_digest(r3))
        self.assertEqual(r1.text, 'x')


class utExtract(TestCase):

    def test_extract(self):
        self.assertEqual(gateway.extract_structured('{"a": 1}'), dict(a=1))
        self.assertEqual(gateway.extract_structured('Sure!\n```json\n{"a": 1}\n```\nBye'), dict(a=1))
        self.assertEqual(gateway.extract_structured('Here it is: {"a": [1, 2]} hope it helps'), dict(a=[1, 2]))
        self.assertEqual(gateway.extract_structured('[1, 2]'), [1, 2])
        self.assertIsNone(gateway.extract_structured('no structure here'))
        self.assertIsNone(gateway.extract_structured('"just a string"'))
        self.assertIsNone(gateway.extract_structured(None))


class utDecodeReasoning(TestCase):

    def setUp(self):
        self.test = load_test(TINY_TEST)

    def test_good(self):
        items = decode_reasoning(json.dumps(dict(items=[GOOD_ITEM])), self.test)
        self.assertEqual(items, [ReasoningItem(**GOOD_ITEM)])

    def test_lenient_shapes(self):
        item = dict(GOOD_ITEM, symptom_category='interpersonal sensibility', explanation='  padded  ')
        items = decode_reasoning('```json\n' + json.dumps([item]) + '\n```', self.test)
        self.assertEqual(items[0].symptom_category, 'Interpersonal Sensitivity')
        self.assertEqual(items[0].explanation, 'padded')
        self.assertEqual(decode_reasoning('{"items": []}', self.test), [])

    def test_errors(self):
        cases = [
            ('', FormatErrorKind.EMPTY_RESPONSE),
            ('   \n', FormatErrorKind.EMPTY_RESPONSE),
            ('I think the client is depressed.', FormatErrorKind.NOT_STRUCTURED),
            (json.dumps(dict(items=[dict(GOOD_ITEM, explanation='')])), FormatErrorKind.SCHEMA_VIOLATION),
            (json.dumps(dict(items=[dict(GOOD_ITEM, mood='bad')])), FormatErrorKind.SCHEMA_VIOLATION),
            (json.dumps(dict(items=[dict(GOOD_ITEM, symptom_category='Happiness')])),
             FormatErrorKind.UNKNOWN_DIMENSION),
        ]
        for raw, kind in cases:
            error = decode_reasoning(raw, self.test)
            self.assertIsInstance(error, FormatError, raw)
            self.assertIs(error.kind, kind, raw)
            self.assertEqual(error.stage, 'items_reasoning')

    def test_excerpt(self):
        error = decode_reasoning('x' * 1000, self.test)
        self.assertEqual(len(error.raw_excerpt), gateway.EXCERPT_LENGTH)
        self.assertEqual(FormatError.from_dict(error.as_dict()), error)


class utDecodeAssessment(TestCase):

    def setUp(self):
        self.test = load_test(TINY_TEST)
        self.criteria = bundled_criteria()

    def test_good(self):
        raw = '{"scores": {"Anxiety": 1, "Depression": 2, "Interpersonal Sensitivity": -1}}'
        scores = decode_assessment(raw, self.test, self.criteria)
        self.assertEqual(list(scores.scores.items()),
                         [('Depression', 2), ('Anxiety', 1), ('Interpersonal Sensitivity', -1)])

    def test_flat_object(self):
        raw = 'Result: {"depression": 0, "anxiety": 0, "interpersonal-sensibility": 1}'
        scores = decode_assessment(raw, self.test, self.criteria)
        self.assertEqual(scores['Interpersonal Sensitivity'], 1)

    def test_errors(self):
        cases = [
            ('', FormatErrorKind.EMPTY_RESPONSE),
            ('All fine.', FormatErrorKind.NOT_STRUCTURED),
            ('{"scores": {"Depression": "2", "Anxiety": 1, "Interpersonal Sensitivity": 0}}',
             FormatErrorKind.SCHEMA_VIOLATION),
            ('{"scores": {"Depression": 1.5, "Anxiety": 1, "Interpersonal Sensitivity": 0}}',
             FormatErrorKind.SCHEMA_VIOLATION),
            ('{"scores": {"Depression": 1, "depression": 1, "Anxiety": 1, "Interpersonal Sensitivity": 0}}',
             FormatErrorKind.SCHEMA_VIOLATION),
            ('{"scores": {"Depression": 1, "Anxiety": 1}}', FormatErrorKind.MISSING_DIMENSION),
            ('{"scores": {"Depression": 1, "Anxiety": 1, "Interpersonal Sensitivity": 0, "Joy": 2}}',
             FormatErrorKind.UNKNOWN_DIMENSION),
            ('{"scores": {"Depression": 3, "Anxiety": 1, "Interpersonal Sensitivity": 0}}',
             FormatErrorKind.INVALID_SCORE),
            ('[1, 2, 3]', FormatErrorKind.SCHEMA_VIOLATION),
        ]
        for raw, kind in cases:
            error = decode_assessment(raw, self.test, self.criteria)
            self.assertIsInstance(error, FormatError, raw)
            self.assertIs(error.kind, kind, raw)


class utDecoderProperties(TestCase):

    def setUp(self):
        self.test = load_test(TINY_TEST)
        self.criteria = bundled_criteria()

    def test_fuzz_totality(self):
        rng = random.Random(42)
        snippets = [b'{', b'}', b'[', b']', b'"scores"', b'"items"', b':', b',', b'1', b'-1', b'"Depression"',
                    b'```json\n', b'```', b'true', b'null']
        for _ in range(10000):
            if rng.random() < 0.5:
                raw = bytes(rng.randrange(256) for _ in range(rng.randrange(64)))
            else:
                raw = b''.join(rng.choice(snippets) for _ in range(rng.randrange(12)))
            for decoded in (decode_reasoning(raw, self.test),
                            decode_assessment(raw, self.test, self.criteria)):
                self.assertTrue(isinstance(decoded, (list, AssessmentScores, FormatError)))

    def test_round_trip(self):
        rng = random.Random(7)
        names = self.test.dimension_names
        for _ in range(1000):
            items = [ReasoningItem(client_statement='statement {:d}'.format(rng.randrange(100)),
                                   symptom_category=rng.choice(names),
                                   specific_symptom=rng.choice(['Worrying', 'Feeling blue', '']),
                                   presence=rng.random() < 0.5,
                                   explanation='because {:d}'.format(rng.randrange(100)))
                     for _ in range(rng.randrange(5))]
            self.assertEqual(decode_reasoning(encode_reasoning(items), self.test), items)
            scores = AssessmentScores({n: rng.choice([-1, 0, 1, 2]) for n in names})
            self.assertEqual(decode_assessment(encode_assessment(scores), self.test, self.criteria), scores)


def _resolved(schema, defs=None):
    """The schema with its references inlined and without titles."""
    if defs is None:
        defs = schema.get('$defs', dict())
    if isinstance(schema, dict):
        if '$ref' in schema:
            return _resolved(defs[schema['$ref'].rsplit('/', 1)[-1]], defs)
        return {k: _resolved(v, defs) for k, v in schema.items() if k not in ('$defs', '$schema', 'title')}
    if isinstance(schema, list):
        return [_resolved(v, defs) for v in schema]
    return schema


class utFormatInstructions(TestCase):

    def test_instructions(self):
        test = load_test(TINY_TEST)
        text = gateway.assessment_format_instructions(test, bundled_criteria())
        self.assertIn('Depression, Anxiety, Interpersonal Sensitivity', text)
        self.assertIn('-1, 0, 1, 2', text)
        self.assertIn('"symptom_category"', gateway.reasoning_format_instructions(test))

    def test_published_schemas(self):
        for name in ('items_reasoning', 'symptom_assessment', gateway.SCHEMA_TEST_DEFINITION):
            with open(gateway.schema_path(name), encoding='utf-8') as fhjson:
                published = json.load(fhjson)
            self.assertEqual(_resolved(published), _resolved(gateway.json_schema(name)), name)
            self.assertEqual(json.loads(gateway.load_schema_text(name)), gateway.json_schema(name))
        self.assertIn(gateway.load_schema_text('items_reasoning'),
                      gateway.reasoning_format_instructions(load_test(TINY_TEST)))
        with self.assertRaises(ValueError):
            gateway.json_schema('summary')


if __name__ == '__main__':
    main(verbosity=2)
