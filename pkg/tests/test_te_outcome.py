from unittest import TestCase, main

import itertools
import random

from therapyeval import outcome
from therapyeval.core import ClientHistory, ClientProfile, assemble_client_information
from therapyeval.engine import EngineConfig
from therapyeval.outcome import ClientMismatchError, Direction, OutcomeRecord, PsdiValue
from therapyeval.psychometric import AssessmentScores, bundled_criteria, bundled_test

from therapy_fixtures import make_session, pipeline_provider, reasoning_text, scores_text

DIMS10 = ['D{:02d}'.format(i) for i in range(10)]


def _oracle(values):
    total = 0
    count = 0
    for v in values:
        if v >= 1:
            total += v
            count += 1
    return (total / count if count else 0.), count


class utPsdi(TestCase):

    def test_examples(self):
        p = outcome.psdi(AssessmentScores({'a': 2, 'b': 1, 'c': 0, 'd': -1}))
        self.assertEqual((p.value, p.positive_count), (1.5, 2))
        self.assertEqual(p.positive_dimensions, {'a', 'b'})
        p = outcome.psdi(AssessmentScores({'a': -1, 'b': 0}))
        self.assertEqual((p.value, p.positive_count), (0., 0))
        self.assertEqual(outcome.psdi(AssessmentScores({'a': 2, 'b': 2})).value, 2.)

    def test_oracle(self):
        rng = random.Random(1234)
        for _ in range(10000):
            values = [rng.choice((-1, 0, 1, 2)) for _ in DIMS10]
            p = outcome.psdi(AssessmentScores(dict(zip(DIMS10, values))))
            self.assertEqual((p.value, p.positive_count), _oracle(values))

    def test_exhaustive_range(self):
        names = DIMS10[:6]
        for values in itertools.product((-1, 0, 1, 2), repeat=6):
            p = outcome.psdi(AssessmentScores(dict(zip(names, values))))
            if p.positive_count >= 1:
                self.assertTrue(1. <= p.value <= 2.)
            else:
                self.assertEqual(p.value, 0.)
            self.assertEqual(p.value == 0., p.positive_count == 0)

    def test_value_invariants(self):
        with self.assertRaises(ValueError):
            PsdiValue(value=1.5, positive_count=0)
        with self.assertRaises(ValueError):
            PsdiValue(value=1.5, positive_count=2, positive_dimensions={'a'})


class utDelta(TestCase):

    def test_antisymmetry(self):
        rng = random.Random(99)
        for _ in range(10000):
            a = outcome.psdi(AssessmentScores({n: rng.choice((-1, 0, 1, 2)) for n in DIMS10}))
            b = outcome.psdi(AssessmentScores({n: rng.choice((-1, 0, 1, 2)) for n in DIMS10}))
            self.assertEqual(outcome.delta_psdi(a, b), -outcome.delta_psdi(b, a))

    def test_direction_boundary(self):
        self.assertIs(outcome.classify_outcome(-1e-9), Direction.MAINTAINED_OR_IMPROVED)
        self.assertIs(outcome.classify_outcome(0.), Direction.MAINTAINED_OR_IMPROVED)
        self.assertIs(outcome.classify_outcome(1e-9), Direction.WORSENED)

    def test_from_records_mismatch(self):
        test = bundled_test()
        config = EngineConfig.build(test, bundled_criteria())
        provider = pipeline_provider({'mk-a': (reasoning_text('mk-a'), scores_text(Depression=2)),
                                      'mk-b': (reasoning_text('mk-b'), scores_text(Depression=1))})
        first = assemble_client_information(ClientProfile('C1'), make_session('S1', marker='mk-a'),
                                            ClientHistory())
        second = assemble_client_information(ClientProfile('C2'), make_session('S2', marker='mk-b'),
                                             ClientHistory())
        with self.assertRaises(ClientMismatchError):
            outcome.evaluate_outcome((first, second), config, provider)


class utEvaluate(TestCase):

    def test_pair(self):
        test = bundled_test()
        config = EngineConfig.build(test, bundled_criteria())
        provider = pipeline_provider({
            'mk-initial': (reasoning_text('mk-initial'), scores_text(Depression=2, Anxiety=1)),
            'mk-final': (reasoning_text('mk-final'), scores_text(Depression=1)),
        })
        profile = ClientProfile('C1')
        pair = (assemble_client_information(profile, make_session('S1-initial', marker='mk-initial'),
                                            ClientHistory()),
                assemble_client_information(profile, make_session('S1', marker='mk-final'), ClientHistory()))
        record = outcome.evaluate_outcome(pair, config, provider)
        self.assertEqual(record.psdi_initial.value, 1.5)
        self.assertEqual(record.psdi_final.value, 1.)
        self.assertEqual(record.delta, -0.5)
        self.assertIs(record.direction, Direction.MAINTAINED_OR_IMPROVED)
        self.assertEqual(record.errors, ())
        self.assertEqual(OutcomeRecord.from_dict(record.as_dict()), record)

    def test_worsened(self):
        initial = AssessmentScores({'a': 1, 'b': -1})
        final = AssessmentScores({'a': 1, 'b': 2})
        delta = outcome.delta_psdi(outcome.psdi(initial), outcome.psdi(final))
        self.assertEqual(delta, 0.5)
        self.assertIs(outcome.classify_outcome(delta), Direction.WORSENED)


if __name__ == '__main__':
    main(verbosity=2)
