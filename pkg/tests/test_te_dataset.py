from unittest import TestCase, main

import json
import math
import os
import random
import shutil
import tempfile

from therapyeval import dataset, providers
from therapyeval.core import Phase, Session, Turn
from therapyeval.dataset import (Corpus, DatasetError, EmptyCorpusError, EmptyTranscriptError,
                                 InvalidBoundsError, NonPrefixSpanError, PairingConfig, PhaseExemplar,
                                 PhaseFormatError, TranscriptFormatError, UnknownSpeakerError)

from therapy_fixtures import make_session

PHASE_MARK = 'psychotherapy researcher'


class utTranscripts(TestCase):

    def test_speaker_lines(self):
        session = dataset.parse_transcript('Therapist: Hello.\n\nClient: I feel anxious.\nClient:\n',
                                           session_id='S1', client_id='C1')
        self.assertEqual(session.render(), 'Therapist: Hello.\nClient: I feel anxious.')
        self.assertEqual(session.client_id, 'C1')

    def test_chinese_labels(self):
        session = dataset.parse_transcript('咨询师：你好。\n来访者：我最近睡不好。', session_id='Z1', language='zh')
        self.assertEqual([t.speaker.value for t in session.turns], ['therapist', 'client'])
        self.assertEqual(session.language, 'zh')

    def test_strict_and_lenient(self):
        text = 'Counselor: Hello.\nPatient: I cannot\nsleep at all.'
        with self.assertRaises(UnknownSpeakerError):
            dataset.parse_transcript(text, session_id='S1')
        session = dataset.parse_transcript(text, session_id='S1', strict=False)
        self.assertEqual(session.turns[1].text, 'I cannot sleep at all.')

    def test_empty(self):
        with self.assertRaises(EmptyTranscriptError):
            dataset.parse_transcript('\n\n', session_id='S0')
        with self.assertRaises(EmptyTranscriptError):
            dataset.parse_transcript(dict(id='S0', turns=[]), fmt='structured_records')

    def test_structured_records(self):
        record = dict(id='S1', client_id='C1', phase='initial',
                      turns=[dict(speaker='therapist', text='Hi'), dict(speaker='client', text='Hello')])
        session = dataset.parse_transcript(json.dumps(record), fmt='structured_records')
        self.assertIs(session.phase, Phase.INITIAL)
        self.assertEqual(session.as_dict()['turns'], record['turns'])
        with self.assertRaises(TranscriptFormatError):
            dataset.parse_transcript('{not json', fmt='structured_records')
        with self.assertRaises(TranscriptFormatError):
            dataset.parse_transcript(dict(record, extra=1), fmt='structured_records')
        with self.assertRaises(UnknownSpeakerError):
            dataset.parse_transcript(dict(record, turns=[dict(speaker='nurse', text='Hi')]),
                                     fmt='structured_records')

    def test_unknown_format(self):
        with self.assertRaises(DatasetError):
            dataset.parse_transcript('Client: hi', fmt='xml')


class utCorpus(TestCase):

    def setUp(self):
        self.tmpdir = tempfile.mkdtemp(prefix='test_te_dataset_')

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def test_directory(self):
        for name, content in (('a.txt', 'Therapist: Hi\nClient: Hello'),
                              ('b.txt', 'Therapist: Hi\nNobody knows\nClient: Hello'),
                              ('c.txt', 'Client: Fine'),
                              ('notes.md', 'ignored')):
            with open(os.path.join(self.tmpdir, name), 'w', encoding='utf-8') as fhout:
                fhout.write(content)
        corpus, errors = dataset.load_corpus(self.tmpdir)
        self.assertEqual([s.id for s in corpus], ['a', 'c'])
        self.assertEqual(len(errors), 1)
        self.assertTrue(errors[0][0].endswith('b.txt'))

    def test_jsonl(self):
        path = os.path.join(self.tmpdir, 'corpus.jsonl')
        sessions = [make_session('S1'), make_session('S2', client_id='C2')]
        dataset.dump_sessions(path, sessions)
        with open(path, 'a', encoding='utf-8') as fhout:
            fhout.write('{broken\n')
            fhout.write(json.dumps(sessions[0].as_dict()) + '\n')
        corpus, errors = dataset.load_corpus(path)
        self.assertEqual(corpus.name, 'corpus')
        self.assertEqual(list(corpus), sessions)
        self.assertEqual(len(errors), 2)
        self.assertEqual(corpus.client_ids, ['C2', 'S1'])
        self.assertEqual(corpus.session('S2'), sessions[1])
        with self.assertRaises(KeyError):
            corpus.session('S9')

    def test_missing(self):
        with self.assertRaises(DatasetError):
            dataset.load_corpus(os.path.join(self.tmpdir, 'nothing.jsonl'))

    def test_pairs_consistency(self):
        initial = make_session('S1-initial', client_id='C1')
        full = make_session('S1', client_id='C1')
        Corpus('ok', [initial, full], pairs=[(initial, full)])
        with self.assertRaises(DatasetError):
            Corpus('mixed', [initial, make_session('S2', client_id='C2')],
                   pairs=[(initial, make_session('S2', client_id='C2'))])
        with self.assertRaises(DatasetError):
            Corpus('missing', [full], pairs=[(initial, full)])


class utFiltering(TestCase):

    def test_bounds(self):
        sessions = [make_session('S{:d}'.format(n), n) for n in (24, 25, 102, 103)]
        kept = dataset.filter_sessions(sessions)
        self.assertEqual([len(s) for s in kept], [25, 102])
        with self.assertRaises(InvalidBoundsError):
            dataset.filter_sessions(sessions, min_turns=10, max_turns=5)
        with self.assertRaises(InvalidBoundsError):
            dataset.filter_sessions(sessions, min_turns=-1)

    def test_random_bounds(self):
        rng = random.Random(31)
        for _ in range(200):
            sessions = [make_session('S{:d}'.format(i), rng.randrange(1, 40)) for i in range(rng.randrange(12))]
            low = rng.randrange(0, 30)
            high = low + rng.randrange(0, 20)
            kept = dataset.filter_sessions(sessions, min_turns=low, max_turns=high)
            self.assertEqual(dataset.filter_sessions(kept, min_turns=low, max_turns=high), kept)
            remaining = iter(sessions)
            self.assertTrue(all(any(s is k for s in remaining) for k in kept))
            self.assertEqual(len(kept), sum(1 for s in sessions if low <= len(s) <= high))

    def test_deduplicate(self):
        first = [make_session('A'), make_session('B', 6)]
        second = [make_session('A2'), make_session('C', 8)]
        kept = dataset.deduplicate_sessions(first, second)
        self.assertEqual([s.id for s in kept], ['A', 'B', 'C'])


class utStats(TestCase):

    def test_hand_computed(self):
        corpus = Corpus('tiny', [make_session('S1', 10), make_session('S2', 13)])
        stats = dataset.corpus_stats(corpus)
        self.assertEqual(stats.n_sessions, 2)
        self.assertEqual(stats.n_clients, 2)
        self.assertEqual(stats.avg_utterances, 11.5)
        self.assertEqual(stats.std_utterances, 1.5)
        # 'Therapist line N' and 'Client line N': three words each
        self.assertEqual(stats.avg_words_per_utterance, 3.)
        self.assertEqual(stats.std_words_per_utterance, 0.)

    def test_word_count_oracle(self):
        rng = random.Random(47)
        vocabulary = ['anxious', 'sleep', 'I', 'feel', 'tired', 'work', 'mother', 'ok', 'really']
        for _ in range(50):
            sessions = list()
            for i in range(rng.randrange(1, 6)):
                turns = [Turn(rng.choice(['therapist', 'client']),
                              (' ' * rng.randrange(1, 3)).join(rng.choice(vocabulary)
                                                                for _ in range(rng.randrange(1, 15))))
                         for _ in range(rng.randrange(1, 10))]
                sessions.append(Session('S{:d}'.format(i), turns, client_id='C{:d}'.format(rng.randrange(3))))
            stats = dataset.corpus_stats(Corpus('random', sessions))
            utterances = [len(s.turns) for s in sessions]
            words = [len(t.text.split()) for s in sessions for t in s.turns]
            self.assertEqual(stats.n_sessions, len(sessions))
            self.assertEqual(stats.n_clients, len({s.client_id for s in sessions}))
            for value, sample in ((stats.avg_utterances, utterances), (stats.avg_words_per_utterance, words)):
                self.assertAlmostEqual(value, sum(sample) / len(sample), delta=1e-9)
            for value, sample in ((stats.std_utterances, utterances), (stats.std_words_per_utterance, words)):
                mean = sum(sample) / len(sample)
                self.assertAlmostEqual(value, math.sqrt(sum((x - mean) ** 2 for x in sample) / len(sample)),
                                       delta=1e-9)

    def test_empty(self):
        with self.assertRaises(EmptyCorpusError):
            dataset.corpus_stats(Corpus('void', []))

    def test_cjk(self):
        session = dataset.parse_transcript('咨询师：你好。\n来访者：我很焦虑 ok', session_id='Z1')
        corpus = Corpus('zh', [session])
        self.assertEqual(dataset.get_tokenizer('cjk_chars').tokens('我很焦虑 ok'), ['我', '很', '焦', '虑', 'ok'])
        self.assertEqual(dataset.corpus_stats(corpus, tokenizer='cjk_chars').avg_words_per_utterance, 3.5)
        self.assertEqual(dataset.corpus_stats(corpus).avg_words_per_utterance, 1.5)
        with self.assertRaises(DatasetError):
            dataset.get_tokenizer('bpe')


class utPhasePairs(TestCase):

    def setUp(self):
        self.exemplars = [PhaseExemplar(make_session('E{:d}'.format(i), 8), 3) for i in range(7)]

    def _provider(self, answers):
        return providers.scripted(rules=[((marker, PHASE_MARK), answer) for marker, answer in answers.items()])

    def test_build(self):
        full = make_session('S1', 10, marker='mk-full', client_id='C1')
        provider = self._provider({'mk-full': 'Answer: {"first_turn": 1, "last_turn": 4}'})
        initial, final = dataset.build_phase_pair(full, self.exemplars, provider)
        self.assertEqual(initial.id, 'S1-initial')
        self.assertEqual(initial.turns, full.turns[:4])
        self.assertIs(initial.phase, Phase.INITIAL)
        self.assertIs(final.phase, Phase.FINAL)
        self.assertEqual(final.turns, full.turns)
        self.assertEqual(initial.client_id, 'C1')

    def test_bad_answers(self):
        full = make_session('S1', 10, marker='mk-full')
        for answer, exc in (('{"first_turn": 1, "last_turn": 10}', NonPrefixSpanError),
                            ('{"first_turn": 2, "last_turn": 5}', NonPrefixSpanError),
                            ('The initial stage ends at turn 4.', PhaseFormatError),
                            ('{"first_turn": "one", "last_turn": 4}', PhaseFormatError)):
            with self.assertRaises(exc):
                dataset.build_phase_pair(full, self.exemplars, self._provider({'mk-full': answer}))

    def test_prompt_blocks(self):
        full = make_session('S1', 10)
        chosen = dataset.select_exemplars(self.exemplars, seed=3)
        self.assertEqual(len(chosen), 5)
        self.assertEqual(chosen, dataset.select_exemplars(self.exemplars, seed=3))
        system = dataset.phase_messages(full, chosen)[0]['content']
        for i in range(1, 6):
            self.assertIn('Example {:d}:\n1. Therapist: Therapist line 0'.format(i), system)
        self.assertNotIn('Example 6:', system)
        self.assertIn('Answer: {"first_turn":1,"last_turn":3}', system)
        self.assertEqual(len(dataset.select_exemplars(self.exemplars[:2], k=5)), 2)

    def test_exemplar_checks(self):
        with self.assertRaises(NonPrefixSpanError):
            PhaseExemplar(make_session('E', 4), 4)
        with self.assertRaises(DatasetError):
            dataset.select_exemplars([PhaseExemplar(make_session('E', 4), 2)], exclude='E')

    def test_pair_corpus(self):
        tmpdir = tempfile.mkdtemp(prefix='test_te_dataset_')
        try:
            full = make_session('S1', 10, client_id='C1')
            initial = make_session('S1-initial', 4, client_id='C1')
            corpus = Corpus('c', [initial, full])
            path = os.path.join(tmpdir, 'pairs.jsonl')
            dataset.dump_pair_corpus(path, [(initial, full)])
            with open(path, 'a', encoding='utf-8') as fhout:
                fhout.write(json.dumps(dict(client_id='C9', initial_session_id='X', full_session_id='S1')) + '\n')
                fhout.write('[1, 2]\n')
                fhout.write(json.dumps(dict(client_id='C1', initial_session_id='S1-initial')) + '\n')
            pairs, errors = dataset.load_pair_corpus(path, corpus)
            self.assertEqual(pairs, [('C1', initial, full)])
            self.assertEqual([message for _, message in errors],
                             ["Unknown session 'X'", 'Not a pair record', 'Missing field(s): full_session_id'])
            self.assertTrue(errors[1][0].endswith('pairs.jsonl:3'))
        finally:
            shutil.rmtree(tmpdir)

    def test_config_defaults(self):
        self.assertEqual(PairingConfig().k, 5)


if __name__ == '__main__':
    main(verbosity=2)
