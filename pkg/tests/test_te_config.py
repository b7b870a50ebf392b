from unittest import TestCase, main

import os
import shutil
import tempfile

from therapyeval import config as te_config
from therapyeval.config import ConfigError
from therapyeval.psychometric import bundled_test

from therapy_fixtures import REASONING_MARK

CONFIG_FILE = """
provider:
  kind: scripted
  model: fake-model
runs: 2
concurrency: 1
language: zh
history: {sessions: true}
positive_class: worsened
"""


class utRunConfig(TestCase):

    def setUp(self):
        self.tmpdir = tempfile.mkdtemp(prefix='test_te_config_')

    def tearDown(self):
        shutil.rmtree(self.tmpdir)

    def _write(self, name, content):
        path = os.path.join(self.tmpdir, name)
        with open(path, 'w', encoding='utf-8') as fhout:
            fhout.write(content)
        return path

    def test_defaults(self):
        config = te_config.load_config()
        self.assertEqual(config.runs, 3)
        self.assertEqual(config.provider, dict(kind='scripted'))
        self.assertFalse(config.ablate_reasoning)
        self.assertIsNone(config.positive_class)
        self.assertEqual(config.load_test(), bundled_test())
        flags = config.history_flags()
        self.assertFalse(flags.sessions or flags.assessments or flags.outcomes)

    def test_file_and_overrides(self):
        path = self._write('run.yaml', CONFIG_FILE)
        config = te_config.load_config(path)
        self.assertEqual(config.runs, 2)
        self.assertEqual(config.language, 'zh')
        self.assertTrue(config.history.sessions)
        self.assertEqual(config.positive_class, 'worsened')
        self.assertEqual(config.provider_description(), dict(kind='scripted', model='fake-model', concurrency=1))
        config = te_config.load_config(path, runs=5, model='other', provider='cassette', concurrency=None)
        self.assertEqual(config.runs, 5)
        self.assertEqual(config.concurrency, 1)
        self.assertEqual(config.provider['kind'], 'cassette')
        self.assertEqual(config.provider_description()['model'], 'other')

    def test_snapshot(self):
        config = te_config.load_config(out=self.tmpdir)
        self.assertNotIn('out', config.snapshot())
        self.assertEqual(config.snapshot(), te_config.load_config(out='elsewhere').snapshot())

    def test_invalid(self):
        for overrides in (dict(runs=0), dict(provider=dict(model='x')), dict(colour='blue'),
                          dict(templates=dict(summary='x.txt')), dict(test='/nonexistent/test.yaml'),
                          dict(positive_class='improved')):
            with self.assertRaises(ConfigError):
                te_config.load_config(**overrides)

    def test_secrets_rejected(self):
        path = self._write('leak.yaml', 'provider: {kind: openai, api_key: sk-123}\n')
        with self.assertRaises(ConfigError) as cm:
            te_config.load_config(path)
        self.assertIn('environment', str(cm.exception))

    def test_unreadable(self):
        with self.assertRaises(ConfigError):
            te_config.load_config(os.path.join(self.tmpdir, 'missing.yaml'))
        with self.assertRaises(ConfigError):
            te_config.load_config(self._write('list.yaml', '- a\n- b\n'))
        with self.assertRaises(ConfigError):
            te_config.load_config(self._write('broken.yaml', 'runs: [1\n'))

    def test_engine_config(self):
        template = self._write('reasoning.txt', '[role]\nCustom reasoning role.\n\n[directives]\nList items.\n\n'
                                                '[closing]\nGo.\n')
        config = te_config.load_config(templates=dict(items_reasoning=template), ablate_reasoning=True,
                                       model='m1')
        engine_config = config.engine_config(run_index=1)
        self.assertTrue(engine_config.ablate_reasoning)
        self.assertEqual(engine_config.run_index, 1)
        self.assertEqual(engine_config.model, 'm1')
        self.assertIn('Custom reasoning role.', engine_config.reasoning_template.components.role_text)
        self.assertIn(REASONING_MARK, te_config.load_config().engine_config()
                      .reasoning_template.components.role_text)


if __name__ == '__main__':
    main(verbosity=2)
