# coding=utf-8
# Copyright 2020 Google LLC.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

# Lint as: python3
"""Tests for the command line entry point."""

import io
import json
import os
from unittest import mock

from absl.testing import absltest
import gin

from walsh_sim import cli
from walsh_sim import errors

SMALL = ("ExperimentConfig.grid = {'t_end': 1.0, 'n_steps': 50}",)


class CliTest(absltest.TestCase):

  def tearDown(self):
    super().tearDown()
    gin.clear_config()

  def test_list(self):
    with mock.patch('sys.stdout', new_callable=io.StringIO) as stdout:
      self.assertEqual(cli.execute('list'), cli.EXIT_OK)
    lines = stdout.getvalue().strip().split('\n')
    self.assertLen(lines, 12)
    self.assertEqual([line.split('\t')[0] for line in lines][:3],
                     ['fold-demo', 'walsh-bm', 'skew-bm'])

  def test_unknown_command(self):
    self.assertEqual(cli.execute('plot', experiment='walsh-bm'),
                     cli.EXIT_CONFIG)

  def test_unknown_experiment(self):
    self.assertEqual(cli.execute('run', experiment='no-such-experiment'),
                     cli.EXIT_CONFIG)

  def test_validate(self):
    self.assertEqual(cli.execute('validate', experiment='walsh-bm'),
                     cli.EXIT_OK)
    self.assertEqual(cli.execute('validate', experiment='walsh-bm', n_paths=0),
                     cli.EXIT_CONFIG)
    self.assertEqual(
        cli.execute('validate', experiment='walsh-bm',
                    gin_bindings=["ExperimentConfig.params = {'colour': 1}"]),
        cli.EXIT_CONFIG)

  def test_load_config_overrides(self):
    cfg = cli.load_config('skew-bm', gin_bindings=SMALL, seed=4, n_paths=9,
                          out='/tmp/out', workers=2)
    self.assertEqual(cfg.grid['n_steps'], 50)
    self.assertEqual(cfg.batch['seed'], 4)
    self.assertEqual(cfg.batch['n_paths'], 9)
    self.assertEqual(cfg.batch['workers'], 2)
    self.assertEqual(cfg.output['directory'], '/tmp/out')

  def test_run_writes_deterministic_artifacts(self):
    summaries = []
    for workers in (1, 3):
      out = os.path.join(self.create_tempdir().full_path, 'results')
      code = cli.execute('run', experiment='skew-bm', gin_bindings=SMALL,
                         n_paths=40, seed=2, out=out, workers=workers)
      self.assertEqual(code, cli.EXIT_OK)
      with open(os.path.join(out, 'manifest.json')) as fp:
        manifest = json.load(fp)
      self.assertIn('summary.json', manifest)
      self.assertIn('hist_x1.csv', manifest)
      with open(os.path.join(out, 'summary.json')) as fp:
        summaries.append(fp.read())
    self.assertEqual(summaries[0], summaries[1])
    summary = json.loads(summaries[0])
    self.assertEqual(summary['experiment'], 'skew-bm')
    self.assertEqual(summary['n_paths'], 40)
    self.assertEqual(summary['seed'], 2)
    self.assertIn('positive_probability', summary['test_results'])

  def test_run_without_output_directory(self):
    result = cli.run(cli.load_config('fold-demo', gin_bindings=SMALL,
                                     n_paths=5))
    self.assertTrue(result.test_results['fold_identity'].passed)

  def test_numerical_errors_exit_3(self):
    failure = errors.NumericalBlowup('Non finite value', path_index=3, step=7)
    with mock.patch.object(cli, 'run', side_effect=failure):
      with self.assertLogs(logger='absl', level='ERROR') as logs:
        code = cli.execute('run', experiment='walsh-bm')
    self.assertEqual(code, cli.EXIT_NUMERICAL)
    self.assertIn('path 3, step 7', '\n'.join(logs.output))

  def test_main(self):
    with mock.patch('sys.stdout', new_callable=io.StringIO):
      self.assertEqual(cli.main(['walsh_sim', 'list']), cli.EXIT_OK)
    self.assertEqual(cli.main(['walsh_sim', 'run', 'extra']), cli.EXIT_CONFIG)


if __name__ == '__main__':
  absltest.main()
