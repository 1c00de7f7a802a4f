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
"""Small scale runs of the built-in experiments."""

import math

from absl.testing import absltest
import numpy as onp

from walsh_sim import config
from walsh_sim import errors
from walsh_sim import measures
from walsh_sim import simulator
from walsh_sim.experiments import registry


def _config(name, n_paths, n_steps, t_end=1.0, epsilons=None, **changes):
  spec = {'experiment': name,
          'grid': {'t_end': t_end, 'n_steps': n_steps},
          'batch': {'n_paths': n_paths, 'seed': 0}}
  if epsilons is not None:
    spec['estimator'] = {'epsilons': epsilons}
  spec.update(changes)
  return config.ExperimentConfig(**spec)


def _run(cfg, chunk_size=16, workers=1):
  sim = simulator.Simulator(seed=cfg.batch['seed'], chunk_size=chunk_size,
                            num_workers=workers)
  return registry.create(cfg).run(sim)


class RegistryTest(absltest.TestCase):

  def test_names(self):
    self.assertEqual(registry.names(), [
        'fold-demo', 'walsh-bm', 'skew-bm', 'tripod', 'polar-drift', 'bessel',
        'thinning', 'fs-residual', 'slope-avg', 'time-change', 'estimate-mu',
        'mixed-mu'])
    for name in registry.names():
      self.assertTrue(registry.get(name).description)

  def test_unknown_experiment(self):
    with self.assertRaises(errors.ConfigError) as context:
      registry.get('nope')
    self.assertEqual(context.exception.field_path, 'experiment')

  def test_unknown_param(self):
    cfg = _config('walsh-bm', 10, 10, params={'colour': 'red'})
    with self.assertRaises(errors.ConfigError) as context:
      registry.create(cfg)
    self.assertEqual(context.exception.field_path, 'params.colour')

  def test_radial_experiment_rejects_angular_coefficients(self):
    cfg = _config('tripod', 40, 10,
                  coefficients={'family': 'polar_drift', 'rates': 0.5})
    with self.assertRaises(errors.ConfigError) as context:
      _run(cfg)
    self.assertEqual(context.exception.field_path, 'coefficients.family')


class BasicExperimentsTest(absltest.TestCase):

  def test_fold_demo(self):
    cfg = _config('fold-demo', 20, 200,
                  params={'n_minimality': 5, 'minimality_steps': 20})
    report = _run(cfg)
    for name in ('fold_identity', 'nonnegative', 'regulator_nondecreasing',
                 'regulator_flat_away_from_zero', 'minimality'):
      self.assertTrue(report.tests[name].passed, name)
    self.assertEqual(report.statistics['identity_failures'], 0)

  def test_fold_demo_linear_driver(self):
    cfg = _config('fold-demo', 2, 50,
                  coefficients={'family': 'linear', 'rate': -1.0},
                  output={'dump_paths': 1},
                  params={'n_minimality': 2, 'minimality_steps': 10})
    report = _run(cfg)
    frame = report.frames['paths']
    onp.testing.assert_allclose(frame['Lambda'], frame['t'], atol=1e-12)
    self.assertTrue(report.tests['minimality'].passed)

  def test_walsh_bm(self):
    cfg = _config('walsh-bm', 40, 400, epsilons=[0.2],
                  output={'dump_paths': 2})
    report = _run(cfg)
    for name in ('radial_mean', 'localtime_tanaka', 'localtime_downcrossing',
                 'localtime_occupation', 'localtime_agreement',
                 'angular_chi_square', 'radius_angle_independence'):
      self.assertIn(name, report.tests)
    self.assertTrue(report.tests['ray_constancy'].passed)
    self.assertTrue(report.tests['tree_steps_bounded'].passed)
    self.assertAlmostEqual(report.statistics['radial_mean_expected'],
                           math.sqrt(2.0 / math.pi))
    frame = report.frames['paths']
    self.assertEqual(set(frame['path_id']), {0, 1})
    self.assertLen(frame, 2 * 401)

  def test_walsh_bm_needs_brownian_coefficients(self):
    cfg = _config('walsh-bm', 10, 10,
                  coefficients={'family': 'constant_drift', 'drift': -1.0,
                                'sigma': 1.0})
    with self.assertRaises(errors.ConfigError):
      _run(cfg)

  def test_skew_bm(self):
    report = _run(_config('skew-bm', 200, 200))
    self.assertIn('positive_probability', report.tests)
    self.assertIn('harrison_shepp', report.tests)
    self.assertAlmostEqual(report.statistics['kappa'], 0.4 / 0.7)
    self.assertAlmostEqual(report.statistics['positive_expected'], 0.7)

  def test_skew_bm_off_axis_skips_harrison_shepp(self):
    cfg = _config('skew-bm', 50, 50,
                  measure={'atoms': [[0.0, 0.5], [2.0, 0.5]]})
    report = _run(cfg)
    self.assertNotIn('harrison_shepp', report.tests)
    self.assertAlmostEqual(report.statistics['positive_expected'], 0.5)

  def test_thinning(self):
    report = _run(_config('thinning', 30, 400, epsilons=[0.1]))
    self.assertTrue(report.tests['additivity'].passed)
    self.assertEqual(report.statistics['additivity_mismatches'], 0)
    self.assertAlmostEqual(report.statistics['mass'], 0.7)
    self.assertAlmostEqual(report.statistics['alpha1_plus'], 0.7)
    self.assertIn('thinning_ratio', report.tests)
    self.assertIn('component_localtime', report.tests)

  def test_thinning_component_occupation(self):
    cfg = _config('thinning', 200, 4000, epsilons=[0.05])
    report = _run(cfg, chunk_size=50)
    result = report.tests['component_localtime']
    self.assertEqual(result.details['method'], 'occupation')
    self.assertTrue(result.passed, report.statistics['component_ratio'])
    self.assertBetween(report.statistics['component_ratio'], 0.63, 0.77)

  def test_thinning_component_tanaka(self):
    cfg = _config('thinning', 200, 2500, epsilons=[0.1],
                  params={'component_method': 'tanaka'})
    report = _run(cfg, chunk_size=50)
    self.assertEqual(report.tests['component_localtime'].details['method'],
                     'tanaka')
    self.assertTrue(report.tests['component_localtime'].passed)

  def test_thinning_rejects_bad_angle_set(self):
    cfg = _config('thinning', 5, 10, params={'angle_set': [[1.0, 0.5]]})
    with self.assertRaises(errors.ConfigError) as context:
      _run(cfg)
    self.assertEqual(context.exception.field_path, 'params.angle_set')


class MartingaleExperimentsTest(absltest.TestCase):

  def test_tripod(self):
    report = _run(_config('tripod', 40, 100))
    self.assertIn('x1_martingale', report.tests)
    self.assertIn('x2_martingale', report.tests)
    onp.testing.assert_allclose(report.statistics['gamma'], [0.0, 0.0],
                                atol=1e-9)

  def test_fs_residual(self):
    cfg = _config('fs-residual', 8, 10, params={'n_steps': [40, 20, 40]})
    report = _run(cfg, chunk_size=4)
    frame = report.frames['residuals']
    names = set(frame['g_name'])
    self.assertIn('g3', names)
    self.assertLen(frame, 2 * len(names))
    self.assertEqual(sorted(set(frame['dt'])), [1.0 / 40, 1.0 / 20])
    for name in names:
      self.assertIn(f'decreasing_{name}', report.tests)
      self.assertIn(f'rms_{name}', report.tests)
    self.assertTrue(onp.all(frame['rms_residual'] >= 0))

  def test_fs_residual_checks_the_finest_level(self):
    cfg = _config('fs-residual', 8, 10, params={'n_steps': [20, 40]})
    report = _run(cfg, chunk_size=4)
    frame = report.frames['residuals']
    finest = frame[(frame['g_name'] == 'g1') & (frame['dt'] == 1.0 / 40)]
    details = report.tests['rms_g1'].details
    self.assertEqual(details['tolerance'], 0.15)
    self.assertAlmostEqual(details['rms'], finest['rms_residual'].iloc[0])
    self.assertEqual(report.tests['rms_g1'].passed, details['rms'] < 0.15)

  def test_fs_residual_levels_are_checked(self):
    cfg = _config('fs-residual', 8, 10, params={'n_steps': [0, 10]})
    with self.assertRaises(errors.ConfigError) as context:
      _run(cfg)
    self.assertEqual(context.exception.field_path, 'params.n_steps')

  def test_slope_average(self):
    report = _run(_config('slope-avg', 40, 100))
    for name in ('indicator', 'cos', 'cos2'):
      self.assertIn(f'ztest_{name}', report.tests)
      self.assertGreaterEqual(report.statistics[f'{name}_sup_error']['max'],
                              0.0)

  def test_slope_average_unknown_function(self):
    cfg = _config('slope-avg', 40, 10, params={'phis': ['tan']})
    with self.assertRaises(errors.ConfigError) as context:
      _run(cfg)
    self.assertEqual(context.exception.field_path, 'params.phis')


class AngularExperimentsTest(absltest.TestCase):

  def test_polar_drift(self):
    cfg = _config('polar-drift', 50, 200, t_end=2.0, params={'n_bins': 5})
    report = _run(cfg)
    self.assertEqual(report.statistics['method'], 'radial')
    self.assertAlmostEqual(report.statistics['radial_mean_expected'], 1.0)
    for name in ('radial_mean', 'radial_chi_square', 'angular_chi_square'):
      self.assertIn(name, report.tests)

  def test_polar_drift_angular_rates_use_time_change(self):
    cfg = _config('polar-drift', 20, 100, t_end=1.0,
                  coefficients={'family': 'polar_drift',
                                'rates': [[0.0, math.pi, 0.3],
                                          [math.pi, 2.0 * math.pi, 0.7]]},
                  params={'n_bins': 5})
    report = _run(cfg, chunk_size=10)
    self.assertEqual(report.statistics['method'], 'time_change')
    for name in ('radial_mean', 'radial_chi_square', 'angular_chi_square'):
      self.assertIn(name, report.tests)

  def test_polar_drift_radial_method_needs_constant_rate(self):
    cfg = _config('polar-drift', 10, 10,
                  coefficients={'family': 'polar_drift',
                                'rates': [[0.0, math.pi, 0.3],
                                          [math.pi, 2.0 * math.pi, 0.7]]},
                  params={'method': 'radial'})
    with self.assertRaises(errors.ConfigError) as context:
      _run(cfg)
    self.assertEqual(context.exception.field_path, 'params.method')

  def test_polar_drift_is_deterministic(self):
    cfg = _config('polar-drift', 24, 100, t_end=2.0, params={'n_bins': 5})
    first = _run(cfg, chunk_size=5)
    second = _run(cfg, chunk_size=8, workers=3)
    self.assertEqual(first.statistics, second.statistics)

  def test_bessel(self):
    cfg = _config('bessel', 10, 500, t_end=0.1, epsilons=[0.1, 0.05],
                  output={'dump_paths': 1})
    report = _run(cfg)
    self.assertIn('monotone_decreasing', report.tests)
    self.assertIn('slower_decay_near_one', report.tests)
    self.assertEqual(list(report.frames['sweep']['epsilon']), [0.1, 0.05])
    self.assertEqual(list(report.frames['comparison_sweep']['epsilon']),
                     [0.1, 0.05])
    self.assertEqual(report.statistics['comparison']['delta'], 1.05)
    self.assertIn('paths', report.frames)

  def test_time_change(self):
    cfg = _config('time-change', 30, 100, t_end=0.5,
                  params={'clock_paths': 5})
    report = _run(cfg)
    self.assertIn('ks_direct', report.tests)
    for name in ('p_at_zero', 'inverse', 'p_prime_at_zero',
                 'q_prime_at_zero'):
      self.assertIn(f'scale_{name}', report.tests)
    self.assertTrue(report.tests['clock_consistency'].passed)
    self.assertGreater(report.statistics['inflation'], 0.0)

  def test_time_change_needs_angular_coefficients(self):
    cfg = _config('time-change', 30, 10,
                  coefficients={'family': 'brownian', 'sigma': 1.0})
    with self.assertRaises(errors.ConfigError) as context:
      _run(cfg)
    self.assertEqual(context.exception.field_path, 'coefficients.family')


class RecoveryExperimentsTest(absltest.TestCase):

  def test_estimate_mu(self):
    cfg = _config('estimate-mu', 40, 200, epsilons=[0.2],
                  params={'min_excursions': 10})
    report = _run(cfg)
    self.assertTrue(report.tests['enough_excursions'].passed)
    self.assertIn('total_variation', report.tests)
    self.assertIn('first_atom', report.tests)
    atoms = [theta for theta, _ in measures.SpinningMeasure.from_dict(
        {'atoms': [[0.5, 0.5], [2.5, 0.3], [4.5, 0.2]]}).atoms]
    for angle in report.statistics['estimate']['angles']:
      self.assertLess(min(abs(angle - a) for a in atoms), 1e-9)

  def test_mixed_mu(self):
    cfg = _config('mixed-mu', 6, 600, t_end=3.0, epsilons=[0.1],
                  params={'switch_point': [0.3, 0.0]})
    report = _run(cfg, chunk_size=3)
    self.assertTrue(report.tests['ray_constancy'].passed)
    self.assertTrue(report.tests['post_switch_support'].passed)
    self.assertIn('window_gap', report.tests)
    frame = report.frames['switch_times']
    self.assertLen(frame, 6)

  def test_estimate_mu_recovers_the_measure(self):
    cfg = _config('estimate-mu', 400, 1000, epsilons=[0.1],
                  params={'min_excursions': 1000})
    report = _run(cfg, chunk_size=100)
    self.assertTrue(report.tests['enough_excursions'].passed)
    self.assertTrue(report.tests['total_variation'].passed)
    self.assertLess(report.statistics['total_variation'], 0.05)

  def test_mixed_mu_separates_the_windows(self):
    cfg = _config('mixed-mu', 30, 5000, t_end=10.0, epsilons=[0.1],
                  params={'switch_point': [1.0, 0.0]})
    report = _run(cfg, chunk_size=10)
    self.assertLess(report.statistics['missed'], 30)
    self.assertGreater(report.statistics['window_gap'], 0.3)
    for name in ('window_gap', 'pre_closer_to_first', 'post_closer_to_second',
                 'post_switch_support', 'ray_constancy'):
      self.assertTrue(report.tests[name].passed, name)

  def test_mixed_mu_switch_point_off_origin(self):
    cfg = _config('mixed-mu', 2, 10, params={'switch_point': [0.0, 0.0]})
    with self.assertRaises(errors.ConfigError) as context:
      _run(cfg)
    self.assertEqual(context.exception.field_path, 'params.switch_point')

  def test_mixed_mu_unreachable_switch(self):
    cfg = _config('mixed-mu', 2, 20, t_end=0.01,
                  params={'switch_point': [50.0, 0.0]})
    with self.assertRaises(errors.InsufficientData):
      _run(cfg)


if __name__ == '__main__':
  absltest.main()
