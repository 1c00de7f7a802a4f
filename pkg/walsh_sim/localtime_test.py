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
"""Tests for the local time estimators."""

from absl.testing import absltest
import jax
import numpy as onp

from walsh_sim import drivers
from walsh_sim import errors
from walsh_sim import localtime
from walsh_sim import measures
from walsh_sim import unfolding
from walsh_sim import utils

BROWNIAN = drivers.RadialCoefficients(lambda r: 0.0 * r, lambda r: 1.0 + 0 * r)


def _path(values, kind='folded'):
  values = onp.asarray(values, dtype=onp.float64)
  return drivers.SamplePath(drivers.TimeGrid(1.0, values.shape[-1] - 1),
                            values, kind)


def _walsh_bm(rng, mu, num_paths, n_steps):
  keys = utils.split_keys(utils.path_keys(rng, 0, num_paths))
  result = drivers.simulate_reflected_diffusion(
      BROWNIAN, 0.0, drivers.TimeGrid(1.0, n_steps), keys[:, 0])
  return unfolding.unfold(result.folded, mu, None, keys[:, 1],
                          localtime=result.localtime, driver=result.driver)


class DowncrossingTest(absltest.TestCase):

  def test_sawtooth(self):
    eps = 0.1
    estimate = localtime.lt_downcrossing(_path([0, 2 * eps, 0] * 3), eps)
    self.assertEqual(estimate.counts[-1], 3)
    self.assertAlmostEqual(estimate.terminal, 3 * eps)
    onp.testing.assert_array_equal(estimate.counts,
                                   [0, 0, 1, 1, 1, 2, 2, 2, 3])

  def test_monotone(self):
    estimate = localtime.lt_downcrossing(_path(onp.linspace(0, 1, 11)), 0.1)
    self.assertEqual(estimate.terminal, 0.0)

  def test_start_away(self):
    # The excursion in progress at time 0 is not a completed trip.
    estimate = localtime.lt_downcrossing(_path([0.5, 0.0, 0.5, 0.0]), 0.1)
    self.assertEqual(estimate.counts[-1], 1)

  def test_first_exits(self):
    values = onp.array([0.0, 0.5, 1.2, 0.3, 1.5, 0.0, 2.0, 0.0, 0.2])
    onp.testing.assert_array_equal(
        onp.flatnonzero(localtime.first_exits(values, 1.0)), [2, 6])
    self.assertFalse(onp.any(localtime.first_exits([2.0, 1.5, 0.0], 1.0)))

  def test_invalid_epsilon(self):
    with self.assertRaises(errors.ArgumentError):
      localtime.lt_downcrossing(_path([0.0, 1.0]), 0.0)
    with self.assertRaises(errors.ArgumentError):
      localtime.lt_occupation(_path([0.0, 1.0]), -1.0, _path([0.0, 1.0]))


class TanakaTest(absltest.TestCase):

  def test_pushed_down(self):
    grid = drivers.TimeGrid(1.0, 16)
    u = drivers.linear_driver(-1.0, 0.0, grid)
    s, lam = drivers.skorokhod_fold(u)
    onp.testing.assert_array_equal(localtime.lt_tanaka(s, u).values.values,
                                   onp.zeros(17))
    onp.testing.assert_array_equal(localtime.lt_regulator(lam).terminal, 1.0)

  def test_pushed_up(self):
    grid = drivers.TimeGrid(1.0, 16)
    u = drivers.linear_driver(1.0, 0.0, grid)
    s, _ = drivers.skorokhod_fold(u)
    estimate = localtime.lt_tanaka(s, u)
    # Only the first step leaves the origin.
    self.assertAlmostEqual(estimate.terminal, grid.dt)
    self.assertTrue(onp.all(onp.diff(estimate.values.values) >= 0))

  def test_mismatch(self):
    with self.assertRaises(errors.ArgumentError):
      localtime.lt_tanaka(_path([0.0, 1.0]), _path([0.0, 1.0, 2.0]))


class OccupationTest(absltest.TestCase):

  def test_away_from_band(self):
    s = _path([1.0, 2.0, 1.5])
    qv = drivers.realized_quadratic_variation(s)
    self.assertEqual(localtime.lt_occupation(s, 0.5, qv).terminal, 0.0)

  def test_zero_path(self):
    s = _path(onp.zeros(5))
    qv = drivers.realized_quadratic_variation(s)
    self.assertEqual(localtime.lt_occupation(s, 0.5, qv).terminal, 0.0)

  def test_band(self):
    s = _path([0.0, 0.1, 0.2, 1.0])
    qv = _path([0.0, 1.0, 2.0, 3.0], 'variation')
    estimate = localtime.lt_occupation(s, 0.5, qv)
    onp.testing.assert_allclose(estimate.values.values, [0, 1, 2, 3])

  def test_steps_from_zero_follow_their_side(self):
    s = _path([0.0, -0.3, 0.0, 0.2, 1.0])
    qv = _path([0.0, 1.0, 2.0, 3.0, 4.0], 'variation')
    estimate = localtime.lt_occupation(s, 0.5, qv)
    onp.testing.assert_allclose(estimate.values.values, [0, 0, 0, 1, 2])


class EstimatorAgreementTest(absltest.TestCase):

  def setUp(self):
    super().setUp()
    self.rng = jax.random.PRNGKey(0)

  def test_reflected_brownian(self):
    grid = drivers.TimeGrid(1.0, 2500)
    keys = utils.path_keys(self.rng, 0, 2000)
    result = drivers.simulate_reflected_diffusion(BROWNIAN, 0.0, grid, keys)
    s, lam, v = result
    eps = 0.1
    estimates = {
        'regulator': localtime.lt_regulator(lam),
        'tanaka': localtime.lt_tanaka(s, v),
        'downcrossing': localtime.lt_downcrossing(s, eps),
        'occupation': localtime.lt_occupation(
            s, eps, drivers.driver_quadratic_variation(s, BROWNIAN)),
    }
    target = onp.sqrt(2 / onp.pi)
    for name, estimate in estimates.items():
      values = estimate.values.values
      self.assertTrue(onp.all(onp.diff(values, axis=-1) >= 0), name)
      onp.testing.assert_array_equal(values[:, 0], 0.0)
      self.assertAlmostEqual(onp.mean(estimate.terminal), target, delta=0.12,
                             msg=name)
    self.assertLess(abs(onp.mean(estimates['tanaka'].terminal) -
                        onp.mean(estimates['regulator'].terminal)), 0.05)

    summary = localtime.summarize(estimates['downcrossing'])
    self.assertEqual(summary['n_paths'], 2000)
    self.assertEqual(summary['epsilon'], eps)
    self.assertEqual(summary['T'], 1.0)

  def test_downcrossing_increases_at_zeros(self):
    keys = utils.path_keys(self.rng, 0, 10)
    s = drivers.simulate_reflected_diffusion(
        BROWNIAN, 0.0, drivers.TimeGrid(1.0, 1000), keys).folded
    counts = localtime.lt_downcrossing(s, 0.05).counts
    jumps = onp.diff(counts, axis=-1) > 0
    self.assertTrue(onp.all(s.values[:, 1:][jumps] == 0.0))


class ThinningTest(absltest.TestCase):

  def setUp(self):
    super().setUp()
    self.rng = jax.random.PRNGKey(0)
    self.mu = measures.SpinningMeasure.from_atoms([(0.0, 0.7), (onp.pi, 0.3)])

  def test_whole_circle(self):
    w = _walsh_bm(self.rng, self.mu, 20, 1000)
    thinned = localtime.thinned_local_time(w, (0.0, 2 * onp.pi), 0.05)
    full = localtime.lt_downcrossing(w.radial_path(), 0.05)
    onp.testing.assert_array_equal(thinned.estimate.counts, full.counts)

  def test_null_set(self):
    w = _walsh_bm(self.rng, self.mu, 20, 1000)
    thinned = localtime.thinned_local_time(w, (1.0, 2.0), 0.05, self.mu)
    onp.testing.assert_array_equal(thinned.estimate.counts, 0)
    self.assertEqual(thinned.mass, 0.0)

  def test_ratio_and_additivity(self):
    w = _walsh_bm(self.rng, self.mu, 500, 2500)
    eps = 0.1
    around_zero = measures.AngleSet.coerce((0.0, 0.1))
    first = localtime.thinned_local_time(w, around_zero, eps, self.mu)
    second = localtime.thinned_local_time(w, around_zero.complement(), eps)
    onp.testing.assert_array_equal(
        first.estimate.counts + second.estimate.counts,
        localtime.lt_downcrossing(w.radial_path(), eps).counts)
    ratio = (onp.sum(first.estimate.terminal) /
             onp.sum(localtime.lt_downcrossing(w.radial_path(), eps).terminal))
    self.assertBetween(ratio, 0.65, 0.75)
    self.assertAlmostEqual(first.mass, 0.7)
    onp.testing.assert_allclose(
        first.expected.terminal,
        0.7 * localtime.lt_downcrossing(w.radial_path(), eps).terminal)


class ComponentTest(absltest.TestCase):

  def setUp(self):
    super().setUp()
    self.rng = jax.random.PRNGKey(0)
    self.mu = measures.SpinningMeasure.from_atoms([(0.0, 0.7), (onp.pi, 0.3)])
    self.alpha = measures.alpha_gamma(self.mu).alpha_plus[0]

  def test_occupation(self):
    w = _walsh_bm(self.rng, self.mu, 500, 10000)
    eps = 0.1
    component = localtime.component_local_time(w, 0, eps)
    radial = w.radial_path()
    total = localtime.lt_occupation(
        radial, eps, drivers.realized_quadratic_variation(radial))
    ratio = onp.mean(component.terminal) / onp.mean(total.terminal)
    self.assertAlmostEqual(ratio, self.alpha, delta=0.07)

  def test_tanaka(self):
    w = _walsh_bm(self.rng, self.mu, 500, 2500)
    component = localtime.component_local_time(w, 0, method='tanaka')
    total = localtime.lt_tanaka(w.radial_path(), w.driver_path())
    ratio = onp.mean(component.terminal) / onp.mean(total.terminal)
    self.assertAlmostEqual(ratio, self.alpha, delta=0.07)

  def test_bad_arguments(self):
    w = _walsh_bm(self.rng, self.mu, 2, 10)
    with self.assertRaises(errors.ArgumentError):
      localtime.component_local_time(w, 2, 0.1)
    with self.assertRaises(errors.ArgumentError):
      localtime.component_local_time(w, 0, None)
    with self.assertRaises(errors.ArgumentError):
      localtime.component_local_time(w, 0, 0.1, method='symmetric')


class EpsilonTest(absltest.TestCase):

  def test_recommended(self):
    self.assertAlmostEqual(localtime.recommended_epsilon(1.0, 1e-4), 0.03)
    self.assertTrue(localtime.check_epsilon(0.05, 1.0, 1e-4))
    self.assertFalse(localtime.check_epsilon(0.01, 1.0, 1e-4))

  def test_small_epsilon_only_warns(self):
    with self.assertLogs(logger='absl', level='WARNING') as logs:
      self.assertFalse(localtime.check_epsilon(0.001, 1.0, 1e-4))
    self.assertIn('undercounted', '\n'.join(logs.output))


if __name__ == '__main__':
  absltest.main()
