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
"""Tests for the calculus module."""

from absl.testing import absltest
from absl.testing import parameterized
import jax
import numpy as onp

from walsh_sim import calculus
from walsh_sim import drivers
from walsh_sim import errors
from walsh_sim import localtime
from walsh_sim import measures
from walsh_sim import unfolding
from walsh_sim import utils

BROWNIAN = drivers.RadialCoefficients(lambda r: 0.0 * r, lambda r: 1.0 + 0 * r)
TWO_RAYS = measures.SpinningMeasure.from_atoms([(0.0, 0.7), (onp.pi, 0.3)])
SQUARE = calculus.ClassDFunction(
    'square', lambda r, t: r**2, lambda r, t: 2 * r,
    lambda r, t: 2.0 + 0 * r)


def _walsh_bm(rng, mu, num_paths, n_steps):
  keys = utils.split_keys(utils.path_keys(rng, 0, num_paths))
  grid = drivers.TimeGrid(1.0, n_steps)
  s, lam, v = drivers.simulate_reflected_diffusion(BROWNIAN, 0.0, grid,
                                                   keys[:, 0])
  return unfolding.unfold(
      s, mu, None, keys[:, 1], localtime=lam, driver=v,
      driver_variation=drivers.driver_quadratic_variation(s, BROWNIAN))


class GeneratorTest(parameterized.TestCase):

  def test_square(self):
    value = calculus.generator_apply(SQUARE, BROWNIAN, (0.7, 1.0))
    self.assertAlmostEqual(float(value), 1.0)

  def test_radius(self):
    g3 = calculus.catalog(TWO_RAYS)['g3']
    self.assertAlmostEqual(
        float(calculus.generator_apply(g3, BROWNIAN, (2.0, 3.0))), 0.0)

  def test_slope_average(self):
    drift = drivers.RadialCoefficients(lambda r: -0.5 + 0 * r,
                                       lambda r: 1.0 + 0 * r)
    g = calculus.catalog(TWO_RAYS)['g_phi']
    # phi is the indicator of [0, pi), which has nu-average 0.7.
    self.assertAlmostEqual(
        float(calculus.generator_apply(g, drift, (1.0, 0.0))), -0.5 * 0.3)
    self.assertAlmostEqual(
        float(calculus.generator_apply(g, drift, (1.0, onp.pi))), 0.5 * 0.7)

  def test_origin(self):
    with self.assertRaises(errors.DomainError):
      calculus.generator_apply(SQUARE, BROWNIAN, (0.0, 1.0))

  def test_linearity(self):
    gen = onp.random.default_rng(0)
    functions = list(calculus.catalog(TWO_RAYS).values())
    drift = drivers.RadialCoefficients(lambda r: onp.sin(r),
                                       lambda r: 1.0 + r**2)
    r = gen.uniform(0.01, 3, size=50)
    theta = gen.uniform(0, 2 * onp.pi, size=50)
    for _ in range(5):
      weights = gen.normal(size=len(functions))
      combination = calculus.linear_combination(weights, functions)
      expected = sum(w * calculus.generator_apply(f, drift, (r, theta))
                     for w, f in zip(weights, functions))
      onp.testing.assert_allclose(
          calculus.generator_apply(combination, drift, (r, theta)), expected,
          rtol=0, atol=1e-10)


class CatalogTest(parameterized.TestCase):

  @parameterized.named_parameters(
      ('two_rays', TWO_RAYS),
      ('uniform', measures.SpinningMeasure.uniform()),
      ('tripod', measures.SpinningMeasure.from_atoms(
          [(0.0, 1 / 3), (2 * onp.pi / 3, 1 / 3), (4 * onp.pi / 3, 1 / 3)])),
  )
  def test_validate(self, mu):
    functions = calculus.catalog(mu, angle_set=(0.0, 1.0))
    self.assertLen(functions, 12)
    for g in functions.values():
      g.validate(mu)

  def test_slope_integrals(self):
    functions = calculus.catalog(TWO_RAYS, angle_set=(0.0, 1.0))
    self.assertAlmostEqual(functions['g3'].slope_integral(TWO_RAYS), 1.0)
    self.assertAlmostEqual(functions['g6'].slope_integral(TWO_RAYS), 0.7)
    self.assertAlmostEqual(functions['g5'].slope_integral(TWO_RAYS), 0.0)
    self.assertAlmostEqual(functions['g1'].slope_integral(TWO_RAYS), 0.0)

  def test_blend(self):
    psi, psi1, psi2 = calculus.blend(0.5)
    self.assertAlmostEqual(float(psi(0.5, 0)), 0.5)
    self.assertAlmostEqual(float(psi1(0.5 - 1e-12, 0)), 1.0, places=9)
    self.assertAlmostEqual(float(psi2(0.5 - 1e-12, 0)), 0.0, places=9)
    self.assertEqual(float(psi1(0.0, 0)), 0.0)

  def test_invalid_function(self):
    wrong = calculus.ClassDFunction('wrong', lambda r, t: r**2,
                                    lambda r, t: r, lambda r, t: 1.0 + 0 * r)
    with self.assertRaises(errors.DomainError):
      wrong.validate()
    angular = calculus.ClassDFunction('angular', lambda r, t: onp.cos(t) + r,
                                      lambda r, t: 1.0 + 0 * r,
                                      lambda r, t: 0.0 * r)
    with self.assertRaises(errors.DomainError):
      angular.validate()

  def test_wrong_class(self):
    g = calculus.ClassDFunction('radius', lambda r, t: r,
                                lambda r, t: 1.0 + 0 * r,
                                lambda r, t: 0.0 * r, 'D_mu')
    g.validate()
    with self.assertRaises(errors.DomainError):
      g.validate(TWO_RAYS)


class FreidlinSheuTest(absltest.TestCase):

  def setUp(self):
    super().setUp()
    self.rng = jax.random.PRNGKey(0)

  def test_flat_slope(self):
    w = _walsh_bm(self.rng, TWO_RAYS, 20, 500)
    g = calculus.catalog(TWO_RAYS)['g11_circ']
    decomposition = calculus.fs_decompose(w, None, None, g, TWO_RAYS)
    onp.testing.assert_array_equal(decomposition.localtime_term, 0.0)
    onp.testing.assert_array_equal(decomposition.residual[:, 0], 0.0)

  def test_radius_is_tanaka(self):
    w = _walsh_bm(self.rng, TWO_RAYS, 20, 500)
    g = calculus.catalog(TWO_RAYS)['g3']
    decomposition = calculus.fs_decompose(w, None, None, g, TWO_RAYS)
    tanaka = localtime.lt_tanaka(w.radial_path(), w.driver_path())
    onp.testing.assert_allclose(decomposition.residual,
                                tanaka.raw - tanaka.values.values, atol=1e-12)
    self.assertAlmostEqual(decomposition.slope_integral, 1.0)

  def test_residual_shrinks(self):
    g = calculus.catalog(TWO_RAYS)['g1']
    rms = []
    for n_steps in (100, 1000, 10000):
      w = _walsh_bm(self.rng, TWO_RAYS, 200, n_steps)
      rms.append(calculus.fs_decompose(w, None, None, g, TWO_RAYS).rms)
    self.assertLess(rms[1], rms[0])
    self.assertLess(rms[2], rms[1])

  def test_report(self):
    w = _walsh_bm(self.rng, TWO_RAYS, 40, 100)
    g = calculus.catalog(TWO_RAYS)['g2']
    decomposition = calculus.fs_decompose(w, None, None, g, TWO_RAYS)
    report = calculus.residual_report(decomposition, 'g2', w.grid)
    self.assertEqual(report['n_paths'], 40)
    self.assertEqual(report['dt'], 0.01)
    self.assertIsNone(report['ztest'])

  def test_mismatched_driver(self):
    w = _walsh_bm(self.rng, TWO_RAYS, 4, 100)
    other = drivers.linear_driver(1.0, 0.0, drivers.TimeGrid(1.0, 50))
    with self.assertRaises(errors.ArgumentError):
      calculus.fs_decompose(w, other, None, calculus.catalog(TWO_RAYS)['g1'],
                            TWO_RAYS)


class SlopeAverageTest(absltest.TestCase):

  def setUp(self):
    super().setUp()
    self.rng = jax.random.PRNGKey(0)

  def test_constant_phi(self):
    w = _walsh_bm(self.rng, TWO_RAYS, 40, 200)
    result = calculus.slope_avg_process(w, lambda t: 2.0 + 0 * t, TWO_RAYS)
    onp.testing.assert_allclose(result.values, 0.0, atol=1e-12)

  def test_indicator_values(self):
    g = calculus.slope_avg_function(
        calculus.indicator_of(measures.AngleSet.coerce((0.0, 1.0))),
        TWO_RAYS, (1.0,))
    self.assertAlmostEqual(float(g.first(1.0, 0.0)), 0.3)
    self.assertAlmostEqual(float(g.first(1.0, onp.pi)), -0.7)

  def test_martingale(self):
    mu = measures.SpinningMeasure.uniform()
    w = _walsh_bm(self.rng, mu, 1000, 500)
    phi = calculus.indicator_of(measures.AngleSet.coerce((0.0, onp.pi)))
    result = calculus.slope_avg_process(w, phi, mu, breakpoints=(onp.pi,))
    self.assertLess(abs(result.ztest.z), 3.0)
    self.assertEqual(result.ztest.n, 1000)
    self.assertEqual(result.error.shape, (1000,))

  def test_harrison_shepp(self):
    w = _walsh_bm(self.rng, TWO_RAYS, 500, 2500)
    residual = calculus.harrison_shepp_residual(w, TWO_RAYS)
    onp.testing.assert_array_equal(residual[:, 0], 0.0)
    self.assertLess(abs(onp.mean(residual[:, -1])), 0.05)


class ZTestTest(absltest.TestCase):

  def test_zeros(self):
    result = calculus.martingale_ztest(onp.zeros(100))
    self.assertEqual(result.z, 0.0)
    self.assertTrue(result.degenerate)

  def test_normal(self):
    gen = onp.random.default_rng(0)
    self.assertLess(abs(calculus.martingale_ztest(
        gen.normal(size=10000)).z), 3.0)
    result = calculus.martingale_ztest(gen.normal(0.1, 1.0, size=10000))
    self.assertGreater(abs(result.z), 3.0)
    self.assertLess(result.p_value, 0.01)

  def test_small_sample(self):
    with self.assertRaises(errors.ArgumentError):
      calculus.martingale_ztest(onp.ones(29))


if __name__ == '__main__':
  absltest.main()
