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
"""Tests for spinning measures."""

from absl.testing import absltest
from absl.testing import parameterized
import jax
import numpy as onp

from walsh_sim import errors
from walsh_sim import measures


class SpinningMeasureTest(parameterized.TestCase):

  def setUp(self):
    super().setUp()
    self.rng = jax.random.PRNGKey(0)
    self.two_rays = measures.SpinningMeasure.from_atoms(
        [(0.0, 0.5), (onp.pi, 0.5)])

  def test_invalid_measures(self):
    with self.assertRaises(errors.DomainError):
      measures.SpinningMeasure(atoms=((0.0, 0.5),))
    with self.assertRaises(errors.DomainError):
      measures.SpinningMeasure(atoms=((0.0, 0.5), (0.0, 0.5)))
    with self.assertRaises(errors.DomainError):
      measures.SpinningMeasure(atoms=((7.0, 1.0),))
    with self.assertRaises(errors.DomainError):
      measures.AngularDensity('table', (1.0, -1.0))

  def test_alpha_gamma_dirac(self):
    moments = measures.alpha_gamma(measures.SpinningMeasure.dirac(0.0))
    onp.testing.assert_allclose(moments.alpha_plus, (1.0, 0.0), atol=1e-15)
    onp.testing.assert_allclose(moments.alpha_minus, (0.0, 0.0), atol=1e-15)
    onp.testing.assert_allclose(moments.gamma, (1.0, 0.0), atol=1e-15)

  def test_alpha_gamma_symmetric(self):
    moments = measures.alpha_gamma(self.two_rays)
    onp.testing.assert_allclose(moments.gamma, (0.0, 0.0), atol=1e-15)
    self.assertAlmostEqual(moments.alpha_plus[0], 0.5)
    self.assertAlmostEqual(moments.alpha_minus[0], 0.5)
    self.assertAlmostEqual(moments.alpha_plus[1], 0.0)

  def test_alpha_gamma_uniform(self):
    moments = measures.alpha_gamma(measures.SpinningMeasure.uniform())
    onp.testing.assert_allclose(moments.gamma, (0.0, 0.0), atol=1e-9)
    self.assertAlmostEqual(moments.alpha_plus[0], 1.0 / onp.pi, places=9)
    self.assertAlmostEqual(moments.alpha_minus[1], 1.0 / onp.pi, places=9)

  def test_skew_coefficient(self):
    mu = measures.SpinningMeasure.from_atoms([(0.0, 0.7), (onp.pi, 0.3)])
    moments = measures.alpha_gamma(mu)
    self.assertAlmostEqual(moments.skew_coefficient(0), 0.4 / 0.7)
    with self.assertRaises(errors.DomainError):
      moments.skew_coefficient(1)

  @parameterized.parameters(
      ((0.6, 0.0), ((0.0, 0.8), (onp.pi, 0.2))),
      ((0.0, 0.0), ((0.0, 0.5), (onp.pi, 0.5))),
      ((0.6, 0.8), ((onp.arctan2(0.8, 0.6), 1.0),)),
  )
  def test_measure_from_gamma(self, gamma, expected):
    mu = measures.measure_from_gamma(gamma)
    self.assertLen(mu.atoms, len(expected))
    for (theta, weight), (exp_theta, exp_weight) in zip(mu.atoms, expected):
      self.assertAlmostEqual(theta, exp_theta, places=12)
      self.assertAlmostEqual(weight, exp_weight, places=12)

  def test_gamma_roundtrip(self):
    gen = onp.random.default_rng(0)
    radius = onp.sqrt(gen.uniform(size=1000))
    radius[:20] = 1.0
    radius[20:25] = 0.0
    angle = gen.uniform(0, 2 * onp.pi, size=1000)
    for r, t in zip(radius, angle):
      gamma = (r * onp.cos(t), r * onp.sin(t))
      mu = measures.measure_from_gamma(gamma)
      onp.testing.assert_allclose(
          measures.alpha_gamma(mu).gamma, gamma, rtol=0, atol=1e-12)

  def test_measure_from_gamma_rejects_outside_disc(self):
    with self.assertRaises(errors.DomainError):
      measures.measure_from_gamma((0.8, 0.8))

  def test_nu_mass(self):
    for mu in (self.two_rays, measures.SpinningMeasure.uniform()):
      self.assertAlmostEqual(measures.nu_mass(mu, (0, 2 * onp.pi)), 1.0)
    self.assertAlmostEqual(
        measures.nu_mass(self.two_rays, (onp.pi / 2, 3 * onp.pi / 2)), 0.5)
    self.assertAlmostEqual(
        measures.nu_mass(measures.SpinningMeasure.uniform(), (0, onp.pi)),
        0.5, places=10)
    with self.assertRaises(errors.ArgumentError):
      measures.nu_mass(self.two_rays, (2.0, 1.0))
    with self.assertRaises(errors.ArgumentError):
      measures.nu_mass(self.two_rays, (-1.0, 1.0))

  def test_table_density(self):
    mu = measures.SpinningMeasure(
        density=measures.AngularDensity('table', (1.0, 3.0)))
    self.assertAlmostEqual(
        measures.nu_mass(mu, (onp.pi / 2, 3 * onp.pi / 2)), 0.625, places=9)
    angles = measures.sample_angles(mu, self.rng, 20000)
    inside = (angles >= onp.pi / 2) & (angles < 3 * onp.pi / 2)
    self.assertAlmostEqual(inside.mean(), 0.625, delta=0.02)

  def test_sample_dirac(self):
    theta0 = 1.234
    mu = measures.SpinningMeasure.dirac(theta0)
    self.assertEqual(measures.sample_angle(mu, self.rng), theta0)
    onp.testing.assert_array_equal(
        measures.sample_angles(mu, self.rng, 10), onp.full(10, theta0))

  def test_sample_two_atoms(self):
    angles = measures.sample_angles(self.two_rays, self.rng, 100000)
    self.assertTrue(onp.all((angles == 0.0) | (angles == onp.pi)))
    self.assertBetween(onp.mean(angles == 0.0), 0.49, 0.51)

  def test_sample_is_reproducible(self):
    mu = measures.SpinningMeasure.uniform()
    first = measures.sample_angles(mu, self.rng, 10)
    onp.testing.assert_array_equal(
        first, measures.sample_angles(mu, self.rng, 10))
    onp.testing.assert_array_equal(
        first[3:], measures.sample_angles(mu, self.rng, 7, start=3))
    self.assertEqual(first[4], measures.sample_angle(mu, self.rng, 4))

  def test_sample_uniform_bins(self):
    mu = measures.SpinningMeasure.uniform()
    angles = measures.sample_angles(mu, self.rng, 20000)
    self.assertTrue(onp.all((angles >= 0) & (angles < 2 * onp.pi)))
    counts, _ = onp.histogram(angles, onp.linspace(0, 2 * onp.pi, 9))
    onp.testing.assert_allclose(counts / angles.size, 1 / 8, atol=0.015)

  def test_sample_mixed(self):
    mu = measures.SpinningMeasure(
        atoms=((0.0, 0.5),),
        density=measures.AngularDensity('uniform', mass=0.5))
    angles = measures.sample_angles(mu, self.rng, 20000)
    self.assertAlmostEqual(onp.mean(angles == 0.0), 0.5, delta=0.02)
    upper = (angles >= onp.pi)
    self.assertAlmostEqual(upper.mean(), 0.25, delta=0.02)

  def test_dict_encoding(self):
    mu = measures.SpinningMeasure.from_dict(
        {'atoms': [[0.0, 0.25]], 'density': {'kind': 'uniform'}})
    self.assertAlmostEqual(mu.density_mass, 0.75)
    self.assertEqual(measures.SpinningMeasure.from_dict(mu.to_dict()), mu)

    mu = measures.SpinningMeasure.from_dict({'gamma': [0.6, 0.0]})
    self.assertLen(mu.atoms, 2)
    with self.assertRaises(errors.ArgumentError):
      measures.SpinningMeasure.from_dict({'atom': []})


class AngleSetTest(absltest.TestCase):

  def test_contains(self):
    angle_set = measures.AngleSet.coerce([[0.0, 1.0], [2.0, 3.0]])
    onp.testing.assert_array_equal(
        angle_set.contains(onp.array([0.0, 0.5, 1.0, 2.5, onp.nan, 4.0])),
        [True, True, False, True, False, False])

  def test_complement(self):
    angle_set = measures.AngleSet.coerce((1.0, 2.0))
    self.assertEqual(angle_set.complement().intervals,
                     ((0.0, 1.0), (2.0, 2 * onp.pi)))
    whole = measures.AngleSet.coerce((0.0, 2 * onp.pi))
    self.assertEqual(whole.complement().intervals, ())

  def test_mass(self):
    mu = measures.SpinningMeasure.from_atoms([(0.0, 0.7), (onp.pi, 0.3)])
    angle_set = measures.AngleSet.coerce((0.0, 0.1))
    self.assertAlmostEqual(angle_set.mass(mu), 0.7)
    self.assertAlmostEqual(angle_set.complement().mass(mu), 0.3)

  def test_invalid(self):
    with self.assertRaises(errors.ArgumentError):
      measures.AngleSet.coerce([[0.0, 2.0], [1.0, 3.0]])
    with self.assertRaises(errors.ArgumentError):
      measures.AngleSet.coerce([1.0, 2.0, 3.0])


class TotalVariationTest(absltest.TestCase):

  def test_empirical_vs_atoms(self):
    mu = measures.SpinningMeasure.from_atoms([(0.0, 0.7), (onp.pi, 0.3)])
    empirical = measures.EmpiricalMeasure.from_samples(
        [0.0] * 6 + [onp.pi] * 4)
    self.assertEqual(empirical.count, 10)
    self.assertAlmostEqual(empirical.frequency_of(0.0), 0.6)
    self.assertAlmostEqual(measures.total_variation(empirical, mu), 0.1)

  def test_disjoint_supports(self):
    first = measures.SpinningMeasure.dirac(0.0)
    second = measures.SpinningMeasure.dirac(1.0)
    self.assertAlmostEqual(measures.total_variation(first, second), 1.0)

  def test_binned_against_density(self):
    uniform = measures.SpinningMeasure.uniform()
    self.assertAlmostEqual(
        measures.total_variation(uniform, uniform), 0.0, places=9)
    dirac = measures.SpinningMeasure.dirac(0.0)
    self.assertAlmostEqual(
        measures.total_variation(uniform, dirac, bins=4), 0.75, places=9)


if __name__ == '__main__':
  absltest.main()
