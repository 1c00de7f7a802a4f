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
"""Tests for excursion decomposition and unfolding."""

from absl.testing import absltest
from absl.testing import parameterized
import jax
import numpy as onp

from walsh_sim import drivers
from walsh_sim import errors
from walsh_sim import measures
from walsh_sim import metrics
from walsh_sim import unfolding
from walsh_sim import utils


def _folded(values):
  values = onp.asarray(values, dtype=onp.float64)
  grid = drivers.TimeGrid(1.0, values.shape[-1] - 1)
  return drivers.SamplePath(grid, values, 'folded')


def _reflected_bm(rng, num_paths, n_steps=1000):
  keys = utils.path_keys(rng, 0, num_paths)
  coeffs = drivers.RadialCoefficients(lambda r: 0.0 * r, lambda r: 1.0 + 0 * r)
  return drivers.simulate_reflected_diffusion(
      coeffs, 0.0, drivers.TimeGrid(1.0, n_steps), keys).folded


class ExcursionTest(absltest.TestCase):

  def test_decompose(self):
    decomposition = unfolding.excursion_decompose(_folded([0, 1, 2, 0, 3, 0]))
    onp.testing.assert_array_equal(decomposition.zero_indices, [0, 3, 5])
    self.assertEqual(decomposition.excursions, [(1, 2), (4, 4)])

  def test_positive(self):
    decomposition = unfolding.excursion_decompose(_folded([1, 2, 3]))
    self.assertEmpty(decomposition.zero_indices)
    self.assertEqual(decomposition.excursions, [(0, 2)])

  def test_all_zeros(self):
    decomposition = unfolding.excursion_decompose(_folded([0, 0, 0]))
    onp.testing.assert_array_equal(decomposition.zero_indices, [0, 1, 2])
    self.assertEqual(decomposition.num_excursions, 0)

  def test_negative(self):
    with self.assertRaises(errors.ArgumentError):
      unfolding.excursion_decompose(_folded([0, -1, 0]))

  def test_ids(self):
    ids = unfolding.excursion_ids(onp.array([[0, 1, 2, 0, 3, 0],
                                             [1, 0, 0, 2, 2, 2]]))
    onp.testing.assert_array_equal(ids, [[-1, 0, 0, -1, 1, -1],
                                         [0, -1, -1, 1, 1, 1]])


class UnfoldTest(parameterized.TestCase):

  def setUp(self):
    super().setUp()
    self.rng = jax.random.PRNGKey(0)

  def test_dirac(self):
    s = _reflected_bm(self.rng, 4, 200)
    keys = utils.path_keys(self.rng, 100, 104)
    w = unfolding.unfold(s, measures.SpinningMeasure.dirac(0.0), None, keys)
    onp.testing.assert_array_equal(w.x2, onp.zeros_like(w.x2))
    onp.testing.assert_array_equal(w.x1, s.values)
    self.assertTrue(onp.all(onp.isnan(w.angle[s.values == 0])))

  def test_origin(self):
    w = unfolding.unfold(_folded(onp.zeros(5)),
                         measures.SpinningMeasure.uniform(), None, self.rng)
    onp.testing.assert_array_equal(w.x1, onp.zeros(5))
    onp.testing.assert_array_equal(w.x2, onp.zeros(5))
    onp.testing.assert_array_equal(w.excursion_id, onp.full(5, -1))

  def test_initial_angle(self):
    s = _folded([1.0, 0.5, 0.0, 0.5, 0.0])
    with self.assertRaises(errors.ArgumentError):
      unfolding.unfold(s, measures.SpinningMeasure.uniform(), None, self.rng)
    mu = measures.SpinningMeasure.dirac(onp.pi)
    w = unfolding.unfold(s, mu, 1.0, self.rng)
    onp.testing.assert_array_equal(w.angle[:2], [1.0, 1.0])
    self.assertEqual(w.angle[3], onp.pi)

  def test_norm_and_rays(self):
    s = _reflected_bm(self.rng, 8)
    keys = utils.path_keys(self.rng, 100, 108)
    w = unfolding.unfold(s, measures.SpinningMeasure.uniform(), None, keys)
    onp.testing.assert_allclose(onp.hypot(w.x1, w.x2), w.radial, rtol=1e-14)
    report = unfolding.check_ray_constancy(w)
    self.assertEqual(report.violations, 0)
    self.assertEqual(w.path(3).radial.shape, (1001,))

  def test_reproducible(self):
    s = _reflected_bm(self.rng, 4, 200)
    keys = utils.path_keys(self.rng, 100, 104)
    mu = measures.SpinningMeasure.uniform()
    batch = unfolding.unfold(s, mu, None, keys)
    single = unfolding.unfold(s.path(1), mu, None, keys[1])
    onp.testing.assert_array_equal(batch.path(1).angle, single.angle)

  def test_two_atoms_frequency(self):
    s = _reflected_bm(self.rng, 8, 20000)
    mu = measures.SpinningMeasure.from_atoms([(0.0, 0.7), (onp.pi, 0.3)])
    keys = utils.path_keys(self.rng, 100, 108)
    w = unfolding.unfold(s, mu, None, keys)
    angles = []
    for i in range(8):
      decomposition = unfolding.excursion_decompose(s.path(i))
      starts = [start for start, _ in decomposition.excursions]
      angles.extend(w.path(i).angle[starts])
    angles = onp.array(angles)
    self.assertGreater(angles.size, 200)
    lower, upper = metrics.binomial_interval(
        int(onp.sum(angles == 0.0)), angles.size, 0.99)
    self.assertBetween(0.7, lower, upper)

  def test_frame(self):
    w = unfolding.unfold(_folded([0.0, 1.0, 0.0]),
                         measures.SpinningMeasure.dirac(0.0), None, self.rng)
    frame = w.to_frame()
    self.assertEqual(
        list(frame.columns),
        ['path_id', 't', 'r', 'theta', 'x1', 'x2', 'excursion_id', 'L'])
    self.assertTrue(onp.isnan(frame['theta'][0]))
    self.assertEqual(frame['theta'][1], 0.0)


class TreeDistanceTest(parameterized.TestCase):

  @parameterized.parameters(
      ((2.0, 0.0), (5.0, 0.0), 3.0),
      ((0.0, 1.0), (0.0, -3.0), 4.0),
      ((1.0, 0.0), (0.0, 2.0), 3.0),
      ((0.0, 0.0), (3.0, 4.0), 5.0),
      ((3.0, 4.0), (0.0, 0.0), 5.0),
  )
  def test_tree_distance(self, x, y, expected):
    self.assertAlmostEqual(unfolding.tree_distance(x, y), expected)
    self.assertAlmostEqual(unfolding.tree_distance(y, x), expected)

  def test_triangle_inequality(self):
    gen = onp.random.default_rng(0)
    angles = onp.array([0.0, 1.0, 2.0])
    r = gen.uniform(0, 2, size=(3, 500))
    theta = angles[gen.integers(0, 3, size=(3, 500))]
    d = lambda i, j: unfolding.tree_distance_polar(r[i], theta[i], r[j],
                                                   theta[j])
    self.assertTrue(onp.all(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12))

  def test_ray_flip(self):
    grid = drivers.TimeGrid(1.0, 4)
    w = unfolding.WalshPath(
        grid,
        radial=onp.array([0.0, 1.0, 1.0, 1.0, 0.0]),
        angle=onp.array([onp.nan, 0.0, 0.0, 1.0, onp.nan]),
        excursion_id=onp.array([-1, 0, 0, 0, -1]))
    report = unfolding.check_ray_constancy(w)
    self.assertEqual(report.violations, 1)
    onp.testing.assert_array_equal(report.indices, [3])

  def test_tree_steps_shrink(self):
    medians = []
    for n_steps in (100, 10000):
      s = _reflected_bm(jax.random.PRNGKey(1), 16, n_steps)
      keys = utils.path_keys(jax.random.PRNGKey(2), 0, 16)
      w = unfolding.unfold(s, measures.SpinningMeasure.uniform(), None, keys)
      medians.append(onp.median(unfolding.tree_steps(w).max(axis=-1)))
    self.assertLess(medians[1], medians[0])


if __name__ == '__main__':
  absltest.main()
