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
"""Folding, Walsh Brownian motion and skew Brownian motion experiments."""

import math

from absl import logging
import numpy as onp

from walsh_sim import calculus
from walsh_sim import diffusion
from walsh_sim import drivers
from walsh_sim import errors
from walsh_sim import localtime
from walsh_sim import measures
from walsh_sim import metrics
from walsh_sim import unfolding
from walsh_sim import utils
from walsh_sim.experiments import base

ESTIMATORS = ('tanaka', 'downcrossing', 'occupation')


class FoldDemo(base.Experiment):
  """Skorokhod fold S = U + Lambda of simulated or linear drivers."""

  name = 'fold-demo'
  description = 'Skorokhod fold of drivers: identity, regulator, minimality.'
  defaults = {'u0': 0.0, 'n_minimality': 100, 'minimality_steps': 50}
  default_coefficients = base.BROWNIAN

  def drivers(self, keys) -> drivers.SamplePath:
    spec = self.coefficient_spec
    u0 = float(self.option('u0'))
    if spec['family'] == 'linear':
      return drivers.linear_driver(float(spec['rate']), u0, self.grid,
                                   keys.shape[0])
    return drivers.simulate_driver(self.coeffs, u0, self.grid, keys)

  def _chunk(self, keys):
    u = self.drivers(keys)
    s, lam = drivers.skorokhod_fold(u)
    increments = onp.diff(lam.values, axis=-1)
    identity = onp.all(s.values == u.values + lam.values, axis=-1)
    monotone = onp.all(increments >= 0, axis=-1)
    flat = onp.all((increments == 0) | (s.values[:, 1:] == 0), axis=-1)
    nonnegative = onp.all(s.values >= 0, axis=-1)
    return identity, monotone, flat, nonnegative, lam.values[:, -1]

  def run(self, sim):
    self.require_radial()
    identity, monotone, flat, nonnegative, terminal = sim.map_paths(
        self._chunk, self.n_paths)

    count = min(int(self.option('n_minimality')), self.n_paths)
    steps = min(int(self.option('minimality_steps')), self.grid.n_steps)
    u = self.drivers(sim.path_keys(0, 0, count))
    _, lam = drivers.skorokhod_fold(u)
    minimal = [drivers.regulator_is_minimal(u.values[i, :steps + 1],
                                            lam.values[i, :steps + 1])
               for i in range(count)]

    report = metrics.Report()
    report.statistics.update(
        identity_failures=int(onp.sum(~identity)),
        regulator_mean=float(onp.mean(terminal)),
        minimality_paths=count, minimality_steps=steps)
    report.tests['fold_identity'] = metrics.TestResult(bool(onp.all(identity)))
    report.tests['nonnegative'] = metrics.TestResult(bool(onp.all(nonnegative)))
    report.tests['regulator_nondecreasing'] = metrics.TestResult(
        bool(onp.all(monotone)))
    report.tests['regulator_flat_away_from_zero'] = metrics.TestResult(
        bool(onp.all(flat)))
    report.tests['minimality'] = metrics.TestResult(
        all(minimal), details={'failures': int(len(minimal) - sum(minimal))})
    report.histograms['regulator'] = metrics.histogram(terminal, 20)
    if self.dump_paths:
      u = self.drivers(sim.path_keys(0, 0, self.dump_paths))
      s, lam = drivers.skorokhod_fold(u)
      report.frames['paths'] = drivers.fold_frame(u, s, lam)
    return report


def _angle_cells(mu: measures.SpinningMeasure, theta: onp.ndarray,
                 n_bins: int) -> onp.ndarray:
  """Cell of every angle: one per atom, then n_bins regular bins."""
  cells = onp.full(theta.shape, -1)
  for index, (angle, _) in enumerate(mu.atoms):
    cells[onp.abs(theta - angle) <= measures.ANGLE_TOL] = index
  if not mu.is_atomic:
    rest = cells < 0
    bins = (theta[rest] / utils.TWO_PI * n_bins).astype(int)
    cells[rest] = len(mu.atoms) + onp.clip(bins, 0, n_bins - 1)
  return cells


def radius_angle_table(mu: measures.SpinningMeasure, r: onp.ndarray,
                       theta: onp.ndarray, buckets: int,
                       n_bins: int) -> onp.ndarray:
  """Counts of (radius quantile bucket, angle cell) away from the origin."""
  away = r > 0
  r, theta = r[away], theta[away]
  edges = onp.quantile(r, onp.linspace(0.0, 1.0, buckets + 1))
  rows = onp.clip(onp.searchsorted(edges[1:-1], r, side='right'), 0,
                  buckets - 1)
  cols = _angle_cells(mu, theta, n_bins)
  table = onp.zeros((buckets, len(mu.atoms) + (0 if mu.is_atomic else n_bins)))
  onp.add.at(table, (rows, cols), 1)
  return table


class WalshBrownianMotion(base.Experiment):
  """Walsh Brownian motion from the origin."""

  name = 'walsh-bm'
  description = ('Walsh Brownian motion: radial law, local time estimators, '
                 'angular law and ray constancy.')
  defaults = {'radius_buckets': 4, 'n_bins': 12, 'tolerance': 0.05,
              'max_gap': 0.03, 'max_step': 8.0}
  default_measure = {'density': {'kind': 'uniform'}}
  default_coefficients = base.BROWNIAN

  @property
  def sigma(self) -> float:
    spec = self.coefficient_spec
    if spec['family'] != 'brownian':
      raise errors.ConfigError(
          'coefficients.family',
          f'{self.name} runs a Walsh Brownian motion, got {spec["family"]}.')
    return float(spec.get('sigma', 1.0))

  def simulate(self, keys) -> unfolding.WalshPath:
    return diffusion.simulate_walsh_diffusion(self.coeffs, self.mu,
                                              base.ORIGIN, self.grid, keys)

  def _chunk(self, keys):
    w = self.simulate(keys)
    radial = w.radial_path()
    eps = self.epsilon
    tanaka = localtime.lt_tanaka(radial, w.driver_path()).terminal
    down = localtime.lt_downcrossing(radial, eps).terminal
    occupation = localtime.lt_occupation(radial, eps,
                                         w.variation_path()).terminal
    positions = unfolding.check_ray_constancy(w).positions
    violations = onp.bincount(positions[:, 0], minlength=w.num_paths)
    steps = onp.max(unfolding.tree_steps(w), axis=-1)
    r, theta = w.terminal_points()
    return (r, theta, tanaka, down, occupation, w.localtime[:, -1], violations,
            steps)

  def run(self, sim):
    sigma = self.sigma
    localtime.check_epsilon(self.epsilon, sigma, self.grid.dt)
    (r, theta, tanaka, down, occupation, regulator, violations,
     steps) = sim.map_paths(self._chunk, self.n_paths)
    t_end = self.grid.t_end
    expected = sigma * math.sqrt(2.0 * t_end / math.pi)
    tolerance = float(self.option('tolerance'))

    report = metrics.Report()
    radial = base.mean_and_stderr(r)
    report.statistics.update(
        radial_mean=radial['mean'], radial_mean_stderr=radial['stderr'],
        radial_mean_expected=expected, at_origin=int(onp.sum(r == 0)),
        regulator_mean=float(onp.mean(regulator)), epsilon=self.epsilon)
    report.tests['radial_mean'] = metrics.TestResult(
        base.within(radial['mean'], expected, tolerance),
        details={'mean': radial['mean'], 'expected': expected})

    estimates = dict(zip(ESTIMATORS, (tanaka, down, occupation)))
    means = {}
    for method, values in estimates.items():
      summary = base.mean_and_stderr(values)
      means[method] = summary['mean']
      report.statistics[f'localtime_{method}'] = summary
      report.tests[f'localtime_{method}'] = metrics.TestResult(
          base.within(summary['mean'], expected, tolerance),
          details={'mean': summary['mean'], 'expected': expected})
    gaps = {f'{a}_{b}': abs(means[a] - means[b])
            for i, a in enumerate(ESTIMATORS) for b in ESTIMATORS[i + 1:]}
    report.statistics['localtime_gaps'] = gaps
    report.tests['localtime_agreement'] = metrics.TestResult(
        max(gaps.values()) < float(self.option('max_gap')) * sigma *
        math.sqrt(t_end), details=gaps)

    away = r > 0
    n_bins = int(self.option('n_bins'))
    observed, probabilities = diffusion.angular_cells(
        self.mu, lambda t: 1.0, (), theta[away], n_bins)
    report.tests['angular_chi_square'] = metrics.chi_square_gof(
        observed, probabilities)
    table = radius_angle_table(self.mu, r, theta,
                               int(self.option('radius_buckets')), n_bins)
    report.tests['radius_angle_independence'] = metrics.contingency_test(table)

    report.statistics['ray_violations'] = int(onp.sum(violations))
    report.tests['ray_constancy'] = metrics.TestResult(
        bool(onp.sum(violations) == 0))
    bound = float(self.option('max_step')) * sigma * math.sqrt(self.grid.dt)
    report.statistics['max_tree_step'] = float(onp.max(steps))
    report.tests['tree_steps_bounded'] = metrics.TestResult(
        bool(onp.max(steps) <= bound), details={'bound': bound})

    report.histograms['radial'] = metrics.histogram(
        r, 40, (0.0, 4.0 * sigma * math.sqrt(t_end)))
    report.histograms['angular'] = metrics.histogram(theta, 36,
                                                     (0.0, utils.TWO_PI))
    self.dump(report, sim, self.simulate)
    return report


class SkewBrownianMotion(base.Experiment):
  """Walsh Brownian motion on two rays, whose first coordinate is skew."""

  name = 'skew-bm'
  description = ('Two rays: law of the sign of X1 and the Harrison-Shepp '
                 'equation of X1.')
  defaults = {'confidence': 0.99, 'hs_tolerance': 0.15}
  default_measure = base.SKEWED_RAYS
  default_coefficients = base.BROWNIAN

  @property
  def on_axis(self) -> bool:
    """Whether mu only charges the rays of angle 0 and pi."""
    return self.mu.is_atomic and all(
        unfolding.same_ray(t, 0.0) or unfolding.same_ray(t, math.pi)
        for t, _ in self.mu.atoms)

  def simulate(self, keys):
    return diffusion.simulate_walsh_diffusion(self.coeffs, self.mu,
                                              base.ORIGIN, self.grid, keys)

  def _chunk(self, keys):
    w = self.simulate(keys)
    r, theta = w.terminal_points()
    if not self.on_axis:
      return r, theta, None, None
    residual = calculus.harrison_shepp_residual(w, self.mu)
    return r, theta, residual[:, -1], onp.max(onp.abs(residual), axis=-1)

  def run(self, sim):
    self.require_radial()
    r, theta, terminal, sup = sim.map_paths(self._chunk, self.n_paths)
    moments = measures.alpha_gamma(self.mu)
    expected = measures.integrate(
        self.mu, lambda t: float(math.cos(t) > measures.ANGLE_TOL),
        breakpoints=(math.pi / 2, 1.5 * math.pi))
    away = r > 0
    x1 = onp.where(away, r * onp.cos(onp.nan_to_num(theta)), 0.0)
    successes = int(onp.sum(onp.cos(theta[away]) > measures.ANGLE_TOL))
    trials = int(onp.sum(away))

    report = metrics.Report()
    report.statistics.update(
        positive_fraction=successes / max(trials, 1),
        positive_expected=expected,
        alpha1_plus=float(moments.alpha_plus[0]),
        gamma=[float(g) for g in moments.gamma],
        at_origin=int(r.size - trials))
    report.tests['positive_probability'] = metrics.binomial_check(
        successes, trials, expected, float(self.option('confidence')))
    if terminal is None:
      logging.warning('%s: the measure charges rays off the first axis, '
                      'skipping the Harrison-Shepp check.', self.name)
    else:
      kappa = moments.skew_coefficient(0)
      rms = float(onp.sqrt(onp.mean(terminal**2)))
      bound = float(self.option('hs_tolerance')) * math.sqrt(self.grid.t_end)
      report.statistics.update(kappa=kappa, hs_rms=rms,
                               hs_max=float(onp.max(sup)))
      report.tests['harrison_shepp'] = metrics.TestResult(
          rms <= bound, details={'rms': rms, 'bound': bound})
    report.histograms['x1'] = metrics.histogram(
        x1, 40, (-4.0 * math.sqrt(self.grid.t_end),
                 4.0 * math.sqrt(self.grid.t_end)))
    self.dump(report, sim, self.simulate)
    return report


class Thinning(base.Experiment):
  """Thinned local time L^{R^A} against nu(A) L^{|X|}, and L^{X_1}.

  Downcrossings of |X| are partitioned by the ray of their excursion, so the
  counts of A and of its complement add up to the counts of |X| exactly.
  L^{X_1} is compared with the local time of |X| estimated the same way: the
  one-sided occupation of [0, eps) for both, or Tanaka's formula for both.
  """

  name = 'thinning'
  description = ('Thinning of the local time by an angle set, and the local '
                 'time of the first coordinate.')
  defaults = {'angle_set': [[0.0, 0.5 * math.pi]],
              'ratio_tolerance': 0.03, 'component_method': 'occupation',
              'component_tolerance': 0.1}
  default_measure = base.SKEWED_RAYS
  default_coefficients = base.BROWNIAN

  def angle_set(self) -> measures.AngleSet:
    try:
      return measures.AngleSet.coerce(self.option('angle_set'))
    except errors.ArgumentError as e:
      raise errors.ConfigError('params.angle_set', str(e)) from e

  def simulate(self, keys):
    return diffusion.simulate_walsh_diffusion(self.coeffs, self.mu,
                                              base.ORIGIN, self.grid, keys)

  def run(self, sim):
    self.require_radial()
    angle_set = self.angle_set()
    complement = angle_set.complement()
    epsilon = self.epsilon
    method = self.option('component_method')
    if method not in ('tanaka', 'occupation'):
      raise errors.ConfigError('params.component_method',
                               f'expecting tanaka or occupation: {method!r}.')

    def chunk(keys):
      w = self.simulate(keys)
      inside = localtime.thinned_local_time(w, angle_set, epsilon).estimate
      outside = localtime.thinned_local_time(w, complement, epsilon).estimate
      total = localtime.lt_downcrossing(w.radial_path(), epsilon)
      mismatches = onp.sum(inside.counts + outside.counts != total.counts,
                           axis=-1)
      first = localtime.component_local_time(w, 0, epsilon, method)
      if method == 'occupation':
        r = w.radial_path()
        radial = localtime.lt_occupation(
            r, epsilon, drivers.realized_quadratic_variation(r))
      else:
        radial = localtime.lt_tanaka(w.radial_path(), w.driver_path())
      return (inside.terminal, total.terminal, mismatches, first.terminal,
              radial.terminal)

    inside, total, mismatches, first, radial = sim.map_paths(chunk,
                                                             self.n_paths)
    mass = angle_set.mass(self.mu)
    ratio = float(onp.mean(inside) / onp.mean(total))
    ratio_tolerance = float(self.option('ratio_tolerance'))
    alpha = float(measures.alpha_gamma(self.mu).alpha_plus[0])
    component_ratio = float(onp.mean(first) / onp.mean(radial))
    tolerance = float(self.option('component_tolerance'))

    report = metrics.Report()
    report.statistics.update(
        ratio=ratio, mass=mass, epsilon=epsilon,
        thinned=base.mean_and_stderr(inside),
        total=base.mean_and_stderr(total),
        component_ratio=component_ratio, alpha1_plus=alpha,
        additivity_mismatches=int(onp.sum(mismatches)))
    report.tests['thinning_ratio'] = metrics.TestResult(
        abs(ratio - mass) <= ratio_tolerance, ratio,
        details={'mass': mass, 'tolerance': ratio_tolerance})
    report.tests['additivity'] = metrics.TestResult(
        int(onp.sum(mismatches)) == 0)
    report.tests['component_localtime'] = metrics.TestResult(
        base.within(component_ratio, alpha, tolerance), component_ratio,
        details={'alpha1_plus': alpha, 'method': method})
    report.histograms['thinned'] = metrics.histogram(inside, 30)
    self.dump(report, sim, self.simulate)
    return report
