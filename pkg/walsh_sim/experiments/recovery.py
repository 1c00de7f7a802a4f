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
"""Recovering the spinning measure from the rays of simulated excursions."""

import math

from absl import logging
import numpy as onp
import pandas as pd

from walsh_sim import diffusion
from walsh_sim import errors
from walsh_sim import measures
from walsh_sim import metrics
from walsh_sim import unfolding
from walsh_sim.experiments import base


def _near_support(angles: onp.ndarray, mu: measures.SpinningMeasure):
  """Whether every angle is one of the atoms of an atomic measure."""
  atoms = onp.array([theta for theta, _ in mu.atoms])
  if not angles.size:
    return True
  gaps = onp.abs(angles[:, None] - atoms[None, :])
  return bool(onp.all(gaps.min(axis=1) <= measures.ANGLE_TOL))


class EstimateMu(base.Experiment):
  """Empirical law of the exit rays against the spinning measure."""

  name = 'estimate-mu'
  description = 'Recovers the spinning measure from excursion exit rays.'
  defaults = {'min_excursions': 2000, 'tv_tolerance': 0.05, 'bins': None,
              'confidence': 0.99}
  default_measure = base.THREE_RAYS
  default_coefficients = base.BROWNIAN

  def simulate(self, keys):
    return diffusion.simulate_walsh_diffusion(self.coeffs, self.mu, base.ORIGIN,
                                              self.grid, keys)

  def run(self, sim):
    self.require_radial()
    epsilon = self.epsilon
    angles = sim.map_paths(
        lambda keys: diffusion.exit_angles(self.simulate(keys), epsilon),
        self.n_paths)
    if not angles.size:
      raise errors.InsufficientData(
          f'No excursion from 0 reaches epsilon={epsilon}.')
    estimate = measures.EmpiricalMeasure.from_samples(angles)
    bins = self.option('bins')
    tv = measures.total_variation(estimate, self.mu,
                                  None if bins is None else int(bins))
    tolerance = float(self.option('tv_tolerance'))
    minimum = int(self.option('min_excursions'))

    report = metrics.Report()
    report.statistics.update(total_variation=tv, excursions=estimate.count,
                             epsilon=epsilon)
    if self.mu.is_atomic:
      report.statistics['estimate'] = estimate.to_dict()
    report.tests['total_variation'] = metrics.TestResult(
        tv < tolerance, tv, details={'tolerance': tolerance})
    report.tests['enough_excursions'] = metrics.TestResult(
        estimate.count >= minimum, estimate.count,
        details={'minimum': minimum})
    if self.mu.atoms:
      theta, mass = self.mu.atoms[0]
      successes = int(onp.sum(onp.abs(angles - theta) <= measures.ANGLE_TOL))
      report.tests['first_atom'] = metrics.binomial_check(
          successes, estimate.count, mass, float(self.option('confidence')))
    report.histograms['exit_angles'] = metrics.histogram(
        angles, onp.linspace(0.0, 2.0 * math.pi, 37))
    self.dump(report, sim, self.simulate)
    return report


class MixedMu(base.Experiment):
  """Switching the spinning measure when the path reaches a given point.

  The configured measure is followed until the switch, `mu2` after it. Exit
  rays are pooled separately before and after the switch time of each path.
  """

  name = 'mixed-mu'
  description = ('Walsh Brownian motion changing spinning measure at a '
                 'point: exit rays before and after the switch.')
  defaults = {'mu2': {'atoms': [[0.5 * math.pi, 0.5], [1.5 * math.pi, 0.5]]},
              'switch_point': [1.0, 0.0], 'tolerance': None, 'min_gap': 0.3}
  default_measure = {'atoms': [[0.0, 0.5], [math.pi, 0.5]]}
  default_coefficients = base.BROWNIAN

  def second_measure(self) -> measures.SpinningMeasure:
    try:
      return measures.SpinningMeasure.from_dict(self.option('mu2'))
    except (ValueError, TypeError, KeyError) as e:
      raise errors.ConfigError('params.mu2', str(e)) from e

  def switch_point(self):
    point = self.option('switch_point')
    if len(point) != 2 or not any(point):
      raise errors.ConfigError('params.switch_point',
                               f'expecting a point off the origin: {point!r}.')
    return tuple(float(x) for x in point)

  def _simulate_one(self, mu2, point, key):
    tolerance = self.option('tolerance')
    return diffusion.mixed_measure_experiment(
        self.mu, mu2, point, self.grid, key,
        None if tolerance is None else float(tolerance))

  def run(self, sim):
    if self.coefficient_spec.get('family') != 'brownian':
      raise errors.ConfigError('coefficients.family',
                               f'{self.name} drives a Walsh Brownian motion.')
    mu2 = self.second_measure()
    point = self.switch_point()
    epsilon = self.epsilon
    half_step = 0.5 * self.grid.dt

    def chunk(keys):
      before, after = [], []
      violations = onp.zeros(keys.shape[0], dtype=onp.int64)
      switch_times = onp.full(keys.shape[0], onp.nan)
      for i, key in enumerate(keys):
        try:
          w, k = self._simulate_one(mu2, point, key)
        except errors.SwitchNotReached:
          continue
        t_k = float(self.grid.times[k])
        switch_times[i] = t_k
        before.append(diffusion.exit_angles(w, epsilon, (0.0, t_k)))
        after.append(diffusion.exit_angles(
            w, epsilon, (t_k + half_step, self.grid.t_end)))
        violations[i] = unfolding.check_ray_constancy(w).violations
      join = lambda parts: onp.concatenate(parts) if parts else onp.zeros(0)
      return join(before), join(after), violations, switch_times

    before, after, violations, switch_times = sim.map_paths(chunk, self.n_paths)
    missed = int(onp.isnan(switch_times).sum())
    if missed == self.n_paths:
      raise errors.InsufficientData(
          f'No path reached the switch point {point}.')
    if missed:
      logging.warning('%d of %d paths never reached the switch point.', missed,
                      self.n_paths)
    if not before.size or not after.size:
      raise errors.InsufficientData(
          f'Too few exits at epsilon={epsilon}: {before.size} before the '
          f'switch, {after.size} after.')

    pre = measures.EmpiricalMeasure.from_samples(before)
    post = measures.EmpiricalMeasure.from_samples(after)
    distances = {
        'pre_mu1': measures.total_variation(pre, self.mu),
        'pre_mu2': measures.total_variation(pre, mu2),
        'post_mu1': measures.total_variation(post, self.mu),
        'post_mu2': measures.total_variation(post, mu2),
    }
    gap = measures.total_variation(pre, post)
    min_gap = float(self.option('min_gap'))

    report = metrics.Report()
    report.statistics.update(
        total_variation=distances, window_gap=gap, missed=missed,
        switch_time=base.mean_and_stderr(switch_times[~onp.isnan(switch_times)]),
        pre_switch=pre.to_dict() if self.mu.is_atomic else pre.count,
        post_switch=post.to_dict() if mu2.is_atomic else post.count)
    report.tests['window_gap'] = metrics.TestResult(
        gap > min_gap, gap, details={'min_gap': min_gap})
    report.tests['pre_closer_to_first'] = metrics.TestResult(
        distances['pre_mu1'] < distances['pre_mu2'], details=distances)
    report.tests['post_closer_to_second'] = metrics.TestResult(
        distances['post_mu2'] < distances['post_mu1'], details=distances)
    if mu2.is_atomic:
      report.tests['post_switch_support'] = metrics.TestResult(
          _near_support(after, mu2))
    report.tests['ray_constancy'] = metrics.TestResult(
        int(violations.sum()) == 0, int(violations.sum()))
    report.frames['switch_times'] = pd.DataFrame(
        {'path_id': onp.arange(self.n_paths), 'switch_time': switch_times})

    if self.dump_paths:
      frames = []
      for i, key in enumerate(sim.path_keys(0, 0, self.dump_paths)):
        try:
          w, _ = self._simulate_one(mu2, point, key)
        except errors.SwitchNotReached:
          continue
        frames.append(w.to_frame().assign(path_id=i))
      if frames:
        report.frames['paths'] = pd.concat(frames, ignore_index=True)
    return report
