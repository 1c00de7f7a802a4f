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
"""Change of variables and martingale experiments."""

import math

from absl import logging
import numpy as onp
import pandas as pd

from walsh_sim import calculus
from walsh_sim import diffusion
from walsh_sim import drivers
from walsh_sim import errors
from walsh_sim import localtime
from walsh_sim import measures
from walsh_sim import metrics
from walsh_sim.experiments import base

RESIDUAL_FLOOR = 1e-9


def _simulate(experiment, grid, keys):
  return diffusion.simulate_walsh_diffusion(experiment.coeffs, experiment.mu,
                                            base.ORIGIN, grid, keys)


class Tripod(base.Experiment):
  """Walsh Brownian motion on three rays trisecting the circle.

  With equal weights gamma vanishes, and both coordinates are martingales
  equal to the integrals of cos(arg X) and sin(arg X) against the driver.
  """

  name = 'tripod'
  description = 'Three rays with gamma = 0: both coordinates are martingales.'
  defaults = {'threshold': 3.0}
  default_measure = {'atoms': [[2.0 * math.pi * k / 3.0, 1.0 / 3.0]
                               for k in range(3)]}
  default_coefficients = base.BROWNIAN

  def simulate(self, keys):
    return _simulate(self, self.grid, keys)

  def _chunk(self, keys):
    w = self.simulate(keys)
    first = calculus.slope_avg_process(w, onp.cos, self.mu)
    second = calculus.slope_avg_process(w, onp.sin, self.mu)
    return w.x1[:, -1], w.x2[:, -1], first.error, second.error

  def run(self, sim):
    self.require_radial()
    x1, x2, error1, error2 = sim.map_paths(self._chunk, self.n_paths)
    gamma = measures.alpha_gamma(self.mu).gamma
    threshold = float(self.option('threshold'))
    report = metrics.Report()
    report.statistics['gamma'] = [float(g) for g in gamma]
    for name, values, error in (('x1', x1, error1), ('x2', x2, error2)):
      ztest = calculus.martingale_ztest(values)
      report.statistics[f'{name}_ztest'] = ztest.to_dict()
      report.statistics[f'{name}_sup_error'] = {
          'mean': float(onp.mean(error)), 'max': float(onp.max(error))}
      report.tests[f'{name}_martingale'] = metrics.TestResult(
          abs(ztest.z) < threshold, ztest.z, ztest.p_value,
          {'mean': ztest.mean, 'stderr': ztest.stderr})
    report.histograms['x1'] = metrics.histogram(x1, 40)
    report.histograms['x2'] = metrics.histogram(x2, 40)
    self.dump(report, sim, self.simulate)
    return report


class FreidlinSheuResidual(base.Experiment):
  """Residual of the change of variables for the catalog of test functions.

  The same paths (same keys) are simulated on finer and finer grids, and the
  terminal residual of every catalog function is reduced to its batch RMS.
  """

  name = 'fs-residual'
  description = ('Change of variables residual of the catalog functions as '
                 'dt decreases.')
  defaults = {'n_steps': [1000, 10000, 100000], 'angle_set': [[0.0, math.pi]],
              'blend_radius': 0.5, 'local_time': 'tanaka',
              'rms_tolerance': 0.15}
  default_measure = base.THREE_RAYS
  default_coefficients = base.BROWNIAN

  def levels(self):
    levels = self.option('n_steps')
    if (not isinstance(levels, (list, tuple)) or not levels or
        any(not isinstance(n, int) or n < 1 for n in levels)):
      raise errors.ConfigError('params.n_steps',
                               f'expecting positive integers, got {levels!r}.')
    return sorted(set(levels))

  def catalog(self):
    try:
      return calculus.catalog(self.mu, self.option('angle_set'),
                              blend_radius=float(self.option('blend_radius')))
    except errors.ArgumentError as e:
      raise errors.ConfigError('params.angle_set', str(e)) from e

  def _local_time(self, w):
    method = self.option('local_time')
    if method == 'tanaka':
      return localtime.lt_tanaka(w.radial_path(), w.driver_path()).values
    if method == 'regulator':
      return w.localtime_path()
    raise errors.ConfigError('params.local_time',
                             f'expecting tanaka or regulator, got {method!r}.')

  def run(self, sim):
    self.require_radial()
    functions = self.catalog()
    names = sorted(functions)
    rows = []
    for n_steps in self.levels():
      grid = drivers.TimeGrid(self.grid.t_end, n_steps)

      def chunk(keys, grid=grid):
        w = _simulate(self, grid, keys)
        lt = self._local_time(w)
        terminal, sup = [], []
        for name in names:
          decomposition = calculus.fs_decompose(w, None, None, functions[name],
                                                self.mu, lt)
          terminal.append(decomposition.terminal_residual)
          sup.append(onp.max(onp.abs(decomposition.residual), axis=-1))
        return onp.stack(terminal, axis=1), onp.stack(sup, axis=1)

      terminal, sup = sim.map_paths(chunk, self.n_paths)
      logging.info('%s: dt=%g done.', self.name, grid.dt)
      for j, name in enumerate(names):
        rows.append({'g_name': name, 'dt': grid.dt, 'T': grid.t_end,
                     'n_paths': self.n_paths,
                     'rms_residual': float(onp.sqrt(onp.mean(terminal[:, j]**2))),
                     'max_residual': float(onp.max(sup[:, j]))})

    frame = pd.DataFrame(rows)
    tolerance = float(self.option('rms_tolerance'))
    report = metrics.Report()
    report.frames['residuals'] = frame
    report.statistics['residuals'] = rows
    for name in names:
      rms = frame[frame['g_name'] == name].sort_values(
          'dt', ascending=False)['rms_residual'].to_numpy()
      decreasing = all(b < a or b < RESIDUAL_FLOOR
                       for a, b in zip(rms[:-1], rms[1:]))
      report.tests[f'decreasing_{name}'] = metrics.TestResult(
          bool(decreasing), details={'rms': rms.tolist()})
      report.tests[f'rms_{name}'] = metrics.TestResult(
          bool(rms[-1] < tolerance),
          details={'rms': float(rms[-1]), 'tolerance': tolerance})
    return report


def _phi(name: str, angle_set):
  """Returns (phi, breakpoints) of a named angular function."""
  if name == 'indicator':
    angle_set = measures.AngleSet.coerce(angle_set)
    return calculus.indicator_of(angle_set), angle_set.breakpoints
  if name == 'cos':
    return onp.cos, ()
  if name == 'sin':
    return onp.sin, ()
  if name == 'cos2':
    return (lambda t: onp.cos(2.0 * onp.asarray(t))), ()
  raise errors.ConfigError(
      'params.phis',
      f'unknown function {name!r}, expecting indicator, cos, sin or cos2.')


class SlopeAverage(base.Experiment):
  """g_phi(X) = |X| (phi(arg X) - int phi dnu) for a driftless driver."""

  name = 'slope-avg'
  description = 'Slope averaging martingales g_phi for several phi.'
  defaults = {'phis': ['indicator', 'cos', 'cos2'],
              'angle_set': [[0.0, math.pi]], 'threshold': 3.0}
  default_measure = base.THREE_RAYS
  default_coefficients = base.BROWNIAN

  def functions(self):
    try:
      return [(name,) + _phi(name, self.option('angle_set'))
              for name in self.option('phis')]
    except errors.ArgumentError as e:
      raise errors.ConfigError('params.angle_set', str(e)) from e

  def simulate(self, keys):
    return _simulate(self, self.grid, keys)

  def run(self, sim):
    self.require_radial()
    functions = self.functions()

    def chunk(keys):
      w = self.simulate(keys)
      increments, errors_ = [], []
      for _, phi, breakpoints in functions:
        process = calculus.slope_avg_process(w, phi, self.mu,
                                             breakpoints=breakpoints)
        increments.append(process.values[:, -1] - process.values[:, 0])
        errors_.append(process.error)
      return onp.stack(increments, axis=1), onp.stack(errors_, axis=1)

    increments, sup = sim.map_paths(chunk, self.n_paths)
    threshold = float(self.option('threshold'))
    report = metrics.Report()
    for j, (name, _, _) in enumerate(functions):
      ztest = calculus.martingale_ztest(increments[:, j])
      report.statistics[f'{name}_ztest'] = ztest.to_dict()
      report.statistics[f'{name}_sup_error'] = {
          'mean': float(onp.mean(sup[:, j])), 'max': float(onp.max(sup[:, j]))}
      report.tests[f'ztest_{name}'] = metrics.TestResult(
          abs(ztest.z) < threshold, ztest.z, ztest.p_value,
          {'mean': ztest.mean, 'stderr': ztest.stderr})
      report.histograms[f'increment_{name}'] = metrics.histogram(
          increments[:, j], 40)
    self.dump(report, sim, self.simulate)
    return report
