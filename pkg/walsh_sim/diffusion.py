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
"""Walsh diffusions: radial, angle dependent and time changed constructions.

Radial coefficients are handled by folding a reflected diffusion and
unfolding it along random rays. Angle dependent coefficients go through the
scale function p_theta, its inverse q_theta and the stochastic clock

  Q(t) = int_0^t du / sigma_tilde(|X(u)|, arg X(u))^2,

applied to a Walsh Brownian motion X: Y = (q(|X(T(.))|), arg X(T(.))) with T
the right continuous inverse of Q. A direct per-ray Euler scheme serves as an
independent check.
"""

import dataclasses
import functools
import math
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

from absl import logging
import jax
import jax.numpy as np
import numpy as onp
import pandas as pd
import scipy.integrate
import scipy.interpolate

from walsh_sim import drivers
from walsh_sim import errors
from walsh_sim import families
from walsh_sim import localtime
from walsh_sim import measures
from walsh_sim import metrics
from walsh_sim import simulator
from walsh_sim import unfolding
from walsh_sim import utils

AngularCoefficients = families.AngularCoefficients
ClosedFormScale = families.ClosedFormScale

SCALE_TOL = 1e-9
NEWTON_STEPS = 4
NUM_LATTICE_ANGLES = 16
DEFAULT_RADII = onp.unique(onp.concatenate(
    [onp.linspace(0.0, 1.0, 41), onp.linspace(1.0, 8.0, 36)]))
MAX_INFLATION = 64.0
INFLATION_MARGIN = 1.2
BESSEL_MARGIN = 0.05
ORIGIN = (0.0, 0.0)

POLAR_DRIFT_STREAM = 10
BESSEL_STREAM = 11


def as_angular(coeffs) -> AngularCoefficients:
  """Views radial coefficients as angular ones that ignore the angle."""
  if isinstance(coeffs, AngularCoefficients):
    return coeffs
  return AngularCoefficients(lambda r, t: coeffs.b(r) + 0.0 * t,
                             lambda r, t: coeffs.a(r) + 0.0 * t,
                             name=coeffs.name)


def default_theta_lattice(coeffs: AngularCoefficients) -> onp.ndarray:
  uniform = onp.arange(NUM_LATTICE_ANGLES) * utils.TWO_PI / NUM_LATTICE_ANGLES
  return onp.unique(onp.concatenate(
      [uniform, utils.wrap_angle(coeffs.angular_breakpoints)]))


def _tabulate_column(coeffs: AngularCoefficients, theta: float,
                     radii: onp.ndarray):
  """p and p' on the radial lattice for one angle, by nested quadrature."""

  def ratio(r):
    return float(coeffs.b(r, theta)) / float(coeffs.a(r, theta))

  def quad(fn, lower, upper):
    return scipy.integrate.quad(fn, lower, upper, epsabs=SCALE_TOL,
                                epsrel=SCALE_TOL, limit=200)[0]

  inner = onp.zeros(radii.size)
  p = onp.zeros(radii.size)
  for k in range(1, radii.size):
    lower, upper = radii[k - 1], radii[k]
    base = inner[k - 1]
    p[k] = p[k - 1] + quad(
        lambda xi: math.exp(-2.0 * (base + quad(ratio, lower, xi))),
        lower, upper)
    inner[k] = base + quad(ratio, lower, upper)
  p_prime = onp.exp(-2.0 * inner)
  drift_ratio = (onp.asarray(coeffs.b(radii, theta), onp.float64) /
                 onp.asarray(coeffs.a(radii, theta), onp.float64))
  return p, p_prime, -2.0 * drift_ratio * p_prime


@dataclasses.dataclass(frozen=True, eq=False)
class ScaleTransform:
  """The scale function p_theta, its inverse q_theta and sigma_tilde.

  Tabulated transforms hold one column of Hermite splines per distinct
  angular profile of b / a. An angle uses the column of the lattice cell
  [theta_j, theta_j+1) it falls into, cyclically. Closed form transforms
  evaluate the formulas of the coefficients directly.

  Attributes:
   coeffs: the AngularCoefficients.
   theta_lattice: sorted lattice angles in [0, 2pi).
   r_lattice: sorted radial lattice starting at 0.
   column_of: column index of every lattice angle.
   p_tables: p on the radial lattice, one row per column.
   p_splines: cubic Hermite splines of p, one per column.
   p_prime_splines: cubic Hermite splines of p', one per column.
   zero_rate: clock rate 1 / sigma_tilde^2 used at the origin.
  """
  coeffs: AngularCoefficients
  theta_lattice: onp.ndarray
  r_lattice: onp.ndarray
  column_of: onp.ndarray
  p_tables: onp.ndarray
  p_splines: Tuple[Any, ...]
  p_prime_splines: Tuple[Any, ...]
  zero_rate: float = 0.0

  @property
  def closed_form(self) -> Optional[ClosedFormScale]:
    return self.coeffs.scale

  @property
  def r_max(self) -> float:
    return float(self.r_lattice[-1])

  def _columns(self, theta: onp.ndarray) -> onp.ndarray:
    theta = utils.wrap_angle(onp.nan_to_num(theta))
    cell = onp.searchsorted(self.theta_lattice, theta, side='right') - 1
    cell = onp.where(cell < 0, self.theta_lattice.size - 1, cell)
    return self.column_of[cell]

  def _by_column(self, fn, r, theta) -> onp.ndarray:
    r, theta = onp.broadcast_arrays(onp.asarray(r, onp.float64),
                                    onp.asarray(theta, onp.float64))
    result = onp.empty(r.shape)
    columns = self._columns(theta)
    for column in onp.unique(columns):
      mask = columns == column
      result[mask] = fn(column, r[mask])
    return result

  def _warn_beyond(self, r):
    if onp.size(r) and onp.max(r) > self.r_max:
      logging.log_first_n(
          logging.WARNING,
          'Radius %g is beyond the scale table (r_max=%g), extrapolating '
          'linearly.', 1, float(onp.max(r)), self.r_max)

  def _p_column(self, column, r):
    spline = self.p_splines[column]
    slope = self.p_prime_splines[column](self.r_max)
    inside = spline(onp.clip(r, 0.0, self.r_max))
    return onp.where(r <= self.r_max, inside,
                     spline(self.r_max) + slope * (r - self.r_max))

  def _p_prime_column(self, column, r):
    return self.p_prime_splines[column](onp.clip(r, 0.0, self.r_max))

  def _q_column(self, column, y):
    table = self.p_tables[column]
    slope = self.p_prime_splines[column](self.r_max)
    r = onp.where(y <= table[-1], onp.interp(y, table, self.r_lattice),
                  self.r_max + (y - table[-1]) / slope)
    for _ in range(NEWTON_STEPS):
      r = onp.maximum(
          r - (self._p_column(column, r) - y) / self._p_prime_column(column, r),
          0.0)
    return onp.where(y > 0, r, 0.0)

  def p(self, r, theta) -> onp.ndarray:
    if self.closed_form is not None:
      return _closed(self.closed_form.p, r, theta)
    self._warn_beyond(r)
    return self._by_column(self._p_column, r, theta)

  def p_prime(self, r, theta) -> onp.ndarray:
    if self.closed_form is not None:
      return _closed(self.closed_form.p_prime, r, theta)
    self._warn_beyond(r)
    return self._by_column(self._p_prime_column, r, theta)

  def q(self, y, theta) -> onp.ndarray:
    """Inverse of p_theta, by interpolation of the table then Newton steps."""
    if self.closed_form is not None:
      return _closed(self.closed_form.q, y, theta)
    return self._by_column(self._q_column, y, theta)

  def q_prime_at_zero(self, theta) -> onp.ndarray:
    if self.closed_form is not None:
      theta = onp.asarray(theta, onp.float64)
      return onp.broadcast_to(
          onp.asarray(self.closed_form.q_prime_at_zero(theta), onp.float64),
          theta.shape)
    return onp.ones(onp.shape(theta))

  def sigma_tilde(self, y, theta) -> onp.ndarray:
    """sigma_tilde(y, theta) = p'(q(y)) sigma(q(y), theta)."""
    y, theta = onp.broadcast_arrays(onp.asarray(y, onp.float64),
                                    onp.asarray(theta, onp.float64))
    if self.closed_form is not None and self.closed_form.sigma_tilde:
      return _closed(self.closed_form.sigma_tilde, y, theta)
    r = self.q(y, theta)
    return self.p_prime(r, theta) * onp.sqrt(
        onp.asarray(self.coeffs.a(r, theta), onp.float64))

  def inverse_rate(self, y, theta) -> onp.ndarray:
    """Clock rate 1 / sigma_tilde^2, zero_rate at the origin."""
    y = onp.asarray(y, onp.float64)
    theta = onp.broadcast_to(onp.asarray(theta, onp.float64), y.shape)
    rate = onp.full(y.shape, self.zero_rate)
    away = y > 0
    with onp.errstate(divide='ignore', invalid='ignore', over='ignore'):
      rate[away] = 1.0 / self.sigma_tilde(y[away], theta[away]) ** 2
    return onp.nan_to_num(rate, nan=0.0, posinf=0.0)

  def identity_errors(self) -> Dict[str, float]:
    """|p(0)|, |p'(0+) - 1|, |q'(0+) - 1| and max |p(q(r)) - r|."""
    theta = self.theta_lattice
    r, t = onp.meshgrid(self.r_lattice, theta, indexing='ij')
    errors_ = {
        'p_at_zero': float(onp.max(onp.abs(self.p(onp.zeros_like(theta),
                                                   theta)))),
        'inverse': float(onp.max(onp.abs(self.p(self.q(r, t), t) - r))),
    }
    if self.closed_form is None:
      h = 1e-7
      errors_['p_prime_at_zero'] = float(onp.max(onp.abs(
          self.p_prime(onp.zeros_like(theta), theta) - 1.0)))
      errors_['q_prime_at_zero'] = float(onp.max(onp.abs(
          self.q(onp.full(theta.shape, h), theta) / h - 1.0)))
    else:
      errors_['p_prime_at_zero'] = float('nan')
      errors_['q_prime_at_zero'] = float('nan')
    return errors_


def _closed(fn, r, theta) -> onp.ndarray:
  r, theta = onp.broadcast_arrays(onp.asarray(r, onp.float64),
                                  onp.asarray(theta, onp.float64))
  with onp.errstate(divide='ignore', invalid='ignore'):
    return onp.broadcast_to(onp.asarray(fn(r, onp.nan_to_num(theta)),
                                        onp.float64), r.shape).copy()


def scale_transform(coeffs,
                    theta_lattice: Optional[Sequence[float]] = None,
                    r_lattice: Optional[Sequence[float]] = None
                   ) -> ScaleTransform:
  """Tabulates the scale function of angular coefficients.

  Args:
    coeffs: AngularCoefficients, or RadialCoefficients seen as such.
    theta_lattice: lattice angles, by default 16 uniform angles plus the
      angular breakpoints of the coefficients.
    r_lattice: radial lattice starting at 0, by default DEFAULT_RADII.

  Returns:
    The ScaleTransform.

  Raises:
   DomainError if the dispersion is below the floor on the lattice or if p
    fails to be strictly increasing.
  """
  coeffs = as_angular(coeffs)
  theta_lattice = (default_theta_lattice(coeffs) if theta_lattice is None
                   else onp.unique(utils.wrap_angle(theta_lattice)))
  r_lattice = onp.unique(onp.asarray(
      DEFAULT_RADII if r_lattice is None else r_lattice, onp.float64))
  if r_lattice[0] != 0.0 or r_lattice.size < 2:
    raise errors.ArgumentError('The radial lattice should start at 0.')
  coeffs.validate(radii=r_lattice, angles=theta_lattice)

  if coeffs.scale is not None:
    st = ScaleTransform(coeffs, theta_lattice, r_lattice,
                        onp.zeros(theta_lattice.size, dtype=int),
                        onp.zeros((0, r_lattice.size)), (), ())
    r, t = onp.meshgrid(r_lattice, theta_lattice, indexing='ij')
    if not onp.all(onp.diff(st.p(r, t), axis=0) > 0):
      raise errors.DomainError(f'{coeffs.name}: p is not strictly increasing.')
  else:
    r, t = onp.meshgrid(r_lattice, theta_lattice, indexing='ij')
    profiles = onp.asarray(coeffs.b(r, t), onp.float64) / onp.asarray(
        coeffs.a(r, t), onp.float64)
    profiles = onp.broadcast_to(profiles, r.shape)
    keys, column_of = [], []
    for j in range(theta_lattice.size):
      key = onp.round(profiles[:, j], 12).tobytes()
      if key not in keys:
        keys.append(key)
      column_of.append(keys.index(key))
    column_of = onp.array(column_of)

    tables, p_splines, p_prime_splines = [], [], []
    for column in range(len(keys)):
      theta = float(theta_lattice[column_of.tolist().index(column)])
      p, p_prime, p_second = _tabulate_column(coeffs, theta, r_lattice)
      if not onp.all(onp.diff(p) > 0):
        raise errors.DomainError(
            f'{coeffs.name}: p is not strictly increasing at angle {theta}.')
      tables.append(p)
      p_splines.append(scipy.interpolate.CubicHermiteSpline(
          r_lattice, p, p_prime))
      p_prime_splines.append(scipy.interpolate.CubicHermiteSpline(
          r_lattice, p_prime, p_second))
    st = ScaleTransform(coeffs, theta_lattice, r_lattice, column_of,
                        onp.array(tables), tuple(p_splines),
                        tuple(p_prime_splines))
    logging.info('Tabulated the scale of %s on %d columns of %d radii.',
                 coeffs.name, len(keys), r_lattice.size)

  with onp.errstate(divide='ignore', invalid='ignore'):
    at_zero = 1.0 / st.sigma_tilde(onp.zeros(theta_lattice.size),
                                   theta_lattice) ** 2
  zero_rate = float(onp.mean(onp.nan_to_num(at_zero, nan=0.0, posinf=0.0)))
  return dataclasses.replace(st, zero_rate=zero_rate)


@dataclasses.dataclass(frozen=True, eq=False)
class ClockPair:
  """The stochastic clock of a source path and its inverse.

  Attributes:
   clock: SamplePath of kind 'clock' on the source grid, Q(0) = 0.
   inverse: T(t) on the target grid, NaN where the clock ran out.
   target_grid: the TimeGrid of the inverse.
  """
  clock: drivers.SamplePath
  inverse: onp.ndarray
  target_grid: drivers.TimeGrid

  @property
  def underrun(self) -> onp.ndarray:
    """Whether each path's clock ends at or before the target horizon."""
    return onp.atleast_1d(self.clock.terminal <= self.target_grid.t_end)

  @property
  def required_factor(self) -> float:
    ends = onp.maximum(onp.atleast_1d(self.clock.terminal), 1e-300)
    return float(onp.max(self.target_grid.t_end / ends))

  def check(self):
    """Raises ClockUnderrun naming the path with the shortest clock."""
    if onp.any(self.underrun):
      worst = int(onp.argmin(onp.atleast_1d(self.clock.terminal)))
      raise errors.ClockUnderrun(
          f'Stochastic clock reaches {float(onp.min(self.clock.terminal)):g} '
          f'< {self.target_grid.t_end:g}', self.required_factor,
          path_index=worst, step=self.clock.grid.n_steps)


def invert_clock(values: onp.ndarray, grid: drivers.TimeGrid,
                 targets: onp.ndarray) -> onp.ndarray:
  """Right continuous inverse inf{v : Q(v) > t} of piecewise linear clocks.

  Args:
    values: clock values [..., n_steps + 1], nondecreasing from 0.
    grid: the source TimeGrid.
    targets: the times t to invert, [m].

  Returns:
    [..., m] inverse times, NaN where Q never exceeds t.
  """
  values = onp.atleast_2d(values)
  targets = onp.asarray(targets, onp.float64)
  result = onp.full((values.shape[0], targets.size), onp.nan)
  last = values.shape[-1] - 1
  for i, clock in enumerate(values):
    k = onp.searchsorted(clock, targets, side='right')
    valid = k <= last
    k = onp.clip(k, 1, last)
    lower, upper = clock[k - 1], clock[k]
    frac = (targets - lower) / onp.where(upper > lower, upper - lower, 1.0)
    result[i] = onp.where(valid, (k - 1 + frac) * grid.dt, onp.nan)
  return result


def stochastic_clock(x: unfolding.WalshPath, st: ScaleTransform,
                     target_grid: drivers.TimeGrid) -> ClockPair:
  """Q(t_k) = sum_{j < k} dt / sigma_tilde^2(|X(t_j)|, arg X(t_j))."""
  rate = st.inverse_rate(x.radial, x.angle)
  increments = rate[..., :-1] * x.grid.dt
  values = onp.concatenate(
      [onp.zeros(increments.shape[:-1] + (1,)),
       onp.cumsum(increments, axis=-1)], axis=-1)
  inverse = invert_clock(values, x.grid, target_grid.times)
  if not x.is_batch:
    inverse = inverse[0]
  return ClockPair(drivers.SamplePath(x.grid, values, 'clock'), inverse,
                   target_grid)


def clock_consistency(pair: ClockPair) -> float:
  """max |T(Q(t_k)) - t_k| over the grid points where Q increases."""
  values = onp.atleast_2d(pair.clock.values)
  grid = pair.clock.grid
  gap = 0.0
  for clock in values:
    increasing = onp.flatnonzero(onp.diff(clock) > 0)
    if not increasing.size:
      continue
    back = invert_clock(clock, grid, clock[increasing])[0]
    gap = max(gap, float(onp.max(onp.abs(back - grid.times[increasing]))))
  return gap


def _relabel(ids: onp.ndarray) -> onp.ndarray:
  """Dense excursion labels in time order, a new one at every change."""
  previous = onp.concatenate(
      [onp.full(ids.shape[:-1] + (1,), -1), ids[..., :-1]], axis=-1)
  starts = (ids >= 0) & (ids != previous)
  return onp.where(ids >= 0, onp.cumsum(starts, axis=-1) - 1, -1)


def _resample(x: unfolding.WalshPath, inverse: onp.ndarray,
              st: ScaleTransform, target_grid: drivers.TimeGrid,
              localtime_factor: float) -> unfolding.WalshPath:
  """Reads a batch of source paths at the times inverse and maps by q."""
  last = x.grid.n_steps
  u = inverse / x.grid.dt
  k0 = onp.clip(onp.floor(u), 0, last).astype(int)
  k1 = onp.minimum(k0 + 1, last)
  frac = onp.clip(u - k0, 0.0, 1.0)
  take = lambda arr, k: onp.take_along_axis(arr, k, axis=-1)

  r0, r1 = take(x.radial, k0), take(x.radial, k1)
  id0, id1 = take(x.excursion_id, k0), take(x.excursion_id, k1)
  a0, a1 = take(x.angle, k0), take(x.angle, k1)
  same = (id0 >= 0) & (id0 == id1)
  nearer = frac >= 0.5
  source_radius = onp.where(same, r0 + frac * (r1 - r0),
                            onp.where(nearer, r1, r0))
  angle = onp.where(same | ~nearer, a0, a1)
  ids = onp.where(same | ~nearer, id0, id1)

  radial = onp.zeros(source_radius.shape)
  away = source_radius > 0
  radial[away] = st.q(source_radius[away], angle[away])
  ids = _relabel(onp.where(radial > 0, ids, -1))
  angle = onp.where(ids >= 0, angle, onp.nan)

  lt = None
  if x.localtime is not None:
    l0, l1 = take(x.localtime, k0), take(x.localtime, k1)
    lt = localtime_factor * (l0 + frac * (l1 - l0))
  return unfolding.WalshPath(target_grid, radial, angle, ids, lt)


def localtime_factor(st: ScaleTransform,
                     mu: Optional[measures.SpinningMeasure] = None) -> float:
  """int q'_theta(0+) nu(d theta), or its lattice average without mu."""
  if mu is None:
    return float(onp.mean(st.q_prime_at_zero(st.theta_lattice)))
  return measures.integrate(mu, lambda t: float(st.q_prime_at_zero(t)),
                            breakpoints=st.coeffs.angular_breakpoints)


def time_change_walsh(x: unfolding.WalshPath,
                      coeffs,
                      st: ScaleTransform,
                      target_grid: drivers.TimeGrid,
                      mu: Optional[measures.SpinningMeasure] = None
                     ) -> unfolding.WalshPath:
  """Rescales and time changes a Walsh Brownian motion.

  Y(t) has norm q(|X(T(t))|, arg X(T(t))) and ray arg X(T(t)). The source is
  read by linear interpolation inside excursions and at the nearer grid point
  across a zero, so zeros of X stay exact zeros of Y.

  Args:
    x: the source Walsh Brownian motion (one path or a batch).
    coeffs: the AngularCoefficients of st.
    st: the ScaleTransform.
    target_grid: grid of Y.
    mu: the spinning measure of x, used to rescale its local time.

  Returns:
    The WalshPath Y on target_grid.

  Raises:
   ClockUnderrun if a clock does not exceed target_grid.t_end.
  """
  if isinstance(coeffs, AngularCoefficients) and st.coeffs != coeffs:
    raise errors.ArgumentError(
        f'Scale of {st.coeffs.name} used with coefficients {coeffs.name}.')
  batch = x.as_batch()
  clock = stochastic_clock(batch, st, target_grid)
  clock.check()
  y = _resample(batch, clock.inverse, st, target_grid,
                localtime_factor(st, mu))
  return y if x.is_batch else y.path(0)


def default_inflation(coeffs: AngularCoefficients, st: ScaleTransform,
                      radius: float, horizon: float) -> float:
  """Source horizon factor 1.2 max sigma_tilde^2 over reachable radii."""
  angles = st.theta_lattice
  probe, theta = onp.meshgrid(
      onp.linspace(0.0, radius + 4.0 * math.sqrt(horizon), 65), angles)
  a_max = float(onp.max(onp.asarray(coeffs.a(probe, theta), onp.float64)))
  reach = radius + 3.0 * math.sqrt(a_max * horizon)
  r, theta = onp.meshgrid(onp.linspace(0.0, reach, 129)[1:], angles)
  with onp.errstate(over='ignore', invalid='ignore'):
    squared = st.p_prime(r, theta) ** 2 * onp.asarray(coeffs.a(r, theta),
                                                     onp.float64)
  squared = squared[onp.isfinite(squared)]
  factor = INFLATION_MARGIN * (float(onp.max(squared)) if squared.size
                               else MAX_INFLATION)
  return float(onp.clip(factor, 1.0 / MAX_INFLATION, MAX_INFLATION))


def source_point(st: ScaleTransform, y0) -> Tuple[float, float]:
  """Start (p(|y0|), arg y0) of the source Walsh Brownian motion."""
  radius, theta = utils.polar(y0)
  if not radius > 0:
    return ORIGIN
  start = float(st.p(onp.array([radius]), onp.array([theta]))[0])
  return (start * math.cos(theta), start * math.sin(theta))


def source_grid(target_grid: drivers.TimeGrid,
                factor: float) -> drivers.TimeGrid:
  """Grid with the target dt over a horizon inflated by factor."""
  n_source = int(math.ceil(target_grid.n_steps * factor))
  return drivers.TimeGrid(n_source * target_grid.dt, n_source)


def _time_change_keys(st, mu, start, target_grid, keys, factor, lt_factor):
  """Time changes the source paths of keys, skipping clocks that run out."""
  x = simulate_walsh_brownian(mu, start, source_grid(target_grid, factor),
                              keys)
  clock = stochastic_clock(x, st, target_grid)
  short = clock.underrun
  good = ~short
  y = None
  if onp.any(good):
    y = _resample(x.take(good), clock.inverse[good], st, target_grid,
                  lt_factor)
  return y, short, clock.required_factor


def _fill(first: Optional[unfolding.WalshPath],
          second: unfolding.WalshPath,
          second_rows: onp.ndarray) -> unfolding.WalshPath:
  """Interleaves two batches, second taking the rows where second_rows."""

  def merge(name):
    rows = getattr(second, name)
    if rows is None:
      return None
    merged = onp.empty((second_rows.size,) + rows.shape[1:], rows.dtype)
    merged[second_rows] = rows
    if first is not None:
      merged[~second_rows] = getattr(first, name)
    return merged

  return unfolding.WalshPath(second.grid, merge('radial'), merge('angle'),
                             merge('excursion_id'), merge('localtime'))


def simulate_time_changed_walsh(coeffs,
                                st: ScaleTransform,
                                mu: measures.SpinningMeasure,
                                y0,
                                target_grid: drivers.TimeGrid,
                                rng: np.ndarray,
                                inflation: Optional[float] = None
                               ) -> unfolding.WalshPath:
  """Angle dependent Walsh diffusion built from a Walsh Brownian motion.

  The source starts from (p(|y0|), arg y0) and runs on the target dt over a
  horizon inflated by `inflation`. Paths whose clock runs out are simulated
  again, once, over a longer horizon. Noise being keyed per step, the longer
  paths extend the shorter ones.

  Args:
    coeffs: the AngularCoefficients.
    st: their ScaleTransform.
    mu: the spinning measure.
    y0: the planar starting point.
    target_grid: the TimeGrid of the result.
    rng: one key or a stack of keys.
    inflation: source horizon factor, default_inflation when None.

  Returns:
    The WalshPath, batched iff rng is a stack of keys.

  Raises:
   ClockUnderrun when a clock still runs out after the retry.
  """
  coeffs = as_angular(coeffs)
  keys, single = utils.as_key_batch(rng)
  radius, _ = utils.polar(y0)
  start = source_point(st, y0)
  factor = inflation or default_inflation(coeffs, st, radius,
                                          target_grid.t_end)
  lt_factor = localtime_factor(st, mu)

  y, short, required = _time_change_keys(st, mu, start, target_grid, keys,
                                         factor, lt_factor)
  if onp.any(short):
    longer = factor * float(onp.clip((INFLATION_MARGIN * required) ** 2, 2.0,
                                     MAX_INFLATION))
    logging.warning('%d of %d clocks ran out at inflation %.3g, retrying them '
                    'at %.3g.', int(short.sum()), short.size, factor, longer)
    retried, still_short, required = _time_change_keys(
        st, mu, start, target_grid, keys[short], longer, lt_factor)
    if onp.any(still_short):
      index = int(onp.flatnonzero(short)[onp.argmax(still_short)])
      raise errors.ClockUnderrun(
          f'Stochastic clock still runs out at inflation {longer:.3g}',
          required, path_index=index)
    y = _fill(y, retried, short)
  return y.path(0) if single else y


def _split_rng(rng):
  keys, single = utils.as_key_batch(rng)
  split = utils.split_keys(keys)
  return split[:, 0], split[:, 1], single


def simulate_walsh_diffusion(coeffs: drivers.RadialCoefficients,
                             mu: measures.SpinningMeasure,
                             x0,
                             grid: drivers.TimeGrid,
                             rng: np.ndarray) -> unfolding.WalshPath:
  """Walsh diffusion with radial coefficients, by fold and unfold.

  Args:
    coeffs: the RadialCoefficients of the radial part.
    mu: the spinning measure.
    x0: the planar starting point.
    grid: the TimeGrid.
    rng: one key or a stack of keys, each split into a driver key and an
      angle key.

  Returns:
    The WalshPath, carrying the regulator as local time, the unreflected
    driver and its quadratic variation.
  """
  if isinstance(coeffs, AngularCoefficients):
    raise errors.ArgumentError(
        'Angle dependent coefficients need simulate_angular_walsh_diffusion '
        'or simulate_time_changed_walsh.')
  coeffs.validate()
  radius, theta = utils.polar(x0)
  driver_keys, angle_keys, single = _split_rng(rng)
  s, lam, v = drivers.simulate_reflected_diffusion(coeffs, radius, grid,
                                                   driver_keys)
  w = unfolding.unfold(
      s, mu, theta, angle_keys, localtime=lam, driver=v,
      driver_variation=drivers.driver_quadratic_variation(s, coeffs))
  return w.path(0) if single else w


def simulate_walsh_brownian(mu: measures.SpinningMeasure,
                            x0,
                            grid: drivers.TimeGrid,
                            rng: np.ndarray,
                            sigma: float = 1.0) -> unfolding.WalshPath:
  return simulate_walsh_diffusion(families.brownian(float(sigma)), mu, x0,
                                  grid, rng)


@functools.partial(jax.jit, static_argnums=(0, 1))
def _per_ray_paths(drift, dispersion, r0, theta0, count0, dt, normals, rays):
  """Reflected Euler scheme whose coefficients follow the current ray.

  rays [n, m] holds the ray of every excursion, in order. An excursion
  started from 0 takes the ray of index `count`, the number of excursions
  started so far.
  """

  def one_path(start, theta_start, count_start, noise, table):
    last = table.shape[0] - 1

    def step(carry, z):
      v, lam, theta, count = carry
      s = v + lam
      at_zero = s <= 0
      theta = np.where(at_zero, table[np.minimum(count, last)], theta)
      v = v + drift(s, theta) * dt + dispersion(s, theta) * np.sqrt(dt) * z
      lam = np.maximum(lam, -v)
      count = count + (at_zero & (v + lam > 0))
      return (v, lam, theta, count), (v, lam, theta)

    lam0 = np.maximum(-start, 0.0)
    _, (vs, lams, thetas) = jax.lax.scan(
        step, (start, lam0, theta_start, count_start), noise)
    return vs, lams, thetas

  return jax.vmap(one_path)(r0, theta0, count0, normals, rays)


def simulate_angular_walsh_diffusion(coeffs: AngularCoefficients,
                                     mu: measures.SpinningMeasure,
                                     x0,
                                     grid: drivers.TimeGrid,
                                     rng: np.ndarray) -> unfolding.WalshPath:
  """Direct per-ray Euler scheme for angle dependent coefficients.

  A ray is drawn from mu whenever the folded radial part leaves 0, and the
  radial step uses b(S, theta), sigma(S, theta) of the current ray. Rays are
  drawn as in unfolding.unfold, so that angle free coefficients give the
  same paths as simulate_walsh_diffusion.

  Args:
    coeffs: the AngularCoefficients.
    mu: the spinning measure.
    x0: the planar starting point.
    grid: the TimeGrid.
    rng: one key or a stack of keys.

  Returns:
    The WalshPath, carrying the regulator, the driver and <U>.

  Raises:
   NumericalBlowup on non finite values.
  """
  coeffs = as_angular(coeffs)
  coeffs.validate()
  radius, theta = utils.polar(x0)
  driver_keys, angle_keys, single = _split_rng(rng)
  n = driver_keys.shape[0]
  rays = measures.angles_from_uniforms(
      mu, measures.uniform_draws(angle_keys, 0, grid.n_steps // 2 + 2))
  starts_away = radius > 0
  r0 = np.full((n,), radius, dtype=np.float64)
  theta0 = np.full((n,), theta if starts_away else 0.0, dtype=np.float64)
  count0 = np.full((n,), int(starts_away), dtype=np.int32)
  vs, lams, thetas = _per_ray_paths(
      coeffs.b, coeffs.sigma, r0, theta0, count0, grid.dt,
      drivers.normals(driver_keys, grid.n_steps), np.asarray(rays))
  vs, lams, thetas = onp.asarray(vs), onp.asarray(lams), onp.asarray(thetas)
  drivers.check_finite(vs, f'Per ray scheme {coeffs.name}')

  column = lambda value: onp.full((n, 1), value, dtype=onp.float64)
  v = onp.concatenate([column(radius), vs], axis=1)
  lam = onp.concatenate([column(0.0), lams], axis=1)
  s = v + lam
  start_angle = theta if starts_away else onp.nan
  used = onp.concatenate([column(start_angle), thetas], axis=1)
  angle = onp.where(s > 0, utils.wrap_angle(used), onp.nan)
  dispersion = onp.broadcast_to(
      onp.asarray(coeffs.a(s[:, :-1], thetas), onp.float64), thetas.shape)
  variation = onp.concatenate(
      [column(0.0), onp.cumsum(dispersion * grid.dt, axis=1)], axis=1)
  w = unfolding.WalshPath(grid, s, angle, unfolding.excursion_ids(s), lam, v,
                          variation)
  return w.path(0) if single else w


def exit_angles(w: unfolding.WalshPath,
                epsilon: float,
                window: Optional[Tuple[float, float]] = None) -> onp.ndarray:
  """Rays at the first exits from the band [0, eps) after each visit to 0."""
  if not epsilon > 0:
    raise errors.ArgumentError(f'epsilon should be positive, got {epsilon}.')
  exits = localtime.first_exits(onp.atleast_2d(w.radial), epsilon)
  if window is not None:
    lower, upper = window
    times = w.grid.times
    exits &= (times >= lower) & (times <= upper)
  return onp.atleast_2d(w.angle)[exits]


def estimate_spinning_measure(
    w: unfolding.WalshPath,
    epsilon: float,
    window: Optional[Tuple[float, float]] = None
) -> measures.EmpiricalMeasure:
  """Empirical law of the exit rays, pooled over a batch.

  Args:
    w: a WalshPath, one path or a batch.
    epsilon: the exit level.
    window: optional (t0, t1) restricting the exit times.

  Returns:
    The EmpiricalMeasure of the exit rays.

  Raises:
   InsufficientData when no excursion reaches epsilon.
  """
  angles = exit_angles(w, epsilon, window)
  if not angles.size:
    raise errors.InsufficientData(
        f'No excursion from 0 reaches epsilon={epsilon} in window {window}.')
  logging.debug('Estimated the spinning measure from %d exits.', angles.size)
  return measures.EmpiricalMeasure.from_samples(angles)


def mixed_measure_experiment(mu1: measures.SpinningMeasure,
                             mu2: measures.SpinningMeasure,
                             switch_point,
                             grid: drivers.TimeGrid,
                             rng: np.ndarray,
                             tolerance: Optional[float] = None):
  """Walsh Brownian motion switching spinning measure at a given point.

  The path follows mu1 from the origin until it first comes within tree
  distance `tolerance` of switch_point, then follows mu2. The excursion in
  progress at the switch keeps its ray and its id, and the driver and local
  time continue without jumps.

  Args:
    mu1: the spinning measure before the switch.
    mu2: the spinning measure after the switch.
    switch_point: a planar point away from the origin.
    grid: the TimeGrid.
    rng: a single key.
    tolerance: tree distance tolerance, 2 sqrt(dt) by default.

  Returns:
    A pair (walsh path, switch index).

  Raises:
   ArgumentError if switch_point is the origin, SwitchNotReached if the path
    never comes close to it.
  """
  radius, theta = utils.polar(switch_point)
  if theta is None:
    raise errors.ArgumentError('The switch point should not be the origin.')
  if onp.ndim(rng) != 1:
    raise errors.ArgumentError('mixed_measure_experiment expects one key.')
  tolerance = 2.0 * math.sqrt(grid.dt) if tolerance is None else tolerance
  keys = jax.random.split(rng, 4)
  coeffs = families.brownian(1.0)

  s1, lam1, v1 = drivers.simulate_reflected_diffusion(coeffs, 0.0, grid,
                                                      keys[0])
  w1 = unfolding.unfold(s1, mu1, None, keys[1])
  distance = unfolding.tree_distance_polar(w1.radial, w1.angle, radius, theta)
  hits = onp.flatnonzero(distance <= tolerance)
  if not hits.size:
    raise errors.SwitchNotReached(
        f'The path never comes within {tolerance:g} of {switch_point}',
        path_index=0)
  k = int(hits[0])
  logging.info('Switching spinning measure at step %d (t=%g).', k,
               grid.times[k])
  if k == grid.n_steps:
    return unfolding.WalshPath(grid, w1.radial, w1.angle, w1.excursion_id,
                               lam1.values, v1.values, grid.times), k

  rest = grid.n_steps - k
  r_k, theta_k = w1.radial[k], w1.angle[k]
  s2, lam2, v2 = drivers.simulate_reflected_diffusion(
      coeffs, r_k, drivers.TimeGrid(rest * grid.dt, rest), keys[2])
  w2 = unfolding.unfold(s2, mu2, theta_k if r_k > 0 else None, keys[3])

  ids1 = w1.excursion_id[:k + 1]
  offset = ids1[k] if r_k > 0 else (ids1.max() + 1 if ids1.size else 0)
  ids2 = onp.where(w2.excursion_id >= 0, w2.excursion_id + offset, -1)
  join = lambda first, second: onp.concatenate([first[:k + 1], second[1:]])
  return unfolding.WalshPath(
      grid,
      join(w1.radial, w2.radial),
      join(w1.angle, w2.angle),
      join(w1.excursion_id, ids2),
      join(lam1.values, lam1.values[k] + lam2.values),
      join(v1.values, v1.values[k] + v2.values - r_k),
      grid.times), k


def angular_cells(mu: measures.SpinningMeasure,
                   weight: Callable[[float], float],
                   breakpoints: Sequence[float],
                   theta: onp.ndarray,
                   n_bins: int):
  """Observed counts and expected masses of weight(theta) nu(d theta).

  Atoms are cells of their own, the density part is binned regularly.
  """
  theta = theta[onp.isfinite(theta)]
  observed, expected = [], []
  matched = onp.zeros(theta.shape, dtype=bool)
  for angle, mass in mu.atoms:
    hit = onp.abs(theta - angle) <= measures.ANGLE_TOL
    observed.append(int(hit.sum()))
    expected.append(mass * float(weight(angle)))
    matched |= hit
  if not mu.is_atomic:
    edges = onp.linspace(0.0, utils.TWO_PI, n_bins + 1)
    counts = onp.histogram(theta[~matched], edges)[0]
    for lower, upper, count in zip(edges[:-1], edges[1:], counts):
      atoms = sum(w * float(weight(t)) for t, w in mu.atoms_in((lower, upper)))
      observed.append(int(count))
      expected.append(measures.integrate(mu, weight, (lower, upper),
                                         breakpoints) - atoms)
  return onp.array(observed), onp.array(expected)


def polar_drift_experiment(rate,
                           mu: measures.SpinningMeasure,
                           grid: drivers.TimeGrid,
                           n_paths: int,
                           seed: int = 0,
                           method: str = 'auto',
                           sim: Optional[simulator.Simulator] = None,
                           n_bins: int = 20,
                           alpha: float = metrics.DEFAULT_ALPHA
                          ) -> metrics.Report:
  """Walsh Brownian motion with polar drift -lambda(theta) near stationarity.

  The terminal law is compared with C exp(-2 lambda(theta) r) / lambda(theta)
  dr nu(d theta), C = (int nu(d theta) / (2 lambda^2))^-1: given the ray,
  the radius is exponential of rate 2 lambda(theta), and the ray has law
  C nu(d theta) / (2 lambda(theta)^2).

  Args:
    rate: a positive number or pieces [[lower, upper, lambda], ...].
    mu: the spinning measure.
    grid: the TimeGrid, t_end large compared to 1 / lambda_min^2.
    n_paths: number of paths.
    seed: master seed, used when sim is None.
    method: 'radial' (constant rate only), 'time_change', 'direct' (per-ray
      Euler) or 'auto', which picks 'radial' for a constant rate and
      'time_change' otherwise.
    sim: the Simulator running the batches.
    n_bins: number of radial bins.
    alpha: significance level of the chi-square tests.

  Returns:
    The Report.

  Raises:
   DomainError for non positive rates, ArgumentError for unknown methods.
  """
  rates = families.PiecewiseAngular.coerce(rate)
  coeffs = families.polar_drift(rates)
  constant = len(set(rates.values)) == 1
  if method == 'auto':
    method = 'radial' if constant else 'time_change'
  lam_min = min(rates.values)
  if grid.t_end < 1.0 / lam_min**2:
    logging.warning('T=%g is short compared to 1 / lambda_min^2 = %g: the '
                    'terminal law may be far from stationary.', grid.t_end,
                    1.0 / lam_min**2)
  sim = sim or simulator.Simulator(seed=seed)

  if method == 'radial':
    if not constant:
      raise errors.ArgumentError('The radial method needs a constant rate.')
    radial = families.constant_drift(-rates.values[0], 1.0)
    simulate = functools.partial(simulate_walsh_diffusion, radial)
  elif method == 'direct':
    simulate = functools.partial(simulate_angular_walsh_diffusion, coeffs)
  elif method == 'time_change':
    st = scale_transform(coeffs)
    simulate = functools.partial(simulate_time_changed_walsh, coeffs, st)
  else:
    raise errors.ArgumentError(f'Unknown method {method!r}.')
  r, theta = sim.map_paths(
      lambda keys: simulate(mu, ORIGIN, grid, keys).terminal_points(),
      n_paths, POLAR_DRIFT_STREAM)

  breakpoints = rates.breakpoints
  normalizer = 1.0 / measures.integrate(
      mu, lambda t: 1.0 / (2.0 * rates(t)**2), breakpoints=breakpoints)
  weight = lambda t: normalizer / (2.0 * rates(t)**2)
  masses = [(value, normalizer / (2.0 * value**2) *
             measures.nu_mass(mu, (lower, upper)))
            for lower, upper, value in rates.pieces]
  expected_mean = sum(m / (2.0 * value) for value, m in masses)

  mean = float(onp.mean(r))
  stderr = float(onp.std(r, ddof=1) / math.sqrt(r.size))
  rel_error = abs(mean - expected_mean) / expected_mean
  report = metrics.Report()
  report.statistics.update(
      method=method, radial_mean=mean, radial_mean_stderr=stderr,
      radial_mean_expected=expected_mean, radial_mean_rel_error=rel_error,
      normalizing_constant=normalizer, at_origin=int(onp.sum(r == 0)))
  report.tests['radial_mean'] = metrics.TestResult(
      rel_error < 0.03, details={'mean': mean, 'expected': expected_mean,
                                 'stderr': stderr})

  upper = -math.log(1e-3) / (2.0 * lam_min)
  edges = onp.linspace(0.0, upper, n_bins)
  counts = onp.bincount(onp.searchsorted(edges, r, side='right') - 1,
                        minlength=n_bins)
  cdf = lambda x: sum(m * (1.0 - onp.exp(-2.0 * value * x))
                      for value, m in masses)
  probabilities = onp.diff(onp.append(cdf(edges), 1.0))
  report.tests['radial_chi_square'] = metrics.chi_square_gof(
      counts, probabilities, alpha)

  observed, expected = angular_cells(mu, weight, breakpoints, theta[r > 0],
                                      n_bins)
  report.tests['angular_chi_square'] = metrics.chi_square_gof(
      observed, expected, alpha)
  report.histograms['radial'] = metrics.histogram(r, n_bins, (0.0, upper))
  report.histograms['angular'] = metrics.histogram(theta, 36,
                                                   (0.0, utils.TWO_PI))
  return report


def _square_root_radial(w: unfolding.WalshPath) -> unfolding.WalshPath:
  return unfolding.WalshPath(w.grid, onp.sqrt(w.radial), w.angle,
                             w.excursion_id)


def bessel_driver_experiment(delta,
                             mu: measures.SpinningMeasure,
                             grid: drivers.TimeGrid,
                             n_paths: int,
                             seed: int = 0,
                             epsilons: Sequence[float] = (0.04, 0.02, 0.01),
                             sim: Optional[simulator.Simulator] = None,
                             method: str = 'auto',
                             keep_paths: int = 8):
  """Bessel type Walsh diffusion, which accumulates no local time at 0.

  The squared radius solves dR = delta(theta) dt + 2 sqrt(R) dW. The
  downcrossing estimates eps N(T, eps) of S = sqrt(R) are reported for every
  eps and should decrease towards 0 with eps.

  Args:
    delta: a dimension in [1.05, 1.95], or pieces [[lower, upper, delta]].
    mu: the spinning measure.
    grid: the TimeGrid.
    n_paths: number of paths.
    seed: master seed, used when sim is None.
    epsilons: the band widths of the sweep.
    sim: the Simulator running the batches.
    method: 'radial' (constant delta only), 'time_change', 'direct' or
      'auto'.
    keep_paths: number of paths returned.

  Returns:
    A pair (WalshPath of the first keep_paths paths, with norm S, Report).

  Raises:
   DomainError if a dimension is out of range.
  """
  deltas = families.PiecewiseAngular.coerce(delta)
  for value in deltas.values:
    if not 1.0 + BESSEL_MARGIN <= value <= 2.0 - BESSEL_MARGIN:
      raise errors.DomainError(
          f'The dimension should lie in [{1 + BESSEL_MARGIN}, '
          f'{2 - BESSEL_MARGIN}], got {value}.')
  constant = len(set(deltas.values)) == 1
  if method == 'auto':
    method = 'radial' if constant else 'time_change'
  sim = sim or simulator.Simulator(seed=seed)
  epsilons = sorted((float(e) for e in epsilons), reverse=True)
  for epsilon in epsilons:
    localtime.check_epsilon(epsilon, 1.0, grid.dt)

  if method == 'radial':
    if not constant:
      raise errors.ArgumentError('The radial method needs a constant delta.')
    squared = families.squared_bessel(deltas.values[0])

    def paths(keys):
      driver_keys, angle_keys, _ = _split_rng(keys)
      folded = drivers.simulate_reflected_diffusion(squared, 0.0, grid,
                                                    driver_keys).folded
      return unfolding.unfold(folded.with_values(onp.sqrt(folded.values)), mu,
                              None, angle_keys)
  else:
    coeffs = families.bessel(deltas)
    if method == 'time_change':
      st = scale_transform(coeffs)
      simulate = functools.partial(simulate_time_changed_walsh, coeffs, st)
    elif method == 'direct':
      simulate = functools.partial(simulate_angular_walsh_diffusion, coeffs)
    else:
      raise errors.ArgumentError(f'Unknown method {method!r}.')
    paths = lambda keys: _square_root_radial(simulate(mu, ORIGIN, grid, keys))

  def terminal_counts(keys):
    radial = paths(keys).radial
    return onp.stack([localtime.downcrossing_counts(radial, e)[:, -1]
                      for e in epsilons], axis=1)

  counts = sim.map_paths(terminal_counts, n_paths, BESSEL_STREAM)
  estimates = counts * onp.array(epsilons)
  means = estimates.mean(axis=0)
  stderrs = estimates.std(axis=0, ddof=1) / math.sqrt(n_paths)
  sweep = pd.DataFrame({'epsilon': epsilons, 'mean': means,
                        'stderr': stderrs})

  report = metrics.Report()
  report.statistics.update(
      method=method, delta=deltas.to_list(),
      sweep=sweep.to_dict(orient='records'))
  report.tests['monotone_decreasing'] = metrics.TestResult(
      bool(onp.all(onp.diff(means) < 0)),
      details={'means': means.tolist(), 'epsilons': epsilons})
  report.frames['sweep'] = sweep
  sample = paths(sim.path_keys(BESSEL_STREAM, 0, min(keep_paths, n_paths)))
  return sample, report
