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
"""Estimators of the local time at the origin.

All estimators use the right local time normalization

  L(T) = lim 1 / (2 eps) int_0^T 1{0 <= X < eps} d<X>,

for which reflected Brownian motion has L = Lambda, the Skorokhod regulator.
"""

import dataclasses
from typing import Any, Dict, NamedTuple, Optional, Union

from absl import logging
import numpy as onp

from walsh_sim import drivers
from walsh_sim import errors
from walsh_sim import measures
from walsh_sim import unfolding

METHODS = ('downcrossing', 'occupation', 'tanaka', 'regulator')


@dataclasses.dataclass(frozen=True, eq=False)
class LocalTimeEstimate:
  """A local time path produced by one of the estimators.

  Attributes:
   method: 'downcrossing', 'occupation', 'tanaka' or 'regulator'.
   epsilon: the band width, None for band free methods.
   values: SamplePath of kind 'localtime', nondecreasing from 0.
   raw: the Tanaka series before its running max, if any.
   counts: integer downcrossing counts N(t_k, eps), if any.
  """
  method: str
  epsilon: Optional[float]
  values: drivers.SamplePath
  raw: Optional[onp.ndarray] = None
  counts: Optional[onp.ndarray] = None

  @property
  def terminal(self):
    return self.values.terminal


def _check_epsilon(epsilon: float):
  if not epsilon > 0:
    raise errors.ArgumentError(f'epsilon should be positive, got {epsilon}.')


def _last_index(mask: onp.ndarray) -> onp.ndarray:
  """For each k, the last j <= k where mask holds, -1 if none."""
  index = onp.broadcast_to(onp.arange(mask.shape[-1]), mask.shape)
  return onp.maximum.accumulate(onp.where(mask, index, -1), axis=-1)


def _cumulative(increments: onp.ndarray) -> onp.ndarray:
  """Cumulative sums starting from 0: [..., n] -> [..., n + 1]."""
  head = onp.zeros(increments.shape[:-1] + (1,))
  return onp.concatenate([head, onp.cumsum(increments, axis=-1)], axis=-1)


def _shift(arr: onp.ndarray, fill) -> onp.ndarray:
  head = onp.full(arr.shape[:-1] + (1,), fill, dtype=arr.dtype)
  return onp.concatenate([head, arr[..., :-1]], axis=-1)


def downcrossing_counts(values, epsilon: float) -> onp.ndarray:
  """Counts completed trips 0 -> [eps, inf) -> 0 up to every grid point.

  A trip starts at an exact zero, reaches eps at a later index and is
  completed at the first exact zero after that.

  Args:
    values: nonnegative path(s), [..., n_steps + 1].
    epsilon: the band width.

  Returns:
    int array N(t_k, eps) of the same shape.
  """
  values = onp.asarray(values)
  last_zero = _last_index(values == 0)
  last_high = _last_index(values >= epsilon)
  previous_zero = _shift(last_zero, -1)
  previous_high = _shift(last_high, -1)
  completed = ((values == 0) & (previous_zero >= 0) &
               (previous_high > previous_zero))
  return onp.cumsum(completed, axis=-1)


def first_exits(values, epsilon: float) -> onp.ndarray:
  """Marks the first grid points at or above eps after each visit to 0."""
  values = onp.asarray(values)
  high = values >= epsilon
  previous_zero = _shift(_last_index(values == 0), -1)
  previous_high = _shift(_last_index(high), -1)
  return high & (previous_zero >= 0) & (previous_high < previous_zero)


def lt_downcrossing(s: drivers.SamplePath,
                    epsilon: float) -> LocalTimeEstimate:
  """Local time as eps times the number of completed downcrossings."""
  _check_epsilon(epsilon)
  counts = downcrossing_counts(s.values, epsilon)
  return LocalTimeEstimate('downcrossing', epsilon,
                           s.with_values(epsilon * counts, 'localtime'),
                           counts=counts)


def lt_tanaka(s: drivers.SamplePath, u: drivers.SamplePath) -> LocalTimeEstimate:
  """Tanaka estimate S(t) - S(0) - sum 1{S(t_k) > 0} (U(t_k+1) - U(t_k)).

  Args:
    s: the folded path.
    u: the driver whose fold is s.

  Returns:
    The running max of the Tanaka series, which is kept as `raw`.

  Raises:
   ArgumentError if s and u do not share the same grid and shape.
  """
  drivers.check_same_grid(s, u)
  if s.values.shape != u.values.shape:
    raise errors.ArgumentError(
        f'Mismatched shapes {s.values.shape} and {u.values.shape}.')
  integrand = (s.values[..., :-1] > 0) * onp.diff(u.values, axis=-1)
  integral = _cumulative(integrand)
  raw = s.values - s.values[..., :1] - integral
  values = onp.maximum.accumulate(raw, axis=-1)
  return LocalTimeEstimate('tanaka', None, s.with_values(values, 'localtime'),
                           raw=raw)


def lt_occupation(s: drivers.SamplePath,
                  epsilon: float,
                  quadratic_variation: drivers.SamplePath) -> LocalTimeEstimate:
  """Occupation estimate (1 / 2eps) sum 1{0 <= S(t_k) < eps} d<S>(t_k).

  A step starting exactly at 0 is only counted when it moves into [0, inf).
  Coordinates of a Walsh path sit at 0 on every visit to the origin, and
  their next step belongs to whichever ray the following excursion takes.

  Args:
    s: the path.
    epsilon: the band width.
    quadratic_variation: <S> on the same grid.

  Returns:
    The LocalTimeEstimate.
  """
  _check_epsilon(epsilon)
  drivers.check_same_grid(s, quadratic_variation)
  increments = onp.diff(quadratic_variation.values, axis=-1)
  left, right = s.values[..., :-1], s.values[..., 1:]
  in_band = (left >= 0) & (left < epsilon) & ~((left == 0) & (right < 0))
  values = _cumulative(in_band * increments) / (2 * epsilon)
  return LocalTimeEstimate('occupation', epsilon,
                           s.with_values(values, 'localtime'))


def lt_regulator(lam: drivers.SamplePath) -> LocalTimeEstimate:
  """The Skorokhod regulator, reported as a local time estimate."""
  return LocalTimeEstimate('regulator', None,
                           lam.with_values(lam.values - lam.values[..., :1],
                                           'localtime'))


class ThinnedLocalTime(NamedTuple):
  estimate: LocalTimeEstimate
  expected: Optional[LocalTimeEstimate]
  mass: Optional[float]


def thinned_radial(w: unfolding.WalshPath,
                   angle_set: measures.AngleSet) -> onp.ndarray:
  """R^A(t_k) = |X(t_k)| 1{arg X(t_k) in A}."""
  return onp.where(angle_set.contains(w.angle), w.radial, 0.0)


def thinned_local_time(
    w: unfolding.WalshPath,
    angle_set: Union[measures.AngleSet, Any],
    epsilon: float,
    mu: Optional[measures.SpinningMeasure] = None) -> ThinnedLocalTime:
  """Downcrossing local time of the thinned process R^A.

  Args:
    w: the WalshPath.
    angle_set: an AngleSet, one interval (a, b) or a list of intervals.
    epsilon: the band width.
    mu: if given, the result also holds nu(A) times the downcrossing local
     time of |X|.

  Returns:
    A ThinnedLocalTime (estimate, expected, mass).
  """
  _check_epsilon(epsilon)
  angle_set = measures.AngleSet.coerce(angle_set)
  thinned = drivers.SamplePath(w.grid, thinned_radial(w, angle_set), 'folded')
  estimate = lt_downcrossing(thinned, epsilon)
  if mu is None:
    return ThinnedLocalTime(estimate, None, None)
  mass = angle_set.mass(mu)
  radial = lt_downcrossing(w.radial_path(), epsilon)
  expected = LocalTimeEstimate(
      'downcrossing', epsilon,
      radial.values.with_values(mass * radial.values.values))
  return ThinnedLocalTime(estimate, expected, mass)


def component(w: unfolding.WalshPath, coordinate: int) -> onp.ndarray:
  if coordinate not in (0, 1):
    raise errors.ArgumentError(f'coordinate should be 0 or 1: {coordinate}.')
  return w.x1 if coordinate == 0 else w.x2


def component_local_time(w: unfolding.WalshPath,
                         coordinate: int,
                         epsilon: Optional[float] = None,
                         method: str = 'occupation') -> LocalTimeEstimate:
  """Right local time at 0 of the coordinate process X_i.

  Args:
    w: the WalshPath.
    coordinate: 0 for X_1, 1 for X_2.
    epsilon: band width of the occupation method.
    method: 'occupation' uses the realized quadratic variation of X_i,
     'tanaka' the form X_i^+(T) - X_i^+(0) - sum 1{X_i > 0} f_i(arg X) dU
     with f_1 = cos, f_2 = sin and U the driver carried by w.

  Returns:
    The LocalTimeEstimate, which should be close to alpha_i^+ L^{|X|}.
  """
  xi = drivers.SamplePath(w.grid, component(w, coordinate), 'driver')
  if method == 'occupation':
    if epsilon is None:
      raise errors.ArgumentError('The occupation method needs epsilon.')
    return lt_occupation(xi, epsilon,
                         drivers.realized_quadratic_variation(xi))
  if method == 'tanaka':
    u = w.driver_path()
    # Away from the origin dX_i = f_i(arg X) dU, pushes only happen at 0.
    f = onp.cos if coordinate == 0 else onp.sin
    slope = onp.where(xi.values > 0, f(onp.nan_to_num(w.angle)), 0.0)
    positive = onp.maximum(xi.values, 0.0)
    raw = (positive - positive[..., :1] -
           _cumulative(slope[..., :-1] * onp.diff(u.values, axis=-1)))
    return LocalTimeEstimate(
        'tanaka', None,
        xi.with_values(onp.maximum.accumulate(raw, axis=-1), 'localtime'),
        raw=raw)
  raise errors.ArgumentError(f'Unknown component method {method!r}.')


def summarize(estimate: LocalTimeEstimate) -> Dict[str, Any]:
  """Batch summary {method, epsilon, T, mean, stderr, n_paths}."""
  terminal = onp.atleast_1d(estimate.terminal)
  n_paths = terminal.size
  stderr = (float(onp.std(terminal, ddof=1) / onp.sqrt(n_paths))
            if n_paths > 1 else float('nan'))
  return {
      'method': estimate.method,
      'epsilon': estimate.epsilon,
      'T': estimate.values.grid.t_end,
      'mean': float(onp.mean(terminal)),
      'stderr': stderr,
      'n_paths': int(n_paths),
  }


def recommended_epsilon(sigma_max: float, dt: float) -> float:
  return 3.0 * sigma_max * onp.sqrt(dt)


def check_epsilon(epsilon: float, sigma_max: float, dt: float) -> bool:
  """Warns when discrete paths are likely to jump over the band [0, eps)."""
  floor = recommended_epsilon(sigma_max, dt)
  if epsilon < floor:
    logging.warning('epsilon=%g is below 3 sigma sqrt(dt)=%g: downcrossings '
                    'will be undercounted.', epsilon, floor)
    return False
  return True
