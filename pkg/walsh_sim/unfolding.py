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
"""Excursions of folded paths and their unfolding along random rays."""

import dataclasses
from typing import List, Optional, Tuple

from absl import logging
import jax.numpy as np
import numpy as onp
import pandas as pd

from walsh_sim import drivers
from walsh_sim import errors
from walsh_sim import measures
from walsh_sim import utils

ANGLE_EQ_TOL = 1e-12


def excursion_ids(radial) -> onp.ndarray:
  """Labels excursions in time order, from 0 on each path, -1 at zeros."""
  radial = onp.asarray(radial)
  positive = radial > 0
  before = onp.zeros(positive.shape[:-1] + (1,), dtype=bool)
  previous = onp.concatenate([before, positive[..., :-1]], axis=-1)
  starts = positive & ~previous
  ids = onp.cumsum(starts, axis=-1) - 1
  return onp.where(positive, ids, -1)


@dataclasses.dataclass(frozen=True, eq=False)
class ExcursionDecomposition:
  """Zero set and maximal excursion intervals of a single folded path.

  Attributes:
   zero_indices: sorted grid indices where the path is exactly 0.
   excursions: list of inclusive index intervals (i, j), in time order. The
    position of an interval in the list is its excursion id.
  """
  zero_indices: onp.ndarray
  excursions: List[Tuple[int, int]]

  @property
  def num_excursions(self) -> int:
    return len(self.excursions)


def excursion_decompose(s: drivers.SamplePath) -> ExcursionDecomposition:
  """Splits one nonnegative path into its zeros and maximal excursions.

  Args:
    s: a single folded SamplePath.

  Returns:
    The ExcursionDecomposition.

  Raises:
   ArgumentError if s is a batch or takes negative values.
  """
  if s.is_batch:
    raise errors.ArgumentError('excursion_decompose expects a single path.')
  if onp.any(s.values < 0):
    first = int(onp.argmax(s.values < 0))
    raise errors.ArgumentError(
        f'Folded path is negative at index {first}: {s.values[first]}.')
  positive = s.values > 0
  edges = onp.diff(onp.concatenate([[0], positive.astype(int), [0]]))
  starts = onp.flatnonzero(edges == 1)
  ends = onp.flatnonzero(edges == -1) - 1
  return ExcursionDecomposition(
      zero_indices=onp.flatnonzero(~positive),
      excursions=[(int(i), int(j)) for i, j in zip(starts, ends)])


@dataclasses.dataclass(frozen=True, eq=False)
class WalshPath:
  """A planar path stored in polar form on a TimeGrid.

  Arrays have shape [n_steps + 1] for a single path, [num_paths, n_steps + 1]
  for a batch.

  Attributes:
   grid: the TimeGrid.
   radial: the norm of the path, exactly 0 on the zero set.
   angle: the ray angle in [0, 2pi), NaN (undefined) on the zero set.
   excursion_id: excursion labels, -1 on the zero set.
   localtime: optional local time at the origin of the radial part.
   driver: optional driver path U whose fold is the radial part.
   driver_variation: optional quadratic variation <U> of the driver.
  """
  grid: drivers.TimeGrid
  radial: onp.ndarray
  angle: onp.ndarray
  excursion_id: onp.ndarray
  localtime: Optional[onp.ndarray] = None
  driver: Optional[onp.ndarray] = None
  driver_variation: Optional[onp.ndarray] = None

  def __post_init__(self):
    shape = onp.shape(self.radial)
    for name in ('angle', 'excursion_id', 'localtime', 'driver',
                 'driver_variation'):
      value = getattr(self, name)
      if value is not None and onp.shape(value) != shape:
        raise errors.ArgumentError(
            f'{name} has shape {onp.shape(value)}, expecting {shape}.')
    if shape[-1] != self.grid.n_steps + 1:
      raise errors.ArgumentError(f'Shape {shape} does not match {self.grid}.')

  @property
  def is_batch(self) -> bool:
    return onp.ndim(self.radial) == 2

  @property
  def num_paths(self) -> int:
    return onp.shape(self.radial)[0] if self.is_batch else 1

  @property
  def x1(self) -> onp.ndarray:
    return onp.where(self.radial > 0,
                     self.radial * onp.cos(onp.nan_to_num(self.angle)), 0.0)

  @property
  def x2(self) -> onp.ndarray:
    return onp.where(self.radial > 0,
                     self.radial * onp.sin(onp.nan_to_num(self.angle)), 0.0)

  def radial_path(self) -> drivers.SamplePath:
    return drivers.SamplePath(self.grid, self.radial, 'folded')

  def localtime_path(self) -> drivers.SamplePath:
    if self.localtime is None:
      raise errors.ArgumentError('This Walsh path carries no local time.')
    return drivers.SamplePath(self.grid, self.localtime, 'localtime')

  def driver_path(self) -> drivers.SamplePath:
    if self.driver is None:
      raise errors.ArgumentError('This Walsh path carries no driver.')
    return drivers.SamplePath(self.grid, self.driver, 'driver')

  def variation_path(self) -> drivers.SamplePath:
    if self.driver_variation is None:
      raise errors.ArgumentError('This Walsh path carries no <U>.')
    return drivers.SamplePath(self.grid, self.driver_variation, 'variation')

  def path(self, index: int) -> 'WalshPath':
    if not self.is_batch:
      return self
    return self._select(lambda arr: arr[index])

  def take(self, index) -> 'WalshPath':
    """Sub-batch selected by a boolean mask or an integer array."""
    if not self.is_batch:
      raise errors.ArgumentError('take expects a batch of paths.')
    return self._select(lambda arr: arr[index])

  def as_batch(self) -> 'WalshPath':
    return self if self.is_batch else self._select(lambda arr: arr[None])

  def _select(self, fn) -> 'WalshPath':
    optional = lambda arr: None if arr is None else fn(arr)
    return WalshPath(self.grid, fn(self.radial), fn(self.angle),
                     fn(self.excursion_id), optional(self.localtime),
                     optional(self.driver), optional(self.driver_variation))

  def terminal_points(self) -> Tuple[onp.ndarray, onp.ndarray]:
    """Returns (radius, angle) at t_end, angle NaN at the origin."""
    return self.radial[..., -1], self.angle[..., -1]

  def to_frame(self) -> pd.DataFrame:
    """Long format dump: path_id,t,r,theta,x1,x2,excursion_id,L."""
    num_paths, size = self.num_paths, self.grid.n_steps + 1
    localtime = (onp.full(onp.shape(self.radial), onp.nan)
                 if self.localtime is None else self.localtime)
    return pd.DataFrame({
        'path_id': onp.repeat(onp.arange(num_paths), size),
        't': onp.tile(self.grid.times, num_paths),
        'r': onp.ravel(self.radial),
        'theta': onp.ravel(self.angle),
        'x1': onp.ravel(self.x1),
        'x2': onp.ravel(self.x2),
        'excursion_id': onp.ravel(self.excursion_id),
        'L': onp.ravel(localtime),
    })


def excursion_angles(ids: onp.ndarray, per_excursion: onp.ndarray):
  """Spreads per-excursion angles [n, m] over excursion labels [n, N + 1]."""
  if per_excursion.shape[-1] == 0:
    return onp.full(ids.shape, onp.nan)
  picked = onp.take_along_axis(per_excursion, onp.maximum(ids, 0), axis=-1)
  return onp.where(ids >= 0, picked, onp.nan)


def unfold(s: drivers.SamplePath,
           mu: measures.SpinningMeasure,
           initial_angle: Optional[float],
           rng: np.ndarray,
           localtime: Optional[drivers.SamplePath] = None,
           driver: Optional[drivers.SamplePath] = None,
           driver_variation: Optional[drivers.SamplePath] = None) -> WalshPath:
  """Assigns independent rays drawn from mu to the excursions of s.

  Excursion k of a path takes angle draw k of that path's stream. An
  excursion in progress at time 0 keeps initial_angle instead.

  Args:
    s: folded SamplePath, one path or a batch.
    mu: the spinning measure.
    initial_angle: ray of the excursion in progress at time 0, if any.
    rng: the angle stream, one key or a stack of keys matching s.
    localtime: optional local time path to attach.
    driver: optional driver path to attach.
    driver_variation: optional <U> path to attach.

  Returns:
    The WalshPath.

  Raises:
   ArgumentError if s starts away from the origin without initial_angle, or
    on shape mismatches.
  """
  drivers.check_same_grid(s, localtime, driver, driver_variation)
  keys, _ = utils.as_key_batch(rng)
  values = s.values if s.is_batch else s.values[onp.newaxis]
  if keys.shape[0] != values.shape[0]:
    raise errors.ArgumentError(
        f'{keys.shape[0]} angle streams for {values.shape[0]} paths.')
  if onp.any(values < 0):
    raise errors.ArgumentError('Folded paths should be nonnegative.')
  starts_away = values[:, 0] > 0
  if onp.any(starts_away) and initial_angle is None:
    raise errors.ArgumentError(
        'The path starts away from the origin: initial_angle is required.')

  ids = excursion_ids(values)
  num_excursions = int(ids.max()) + 1 if ids.size else 0
  per_excursion = measures.angles_from_uniforms(
      mu, measures.uniform_draws(keys, 0, num_excursions))
  if num_excursions:
    per_excursion[starts_away, 0] = float(utils.wrap_angle(initial_angle))
  angle = excursion_angles(ids, per_excursion)
  logging.debug('Unfolded %d paths with at most %d excursions.',
                values.shape[0], num_excursions)

  squeeze = (lambda arr: arr) if s.is_batch else (lambda arr: arr[0])
  optional = lambda p: None if p is None else p.values
  return WalshPath(s.grid, s.values, squeeze(angle), squeeze(ids),
                   optional(localtime), optional(driver),
                   optional(driver_variation))


def same_ray(theta1, theta2) -> onp.ndarray:
  gap = onp.abs(onp.asarray(theta1) - onp.asarray(theta2))
  return onp.minimum(gap, utils.TWO_PI - gap) <= ANGLE_EQ_TOL


def tree_distance_polar(r1, theta1, r2, theta2) -> onp.ndarray:
  """Tree metric on polar arrays, angles ignored at the origin."""
  r1, r2 = onp.asarray(r1, dtype=onp.float64), onp.asarray(r2, onp.float64)
  aligned = (r1 == 0) | (r2 == 0) | same_ray(theta1, theta2)
  return onp.where(aligned, onp.abs(r1 - r2), r1 + r2)


def tree_distance(x, y) -> float:
  """Tree (French railway) distance between two planar points."""
  r1, theta1 = utils.polar(x)
  r2, theta2 = utils.polar(y)
  if theta1 is None or theta2 is None:
    return abs(r1 - r2)
  return float(tree_distance_polar(r1, theta1, r2, theta2))


def tree_steps(w: WalshPath) -> onp.ndarray:
  """Tree distances between consecutive grid points: [..., n_steps]."""
  return tree_distance_polar(w.radial[..., :-1], w.angle[..., :-1],
                             w.radial[..., 1:], w.angle[..., 1:])


@dataclasses.dataclass(frozen=True, eq=False)
class RayConstancyReport:
  """Grid points where the angle changes inside an excursion.

  Attributes:
   violations: number of such points.
   positions: int array [violations, 2] of (path index, grid index).
  """
  violations: int
  positions: onp.ndarray

  @property
  def indices(self) -> onp.ndarray:
    return self.positions[:, 1]


def check_ray_constancy(w: WalshPath) -> RayConstancyReport:
  """Reports the grid points where a path changes ray away from the origin."""
  ids = onp.atleast_2d(w.excursion_id)
  angle = onp.atleast_2d(w.angle)
  inside = (ids[:, 1:] >= 0) & (ids[:, 1:] == ids[:, :-1])
  changed = inside & (angle[:, 1:] != angle[:, :-1])
  positions = onp.argwhere(changed)
  positions[:, 1] += 1
  return RayConstancyReport(int(positions.shape[0]), positions)
