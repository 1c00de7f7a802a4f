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
"""Scalar driver paths on a uniform grid and their Skorokhod folding.

Paths are stored as arrays whose last axis runs over the n_steps + 1 grid
points. A leading axis, when present, runs over independent paths sharing
the same grid.
"""

import dataclasses
import functools
from typing import Callable, NamedTuple, Optional, Sequence

from absl import logging
import jax
import jax.numpy as np
import numpy as onp
import pandas as pd

from walsh_sim import errors
from walsh_sim import utils

KINDS = ('driver', 'folded', 'regulator', 'localtime', 'clock', 'variation')
DEFAULT_PROBES = (1e-6, 1e-3, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0)


@dataclasses.dataclass(frozen=True)
class TimeGrid:
  """The uniform grid t_k = k dt, k = 0, ..., n_steps, of [0, t_end]."""
  t_end: float
  n_steps: int

  def __post_init__(self):
    if not onp.isfinite(self.t_end) or self.t_end <= 0:
      raise errors.ArgumentError(f't_end should be positive, got {self.t_end}.')
    if int(self.n_steps) != self.n_steps or self.n_steps < 1:
      raise errors.ArgumentError(
          f'n_steps should be a positive integer, got {self.n_steps}.')
    object.__setattr__(self, 't_end', float(self.t_end))
    object.__setattr__(self, 'n_steps', int(self.n_steps))

  @property
  def dt(self) -> float:
    return self.t_end / self.n_steps

  @property
  def times(self) -> onp.ndarray:
    return onp.arange(self.n_steps + 1) * self.dt

  def index_of(self, t: float) -> int:
    """Largest grid index whose time does not exceed t."""
    return int(onp.clip(onp.floor(t / self.dt + 1e-9), 0, self.n_steps))


def check_same_grid(*paths):
  grids = {p.grid for p in paths if p is not None}
  if len(grids) > 1:
    raise errors.ArgumentError(f'Paths live on different grids: {grids}.')


@dataclasses.dataclass(frozen=True, eq=False)
class SamplePath:
  """A scalar process sampled on a TimeGrid.

  Attributes:
   grid: the TimeGrid.
   values: onp.ndarray<float>[..., n_steps + 1].
   kind: one of 'driver', 'folded', 'regulator', 'localtime', 'clock' or
    'variation'.
  """
  grid: TimeGrid
  values: onp.ndarray
  kind: str = 'driver'

  def __post_init__(self):
    values = onp.asarray(self.values, dtype=onp.float64)
    if values.ndim not in (1, 2) or values.shape[-1] != self.grid.n_steps + 1:
      raise errors.ArgumentError(
          f'Values of shape {values.shape} do not match {self.grid}.')
    if self.kind not in KINDS:
      raise errors.ArgumentError(f'Unknown path kind {self.kind!r}.')
    object.__setattr__(self, 'values', values)

  @property
  def is_batch(self) -> bool:
    return self.values.ndim == 2

  @property
  def num_paths(self) -> int:
    return self.values.shape[0] if self.is_batch else 1

  @property
  def terminal(self):
    return self.values[..., -1]

  def path(self, index: int) -> 'SamplePath':
    if not self.is_batch:
      return self
    return SamplePath(self.grid, self.values[index], self.kind)

  def with_values(self, values, kind: Optional[str] = None) -> 'SamplePath':
    return SamplePath(self.grid, values, kind or self.kind)


@dataclasses.dataclass(frozen=True)
class RadialCoefficients:
  """Drift b and dispersion sigma of a radial Ito diffusion.

  Both are functions of r >= 0 written with jax.numpy, so that they can be
  traced inside the simulation kernels.
  """
  b: Callable[[np.ndarray], np.ndarray]
  sigma: Callable[[np.ndarray], np.ndarray]
  name: str = 'custom'

  def a(self, r):
    return self.sigma(r) ** 2

  def validate(self, probes: Optional[Sequence[float]] = None):
    """Raises DomainError unless b, sigma are finite and sigma != 0."""
    r = np.asarray(DEFAULT_PROBES if probes is None else probes,
                   dtype=np.float64)
    if onp.any(onp.asarray(r) <= 0):
      raise errors.ArgumentError('Probes should be positive radii.')
    drift = onp.broadcast_to(onp.asarray(self.b(r)), r.shape)
    dispersion = onp.broadcast_to(onp.asarray(self.sigma(r)), r.shape)
    if not onp.all(onp.isfinite(drift)) or not onp.all(
        onp.isfinite(dispersion)):
      raise errors.DomainError(f'{self.name}: coefficients are not finite.')
    if onp.any(dispersion == 0):
      raise errors.DomainError(f'{self.name}: sigma vanishes on probes.')


class ReflectedDiffusion(NamedTuple):
  folded: SamplePath
  localtime: SamplePath
  driver: SamplePath


def normals(keys: np.ndarray, n_steps: int) -> np.ndarray:
  """Standard normal increments [num_paths, n_steps].

  Increment k of a path is keyed by k alone, so the first increments do not
  depend on n_steps: extending a grid with the same dt extends the paths.
  """
  steps = np.arange(n_steps, dtype=np.uint32)

  def one_path(key):
    return jax.vmap(lambda k: jax.random.normal(
        jax.random.fold_in(key, k), dtype=np.float64))(steps)

  return jax.vmap(one_path)(keys)


def check_finite(values: onp.ndarray, what: str):
  bad = ~onp.isfinite(values)
  if onp.any(bad):
    path_index, step = onp.argwhere(bad.reshape(-1, values.shape[-1]))[0]
    raise errors.NumericalBlowup(
        f'{what} produced a non finite value', int(path_index), int(step))


@functools.partial(jax.jit, static_argnums=(0, 1))
def _euler_paths(drift, dispersion, x0, dt, normals):
  """Euler-Maruyama paths: x0 [n], normals [n, n_steps] -> [n, n_steps + 1]."""

  def one_path(start, noise):
    def step(x, z):
      x = x + drift(x) * dt + dispersion(x) * np.sqrt(dt) * z
      return x, x

    _, xs = jax.lax.scan(step, start, noise)
    return np.concatenate([start[np.newaxis], xs])

  return jax.vmap(one_path)(x0, normals)


@functools.partial(jax.jit, static_argnums=(0, 1))
def _reflected_paths(drift, dispersion, r0, dt, normals):
  """Euler increments folded on the fly, returns (V, Lambda) with S = V + L."""

  def one_path(start, noise):
    def step(carry, z):
      v, lam = carry
      s = v + lam
      v = v + drift(s) * dt + dispersion(s) * np.sqrt(dt) * z
      lam = np.maximum(lam, -v)
      return (v, lam), (v, lam)

    lam0 = np.maximum(-start, 0.0)
    _, (vs, lams) = jax.lax.scan(step, (start, lam0), noise)
    return (np.concatenate([start[np.newaxis], vs]),
            np.concatenate([lam0[np.newaxis], lams]))

  return jax.vmap(one_path)(r0, normals)


def simulate_driver(coeffs: RadialCoefficients,
                    u0: float,
                    grid: TimeGrid,
                    rng: np.ndarray) -> SamplePath:
  """Euler-Maruyama driver U(t_k+1) = U(t_k) + b dt + sigma sqrt(dt) Z_k.

  Args:
    coeffs: the drift and dispersion of the driver.
    u0: the starting value.
    grid: the TimeGrid.
    rng: one jax.random.PRNGKey, or a stack of them for a batch of paths.

  Returns:
    A SamplePath of kind 'driver', batched iff rng is a stack of keys.

  Raises:
   NumericalBlowup with the path and step of the first non finite value.
  """
  keys, single = utils.as_key_batch(rng)
  x0 = np.full((keys.shape[0],), float(u0), dtype=np.float64)
  values = onp.asarray(_euler_paths(coeffs.b, coeffs.sigma, x0, grid.dt,
                                    normals(keys, grid.n_steps)))
  check_finite(values, f'Driver {coeffs.name}')
  logging.debug('Simulated %d driver paths of %d steps.',
                keys.shape[0], grid.n_steps)
  return SamplePath(grid, values[0] if single else values, 'driver')


def linear_driver(rate: float,
                  u0: float,
                  grid: TimeGrid,
                  num_paths: Optional[int] = None) -> SamplePath:
  """The deterministic driver u0 + rate * t, exact on the grid."""
  values = u0 + rate * grid.times
  if num_paths is not None:
    values = onp.tile(values, (num_paths, 1))
  return SamplePath(grid, values, 'driver')


def skorokhod_fold(u: SamplePath):
  """Skorokhod reflection of a driver at 0.

  Lambda(t_k) = max_{j <= k} (-U(t_j))^+ and S = U + Lambda. S is stored as
  the floating point sum U + Lambda, so it is an exact zero wherever Lambda
  increases.

  Args:
    u: a driver SamplePath (one path or a batch).

  Returns:
    A pair (s, lam) of SamplePaths of kinds 'folded' and 'regulator'.
  """
  lam = onp.maximum.accumulate(onp.maximum(-u.values, 0.0), axis=-1)
  return (SamplePath(u.grid, u.values + lam, 'folded'),
          SamplePath(u.grid, lam, 'regulator'))


def regulator_is_minimal(u_values, lam_values) -> bool:
  """Brute force check that lam is the smallest admissible regulator.

  Every nondecreasing push keeping U + push >= 0 must dominate
  max_{j <= k} (-U(t_j))^+ at every k, and lam must reach that bound.

  Args:
    u_values: one driver path.
    lam_values: the candidate regulator on the same grid.

  Returns:
    True iff lam is admissible and pointwise minimal.
  """
  u_values = list(onp.asarray(u_values, dtype=onp.float64))
  lam_values = list(onp.asarray(lam_values, dtype=onp.float64))
  for k, lam in enumerate(lam_values):
    if u_values[k] + lam < 0 or (k and lam < lam_values[k - 1]):
      return False
    lower_bound = max(max(-u, 0.0) for u in u_values[:k + 1])
    if lam != lower_bound:
      return False
  return True


def simulate_reflected_diffusion(coeffs: RadialCoefficients,
                                 r0: float,
                                 grid: TimeGrid,
                                 rng: np.ndarray) -> ReflectedDiffusion:
  """Simulates dS = b(S) dt + sigma(S) dW + dL with S >= 0.

  Each Euler increment, evaluated at the current folded value, is added to
  the unreflected process V, then V is folded pathwise by the running
  Skorokhod map, so that S = V + L with L the regulator.

  Args:
    coeffs: the RadialCoefficients.
    r0: the nonnegative starting point.
    grid: the TimeGrid.
    rng: one key or a stack of keys.

  Returns:
    A ReflectedDiffusion (folded, localtime, driver) where driver is V.

  Raises:
   ArgumentError if r0 < 0, NumericalBlowup on non finite values.
  """
  if r0 < 0:
    raise errors.ArgumentError(f'r0 should be nonnegative, got {r0}.')
  keys, single = utils.as_key_batch(rng)
  r0s = np.full((keys.shape[0],), float(r0), dtype=np.float64)
  v, lam = _reflected_paths(coeffs.b, coeffs.sigma, r0s, grid.dt,
                            normals(keys, grid.n_steps))
  v, lam = onp.asarray(v), onp.asarray(lam)
  check_finite(v, f'Reflected diffusion {coeffs.name}')
  s = v + lam
  if single:
    v, lam, s = v[0], lam[0], s[0]
  return ReflectedDiffusion(SamplePath(grid, s, 'folded'),
                            SamplePath(grid, lam, 'localtime'),
                            SamplePath(grid, v, 'driver'))


def _cumulative(grid: TimeGrid, increments: onp.ndarray) -> SamplePath:
  zeros = onp.zeros(increments.shape[:-1] + (1,))
  return SamplePath(grid, onp.concatenate(
      [zeros, onp.cumsum(increments, axis=-1)], axis=-1), 'variation')


def driver_quadratic_variation(s: SamplePath,
                               coeffs: RadialCoefficients) -> SamplePath:
  """Analytic <U>(t_k) = sum_{j < k} a(S(t_j)) dt along a folded path."""
  a = onp.broadcast_to(onp.asarray(coeffs.a(s.values[..., :-1])),
                       s.values[..., :-1].shape)
  return _cumulative(s.grid, a * s.grid.dt)


def realized_quadratic_variation(path: SamplePath) -> SamplePath:
  """Realized quadratic variation sum_{j < k} (path(t_j+1) - path(t_j))^2."""
  return _cumulative(path.grid, onp.diff(path.values, axis=-1) ** 2)


def fold_frame(u: SamplePath, s: SamplePath, lam: SamplePath) -> pd.DataFrame:
  """Long format dump with columns path_id, t, U, S, Lambda."""
  check_same_grid(u, s, lam)
  num_paths, size = u.num_paths, u.grid.n_steps + 1
  return pd.DataFrame({
      'path_id': onp.repeat(onp.arange(num_paths), size),
      't': onp.tile(u.grid.times, num_paths),
      'U': u.values.ravel(),
      'S': s.values.ravel(),
      'Lambda': lam.values.ravel(),
  })
