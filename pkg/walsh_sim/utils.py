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
"""Some useful helpers for random streams and angles."""

import os
from typing import Optional, Tuple

import jax
import jax.numpy as np
import numpy as onp

TWO_PI = 2.0 * onp.pi
THREADS_ENV_VAR = 'WALSH_SIM_THREADS'


def as_key_batch(rng) -> Tuple[np.ndarray, bool]:
  """Returns a stack of keys and whether a single key was given.

  Args:
    rng: either one jax.random.PRNGKey (shape [2]) or a stack of them
     (shape [num_paths, 2]).

  Returns:
    A pair (keys, single) with keys of shape [num_paths, 2].

  Raises:
   ValueError when rng has neither shape.
  """
  keys = np.asarray(rng)
  if keys.ndim == 1:
    return keys[np.newaxis, :], True
  if keys.ndim != 2:
    raise ValueError(f'Expecting one key or a stack of keys, got {keys.shape}.')
  return keys, False


def path_keys(master: np.ndarray, start: int, stop: int) -> np.ndarray:
  """Derives the keys of paths start, ..., stop - 1 from a master key.

  The key of a path only depends on the master key and on the path index,
  hence not on how paths are grouped into chunks or spread over workers.

  Args:
    master: the master jax.random.PRNGKey.
    start: first path index.
    stop: one past the last path index.

  Returns:
    A np.ndarray<uint32>[stop - start, 2] of keys.
  """
  indices = np.arange(start, stop, dtype=np.uint32)
  return jax.vmap(jax.random.fold_in, in_axes=(None, 0))(master, indices)


def split_keys(keys: np.ndarray, num: int = 2) -> np.ndarray:
  """Splits every key of a stack into num independent keys: [n, num, 2]."""
  return jax.vmap(lambda k: jax.random.split(k, num))(keys)


def wrap_angle(theta):
  """Maps angles into [0, 2pi), leaving undefined (NaN) angles untouched."""
  wrapped = onp.mod(onp.asarray(theta, dtype=onp.float64), TWO_PI)
  # fmod of tiny negative values rounds up to exactly 2pi.
  return onp.where(wrapped >= TWO_PI, 0.0, wrapped)


def polar(point) -> Tuple[float, Optional[float]]:
  """Returns (radius, angle) of a planar point, angle None at the origin."""
  x1, x2 = float(point[0]), float(point[1])
  radius = float(onp.hypot(x1, x2))
  if radius == 0.0:
    return 0.0, None
  return radius, float(wrap_angle(onp.arctan2(x2, x1)))


def num_workers(default: int = 1) -> int:
  """Size of the worker pool, overridable by the WALSH_SIM_THREADS env var."""
  value = os.environ.get(THREADS_ENV_VAR)
  if not value:
    return default
  try:
    workers = int(value)
  except ValueError as e:
    raise ValueError(f'{THREADS_ENV_VAR}={value!r} is not an integer.') from e
  if workers < 1:
    raise ValueError(f'{THREADS_ENV_VAR} should be positive, got {workers}.')
  return workers
