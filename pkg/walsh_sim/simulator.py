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
"""Runs batches of paths and experiments, then exports their results."""

from concurrent import futures
from typing import Any, Callable, List, Optional, Tuple

from absl import logging
import gin
import jax
import jax.numpy as np
import numpy as onp

from walsh_sim import errors
from walsh_sim import metrics
from walsh_sim import utils


def _concatenate(results: List[Any]):
  """Concatenates chunk results along the path axis, keeping their order."""
  first = results[0]
  if isinstance(first, tuple):
    return tuple(_concatenate([r[i] for r in results])
                 for i in range(len(first)))
  if first is None:
    return None
  return onp.concatenate([onp.asarray(r) for r in results], axis=0)


@gin.configurable
class Simulator(object):
  """Simulates batches of independent paths from a master seed.

  The key of path i in stream s is fold_in(fold_in(PRNGKey(seed), s), i), so
  that results only depend on the seed, not on the chunk size or the number
  of workers.

  Attributes:
   seed: the master seed.
   num_workers: size of the thread pool.
   chunk_size: number of paths simulated together.
   metrics: the Metrics of the last run, if any.
  """

  def __init__(self,
               workdir: Optional[str] = None,
               seed: int = 0,
               num_workers: Optional[int] = None,
               chunk_size: int = 256,
               metrics_cls=metrics.Metrics):
    """Initializes the simulator.

    Args:
      workdir: where results will be stored, None to store nothing.
      seed: the master seed.
      num_workers: size of the thread pool. The WALSH_SIM_THREADS environment
        variable takes precedence.
      chunk_size: number of paths simulated in one kernel call.
      metrics_cls: class of metrics object used to store results.
    """
    if chunk_size < 1:
      raise errors.ArgumentError(f'chunk_size should be positive: {chunk_size}')
    self.workdir = workdir
    self.seed = int(seed)
    self.num_workers = utils.num_workers(num_workers or 1)
    self.chunk_size = int(chunk_size)
    self._metrics_cls = metrics_cls
    self._master = jax.random.PRNGKey(self.seed)
    self.metrics = None

  def stream_key(self, stream: int) -> np.ndarray:
    return jax.random.fold_in(self._master, stream)

  def path_keys(self, stream: int, start: int, stop: int) -> np.ndarray:
    return utils.path_keys(self.stream_key(stream), start, stop)

  def chunks(self, n_paths: int) -> List[Tuple[int, int]]:
    return [(start, min(start + self.chunk_size, n_paths))
            for start in range(0, n_paths, self.chunk_size)]

  def map_paths(self, fn: Callable[[np.ndarray], Any], n_paths: int,
                stream: int = 0):
    """Applies fn to the keys of paths 0..n_paths-1, chunk by chunk.

    Args:
      fn: maps a stack of path keys [m, 2] to an array, or a tuple of arrays,
        whose leading axis runs over those m paths.
      n_paths: the total number of paths.
      stream: index of the random stream.

    Returns:
      The results of every chunk, concatenated by path index.

    Raises:
     NumericalError raised by fn, its path_index made global.
    """
    if n_paths < 1:
      raise errors.ArgumentError(f'n_paths should be positive: {n_paths}')
    chunks = self.chunks(n_paths)

    def work(bounds):
      start, stop = bounds
      try:
        result = fn(self.path_keys(stream, start, stop))
      except errors.NumericalError as e:
        if e.path_index is not None:
          e.path_index += start
        raise
      logging.info('Stream %d: simulated paths [%d, %d) of %d.', stream, start,
                   stop, n_paths)
      return result

    if self.num_workers == 1 or len(chunks) == 1:
      results = [work(bounds) for bounds in chunks]
    else:
      with futures.ThreadPoolExecutor(max_workers=self.num_workers) as pool:
        results = list(pool.map(work, chunks))
    return _concatenate(results)

  def run(self, experiment) -> metrics.Metrics:
    """Runs an experiment and exports what it reports."""
    logging.info('Running %s on %d paths, seed %d.', experiment.name,
                 experiment.n_paths, self.seed)
    self.metrics = self._metrics_cls(self.workdir,
                                     experiment=experiment.name,
                                     params=experiment.params,
                                     n_paths=experiment.n_paths,
                                     seed=self.seed)
    self.metrics.add_report(experiment.run(self))
    self.metrics.export()
    return self.metrics
