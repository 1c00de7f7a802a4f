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
"""Base class of the built-in experiments."""

import copy
import math
from typing import Any, Callable, Dict, Optional

import numpy as onp

from walsh_sim import config as config_lib
from walsh_sim import errors
from walsh_sim import families
from walsh_sim import metrics
from walsh_sim import simulator
from walsh_sim import unfolding

ORIGIN = (0.0, 0.0)
BROWNIAN = {'family': 'brownian', 'sigma': 1.0}
SKEWED_RAYS = {'atoms': [[0.0, 0.7], [math.pi, 0.3]]}
THREE_RAYS = {'atoms': [[0.5, 0.5], [2.5, 0.3], [4.5, 0.2]]}


class Experiment(object):
  """An experiment simulates batches of paths and reports on them.

  Subclasses set `name`, `description`, the `defaults` of their params and
  optionally a default measure and default coefficients, then implement
  `run`. Paths are simulated chunk by chunk through Simulator.map_paths and
  reduced to per path statistics inside each chunk, so that memory does not
  grow with n_paths.
  """

  name = None
  description = ''
  defaults = {}
  default_measure = None
  default_coefficients = None

  def __init__(self, config: config_lib.ExperimentConfig):
    config.validate(self.defaults)
    self.config = config
    self.grid = config.time_grid()
    self.options = copy.deepcopy(self.defaults)
    self.options.update(copy.deepcopy(config.params))
    self.mu = config.spinning_measure(self.default_measure)
    self.coeffs = config.coefficient_family(self.default_coefficients)

  @property
  def n_paths(self) -> int:
    return int(self.config.batch['n_paths'])

  @property
  def epsilons(self):
    return [float(e) for e in self.config.estimator['epsilons']]

  @property
  def epsilon(self) -> float:
    return self.epsilons[0]

  @property
  def dump_paths(self) -> int:
    return min(int(self.config.output['dump_paths']), self.n_paths)

  @property
  def coefficient_spec(self) -> Optional[Dict[str, Any]]:
    if self.config.coefficients is not None:
      return self.config.coefficients
    return self.default_coefficients

  @property
  def params(self) -> Dict[str, Any]:
    """Everything the results depend on, except the seed."""
    return {
        'measure': None if self.mu is None else self.mu.to_dict(),
        'coefficients': self.coefficient_spec,
        'grid': dict(self.config.grid),
        'estimator': dict(self.config.estimator),
        'params': self.options,
    }

  def option(self, name: str):
    return self.options[name]

  def require_radial(self):
    """Returns the radial coefficients, ConfigError if they are angular."""
    if isinstance(self.coeffs, families.AngularCoefficients):
      raise errors.ConfigError(
          'coefficients.family',
          f'{self.name} needs radial coefficients, got {self.coeffs.name}.')
    return self.coeffs

  def require_angular(self):
    if not isinstance(self.coeffs, families.AngularCoefficients):
      raise errors.ConfigError(
          'coefficients.family',
          f'{self.name} needs angular coefficients, got {self.coeffs.name}.')
    return self.coeffs

  def dump(self, report: metrics.Report, sim: simulator.Simulator,
           simulate: Callable[[Any], unfolding.WalshPath],
           stream: int = 0, name: str = 'paths'):
    """Adds the first dump_paths paths of a stream as a long format frame."""
    if self.dump_paths:
      w = simulate(sim.path_keys(stream, 0, self.dump_paths))
      report.frames[name] = w.to_frame()

  def run(self, sim: simulator.Simulator) -> metrics.Report:
    raise NotImplementedError


def mean_and_stderr(values) -> Dict[str, float]:
  values = onp.asarray(values, dtype=onp.float64)
  stderr = (float(onp.std(values, ddof=1) / math.sqrt(values.size))
            if values.size > 1 else float('nan'))
  return {'mean': float(onp.mean(values)), 'stderr': stderr}


def within(value: float, expected: float, rel: float) -> bool:
  return abs(value - expected) <= rel * abs(expected)
