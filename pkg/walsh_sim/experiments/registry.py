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
"""The built-in experiments, by name."""

from typing import List, Type

from walsh_sim import config as config_lib
from walsh_sim import errors
from walsh_sim.experiments import angular
from walsh_sim.experiments import base
from walsh_sim.experiments import basic
from walsh_sim.experiments import martingales
from walsh_sim.experiments import recovery

_EXPERIMENTS = (
    basic.FoldDemo,
    basic.WalshBrownianMotion,
    basic.SkewBrownianMotion,
    martingales.Tripod,
    angular.PolarDrift,
    angular.Bessel,
    basic.Thinning,
    martingales.FreidlinSheuResidual,
    martingales.SlopeAverage,
    angular.TimeChange,
    recovery.EstimateMu,
    recovery.MixedMu,
)

REGISTRY = {cls.name: cls for cls in _EXPERIMENTS}


def names() -> List[str]:
  return [cls.name for cls in _EXPERIMENTS]


def get(name: str) -> Type[base.Experiment]:
  if name not in REGISTRY:
    raise errors.ConfigError(
        'experiment', f'unknown experiment {name!r}, expecting one of '
        f'{", ".join(names())}.')
  return REGISTRY[name]


def create(config: config_lib.ExperimentConfig) -> base.Experiment:
  """Instantiates the experiment named by a config, validating it."""
  return get(config.experiment)(config)
