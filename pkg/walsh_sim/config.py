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
"""Experiment configurations, read from gin files or from a JSON document.

A configuration names an experiment and holds the specs of its spinning
measure, its coefficients, its time grid, its batch of paths, its local time
estimators and its outputs. Experiment specific knobs go into `params` and
must be declared by the experiment's defaults.
"""

import copy
import dataclasses
import json
import numbers
import os
from typing import Any, Dict, Optional, Sequence

from absl import logging
import gin

from walsh_sim import drivers
from walsh_sim import errors
from walsh_sim import families
from walsh_sim import localtime
from walsh_sim import measures
from walsh_sim import simulator  # pylint: disable=unused-import

CONFIG_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)),
                          'configs')

DEFAULT_GRID = {'t_end': 1.0, 'n_steps': 1000}
DEFAULT_BATCH = {'n_paths': 1000, 'seed': 0, 'workers': 1, 'chunk_size': None}
DEFAULT_ESTIMATOR = {'epsilons': [0.05], 'method': 'downcrossing'}
DEFAULT_OUTPUT = {'directory': None, 'dump_paths': 0}

SECTIONS = {
    'grid': DEFAULT_GRID,
    'batch': DEFAULT_BATCH,
    'estimator': DEFAULT_ESTIMATOR,
    'output': DEFAULT_OUTPUT,
}
FIELDS = ('experiment', 'measure', 'coefficients', 'grid', 'batch',
          'estimator', 'output', 'params')


def _is_int(value) -> bool:
  return isinstance(value, numbers.Integral) and not isinstance(value, bool)


def _is_number(value) -> bool:
  return isinstance(value, numbers.Real) and not isinstance(value, bool)


def _section(name: str, value) -> Dict[str, Any]:
  if value is None:
    value = {}
  if not isinstance(value, dict):
    raise errors.ConfigError(name, f'expecting a mapping, got {value!r}.')
  unknown = sorted(set(value) - set(SECTIONS[name]))
  if unknown:
    raise errors.ConfigError(f'{name}.{unknown[0]}', 'unknown field.')
  merged = copy.deepcopy(SECTIONS[name])
  merged.update(copy.deepcopy(value))
  return merged


def _positive_int(path: str, value, minimum: int = 1):
  if not _is_int(value) or value < minimum:
    raise errors.ConfigError(
        path, f'expecting an integer >= {minimum}, got {value!r}.')


@gin.configurable
@dataclasses.dataclass
class ExperimentConfig:
  """Everything needed to run one experiment.

  Attributes:
   experiment: name of a built-in experiment.
   measure: JSON encoding of the spinning measure, or None for the
    experiment's default.
   coefficients: {'family': name, **parameters}, or None for the
    experiment's default.
   grid: {t_end, n_steps}.
   batch: {n_paths, seed, workers, chunk_size}; a chunk_size of None leaves
    the Simulator default (or its gin binding) in place.
   estimator: {epsilons, method} of the local time estimators.
   output: {directory, dump_paths}, the number of paths dumped to CSV.
   params: experiment specific parameters.
  """
  experiment: str = ''
  measure: Optional[Dict[str, Any]] = None
  coefficients: Optional[Dict[str, Any]] = None
  grid: Dict[str, Any] = dataclasses.field(default_factory=dict)
  batch: Dict[str, Any] = dataclasses.field(default_factory=dict)
  estimator: Dict[str, Any] = dataclasses.field(default_factory=dict)
  output: Dict[str, Any] = dataclasses.field(default_factory=dict)
  params: Dict[str, Any] = dataclasses.field(default_factory=dict)

  def __post_init__(self):
    for name in SECTIONS:
      setattr(self, name, _section(name, getattr(self, name)))
    if self.params is None:
      self.params = {}
    if not isinstance(self.params, dict):
      raise errors.ConfigError('params', 'expecting a mapping.')
    self.params = copy.deepcopy(dict(self.params))
    for name in ('measure', 'coefficients'):
      value = getattr(self, name)
      if value is not None:
        setattr(self, name, copy.deepcopy(dict(value)))

  @classmethod
  def from_dict(cls, spec: Dict[str, Any]) -> 'ExperimentConfig':
    """Builds a configuration from its JSON encoding.

    Raises:
     ConfigError on unknown or malformed fields.
    """
    if not isinstance(spec, dict):
      raise errors.ConfigError('<root>', 'expecting a JSON object.')
    unknown = sorted(set(spec) - set(FIELDS))
    if unknown:
      raise errors.ConfigError(unknown[0], 'unknown field.')
    for name in ('measure', 'coefficients', 'params'):
      if spec.get(name) is not None and not isinstance(spec[name], dict):
        raise errors.ConfigError(name, 'expecting a mapping.')
    return cls(**spec)

  @classmethod
  def from_json(cls, filename: str) -> 'ExperimentConfig':
    try:
      with open(filename, 'r') as fp:
        spec = json.load(fp)
    except OSError as e:
      raise errors.ConfigError('<file>', f'cannot read {filename}: {e}') from e
    except json.JSONDecodeError as e:
      raise errors.ConfigError(
          '<root>', f'invalid JSON in {filename}: {e}') from e
    return cls.from_dict(spec)

  def to_dict(self) -> Dict[str, Any]:
    return copy.deepcopy(dataclasses.asdict(self))

  def replace(self, **changes) -> 'ExperimentConfig':
    spec = self.to_dict()
    spec.update(changes)
    return ExperimentConfig(**spec)

  def with_overrides(self,
                     seed: Optional[int] = None,
                     n_paths: Optional[int] = None,
                     out: Optional[str] = None,
                     workers: Optional[int] = None) -> 'ExperimentConfig':
    """Returns a copy with the command line overrides applied."""
    batch = dict(self.batch)
    output = dict(self.output)
    if seed is not None:
      batch['seed'] = seed
    if n_paths is not None:
      batch['n_paths'] = n_paths
    if workers is not None:
      batch['workers'] = workers
    if out is not None:
      output['directory'] = out
    return self.replace(batch=batch, output=output)

  def validate(self, defaults: Optional[Dict[str, Any]] = None
              ) -> 'ExperimentConfig':
    """Checks the configuration against the schema.

    Args:
      defaults: the declared parameters of the experiment. When given, keys
        of params must be among them.

    Returns:
      self.

    Raises:
     ConfigError naming the first offending field.
    """
    if not isinstance(self.experiment, str) or not self.experiment:
      raise errors.ConfigError('experiment', 'an experiment name is required.')
    self._validate_grid()
    self._validate_batch()
    self._validate_estimator()
    self._validate_output()
    self.spinning_measure()
    self.coefficient_family()
    if defaults is not None:
      unknown = sorted(set(self.params) - set(defaults))
      if unknown:
        raise errors.ConfigError(
            f'params.{unknown[0]}',
            f'unknown parameter of {self.experiment}, expecting one of '
            f'{sorted(defaults)}.')
    return self

  def _validate_grid(self):
    t_end = self.grid['t_end']
    if not _is_number(t_end) or not t_end > 0:
      raise errors.ConfigError('grid.t_end',
                               f'expecting a positive number, got {t_end!r}.')
    _positive_int('grid.n_steps', self.grid['n_steps'])

  def _validate_batch(self):
    _positive_int('batch.n_paths', self.batch['n_paths'])
    seed = self.batch['seed']
    if seed is None:
      raise errors.ConfigError('batch.seed', 'a master seed is required.')
    _positive_int('batch.seed', seed, minimum=0)
    _positive_int('batch.workers', self.batch['workers'])
    if self.batch['chunk_size'] is not None:
      _positive_int('batch.chunk_size', self.batch['chunk_size'])

  def _validate_estimator(self):
    epsilons = self.estimator['epsilons']
    if (not isinstance(epsilons, (list, tuple)) or not epsilons or
        not all(_is_number(e) and e > 0 for e in epsilons)):
      raise errors.ConfigError(
          'estimator.epsilons',
          f'expecting a non empty list of positive numbers, got {epsilons!r}.')
    if self.estimator['method'] not in localtime.METHODS:
      raise errors.ConfigError(
          'estimator.method',
          f'unknown method {self.estimator["method"]!r}, expecting one of '
          f'{list(localtime.METHODS)}.')

  def _validate_output(self):
    directory = self.output['directory']
    if directory is not None and not isinstance(directory, str):
      raise errors.ConfigError('output.directory', 'expecting a path.')
    _positive_int('output.dump_paths', self.output['dump_paths'], minimum=0)

  def time_grid(self) -> drivers.TimeGrid:
    return drivers.TimeGrid(float(self.grid['t_end']),
                            int(self.grid['n_steps']))

  def spinning_measure(self, default: Optional[Dict[str, Any]] = None
                      ) -> Optional[measures.SpinningMeasure]:
    """The configured spinning measure, or the default one.

    Raises:
     ConfigError naming the offending measure field.
    """
    spec = self.measure if self.measure is not None else default
    if spec is None:
      return None
    try:
      return measures.SpinningMeasure.from_dict(spec)
    except (errors.ArgumentError, errors.DomainError, TypeError,
            ValueError) as e:
      raise errors.ConfigError(_measure_field(spec), str(e)) from e

  def coefficient_family(self, default: Optional[Dict[str, Any]] = None):
    """The configured coefficients, or the default ones.

    Raises:
     ConfigError naming the offending coefficient field.
    """
    spec = self.coefficients if self.coefficients is not None else default
    if spec is None:
      return None
    if not isinstance(spec, dict):
      raise errors.ConfigError('coefficients', 'expecting a mapping.')
    name = spec.get('family')
    if not (families.is_angular(name) or name in families.RADIAL_FAMILIES):
      raise errors.ConfigError('coefficients.family',
                               f'unknown family {name!r}.')
    try:
      return families.make(spec)
    except (errors.ArgumentError, errors.DomainError) as e:
      raise errors.ConfigError('coefficients', str(e)) from e


def _measure_field(spec) -> str:
  if not isinstance(spec, dict):
    return 'measure'
  unknown = sorted(set(spec) - {'atoms', 'density', 'gamma'})
  if unknown:
    return f'measure.{unknown[0]}'
  if len(spec) == 1:
    return f'measure.{next(iter(spec))}'
  return 'measure'


def bundled_config(name: str) -> str:
  """Path of the gin file shipped for a built-in experiment.

  Raises:
   ConfigError if there is none.
  """
  filename = os.path.join(CONFIG_DIR, f'{name}.gin')
  if not name or not os.path.exists(filename):
    raise errors.ConfigError('experiment', f'unknown experiment {name!r}.')
  return filename


def load(experiment: Optional[str] = None,
         gin_files: Sequence[str] = (),
         gin_bindings: Sequence[str] = (),
         json_file: Optional[str] = None) -> ExperimentConfig:
  """Reads a configuration from gin files and bindings, or from JSON.

  The bundled gin file of `experiment` is parsed first, then gin_files and
  gin_bindings in order. A JSON file is a complete configuration on its own
  and cannot be combined with gin sources.

  Args:
    experiment: name of a built-in experiment.
    gin_files: extra gin files.
    gin_bindings: extra gin bindings.
    json_file: a JSON configuration.

  Returns:
    The ExperimentConfig, not validated yet.

  Raises:
   ConfigError on unknown experiments, unreadable or conflicting sources.
  """
  gin.clear_config()
  if json_file is not None:
    if gin_files or gin_bindings:
      raise errors.ConfigError(
          '<root>', 'a JSON config cannot be combined with gin sources.')
    config = ExperimentConfig.from_json(json_file)
    if experiment and config.experiment and config.experiment != experiment:
      raise errors.ConfigError(
          'experiment', f'{json_file} configures {config.experiment!r}, not '
          f'{experiment!r}.')
    if experiment and not config.experiment:
      config = config.replace(experiment=experiment)
    return config

  files = ([bundled_config(experiment)] if experiment else []) + list(
      gin_files)
  if not files and not gin_bindings:
    raise errors.ConfigError('experiment', 'no configuration given.')
  try:
    gin.parse_config_files_and_bindings(files, list(gin_bindings))
    config = ExperimentConfig()
  except (ValueError, KeyError, SyntaxError, IOError) as e:
    if isinstance(e, errors.ConfigError):
      raise
    raise errors.ConfigError('<gin>', str(e)) from e
  if experiment and not config.experiment:
    config = config.replace(experiment=experiment)
  logging.info('Loaded the configuration of %s from %s.', config.experiment,
               files or 'bindings')
  return config
