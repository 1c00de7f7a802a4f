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
"""Command line entry point: run, list and validate experiments.

  run_experiment.py list
  run_experiment.py validate --experiment=walsh-bm --n_paths=100
  run_experiment.py run --experiment=polar-drift --seed=1 --out=/tmp/polar
  run_experiment.py run --config=my_config.json --workers=8

Exit codes are 0 on success, 2 on configuration errors and 3 on numerical
failures.
"""

import json
from typing import List, Optional, Sequence, Tuple

from absl import flags
from absl import logging

from walsh_sim import config as config_lib
from walsh_sim import errors
from walsh_sim import metrics
from walsh_sim import simulator
from walsh_sim.experiments import registry

flags.DEFINE_string('experiment', None, 'Name of a built-in experiment.')
flags.DEFINE_multi_string('gin_config', [],
                          'List of paths to the config files.')
flags.DEFINE_multi_string('gin_bindings', [],
                          'Newline separated list of Gin parameter bindings.')
flags.DEFINE_string('config', None,
                    'A JSON configuration, instead of gin sources.')
flags.DEFINE_integer('seed', None, 'Overrides the master seed.')
flags.DEFINE_integer('n_paths', None, 'Overrides the number of paths.')
flags.DEFINE_string('out', None, 'Directory to write the results to.')
flags.DEFINE_integer('workers', None, 'Overrides the size of the pool.')
FLAGS = flags.FLAGS

COMMANDS = ('run', 'list', 'validate')
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def list_experiments() -> List[Tuple[str, str]]:
  """Names and descriptions of the built-in experiments."""
  return [(name, registry.get(name).description) for name in registry.names()]


def load_config(experiment: Optional[str] = None,
                gin_files: Sequence[str] = (),
                gin_bindings: Sequence[str] = (),
                json_file: Optional[str] = None,
                seed: Optional[int] = None,
                n_paths: Optional[int] = None,
                out: Optional[str] = None,
                workers: Optional[int] = None
               ) -> config_lib.ExperimentConfig:
  """Reads a configuration and applies the command line overrides."""
  if experiment:
    registry.get(experiment)
  config = config_lib.load(experiment, gin_files, gin_bindings, json_file)
  return config.with_overrides(seed=seed, n_paths=n_paths, out=out,
                               workers=workers)


def make_simulator(config: config_lib.ExperimentConfig) -> simulator.Simulator:
  kwargs = {}
  if config.batch['chunk_size'] is not None:
    kwargs['chunk_size'] = int(config.batch['chunk_size'])
  return simulator.Simulator(workdir=config.output['directory'],
                             seed=config.batch['seed'],
                             num_workers=config.batch['workers'], **kwargs)


def run(config: config_lib.ExperimentConfig) -> metrics.Metrics:
  """Runs the experiment of a configuration, exporting its artifacts."""
  experiment = registry.create(config)
  sim = make_simulator(config)
  result = sim.run(experiment)
  passed = sum(r.passed for r in result.test_results.values())
  logging.info('%s: %d of %d tests passed.', experiment.name, passed,
               len(result.test_results))
  if config.output['directory'] is None:
    logging.info('Summary:\n%s',
                 json.dumps(result.summary(), sort_keys=True, indent=2))
  return result


def execute(command: str, **sources) -> int:
  """Runs one command and maps errors to exit codes.

  Args:
    command: one of COMMANDS.
    **sources: keyword arguments of load_config.

  Returns:
    The exit code.
  """
  try:
    if command == 'list':
      for name, description in list_experiments():
        print(f'{name}\t{description}')
      return EXIT_OK
    if command not in COMMANDS:
      raise errors.ConfigError(
          '<command>', f'unknown command {command!r}, expecting one of '
          f'{", ".join(COMMANDS)}.')
    config = load_config(**sources)
    if command == 'validate':
      registry.create(config)
      logging.info('The configuration of %s is valid.', config.experiment)
      return EXIT_OK
    run(config)
    return EXIT_OK
  except errors.ConfigError as e:
    logging.error('Invalid configuration: %s', e)
    return EXIT_CONFIG
  except errors.NumericalError as e:
    logging.error('Numerical failure: %s', e)
    return EXIT_NUMERICAL


def main(argv: Sequence[str]) -> int:
  if len(argv) > 2:
    logging.error('Too many command line arguments: %s', argv[1:])
    return EXIT_CONFIG
  command = argv[1] if len(argv) > 1 else 'run'
  return execute(command,
                 experiment=FLAGS.experiment,
                 gin_files=FLAGS.gin_config,
                 gin_bindings=FLAGS.gin_bindings,
                 json_file=FLAGS.config,
                 seed=FLAGS.seed,
                 n_paths=FLAGS.n_paths,
                 out=FLAGS.out,
                 workers=FLAGS.workers)
