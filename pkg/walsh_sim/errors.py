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
"""Exceptions raised by the walsh_sim package.

Argument, domain and configuration problems are ValueErrors. Failures that
only show up while paths are being simulated derive from NumericalError and
remember which path and which grid step went wrong.
"""

from typing import Optional


class WalshSimError(Exception):
  """Base class for every error raised by walsh_sim."""


class ArgumentError(WalshSimError, ValueError):
  """An argument is malformed (bad interval, mismatched grids, ...)."""


class DomainError(WalshSimError, ValueError):
  """A mathematical object is used outside of its domain of definition."""


class ConfigError(WalshSimError, ValueError):
  """An experiment configuration does not follow the schema.

  Attributes:
   field_path: dotted path of the offending field, e.g. 'grid.n_steps'.
  """

  def __init__(self, field_path: str, message: str):
    super().__init__(f'{field_path}: {message}')
    self.field_path = field_path


class NumericalError(WalshSimError, RuntimeError):
  """A failure happening while simulating paths.

  Attributes:
   path_index: index of the failing path in the batch, if known.
   step: index of the failing grid step, if known.
  """

  def __init__(self,
               message: str,
               path_index: Optional[int] = None,
               step: Optional[int] = None):
    super().__init__(message)
    self.message = message
    self.path_index = path_index
    self.step = step

  def __str__(self):
    where = []
    if self.path_index is not None:
      where.append(f'path {self.path_index}')
    if self.step is not None:
      where.append(f'step {self.step}')
    suffix = f' ({", ".join(where)})' if where else ''
    return f'{self.message}{suffix}'


class NumericalBlowup(NumericalError):
  """A simulated value became non finite."""


class ClockUnderrun(NumericalError):
  """The stochastic clock of a source path ends before the target horizon.

  Attributes:
   required_factor: factor by which the source horizon should be extended.
  """

  def __init__(self,
               message: str,
               required_factor: float,
               path_index: Optional[int] = None,
               step: Optional[int] = None):
    super().__init__(message, path_index, step)
    self.required_factor = required_factor


class SwitchNotReached(NumericalError):
  """A path never came close enough to the requested switch point."""


class InsufficientData(NumericalError):
  """Not enough excursions were observed to compute an estimate."""
