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
"""Named families of radial and angular coefficients.

Coefficient functions are written with plain arithmetic so that they can be
evaluated on python floats, numpy arrays and jax tracers alike. Families are
cached, so that asking twice for the same family returns the same functions
and the jitted path kernels are not compiled again.
"""

import dataclasses
import functools
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as onp

from walsh_sim import drivers
from walsh_sim import errors
from walsh_sim import utils

PolarFn = Callable[[Any, Any], Any]
DISPERSION_FLOOR = 1e-8
PROBE_RADII = (0.0, 1e-3, 0.1, 0.5, 1.0, 2.0, 5.0)
NUM_PROBE_ANGLES = 24
PIECE_TOL = 1e-12


@dataclasses.dataclass(frozen=True)
class PiecewiseAngular:
  """A piecewise constant function of the angle.

  Attributes:
   pieces: tuple of (lower, upper, value), half-open intervals [lower, upper)
    that tile [0, 2pi).
  """
  pieces: Tuple[Tuple[float, float, float], ...]

  def __post_init__(self):
    pieces = tuple(sorted((float(lo), float(hi), float(v))
                          for lo, hi, v in self.pieces))
    if not pieces:
      raise errors.ArgumentError('At least one piece is required.')
    edges = [pieces[0][0]] + [hi for _, hi, _ in pieces]
    starts = [lo for lo, _, _ in pieces]
    if abs(edges[0]) > PIECE_TOL or abs(edges[-1] - utils.TWO_PI) > PIECE_TOL:
      raise errors.ArgumentError(f'Pieces {pieces} do not cover [0, 2pi).')
    if any(abs(hi - lo) > PIECE_TOL for hi, lo in zip(edges[1:-1], starts[1:])):
      raise errors.ArgumentError(f'Pieces {pieces} are not contiguous.')
    if any(lo >= hi for lo, hi, _ in pieces):
      raise errors.ArgumentError(f'Empty piece in {pieces}.')
    object.__setattr__(self, 'pieces', pieces)

  @classmethod
  def coerce(cls, value) -> 'PiecewiseAngular':
    """Builds from a number (constant) or a list of [lower, upper, value]."""
    if isinstance(value, PiecewiseAngular):
      return value
    if isinstance(value, (int, float)):
      return cls(((0.0, utils.TWO_PI, float(value)),))
    try:
      return cls(tuple(tuple(piece) for piece in value))
    except (TypeError, ValueError) as e:
      raise errors.ArgumentError(f'Cannot read pieces from {value!r}.') from e

  def __call__(self, theta):
    theta = theta % utils.TWO_PI
    total = 0.0 * theta
    for lower, upper, value in self.pieces:
      total = total + value * ((theta >= lower) * (theta < upper))
    return total

  @property
  def values(self) -> Tuple[float, ...]:
    return tuple(v for _, _, v in self.pieces)

  @property
  def breakpoints(self) -> Tuple[float, ...]:
    return tuple(lo for lo, _, _ in self.pieces if lo > 0)

  def to_list(self):
    return [list(piece) for piece in self.pieces]


@dataclasses.dataclass(frozen=True)
class ClosedFormScale:
  """Scale function known in closed form, used instead of quadrature.

  Attributes:
   p: (r, theta) -> p_theta(r).
   p_prime: (r, theta) -> p'_theta(r), for r > 0.
   q: (r, theta) -> q_theta(r), the inverse of p_theta.
   q_prime_at_zero: theta -> q'_theta(0+).
   sigma_tilde: optional (r, theta) -> p'(q(r)) sigma(q(r)).
  """
  p: PolarFn
  p_prime: PolarFn
  q: PolarFn
  q_prime_at_zero: Callable[[Any], Any]
  sigma_tilde: Optional[PolarFn] = None


@dataclasses.dataclass(frozen=True)
class AngularCoefficients:
  """Drift b(r, theta) and dispersion a(r, theta) = sigma(r, theta)^2.

  Attributes:
   b: the drift.
   a: the dispersion, bounded and bounded away from 0.
   scale: optional closed form of the scale function.
   name: identifier used in logs.
   angular_breakpoints: angles where b or a jump.
  """
  b: PolarFn
  a: PolarFn
  scale: Optional[ClosedFormScale] = None
  name: str = 'custom'
  angular_breakpoints: Tuple[float, ...] = ()

  def sigma(self, r, theta):
    return self.a(r, theta) ** 0.5

  def probe_angles(self) -> onp.ndarray:
    uniform = onp.arange(NUM_PROBE_ANGLES) * utils.TWO_PI / NUM_PROBE_ANGLES
    return onp.unique(onp.concatenate([uniform, self.angular_breakpoints]))

  def validate(self,
               radii: Optional[Sequence[float]] = None,
               angles: Optional[Sequence[float]] = None):
    """Checks finiteness and the dispersion floor on a probe lattice.

    For closed form scales the floor is only checked for r > 0.

    Raises:
     DomainError naming the offending probe.
    """
    radii = onp.asarray(PROBE_RADII if radii is None else radii, onp.float64)
    angles = self.probe_angles() if angles is None else onp.asarray(angles)
    if self.scale is not None:
      radii = radii[radii > 0]
    r, theta = onp.meshgrid(radii, angles, indexing='ij')
    drift = onp.broadcast_to(onp.asarray(self.b(r, theta), onp.float64),
                             r.shape)
    dispersion = onp.broadcast_to(onp.asarray(self.a(r, theta), onp.float64),
                                  r.shape)
    if not onp.all(onp.isfinite(drift)) or not onp.all(
        onp.isfinite(dispersion)):
      raise errors.DomainError(f'{self.name}: coefficients are not finite.')
    low = dispersion < DISPERSION_FLOOR
    if onp.any(low):
      i, j = onp.argwhere(low)[0]
      raise errors.DomainError(
          f'{self.name}: a({r[i, j]}, {theta[i, j]}) = {dispersion[i, j]} is '
          f'below {DISPERSION_FLOOR}.')


@functools.lru_cache(maxsize=None)
def brownian(sigma: float = 1.0) -> drivers.RadialCoefficients:
  return drivers.RadialCoefficients(lambda r: 0.0 * r,
                                    lambda r: sigma + 0.0 * r,
                                    name=f'brownian({sigma})')


@functools.lru_cache(maxsize=None)
def constant_drift(drift: float,
                   sigma: float = 1.0) -> drivers.RadialCoefficients:
  return drivers.RadialCoefficients(lambda r: drift + 0.0 * r,
                                    lambda r: sigma + 0.0 * r,
                                    name=f'constant_drift({drift}, {sigma})')


@functools.lru_cache(maxsize=None)
def linear(rate: float) -> drivers.RadialCoefficients:
  """Pure drift u0 + rate t, meant for drivers.linear_driver."""
  return drivers.RadialCoefficients(lambda r: rate + 0.0 * r,
                                    lambda r: 0.0 * r,
                                    name=f'linear({rate})')


def _check_bessel_dimension(delta: float):
  if not 1.0 < delta < 2.0:
    raise errors.DomainError(
        f'The Bessel dimension should lie in (1, 2), got {delta}.')


@functools.lru_cache(maxsize=None)
def squared_bessel(delta: float) -> drivers.RadialCoefficients:
  """dR2 = delta dt + 2 sqrt(R2) dW, to be reflected at 0."""
  _check_bessel_dimension(delta)
  return drivers.RadialCoefficients(lambda r: delta + 0.0 * r,
                                    lambda r: 2.0 * (r * (r > 0)) ** 0.5,
                                    name=f'squared_bessel({delta})')


def _pieces(value) -> PiecewiseAngular:
  return PiecewiseAngular.coerce(value)


@functools.lru_cache(maxsize=None)
def _polar_drift(rates: PiecewiseAngular) -> AngularCoefficients:
  if min(rates.values) <= 0:
    raise errors.DomainError(f'Polar drift rates should be positive: {rates}.')
  return AngularCoefficients(lambda r, t: -rates(t) + 0.0 * r,
                             lambda r, t: 1.0 + 0.0 * (r + t),
                             name='polar_drift',
                             angular_breakpoints=rates.breakpoints)


def polar_drift(rates) -> AngularCoefficients:
  """b = -lambda(theta), a = 1."""
  return _polar_drift(_pieces(rates))


@functools.lru_cache(maxsize=None)
def _angular_brownian(sigmas: PiecewiseAngular) -> AngularCoefficients:
  if min(sigmas.values) <= 0:
    raise errors.DomainError(f'Dispersions should be positive: {sigmas}.')
  return AngularCoefficients(lambda r, t: 0.0 * (r + t),
                             lambda r, t: sigmas(t)**2 + 0.0 * r,
                             name='angular_brownian',
                             angular_breakpoints=sigmas.breakpoints)


def angular_brownian(sigmas) -> AngularCoefficients:
  """b = 0, a = sigma(theta)^2."""
  return _angular_brownian(_pieces(sigmas))


@functools.lru_cache(maxsize=None)
def _bessel(deltas: PiecewiseAngular) -> AngularCoefficients:
  for delta in deltas.values:
    _check_bessel_dimension(delta)

  def exponent(t):
    return (2.0 - deltas(t)) / 2.0

  scale = ClosedFormScale(
      p=lambda r, t: r**exponent(t),
      p_prime=lambda r, t: exponent(t) * r**(exponent(t) - 1.0),
      q=lambda r, t: r**(1.0 / exponent(t)),
      q_prime_at_zero=lambda t: 0.0 * t,
      sigma_tilde=lambda r, t: (2.0 - deltas(t)) * r**(
          (1.0 - deltas(t)) / (2.0 - deltas(t))))
  return AngularCoefficients(lambda r, t: deltas(t) + 0.0 * r,
                             lambda r, t: 4.0 * r + 0.0 * t,
                             scale=scale,
                             name='bessel',
                             angular_breakpoints=deltas.breakpoints)


def bessel(deltas) -> AngularCoefficients:
  """b = delta(theta), a = 4r, with scale p_theta(r) = r^((2 - delta) / 2)."""
  return _bessel(_pieces(deltas))


RADIAL_FAMILIES = {
    'brownian': brownian,
    'constant_drift': constant_drift,
    'linear': linear,
    'squared_bessel': squared_bessel,
}

ANGULAR_FAMILIES = {
    'polar_drift': polar_drift,
    'angular_brownian': angular_brownian,
    'bessel': bessel,
}


def _freeze(value):
  if isinstance(value, (list, tuple)):
    return tuple(_freeze(v) for v in value)
  return value


def make(spec: Dict[str, Any]):
  """Builds coefficients from {'family': name, **parameters}.

  Args:
    spec: the family name and its keyword parameters.

  Returns:
    RadialCoefficients or AngularCoefficients.

  Raises:
   ArgumentError for unknown families or parameters.
  """
  spec = dict(spec)
  name = spec.pop('family', None)
  factory = RADIAL_FAMILIES.get(name) or ANGULAR_FAMILIES.get(name)
  if factory is None:
    known = sorted(RADIAL_FAMILIES) + sorted(ANGULAR_FAMILIES)
    raise errors.ArgumentError(f'Unknown family {name!r}, expecting {known}.')
  params = {k: _freeze(v) for k, v in spec.items()}
  try:
    return factory(**params)
  except TypeError as e:
    raise errors.ArgumentError(f'Bad parameters for {name}: {e}') from e


def is_angular(name: str) -> bool:
  return name in ANGULAR_FAMILIES
