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
"""Spinning measures: probability laws on the unit circle choosing rays.

A spinning measure is stored as a finite list of atoms plus an optional
absolutely continuous part. Angles are radians in [0, 2pi). Angle draws are
reproducible: draw number k of a stream only depends on the stream key and
on k.
"""

import dataclasses
from typing import Any, Callable, Dict, Iterable, Optional, Sequence, Tuple, Union

import jax
import jax.numpy as np
import numpy as onp
import scipy.integrate

from walsh_sim import errors
from walsh_sim import utils

TWO_PI = utils.TWO_PI
TABLE_SIZE = 4096
QUAD_TOL = 1e-10
MASS_TOL = 1e-12
ANGLE_TOL = 1e-9


@dataclasses.dataclass(frozen=True)
class AngularDensity:
  """The absolutely continuous part of a spinning measure.

  Attributes:
   kind: 'uniform' or 'table'. A table density is periodic and piecewise
    linear between equally spaced nodes 2pi j / len(values).
   values: unnormalized nonnegative node values of a table density.
   mass: total mass carried by the density.
  """
  kind: str = 'uniform'
  values: Tuple[float, ...] = ()
  mass: float = 1.0

  def __post_init__(self):
    object.__setattr__(self, 'values', tuple(float(v) for v in self.values))
    if self.kind not in ('uniform', 'table'):
      raise errors.DomainError(f'Unknown density kind {self.kind!r}.')
    if not 0.0 <= self.mass <= 1.0 + MASS_TOL:
      raise errors.DomainError(f'Density mass {self.mass} not in [0, 1].')
    scale = self.mass / TWO_PI
    if self.kind == 'table':
      values = onp.asarray(self.values)
      if values.size < 2 or onp.any(values < 0) or not onp.all(
          onp.isfinite(values)):
        raise errors.DomainError(
            'A table density needs at least 2 finite nonnegative values.')
      if values.sum() <= 0:
        raise errors.DomainError('A table density cannot vanish everywhere.')
      scale = self.mass / (TWO_PI / values.size * values.sum())
    object.__setattr__(self, '_scale', scale)

  @property
  def nodes(self) -> onp.ndarray:
    num = len(self.values)
    return TWO_PI * onp.arange(num) / num

  def __call__(self, theta):
    theta = onp.asarray(theta, dtype=onp.float64)
    if self.kind == 'uniform':
      return onp.full_like(theta, self._scale)
    values = self._scale * onp.asarray(self.values)
    return onp.interp(theta, self.nodes, values, period=TWO_PI)

  def to_dict(self) -> Dict[str, Any]:
    result = {'kind': self.kind, 'mass': self.mass}
    if self.kind == 'table':
      result['values'] = list(self.values)
    return result


@dataclasses.dataclass(frozen=True)
class AngularMoments:
  """Moments of the coordinates of a ray drawn from a spinning measure.

  Attributes:
   alpha_plus: (int cos^+ dnu, int sin^+ dnu).
   alpha_minus: (int cos^- dnu, int sin^- dnu).
  """
  alpha_plus: Tuple[float, float]
  alpha_minus: Tuple[float, float]

  @property
  def gamma(self) -> onp.ndarray:
    return onp.array([self.alpha_plus[0] - self.alpha_minus[0],
                      self.alpha_plus[1] - self.alpha_minus[1]])

  def skew_coefficient(self, coordinate: int = 0) -> float:
    """Coefficient of the coordinate local time in the skew Tanaka form.

    For a measure carried by two opposite rays, X_i solves
    X_i = x_i + int sgn(X_i) dU + kappa L^{X_i} with
    kappa = gamma_i / alpha_i^+ = 1 - alpha_i^- / alpha_i^+.

    Args:
      coordinate: 0 for x1, 1 for x2.

    Returns:
      The coefficient kappa.

    Raises:
     DomainError when the measure never charges the positive side.
    """
    plus = self.alpha_plus[coordinate]
    if plus <= MASS_TOL:
      raise errors.DomainError(
          f'alpha^+ of coordinate {coordinate} vanishes, no skew form.')
    return float(self.gamma[coordinate] / plus)


@dataclasses.dataclass(frozen=True)
class SpinningMeasure:
  """A probability measure on [0, 2pi) made of atoms plus a density.

  Attributes:
   atoms: tuple of (angle, weight) pairs with distinct angles in [0, 2pi) and
    weights in (0, 1].
   density: optional AngularDensity.
   cdf_cache: (nodes, cdf) monotone table used to invert the distribution
    function of the density part. Derived, never authoritative.
  """
  atoms: Tuple[Tuple[float, float], ...] = ()
  density: Optional[AngularDensity] = None

  def __post_init__(self):
    atoms = tuple(sorted((float(t), float(w)) for t, w in self.atoms))
    object.__setattr__(self, 'atoms', atoms)
    for theta, weight in atoms:
      if not 0.0 <= theta < TWO_PI:
        raise errors.DomainError(f'Atom angle {theta} not in [0, 2pi).')
      if not 0.0 < weight <= 1.0 + MASS_TOL:
        raise errors.DomainError(f'Atom weight {weight} not in (0, 1].')
    angles = [t for t, _ in atoms]
    if len(set(angles)) != len(angles):
      raise errors.DomainError('Atom angles must be distinct.')
    total = self.atom_mass + self.density_mass
    if abs(total - 1.0) > MASS_TOL:
      raise errors.DomainError(f'Total mass is {total!r}, expecting 1.')

    object.__setattr__(self, '_atom_angles', onp.array(angles))
    object.__setattr__(
        self, '_atom_cdf', onp.cumsum([w for _, w in atoms]))
    object.__setattr__(self, 'cdf_cache', self._density_table())

  @classmethod
  def dirac(cls, theta: float) -> 'SpinningMeasure':
    return cls(atoms=((float(utils.wrap_angle(theta)), 1.0),))

  @classmethod
  def uniform(cls) -> 'SpinningMeasure':
    return cls(density=AngularDensity('uniform', mass=1.0))

  @classmethod
  def from_atoms(cls, atoms: Iterable[Sequence[float]]) -> 'SpinningMeasure':
    return cls(atoms=tuple(
        (float(utils.wrap_angle(t)), float(w)) for t, w in atoms))

  @classmethod
  def from_dict(cls, spec: Dict[str, Any]) -> 'SpinningMeasure':
    """Builds a measure from its JSON encoding.

    Args:
      spec: {"atoms": [[theta, w], ...], "density": {"kind": "uniform" |
       "table", "mass": m, "values": [...]}} or {"gamma": [g1, g2]}.

    Returns:
      The SpinningMeasure.

    Raises:
     ArgumentError on unknown keys, DomainError on invalid measures.
    """
    if not isinstance(spec, dict):
      raise errors.ArgumentError(f'Expecting a dict, got {type(spec)}.')
    unknown = set(spec) - {'atoms', 'density', 'gamma'}
    if unknown:
      raise errors.ArgumentError(f'Unknown measure fields {sorted(unknown)}.')
    if 'gamma' in spec:
      if len(spec) > 1:
        raise errors.ArgumentError('"gamma" cannot be mixed with other fields.')
      return measure_from_gamma(spec['gamma'])

    atoms = tuple((float(t), float(w)) for t, w in spec.get('atoms', ()))
    density = None
    if spec.get('density') is not None:
      density_spec = dict(spec['density'])
      kind = density_spec.pop('kind', 'uniform')
      mass = density_spec.pop(
          'mass', 1.0 - sum(w for _, w in atoms))
      values = density_spec.pop('values', ())
      if density_spec:
        raise errors.ArgumentError(
            f'Unknown density fields {sorted(density_spec)}.')
      density = AngularDensity(kind, tuple(values), float(mass))
    return cls(atoms=atoms, density=density)

  def to_dict(self) -> Dict[str, Any]:
    result = {'atoms': [[t, w] for t, w in self.atoms]}
    if self.density is not None:
      result['density'] = self.density.to_dict()
    return result

  @property
  def atom_mass(self) -> float:
    return float(sum(w for _, w in self.atoms))

  @property
  def density_mass(self) -> float:
    return 0.0 if self.density is None else float(self.density.mass)

  @property
  def is_atomic(self) -> bool:
    return self.density is None or self.density.mass == 0.0

  def _density_table(self):
    if self.density is None or self.density.mass == 0.0:
      return None
    nodes = onp.linspace(0.0, TWO_PI, TABLE_SIZE + 1)
    cdf = scipy.integrate.cumulative_trapezoid(
        self.density(nodes), nodes, initial=0.0)
    return nodes, cdf / cdf[-1]

  def atoms_in(self, interval: Tuple[float, float]):
    lower, upper = interval
    return [(t, w) for t, w in self.atoms if lower <= t < upper]


def integrate(mu: SpinningMeasure,
              fn: Callable[[Any], Any],
              interval: Tuple[float, float] = (0.0, TWO_PI),
              breakpoints: Sequence[float] = ()) -> float:
  """Integrates fn against mu over the half-open interval [a, b).

  Atoms are summed exactly, the density part is integrated by adaptive
  quadrature to an absolute tolerance of 1e-10.

  Args:
    mu: the spinning measure.
    fn: a function of the angle, evaluated on floats.
    interval: the pair (a, b) with 0 <= a <= b <= 2pi.
    breakpoints: angles where fn is not smooth, passed on to the quadrature.

  Returns:
    The value of the integral.
  """
  lower, upper = interval
  total = sum(w * float(fn(t)) for t, w in mu.atoms_in(interval))
  density = mu.density
  if density is None or density.mass == 0.0 or upper <= lower:
    return float(total)

  kinks = list(breakpoints)
  if density.kind == 'table':
    kinks.extend(density.nodes)
  points = sorted({float(p) for p in kinks if lower < p < upper})
  value, _ = scipy.integrate.quad(
      lambda t: float(density(t)) * float(fn(t)),
      lower, upper,
      epsabs=QUAD_TOL, epsrel=QUAD_TOL,
      limit=max(200, 4 * len(points)),
      points=points or None)
  return float(total + value)


def alpha_gamma(mu: SpinningMeasure) -> AngularMoments:
  """Computes alpha^+-, gamma of a spinning measure."""
  half_pi = onp.pi / 2
  cos_kinks = (half_pi, 3 * half_pi)
  sin_kinks = (onp.pi,)
  alpha_plus = (
      integrate(mu, lambda t: max(onp.cos(t), 0.0), breakpoints=cos_kinks),
      integrate(mu, lambda t: max(onp.sin(t), 0.0), breakpoints=sin_kinks))
  alpha_minus = (
      integrate(mu, lambda t: max(-onp.cos(t), 0.0), breakpoints=cos_kinks),
      integrate(mu, lambda t: max(-onp.sin(t), 0.0), breakpoints=sin_kinks))
  return AngularMoments(alpha_plus, alpha_minus)


def measure_from_gamma(gamma: Sequence[float]) -> SpinningMeasure:
  """Two-atom spinning measure whose skew vector is gamma.

  With beta = |gamma| and z0 = gamma / beta, the measure puts mass
  (1 + beta) / 2 on z0 and (1 - beta) / 2 on -z0. When gamma = 0, z0 is the
  ray of angle 0.

  Args:
    gamma: a planar vector in the closed unit disc.

  Returns:
    A SpinningMeasure with alpha_gamma(mu).gamma == gamma.

  Raises:
   DomainError when |gamma| > 1: no Walsh semimartingale has such a skew
    vector.
  """
  g1, g2 = float(gamma[0]), float(gamma[1])
  beta = float(onp.hypot(g1, g2))
  if beta > 1.0 + MASS_TOL:
    raise errors.DomainError(
        f'|gamma| = {beta} > 1: the skew vector must lie in the closed unit '
        'disc, otherwise no Walsh semimartingale with these moments exists.')
  if abs(beta - 1.0) <= MASS_TOL:
    beta = 1.0
  theta0 = 0.0 if beta == 0.0 else float(utils.wrap_angle(onp.arctan2(g2, g1)))
  if beta == 1.0:
    return SpinningMeasure(atoms=((theta0, 1.0),))
  opposite = float(utils.wrap_angle(theta0 + onp.pi))
  return SpinningMeasure(
      atoms=((theta0, (1 + beta) / 2), (opposite, (1 - beta) / 2)))


def _check_interval(lower: float, upper: float):
  if lower > upper:
    raise errors.ArgumentError(f'Empty interval [{lower}, {upper}).')
  if lower < 0.0 or upper > TWO_PI:
    raise errors.ArgumentError(
        f'Interval [{lower}, {upper}) is not contained in [0, 2pi].')


def nu_mass(mu: SpinningMeasure, interval: Tuple[float, float]) -> float:
  """Returns nu([a, b))."""
  lower, upper = float(interval[0]), float(interval[1])
  _check_interval(lower, upper)
  return integrate(mu, lambda t: 1.0, (lower, upper))


@dataclasses.dataclass(frozen=True)
class AngleSet:
  """A finite union of disjoint half-open angle intervals [a, b)."""
  intervals: Tuple[Tuple[float, float], ...]

  def __post_init__(self):
    intervals = tuple(sorted((float(a), float(b)) for a, b in self.intervals))
    for lower, upper in intervals:
      _check_interval(lower, upper)
    for (_, upper), (lower, _) in zip(intervals[:-1], intervals[1:]):
      if lower < upper:
        raise errors.ArgumentError(f'Overlapping intervals in {intervals}.')
    object.__setattr__(self, 'intervals', intervals)

  @classmethod
  def coerce(cls, value: Union['AngleSet', Sequence[Any]]) -> 'AngleSet':
    """Accepts an AngleSet, one (a, b) pair or a list of pairs."""
    if isinstance(value, AngleSet):
      return value
    try:
      arr = onp.asarray(value, dtype=onp.float64)
    except (TypeError, ValueError) as e:
      raise errors.ArgumentError(f'Cannot read angle set {value!r}.') from e
    if arr.shape == (2,):
      arr = arr[onp.newaxis]
    if arr.ndim != 2 or arr.shape[1] != 2:
      raise errors.ArgumentError(f'Cannot read angle set {value!r}.')
    return cls(tuple(map(tuple, arr)))

  def contains(self, theta):
    theta = onp.asarray(theta, dtype=onp.float64)
    result = onp.zeros(theta.shape, dtype=bool)
    for lower, upper in self.intervals:
      result |= (theta >= lower) & (theta < upper)
    return result

  def complement(self) -> 'AngleSet':
    gaps, start = [], 0.0
    for lower, upper in self.intervals:
      if lower > start:
        gaps.append((start, lower))
      start = upper
    if start < TWO_PI:
      gaps.append((start, TWO_PI))
    return AngleSet(tuple(gaps))

  def mass(self, mu: SpinningMeasure) -> float:
    return float(sum(nu_mass(mu, interval) for interval in self.intervals))

  @property
  def breakpoints(self) -> Tuple[float, ...]:
    return tuple(x for interval in self.intervals for x in interval)


def uniform_draws(keys: np.ndarray, start: int, num: int) -> onp.ndarray:
  """Uniform draws start, ..., start + num - 1 of every key: [n_keys, num]."""
  if num == 0:
    return onp.zeros((keys.shape[0], 0))
  indices = np.arange(start, start + num, dtype=np.uint32)

  def draw(key, index):
    return jax.random.uniform(jax.random.fold_in(key, index),
                              dtype=np.float64)

  draws = jax.vmap(jax.vmap(draw, in_axes=(None, 0)), in_axes=(0, None))(
      keys, indices)
  return onp.asarray(draws)


def angles_from_uniforms(mu: SpinningMeasure, u) -> onp.ndarray:
  """Maps uniforms of [0, 1) to angles distributed according to mu."""
  u = onp.asarray(u, dtype=onp.float64)
  result = onp.empty_like(u)
  num_atoms = len(mu.atoms)

  on_atom = onp.zeros(u.shape, dtype=bool)
  if num_atoms:
    on_atom = u < mu.atom_mass if mu.cdf_cache is not None else ~on_atom
    index = onp.searchsorted(mu._atom_cdf, u[on_atom], side='right')
    result[on_atom] = mu._atom_angles[onp.minimum(index, num_atoms - 1)]

  if mu.cdf_cache is not None:
    nodes, cdf = mu.cdf_cache
    v = onp.clip((u[~on_atom] - mu.atom_mass) / mu.density_mass, 0.0, 1.0)
    upper = onp.clip(onp.searchsorted(cdf, v, side='right'), 1, len(cdf) - 1)
    lower = upper - 1
    width = cdf[upper] - cdf[lower]
    frac = onp.where(width > 0, (v - cdf[lower]) / onp.where(width > 0,
                                                             width, 1.0), 0.0)
    angles = nodes[lower] + frac * (nodes[upper] - nodes[lower])
    result[~on_atom] = utils.wrap_angle(angles)
  return result


def sample_angles(mu: SpinningMeasure,
                  rng: np.ndarray,
                  num: int,
                  start: int = 0) -> onp.ndarray:
  """Draws angles start, ..., start + num - 1 of the stream rng."""
  u = uniform_draws(np.asarray(rng)[np.newaxis, :], start, num)[0]
  return angles_from_uniforms(mu, u)


def sample_angle(mu: SpinningMeasure,
                 rng: np.ndarray,
                 draw_index: int = 0) -> float:
  """Returns the draw_index-th angle of the stream rng."""
  return float(sample_angles(mu, rng, 1, draw_index)[0])


@dataclasses.dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
  """Empirical distribution of observed angles.

  Attributes:
   angles: sorted distinct angles.
   frequencies: relative frequency of each angle.
   count: number of observations.
  """
  angles: onp.ndarray
  frequencies: onp.ndarray
  count: int

  @classmethod
  def from_samples(cls, samples, decimals: int = 12) -> 'EmpiricalMeasure':
    samples = onp.asarray(samples, dtype=onp.float64).ravel()
    if samples.size == 0:
      return cls(onp.zeros(0), onp.zeros(0), 0)
    angles, counts = onp.unique(onp.round(samples, decimals),
                                return_counts=True)
    return cls(angles, counts / samples.size, int(samples.size))

  def frequency_of(self, theta: float, tol: float = ANGLE_TOL) -> float:
    close = onp.abs(self.angles - theta) <= tol
    return float(self.frequencies[close].sum())

  def to_dict(self) -> Dict[str, Any]:
    return {'angles': self.angles.tolist(),
            'frequencies': self.frequencies.tolist(),
            'count': self.count}


AnyMeasure = Union[SpinningMeasure, EmpiricalMeasure]


def _atom_list(measure: AnyMeasure):
  if isinstance(measure, EmpiricalMeasure):
    return list(zip(measure.angles.tolist(), measure.frequencies.tolist()))
  return list(measure.atoms)


def _bin_masses(measure: AnyMeasure, edges: onp.ndarray) -> onp.ndarray:
  if isinstance(measure, EmpiricalMeasure):
    return onp.histogram(measure.angles, edges,
                         weights=measure.frequencies)[0]
  return onp.array([nu_mass(measure, (a, b))
                    for a, b in zip(edges[:-1], edges[1:])])


def total_variation(first: AnyMeasure,
                    second: AnyMeasure,
                    bins: Optional[int] = None) -> float:
  """Total variation distance between two measures on the circle.

  Atomic measures are compared atom by atom (angles matched up to 1e-9).
  As soon as one side has a density, or when bins is given, both sides are
  compared on a common regular binning of [0, 2pi).

  Args:
    first: a SpinningMeasure or an EmpiricalMeasure.
    second: a SpinningMeasure or an EmpiricalMeasure.
    bins: optional number of bins.

  Returns:
    The distance in [0, 1].
  """
  has_density = any(isinstance(m, SpinningMeasure) and not m.is_atomic
                    for m in (first, second))
  if bins is not None or has_density:
    edges = onp.linspace(0.0, TWO_PI, (bins or 32) + 1)
    return 0.5 * float(onp.abs(
        _bin_masses(first, edges) - _bin_masses(second, edges)).sum())

  merged = []
  for sign, measure in ((1.0, first), (-1.0, second)):
    for theta, weight in _atom_list(measure):
      for entry in merged:
        if abs(entry[0] - theta) <= ANGLE_TOL:
          entry[1] += sign * weight
          break
      else:
        merged.append([theta, sign * weight])
  return 0.5 * float(sum(abs(w) for _, w in merged))
