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
"""Change of variables along Walsh paths.

Test functions g are given in polar form through their radial sections
g_theta(r) = g(r, theta) and the first two radial derivatives. Along a Walsh
path driven by U,

  g(X(t)) = g(X(0)) + sum 1{X != 0} g'(X) dU + 1/2 sum 1{X != 0} g''(X) d<U>
            + (int g'_theta(0+) nu(dtheta)) L(t),

up to discretization. This module evaluates every term on simulated paths.
"""

import dataclasses
from typing import Any, Callable, Dict, Optional, Sequence, Tuple

import numpy as onp
import scipy.stats

from walsh_sim import drivers
from walsh_sim import errors
from walsh_sim import localtime
from walsh_sim import measures
from walsh_sim import unfolding

PolarFn = Callable[[onp.ndarray, onp.ndarray], onp.ndarray]
LOCAL_TIME_CLASSES = (None, 'D_mu', 'D_mu_plus')
FD_STEP = 1e-5
PROBE_RADII = (0.0, 0.05, 0.3, 1.0, 2.5)
PROBE_ANGLES = tuple(0.05 + 2 * onp.pi * j / 12 for j in range(12))
MIN_ZTEST_SAMPLES = 30


@dataclasses.dataclass(frozen=True)
class ClassDFunction:
  """A function of the plane given in polar form with radial derivatives.

  Attributes:
   name: identifier used in reports.
   g: (r, theta) -> g_theta(r), vectorized over numpy arrays.
   g1: first radial derivative, the right derivative at r = 0.
   g2: second radial derivative.
   local_time_class: 'D_mu' when int g'_theta(0+) nu(dtheta) is claimed to
    vanish, 'D_mu_plus' when it is claimed nonnegative, None otherwise.
   angular_breakpoints: angles where the sections jump, passed on to the
    quadrature of g'_theta(0+).
  """
  name: str
  g: PolarFn
  g1: PolarFn
  g2: PolarFn
  local_time_class: Optional[str] = None
  angular_breakpoints: Tuple[float, ...] = ()

  def __post_init__(self):
    if self.local_time_class not in LOCAL_TIME_CLASSES:
      raise errors.ArgumentError(
          f'Unknown local time class {self.local_time_class!r}.')

  def _evaluate(self, fn: PolarFn, r, theta) -> onp.ndarray:
    r = onp.asarray(r, dtype=onp.float64)
    # The angle is undefined at the origin, where sections agree.
    theta = onp.nan_to_num(onp.asarray(theta, dtype=onp.float64))
    shape = onp.broadcast(r, theta).shape
    return onp.broadcast_to(
        onp.asarray(fn(r, theta), dtype=onp.float64), shape)

  def value(self, r, theta) -> onp.ndarray:
    return self._evaluate(self.g, r, theta)

  def first(self, r, theta) -> onp.ndarray:
    return self._evaluate(self.g1, r, theta)

  def second(self, r, theta) -> onp.ndarray:
    return self._evaluate(self.g2, r, theta)

  def slope_integral(self, mu: measures.SpinningMeasure) -> float:
    """Returns int g'_theta(0+) nu(dtheta)."""
    return measures.integrate(mu, lambda t: float(self.first(0.0, t)),
                              breakpoints=self.angular_breakpoints)

  def validate(self, mu: Optional[measures.SpinningMeasure] = None):
    """Checks finiteness, derivatives and continuity at the origin.

    Args:
      mu: if given, also checks the claimed local_time_class.

    Raises:
     DomainError naming the first failed check.
    """
    r, theta = onp.meshgrid(PROBE_RADII, PROBE_ANGLES, indexing='ij')
    values = [self.value(r, theta), self.first(r, theta),
              self.second(r, theta)]
    if not all(onp.all(onp.isfinite(v)) for v in values):
      raise errors.DomainError(f'{self.name}: non finite values on probes.')

    h = FD_STEP
    slope = (self.value(r + h, theta) - values[0]) / h
    if onp.max(onp.abs(slope - values[1])) > max(1e-4, 10 * h):
      raise errors.DomainError(f'{self.name}: g1 is not the derivative of g.')
    curvature = (self.first(r + h, theta) - values[1]) / h
    if onp.max(onp.abs(curvature - values[2])) > max(1e-3, 100 * h):
      raise errors.DomainError(f'{self.name}: g2 is not the derivative of g1.')

    at_origin = self.value(0.0, onp.asarray(PROBE_ANGLES))
    if onp.ptp(at_origin) > 1e-12:
      raise errors.DomainError(
          f'{self.name}: g(0, theta) depends on theta, g is not continuous in '
          'the tree metric.')
    lipschitz = 1.0 + onp.max(onp.abs(values[1]))
    gap = onp.abs(values[0] - at_origin[onp.newaxis, :])
    if onp.any(gap > lipschitz * r + 1e-12):
      raise errors.DomainError(f'{self.name}: g is not Lipschitz at 0.')

    if mu is None or self.local_time_class is None:
      return
    integral = self.slope_integral(mu)
    if self.local_time_class == 'D_mu' and abs(integral) > 1e-8:
      raise errors.DomainError(
          f'{self.name}: int g\'(0+) dnu = {integral}, expecting 0.')
    if self.local_time_class == 'D_mu_plus' and integral < -1e-8:
      raise errors.DomainError(
          f'{self.name}: int g\'(0+) dnu = {integral}, expecting >= 0.')


def blend(radius: float):
  """psi = c/2 + r^3/c^2 - r^4/(2c^3) on [0, c], r above: a C^2 ramp."""
  c = float(radius)

  def psi(r, _):
    return onp.where(r < c, c / 2 + r**3 / c**2 - r**4 / (2 * c**3), r)

  def psi1(r, _):
    return onp.where(r < c, 3 * r**2 / c**2 - 2 * r**3 / c**3, 1.0)

  def psi2(r, _):
    return onp.where(r < c, 6 * r / c**2 - 6 * r**2 / c**3, 0.0)

  return psi, psi1, psi2


def indicator_of(angle_set: measures.AngleSet) -> Callable[[Any], Any]:
  return lambda theta: angle_set.contains(theta).astype(onp.float64)


def catalog(mu: measures.SpinningMeasure,
            angle_set: Any = (0.0, onp.pi),
            phi: Optional[Callable[[Any], Any]] = None,
            phi_breakpoints: Sequence[float] = (),
            blend_radius: float = 0.5) -> Dict[str, ClassDFunction]:
  """The built-in test functions, adapted to the spinning measure mu.

  Args:
    mu: the spinning measure.
    angle_set: the set A of the indicator functions g5 and g6.
    phi: bounded function of the angle defining g_phi, the indicator of
     [0, pi) by default.
    phi_breakpoints: angles where phi jumps.
    blend_radius: the radius c of the ramp g4.

  Returns:
    A dict name -> ClassDFunction with keys g1, g2, g11, g12, g22, g11_circ,
    g22_circ, g3, g4, g5, g6, g_phi.
  """
  gamma1, gamma2 = measures.alpha_gamma(mu).gamma
  angle_set = measures.AngleSet.coerce(angle_set)
  ones = lambda r, t: onp.ones_like(r * t)
  zeros = lambda r, t: onp.zeros_like(r * t)
  functions = []

  c1 = lambda t: onp.cos(t) - gamma1
  c2 = lambda t: onp.sin(t) - gamma2
  for name, c in (('g1', c1), ('g2', c2)):
    functions.append(ClassDFunction(
        name, lambda r, t, c=c: r * c(t), lambda r, t, c=c: c(t) + 0 * r,
        zeros, 'D_mu'))
  for name, ci, ck in (('g11', c1, c1), ('g12', c1, c2), ('g22', c2, c2)):
    functions.append(ClassDFunction(
        name,
        lambda r, t, ci=ci, ck=ck: r**2 * ci(t) * ck(t),
        lambda r, t, ci=ci, ck=ck: 2 * r * ci(t) * ck(t),
        lambda r, t, ci=ci, ck=ck: 2 * ci(t) * ck(t) + 0 * r,
        'D_mu'))
  for name, f in (('g11_circ', onp.cos), ('g22_circ', onp.sin)):
    functions.append(ClassDFunction(
        name,
        lambda r, t, f=f: (r * f(t))**2,
        lambda r, t, f=f: 2 * r * f(t)**2,
        lambda r, t, f=f: 2 * f(t)**2 + 0 * r,
        'D_mu'))
  functions.append(ClassDFunction('g3', lambda r, t: r + 0 * t, ones, zeros,
                                  'D_mu_plus'))
  psi, psi1, psi2 = blend(blend_radius)
  functions.append(ClassDFunction('g4', psi, psi1, psi2, 'D_mu'))

  indicator = indicator_of(angle_set)
  mass = angle_set.mass(mu)
  functions.append(ClassDFunction(
      'g5', lambda r, t: r * (indicator(t) - mass),
      lambda r, t: indicator(t) - mass + 0 * r, zeros, 'D_mu',
      angle_set.breakpoints))
  functions.append(ClassDFunction(
      'g6', lambda r, t: r * indicator(t), lambda r, t: indicator(t) + 0 * r,
      zeros, 'D_mu_plus', angle_set.breakpoints))

  if phi is None:
    phi = indicator_of(measures.AngleSet.coerce((0.0, onp.pi)))
    phi_breakpoints = (onp.pi,)
  functions.append(slope_avg_function(phi, mu, phi_breakpoints))
  return {f.name: f for f in functions}


def slope_avg_function(phi: Callable[[Any], Any],
                       mu: measures.SpinningMeasure,
                       breakpoints: Sequence[float] = ()) -> ClassDFunction:
  """g_phi(x) = |x| (phi(arg x) - int phi dnu)."""
  average = measures.integrate(mu, lambda t: float(phi(t)),
                               breakpoints=breakpoints)
  h = lambda t: onp.asarray(phi(t), dtype=onp.float64) - average
  return ClassDFunction('g_phi', lambda r, t: r * h(t),
                        lambda r, t: h(t) + 0 * r,
                        lambda r, t: onp.zeros_like(r * t), 'D_mu',
                        tuple(breakpoints))


def linear_combination(weights: Sequence[float],
                       functions: Sequence[ClassDFunction],
                       name: str = 'combination') -> ClassDFunction:
  """The ClassDFunction sum_i weights[i] functions[i]."""
  if len(weights) != len(functions):
    raise errors.ArgumentError('As many weights as functions are required.')
  pairs = list(zip(weights, functions))

  def combine(attribute):
    return lambda r, t: sum(w * getattr(f, attribute)(r, t) for w, f in pairs)

  breakpoints = sorted({b for f in functions for b in f.angular_breakpoints})
  return ClassDFunction(name, combine('value'), combine('first'),
                        combine('second'), None, tuple(breakpoints))


def generator_apply(g: ClassDFunction,
                    coeffs: drivers.RadialCoefficients,
                    x: Tuple[Any, Any]) -> onp.ndarray:
  """Returns b(r) g'(r, theta) + a(r) g''(r, theta) / 2 at x = (r, theta).

  Raises:
   DomainError at the origin, where the generator is not defined.
  """
  r = onp.asarray(x[0], dtype=onp.float64)
  theta = onp.asarray(x[1], dtype=onp.float64)
  if onp.any(r <= 0):
    raise errors.DomainError('The generator is only defined away from 0.')
  drift = onp.asarray(coeffs.b(r), dtype=onp.float64)
  diffusion = onp.asarray(coeffs.a(r), dtype=onp.float64)
  return drift * g.first(r, theta) + 0.5 * diffusion * g.second(r, theta)


def _cumulative(increments: onp.ndarray) -> onp.ndarray:
  head = onp.zeros(increments.shape[:-1] + (1,))
  return onp.concatenate([head, onp.cumsum(increments, axis=-1)], axis=-1)


@dataclasses.dataclass(frozen=True, eq=False)
class FSDecomposition:
  """Terms of the change of variables along a (batch of) Walsh path(s).

  Attributes:
   name: name of the test function.
   lhs: g(X(t_k)).
   drift_term: 1/2 sum 1{X != 0} g''(X) d<U>.
   stochastic_term: sum 1{X != 0} g'(X) dU, left point evaluation.
   localtime_term: (int g'(0+) dnu) L.
   residual: lhs - lhs(0) - the three terms.
   slope_integral: int g'_theta(0+) nu(dtheta).
  """
  name: str
  lhs: onp.ndarray
  drift_term: onp.ndarray
  stochastic_term: onp.ndarray
  localtime_term: onp.ndarray
  residual: onp.ndarray
  slope_integral: float

  @property
  def terminal_residual(self) -> onp.ndarray:
    return onp.atleast_1d(self.residual[..., -1])

  @property
  def rms(self) -> float:
    return float(onp.sqrt(onp.mean(self.terminal_residual**2)))

  @property
  def max(self) -> float:
    return float(onp.max(onp.abs(self.terminal_residual)))


def _driver_terms(w: unfolding.WalshPath,
                  driver: Optional[drivers.SamplePath],
                  variation: Optional[drivers.SamplePath]):
  driver = w.driver_path() if driver is None else driver
  variation = w.variation_path() if variation is None else variation
  drivers.check_same_grid(w.radial_path(), driver, variation)
  if driver.values.shape != onp.shape(w.radial):
    raise errors.ArgumentError(
        f'Driver shape {driver.values.shape} does not match the Walsh path.')
  return driver, variation


def fs_decompose(w: unfolding.WalshPath,
                 driver: Optional[drivers.SamplePath],
                 variation: Optional[drivers.SamplePath],
                 g: ClassDFunction,
                 mu: measures.SpinningMeasure,
                 local_time: Optional[drivers.SamplePath] = None
                 ) -> FSDecomposition:
  """Evaluates every term of the change of variables for g along w.

  Args:
    w: the WalshPath, built over the fold of driver.
    driver: the driver U, defaults to the one carried by w.
    variation: the quadratic variation <U>, defaults to the one of w.
    g: the ClassDFunction.
    mu: the spinning measure of w.
    local_time: local time of |X|, by default the Tanaka estimate.

  Returns:
    The FSDecomposition.

  Raises:
   ArgumentError on grid or shape mismatches.
  """
  driver, variation = _driver_terms(w, driver, variation)
  if local_time is None:
    local_time = localtime.lt_tanaka(w.radial_path(), driver).values
  drivers.check_same_grid(driver, local_time)

  r, theta = w.radial[..., :-1], w.angle[..., :-1]
  away = r > 0
  stochastic = _cumulative(
      onp.where(away, g.first(r, theta), 0.0) * onp.diff(driver.values))
  drift = _cumulative(
      0.5 * onp.where(away, g.second(r, theta), 0.0) *
      onp.diff(variation.values))
  slope = g.slope_integral(mu)
  localtime_term = slope * local_time.values
  lhs = g.value(w.radial, w.angle)
  residual = lhs - lhs[..., :1] - stochastic - drift - localtime_term
  return FSDecomposition(g.name, lhs, drift, stochastic, localtime_term,
                         residual, slope)


@dataclasses.dataclass(frozen=True)
class ZTest:
  """One sample z-test of a zero mean.

  Attributes:
   z: mean / (stddev / sqrt(n)).
   p_value: two sided p-value under the standard normal.
   mean: sample mean.
   stderr: standard error of the mean.
   n: sample size.
   degenerate: True when the sample standard deviation vanishes.
  """
  z: float
  p_value: float
  mean: float
  stderr: float
  n: int
  degenerate: bool

  def to_dict(self) -> Dict[str, Any]:
    return dataclasses.asdict(self)


def martingale_ztest(samples) -> ZTest:
  """Tests that terminal increments of a martingale have zero mean.

  Raises:
   ArgumentError with fewer than 30 samples.
  """
  samples = onp.ravel(onp.asarray(samples, dtype=onp.float64))
  n = samples.size
  if n < MIN_ZTEST_SAMPLES:
    raise errors.ArgumentError(
        f'The z-test needs at least {MIN_ZTEST_SAMPLES} samples, got {n}.')
  mean = float(onp.mean(samples))
  stderr = float(onp.std(samples, ddof=1) / onp.sqrt(n))
  if stderr == 0.0:
    z = 0.0 if mean == 0.0 else onp.copysign(onp.inf, mean)
    return ZTest(float(z), 1.0 if z == 0 else 0.0, mean, 0.0, n, True)
  z = float(mean / stderr)
  return ZTest(z, float(2 * scipy.stats.norm.sf(abs(z))), mean, stderr, n,
               False)


@dataclasses.dataclass(frozen=True, eq=False)
class SlopeAverage:
  """The process g_phi(X) and its stochastic integral representation.

  Attributes:
   values: g_phi(X(t_k)).
   integral: sum h_phi(X(t_k)) dU(t_k).
   error: per path sup_t |g_phi(X(t)) - g_phi(X(0)) - integral(t)|.
   ztest: z-test of the terminal increments, None below 30 paths.
  """
  values: onp.ndarray
  integral: onp.ndarray
  error: onp.ndarray
  ztest: Optional[ZTest]


def slope_avg_process(w: unfolding.WalshPath,
                      phi: Callable[[Any], Any],
                      mu: measures.SpinningMeasure,
                      driver: Optional[drivers.SamplePath] = None,
                      breakpoints: Sequence[float] = ()) -> SlopeAverage:
  """Evaluates g_phi(X) = |X| h_phi(X), h_phi = (phi(arg X) - int phi dnu).

  For a driftless driver, g_phi(X) is a martingale, equal to the stochastic
  integral of h_phi(X) against U.

  Args:
    w: the WalshPath.
    phi: bounded function of the angle.
    mu: the spinning measure of w.
    driver: the driver U, defaults to the one carried by w.
    breakpoints: angles where phi jumps.

  Returns:
    A SlopeAverage.
  """
  driver = w.driver_path() if driver is None else driver
  g = slope_avg_function(phi, mu, breakpoints)
  values = g.value(w.radial, w.angle)
  h = onp.where(w.radial > 0, g.first(w.radial, w.angle), 0.0)
  integral = _cumulative(h[..., :-1] * onp.diff(driver.values))
  increments = values - values[..., :1]
  error = onp.max(onp.abs(increments - integral), axis=-1)
  terminal = onp.atleast_1d(increments[..., -1])
  ztest = (martingale_ztest(terminal)
           if terminal.size >= MIN_ZTEST_SAMPLES else None)
  return SlopeAverage(values, integral, error, ztest)


def harrison_shepp_residual(w: unfolding.WalshPath,
                            mu: measures.SpinningMeasure,
                            driver: Optional[drivers.SamplePath] = None
                            ) -> onp.ndarray:
  """Residual of X1 = x1 + int sgn(X1) dU + kappa L^{X1}, kappa = g1 / a1+.

  Meaningful for spinning measures carried by the rays of angle 0 and pi,
  for which X1 is a skew Brownian motion when U is.

  Returns:
    The residual path(s).
  """
  driver = w.driver_path() if driver is None else driver
  kappa = measures.alpha_gamma(mu).skew_coefficient(0)
  x1 = w.x1
  integral = _cumulative(onp.sign(x1[..., :-1]) * onp.diff(driver.values))
  component = localtime.component_local_time(w, 0, method='tanaka')
  return x1 - x1[..., :1] - integral - kappa * component.values.values


def residual_report(decomposition: FSDecomposition,
                    g_name: str,
                    grid: drivers.TimeGrid,
                    ztest: Optional[ZTest] = None) -> Dict[str, Any]:
  """Residual report {g_name, dt, T, n_paths, rms_residual, ...}."""
  return {
      'g_name': g_name,
      'dt': grid.dt,
      'T': grid.t_end,
      'n_paths': int(decomposition.terminal_residual.size),
      'rms_residual': decomposition.rms,
      'max_residual': decomposition.max,
      'ztest': None if ztest is None else ztest.to_dict(),
  }
