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
"""Statistical checks and the artifacts written at the end of a run."""

import dataclasses
import glob
import hashlib
import json
import math
import os
import os.path
from typing import Any, Dict, NamedTuple, Optional, Sequence, Tuple

from absl import logging
import numpy as onp
import pandas as pd
import scipy.stats

DEFAULT_ALPHA = 0.01
MIN_EXPECTED = 5.0
SUMMARY_FILE = 'summary.json'
MANIFEST_FILE = 'manifest.json'


@dataclasses.dataclass
class TestResult:
  """Outcome of a named check.

  Attributes:
   passed: whether the check passed.
   statistic: the test statistic, if any.
   p_value: the p-value, if any.
   details: further JSON friendly values.
  """
  passed: bool
  statistic: Optional[float] = None
  p_value: Optional[float] = None
  details: Dict[str, Any] = dataclasses.field(default_factory=dict)

  def to_dict(self) -> Dict[str, Any]:
    details = dict(self.details)
    if self.statistic is not None:
      details['statistic'] = self.statistic
    if self.p_value is not None:
      details['p_value'] = self.p_value
    return {'passed': bool(self.passed), 'details': details}


class Histogram(NamedTuple):
  edges: onp.ndarray
  counts: onp.ndarray

  def to_frame(self) -> pd.DataFrame:
    return pd.DataFrame({'bin_left': self.edges[:-1],
                         'bin_right': self.edges[1:],
                         'count': self.counts.astype(int)})


@dataclasses.dataclass
class Report:
  """Statistics, tests, histograms and frames produced by an experiment."""
  statistics: Dict[str, Any] = dataclasses.field(default_factory=dict)
  tests: Dict[str, TestResult] = dataclasses.field(default_factory=dict)
  histograms: Dict[str, Histogram] = dataclasses.field(default_factory=dict)
  frames: Dict[str, pd.DataFrame] = dataclasses.field(default_factory=dict)


def histogram(values, bins=20, value_range=None) -> Histogram:
  values = onp.asarray(values, dtype=onp.float64).ravel()
  counts, edges = onp.histogram(values[onp.isfinite(values)], bins=bins,
                                range=value_range)
  return Histogram(edges, counts)


def _merge_small_bins(observed: onp.ndarray, expected: onp.ndarray,
                      min_expected: float):
  """Merges consecutive bins until each expects at least min_expected."""
  merged_obs, merged_exp = [], []
  acc_obs, acc_exp = 0.0, 0.0
  for o, e in zip(observed, expected):
    acc_obs += o
    acc_exp += e
    if acc_exp >= min_expected:
      merged_obs.append(acc_obs)
      merged_exp.append(acc_exp)
      acc_obs, acc_exp = 0.0, 0.0
  if acc_exp > 0 or acc_obs > 0:
    if merged_exp:
      merged_obs[-1] += acc_obs
      merged_exp[-1] += acc_exp
    else:
      merged_obs.append(acc_obs)
      merged_exp.append(acc_exp)
  return onp.array(merged_obs), onp.array(merged_exp)


def chi_square_gof(observed: Sequence[float],
                   probabilities: Sequence[float],
                   alpha: float = DEFAULT_ALPHA,
                   min_expected: float = MIN_EXPECTED) -> TestResult:
  """Pearson goodness of fit of counts against cell probabilities.

  Args:
    observed: the observed counts per cell.
    probabilities: the cell probabilities under the null, renormalized.
    alpha: the significance level.
    min_expected: cells expecting fewer counts are merged with their
     neighbours.

  Returns:
    A TestResult, passed when the p-value exceeds alpha.
  """
  observed = onp.asarray(observed, dtype=onp.float64)
  probabilities = onp.asarray(probabilities, dtype=onp.float64)
  if observed.shape != probabilities.shape:
    raise ValueError(f'Shapes differ: {observed.shape}, {probabilities.shape}.')
  total = observed.sum()
  expected = total * probabilities / probabilities.sum()
  observed, expected = _merge_small_bins(observed, expected, min_expected)
  details = {'n': int(total), 'cells': int(observed.size)}
  if observed.size < 2:
    return TestResult(True, 0.0, 1.0, details)
  statistic, p_value = scipy.stats.chisquare(observed, expected)
  return TestResult(bool(p_value > alpha), float(statistic), float(p_value),
                    details)


def binomial_interval(successes: int,
                      trials: int,
                      confidence: float = 0.99) -> Tuple[float, float]:
  """Wilson score interval of a binomial proportion."""
  interval = scipy.stats.binomtest(int(successes), int(trials)).proportion_ci(
      confidence_level=confidence, method='wilson')
  return float(interval.low), float(interval.high)


def binomial_check(successes: int,
                   trials: int,
                   target: float,
                   confidence: float = 0.99) -> TestResult:
  lower, upper = binomial_interval(successes, trials, confidence)
  return TestResult(lower <= target <= upper,
                    details={'estimate': successes / max(trials, 1),
                             'target': target, 'lower': lower, 'upper': upper,
                             'n': int(trials)})


def ks_two_sample(first, second, alpha: float = DEFAULT_ALPHA) -> TestResult:
  result = scipy.stats.ks_2samp(onp.ravel(first), onp.ravel(second))
  return TestResult(bool(result.pvalue > alpha), float(result.statistic),
                    float(result.pvalue),
                    {'n1': int(onp.size(first)), 'n2': int(onp.size(second))})


def contingency_test(table, alpha: float = DEFAULT_ALPHA) -> TestResult:
  """Chi-square independence test, rows and columns without counts dropped."""
  table = onp.asarray(table, dtype=onp.float64)
  table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
  if min(table.shape) < 2:
    return TestResult(True, 0.0, 1.0, {'shape': list(table.shape)})
  statistic, p_value, dof, _ = scipy.stats.chi2_contingency(table)
  return TestResult(bool(p_value > alpha), float(statistic), float(p_value),
                    {'dof': int(dof)})


def _to_json(value):
  """Recursively converts numpy values, NaN and infinities become null."""
  if isinstance(value, dict):
    return {str(k): _to_json(v) for k, v in value.items()}
  if isinstance(value, (list, tuple)):
    return [_to_json(v) for v in value]
  if isinstance(value, onp.ndarray):
    return _to_json(value.tolist())
  if isinstance(value, (onp.bool_, bool)):
    return bool(value)
  if isinstance(value, (onp.integer, int)):
    return int(value)
  if isinstance(value, (onp.floating, float)):
    value = float(value)
    return value if math.isfinite(value) else None
  return value


def _sha256(filename: str) -> str:
  digest = hashlib.sha256()
  with open(filename, 'rb') as fp:
    for chunk in iter(lambda: fp.read(1 << 16), b''):
      digest.update(chunk)
  return digest.hexdigest()


class Metrics:
  """Collects what a run produces and exports it to a working directory."""

  def __init__(self,
               workdir: Optional[str] = None,
               experiment: str = '',
               params: Optional[Dict[str, Any]] = None,
               n_paths: int = 0,
               seed: int = 0):
    self.workdir = workdir
    self.experiment = experiment
    self.params = dict(params or {})
    self.n_paths = n_paths
    self.seed = seed
    self.statistics = {}
    self.test_results = {}
    self.histograms = {}
    self.frames = {}

  def update(self, **statistics):
    self.statistics.update(statistics)

  def add_test(self, name: str, result: TestResult):
    level = logging.INFO if result.passed else logging.WARNING
    logging.log(level, 'Test %s: %s.', name,
                'passed' if result.passed else 'FAILED')
    self.test_results[name] = result

  def add_histogram(self, name: str, hist: Histogram):
    self.histograms[name] = hist

  def add_frame(self, name: str, frame: pd.DataFrame):
    self.frames[name] = frame

  def add_report(self, report: Report, prefix: str = ''):
    """Merges a Report, its names prefixed by prefix."""
    self.update(**{prefix + k: v for k, v in report.statistics.items()})
    for name, result in report.tests.items():
      self.add_test(prefix + name, result)
    for name, hist in report.histograms.items():
      self.add_histogram(prefix + name, hist)
    for name, frame in report.frames.items():
      self.add_frame(prefix + name, frame)

  @property
  def all_passed(self) -> bool:
    return all(r.passed for r in self.test_results.values())

  def summary(self) -> Dict[str, Any]:
    return _to_json({
        'experiment': self.experiment,
        'params': self.params,
        'n_paths': self.n_paths,
        'seed': self.seed,
        'statistics': self.statistics,
        'test_results': {k: v.to_dict() for k, v in self.test_results.items()},
    })

  def load(self):
    """Loads a summary and the histograms back from the working directory."""
    with open(os.path.join(self.workdir, SUMMARY_FILE), 'r') as fp:
      summary = json.load(fp)
    self.experiment = summary['experiment']
    self.params = summary['params']
    self.n_paths = summary['n_paths']
    self.seed = summary['seed']
    self.statistics = summary['statistics']
    self.test_results = {
        k: TestResult(v['passed'], details=v['details'])
        for k, v in summary['test_results'].items()}
    for filename in glob.glob(os.path.join(self.workdir, 'hist_*.csv')):
      name = os.path.basename(filename)[len('hist_'):-len('.csv')]
      frame = pd.read_csv(filename)
      edges = onp.append(frame['bin_left'].values, frame['bin_right'].values[-1:])
      self.histograms[name] = Histogram(edges, frame['count'].values)

  def export(self):
    """Writes summary, histograms, frames and the manifest to workdir."""
    if self.workdir is None:
      return

    if not os.path.exists(self.workdir):
      os.makedirs(self.workdir)

    files = []
    output_file = os.path.join(self.workdir, SUMMARY_FILE)
    with open(output_file, 'w') as fp:
      json.dump(self.summary(), fp, sort_keys=True, indent=2, allow_nan=False)
      fp.write('\n')
    files.append(output_file)

    tables = [(f'hist_{k}', v.to_frame()) for k, v in self.histograms.items()]
    tables += list(self.frames.items())
    for name, frame in sorted(tables, key=lambda item: item[0]):
      output_file = os.path.join(self.workdir, f'{name}.csv')
      frame.to_csv(output_file, index=False, float_format='%.17g', na_rep='')
      files.append(output_file)

    manifest = {
        os.path.basename(f): {'sha256': _sha256(f),
                              'size': os.path.getsize(f)} for f in files}
    with open(os.path.join(self.workdir, MANIFEST_FILE), 'w') as fp:
      json.dump(manifest, fp, sort_keys=True, indent=2)
      fp.write('\n')
    logging.info('Exported %d files to %s.', len(files) + 1, self.workdir)

  def merge(self, other: 'Metrics'):
    """Merges the statistics and tests of another object with the current."""
    self.statistics.update(other.statistics)
    self.test_results.update(other.test_results)
    self.histograms.update(other.histograms)
    self.frames.update(other.frames)
