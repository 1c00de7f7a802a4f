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
r"""Launch Walsh semimartingale experiments.

For example: (use verbosity 1 for debug, 0 for info, -1 for warning, etc.)

python3 -m run_experiment list
python3 -m run_experiment run --experiment=walsh-bm --out=/tmp/walsh_bm
python3 -m run_experiment run --experiment=skew-bm --n_paths=1000 \
  --gin_bindings="ExperimentConfig.grid = {'t_end': 1.0, 'n_steps': 500}"
"""
from absl import app

from walsh_sim import cli


if __name__ == '__main__':
  app.run(cli.main)
