# Copyright 2025-2026 vanilla1108
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

from .election import aggregate, elect, elect_trace, filter, merge, select
from .evaluation import evaluate_files, match_bruteforce, match_optimal, pairwise_os
from .types import ActionSegment, ElectionConfig, ProbabilityTensor, SegmentSet

__all__ = [
    'aggregate',
    'filter',
    'merge',
    'select',
    'elect',
    'elect_trace',
    'pairwise_os',
    'match_bruteforce',
    'match_optimal',
    'evaluate_files',
    'ActionSegment',
    'ElectionConfig',
    'ProbabilityTensor',
    'SegmentSet',
]
