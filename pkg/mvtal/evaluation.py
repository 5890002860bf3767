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
"""重叠分数（os）评测：成对 os、10 秒资格规则、最优匹配与语料平均。

两个匹配器共用同一目标函数和同一并列规则：
- 目标：在合格边上最大化 Σ(os + κ)，κ 很小，总 os 相同时匹配对数多者优先；
- 总值相差不超过 1e-11 视为并列，取字典序最小的配对列表：按 gt 序号依次比较，
  预测序号小者优先，匹配优先于不匹配。
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from mvtal.errors import CapacityError, UnknownVideoError
from mvtal.formats import read_segments_csv
from mvtal.types import ActionSegment, SegmentSet
from mvtal.utils import atomic_write_text, interval_overlap_seconds

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

ELIGIBILITY_WINDOW_S = 10.0
BRUTEFORCE_LIMIT = 9

_ELIGIBILITY_EPSILON = 1e-9
_PAIR_BONUS = 1e-9
_TIE_TOLERANCE = 1e-11

# 配对列表中用 None 表示该 gt 不匹配
Assignment = Tuple[Optional[int], ...]


def pairwise_os(gt: ActionSegment, pred: ActionSegment) -> float:
    """交集 / 并集跨度，不检查类别。"""
    intersection, union = interval_overlap_seconds((gt.start_s, gt.end_s), (pred.start_s, pred.end_s))
    return intersection / union


def eligible(gt: ActionSegment, pred: ActionSegment) -> bool:
    """同类，且起点、终点与 gt 的偏差都不超过 10 秒（含边界）。"""
    limit = ELIGIBILITY_WINDOW_S + _ELIGIBILITY_EPSILON
    return (gt.class_id == pred.class_id and abs(pred.start_s - gt.start_s) <= limit
            and abs(pred.end_s - gt.end_s) <= limit)


@dataclass(frozen=True)
class MatchedPair:
    gt_index: int
    pred_index: int
    os: float


@dataclass(frozen=True)
class MatchResult:
    """单个视频的匹配结果，序号指向 SegmentSet.segments 中的位置。"""

    pairs: Tuple[MatchedPair, ...]
    unmatched_gt: Tuple[int, ...]
    unmatched_pred: Tuple[int, ...]
    total_score: float

    @property
    def denominator(self) -> int:
        return len(self.pairs) + len(self.unmatched_gt) + len(self.unmatched_pred)

    @property
    def average_score(self) -> float:
        # 两边都为空时记 0
        if self.denominator == 0:
            return 0.0
        return self.total_score / self.denominator

    def to_dict(self) -> Dict:
        return {
            "pairs": [{
                "gt_index": p.gt_index,
                "pred_index": p.pred_index,
                "os": p.os
            } for p in self.pairs],
            "unmatched_gt": list(self.unmatched_gt),
            "unmatched_pred": list(self.unmatched_pred),
            "total_score": self.total_score,
            "denominator": self.denominator,
            "average_score": self.average_score,
        }


# ---------------------------------------------------------------------------
# 公共部分
# ---------------------------------------------------------------------------


class _Problem:
    """预先算好的 os 矩阵与资格掩码。"""

    def __init__(self, gt: SegmentSet, pred: SegmentSet):
        self.num_gt = len(gt.segments)
        self.num_pred = len(pred.segments)
        self.os = np.zeros((self.num_gt, self.num_pred), dtype=np.float64)
        self.allowed = np.zeros((self.num_gt, self.num_pred), dtype=bool)
        for i, g in enumerate(gt.segments):
            for j, p in enumerate(pred.segments):
                if eligible(g, p):
                    self.allowed[i, j] = True
                    self.os[i, j] = pairwise_os(g, p)

    def objective(self, assignment: Assignment) -> float:
        return math.fsum(float(self.os[i, j]) + _PAIR_BONUS for i, j in enumerate(assignment) if j is not None)

    def options(self, i: int, used: set) -> Iterator[Optional[int]]:
        """gt i 的可选项，按并列规则的优先顺序：预测序号升序，最后是不匹配。"""
        for j in range(self.num_pred):
            if self.allowed[i, j] and j not in used:
                yield j
        yield None

    def result(self, assignment: Assignment) -> MatchResult:
        pairs = tuple(
            MatchedPair(gt_index=i, pred_index=j, os=float(self.os[i, j])) for i, j in enumerate(assignment)
            if j is not None)
        total = 0.0
        for pair in pairs:
            total += pair.os
        matched_pred = {pair.pred_index for pair in pairs}
        return MatchResult(pairs=pairs,
                           unmatched_gt=tuple(i for i, j in enumerate(assignment) if j is None),
                           unmatched_pred=tuple(j for j in range(self.num_pred) if j not in matched_pred),
                           total_score=total)


# ---------------------------------------------------------------------------
# 穷举
# ---------------------------------------------------------------------------


def _enumerate(problem: _Problem) -> Iterator[Assignment]:
    """按字典序（并列规则的顺序）枚举全部合格的部分单射。"""
    chosen: List[Optional[int]] = []
    used: set = set()

    def _walk(i: int) -> Iterator[Assignment]:
        if i == problem.num_gt:
            yield tuple(chosen)
            return
        for j in problem.options(i, used):
            chosen.append(j)
            if j is not None:
                used.add(j)
            yield from _walk(i + 1)
            chosen.pop()
            if j is not None:
                used.discard(j)

    return _walk(0)


def match_bruteforce(gt: SegmentSet, pred: SegmentSet) -> MatchResult:
    """枚举所有合格的部分匹配，作为最优匹配的参照实现。

    参数:
        gt: 真值片段，最多 9 个。
        pred: 预测片段，最多 9 个。
    """
    if len(gt.segments) > BRUTEFORCE_LIMIT or len(pred.segments) > BRUTEFORCE_LIMIT:
        raise CapacityError(f"穷举匹配最多支持 {BRUTEFORCE_LIMIT} 个片段，实际 gt={len(gt.segments)}, "
                            f"pred={len(pred.segments)}")
    problem = _Problem(gt, pred)
    best_value = max(problem.objective(a) for a in _enumerate(problem))
    # 按字典序第一个达到最优（容差内）的匹配
    for assignment in _enumerate(problem):
        if problem.objective(assignment) >= best_value - _TIE_TOLERANCE:
            return problem.result(assignment)
    raise AssertionError("unreachable")


# ---------------------------------------------------------------------------
# 匈牙利算法
# ---------------------------------------------------------------------------


def _solve(problem: _Problem, rows: Sequence[int], cols: Sequence[int]) -> Dict[int, Optional[int]]:
    """在给定的 gt 行和预测列子集上求最大权部分匹配。

    用 (n+m)×(n+m) 扩展矩阵：右上角对角线表示 gt 不匹配，左下角对角线表示预测不匹配，
    右下角为零，禁止的边为 +inf。
    """
    n, m = len(rows), len(cols)
    if n == 0:
        return {}
    if m == 0:
        return {i: None for i in rows}
    size = n + m
    cost = np.full((size, size), np.inf)
    sub_os = problem.os[np.ix_(rows, cols)]
    sub_allowed = problem.allowed[np.ix_(rows, cols)]
    cost[:n, :m] = np.where(sub_allowed, -(sub_os + _PAIR_BONUS), np.inf)
    cost[np.arange(n), m + np.arange(n)] = 0.0
    cost[n + np.arange(m), np.arange(m)] = 0.0
    cost[n:, m:] = 0.0
    row_ind, col_ind = linear_sum_assignment(cost)
    solution: Dict[int, Optional[int]] = {}
    for r, c in zip(row_ind, col_ind):
        if r < n:
            solution[rows[r]] = cols[c] if c < m else None
    return solution


def match_optimal(gt: SegmentSet, pred: SegmentSet) -> MatchResult:
    """最大权二分匹配（scipy linear_sum_assignment），任意规模。

    先求最优值，再按 gt 顺序逐行固定选项、对剩余部分重新求解，得到与穷举一致的并列结果。
    """
    problem = _Problem(gt, pred)
    all_rows = list(range(problem.num_gt))
    all_cols = list(range(problem.num_pred))
    if problem.num_gt == 0 or problem.num_pred == 0 or not problem.allowed.any():
        return problem.result(tuple([None] * problem.num_gt))

    solution = _solve(problem, all_rows, all_cols)
    best_value = problem.objective(tuple(solution[i] for i in all_rows))

    fixed: List[Optional[int]] = []
    used: set = set()
    for i in all_rows:
        rest_rows = all_rows[i + 1:]
        for j in problem.options(i, used):
            taken = used | ({j} if j is not None else set())
            rest = _solve(problem, rest_rows, [c for c in all_cols if c not in taken])
            candidate = tuple(fixed + [j] + [rest[r] for r in rest_rows])
            if problem.objective(candidate) >= best_value - _TIE_TOLERANCE:
                fixed.append(j)
                used = taken
                break
        else:
            raise AssertionError(f"row {i} has no completion reaching the optimum")
    return problem.result(tuple(fixed))


# ---------------------------------------------------------------------------
# 文件级评测
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvaluationReport:
    """语料级评测结果，videos 保持 gt 文件中的视频顺序。"""

    videos: Dict[str, MatchResult] = field(default_factory=dict)

    @property
    def total_score(self) -> float:
        return math.fsum(result.total_score for result in self.videos.values())

    @property
    def denominator(self) -> int:
        return sum(result.denominator for result in self.videos.values())

    @property
    def corpus_score(self) -> float:
        """各视频 (Σos, 分母) 汇总后相除，等价于按活动数加权的视频平均。"""
        if self.denominator == 0:
            return 0.0
        return self.total_score / self.denominator

    def to_dict(self) -> Dict:
        return {
            "corpus_score": self.corpus_score,
            "total_score": self.total_score,
            "denominator": self.denominator,
            "videos": {video_id: result.to_dict() for video_id, result in self.videos.items()},
        }


def evaluate_sets(gt_sets: Sequence[SegmentSet],
                  pred_sets: Sequence[SegmentSet],
                  threads: Optional[int] = None) -> EvaluationReport:
    """逐视频最优匹配后汇总。gt 中有而预测中没有的视频视为空预测。

    参数:
        gt_sets: 每个视频的真值。
        pred_sets: 每个视频的预测，video_id 必须出现在 gt 中。
        threads: 并行线程数，None 或 1 表示串行。
    """
    gt_by_video = {s.video_id: s for s in gt_sets}
    pred_by_video: Dict[str, SegmentSet] = {}
    for s in pred_sets:
        if s.video_id not in gt_by_video:
            raise UnknownVideoError(f"预测中出现了真值里没有的视频: {s.video_id}")
        pred_by_video[s.video_id] = s

    video_ids = list(gt_by_video)
    jobs = [(gt_by_video[v], pred_by_video.get(v, SegmentSet(video_id=v, segments=()))) for v in video_ids]
    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda job: match_optimal(*job), jobs))
    else:
        results = [match_optimal(*job) for job in jobs]

    report = EvaluationReport(videos=dict(zip(video_ids, results)))
    logger.debug(f'evaluated {len(video_ids)} videos, corpus score {report.corpus_score:.4f}')
    return report


def evaluate_files(gt_path: PathLike, pred_path: PathLike, threads: Optional[int] = None) -> EvaluationReport:
    """读取真值与预测片段 CSV 并评测。"""
    gt_sets = read_segments_csv(gt_path)
    pred_sets = read_segments_csv(pred_path)
    logger.info(f'evaluating {len(pred_sets)} predicted videos against {len(gt_sets)} ground-truth videos')
    return evaluate_sets(gt_sets, pred_sets, threads=threads)


def write_evaluation_report(report: EvaluationReport, path: PathLike) -> None:
    atomic_write_text(path, json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n")
