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
"""选举后处理：聚合（AGG）、过滤（FLTR）、合并（MRG）、选择（SEL）。

输入 (T, K, M) 概率张量，每类输出至多一个片段。各类在聚合之后互相独立。
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from mvtal.errors import ContractViolation, ShapeError
from mvtal.types import (
    ActionSegment,
    AggregatedSignal,
    Candidate,
    ElectionConfig,
    FallbackMode,
    ProbabilityTensor,
    SegmentSet,
    TimeBase,
)
from mvtal.utils import frames_to_seconds, round_half_away_from_zero

logger = logging.getLogger(__name__)

_WEIGHT_SUM_TOLERANCE = 1e-9

_EMPTY_RUNS = (np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))


# ---------------------------------------------------------------------------
# 数组内核（filter / merge / 调参共用）
# ---------------------------------------------------------------------------


def aggregate_class(values: np.ndarray, class_id: int, weights_row: np.ndarray) -> np.ndarray:
    """单类聚合 p'[:, c] = Σ_m ω[c, m]·p[:, c, m]。

    各视角权重相等时直接取视角均值，使均匀 ω 与“直接平均”逐位一致。
    """
    per_view = values[:, class_id, :]
    if np.all(weights_row == weights_row[0]):
        return per_view.mean(axis=-1)
    return (per_view * weights_row[np.newaxis, :]).sum(axis=-1)


def runs_above(signal: np.ndarray, threshold: float) -> Tuple[np.ndarray, np.ndarray]:
    """严格大于阈值的极大连续帧段，返回 (starts, ends)，两端闭区间。"""
    above = signal > threshold
    if not above.any():
        return _EMPTY_RUNS
    padded = np.concatenate(([False], above, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return edges[0::2], edges[1::2] - 1


def merge_runs(starts: np.ndarray, ends: np.ndarray, gap_frames: int) -> Tuple[np.ndarray, np.ndarray]:
    """相邻段间隔帧数 (next.start - prev.end - 1) < gap_frames 时合并，迭代到不动点。"""
    if len(starts) <= 1 or gap_frames <= 0:
        return starts, ends
    while True:
        gaps = starts[1:] - ends[:-1] - 1
        keep = gaps >= gap_frames
        if keep.all():
            return starts, ends
        starts = np.concatenate((starts[:1], starts[1:][keep]))
        ends = np.concatenate((ends[:-1][keep], ends[-1:]))


def prefix_sums(signal: np.ndarray) -> np.ndarray:
    return np.concatenate(([0.0], np.cumsum(signal)))


def span_means(prefix: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    return (prefix[ends + 1] - prefix[starts]) / (ends - starts + 1)


def _winner_index(starts: np.ndarray, ends: np.ndarray, means: np.ndarray) -> int:
    # 均值最大；并列取起点更早，再取更长
    order = np.lexsort((-(ends - starts), starts, -means))
    return int(order[0])


def _frames_to_segment(class_id: int, start_frame: int, end_frame: int, tb: TimeBase) -> ActionSegment:
    start_s = round_half_away_from_zero(frames_to_seconds(start_frame, tb))
    end_s = round_half_away_from_zero(frames_to_seconds(end_frame, tb))
    if end_s <= start_s:
        end_s = start_s + 1
    return ActionSegment(class_id=class_id, start_s=float(start_s), end_s=float(end_s))


def _peak_segment(class_id: int, signal: np.ndarray, tb: TimeBase) -> ActionSegment:
    """以 argmax 帧为中心的 1 秒片段，截断到 [0, T/fps] 后取整。

    取整后仍落在 [0, T/fps] 内：结束时间向上越界时改为向下取整，补 1 秒时越界则整段左移。
    视频短于 1 秒时只能输出 (0, 1)。
    """
    peak = int(np.argmax(signal))
    center = frames_to_seconds(peak, tb)
    limit = len(signal) / tb.fps
    start_s = round_half_away_from_zero(max(center - 0.5, 0.0))
    end_s = round_half_away_from_zero(min(center + 0.5, limit))
    if end_s > limit:
        end_s = math.floor(limit)
    if end_s <= start_s:
        end_s = start_s + 1
        if end_s > limit and start_s > 0:
            start_s, end_s = start_s - 1, start_s
    return ActionSegment(class_id=class_id, start_s=float(start_s), end_s=float(end_s))


def elect_signal(signal: np.ndarray,
                 class_id: int,
                 threshold: float,
                 gap_frames: int,
                 tb: TimeBase,
                 fallback: FallbackMode = FallbackMode.ARGMAX_PEAK,
                 prefix: Optional[np.ndarray] = None) -> Optional[ActionSegment]:
    """单类的 过滤→合并→选择，只用数组，不构造候选对象（供调参反复调用）。"""
    starts, ends = runs_above(signal, threshold)
    if len(starts) == 0:
        if fallback == FallbackMode.ARGMAX_PEAK:
            return _peak_segment(class_id, signal, tb)
        return None
    starts, ends = merge_runs(starts, ends, gap_frames)
    if prefix is None:
        prefix = prefix_sums(signal)
    best = _winner_index(starts, ends, span_means(prefix, starts, ends))
    return _frames_to_segment(class_id, int(starts[best]), int(ends[best]), tb)


# ---------------------------------------------------------------------------
# 四个步骤
# ---------------------------------------------------------------------------


def aggregate(p: ProbabilityTensor, weights: Union[np.ndarray, Sequence[Sequence[float]]]) -> AggregatedSignal:
    """聚合（AGG）：按每类的视角权重对各视角概率做凸组合。

    参数:
        p: (T, K, M) 概率张量。
        weights: (K, M) 权重，每行和为 1。
    """
    weight_matrix = np.asarray(weights, dtype=np.float64)
    if weight_matrix.shape != (p.num_classes, p.num_views):
        raise ShapeError(f"ω 形状应为 {(p.num_classes, p.num_views)}，实际 {weight_matrix.shape}")
    row_sums = weight_matrix.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > _WEIGHT_SUM_TOLERANCE) or np.any(weight_matrix < 0):
        raise ContractViolation("ω 每行必须非负且和为 1")
    columns = [aggregate_class(p.values, c, weight_matrix[c]) for c in range(p.num_classes)]
    return AggregatedSignal(values=np.stack(columns, axis=1))


def filter(p_agg: AggregatedSignal, thresholds: Sequence[float]) -> List[List[Candidate]]:
    """过滤（FLTR）：每类取 p' 严格超过阈值的极大连续帧段作为初始候选。

    返回按类组织的候选列表，每类内部按起点升序。
    """
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.shape != (p_agg.num_classes,):
        raise ShapeError(f"需要 {p_agg.num_classes} 个阈值，实际形状 {thresholds.shape}")
    per_class = []
    for class_id in range(p_agg.num_classes):
        signal = p_agg.values[:, class_id]
        starts, ends = runs_above(signal, float(thresholds[class_id]))
        means = span_means(prefix_sums(signal), starts, ends) if len(starts) else []
        per_class.append([
            Candidate(class_id=class_id, start_frame=int(s), end_frame=int(e), mean_score=float(m))
            for s, e, m in zip(starts, ends, means)
        ])
    return per_class


def merge(cands: Sequence[Candidate], gap_frames: int, p_agg: AggregatedSignal) -> List[Candidate]:
    """合并（MRG）：相邻候选之间的间隔帧数小于 gap_frames 时合并为一个，重复到无可合并。

    合并后的 mean_score 在包含间隙帧的完整区间上重新计算。

    参数:
        cands: 同一类、按起点排序且互不重叠的候选。
        gap_frames: 合并阈值（帧）。
        p_agg: 聚合信号，用于重算均值。
    """
    if not cands:
        return []
    class_id = cands[0].class_id
    for prev, nxt in zip(cands, cands[1:]):
        if nxt.class_id != class_id:
            raise ContractViolation(f"merge 只接受同一类的候选，出现了 {class_id} 和 {nxt.class_id}")
        if nxt.start_frame <= prev.end_frame:
            raise ContractViolation(
                f"候选未排序或重叠: [{prev.start_frame}, {prev.end_frame}] 与 [{nxt.start_frame}, {nxt.end_frame}]")
    if cands[-1].end_frame >= p_agg.num_frames:
        raise ContractViolation(f"候选越界: end_frame {cands[-1].end_frame} >= T {p_agg.num_frames}")

    starts = np.array([c.start_frame for c in cands], dtype=np.int64)
    ends = np.array([c.end_frame for c in cands], dtype=np.int64)
    merged_starts, merged_ends = merge_runs(starts, ends, gap_frames)
    if len(merged_starts) == len(starts):
        return list(cands)
    means = span_means(prefix_sums(p_agg.values[:, class_id]), merged_starts, merged_ends)
    return [
        Candidate(class_id=class_id, start_frame=int(s), end_frame=int(e), mean_score=float(m))
        for s, e, m in zip(merged_starts, merged_ends, means)
    ]


@dataclass(frozen=True)
class ClassElection:
    """单类的选举过程记录。"""

    class_id: int
    threshold: float
    candidates: Tuple[Candidate, ...]
    merged: Tuple[Candidate, ...]
    winner: Optional[Candidate]
    segment: Optional[ActionSegment]

    @property
    def fallback_used(self) -> bool:
        return self.winner is None and self.segment is not None


def _select_class(class_id: int, merged: Sequence[Candidate], p_agg: AggregatedSignal, tb: TimeBase,
                  fallback: FallbackMode) -> Tuple[Optional[Candidate], Optional[ActionSegment]]:
    if not merged:
        if fallback == FallbackMode.ARGMAX_PEAK:
            return None, _peak_segment(class_id, p_agg.values[:, class_id], tb)
        return None, None
    starts = np.array([c.start_frame for c in merged], dtype=np.int64)
    ends = np.array([c.end_frame for c in merged], dtype=np.int64)
    means = np.array([c.mean_score for c in merged], dtype=np.float64)
    winner = merged[_winner_index(starts, ends, means)]
    return winner, _frames_to_segment(class_id, winner.start_frame, winner.end_frame, tb)


def select(cands_per_class: Sequence[Sequence[Candidate]],
           p_agg: AggregatedSignal,
           tb: TimeBase,
           fallback: FallbackMode = FallbackMode.ARGMAX_PEAK) -> List[ActionSegment]:
    """选择（SEL）：每类取平均分最高的候选，换算为秒并四舍五入到整秒。

    并列时取起点更早者，再取更长者。某类没有候选时，fallback=argmax_peak 输出
    以峰值帧为中心的 1 秒片段，fallback=none 则该类不输出。
    """
    segments = []
    for class_id, merged in enumerate(cands_per_class):
        _, segment = _select_class(class_id, merged, p_agg, tb, fallback)
        if segment is not None:
            segments.append(segment)
    return segments


# ---------------------------------------------------------------------------
# 组合
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ElectionTrace:
    video_id: str
    signal: AggregatedSignal
    classes: Tuple[ClassElection, ...] = field(default_factory=tuple)

    def segment_set(self) -> SegmentSet:
        return SegmentSet(video_id=self.video_id,
                          segments=tuple(c.segment for c in self.classes if c.segment is not None))


def elect_trace(p: ProbabilityTensor,
                cfg: ElectionConfig,
                video_id: str = "video",
                threads: Optional[int] = None) -> ElectionTrace:
    """执行完整选举并保留每一步的中间结果。聚合之后各类互相独立，threads > 1 时逐类并行，结果与线程数无关。"""
    if (p.num_classes, p.num_views) != (cfg.num_classes, cfg.num_views):
        raise ShapeError(f"张量 (K, M) = {(p.num_classes, p.num_views)} 与配置 "
                         f"{(cfg.num_classes, cfg.num_views)} 不一致")
    tb = cfg.time_base
    gap_frames = cfg.gap_frames
    p_agg = aggregate(p, cfg.weight_matrix)
    candidates = filter(p_agg, cfg.thresholds)

    def _elect_class(class_id: int) -> ClassElection:
        class_candidates = candidates[class_id]
        merged = merge(class_candidates, gap_frames, p_agg)
        winner, segment = _select_class(class_id, merged, p_agg, tb, cfg.fallback)
        record = ClassElection(class_id=class_id,
                               threshold=cfg.thresholds[class_id],
                               candidates=tuple(class_candidates),
                               merged=tuple(merged),
                               winner=winner,
                               segment=segment)
        if record.fallback_used:
            logger.debug(f'{video_id}: class {class_id} has no candidate above '
                         f'{cfg.thresholds[class_id]}, used argmax peak')
        return record

    class_ids = range(cfg.num_classes)
    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            classes = list(pool.map(_elect_class, class_ids))
    else:
        classes = [_elect_class(class_id) for class_id in class_ids]
    return ElectionTrace(video_id=video_id, signal=p_agg, classes=tuple(classes))


def elect(p: ProbabilityTensor,
          cfg: ElectionConfig,
          video_id: str = "video",
          threads: Optional[int] = None) -> SegmentSet:
    """select(merge(filter(aggregate(p, ω), thresholds), gap), p', tb, fallback)，逐类组合。"""
    return elect_trace(p, cfg, video_id, threads=threads).segment_set()
