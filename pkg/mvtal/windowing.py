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
"""滑动窗口推理：窗口调度与片段分数到逐帧概率张量的累加。

识别网络被抽象为 ClipScorer，本模块只负责调度和平均。
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Protocol, runtime_checkable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from mvtal.errors import MvtalError, ScorerError
from mvtal.types import ProbabilityTensor

logger = logging.getLogger(__name__)

_SIMPLEX_TOLERANCE = 1e-6


class WindowSpec(BaseModel):
    """窗口规格：每个片段 S 帧、采样间隔 τ，窗口跨度 S·τ，步长 S·τ/4。"""

    model_config = ConfigDict(frozen=True)

    S: int = Field(default=16, ge=1)
    tau: int = Field(default=4, ge=1)

    @model_validator(mode='after')
    def _check_divisible(self) -> "WindowSpec":
        if (self.S * self.tau) % 4 != 0:
            raise ValueError(f"S·τ = {self.S * self.tau} 必须能被 4 整除")
        return self

    @property
    def span(self) -> int:
        return self.S * self.tau

    @property
    def stride(self) -> int:
        return self.span // 4


@runtime_checkable
class ClipScorer(Protocol):
    """片段打分器接口：对 (视角, 起始帧) 的窗口返回 K 维概率向量（和为 1）。

    对相同输入必须是确定的。窗口超出视频末尾时由实现自行截断采样位置。
    """

    def score(self, video_id: str, view: int, start_frame: int, spec: WindowSpec) -> np.ndarray:
        ...


def schedule_windows(T: int, w: WindowSpec) -> List[int]:
    """窗口起始帧列表。

    起点为 0, stride, 2·stride, ...（要求 start + span <= T）；末尾未对齐时追加
    一个起点为 T - span 的尾窗口；T <= span 时只返回 [0]。
    """
    if T < 1:
        raise ValueError(f"T 必须 >= 1，实际 {T}")
    span, stride = w.span, w.stride
    if T <= span:
        return [0]
    starts = list(range(0, T - span + 1, stride))
    if (T - span) % stride != 0:
        starts.append(T - span)
    return starts


def window_coverage(T: int, w: WindowSpec) -> np.ndarray:
    """每帧被多少个窗口覆盖。"""
    counts = np.zeros(T, dtype=np.int64)
    for start in schedule_windows(T, w):
        counts[start:min(start + w.span, T)] += 1
    return counts


def accumulate_scores(video_id: str,
                      T: int,
                      M: int,
                      K: int,
                      w: WindowSpec,
                      scorer: ClipScorer,
                      threads: Optional[int] = None) -> ProbabilityTensor:
    """把窗口级分数广播到其覆盖的帧上，再按覆盖次数逐帧平均。

    打分可以并行，但累加固定按 视角、窗口起点升序 进行，结果逐位确定。

    参数:
        video_id: 视频标识，原样传给打分器。
        T: 帧数。
        M: 视角数。
        K: 类别数。
        w: 窗口规格。
        scorer: 片段打分器。
        threads: 打分线程数上限，None 或 1 表示串行。
    """
    starts = schedule_windows(T, w)
    jobs = [(view, start) for view in range(M) for start in starts]

    def _score(job):
        view, start = job
        try:
            vector = np.asarray(scorer.score(video_id, view, start, w), dtype=np.float64)
        except MvtalError as err:
            raise ScorerError(str(err), view, start) from err
        except Exception as err:
            raise ScorerError(f"{type(err).__name__}: {err}", view, start) from err
        if vector.shape != (K,):
            raise ScorerError(f"需要形状 ({K},)，实际 {vector.shape}", view, start)
        if not np.all(np.isfinite(vector)) or vector.min() < 0.0 or vector.max() > 1.0:
            raise ScorerError("概率必须有限且位于 [0, 1]", view, start)
        if abs(float(vector.sum()) - 1.0) > _SIMPLEX_TOLERANCE:
            raise ScorerError(f"概率和为 {float(vector.sum())}，不在单纯形上", view, start)
        return vector

    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vectors = list(pool.map(_score, jobs))
    else:
        vectors = [_score(job) for job in jobs]

    accumulated = np.zeros((T, K, M), dtype=np.float64)
    for (view, start), vector in zip(jobs, vectors):
        accumulated[start:min(start + w.span, T), :, view] += vector

    counts = window_coverage(T, w)
    values = np.clip(accumulated / counts[:, np.newaxis, np.newaxis], 0.0, 1.0)
    logger.debug(f'{video_id}: accumulated {len(starts)} windows x {M} views over {T} frames')
    return ProbabilityTensor(values=values)
