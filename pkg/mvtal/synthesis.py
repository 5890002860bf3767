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
"""合成场景：动作时间表、带视角差异的逐帧概率，以及合成的片段打分器。

发射模型（高斯噪声 + 干扰脉冲）是人为设定的识别器替身，不代表真实网络的误差分布。

随机数：numpy PCG64，经 SeedSequence 以 [seed, stream] 播种
（numpy.random.default_rng([seed, stream])）。stream 0 生成时间表，stream 1 生成概率。
第 i 个视频的 seed 为 scenario.seed XOR i。
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator, model_validator
from scipy.ndimage import gaussian_filter1d
from tqdm import tqdm

from mvtal.errors import ConfigError, GenerationError
from mvtal.formats import load_json_document
from mvtal.types import ActionSegment, LabelSet, ProbabilityTensor, SegmentSet, TimeBase
from mvtal.utils import round_half_away_from_zero
from mvtal.windowing import WindowSpec, accumulate_scores

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SCHEDULE_STREAM = 0
EMISSION_STREAM = 1
MAX_SCHEDULE_ATTEMPTS = 100

_GAUSSIAN_TRUNCATE = 4.0

Range = Tuple[float, float]


def default_discriminability(num_classes: int, num_views: int) -> np.ndarray:
    """每类在视角 c mod M 最清晰（0.95 - 0.1·(c mod 4)），其他视角较弱（0.1 + 0.05·(c mod 3)）。"""
    d = np.empty((num_classes, num_views), dtype=np.float64)
    for c in range(num_classes):
        d[c, :] = 0.1 + 0.05 * (c % 3)
        d[c, c % num_views] = 0.95 - 0.1 * (c % 4)
    return d


def default_background_profile(num_classes: int, confuser_weight: float) -> np.ndarray:
    """背景与剩余概率的类别分布：c mod 4 == 0 的类权重为 confuser_weight，其余为 1，归一化。"""
    weights = np.ones(num_classes, dtype=np.float64)
    weights[::4] = confuser_weight
    return weights / weights.sum()


def distractor_targets(d: np.ndarray, view: int) -> List[int]:
    """视角 view 上会被误判的类：该视角不是其最清晰视角的类。"""
    return [c for c in range(d.shape[0]) if d[c, view] < d[c].max()]


class Scenario(BaseModel):
    """合成语料的参数。"""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False, extra='forbid')

    seed: int = Field(default=0, ge=0, lt=2**64)
    """语料种子"""

    num_classes: int = Field(default=16, ge=2)
    num_views: int = Field(default=3, ge=1)
    fps: float = Field(default=30.0, gt=0)
    labels: Optional[LabelSet] = None

    video_len_s: float = Field(default=480.0, gt=0)
    """视频长度（秒）"""

    discriminability: Optional[Tuple[Tuple[float, ...], ...]] = None
    """K × M 的视角区分度 d[c, m]，缺省见 default_discriminability"""

    noise_sigma: float = Field(default=0.08, ge=0)
    noise_smoothing_s: float = Field(default=0.5, ge=0)
    """噪声的高斯平滑尺度（秒），0 表示白噪声"""

    pause_prob: float = Field(default=0.3, ge=0, le=1)
    pause_len_s: Range = (0.6, 2.0)
    duration_s: Range = (5.0, 30.0)
    min_gap_s: float = Field(default=1.0, ge=0)

    distractor_prob: float = Field(default=0.2, ge=0, le=1)
    """每个动作、每个视角出现一次错类脉冲的概率；错类只取在该视角上不清晰的类"""

    distractor_len_s: Range = (1.0, 3.0)
    distractor_level: float = Field(default=0.9, ge=0, le=1)
    background_concentration: float = Field(default=50.0, gt=0)
    """间隙与停顿帧的 Dirichlet 浓度，越大越接近背景分布的均值"""

    confuser_weight: float = Field(default=12.0, ge=1)
    """易混类（c mod 4 == 0）在背景与剩余概率中的相对权重，1 表示均匀"""

    num_videos: int = Field(default=20, ge=1)
    tuning_videos: int = Field(default=10, ge=0)
    """调参用的额外视频数"""

    sliding_window: bool = False
    """经过滑动窗口推理（合成打分器 + 累加）再输出"""

    window: WindowSpec = WindowSpec()

    @model_validator(mode='before')
    @classmethod
    def _coerce_labels(cls, data):
        if isinstance(data, dict):
            labels = data.get('labels')
            if isinstance(labels, (list, tuple)) and all(isinstance(name, str) for name in labels):
                data = dict(data, labels=LabelSet.from_names(labels))
        return data

    @field_validator('pause_len_s', 'duration_s', 'distractor_len_s')
    @classmethod
    def _check_range(cls, value: Range) -> Range:
        low, high = value
        if not 0 < low <= high:
            raise ValueError(f"范围必须满足 0 < low <= high，实际 ({low}, {high})")
        return value

    @field_validator('discriminability')
    @classmethod
    def _check_discriminability(cls, value, info: ValidationInfo):
        if value is None:
            return value
        num_classes = info.data.get('num_classes')
        num_views = info.data.get('num_views')
        if len(value) != num_classes or any(len(row) != num_views for row in value):
            raise ValueError(f"区分度矩阵形状应为 ({num_classes}, {num_views})")
        if any(not 0.0 <= x <= 1.0 for row in value for x in row):
            raise ValueError("区分度必须位于 [0, 1]")
        return value

    @model_validator(mode='after')
    def _check_labels(self) -> "Scenario":
        if self.labels is not None and self.labels.size != self.num_classes:
            raise ValueError(f"需要 {self.num_classes} 个类别名，实际 {self.labels.size} 个")
        return self

    @property
    def time_base(self) -> TimeBase:
        return TimeBase(fps=self.fps)

    @property
    def label_set(self) -> LabelSet:
        return self.labels if self.labels is not None else LabelSet.for_size(self.num_classes)

    @property
    def num_frames(self) -> int:
        return max(round_half_away_from_zero(self.video_len_s * self.fps), 1)

    @property
    def discriminability_matrix(self) -> np.ndarray:
        if self.discriminability is None:
            return default_discriminability(self.num_classes, self.num_views)
        return np.array(self.discriminability, dtype=np.float64)

    @property
    def background_profile(self) -> np.ndarray:
        return default_background_profile(self.num_classes, self.confuser_weight)


_TOP_LEVEL_KEYS = ('num_classes', 'num_views', 'fps', 'labels')


def parse_scenario(document: Dict[str, Any]) -> Scenario:
    """顶层沿用选举配置的键（num_classes / num_views / fps / labels），其余参数放在 `scenario` 对象里。"""
    unknown = sorted(set(document) - set(_TOP_LEVEL_KEYS) - {'scenario'})
    if unknown:
        raise ConfigError(f"未知的顶层键: {', '.join(unknown)}", key=unknown[0])
    body = document.get('scenario', {})
    if not isinstance(body, dict):
        raise ConfigError("scenario 必须是 JSON 对象", key='scenario')
    clashes = sorted(set(body) & set(_TOP_LEVEL_KEYS))
    if clashes:
        raise ConfigError(f"{clashes[0]} 应写在顶层而不是 scenario 中", key=f"scenario.{clashes[0]}")

    merged = {key: document[key] for key in _TOP_LEVEL_KEYS if key in document}
    merged.update(body)
    try:
        return Scenario.model_validate(merged)
    except ValidationError as err:
        detail = err.errors()[0]
        loc = [str(part) for part in detail.get('loc', ())]
        if loc and loc[0] not in _TOP_LEVEL_KEYS:
            loc.insert(0, 'scenario')
        raise ConfigError(detail.get('msg', str(err)), key=".".join(loc) or None) from None


def read_scenario(path: PathLike, seed: Optional[int] = None) -> Scenario:
    """读取场景文件，seed 不为 None 时覆盖文件中的种子。"""
    scenario = parse_scenario(load_json_document(path))
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ConfigError(f"seed 超出 64 位无符号整数范围: {seed}", key='scenario.seed')
        scenario = scenario.model_copy(update={'seed': seed})
    return scenario


# ---------------------------------------------------------------------------
# 时间表
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScheduledAction:
    class_id: int
    start_s: float
    end_s: float
    pause: Optional[Tuple[float, float]] = None


@dataclass(frozen=True)
class HiddenSchedule:
    """只在生成端可见的时间表：真值片段之外还记录了动作中的停顿。"""

    actions: Tuple[ScheduledAction, ...]


def video_seed(seed: int, index: int) -> int:
    return seed ^ index


def _stream(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream])


def gen_scenario(params: Scenario, video_id: str = "video") -> Tuple[SegmentSet, HiddenSchedule]:
    """每类恰好一次、随机顺序的动作时间表。

    时长在 duration_s 内均匀抽取，动作之间至少间隔 min_gap_s，剩余时间按 Dirichlet 分配到
    各间隙。时间在毫秒整数上计算。总时长放不下时重抽，最多 100 次。

    参数:
        params: 场景参数，使用其中的 seed。
        video_id: 输出 SegmentSet 的视频标识。

    返回:
        (真值片段, 含停顿的隐藏时间表)。
    """
    rng = _stream(params.seed, SCHEDULE_STREAM)
    num_classes = params.num_classes
    length_ms = int(round(params.video_len_s * 1000))
    gap_ms = int(round(params.min_gap_s * 1000))
    low, high = params.duration_s

    for attempt in range(MAX_SCHEDULE_ATTEMPTS):
        durations_ms = np.rint(rng.uniform(low, high, size=num_classes) * 1000).astype(np.int64)
        slack_ms = length_ms - int(durations_ms.sum()) - (num_classes - 1) * gap_ms
        if slack_ms >= 0 and durations_ms.min() >= 1:
            break
    else:
        raise GenerationError(f"{video_id}: {MAX_SCHEDULE_ATTEMPTS} 次尝试后仍无法在 {params.video_len_s} 秒内"
                              f"排下 {num_classes} 个时长 {low}~{high} 秒的动作")
    if attempt > 0:
        logger.debug(f'{video_id}: schedule feasible after {attempt + 1} attempts')

    order = rng.permutation(num_classes)
    shares = np.floor(rng.dirichlet(np.ones(num_classes + 1)) * slack_ms).astype(np.int64)

    actions = []
    cursor = int(shares[0])
    for position, class_id in enumerate(order):
        start_ms = cursor
        end_ms = start_ms + int(durations_ms[position])
        cursor = end_ms + gap_ms + int(shares[position + 1])
        actions.append(_with_pause(rng, params, int(class_id), start_ms, end_ms))

    gt = SegmentSet(video_id=video_id,
                    segments=tuple(
                        ActionSegment(class_id=a.class_id, start_s=a.start_s, end_s=a.end_s) for a in actions))
    return gt, HiddenSchedule(actions=tuple(actions))


def _with_pause(rng: np.random.Generator, params: Scenario, class_id: int, start_ms: int,
                end_ms: int) -> ScheduledAction:
    # 停顿只落在动作中段，两侧各留至少四分之一时长
    has_pause = rng.random() < params.pause_prob
    pause_ms = int(round(rng.uniform(*params.pause_len_s) * 1000))
    position = rng.random()
    pause = None
    if has_pause:
        quarter = (end_ms - start_ms) // 4
        earliest = start_ms + quarter
        latest = end_ms - quarter - pause_ms
        if latest > earliest:
            pause_start = earliest + int(position * (latest - earliest))
            pause = (pause_start / 1000, (pause_start + pause_ms) / 1000)
    return ScheduledAction(class_id=class_id, start_s=start_ms / 1000, end_s=end_ms / 1000, pause=pause)


# ---------------------------------------------------------------------------
# 概率发射
# ---------------------------------------------------------------------------


def _frame(seconds: float, fps: float) -> int:
    return round_half_away_from_zero(seconds * fps)


def _correlated_noise(rng: np.random.Generator, num_frames: int, params: Scenario) -> np.ndarray:
    """标准差为 noise_sigma 的噪声，按 noise_smoothing_s 做高斯平滑后按核范数放大回原方差。"""
    raw = rng.standard_normal(num_frames)
    width = params.noise_smoothing_s * params.fps
    if width > 0:
        raw = gaussian_filter1d(raw, sigma=width, truncate=_GAUSSIAN_TRUNCATE) / _kernel_norm(width)
    return params.noise_sigma * raw


def _kernel_norm(width: float) -> float:
    """gaussian_filter1d 核的 L2 范数，由单位脉冲的响应得到。"""
    impulse = np.zeros(2 * int(_GAUSSIAN_TRUNCATE * width + 1) + 1)
    impulse[impulse.size // 2] = 1.0
    response = gaussian_filter1d(impulse, sigma=width, truncate=_GAUSSIAN_TRUNCATE, mode='constant')
    return float(np.sqrt(np.sum(response**2)))


def emit_probabilities(gt: SegmentSet, hidden: HiddenSchedule, params: Scenario) -> ProbabilityTensor:
    """按时间表生成 (T, K, M) 逐帧概率。

    - 动作 c 内（停顿以外）视角 m：c 类得分 clip(d[c, m] + 噪声, 0, 1)，剩余概率按均值为背景分布的
      Dirichlet 分给其他类；
    - 间隙与停顿：均值为背景分布、浓度 background_concentration 的 Dirichlet 噪声，易混类的底噪较高；
    - 干扰脉冲：单个视角内一段 1~3 秒的错类高分，水平 distractor_level，错类在该视角上不清晰，
      按视角取权重可以压掉。

    gt 与 hidden 必须来自同一次 gen_scenario。
    """
    if len(gt.segments) != len(hidden.actions):
        raise ValueError(f"{gt.video_id}: 真值与隐藏时间表不一致")
    rng = _stream(params.seed, EMISSION_STREAM)
    fps = params.fps
    num_frames = params.num_frames
    num_classes = params.num_classes
    d = params.discriminability_matrix
    profile = params.background_profile * num_classes

    active = np.full(num_frames, -1, dtype=np.int64)
    for action in hidden.actions:
        active[_frame(action.start_s, fps):_frame(action.end_s, fps)] = action.class_id
        if action.pause is not None:
            active[_frame(action.pause[0], fps):_frame(action.pause[1], fps)] = -1

    values = np.empty((num_frames, num_classes, params.num_views), dtype=np.float64)
    frames = np.arange(num_frames)
    for view in range(params.num_views):
        noise = _correlated_noise(rng, num_frames, params)
        target = active.copy()
        level = np.where(active >= 0, d[np.maximum(active, 0), view], 0.0)
        confusable = distractor_targets(d, view)

        for action in hidden.actions:
            burst = rng.random() < params.distractor_prob
            choices = [c for c in confusable if c != action.class_id]
            if not choices:
                choices = [c for c in range(num_classes) if c != action.class_id]
            wrong = choices[int(rng.integers(0, len(choices)))]
            burst_len = rng.uniform(*params.distractor_len_s)
            burst_start = rng.uniform(0.0, max(params.video_len_s - burst_len, 0.0))
            if burst:
                span = slice(_frame(burst_start, fps), _frame(burst_start + burst_len, fps))
                target[span] = wrong
                level[span] = params.distractor_level

        background = rng.standard_gamma(params.background_concentration * profile, size=(num_frames, num_classes))
        background /= background.sum(axis=1, keepdims=True)

        remainder = rng.standard_gamma(profile, size=(num_frames, num_classes))
        has_target = target >= 0
        level = np.clip(level + noise, 0.0, 1.0)
        remainder[frames[has_target], target[has_target]] = 0.0
        remainder /= remainder.sum(axis=1, keepdims=True)
        remainder *= (1.0 - level)[:, np.newaxis]
        remainder[frames[has_target], target[has_target]] = level[has_target]

        vectors = np.where(has_target[:, np.newaxis], remainder, background)
        values[:, :, view] = vectors / vectors.sum(axis=1, keepdims=True)

    return ProbabilityTensor(values=values)


# ---------------------------------------------------------------------------
# 合成打分器与语料
# ---------------------------------------------------------------------------


class SyntheticClipScorer:
    """对逐帧概率在窗口的 S 个采样帧（start + i·τ，越界截到 T-1）上取平均。"""

    def __init__(self, frame_scores: ProbabilityTensor):
        self.frame_scores = frame_scores

    def score(self, video_id: str, view: int, start_frame: int, spec: WindowSpec) -> np.ndarray:
        last = self.frame_scores.num_frames - 1
        sampled = np.minimum(start_frame + np.arange(spec.S) * spec.tau, last)
        return self.frame_scores.values[sampled, :, view].mean(axis=0)


@dataclass(frozen=True)
class SyntheticVideo:
    video_id: str
    seed: int
    gt: SegmentSet
    hidden: HiddenSchedule
    tensor: ProbabilityTensor


@dataclass(frozen=True)
class SyntheticCorpus:
    scenario: Scenario
    test: Tuple[SyntheticVideo, ...]
    tuning: Tuple[SyntheticVideo, ...]


def generate_video(params: Scenario, index: int, video_id: str) -> SyntheticVideo:
    seed = video_seed(params.seed, index)
    video_params = params.model_copy(update={'seed': seed})
    gt, hidden = gen_scenario(video_params, video_id=video_id)
    tensor = emit_probabilities(gt, hidden, video_params)
    if params.sliding_window:
        tensor = accumulate_scores(video_id, tensor.num_frames, params.num_views, params.num_classes, params.window,
                                   SyntheticClipScorer(tensor))
    return SyntheticVideo(video_id=video_id, seed=seed, gt=gt, hidden=hidden, tensor=tensor)


def generate_corpus(params: Scenario,
                    threads: Optional[int] = None,
                    include_tuning: bool = True,
                    disable_tqdm: bool = True) -> SyntheticCorpus:
    """生成测试集（序号 0..N-1）与调参集（序号 N..N+tuning_videos-1）。

    参数:
        params: 场景参数。
        threads: 并行线程数，None 或 1 表示串行；结果与线程数无关。
        include_tuning: 是否生成调参集。
        disable_tqdm: 禁用 tqdm 进度条。
    """
    jobs: List[Tuple[int, str]] = [(i, f"video_{i:03d}") for i in range(params.num_videos)]
    if include_tuning:
        jobs += [(params.num_videos + j, f"tune_{j:03d}") for j in range(params.tuning_videos)]

    def _generate(job):
        return generate_video(params, *job)

    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            iterator = pool.map(_generate, jobs)
            videos = list(iterator if disable_tqdm else tqdm(iterator, total=len(jobs), desc='Generating videos'))
    else:
        iterator = jobs if disable_tqdm else tqdm(jobs, desc='Generating videos')
        videos = [_generate(job) for job in iterator]

    logger.info(f'generated {len(videos)} synthetic videos (seed {params.seed})')
    return SyntheticCorpus(scenario=params,
                           test=tuple(videos[:params.num_videos]),
                           tuning=tuple(videos[params.num_videos:]))
