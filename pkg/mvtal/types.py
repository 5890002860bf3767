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

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationInfo, field_validator, model_validator

from mvtal.errors import InvalidIntervalError, ShapeError
from mvtal.utils import round_half_away_from_zero

DEFAULT_FPS = 30.0
DEFAULT_MERGE_GAP_S = 0.5
DEFAULT_THRESHOLD = 0.5

# 行和与 1 的偏差超过该值才重新归一化，保证 读->写->读 幂等
_NORMALIZE_TOLERANCE = 1e-12

DRIVER_ACTIONS = (
    "Forward Driving",
    "Drinking",
    "Phone Call (R)",
    "Phone Call (L)",
    "Eating",
    "Text (R)",
    "Text (L)",
    "Reaching behind",
    "Adjust control panel",
    "Pick up from floor (D)",
    "Pick up from floor (P)",
    "Talk to pax at the right",
    "Talk to pax at backseat",
    "Yawning",
    "Hand on head",
    "Singing or dancing",
)


class Label(BaseModel):
    model_config = ConfigDict(frozen=True)

    class_id: int = Field(ge=0)
    name: str


class LabelSet(BaseModel):
    """有序的类别表，class_id 必须为 0..K-1 连续递增。"""

    model_config = ConfigDict(frozen=True)

    labels: Tuple[Label, ...]

    @model_validator(mode='after')
    def _check_contiguous(self) -> "LabelSet":
        if not self.labels:
            raise ValueError("LabelSet 至少需要 1 个类别")
        ids = [label.class_id for label in self.labels]
        if ids != list(range(len(ids))):
            raise ValueError(f"class_id 必须为 0..K-1 连续递增，实际为 {ids}")
        return self

    @property
    def size(self) -> int:
        return len(self.labels)

    def contains(self, class_id: int) -> bool:
        return 0 <= class_id < len(self.labels)

    def name(self, class_id: int) -> str:
        return self.labels[class_id].name

    @classmethod
    def from_names(cls, names) -> "LabelSet":
        return cls(labels=tuple(Label(class_id=i, name=str(n)) for i, n in enumerate(names)))

    @classmethod
    def default(cls) -> "LabelSet":
        """16 类驾驶员动作表。"""
        return cls.from_names(DRIVER_ACTIONS)

    @classmethod
    def generic(cls, num_classes: int) -> "LabelSet":
        return cls.from_names(f"class_{i}" for i in range(num_classes))

    @classmethod
    def for_size(cls, num_classes: int) -> "LabelSet":
        """K == 16 时返回驾驶员动作表，否则返回 class_<i> 占位名。"""
        if num_classes == len(DRIVER_ACTIONS):
            return cls.default()
        return cls.generic(num_classes)


class TimeBase(BaseModel):
    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    fps: float = Field(default=DEFAULT_FPS, gt=0)


class ActionSegment(BaseModel):
    """一个带类别的时间区间，单位为秒。"""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    class_id: int = Field(ge=0)
    start_s: float = Field(ge=0)
    end_s: float

    @model_validator(mode='after')
    def _check_interval(self) -> "ActionSegment":
        if not self.start_s < self.end_s:
            raise InvalidIntervalError(f"start_s ({self.start_s}) 必须小于 end_s ({self.end_s})")
        return self

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


class SegmentSet(BaseModel):
    """同一视频内的片段集合（真值 y 或预测 ŷ）。

    不要求每类只出现一次：每类一次是合成数据的性质，不是类型的约束。
    """

    model_config = ConfigDict(frozen=True)

    video_id: str
    segments: Tuple[ActionSegment, ...] = ()

    def __len__(self) -> int:
        return len(self.segments)

    def for_class(self, class_id: int) -> Tuple[ActionSegment, ...]:
        return tuple(seg for seg in self.segments if seg.class_id == class_id)


@dataclass(frozen=True, eq=False)
class ProbabilityTensor:
    """逐帧、逐视角的类别概率 p，形状 (T, K, M)。构造后只读。"""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 3:
            raise ShapeError(f"ProbabilityTensor 需要 3 维 (T, K, M)，实际 {values.ndim} 维")
        if min(values.shape) < 1:
            raise ShapeError(f"ProbabilityTensor 各维度必须 >= 1，实际 {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("ProbabilityTensor 含有非有限值")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ValueError("ProbabilityTensor 的取值必须在 [0, 1] 内")
        values.flags.writeable = False
        object.__setattr__(self, 'values', values)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def num_classes(self) -> int:
        return self.values.shape[1]

    @property
    def num_views(self) -> int:
        return self.values.shape[2]

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProbabilityTensor):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(np.array_equal(self.values, other.values))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class AggregatedSignal:
    """聚合后的逐帧类别分数 p'，形状 (T, K)。"""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeError(f"AggregatedSignal 需要 2 维 (T, K)，实际 {values.ndim} 维")
        if not np.all(np.isfinite(values)) or (values.size and values.min() < 0.0):
            raise ValueError("AggregatedSignal 的取值必须有限且 >= 0")
        values.flags.writeable = False
        object.__setattr__(self, 'values', values)

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def num_classes(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, AggregatedSignal):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(np.array_equal(self.values, other.values))

    __hash__ = None


@dataclass(frozen=True)
class Candidate:
    """候选片段，帧区间两端均为闭区间。"""

    class_id: int
    start_frame: int
    end_frame: int
    mean_score: float

    def __post_init__(self):
        if not 0 <= self.start_frame <= self.end_frame:
            raise ValueError(f"候选帧区间不合法: [{self.start_frame}, {self.end_frame}]")

    @property
    def num_frames(self) -> int:
        return self.end_frame - self.start_frame + 1


class FallbackMode(str, Enum):
    NONE = "none"
    ARGMAX_PEAK = "argmax_peak"


class ElectionConfig(BaseModel):
    """选举后处理的配置。

    weights 为每类一行的视角权重 ω (K × M)，加载时逐行归一化到和为 1。
    """

    model_config = ConfigDict(frozen=True, allow_inf_nan=False, extra='forbid')

    num_classes: int = Field(ge=1)
    """类别数 K"""

    num_views: int = Field(ge=1)
    """视角数 M"""

    fps: float = Field(default=DEFAULT_FPS, gt=0)
    """帧率"""

    weights: Tuple[Tuple[float, ...], ...]
    """视角权重 ω，缺省为 1/M"""

    thresholds: Tuple[float, ...]
    """每类阈值，严格位于 (0, 1)，缺省为 0.5"""

    merge_gap_s: float = Field(default=DEFAULT_MERGE_GAP_S, ge=0)
    """合并间隙（秒）"""

    fallback: FallbackMode = FallbackMode.ARGMAX_PEAK
    """某类没有候选时的兜底策略"""

    round_half: Literal["away_from_zero"] = "away_from_zero"
    """秒级取整规则（固定）"""

    labels: Optional[LabelSet] = None
    """类别名称，缺省按 K 推断"""

    @model_validator(mode='before')
    @classmethod
    def _fill_defaults(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        num_classes = data.get('num_classes')
        num_views = data.get('num_views')
        if not (isinstance(num_classes, int) and isinstance(num_views, int) and num_classes > 0 and num_views > 0):
            return data
        if data.get('weights') is None:
            data['weights'] = [[1.0 / num_views] * num_views for _ in range(num_classes)]
        thresholds = data.get('thresholds')
        if thresholds is None:
            data['thresholds'] = [DEFAULT_THRESHOLD] * num_classes
        elif isinstance(thresholds, (int, float)) and not isinstance(thresholds, bool):
            data['thresholds'] = [float(thresholds)] * num_classes
        labels = data.get('labels')
        if isinstance(labels, (list, tuple)) and all(isinstance(name, str) for name in labels):
            data['labels'] = LabelSet.from_names(labels)
        return data

    @field_validator('weights')
    @classmethod
    def _normalize_weights(cls, value, info: ValidationInfo):
        num_classes = info.data.get('num_classes')
        num_views = info.data.get('num_views')
        if num_classes is None or num_views is None:
            return value
        if len(value) != num_classes:
            raise ValueError(f"需要 {num_classes} 行（每类一行），实际 {len(value)} 行")
        rows = []
        for class_id, row in enumerate(value):
            if len(row) != num_views:
                raise ValueError(f"第 {class_id} 行需要 {num_views} 列（每视角一列），实际 {len(row)} 列")
            if any(w < 0 for w in row):
                raise ValueError(f"第 {class_id} 行含有负权重")
            total = math.fsum(row)
            if total <= 0:
                raise ValueError(f"第 {class_id} 行权重之和为 0")
            if abs(total - 1.0) > _NORMALIZE_TOLERANCE:
                row = tuple(w / total for w in row)
            rows.append(tuple(float(w) for w in row))
        return tuple(rows)

    @field_validator('thresholds')
    @classmethod
    def _check_thresholds(cls, value, info: ValidationInfo):
        num_classes = info.data.get('num_classes')
        if num_classes is not None and len(value) != num_classes:
            raise ValueError(f"需要 {num_classes} 个阈值，实际 {len(value)} 个")
        for class_id, threshold in enumerate(value):
            if not 0.0 < threshold < 1.0:
                raise ValueError(f"第 {class_id} 类阈值 {threshold} 不在 (0, 1) 内")
        return value

    @field_validator('labels')
    @classmethod
    def _check_labels(cls, value, info: ValidationInfo):
        num_classes = info.data.get('num_classes')
        if value is not None and num_classes is not None and value.size != num_classes:
            raise ValueError(f"需要 {num_classes} 个类别名，实际 {value.size} 个")
        return value

    @classmethod
    def uniform(cls, num_classes: int, num_views: int, **overrides) -> "ElectionConfig":
        """均匀 ω、统一阈值的配置（即不做 AGG / FLTR 时的基线）。"""
        return cls(num_classes=num_classes, num_views=num_views, **overrides)

    @property
    def time_base(self) -> TimeBase:
        return TimeBase(fps=self.fps)

    @property
    def weight_matrix(self) -> np.ndarray:
        return np.array(self.weights, dtype=np.float64)

    @property
    def threshold_vector(self) -> np.ndarray:
        return np.array(self.thresholds, dtype=np.float64)

    @property
    def gap_frames(self) -> int:
        return round_half_away_from_zero(self.merge_gap_s * self.fps)

    @property
    def label_set(self) -> LabelSet:
        return self.labels if self.labels is not None else LabelSet.for_size(self.num_classes)


class ClipSample(BaseModel):
    """训练片段：某视频中标注区间对应的帧范围（闭区间）。"""

    model_config = ConfigDict(frozen=True)

    video_id: str
    class_id: int = Field(ge=0)
    start_frame: int = Field(ge=0)
    end_frame: int

    @model_validator(mode='after')
    def _check_range(self) -> "ClipSample":
        if self.start_frame > self.end_frame:
            raise ValueError(f"start_frame ({self.start_frame}) 不能大于 end_frame ({self.end_frame})")
        return self

    @property
    def num_frames(self) -> int:
        return self.end_frame - self.start_frame + 1
