"""测试共享 fixture 和工具函数。

提供：
- 构造张量 / 片段 / 配置的小工具
- 示例配置文件路径常量
- Session-scoped 合成语料 fixture（每种场景只生成一次）
"""

from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
import pytest

from mvtal.synthesis import Scenario, SyntheticCorpus, generate_corpus
from mvtal.types import ActionSegment, ElectionConfig, ProbabilityTensor, SegmentSet

# ---------------------------------------------------------------------------
# 路径常量
# ---------------------------------------------------------------------------

PROJECT_ROOT = Path(__file__).resolve().parent.parent
CONFIG_DIR = PROJECT_ROOT / "configs"
DEFAULT_SCENARIO = CONFIG_DIR / "scenario_default.json"
NOISELESS_SCENARIO = CONFIG_DIR / "scenario_noiseless.json"
DEFAULT_ELECTION = CONFIG_DIR / "election_default.json"

# ---------------------------------------------------------------------------
# 构造工具
# ---------------------------------------------------------------------------


def seg(class_id: int, start_s: float, end_s: float) -> ActionSegment:
    return ActionSegment(class_id=class_id, start_s=start_s, end_s=end_s)


def segset(*segments: ActionSegment, video_id: str = "v") -> SegmentSet:
    return SegmentSet(video_id=video_id, segments=tuple(segments))


def zeros_tensor(num_frames: int, num_classes: int, num_views: int) -> np.ndarray:
    return np.zeros((num_frames, num_classes, num_views), dtype=np.float64)


def tensor_with_run(num_frames: int,
                    num_classes: int,
                    num_views: int,
                    class_id: int,
                    runs: Sequence[tuple],
                    level: float = 1.0) -> ProbabilityTensor:
    """所有视角上 class_id 在给定帧区间（闭区间）取 level，其余为 0。"""
    values = zeros_tensor(num_frames, num_classes, num_views)
    for start, end in runs:
        values[start:end + 1, class_id, :] = level
    return ProbabilityTensor(values=values)


def random_simplex_tensor(rng: np.random.Generator, num_frames: int, num_classes: int,
                          num_views: int) -> ProbabilityTensor:
    raw = rng.random((num_frames, num_classes, num_views)) + 1e-3
    return ProbabilityTensor(values=raw / raw.sum(axis=1, keepdims=True))


def uniform_config(num_classes: int, num_views: int, **overrides) -> ElectionConfig:
    return ElectionConfig.uniform(num_classes, num_views, **overrides)


# ---------------------------------------------------------------------------
# 合成场景
# ---------------------------------------------------------------------------


def noiseless_scenario(**overrides) -> Scenario:
    """全部视角区分度为 1、无噪声、无停顿、无干扰、背景均匀的场景。"""
    params = dict(discriminability=[[1.0] * 3] * 16,
                  noise_sigma=0.0,
                  pause_prob=0.0,
                  distractor_prob=0.0,
                  confuser_weight=1.0,
                  num_videos=10,
                  tuning_videos=2)
    params.update(overrides)
    return Scenario(**params)


class SmallCorpus(NamedTuple):
    scenario: Scenario
    corpus: SyntheticCorpus


@pytest.fixture(scope="session")
def noiseless_corpus() -> SmallCorpus:
    """10 个视频（seed 0..9）的无噪声语料（session 共享）。"""
    scenario = noiseless_scenario()
    return SmallCorpus(scenario, generate_corpus(scenario, include_tuning=False))


@pytest.fixture(scope="session")
def short_scenario() -> Scenario:
    """短视频的默认噪声场景，用于快速单测。"""
    return Scenario(seed=7,
                    num_classes=4,
                    num_views=3,
                    video_len_s=120.0,
                    duration_s=(5.0, 20.0),
                    num_videos=3,
                    tuning_videos=2)
