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
"""消融实验：在调参集上逐级调出四种配置，再在测试集上评测。

四个变体依次为：
- SEL：均匀 ω、全局单一阈值、不合并；
- SEL+FLTR：每类阈值；
- SEL+FLTR+MRG：加上合并间隙（全局），阈值重新调整；
- SEL+FLTR+MRG+AGG：每类 ω 在网格（均匀、顶点、两两中点）上与阈值一起调整。

每一级都从上一级的选择出发，网格包含上一级的配置，所以调参集上的分数单调不减。
各类在调参集上的贡献 (Σos, 分母) 先按选项制表，再对类做坐标上升，目标是汇总后的语料分数。
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from mvtal.election import aggregate_class, elect, elect_signal, prefix_sums
from mvtal.errors import ConfigError
from mvtal.evaluation import eligible, evaluate_sets, pairwise_os
from mvtal.synthesis import SyntheticCorpus, SyntheticVideo
from mvtal.types import ActionSegment, ElectionConfig, FallbackMode, TimeBase
from mvtal.utils import round_half_away_from_zero

logger = logging.getLogger(__name__)

VARIANTS = ("SEL", "SEL+FLTR", "SEL+FLTR+MRG", "SEL+FLTR+MRG+AGG")
REFERENCE_LABEL = "published"
REFERENCE_SCORES = (0.4683, 0.5347, 0.5565, 0.5921)

THRESHOLD_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))
MERGE_GAP_GRID = (0.5, 1.0, 1.5, 2.0, 2.5)

COORDINATE_SWEEPS = 2
SMALL_CORPUS = 5

_IMPROVEMENT = 1e-12


def weight_grid(num_views: int) -> List[Tuple[float, ...]]:
    """ω 网格：均匀、各顶点 e_m、两两中点，均匀排在第一位。"""
    grid = [tuple([1.0 / num_views] * num_views)]
    if num_views == 1:
        return grid
    for m in range(num_views):
        grid.append(tuple(1.0 if k == m else 0.0 for k in range(num_views)))
    for a in range(num_views):
        for b in range(a + 1, num_views):
            grid.append(tuple(0.5 if k in (a, b) else 0.0 for k in range(num_views)))
    return grid


def class_contribution(gts: Sequence[ActionSegment], pred: Optional[ActionSegment]) -> Tuple[float, int]:
    """单个类别在单个视频上的 (Σos, 分母)，预测至多一个。

    与该类上的最优匹配等价：有合格 gt 时与 os 最大者配对，否则预测记为误报。
    """
    if pred is None:
        return 0.0, len(gts)
    best = None
    for gt in gts:
        if eligible(gt, pred):
            score = pairwise_os(gt, pred)
            if best is None or score > best:
                best = score
    if best is None:
        return 0.0, len(gts) + 1
    return best, len(gts)


# ---------------------------------------------------------------------------
# 制表
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _OptionTable:
    """num[c][o]、den[c][o]：类 c 取选项 o 时在调参集上的贡献之和。"""

    num: np.ndarray
    den: np.ndarray

    @property
    def num_options(self) -> int:
        return self.num.shape[1]


class _Tuner:

    def __init__(self, videos: Sequence[SyntheticVideo], num_classes: int, tb: TimeBase, fallback: FallbackMode):
        self.videos = videos
        self.num_classes = num_classes
        self.tb = tb
        self.fallback = fallback
        self.gts = [[video.gt.for_class(c) for c in range(num_classes)] for video in videos]

    def table(self, weights: Sequence[Sequence[float]], gap_s: float) -> _OptionTable:
        """每类按 THRESHOLD_GRID 制表，weights[c] 为类 c 的 ω 行。"""
        gap_frames = round_half_away_from_zero(gap_s * self.tb.fps)
        num = np.zeros((self.num_classes, len(THRESHOLD_GRID)))
        den = np.zeros((self.num_classes, len(THRESHOLD_GRID)), dtype=np.int64)
        for v, video in enumerate(self.videos):
            for c in range(self.num_classes):
                signal = aggregate_class(video.tensor.values, c, np.asarray(weights[c], dtype=np.float64))
                prefix = prefix_sums(signal)
                for k, threshold in enumerate(THRESHOLD_GRID):
                    segment = elect_signal(signal, c, threshold, gap_frames, self.tb, self.fallback, prefix=prefix)
                    n, d = class_contribution(self.gts[v][c], segment)
                    num[c, k] += n
                    den[c, k] += d
        return _OptionTable(num=num, den=den)


def _ratio(num: float, den: int) -> float:
    return num / den if den else 0.0


def _pooled(table: _OptionTable, choice: Sequence[int]) -> float:
    num = math.fsum(table.num[c, option] for c, option in enumerate(choice))
    den = int(sum(table.den[c, option] for c, option in enumerate(choice)))
    return _ratio(num, den)


def coordinate_ascent(table: _OptionTable, start: Sequence[int], sweeps: int = COORDINATE_SWEEPS) -> List[int]:
    """逐类替换为使汇总分数最大的选项，只在严格提升时替换。"""
    choice = list(start)
    for _ in range(sweeps):
        changed = False
        for c in range(len(choice)):
            best_option = choice[c]
            best_score = _pooled(table, choice)
            for option in range(table.num_options):
                if option == choice[c]:
                    continue
                trial = choice[:c] + [option] + choice[c + 1:]
                score = _pooled(table, trial)
                if score > best_score + _IMPROVEMENT:
                    best_option, best_score = option, score
            if best_option != choice[c]:
                choice[c] = best_option
                changed = True
        if not changed:
            break
    return choice


# ---------------------------------------------------------------------------
# 消融
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AblationRow:
    name: str
    score: float
    """测试集语料分数"""

    tuning_score: float
    config: ElectionConfig


@dataclass(frozen=True)
class AblationTable:
    rows: Tuple[AblationRow, ...]
    reference: Tuple[float, ...] = REFERENCE_SCORES

    @property
    def scores(self) -> Tuple[float, ...]:
        return tuple(row.score for row in self.rows)

    def to_dict(self) -> Dict:
        return {
            "variants": [{
                "name": row.name,
                "score": row.score,
                "tuning_score": row.tuning_score
            } for row in self.rows],
            REFERENCE_LABEL: [{
                "name": name,
                "score": score
            } for name, score in zip(VARIANTS, self.reference)],
        }


def _config(corpus: SyntheticCorpus, weights, thresholds, gap_s: float) -> ElectionConfig:
    scenario = corpus.scenario
    return ElectionConfig(num_classes=scenario.num_classes,
                          num_views=scenario.num_views,
                          fps=scenario.fps,
                          weights=[list(row) for row in weights],
                          thresholds=list(thresholds),
                          merge_gap_s=gap_s,
                          fallback=FallbackMode.ARGMAX_PEAK,
                          labels=scenario.labels)


def _test_score(corpus: SyntheticCorpus, cfg: ElectionConfig, threads: Optional[int]) -> float:
    predictions = [elect(video.tensor, cfg, video_id=video.video_id) for video in corpus.test]
    return evaluate_sets([video.gt for video in corpus.test], predictions, threads=threads).corpus_score


def ablation_run(corpus: SyntheticCorpus, threads: Optional[int] = None, disable_tqdm: bool = True) -> AblationTable:
    """在调参集上逐级调参，返回四个变体在测试集上的分数（按 VARIANTS 顺序）。

    参数:
        corpus: 合成语料，调参集不能为空。
        threads: 评测并行线程数。
        disable_tqdm: 禁用 tqdm 进度条。
    """
    if not corpus.tuning:
        raise ConfigError("消融实验需要调参集（tuning_videos >= 1）", key='scenario.tuning_videos')
    if not corpus.test:
        raise ConfigError("测试集为空", key='scenario.num_videos')
    if len(corpus.test) < SMALL_CORPUS:
        logger.warning(f'only {len(corpus.test)} test videos, ablation scores will be noisy')

    scenario = corpus.scenario
    num_classes, num_views = scenario.num_classes, scenario.num_views
    tuner = _Tuner(corpus.tuning, num_classes, scenario.time_base, FallbackMode.ARGMAX_PEAK)
    omegas = weight_grid(num_views)
    uniform = [omegas[0]] * num_classes

    progress = tqdm(total=len(VARIANTS), desc="Tuning variants", disable=disable_tqdm)

    # SEL：全局阈值
    base = tuner.table(uniform, 0.0)
    global_scores = [_pooled(base, [k] * num_classes) for k in range(len(THRESHOLD_GRID))]
    k_global = int(np.argmax(global_scores))
    sel = ([k_global] * num_classes, global_scores[k_global])

    progress.update()

    # SEL+FLTR：每类阈值
    fltr_choice = coordinate_ascent(base, sel[0])
    fltr = (fltr_choice, _pooled(base, fltr_choice))

    progress.update()

    # SEL+FLTR+MRG：全局合并间隙，0 也在候选中
    mrg = (fltr[0], fltr[1], 0.0)
    for gap_s in MERGE_GAP_GRID:
        table = tuner.table(uniform, gap_s)
        choice = coordinate_ascent(table, fltr[0])
        score = _pooled(table, choice)
        if score > mrg[1] + _IMPROVEMENT:
            mrg = (choice, score, gap_s)
    mrg_choice, mrg_score, gap_s = mrg
    if gap_s == 0.0:
        # 从 0 间隙的表上再做一次坐标上升，保持与其他间隙同等的调参力度
        mrg_choice = coordinate_ascent(base, mrg_choice)
        mrg_score = _pooled(base, mrg_choice)

    progress.update()

    # SEL+FLTR+MRG+AGG：每类 (ω, 阈值) 联合选项，ω 主序
    per_weight = [tuner.table([omega] * num_classes, gap_s) for omega in omegas]
    joint = _OptionTable(num=np.concatenate([t.num for t in per_weight], axis=1),
                         den=np.concatenate([t.den for t in per_weight], axis=1))
    agg_choice = coordinate_ascent(joint, mrg_choice)
    agg_score = _pooled(joint, agg_choice)
    progress.update()
    progress.close()

    num_thresholds = len(THRESHOLD_GRID)
    configs = [
        _config(corpus, uniform, [THRESHOLD_GRID[k] for k in sel[0]], 0.0),
        _config(corpus, uniform, [THRESHOLD_GRID[k] for k in fltr[0]], 0.0),
        _config(corpus, uniform, [THRESHOLD_GRID[k] for k in mrg_choice], gap_s),
        _config(corpus, [omegas[o // num_thresholds] for o in agg_choice],
                [THRESHOLD_GRID[o % num_thresholds] for o in agg_choice], gap_s),
    ]
    tuning_scores = [sel[1], fltr[1], mrg_score, agg_score]

    rows = []
    for name, cfg, tuning_score in zip(VARIANTS, configs, tuning_scores):
        score = _test_score(corpus, cfg, threads)
        logger.info(f'{name}: test {score:.4f} (tuning {tuning_score:.4f})')
        rows.append(AblationRow(name=name, score=score, tuning_score=tuning_score, config=cfg))
    return AblationTable(rows=tuple(rows))
