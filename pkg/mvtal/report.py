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
"""报告输出：单类选举过程的 SVG 图，以及消融结果表。"""

import json
import logging
import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union
from xml.sax.saxutils import quoteattr, escape

from mvtal.ablation import REFERENCE_LABEL, VARIANTS, AblationTable
from mvtal.election import elect_trace
from mvtal.errors import RangeError
from mvtal.types import ActionSegment, ElectionConfig, ProbabilityTensor
from mvtal.utils import atomic_write_text

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

WIDTH = 800
HEIGHT = 320
MARGIN_LEFT = 50
MARGIN_RIGHT = 20
MARGIN_TOP = 30
MARGIN_BOTTOM = 40

VIEW_COLORS = ("#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#17becf")
AGGREGATE_COLOR = "#d62728"
STAR_COLOR = "#ffbf00"
STAR_RADIUS = 9.0

# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _element(tag: str, **attr) -> str:
    props = " ".join(f"{key.rstrip('_').replace('_', '-')}={quoteattr(str(value))}" for key, value in attr.items())
    return f"<{tag} {props} />"


class _Canvas:
    """秒 / 概率 到画布坐标的映射。"""

    def __init__(self, duration_s: float):
        self.duration_s = duration_s
        self.plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
        self.plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM

    def x(self, seconds: float) -> float:
        return MARGIN_LEFT + seconds / self.duration_s * self.plot_w

    def y(self, prob: float) -> float:
        return MARGIN_TOP + (1.0 - prob) * self.plot_h

    def points(self, pairs) -> str:
        return " ".join(f"{_fmt(self.x(t))},{_fmt(self.y(p))}" for t, p in pairs)


def _star_points(radius: float) -> str:
    points = []
    for i in range(10):
        r = radius if i % 2 == 0 else radius * 0.45
        angle = -math.pi / 2 + i * math.pi / 5
        points.append(f"{_fmt(r * math.cos(angle))},{_fmt(r * math.sin(angle))}")
    return " ".join(points)


def election_svg(p: ProbabilityTensor,
                 cfg: ElectionConfig,
                 class_id: int,
                 gt: Optional[ActionSegment] = None,
                 threads: Optional[int] = None) -> str:
    """生成单类选举过程的 SVG 文本。

    各视角曲线为点线，不透明度与 ω[c, m] 成正比（按该行最大值归一）；聚合曲线为红色实线；
    阈值为黑色虚线；超过阈值的候选区域浅红填充；gt 边界为点划线；
    选中的片段中点画金色星形（没有候选、走兜底时不画）。
    """
    if not 0 <= class_id < cfg.num_classes:
        raise RangeError(f"class_id {class_id} 超出范围 [0, {cfg.num_classes})")
    trace = elect_trace(p, cfg, threads=threads)
    record = trace.classes[class_id]
    fps = cfg.fps
    num_frames = p.num_frames
    canvas = _Canvas(num_frames / fps)
    times = [f / fps for f in range(num_frames)]
    weights = cfg.weights[class_id]
    max_weight = max(weights)
    label = cfg.label_set.name(class_id)

    parts: List[str] = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<title>{escape(f"class {class_id}: {label}")}</title>',
        _element('rect', x=0, y=0, width=WIDTH, height=HEIGHT, fill="white"),
        _element('rect',
                 x=MARGIN_LEFT,
                 y=MARGIN_TOP,
                 width=canvas.plot_w,
                 height=canvas.plot_h,
                 fill="none",
                 stroke="#888888"),
    ]

    for candidate in record.candidates:
        span = range(candidate.start_frame, candidate.end_frame + 1)
        outline = [(times[candidate.start_frame], record.threshold)]
        outline += [(times[f], float(trace.signal.values[f, class_id])) for f in span]
        outline += [(times[candidate.end_frame], record.threshold)]
        parts.append(
            _element('polygon', class_="candidate", points=canvas.points(outline), fill=AGGREGATE_COLOR,
                     fill_opacity="0.2"))

    for view in range(p.num_views):
        opacity = weights[view] / max_weight if max_weight > 0 else 0.0
        curve = zip(times, p.values[:, class_id, view].tolist())
        parts.append(
            _element('polyline',
                     class_="view",
                     points=canvas.points(curve),
                     fill="none",
                     stroke=VIEW_COLORS[view % len(VIEW_COLORS)],
                     stroke_width="1",
                     stroke_dasharray="1,2",
                     stroke_opacity=_fmt(opacity)))

    aggregated = zip(times, trace.signal.values[:, class_id].tolist())
    parts.append(
        _element('polyline',
                 class_="aggregate",
                 points=canvas.points(aggregated),
                 fill="none",
                 stroke=AGGREGATE_COLOR,
                 stroke_width="1.5"))

    y_threshold = _fmt(canvas.y(record.threshold))
    parts.append(
        _element('line',
                 class_="threshold",
                 x1=MARGIN_LEFT,
                 y1=y_threshold,
                 x2=WIDTH - MARGIN_RIGHT,
                 y2=y_threshold,
                 stroke="black",
                 stroke_dasharray="6,4"))

    if gt is not None:
        for seconds in (gt.start_s, gt.end_s):
            x = _fmt(canvas.x(seconds))
            parts.append(
                _element('line',
                         class_="gt",
                         x1=x,
                         y1=MARGIN_TOP,
                         x2=x,
                         y2=HEIGHT - MARGIN_BOTTOM,
                         stroke="black",
                         stroke_dasharray="8,3,2,3"))

    if record.winner is not None and record.segment is not None:
        middle = (record.segment.start_s + record.segment.end_s) / 2
        parts.append(f'<g class="star" transform="translate({_fmt(canvas.x(middle))},'
                     f'{_fmt(canvas.y(record.winner.mean_score))})">')
        parts.append(_element('polygon', points=_star_points(STAR_RADIUS), fill=STAR_COLOR, stroke="black"))
        parts.append('</g>')

    for seconds in _ticks(canvas.duration_s):
        parts.append(f'<text x="{_fmt(canvas.x(seconds))}" y="{HEIGHT - MARGIN_BOTTOM + 16}" font-size="10" '
                     f'text-anchor="middle">{_fmt(seconds)}</text>')
    parts.append(f'<text x="{MARGIN_LEFT}" y="{MARGIN_TOP - 10}" font-size="12">'
                 f'{escape(f"{label} (threshold {record.threshold})")}</text>')
    parts.append('</svg>')
    return "\n".join(parts) + "\n"


def _ticks(duration_s: float, count: int = 8) -> Tuple[float, ...]:
    step = duration_s / count
    return tuple(i * step for i in range(count + 1))


def render_election_svg(p: ProbabilityTensor,
                        cfg: ElectionConfig,
                        class_id: int,
                        gt: Optional[ActionSegment],
                        out_path: PathLike,
                        threads: Optional[int] = None) -> None:
    """把 election_svg 的结果写到 out_path。"""
    atomic_write_text(out_path, election_svg(p, cfg, class_id, gt, threads=threads))
    logger.info(f'election plot for class {class_id} saved to {out_path}')


# ---------------------------------------------------------------------------
# 消融结果表
# ---------------------------------------------------------------------------


def _reference_text(reference: Sequence[float]) -> str:
    return " / ".join(f"{score:.4f}" for score in reference)


def format_ablation(table: AblationTable, fmt: str = 'text') -> str:
    """按 fmt（md / json / text）格式化四行结果和参考行，分数保留 4 位小数。"""
    if fmt == 'json':
        return json.dumps(table.to_dict(), indent=2, ensure_ascii=False) + "\n"
    if fmt == 'md':
        lines = ["| variant | score |", "|---|---|"]
        lines += [f"| {row.name} | {row.score:.4f} |" for row in table.rows]
        lines.append(f"| {REFERENCE_LABEL} | {_reference_text(table.reference)} |")
        return "\n".join(lines) + "\n"
    width = max(len(name) for name in VARIANTS + (REFERENCE_LABEL,))
    lines = [f"{row.name:<{width}}  {row.score:.4f}" for row in table.rows]
    lines.append(f"{REFERENCE_LABEL:<{width}}  {_reference_text(table.reference)}")
    return "\n".join(lines) + "\n"


def report_format(path: PathLike) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == '.md':
        return 'md'
    if suffix == '.json':
        return 'json'
    return 'text'


def write_ablation_report(table: AblationTable, path: PathLike) -> None:
    atomic_write_text(path, format_ablation(table, report_format(path)))
    logger.info(f'ablation report saved to {path}')
