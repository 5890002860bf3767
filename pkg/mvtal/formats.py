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
"""概率张量 CSV、片段 CSV、选举配置 JSON 的读写，以及训练片段提取。

所有读取器只接受写入器能够产生的内容，其余情况一律显式报错（附行号或键名），
不做静默修正。
"""

import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np
from pydantic import ValidationError

from mvtal.errors import ConfigError, FormatError, RangeError
from mvtal.types import ActionSegment, ClipSample, ElectionConfig, LabelSet, ProbabilityTensor, SegmentSet, TimeBase
from mvtal.utils import atomic_write_text, format_float, round_half_away_from_zero

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SEGMENTS_HEADER = ["video_id", "class_id", "start_s", "end_s"]


def tensor_header(num_classes: int) -> List[str]:
    return ["frame", "view"] + [f"p{c}" for c in range(num_classes)]


# ---------------------------------------------------------------------------
# 概率张量 CSV
# ---------------------------------------------------------------------------


def _parse_int(text: str, what: str, path: PathLike, line: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise FormatError(f"{what} 不是整数: {text!r}", path, line) from None


def _parse_float(text: str, what: str, path: PathLike, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise FormatError(f"{what} 不是数字: {text!r}", path, line) from None
    if not math.isfinite(value):
        raise FormatError(f"{what} 不是有限值: {text!r}", path, line)
    return value


def read_tensor_csv(path: PathLike, expected_K: int, expected_M: int) -> ProbabilityTensor:
    """读取概率张量 CSV。

    行必须按 (frame, view) 规范顺序排列：帧 0..T-1，每帧依次出现视角 0..M-1。
    T 由行数推断。

    参数:
        path: CSV 文件路径。
        expected_K: 期望的类别数。
        expected_M: 期望的视角数。

    返回:
        (T, K, M) 的 ProbabilityTensor。
    """
    path = Path(path)
    rows: List[List[float]] = []
    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise FormatError("文件为空，缺少表头", path, 1)
        if len(header) < 3 or header != tensor_header(len(header) - 2):
            raise FormatError(f"表头不合法: {','.join(header)}", path, 1)
        num_classes = len(header) - 2
        if num_classes != expected_K:
            raise FormatError(f"类别数不匹配：期望 {expected_K}，表头为 {num_classes}", path, 1)

        for row in reader:
            line = reader.line_num
            index = len(rows)
            if len(row) != num_classes + 2:
                raise FormatError(f"需要 {num_classes + 2} 列，实际 {len(row)} 列", path, line)
            frame = _parse_int(row[0], "frame", path, line)
            view = _parse_int(row[1], "view", path, line)
            expected_frame, expected_view = divmod(index, expected_M)
            if (frame, view) != (expected_frame, expected_view):
                raise FormatError(
                    f"期望 (frame, view) = ({expected_frame}, {expected_view})，实际 ({frame}, {view})",
                    path,
                    line,
                )
            probs = [_parse_float(text, f"p{c}", path, line) for c, text in enumerate(row[2:])]
            for c, value in enumerate(probs):
                if not 0.0 <= value <= 1.0:
                    raise FormatError(f"p{c} = {value} 不在 [0, 1] 内", path, line)
            rows.append(probs)

    if not rows:
        raise FormatError("没有数据行（T 必须 >= 1）", path, 2)
    if len(rows) % expected_M != 0:
        frame, view = divmod(len(rows), expected_M)
        raise FormatError(f"缺少 (frame, view) = ({frame}, {view})", path, len(rows) + 2)

    num_frames = len(rows) // expected_M
    values = np.array(rows, dtype=np.float64).reshape(num_frames, expected_M, num_classes).transpose(0, 2, 1)
    return ProbabilityTensor(values=values)


def write_tensor_csv(t: ProbabilityTensor, path: PathLike) -> None:
    """写出规范格式的概率张量 CSV（行按 (frame, view) 排序，浮点用最短往返表示）。"""
    num_frames, num_classes, num_views = t.values.shape
    flat = t.values.transpose(0, 2, 1).reshape(num_frames * num_views, num_classes).tolist()
    lines = [",".join(tensor_header(num_classes))]
    for index, probs in enumerate(flat):
        frame, view = divmod(index, num_views)
        lines.append(f"{frame},{view}," + ",".join(map(format_float, probs)))
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# 片段 CSV
# ---------------------------------------------------------------------------


def read_segments_csv(path: PathLike, labels: Optional[LabelSet] = None) -> List[SegmentSet]:
    """读取片段 CSV，按 video_id 分组（组按首次出现排序，组内保持文件顺序）。

    零字节文件视为没有任何片段。

    参数:
        path: CSV 文件路径。
        labels: 可选的类别表，提供时未知 class_id 报错。
    """
    path = Path(path)
    groups: Dict[str, List[ActionSegment]] = {}
    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            return []
        if header != SEGMENTS_HEADER:
            raise FormatError(f"表头应为 {','.join(SEGMENTS_HEADER)}，实际 {','.join(header)}", path, 1)

        for row in reader:
            line = reader.line_num
            if len(row) != len(SEGMENTS_HEADER):
                raise FormatError(f"需要 {len(SEGMENTS_HEADER)} 列，实际 {len(row)} 列", path, line)
            video_id = row[0]
            if not video_id:
                raise FormatError("video_id 不能为空", path, line)
            class_id = _parse_int(row[1], "class_id", path, line)
            start_s = _parse_float(row[2], "start_s", path, line)
            end_s = _parse_float(row[3], "end_s", path, line)
            if class_id < 0 or (labels is not None and not labels.contains(class_id)):
                raise FormatError(f"未知 class_id: {class_id}", path, line)
            if start_s < 0:
                raise FormatError(f"start_s 不能为负: {start_s}", path, line)
            if not start_s < end_s:
                raise FormatError(f"start_s ({start_s}) 必须小于 end_s ({end_s})", path, line)
            segment = ActionSegment(class_id=class_id, start_s=start_s, end_s=end_s)
            groups.setdefault(video_id, []).append(segment)

    return [SegmentSet(video_id=video_id, segments=tuple(segments)) for video_id, segments in groups.items()]


def write_segments_csv(sets: Iterable[SegmentSet], path: PathLike) -> None:
    """写出片段 CSV，行按 (video_id, start_s, class_id) 排序；空列表只写表头。"""
    records = [(segment_set.video_id, segment) for segment_set in sets for segment in segment_set.segments]
    records.sort(key=lambda item: (item[0], item[1].start_s, item[1].class_id, item[1].end_s))

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(SEGMENTS_HEADER)
    for video_id, segment in records:
        writer.writerow([video_id, segment.class_id, format_float(segment.start_s), format_float(segment.end_s)])
    atomic_write_text(path, buffer.getvalue())


# ---------------------------------------------------------------------------
# 配置 JSON
# ---------------------------------------------------------------------------


def load_json_document(path: PathLike) -> Dict[str, Any]:
    """读取顶层为对象的 JSON 文件。"""
    with open(path, 'r', encoding='utf-8') as f:
        try:
            document = json.load(f)
        except json.JSONDecodeError as err:
            raise ConfigError(f"JSON 解析失败: {err}") from None
    if not isinstance(document, dict):
        raise ConfigError("顶层必须是 JSON 对象")
    return document


def validation_to_config_error(err: ValidationError, prefix: str = "") -> ConfigError:
    """把 pydantic 的校验错误转换为带键名的 ConfigError（取第一条）。"""
    detail = err.errors()[0]
    key = ".".join(str(part) for part in detail.get('loc', ()))
    if prefix:
        key = f"{prefix}.{key}" if key else prefix
    return ConfigError(detail.get('msg', str(err)), key=key or None)


def parse_config(document: Dict[str, Any]) -> ElectionConfig:
    try:
        return ElectionConfig.model_validate(document)
    except ValidationError as err:
        raise validation_to_config_error(err) from None


def read_config(path: PathLike) -> ElectionConfig:
    """读取选举配置 JSON，缺省项补默认值，ω 逐行归一化。"""
    return parse_config(load_json_document(path))


def config_to_document(cfg: ElectionConfig) -> Dict[str, Any]:
    document: Dict[str, Any] = {
        "num_classes": cfg.num_classes,
        "num_views": cfg.num_views,
        "fps": cfg.fps,
        "weights": [list(row) for row in cfg.weights],
        "thresholds": list(cfg.thresholds),
        "merge_gap_s": cfg.merge_gap_s,
        "fallback": cfg.fallback.value,
    }
    if cfg.labels is not None:
        document["labels"] = [label.name for label in cfg.labels.labels]
    return document


def write_config(cfg: ElectionConfig, path: PathLike) -> None:
    """写出规范 JSON（固定键顺序、缩进 2），写->读->写 字节一致。"""
    atomic_write_text(path, json.dumps(config_to_document(cfg), indent=2, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# 训练片段提取
# ---------------------------------------------------------------------------


def extract_clips(annotations: SegmentSet, tb: TimeBase, T: int) -> List[ClipSample]:
    """每个标注片段生成一个训练样本，帧范围 [round(s·fps), round(e·fps) - 1]。

    未标注（空）区域不产生样本。

    参数:
        annotations: 单个视频的标注。
        tb: 帧率。
        T: 视频总帧数。
    """
    extent_s = T / tb.fps
    clips = []
    for segment in annotations.segments:
        if segment.start_s < 0 or segment.end_s > extent_s:
            raise RangeError(
                f"{annotations.video_id}: 片段 ({segment.start_s}, {segment.end_s}) 超出视频范围 [0, {extent_s}]")
        start_frame = round_half_away_from_zero(segment.start_s * tb.fps)
        end_frame = round_half_away_from_zero(segment.end_s * tb.fps) - 1
        if start_frame > end_frame:
            raise RangeError(f"{annotations.video_id}: 片段 ({segment.start_s}, {segment.end_s}) 不足一帧")
        clips.append(
            ClipSample(video_id=annotations.video_id,
                       class_id=segment.class_id,
                       start_frame=start_frame,
                       end_frame=end_frame))
    logger.debug(f'{annotations.video_id}: extracted {len(clips)} clips')
    return clips
