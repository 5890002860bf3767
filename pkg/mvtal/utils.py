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

import logging
import math
import os
import tempfile
from pathlib import Path
from typing import TYPE_CHECKING, Tuple, Union

from mvtal.errors import InvalidIntervalError

if TYPE_CHECKING:
    from mvtal.types import TimeBase

logger = logging.getLogger(__name__)


def frames_to_seconds(frame: int, tb: "TimeBase") -> float:
    """帧序号转秒，双精度 frame / fps。"""
    if frame < 0:
        raise ValueError(f"帧序号不能为负: {frame}")
    return frame / tb.fps


def round_half_away_from_zero(value: float) -> int:
    """四舍五入到整数，.5 远离 0 取整（Python 内置 round 是银行家舍入）。"""
    return int(math.copysign(math.floor(abs(value) + 0.5), value))


def interval_overlap_seconds(a: Tuple[float, float], b: Tuple[float, float]) -> Tuple[float, float]:
    """两个区间的 (交集长度, 并集跨度)。

    并集取两区间的外包跨度 max(e) - min(s)，不相交时交集截断为 0。
    """
    start_a, end_a = a
    start_b, end_b = b
    if not start_a < end_a:
        raise InvalidIntervalError(f"区间不合法: ({start_a}, {end_a})")
    if not start_b < end_b:
        raise InvalidIntervalError(f"区间不合法: ({start_b}, {end_b})")
    intersection = max(min(end_a, end_b) - max(start_a, start_b), 0.0)
    union = max(end_a, end_b) - min(start_a, start_b)
    return intersection, union


def format_float(value: float) -> str:
    """规范浮点格式：最短可往返表示（repr），1.0 输出为 `1.0`。"""
    return repr(float(value))


def atomic_write_text(path: Union[str, Path], text: str) -> None:
    """先写同目录临时文件再替换，失败时不留下半截文件。"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise
    logger.debug(f'wrote {path}')
