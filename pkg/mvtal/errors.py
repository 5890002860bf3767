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
"""异常层级。

CLI 退出码约定：
- InputError 及其子类、OSError -> 1（输入/校验失败）
- ContractViolation 及其他未预期异常 -> 2（内部不变量被破坏）
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Union


class MvtalError(Exception):
    """所有 mvtal 异常的基类。"""


class InputError(MvtalError):
    """用户输入（文件、参数、配置）不合法。"""


class FormatError(InputError):
    """CSV 文件格式错误，附带文件路径和行号。"""

    def __init__(self, message: str, path: Union[str, Path, None] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
        if line is not None:
            where = f"{where}:{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ConfigError(InputError):
    """配置 / 场景 JSON 不合法，附带出错的键名。"""

    def __init__(self, message: str, key: Optional[str] = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class RangeError(InputError):
    """片段超出视频时长。"""


class InvalidIntervalError(InputError, ValueError):
    """区间退化（start >= end）。"""


class ShapeError(InputError, ValueError):
    """张量 / 权重维度不匹配。"""


class CapacityError(InputError):
    """穷举匹配超出规模保护上限。"""


class GenerationError(InputError):
    """合成场景参数不可行（多次重采样后仍放不下）。"""


class UnknownVideoError(InputError):
    """预测文件中出现了真值文件里不存在的视频。"""


class ScorerError(MvtalError):
    """片段打分器失败，附带 (view, start) 上下文。"""

    def __init__(self, message: str, view: int, start: int):
        self.view = view
        self.start = start
        super().__init__(f"clip scorer failed at view={view}, start={start}: {message}")


class ContractViolation(MvtalError):
    """内部前置/后置条件被破坏（例如把未排序的候选交给 merge）。"""
