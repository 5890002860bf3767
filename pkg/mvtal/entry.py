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
"""各子命令的实现，返回进程退出码。

标准输出只写结果摘要，日志走 stderr。
"""

import json
import logging
from pathlib import Path
from typing import Callable, Optional, Union

from mvtal.errors import ContractViolation, InputError, RangeError
from mvtal.types import ElectionConfig

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INTERNAL = 2


def _guarded(action: Callable[[], None]) -> int:
    """执行命令并把异常映射为退出码。"""
    try:
        action()
    except (InputError, OSError) as err:
        logger.error(f'{type(err).__name__}: {err}')
        return EXIT_INPUT
    except ContractViolation as err:
        logger.error(f'internal invariant violated: {err}')
        return EXIT_INTERNAL
    except Exception:
        logger.exception('unexpected failure')
        return EXIT_INTERNAL
    return EXIT_OK


def _variant_filename(name: str) -> str:
    return name.lower().replace('+', '_') + '.json'


# ---------------------------------------------------------------------------
# elect
# ---------------------------------------------------------------------------


def cmd_elect(tensor_path: PathLike,
              config_path: PathLike,
              out_path: PathLike,
              threads: Optional[int] = None) -> int:
    """对单个视频的概率张量执行选举，写出片段 CSV，并打印逐类摘要。

    视频标识取张量文件名（不含扩展名）。
    """
    from mvtal.election import elect_trace
    from mvtal.formats import read_config, read_tensor_csv, write_segments_csv

    def _run():
        cfg = read_config(config_path)
        p = read_tensor_csv(tensor_path, cfg.num_classes, cfg.num_views)
        video_id = Path(tensor_path).stem
        trace = elect_trace(p, cfg, video_id=video_id, threads=threads)
        write_segments_csv([trace.segment_set()], out_path)

        labels = cfg.label_set
        for record in trace.classes:
            name = labels.name(record.class_id)
            if record.segment is None:
                print(f"{record.class_id:>3}  {name:<26}  -")
                continue
            span = f"{record.segment.start_s:g}-{record.segment.end_s:g}s"
            if record.fallback_used:
                print(f"{record.class_id:>3}  {name:<26}  {span:<12}  fallback")
            else:
                print(f"{record.class_id:>3}  {name:<26}  {span:<12}  mean {record.winner.mean_score:.4f}")
        fallbacks = sum(1 for record in trace.classes if record.fallback_used)
        if fallbacks:
            logger.warning(f'{video_id}: {fallbacks} classes had no candidate and used the argmax peak')
        logger.info(f'segments saved to {out_path}')

    return _guarded(_run)


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def cmd_eval(gt_path: PathLike,
             pred_path: PathLike,
             report_path: Optional[PathLike] = None,
             threads: Optional[int] = None) -> int:
    """评测预测片段，打印语料分数（4 位小数），可选写出 JSON 报告。"""
    from mvtal.evaluation import evaluate_files, write_evaluation_report

    def _run():
        report = evaluate_files(gt_path, pred_path, threads=threads)
        if report_path is not None:
            write_evaluation_report(report, report_path)
            logger.info(f'evaluation report saved to {report_path}')
        print(f"{report.corpus_score:.4f}")

    return _guarded(_run)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(scenario_path: PathLike,
                 out_dir: PathLike,
                 seed: Optional[int] = None,
                 threads: Optional[int] = None,
                 disable_tqdm: bool = False) -> int:
    """生成合成测试集：每个视频一个张量 CSV、合并的真值 gt.csv、均匀配置 config.json 和 manifest.json。"""
    from mvtal.formats import write_config, write_segments_csv, write_tensor_csv
    from mvtal.synthesis import generate_corpus, read_scenario
    from mvtal.utils import atomic_write_text

    def _run():
        scenario = read_scenario(scenario_path, seed=seed)
        corpus = generate_corpus(scenario, threads=threads, include_tuning=False, disable_tqdm=disable_tqdm)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)

        for video in corpus.test:
            write_tensor_csv(video.tensor, out / f"{video.video_id}.csv")
        write_segments_csv([video.gt for video in corpus.test], out / "gt.csv")
        cfg = ElectionConfig.uniform(scenario.num_classes, scenario.num_views, fps=scenario.fps,
                                     labels=scenario.labels)
        write_config(cfg, out / "config.json")

        manifest = {
            "seed": scenario.seed,
            "num_classes": scenario.num_classes,
            "num_views": scenario.num_views,
            "fps": scenario.fps,
            "gt": "gt.csv",
            "config": "config.json",
            "videos": [{
                "video_id": video.video_id,
                "seed": video.seed,
                "tensor": f"{video.video_id}.csv"
            } for video in corpus.test],
        }
        atomic_write_text(out / "manifest.json", json.dumps(manifest, indent=2, ensure_ascii=False) + "\n")
        print(f"{len(corpus.test)} videos written to {out}")
        logger.info(f'synthetic corpus saved to {out}')

    return _guarded(_run)


# ---------------------------------------------------------------------------
# ablate
# ---------------------------------------------------------------------------


def cmd_ablate(scenario_path: PathLike,
               report_path: PathLike,
               seed: Optional[int] = None,
               threads: Optional[int] = None,
               disable_tqdm: bool = False) -> int:
    """运行消融实验，写出结果表，调好的配置写到 `<report>.configs/` 下。"""
    from mvtal.ablation import ablation_run
    from mvtal.formats import write_config
    from mvtal.report import format_ablation, write_ablation_report
    from mvtal.synthesis import generate_corpus, read_scenario

    def _run():
        scenario = read_scenario(scenario_path, seed=seed)
        corpus = generate_corpus(scenario, threads=threads, disable_tqdm=disable_tqdm)
        table = ablation_run(corpus, threads=threads, disable_tqdm=disable_tqdm)
        write_ablation_report(table, report_path)
        configs_dir = Path(f"{report_path}.configs")
        for row in table.rows:
            write_config(row.config, configs_dir / _variant_filename(row.name))
        print(format_ablation(table), end="")

    return _guarded(_run)


# ---------------------------------------------------------------------------
# viz
# ---------------------------------------------------------------------------


def cmd_viz(tensor_path: PathLike,
            config_path: PathLike,
            class_id: int,
            out_path: PathLike,
            gt_path: Optional[PathLike] = None,
            threads: Optional[int] = None) -> int:
    """画出某一类的选举过程。提供 gt_path 时，取与张量同名视频中该类的第一个真值片段。"""
    from mvtal.formats import read_config, read_segments_csv, read_tensor_csv
    from mvtal.report import render_election_svg

    def _run():
        cfg = read_config(config_path)
        if not 0 <= class_id < cfg.num_classes:
            raise RangeError(f"--class {class_id} 超出范围 [0, {cfg.num_classes})")
        p = read_tensor_csv(tensor_path, cfg.num_classes, cfg.num_views)
        gt = None
        if gt_path is not None:
            video_id = Path(tensor_path).stem
            for segment_set in read_segments_csv(gt_path, labels=cfg.label_set):
                if segment_set.video_id == video_id and segment_set.for_class(class_id):
                    gt = segment_set.for_class(class_id)[0]
                    break
            if gt is None:
                logger.warning(f'no ground truth for class {class_id} in video {video_id}')
        render_election_svg(p, cfg, class_id, gt, out_path, threads=threads)

    return _guarded(_run)
