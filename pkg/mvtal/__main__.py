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

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from mvtal.entry import EXIT_INPUT, cmd_ablate, cmd_elect, cmd_eval, cmd_simulate, cmd_viz
from mvtal.log import setup_logging

logger = logging.getLogger(__name__)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {value}")
    return value


class _ArgumentParser(argparse.ArgumentParser):
    """参数错误属于输入错误，退出码为 1（2 留给内部错误）。"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f'{self.prog}: error: {message}\n')


def build_parser() -> argparse.ArgumentParser:
    common = _ArgumentParser(add_help=False)
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('--verbose', action='store_true', help='debug logging')
    verbosity.add_argument('--quiet', action='store_true', help='only warnings and errors')
    common.add_argument('--threads', type=_positive_int, default=None, help='cap on worker threads')

    arg_parser = _ArgumentParser(prog='mvtal',
                                 description='Multi-view temporal action localization post-processing')
    sub = arg_parser.add_subparsers(dest='command', required=True)

    elect = sub.add_parser('elect', parents=[common], help='elect one segment per class from a probability tensor')
    elect.add_argument('--tensor', type=Path, required=True, help='probability tensor CSV')
    elect.add_argument('--config', type=Path, required=True, help='election config JSON')
    elect.add_argument('--out', type=Path, required=True, help='output segments CSV')

    evaluate = sub.add_parser('eval', parents=[common], help='overlap-score evaluation')
    evaluate.add_argument('--gt', type=Path, required=True, help='ground-truth segments CSV')
    evaluate.add_argument('--pred', type=Path, required=True, help='predicted segments CSV')
    evaluate.add_argument('--out', type=Path, default=None, help='JSON evaluation report')

    simulate = sub.add_parser('simulate', parents=[common], help='generate a synthetic corpus')
    simulate.add_argument('--scenario', type=Path, required=True, help='scenario JSON')
    simulate.add_argument('--out', type=Path, required=True, help='output directory')
    simulate.add_argument('--seed', type=_seed, default=None, help='override the scenario seed')

    ablate = sub.add_parser('ablate', parents=[common], help='run the four-variant ablation on a synthetic corpus')
    ablate.add_argument('--scenario', type=Path, required=True, help='scenario JSON')
    ablate.add_argument('--out', type=Path, required=True, help='report path (.md, .json or text)')
    ablate.add_argument('--seed', type=_seed, default=None, help='override the scenario seed')

    viz = sub.add_parser('viz', parents=[common], help='plot the election of one class as SVG')
    viz.add_argument('--tensor', type=Path, required=True, help='probability tensor CSV')
    viz.add_argument('--config', type=Path, required=True, help='election config JSON')
    viz.add_argument('--class', dest='class_id', type=int, required=True, help='class id to plot')
    viz.add_argument('--gt', type=Path, default=None, help='ground-truth segments CSV')
    viz.add_argument('--out', type=Path, required=True, help='output SVG')

    return arg_parser


def run(argv: Optional[List[str]] = None) -> int:
    """解析参数并执行子命令，返回退出码。"""
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    setup_logging(compat_tqdm=True, level=level)
    disable_tqdm = args.quiet or not sys.stderr.isatty()

    if args.command == 'elect':
        return cmd_elect(args.tensor, args.config, args.out, threads=args.threads)
    if args.command == 'eval':
        return cmd_eval(args.gt, args.pred, args.out, threads=args.threads)
    if args.command == 'simulate':
        return cmd_simulate(args.scenario, args.out, seed=args.seed, threads=args.threads, disable_tqdm=disable_tqdm)
    if args.command == 'ablate':
        return cmd_ablate(args.scenario, args.out, seed=args.seed, threads=args.threads, disable_tqdm=disable_tqdm)
    return cmd_viz(args.tensor, args.config, args.class_id, args.out, gt_path=args.gt, threads=args.threads)


def main(argv: Optional[List[str]] = None):
    sys.exit(run(argv))


if __name__ == '__main__':
    main()
