"""命令行：退出码、标准输出摘要与输出文件。"""

import json
import logging

import pytest

from mvtal.__main__ import build_parser, main, run
from mvtal.formats import read_segments_csv, write_config, write_segments_csv, write_tensor_csv

from .conftest import seg, segset, tensor_with_run, uniform_config

SMALL_SCENARIO = {
    "num_classes": 4,
    "num_views": 3,
    "fps": 30.0,
    "scenario": {
        "seed": 3,
        "video_len_s": 120.0,
        "duration_s": [5.0, 20.0],
        "num_videos": 2,
        "tuning_videos": 1,
    },
}


@pytest.fixture(autouse=True)
def _restore_root_logger():
    """run() 会重设根 logger，测试结束后还原。"""
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


@pytest.fixture
def clip(tmp_path):
    """900 帧、2 类、3 视角；类 0 在 150..449 帧为 1。"""
    tensor = tmp_path / "clip.csv"
    config = tmp_path / "config.json"
    write_tensor_csv(tensor_with_run(900, 2, 3, class_id=0, runs=[(150, 449)]), tensor)
    write_config(uniform_config(2, 3), config)
    return tensor, config


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(SMALL_SCENARIO), encoding="utf-8")
    return path


class TestParser:

    def test_requires_command(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_class_flag(self):
        args = build_parser().parse_args(
            ["viz", "--tensor", "t.csv", "--config", "c.json", "--class", "3", "--out", "o.svg"])
        assert args.class_id == 3

    def test_threads_must_be_positive(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["eval", "--gt", "a", "--pred", "b", "--threads", "0"])

    @pytest.mark.parametrize("argv", [
        ["eval", "--gt", "a.csv", "--pred", "b.csv", "--threads", "0"],
        ["elect", "--tensor", "t.csv"],
        ["simulate", "--scenario", "s.json", "--out", "o", "--seed", "-1"],
        ["viz", "--tensor", "t.csv", "--config", "c.json", "--class", "x", "--out", "o.svg"],
        ["unknown"],
    ])
    def test_usage_errors_exit_1(self, argv, capsys):
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code == 1
        assert "error:" in capsys.readouterr().err

    @pytest.mark.parametrize("command", [
        ["elect", "--tensor", "t.csv", "--config", "c.json", "--out", "o.csv"],
        ["viz", "--tensor", "t.csv", "--config", "c.json", "--class", "0", "--out", "o.svg"],
    ])
    def test_threads_accepted_everywhere(self, command):
        assert build_parser().parse_args(command + ["--threads", "3"]).threads == 3


class TestElect:
    """mvtal elect"""

    def test_writes_segments(self, tmp_path, clip, capsys):
        tensor, config = clip
        out = tmp_path / "pred.csv"
        assert run(["elect", "--tensor", str(tensor), "--config", str(config), "--out", str(out)]) == 0
        (result, ) = read_segments_csv(out)
        assert result.video_id == "clip"
        assert [(s.class_id, s.start_s, s.end_s) for s in result.segments] == [(0, 5.0, 15.0), (1, 0.0, 1.0)]
        stdout = capsys.readouterr().out
        assert "5-15s" in stdout
        assert "fallback" in stdout

    def test_threads_same_output(self, tmp_path, clip):
        tensor, config = clip
        serial, threaded = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run(["elect", "--tensor", str(tensor), "--config", str(config), "--out", str(serial)]) == 0
        argv = ["elect", "--tensor", str(tensor), "--config", str(config), "--out", str(threaded), "--threads", "2"]
        assert run(argv) == 0
        assert serial.read_bytes() == threaded.read_bytes()

    def test_malformed_tensor(self, tmp_path, clip):
        _, config = clip
        tensor = tmp_path / "bad.csv"
        tensor.write_text("frame,view,p0,p1\n0,0,abc,0.5\n", encoding="utf-8")
        out = tmp_path / "pred.csv"
        assert run(["elect", "--tensor", str(tensor), "--config", str(config), "--out", str(out)]) == 1
        assert not out.exists()

    def test_missing_config(self, tmp_path, clip):
        tensor, _ = clip
        out = tmp_path / "pred.csv"
        assert run(["elect", "--tensor", str(tensor), "--config", str(tmp_path / "nope.json"), "--out", str(out)]) == 1


class TestEval:
    """mvtal eval"""

    def _eval(self, tmp_path, gt_sets, pred_sets, capsys, extra=()):
        gt, pred = tmp_path / "gt.csv", tmp_path / "pred.csv"
        write_segments_csv(gt_sets, gt)
        write_segments_csv(pred_sets, pred)
        code = run(["eval", "--gt", str(gt), "--pred", str(pred), *extra])
        return code, capsys.readouterr().out.strip()

    def test_perfect(self, tmp_path, capsys):
        sets = [segset(seg(0, 0, 5), seg(1, 6, 20), video_id="a")]
        assert self._eval(tmp_path, sets, sets, capsys) == (0, "1.0000")

    def test_empty_prediction(self, tmp_path, capsys):
        assert self._eval(tmp_path, [segset(seg(0, 0, 5), video_id="a")], [], capsys) == (0, "0.0000")

    def test_pooled(self, tmp_path, capsys):
        gt = [segset(seg(0, 0, 10), seg(1, 20, 30), video_id="a"), segset(seg(0, 0, 10), video_id="b")]
        pred = [segset(seg(0, 0, 10), video_id="a"), segset(seg(0, 0, 10), seg(3, 50, 60), video_id="b")]
        # (1 + 1) / (2 + 2)
        assert self._eval(tmp_path, gt, pred, capsys) == (0, "0.5000")

    def test_report_file(self, tmp_path, capsys):
        sets = [segset(seg(0, 0, 5), video_id="a")]
        report = tmp_path / "report.json"
        code, _ = self._eval(tmp_path, sets, sets, capsys, extra=("--out", str(report)))
        assert code == 0
        assert json.loads(report.read_text(encoding="utf-8"))["corpus_score"] == 1.0

    def test_unknown_video(self, tmp_path, capsys):
        code, stdout = self._eval(tmp_path, [segset(seg(0, 0, 5), video_id="a")],
                                  [segset(seg(0, 0, 5), video_id="b")], capsys)
        assert code == 1 and stdout == ""


class TestSimulate:
    """mvtal simulate"""

    def test_outputs(self, tmp_path, scenario_file, capsys):
        out = tmp_path / "corpus"
        assert run(["simulate", "--scenario", str(scenario_file), "--out", str(out)]) == 0
        names = sorted(p.name for p in out.iterdir())
        assert names == ["config.json", "gt.csv", "manifest.json", "video_000.csv", "video_001.csv"]
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert [v["seed"] for v in manifest["videos"]] == [3, 2]
        assert capsys.readouterr().out.startswith("2 videos written to")

    def test_deterministic(self, tmp_path, scenario_file):
        first, second = tmp_path / "a", tmp_path / "b"
        assert run(["simulate", "--scenario", str(scenario_file), "--out", str(first)]) == 0
        assert run(["simulate", "--scenario", str(scenario_file), "--out", str(second), "--threads", "2"]) == 0
        for path in first.iterdir():
            assert path.read_bytes() == (second / path.name).read_bytes()

    def test_seed_override(self, tmp_path, scenario_file):
        out = tmp_path / "corpus"
        assert run(["simulate", "--scenario", str(scenario_file), "--out", str(out), "--seed", "10"]) == 0
        assert json.loads((out / "manifest.json").read_text(encoding="utf-8"))["seed"] == 10

    def test_missing_scenario(self, tmp_path):
        assert run(["simulate", "--scenario", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 1

    def test_elect_then_eval(self, tmp_path, scenario_file, capsys):
        out = tmp_path / "corpus"
        assert run(["simulate", "--scenario", str(scenario_file), "--out", str(out)]) == 0
        pred = tmp_path / "pred.csv"
        argv = ["elect", "--tensor", str(out / "video_000.csv"), "--config", str(out / "config.json")]
        assert run(argv + ["--out", str(pred)]) == 0
        capsys.readouterr()
        assert run(["eval", "--gt", str(out / "gt.csv"), "--pred", str(pred)]) == 0
        assert 0.0 <= float(capsys.readouterr().out) <= 1.0


class TestAblate:
    """mvtal ablate"""

    def test_report_and_configs(self, tmp_path, scenario_file, capsys):
        report = tmp_path / "ablation.md"
        assert run(["ablate", "--scenario", str(scenario_file), "--out", str(report)]) == 0
        assert report.read_text(encoding="utf-8").startswith("| variant | score |")
        configs = sorted(p.name for p in (tmp_path / "ablation.md.configs").iterdir())
        assert configs == ["sel.json", "sel_fltr.json", "sel_fltr_mrg.json", "sel_fltr_mrg_agg.json"]
        assert "published" in capsys.readouterr().out

    def test_no_tuning_videos(self, tmp_path):
        document = json.loads(json.dumps(SMALL_SCENARIO))
        document["scenario"]["tuning_videos"] = 0
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(document), encoding="utf-8")
        assert run(["ablate", "--scenario", str(path), "--out", str(tmp_path / "r.md")]) == 1


class TestViz:
    """mvtal viz"""

    def test_writes_svg(self, tmp_path, clip):
        tensor, config = clip
        gt = tmp_path / "gt.csv"
        write_segments_csv([segset(seg(0, 5.0, 15.0), video_id="clip")], gt)
        out = tmp_path / "plot.svg"
        argv = ["viz", "--tensor", str(tensor), "--config", str(config), "--class", "0", "--gt", str(gt)]
        assert run(argv + ["--out", str(out)]) == 0
        assert 'class="gt"' in out.read_text(encoding="utf-8")

    def test_bad_class(self, tmp_path, clip):
        tensor, config = clip
        out = tmp_path / "plot.svg"
        assert run(["viz", "--tensor", str(tensor), "--config", str(config), "--class", "7", "--out", str(out)]) == 1
        assert not out.exists()
