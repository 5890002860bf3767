"""选举四个步骤及其组合的测试。"""

import time

import numpy as np
import pytest

from mvtal.election import (
    aggregate,
    elect,
    elect_signal,
    elect_trace,
    filter,
    merge,
    merge_runs,
    runs_above,
    select,
)
from mvtal.errors import ContractViolation, ShapeError
from mvtal.types import AggregatedSignal, Candidate, FallbackMode, ProbabilityTensor, TimeBase

from .conftest import random_simplex_tensor, tensor_with_run, uniform_config, zeros_tensor

TB = TimeBase(fps=30.0)


def _signal(column) -> AggregatedSignal:
    return AggregatedSignal(values=np.asarray(column, dtype=np.float64)[:, np.newaxis])


def _cands(signal: AggregatedSignal, threshold: float = 0.5):
    return filter(signal, [threshold])[0]


def _sweep_until_stable(spans, gap: int):
    """逐次从左到右扫一遍，合并间隔 < gap 的相邻段，直到不再变化。"""
    while spans:
        swept = [spans[0]]
        for start, end in spans[1:]:
            if start - swept[-1][1] - 1 < gap:
                swept[-1] = (swept[-1][0], end)
            else:
                swept.append((start, end))
        if swept == spans:
            break
        spans = swept
    return spans


def _merge_in_random_order(spans, gap: int, rng):
    """每次随机挑一对可合并的相邻段合并。"""
    spans = list(spans)
    while True:
        mergeable = [i for i in range(len(spans) - 1) if spans[i + 1][0] - spans[i][1] - 1 < gap]
        if not mergeable:
            return spans
        i = mergeable[int(rng.integers(0, len(mergeable)))]
        spans[i:i + 2] = [(spans[i][0], spans[i + 1][1])]


class TestAggregate:
    """AGG。"""

    def test_uniform_equals_view_mean(self):
        p = random_simplex_tensor(np.random.default_rng(0), 200, 4, 3)
        out = aggregate(p, np.full((4, 3), 1 / 3))
        assert np.array_equal(out.values, p.values.mean(axis=2))

    def test_selector_picks_view(self):
        p = random_simplex_tensor(np.random.default_rng(1), 50, 2, 3)
        out = aggregate(p, [[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        assert np.array_equal(out.values[:, 0], p.values[:, 0, 0])
        assert np.array_equal(out.values[:, 1], p.values[:, 1, 2])

    def test_weighted(self):
        values = zeros_tensor(1, 1, 2)
        values[0, 0] = [0.2, 0.6]
        out = aggregate(ProbabilityTensor(values=values), [[0.25, 0.75]])
        assert out.values[0, 0] == pytest.approx(0.5)

    @pytest.mark.parametrize("row,expected", [
        ([1 / 3, 1 / 3, 1 / 3], 0.6),
        ([0.5, 0.3, 0.2], 0.66),
    ])
    def test_hand_dot_product(self, row, expected):
        values = zeros_tensor(1, 1, 3)
        values[0, 0] = [0.8, 0.6, 0.4]
        out = aggregate(ProbabilityTensor(values=values), [row])
        assert out.values[0, 0] == pytest.approx(expected, abs=1e-12)

    def test_shape_mismatch(self):
        p = ProbabilityTensor(values=zeros_tensor(3, 2, 2))
        with pytest.raises(ShapeError):
            aggregate(p, np.full((2, 3), 1 / 3))

    def test_rows_must_sum_to_one(self):
        p = ProbabilityTensor(values=zeros_tensor(3, 1, 2))
        with pytest.raises(ContractViolation):
            aggregate(p, [[0.5, 0.6]])


class TestFilter:
    """FLTR。"""

    def test_runs(self):
        cands = _cands(_signal([0.2, 0.6, 0.7, 0.4, 0.6]))
        assert [(c.start_frame, c.end_frame) for c in cands] == [(1, 2), (4, 4)]
        assert cands[0].mean_score == pytest.approx(0.65)
        assert cands[1].mean_score == pytest.approx(0.6)

    def test_runs_are_maximal(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            column = rng.random(int(rng.integers(1, 120)))
            threshold = float(rng.uniform(0.1, 0.9))
            for c in _cands(_signal(column), threshold):
                assert np.all(column[c.start_frame:c.end_frame + 1] > threshold)
                if c.start_frame > 0:
                    assert column[c.start_frame - 1] <= threshold
                if c.end_frame < len(column) - 1:
                    assert column[c.end_frame + 1] <= threshold

    def test_strictly_above(self):
        assert _cands(_signal([0.5, 0.5, 0.5])) == []

    def test_whole_signal(self):
        cands = _cands(_signal([0.9] * 5))
        assert [(c.start_frame, c.end_frame) for c in cands] == [(0, 4)]

    def test_threshold_count(self):
        with pytest.raises(ShapeError):
            filter(_signal([0.1, 0.2]), [0.5, 0.5])

    def test_per_class_thresholds(self):
        signal = AggregatedSignal(values=np.array([[0.4, 0.4], [0.4, 0.4]]))
        per_class = filter(signal, [0.3, 0.5])
        assert len(per_class[0]) == 1 and per_class[1] == []


class TestMerge:
    """MRG。"""

    def _two_runs(self, gap: int):
        column = np.zeros(10 + gap + 10)
        column[:10] = 0.9
        column[10 + gap:] = 0.9
        signal = _signal(column)
        return signal, _cands(signal)

    def test_gap_of_14_frames_merges(self):
        signal, cands = self._two_runs(14)
        merged = merge(cands, 15, signal)
        assert [(c.start_frame, c.end_frame) for c in merged] == [(0, 33)]
        assert merged[0].mean_score == pytest.approx(0.9 * 20 / 34)

    def test_gap_of_15_frames_stays_apart(self):
        signal, cands = self._two_runs(15)
        assert merge(cands, 15, signal) == cands

    def test_zero_gap_is_noop(self):
        signal, cands = self._two_runs(1)
        assert merge(cands, 0, signal) == cands

    def test_chain_merges_to_fixpoint(self):
        column = np.zeros(40)
        for start in (0, 12, 24):
            column[start:start + 10] = 0.9
        signal = _signal(column)
        merged = merge(_cands(signal), 3, signal)
        assert [(c.start_frame, c.end_frame) for c in merged] == [(0, 33)]

    def test_idempotent_random(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            column = (rng.random(int(rng.integers(1, 200))) > rng.uniform(0.2, 0.8)).astype(float)
            signal = _signal(column * 0.9)
            gap = int(rng.integers(0, 20))
            once = merge(_cands(signal), gap, signal)
            twice = merge(once, gap, signal)
            assert once == twice
            for prev, nxt in zip(once, once[1:]):
                assert nxt.start_frame - prev.end_frame - 1 >= gap

    @pytest.mark.parametrize("second_start,expected", [
        (111, [(0, 200)]),
        (116, [(0, 100), (116, 200)]),
    ])
    def test_half_second_boundary(self, second_start, expected):
        column = np.zeros(201)
        column[0:101] = 0.9
        column[second_start:201] = 0.9
        signal = _signal(column)
        merged = merge(_cands(signal), 15, signal)
        assert [(c.start_frame, c.end_frame) for c in merged] == expected

    def test_fixpoint_independent_of_visit_order(self):
        rng = np.random.default_rng(12)
        for _ in range(300):
            column = (rng.random(int(rng.integers(1, 150))) > rng.uniform(0.2, 0.8)).astype(float)
            signal = _signal(column * 0.9)
            gap = int(rng.integers(0, 15))
            cands = _cands(signal)
            spans = [(c.start_frame, c.end_frame) for c in merge(cands, gap, signal)]
            initial = [(c.start_frame, c.end_frame) for c in cands]
            assert spans == _sweep_until_stable(initial, gap)
            assert spans == _merge_in_random_order(initial, gap, rng)

    def test_unsorted_input(self):
        signal = _signal([0.9] * 10)
        cands = [Candidate(0, 5, 6, 0.9), Candidate(0, 0, 1, 0.9)]
        with pytest.raises(ContractViolation):
            merge(cands, 3, signal)

    def test_overlapping_input(self):
        signal = _signal([0.9] * 10)
        with pytest.raises(ContractViolation):
            merge([Candidate(0, 0, 4, 0.9), Candidate(0, 4, 6, 0.9)], 3, signal)

    def test_mixed_classes(self):
        signal = AggregatedSignal(values=np.full((10, 2), 0.9))
        with pytest.raises(ContractViolation):
            merge([Candidate(0, 0, 1, 0.9), Candidate(1, 5, 6, 0.9)], 3, signal)

    def test_kernels(self):
        starts, ends = runs_above(np.array([0.0, 1.0, 1.0, 0.0, 0.0, 1.0]), 0.5)
        assert starts.tolist() == [1, 5] and ends.tolist() == [2, 5]
        starts, ends = merge_runs(starts, ends, 3)
        assert starts.tolist() == [1] and ends.tolist() == [5]


class TestSelect:
    """SEL 与兜底。"""

    def test_highest_mean_wins(self):
        column = np.zeros(300)
        column[0:30] = 0.7
        column[100:250] = 0.9
        signal = _signal(column)
        segments = select([_cands(signal)], signal, TB)
        assert [(s.start_s, s.end_s) for s in segments] == [(3.0, 8.0)]

    def test_tie_prefers_earlier_then_longer(self):
        column = np.zeros(400)
        column[60:90] = 0.75
        column[200:300] = 0.75
        signal = _signal(column)
        assert select([_cands(signal)], signal, TB)[0].start_s == 2.0
        longer = [Candidate(0, 60, 89, 0.75), Candidate(0, 60, 119, 0.75)]
        assert select([longer], signal, TB)[0].end_s == 4.0

    def test_fallback_argmax_peak(self):
        column = np.zeros(900)
        column[600] = 0.3
        signal = _signal(column)
        segments = select([[]], signal, TB, FallbackMode.ARGMAX_PEAK)
        assert [(s.start_s, s.end_s) for s in segments] == [(20.0, 21.0)]

    def test_fallback_clamped_at_start(self):
        signal = _signal(np.zeros(300))
        segment = select([[]], signal, TB)[0]
        assert (segment.start_s, segment.end_s) == (0.0, 1.0)

    def test_winner_frames_round_to_seconds(self):
        signal = _signal(np.full(1100, 0.9))
        segment = select([[Candidate(0, 300, 1049, 0.9)]], signal, TB)[0]
        assert (segment.start_s, segment.end_s) == (10.0, 35.0)

    def test_winner_invariant_under_monotone_rescaling(self):
        rng = np.random.default_rng(13)
        signal = _signal(np.zeros(2000))
        for _ in range(200):
            bounds = np.sort(rng.choice(1999, size=2 * int(rng.integers(1, 8)), replace=False))
            means = rng.choice([0.3, 0.5, 0.7, 0.9], size=len(bounds) // 2)
            cands = [Candidate(0, int(s), int(e), float(m)) for s, e, m in zip(bounds[0::2], bounds[1::2], means)]
            rescaled = [Candidate(0, c.start_frame, c.end_frame, 0.1 + 0.5 * c.mean_score**3) for c in cands]
            assert select([cands], signal, TB) == select([rescaled], signal, TB)

    def test_fallback_stays_inside_video(self):
        for num_frames, expected in [(40, (0.0, 1.0)), (318, (9.0, 10.0))]:
            column = np.zeros(num_frames)
            column[-1] = 0.3
            segment = select([[]], _signal(column), TB)[0]
            assert (segment.start_s, segment.end_s) == expected
            assert segment.end_s <= num_frames / 30

    def test_fallback_inside_video_random_peaks(self):
        rng = np.random.default_rng(14)
        for _ in range(300):
            num_frames = int(rng.integers(30, 600))
            column = np.zeros(num_frames)
            column[int(rng.integers(0, num_frames))] = 0.3
            segment = select([[]], _signal(column), TB)[0]
            assert 0.0 <= segment.start_s < segment.end_s <= num_frames / 30

    def test_fallback_shorter_than_one_second(self):
        segment = select([[]], _signal(np.zeros(10)), TB)[0]
        assert (segment.start_s, segment.end_s) == (0.0, 1.0)

    def test_fallback_none(self):
        signal = _signal(np.zeros(30))
        assert select([[]], signal, TB, FallbackMode.NONE) == []

    def test_short_run_extended_to_one_second(self):
        column = np.zeros(300)
        column[150:152] = 0.9
        signal = _signal(column)
        segment = select([_cands(signal)], signal, TB)[0]
        assert (segment.start_s, segment.end_s) == (5.0, 6.0)


class TestElect:
    """四步组合。"""

    def test_hand_trace(self):
        p = tensor_with_run(900, 2, 3, class_id=0, runs=[(150, 449)])
        cfg = uniform_config(2, 3, thresholds=0.5, fallback="none")
        result = elect(p, cfg, video_id="v")
        assert result.video_id == "v"
        assert [(s.class_id, s.start_s, s.end_s) for s in result.segments] == [(0, 5.0, 15.0)]

    def test_pause_bridged_by_merge(self):
        p = tensor_with_run(900, 1, 1, class_id=0, runs=[(150, 299), (310, 449)])
        merged = elect(p, uniform_config(1, 1, merge_gap_s=0.5))
        split = elect(p, uniform_config(1, 1, merge_gap_s=0.0))
        assert (merged.segments[0].start_s, merged.segments[0].end_s) == (5.0, 15.0)
        assert (split.segments[0].start_s, split.segments[0].end_s) == (5.0, 10.0)

    def test_one_segment_per_class(self):
        p = random_simplex_tensor(np.random.default_rng(4), 600, 5, 2)
        result = elect(p, uniform_config(5, 2, thresholds=0.25))
        assert len(result.segments) == 5
        assert sorted(s.class_id for s in result.segments) == list(range(5))

    def test_shape_mismatch(self):
        p = ProbabilityTensor(values=zeros_tensor(10, 2, 2))
        with pytest.raises(ShapeError):
            elect(p, uniform_config(3, 2))

    def test_trace_records_steps(self):
        p = tensor_with_run(900, 2, 1, class_id=0, runs=[(150, 299), (310, 449)])
        trace = elect_trace(p, uniform_config(2, 1))
        first, second = trace.classes
        assert len(first.candidates) == 2 and len(first.merged) == 1
        assert first.winner is not None and not first.fallback_used
        assert second.winner is None and second.fallback_used
        assert trace.segment_set() == elect(p, uniform_config(2, 1))

    def test_fast_path_matches(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            p = random_simplex_tensor(rng, 300, 3, 2)
            cfg = uniform_config(3, 2, thresholds=[float(x) for x in rng.uniform(0.2, 0.5, 3)], merge_gap_s=0.3)
            trace = elect_trace(p, cfg)
            for c in range(3):
                fast = elect_signal(trace.signal.values[:, c], c, cfg.thresholds[c], cfg.gap_frames, TB)
                assert fast == trace.classes[c].segment

    def test_view_permutation_with_weight_columns(self):
        rng = np.random.default_rng(15)
        for _ in range(100):
            p = random_simplex_tensor(rng, 300, 3, 3)
            weights = rng.dirichlet(np.ones(3), size=3)
            thresholds = [float(x) for x in rng.uniform(0.2, 0.5, 3)]
            order = rng.permutation(3)
            cfg = uniform_config(3, 3, weights=weights.tolist(), thresholds=thresholds, merge_gap_s=0.3)
            permuted_cfg = uniform_config(3, 3, weights=weights[:, order].tolist(), thresholds=thresholds,
                                          merge_gap_s=0.3)
            permuted = ProbabilityTensor(values=p.values[:, :, order])
            assert elect(p, cfg) == elect(permuted, permuted_cfg)

    def test_deterministic(self):
        p = random_simplex_tensor(np.random.default_rng(5), 500, 4, 3)
        cfg = uniform_config(4, 3, thresholds=0.3)
        assert elect(p, cfg) == elect(p, cfg)

    @pytest.mark.slow
    def test_full_scale_throughput(self):
        p = random_simplex_tensor(np.random.default_rng(6), 14400, 16, 3)
        cfg = uniform_config(16, 3, thresholds=0.07)
        started = time.perf_counter()
        elect(p, cfg)
        assert time.perf_counter() - started < 1.0
