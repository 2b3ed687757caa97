import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import overlap_match_oracle, sorted_times, window_match_oracle
from mzisim.ccu import (
    BunchedStats,
    CcuConfig,
    CountsRecord,
    accumulate,
    bunched_event_stats,
    count_coincidences,
)
from mzisim.detection import PulseTrain

W = 10e-9  # nominal pulse width


def train(times, width=W, duration=1.0):
    return PulseTrain(np.asarray(times, dtype=float), width, duration)


def random_train(rng, max_n=50, duration=1e-6, width=W):
    ts = sorted_times(rng, rng.integers(0, max_n + 1), duration)
    return PulseTrain(ts, width, duration)


class TestCountCoincidences:
    def test_identical_trains(self):
        t = train([1e-7, 5e-7, 9e-7])
        assert count_coincidences(t, t, CcuConfig()) == 3

    def test_offset_beyond_width_gives_zero(self):
        a = train([1e-7, 5e-7])
        b = train([1e-7 + 2 * W, 5e-7 + 2 * W])
        assert count_coincidences(a, b, CcuConfig()) == 0

    def test_duration_mismatch_rejected(self):
        a = train([1e-7], duration=1.0)
        b = train([1e-7], duration=2.0)
        with pytest.raises(ValueError):
            count_coincidences(a, b, CcuConfig())

    @given(st.integers(min_value=0, max_value=2**31))
    @settings(max_examples=100)
    def test_overlap_rule_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        wa = float(rng.uniform(1e-9, 3e-8))
        wb = float(rng.uniform(1e-9, 3e-8))
        a = random_train(rng, width=wa)
        b = random_train(rng, width=wb)
        got = count_coincidences(a, b, CcuConfig())
        oracle = len(overlap_match_oracle(list(a.start_times), wa, list(b.start_times), wb))
        assert got == oracle

    @given(st.integers(min_value=0, max_value=2**31))
    @settings(max_examples=100)
    def test_window_rule_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        tw = float(rng.uniform(1e-9, 5e-8))
        a = random_train(rng)
        b = random_train(rng)
        cfg = CcuConfig(rule="window", window_s=tw)
        got = count_coincidences(a, b, cfg)
        assert got == len(window_match_oracle(list(a.start_times), list(b.start_times), tw))

    @given(st.integers(min_value=0, max_value=2**31))
    @settings(max_examples=60)
    def test_symmetric_in_arguments(self, seed):
        rng = np.random.default_rng(seed)
        a = random_train(rng)
        b = random_train(rng)
        cfg = CcuConfig()
        assert count_coincidences(a, b, cfg) == count_coincidences(b, a, cfg)

    def test_overlap_equals_fixed_window_on_spaced_trains(self):
        # with pulse spacing >= 2w the两 rules agree for tau_w = w
        rng = np.random.default_rng(7)
        base = np.cumsum(rng.uniform(2.5 * W, 10 * W, 40))
        jitterb = base + rng.uniform(-W, W, 40)
        order = np.argsort(jitterb)
        a = train(base, duration=1e-4)
        b = train(np.sort(jitterb), duration=1e-4)
        n_overlap = count_coincidences(a, b, CcuConfig())
        n_window = count_coincidences(a, b, CcuConfig(rule="window", window_s=W))
        assert n_overlap == n_window

    def test_effective_window(self):
        a = train([1e-7])
        b = train([2e-7], width=5e-9)
        assert CcuConfig().effective_window_s(a, b) == pytest.approx(15e-9)
        cfg = CcuConfig(rule="window", window_s=7e-9)
        assert cfg.effective_window_s(a, b) == pytest.approx(14e-9)


class TestAccumulate:
    def test_empty_trains(self):
        a = train([], duration=0.5)
        b = train([], duration=0.5)
        records = accumulate(a, b, CcuConfig(accumulation_s=0.1))
        assert len(records) == 5
        assert all(r.singles_1 == r.singles_2 == r.coincidences == 0 for r in records)

    def test_single_pair_lands_in_bin_three(self):
        t0 = 0.35  # bin 3 for 0.1 s bins
        a = train([t0])
        b = train([t0 + 4e-9])
        records = accumulate(a, b, CcuConfig(accumulation_s=0.1))
        assert (records[3].singles_1, records[3].singles_2, records[3].coincidences) == (1, 1, 1)
        assert sum(r.coincidences for r in records) == 1

    @given(st.integers(min_value=0, max_value=2**31))
    @settings(max_examples=40)
    def test_bin_totals_equal_whole_stream_counts(self, seed):
        rng = np.random.default_rng(seed)
        a = random_train(rng, max_n=80, duration=1.0)
        b = random_train(rng, max_n=80, duration=1.0)
        cfg = CcuConfig(accumulation_s=0.13)
        records = accumulate(a, b, cfg)
        assert sum(r.singles_1 for r in records) == len(a)
        assert sum(r.singles_2 for r in records) == len(b)
        assert sum(r.coincidences for r in records) == count_coincidences(a, b, cfg)

    @given(st.integers(min_value=0, max_value=2**31),
           st.sampled_from([0.05, 0.1, 0.25, 0.4]))
    @settings(max_examples=40)
    def test_partition_invariance(self, seed, width):
        rng = np.random.default_rng(seed)
        a = random_train(rng, max_n=60, duration=1.0)
        b = random_train(rng, max_n=60, duration=1.0)
        totals = [
            sum(r.coincidences for r in accumulate(a, b, CcuConfig(accumulation_s=w)))
            for w in (width, 1.0)
        ]
        assert totals[0] == totals[1]

    @given(st.integers(min_value=0, max_value=2**31))
    @settings(max_examples=40)
    def test_monogamy_per_bin(self, seed):
        rng = np.random.default_rng(seed)
        a = random_train(rng, max_n=100, duration=1.0, width=5e-8)
        b = random_train(rng, max_n=100, duration=1.0, width=5e-8)
        for r in accumulate(a, b, CcuConfig(accumulation_s=0.2)):
            assert r.coincidences <= min(r.singles_1, r.singles_2)


class TestBunchedStats:
    def test_isolated_pulses(self):
        t = train([1e-6, 2e-6, 3e-6])
        stats = bunched_event_stats(t, 20e-9)
        assert stats == BunchedStats(singles=3, doubles=0, triples=0, higher=0)

    def test_close_pair_is_one_double(self):
        t = train([1e-6, 1e-6 + 5e-9])
        stats = bunched_event_stats(t, 20e-9)
        assert stats == BunchedStats(singles=0, doubles=1, triples=0, higher=0)

    def test_triple_and_larger(self):
        t = train([0.0, 5e-9, 10e-9, 1e-6, 1e-6 + 3e-9, 1e-6 + 6e-9, 1e-6 + 9e-9, 2e-6])
        stats = bunched_event_stats(t, 20e-9)
        assert stats.triples == 1
        assert stats.higher == 1
        assert stats.singles == 1

    def test_empty_train(self):
        stats = bunched_event_stats(train([]), 20e-9)
        assert stats.total_clusters == 0

    def test_ratio(self):
        t = train([0.0, 1e-6, 1e-6 + 5e-9, 2e-6])
        stats = bunched_event_stats(t, 20e-9)
        assert stats.double_single_ratio == pytest.approx(0.5)
        with pytest.raises(ValueError):
            bunched_event_stats(train([]), 20e-9).double_single_ratio

    def test_window_validation(self):
        with pytest.raises(ValueError):
            bunched_event_stats(train([1e-6]), 0.0)


class TestTypes:
    def test_ccu_config_validation(self):
        with pytest.raises(ValueError):
            CcuConfig(accumulation_s=0.0)
        with pytest.raises(ValueError):
            CcuConfig(rule="nonsense")
        with pytest.raises(ValueError):
            CcuConfig(rule="window")  # missing window_s

    def test_counts_record_validation(self):
        with pytest.raises(ValueError):
            CountsRecord(0, 1, 1, 2)
        with pytest.raises(ValueError):
            CountsRecord(0, -1, 0, 0)
