"""Coincidence counting unit: pulse-overlap AND logic, accumulation bins, bunching.

The default coincidence rule is literal AND-gate semantics: two pulses
coincide when their [start, start + width) intervals intersect, and each
pulse participates in at most one pair (greedy two-pointer matching, the
one logic-high interval a hardware gate would emit). A fixed-window rule
(|tA - tB| <= window) is available for comparison.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

COINCIDENCE_RULES = ("overlap", "window")


@dataclass(frozen=True)
class CcuConfig:
    accumulation_s: float = 0.1
    rule: str = "overlap"
    window_s: float | None = None

    def __post_init__(self):
        if self.accumulation_s <= 0:
            raise ValueError("accumulation must be > 0")
        if self.rule not in COINCIDENCE_RULES:
            raise ValueError(f"rule must be one of {COINCIDENCE_RULES}")
        if self.rule == "window" and (self.window_s is None or self.window_s <= 0):
            raise ValueError("fixed-window rule needs window_s > 0")

    def effective_window_s(self, train_a, train_b):
        """Width of the accidental-coincidence acceptance window.

        Overlap of two square pulses accepts |tA - tB| < wA + wB; the fixed
        window accepts |tA - tB| <= w, a width of 2w.
        """
        if self.rule == "overlap":
            return train_a.pulse_width_s + train_b.pulse_width_s
        return 2.0 * self.window_s


@dataclass(frozen=True)
class CountsRecord:
    bin_index: int
    singles_1: int
    singles_2: int
    coincidences: int

    def __post_init__(self):
        if min(self.singles_1, self.singles_2, self.coincidences) < 0:
            raise ValueError("counts must be >= 0")
        if self.coincidences > min(self.singles_1, self.singles_2):
            raise ValueError("coincidences cannot exceed either singles count")


@njit(cache=True)
def _match_overlap(a, wa, b, wb):
    out = np.empty(min(a.size, b.size), dtype=np.float64)
    i = j = k = 0
    while i < a.size and j < b.size:
        if a[i] < b[j] + wb and b[j] < a[i] + wa:
            out[k] = min(a[i], b[j])
            k += 1
            i += 1
            j += 1
        elif a[i] + wa <= b[j]:
            i += 1
        else:
            j += 1
    return out[:k]


@njit(cache=True)
def _match_window(a, b, window):
    out = np.empty(min(a.size, b.size), dtype=np.float64)
    i = j = k = 0
    while i < a.size and j < b.size:
        if abs(a[i] - b[j]) <= window:
            out[k] = min(a[i], b[j])
            k += 1
            i += 1
            j += 1
        elif a[i] < b[j] - window:
            i += 1
        else:
            j += 1
    return out[:k]


def _check_pair(train_a, train_b):
    if train_a.duration_s != train_b.duration_s:
        raise ValueError("pulse trains must cover the same duration")


def match_times(train_a, train_b, config):
    """Earlier start time of each matched coincidence pair, in time order."""
    _check_pair(train_a, train_b)
    a = train_a.start_times
    b = train_b.start_times
    if config.rule == "overlap":
        return _match_overlap(a, train_a.pulse_width_s, b, train_b.pulse_width_s)
    return _match_window(a, b, config.window_s)


def count_coincidences(train_a, train_b, config):
    """Number of one-to-one coincidence pairs between two trains."""
    return int(match_times(train_a, train_b, config).size)


def accumulate(train_a, train_b, config):
    """Per-accumulation-bin singles and coincidence counts.

    Singles go to the bin of each pulse start; a matched pair goes to the
    bin of its earlier pulse, so per-bin totals always sum to the
    whole-stream counts whatever the bin width.
    """
    _check_pair(train_a, train_b)
    duration = train_a.duration_s
    n_bins = max(1, int(math.ceil(duration / config.accumulation_s - 1e-9)))

    def bin_of(ts):
        if ts.size == 0:
            return np.zeros(n_bins, dtype=np.int64)
        idx = np.minimum((ts / config.accumulation_s).astype(np.int64), n_bins - 1)
        return np.bincount(idx, minlength=n_bins)

    s1 = bin_of(train_a.start_times)
    s2 = bin_of(train_b.start_times)
    cc = bin_of(match_times(train_a, train_b, config))
    return [
        CountsRecord(i, int(s1[i]), int(s2[i]), int(cc[i]))
        for i in range(n_bins)
    ]


@dataclass(frozen=True)
class BunchedStats:
    """Cluster-size histogram of a pulse train (gap < window joins a cluster)."""

    singles: int
    doubles: int
    triples: int
    higher: int

    @property
    def total_clusters(self):
        return self.singles + self.doubles + self.triples + self.higher

    @property
    def double_single_ratio(self):
        if self.singles == 0:
            raise ValueError("no single-pulse clusters")
        return self.doubles / self.singles


def bunched_event_stats(train, window_s):
    """Multiphoton-resolving statistics: single/double/triple/larger clusters."""
    if window_s <= 0:
        raise ValueError("window must be > 0")
    ts = train.start_times
    if ts.size == 0:
        return BunchedStats(0, 0, 0, 0)
    breaks = np.flatnonzero(np.diff(ts) >= window_s)
    sizes = np.diff(np.concatenate(([0], breaks + 1, [ts.size])))
    hist = np.bincount(sizes, minlength=4)
    return BunchedStats(
        singles=int(hist[1]),
        doubles=int(hist[2]),
        triples=int(hist[3]) if hist.size > 3 else 0,
        higher=int(hist[4:].sum()) if hist.size > 4 else 0,
    )
