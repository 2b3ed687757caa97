"""Shared brute-force oracles, kept independent of the implementations they check."""

import numpy as np
import pytest


def greedy_dead_time_oracle(times, dead):
    """Reference greedy acceptance, written as the plain definition."""
    out = []
    last = None
    for t in times:
        if last is None or t - last >= dead:
            out.append(t)
            last = t
    return out


def overlap_match_oracle(a_starts, width_a, b_starts, width_b):
    """O(n^2) one-to-one interval matching: first unused overlapping partner."""
    used = [False] * len(b_starts)
    pairs = []
    for ta in a_starts:
        for j, tb in enumerate(b_starts):
            if used[j]:
                continue
            if ta < tb + width_b and tb < ta + width_a:
                used[j] = True
                pairs.append(min(ta, tb))
                break
    return pairs


def window_match_oracle(a_starts, b_starts, window):
    """O(n^2) one-to-one matching with |ta - tb| <= window."""
    used = [False] * len(b_starts)
    pairs = []
    for ta in a_starts:
        for j, tb in enumerate(b_starts):
            if used[j]:
                continue
            if abs(ta - tb) <= window:
                used[j] = True
                pairs.append(min(ta, tb))
                break
    return pairs


def sorted_times(rng, n, duration):
    """Random strictly increasing times in [0, duration)."""
    ts = np.sort(rng.random(int(n)) * duration)
    if ts.size < 2:
        return ts
    return ts[np.concatenate(([True], np.diff(ts) > 0))]


@pytest.fixture
def rng():
    return np.random.default_rng(20240831)
