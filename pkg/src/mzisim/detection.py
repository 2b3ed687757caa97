"""Single-photon counting module model: thinning, dark counts, jitter, dead time."""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .source import ArrivalStream, sample_arrivals

# Gaussian FWHM -> sigma conversion applied to the datasheet jitter figure.
JITTER_FWHM_TO_SIGMA = 1.0 / 2.355


@dataclass(frozen=True)
class DetectorParams:
    efficiency: float = 0.5
    dead_time_s: float = 22e-9
    dark_rate_cps: float = 27.0
    pulse_width_s: float = 10e-9
    jitter_fwhm_s: float = 350e-12

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must be in [0, 1]")
        if self.dead_time_s < 0:
            raise ValueError("dead time must be >= 0")
        if self.dark_rate_cps < 0:
            raise ValueError("dark rate must be >= 0")
        if self.pulse_width_s <= 0:
            raise ValueError("pulse width must be > 0")
        if self.jitter_fwhm_s < 0:
            raise ValueError("jitter must be >= 0")


@dataclass(frozen=True)
class PulseTrain:
    """Electrical output pulses: start times plus a common width."""

    start_times: np.ndarray
    pulse_width_s: float
    duration_s: float

    def __post_init__(self):
        ts = np.asarray(self.start_times, dtype=np.float64)
        object.__setattr__(self, "start_times", ts)
        if self.pulse_width_s <= 0:
            raise ValueError("pulse width must be > 0")
        if self.duration_s <= 0:
            raise ValueError("duration must be > 0")
        if ts.size:
            if ts[0] < 0 or ts[-1] >= self.duration_s:
                raise ValueError("pulse starts must lie in [0, duration)")
            if np.any(np.diff(ts) <= 0):
                raise ValueError("pulse starts must be strictly increasing")

    def __len__(self):
        return int(self.start_times.size)


@njit(cache=True)
def _greedy_accept(times, dead):
    keep = np.zeros(times.size, dtype=np.bool_)
    last = -np.inf
    for i in range(times.size):
        if times[i] - last >= dead:
            keep[i] = True
            last = times[i]
    return keep


def dead_time_filter(times, dead_s):
    """Non-paralyzable dead time: greedy left-to-right acceptance.

    Accepts t whenever t - last_accepted >= dead; the first event is always
    accepted. Input must already be sorted strictly increasing.
    """
    if dead_s < 0:
        raise ValueError("dead time must be >= 0")
    times = np.asarray(times, dtype=np.float64)
    if times.size and np.any(np.diff(times) <= 0):
        raise ValueError("input times must be strictly increasing")
    if times.size == 0 or dead_s == 0.0:
        return times.copy()
    return times[_greedy_accept(times, dead_s)]


def dark_counts(rate_cps, duration_s, rng):
    """Dark-count arrival stream: same homogeneous Poisson model as the source."""
    return sample_arrivals(rate_cps, duration_s, rng)


def detect(stream, params, rng):
    """Full detector pipeline from photon arrivals to electrical pulses.

    Bernoulli thinning by efficiency, merge of an independent dark-count
    process, Gaussian timing jitter, re-sort, then non-paralyzable dead
    time. Events jittered outside [0, duration) are lost.
    """
    ts = stream.timestamps
    if params.efficiency < 1.0:
        ts = ts[rng.random(ts.size) < params.efficiency]

    dark = dark_counts(params.dark_rate_cps, stream.duration_s, rng).timestamps
    if dark.size:
        ts = np.concatenate((ts, dark))

    if params.jitter_fwhm_s > 0 and ts.size:
        ts = ts + rng.normal(0.0, params.jitter_fwhm_s * JITTER_FWHM_TO_SIGMA, ts.size)

    ts = np.sort(ts)
    ts = ts[(ts >= 0.0) & (ts < stream.duration_s)]
    if ts.size > 1:  # drop exact ties so the train stays strictly increasing
        keep = np.empty(ts.size, dtype=bool)
        keep[0] = True
        np.greater(np.diff(ts), 0.0, out=keep[1:])
        ts = ts[keep]

    ts = dead_time_filter(ts, params.dead_time_s)
    return PulseTrain(ts, params.pulse_width_s, stream.duration_s)
