"""Attenuated coherent source: power arithmetic, Poisson statistics, arrival streams.

All times in seconds, powers in watts, lengths in meters, rates in counts/s.
"""

import math
from dataclasses import dataclass

import numpy as np

# CODATA 2018 (exact SI values)
PLANCK_CONSTANT = 6.62607015e-34  # J*s
SPEED_OF_LIGHT = 299792458.0      # m/s


def spawn_rng(seed, *key):
    """Derive an independent generator from (seed, key path).

    The same (seed, key) always yields the same stream, independent of any
    other key path, so per-bin work can run in parallel and still reproduce
    serial output bit for bit.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class SourceParams:
    """Laser + attenuation-chain description."""

    wavelength_m: float = 532e-9
    power_w: float = 10e-3
    linewidth_hz: float = 5e6
    od_chain: tuple = (3.0, 10.0)
    power_stability: float = 0.01  # relative rms of slow drift

    def __post_init__(self):
        if self.wavelength_m <= 0:
            raise ValueError("wavelength must be > 0")
        if self.power_w < 0:
            raise ValueError("power must be >= 0")
        if self.linewidth_hz <= 0:
            raise ValueError("linewidth must be > 0")
        if any(od < 0 for od in self.od_chain):
            raise ValueError("optical densities must be >= 0")
        if not 0 <= self.power_stability < 1:
            raise ValueError("power_stability must be in [0, 1)")
        object.__setattr__(self, "od_chain", tuple(float(od) for od in self.od_chain))

    @property
    def coherence_time_s(self):
        return 1.0 / self.linewidth_hz

    @property
    def coherence_length_m(self):
        return SPEED_OF_LIGHT / self.linewidth_hz

    @property
    def attenuated_power_w(self):
        return attenuate(self.power_w, sum(self.od_chain))

    @property
    def photon_rate_cps(self):
        return photon_rate(self.attenuated_power_w, self.wavelength_m)


@dataclass(frozen=True)
class PoissonModel:
    """Mean photon number over an explicit reference window.

    The window is a free choice (the count statistics only fix the product
    rate*window), so it is carried explicitly rather than implied.
    """

    mean_photon_number: float
    window_s: float

    def __post_init__(self):
        if self.mean_photon_number < 0:
            raise ValueError("mean photon number must be >= 0")
        if self.window_s <= 0:
            raise ValueError("window must be > 0")

    def pmf(self, n):
        return poisson_pmf(n, self.mean_photon_number)

    @classmethod
    def from_rate(cls, rate_cps, window_s):
        return cls(mean_photon_number=rate_cps * window_s, window_s=window_s)


@dataclass(frozen=True)
class ArrivalStream:
    """Time-ordered photon arrival timestamps over [0, duration)."""

    timestamps: np.ndarray
    duration_s: float

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        object.__setattr__(self, "timestamps", ts)
        if self.duration_s <= 0:
            raise ValueError("duration must be > 0")
        if ts.size:
            if ts[0] < 0 or ts[-1] >= self.duration_s:
                raise ValueError("timestamps must lie in [0, duration)")
            if np.any(np.diff(ts) <= 0):
                raise ValueError("timestamps must be strictly increasing")

    def __len__(self):
        return int(self.timestamps.size)


def poisson_pmf(n, mean):
    """P(N = n) for N ~ Poisson(mean), evaluated in log space."""
    if mean < 0:
        raise ValueError("mean must be >= 0")
    n = int(n)
    if n < 0:
        raise ValueError("n must be >= 0")
    if mean == 0.0:
        return 1.0 if n == 0 else 0.0
    if n == 0:
        return math.exp(-mean)
    return math.exp(n * math.log(mean) - mean - math.lgamma(n + 1))


def attenuate(power_w, od_total):
    """Power after a neutral-density chain of total optical density od_total."""
    if power_w < 0:
        raise ValueError("power must be >= 0")
    if od_total < 0:
        raise ValueError("optical density must be >= 0")
    return power_w * 10.0 ** (-od_total)


def photon_rate(power_w, wavelength_m):
    """Mean photon flux (s^-1) of a beam of given power and wavelength."""
    if wavelength_m <= 0:
        raise ValueError("wavelength must be > 0")
    if power_w < 0:
        raise ValueError("power must be >= 0")
    return power_w * wavelength_m / (PLANCK_CONSTANT * SPEED_OF_LIGHT)


def sample_arrivals(rate_cps, duration_s, rng):
    """Homogeneous Poisson process: exponential inter-arrival gaps, mean 1/rate."""
    if rate_cps < 0:
        raise ValueError("rate must be >= 0")
    if duration_s <= 0:
        raise ValueError("duration must be > 0")
    if rate_cps == 0:
        return ArrivalStream(np.empty(0), duration_s)

    scale = 1.0 / rate_cps
    expected = rate_cps * duration_s
    chunk = max(64, int(expected + 6.0 * math.sqrt(expected) + 10))
    parts = []
    t = 0.0
    while True:
        gaps = rng.exponential(scale, size=chunk)
        times = t + np.cumsum(gaps)
        if times[-1] >= duration_s:
            parts.append(times[times < duration_s])
            break
        parts.append(times)
        t = times[-1]
    ts = np.concatenate(parts) if len(parts) > 1 else parts[0]
    if ts.size > 1:  # exponential gaps of exactly 0.0 are possible in principle
        keep = np.empty(ts.size, dtype=bool)
        keep[0] = True
        np.greater(np.diff(ts), 0.0, out=keep[1:])
        if not keep.all():
            ts = ts[keep]
    return ArrivalStream(ts, duration_s)


def bin_counts(stream, bin_width_s):
    """Occupancy histogram: hist[k] = number of bins holding exactly k arrivals.

    Empty bins are included, so sum(hist) equals the total bin count and
    sum(k * hist[k]) equals the number of arrivals.
    """
    if bin_width_s <= 0:
        raise ValueError("bin width must be > 0")
    n_bins = max(1, int(math.ceil(stream.duration_s / bin_width_s - 1e-9)))
    if len(stream) == 0:
        return np.array([n_bins], dtype=np.int64)
    idx = np.minimum((stream.timestamps / bin_width_s).astype(np.int64), n_bins - 1)
    occupancy = np.bincount(idx, minlength=n_bins)
    return np.bincount(occupancy)


def ar1_series(n_bins, bin_duration_s, sigma, correlation_s, rng):
    """Zero-mean AR(1) sequence with stationary rms sigma and the given time constant."""
    if n_bins < 1:
        raise ValueError("need at least one bin")
    if correlation_s <= 0:
        raise ValueError("correlation time must be > 0")
    if sigma == 0.0:
        return np.zeros(n_bins)
    rho = math.exp(-bin_duration_s / correlation_s)
    noise = rng.normal(0.0, sigma, size=n_bins)
    out = np.empty(n_bins)
    out[0] = noise[0]
    innov = math.sqrt(1.0 - rho * rho)
    for i in range(1, n_bins):
        out[i] = rho * out[i - 1] + innov * noise[i]
    return out


def drift_factors(n_bins, bin_duration_s, stability, correlation_s, rng):
    """Slow multiplicative drift on the source rate, one factor per bin.

    AR(1) around 1.0 with stationary rms `stability`, clamped at 0 because
    a rate cannot go negative.
    """
    f = 1.0 + ar1_series(n_bins, bin_duration_s, stability, correlation_s, rng)
    return np.maximum(f, 0.0)
