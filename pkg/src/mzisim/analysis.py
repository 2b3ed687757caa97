"""Estimators over fringe/count data: visibility, correlation, fits, alignment.

Two correlation normalizations are provided. `g2_zero` divides the measured
coincidence rate by the accidental rate of the two channels' own mean
singles (r1 * r2 * window); independent streams then give 1. For an
interferometer run the incoherent 50/50 split of the same total flux is the
classical reference, so `g2_vs_incoherent` rescales against that level
instead, putting the classical bound at exactly 0.5; an anticorrelated dark
port then lands near its dark-count-limited floor far below the bound.
"""

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize, stats
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from .source import poisson_pmf

G2_CLASSICAL_BOUND = 0.5
BELL_VISIBILITY_BOUND = 1.0 / math.sqrt(2.0)  # 0.7071..., quoted as 70.7 %


@dataclass(frozen=True)
class FringeData:
    """Per-scan-point counts with the voltage/phase axis and bin duration."""

    voltage_v: np.ndarray
    phase_rad: np.ndarray
    counts_d1: np.ndarray
    counts_d2: np.ndarray
    coincidences: np.ndarray
    accumulation_s: float

    def __post_init__(self):
        for name in ("voltage_v", "phase_rad", "counts_d1", "counts_d2", "coincidences"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        n = self.voltage_v.size
        for name in ("phase_rad", "counts_d1", "counts_d2", "coincidences"):
            if getattr(self, name).size != n:
                raise ValueError("all columns must have equal length")
        if self.accumulation_s <= 0:
            raise ValueError("accumulation must be > 0")
        if n > 1 and np.any(np.diff(self.voltage_v) < 0):
            raise ValueError("voltages must be monotonic")
        for name in ("counts_d1", "counts_d2", "coincidences"):
            if np.any(getattr(self, name) < 0):
                raise ValueError("counts must be >= 0")

    def __len__(self):
        return int(self.voltage_v.size)

    @classmethod
    def from_records(cls, records, voltages, phases, accumulation_s):
        return cls(
            voltage_v=np.asarray(voltages, dtype=np.float64),
            phase_rad=np.asarray(phases, dtype=np.float64),
            counts_d1=np.array([r.singles_1 for r in records], dtype=np.float64),
            counts_d2=np.array([r.singles_2 for r in records], dtype=np.float64),
            coincidences=np.array([r.coincidences for r in records], dtype=np.float64),
            accumulation_s=accumulation_s,
        )


@dataclass(frozen=True)
class G2Result:
    g2: float
    uncertainty: float
    below_g2_bound: bool
    visibility_exceeds_bell: Optional[bool] = None

    def __post_init__(self):
        if self.g2 < 0:
            raise ValueError("g2 must be >= 0")


@dataclass(frozen=True)
class ClassicalReference:
    level: float           # coincidence counts per bin on the incoherent ends
    below_fraction: float  # fraction of all points strictly below the level


@dataclass(frozen=True)
class FitResult:
    v_max: float
    sigma_v: float
    omega_rad_per_v: float
    phase_rad: float
    baseline: float
    residual_norm: float
    converged: bool

    def __post_init__(self):
        if self.converged:
            if not 0.0 <= self.v_max <= 1.0:
                raise ValueError("fitted v_max must be in [0, 1]")
            if self.sigma_v <= 0:
                raise ValueError("fitted sigma must be > 0")
        if self.residual_norm < 0:
            raise ValueError("residual norm must be >= 0")


@dataclass(frozen=True)
class GofResult:
    statistic: float
    pvalue: float
    dof: int


def visibility(max_counts, min_counts):
    """Fringe contrast (max - min)/(max + min)."""
    if max_counts <= 0:
        raise ValueError("max counts must be > 0")
    if min_counts < 0 or min_counts > max_counts:
        raise ValueError("require 0 <= min <= max")
    return (max_counts - min_counts) / (max_counts + min_counts)


def _records_totals(records):
    if not records:
        raise ValueError("need at least one record")
    c = sum(r.coincidences for r in records)
    s1 = sum(r.singles_1 for r in records)
    s2 = sum(r.singles_2 for r in records)
    return c, s1, s2, len(records)


def g2_zero(records, effective_window_s, bin_duration_s, visibility_value=None):
    """Zero-delay correlation against the channels' own accidental rate.

    g2 = measured coincidence rate / (r1 * r2 * window) with r1, r2 the
    mean singles rates over the records. Uncertainty is propagated Poisson
    counting error. Coherent or mutually independent streams give 1.
    """
    if effective_window_s <= 0:
        raise ValueError("effective window must be > 0")
    if bin_duration_s <= 0:
        raise ValueError("bin duration must be > 0")
    c, s1, s2, n = _records_totals(records)
    if s1 == 0 or s2 == 0:
        raise ValueError("zero singles in one channel: g2 undefined")
    # accidental counts over the whole run: r1*r2*window*T with T = n*bin
    accidentals = (s1 / (n * bin_duration_s)) * (s2 / (n * bin_duration_s)) \
        * effective_window_s * n * bin_duration_s
    g2 = c / accidentals
    if c > 0:
        sigma = g2 * math.sqrt(1.0 / c + 1.0 / s1 + 1.0 / s2)
    else:
        sigma = 1.0 / accidentals  # one-count scale
    exceeds = None if visibility_value is None else bool(visibility_value > BELL_VISIBILITY_BOUND)
    return G2Result(g2, sigma, bool(g2 < G2_CLASSICAL_BOUND), exceeds)


def g2_vs_incoherent(records, effective_window_s, bin_duration_s, visibility_value=None):
    """Correlation on the scale where the incoherent split sits at 0.5.

    The reference rate is ((r1 + r2)/2)^2 * window, the accidental level the
    same total flux would give when split 50/50 with no interference.
    """
    if effective_window_s <= 0:
        raise ValueError("effective window must be > 0")
    if bin_duration_s <= 0:
        raise ValueError("bin duration must be > 0")
    c, s1, s2, n = _records_totals(records)
    if s1 + s2 == 0:
        raise ValueError("no singles: correlation undefined")
    total_t = n * bin_duration_s
    half_rate = 0.5 * (s1 + s2) / total_t
    reference = half_rate * half_rate * effective_window_s * total_t
    g2 = G2_CLASSICAL_BOUND * c / reference
    if c > 0:
        sigma = g2 / math.sqrt(c)
    else:
        sigma = G2_CLASSICAL_BOUND / reference
    exceeds = None if visibility_value is None else bool(visibility_value > BELL_VISIBILITY_BOUND)
    return G2Result(g2, sigma, bool(g2 < G2_CLASSICAL_BOUND), exceeds)


def product_prediction(fringe):
    """Coincidence curve predicted from the singles product.

    Pointwise counts_d1 * counts_d2, rescaled by the single least-squares
    factor that best matches the measured coincidences.
    """
    if len(fringe) == 0:
        raise ValueError("empty fringe data")
    raw = fringe.counts_d1 * fringe.counts_d2
    denom = float(np.dot(raw, raw))
    scale = float(np.dot(raw, fringe.coincidences)) / denom if denom > 0 else 0.0
    return raw * scale


def classical_reference(fringe, edge_fraction=0.1):
    """Incoherent reference level from the decohered ends of the scan.

    Fringe contrast vanishes in the outer `edge_fraction` of the voltage
    range, so the mean coincidence count there estimates the incoherent
    plateau; the level is the larger of the two ends' means (the V -> 0
    product level). Also reports the fraction of all points strictly
    below that level. On fully incoherent data the level collapses to the
    overall mean and the below-fraction sits near one half by noise.
    """
    if len(fringe) == 0:
        raise ValueError("empty fringe data")
    if not 0 < edge_fraction < 0.5:
        raise ValueError("edge fraction must be in (0, 0.5)")
    v = fringe.voltage_v
    span = v[-1] - v[0]
    if span <= 0:
        raise ValueError("scan must cover a nonzero voltage range")
    low = v <= v[0] + edge_fraction * span
    high = v >= v[-1] - edge_fraction * span
    level = max(float(fringe.coincidences[low].mean()),
                float(fringe.coincidences[high].mean()))
    below = float(np.mean(fringe.coincidences < level))
    return ClassicalReference(level, below)


def _fit_model(v, baseline, v_max, sigma, omega, delta, v0):
    env = v_max * np.exp(-((v - v0) ** 2) / (2.0 * sigma * sigma))
    return baseline * (1.0 + env * np.cos(omega * v + delta)) / 2.0


def _initial_guess(v, y):
    """Frequency from the dominant FFT bin, envelope width from the contrast profile."""
    n = v.size
    dv = (v[-1] - v[0]) / (n - 1)
    spectrum = np.fft.rfft(y - y.mean())
    k = 1 + int(np.argmax(np.abs(spectrum[1:])))
    omega = 2.0 * math.pi * k / (n * dv)
    delta = float(np.angle(spectrum[k])) - omega * v[0]

    period = max(3, int(round(2.0 * math.pi / omega / dv)))
    upper = maximum_filter1d(y, size=period, mode="nearest")
    lower = minimum_filter1d(y, size=period, mode="nearest")
    amp = (upper - lower) / 2.0
    baseline = 2.0 * float(y.mean())
    peak = float(amp.max())
    v_max = min(1.0, 2.0 * peak / baseline) if baseline > 0 else 0.5

    half = peak / 2.0
    above = np.flatnonzero(amp >= half)
    if above.size >= 2 and above.size < n:
        hwhm = (v[above[-1]] - v[above[0]]) / 2.0
        sigma = max(dv, hwhm / math.sqrt(2.0 * math.log(2.0)))
    else:
        sigma = (v[-1] - v[0]) / 4.0
    return baseline, v_max, sigma, omega, delta


def fit_envelope(fringe, channel="d1"):
    """Least-squares fit of one singles channel to an envelope-modulated fringe.

    Model: counts = B * (1 + V exp(-(v - v0)^2/(2 sigma^2)) cos(omega v + delta))/2
    with v0 fixed at the scan midpoint. Points are weighted by their Poisson
    error sqrt(counts + 1); the residual norm is the weighted rms. A fit
    that does not converge within the iteration bound is returned with
    converged=False rather than raised.
    """
    if channel not in ("d1", "d2"):
        raise ValueError("channel must be 'd1' or 'd2'")
    y = fringe.counts_d1 if channel == "d1" else fringe.counts_d2
    v = fringe.voltage_v
    if v.size < 16:
        raise ValueError("need at least 16 points to fit")

    failed = FitResult(0.0, 1.0, 0.0, 0.0, float(np.mean(y)), float("inf"), False)
    if np.ptp(y) == 0:
        return failed  # flat data: degenerate fit

    v0 = (v[0] + v[-1]) / 2.0
    p0 = _initial_guess(v, y)
    weights = np.sqrt(y + 1.0)
    try:
        with warnings.catch_warnings():
            # the covariance is unused; on noise-free data it is indeterminate
            warnings.simplefilter("ignore", optimize.OptimizeWarning)
            popt, _ = optimize.curve_fit(
                lambda vv, b, vm, s, w, d: _fit_model(vv, b, vm, s, w, d, v0),
                v, y, p0=p0, sigma=weights, absolute_sigma=True, maxfev=20000,
            )
    except RuntimeError:
        return failed

    baseline, v_max, sigma, omega, delta = popt
    sigma = abs(sigma)
    if omega < 0:  # cos symmetry: fold a negative frequency back
        omega, delta = -omega, -delta
    if v_max < 0:  # cos(x + pi) = -cos(x)
        v_max, delta = -v_max, delta + math.pi
    if 1.0 < v_max <= 1.05:  # noise can push the optimum just past the boundary
        v_max = 1.0
    delta = math.remainder(delta, 2.0 * math.pi)
    resid = (y - _fit_model(v, baseline, v_max, sigma, omega, delta, v0)) / weights
    rms = float(np.sqrt(np.mean(resid**2)))
    if not (0.0 <= v_max <= 1.0 and sigma > 0 and math.isfinite(rms)):
        return failed
    return FitResult(float(v_max), float(sigma), float(omega), float(delta),
                     float(baseline), rms, True)


def _shift_order(max_shift):
    order = [0]
    for s in range(1, max_shift + 1):
        order.extend((-s, s))
    return order


def pixel_shift_align(d1, d2, max_shift):
    """Integer shift of d1 that best aligns it with the flipped d2 channel.

    The channels fringe in anti-phase, so d2 is mirrored about its mid-level
    first; the returned shift maximizes the normalized cross-correlation
    over the overlapping samples, ties broken toward smaller |shift|.
    """
    d1 = np.asarray(d1, dtype=np.float64)
    d2 = np.asarray(d2, dtype=np.float64)
    if d1.size != d2.size:
        raise ValueError("channels must have equal length")
    n = d1.size
    if not 0 <= max_shift < n / 4:
        raise ValueError("max_shift must satisfy 0 <= max_shift < length/4")

    flipped = (d2.max() + d2.min()) - d2
    best_s, best_r = 0, -np.inf
    for s in _shift_order(max_shift):
        if s >= 0:
            a, b = d1[s:], flipped[: n - s]
        else:
            a, b = d1[: n + s], flipped[-s:]
        sa, sb = a.std(), b.std()
        r = 0.0 if sa == 0 or sb == 0 else float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))
        if r > best_r:
            best_s, best_r = s, r
    return best_s


def poisson_gof(histogram, mean):
    """Pearson chi-square of an occupancy histogram against Poisson(mean).

    The top category is open-ended (>= last index) and cells are pooled
    from the top until every expected count is at least 5. Degrees of
    freedom: pooled cells minus one (the mean is given, not estimated).
    """
    obs = np.asarray(histogram, dtype=np.float64)
    if obs.ndim != 1 or obs.size == 0:
        raise ValueError("histogram must be a non-empty 1D array")
    if np.any(obs < 0):
        raise ValueError("histogram entries must be >= 0")
    total = obs.sum()
    if total <= 0:
        raise ValueError("histogram total must be > 0")
    if mean < 0:
        raise ValueError("mean must be >= 0")

    k = obs.size
    pmf = np.array([poisson_pmf(i, mean) for i in range(k)])
    expected = total * pmf
    expected[-1] = total * max(0.0, 1.0 - pmf[:-1].sum())  # open-ended top cell

    # pool from the top until expected >= 5 everywhere
    while expected.size > 1 and expected[-1] < 5.0:
        expected[-2] += expected[-1]
        obs = obs.copy()
        obs[-2] += obs[-1]
        expected = expected[:-1]
        obs = obs[:-1]
    while expected.size > 1 and expected[0] < 5.0:
        expected[1] += expected[0]
        obs = obs.copy()
        obs[1] += obs[0]
        expected = expected[1:]
        obs = obs[1:]
    if expected.size < 2:
        raise ValueError("all mass pooled into one cell: test undefined")

    statistic = float(np.sum((obs - expected) ** 2 / expected))
    dof = int(expected.size - 1)
    pvalue = float(stats.chi2.sf(statistic, dof))
    return GofResult(statistic, pvalue, dof)
