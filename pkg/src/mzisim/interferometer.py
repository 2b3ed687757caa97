"""Mach-Zehnder model: PZT scan geometry, decoherence envelope, output routing.

Phase convention: output A is the dark port at phase 0 (probability
(1 - V cos(phi))/2), so A and B fringe in anti-phase. The scan maps PZT
voltage linearly to phase, with maximal coherence at the scan center and
an envelope (Gaussian fit or walk-off sinc) that kills the fringe contrast
toward the scan ends.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .source import ArrivalStream

ENVELOPE_MODES = ("gaussian", "walkoff")


@dataclass(frozen=True)
class EnvelopeModel:
    """Fringe-contrast envelope versus scan voltage.

    gaussian: V(v) = v_max * exp(-(v - v_center)^2 / (2 sigma_v^2))
    walkoff:  V(v) = v_max * |sin(x)/x|, x = pi * tilt * |v - v_center| * aperture / wavelength
    """

    mode: str = "gaussian"
    v_max: float = 0.999
    sigma_v: float = 30.0            # volts, gaussian mode
    tilt_rad_per_v: float = 3.55e-6  # walk-off mode: mirror tilt per volt
    aperture_m: float = 2e-3         # walk-off mode: detector aperture width
    wavelength_m: float = 532e-9

    def __post_init__(self):
        if self.mode not in ENVELOPE_MODES:
            raise ValueError(f"envelope mode must be one of {ENVELOPE_MODES}")
        if not 0.0 <= self.v_max <= 1.0:
            raise ValueError("v_max must be in [0, 1]")
        if self.sigma_v <= 0:
            raise ValueError("sigma_v must be > 0")
        if self.tilt_rad_per_v < 0 or self.aperture_m <= 0 or self.wavelength_m <= 0:
            raise ValueError("invalid walk-off parameters")


@dataclass(frozen=True)
class ScanConfig:
    """PZT voltage sweep and per-point accumulation."""

    v_min: float = 0.0
    v_max: float = 150.0
    v_center: float = 75.0
    fringes_per_scan: float = 10.0
    points_per_scan: int = 2000
    accumulation_s: float = 0.1
    phase_offset_rad: float = 0.0
    envelope: EnvelopeModel = field(default_factory=EnvelopeModel)

    def __post_init__(self):
        if not self.v_min < self.v_center < self.v_max:
            raise ValueError("require v_min < v_center < v_max")
        if self.fringes_per_scan <= 0:
            raise ValueError("fringes_per_scan must be > 0")
        if self.points_per_scan < 2:
            raise ValueError("points_per_scan must be >= 2")
        if self.accumulation_s <= 0:
            raise ValueError("accumulation must be > 0")

    @property
    def span_v(self):
        return self.v_max - self.v_min

    @property
    def volts_per_point(self):
        return self.span_v / self.points_per_scan

    def voltages(self):
        """Scan grid: points_per_scan steps of span/points starting at v_min."""
        return self.v_min + np.arange(self.points_per_scan) * self.volts_per_point


@dataclass(frozen=True)
class MziState:
    """Instantaneous interferometer state seen by one photon."""

    phase_rad: float
    visibility: float
    split_imbalance: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.visibility <= 1.0:
            raise ValueError("visibility must be in [0, 1]")
        if not abs(self.split_imbalance) < 1.0:
            raise ValueError("|split_imbalance| must be < 1")


@dataclass(frozen=True)
class FringeImage:
    """2D detector-plane intensity map for one scan voltage."""

    intensity: np.ndarray       # (ny, nx), arbitrary units, >= 0
    pixel_pitch_m: float
    beam_waist_m: float
    spatial_freq_rad_per_m: float

    def __post_init__(self):
        arr = np.asarray(self.intensity, dtype=np.float64)
        object.__setattr__(self, "intensity", arr)
        if arr.ndim != 2:
            raise ValueError("intensity must be a 2D grid")
        if np.any(arr < 0):
            raise ValueError("intensities must be >= 0")
        if self.pixel_pitch_m <= 0 or self.beam_waist_m <= 0:
            raise ValueError("pixel pitch and beam waist must be > 0")

    def total(self):
        return float(self.intensity.sum())


@dataclass(frozen=True)
class ImageParams:
    nx: int = 256
    ny: int = 256
    pixel_pitch_m: float = 1e-5
    beam_waist_m: float = 1e-3

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid must be at least 2x2")
        if self.pixel_pitch_m <= 0 or self.beam_waist_m <= 0:
            raise ValueError("pixel pitch and beam waist must be > 0")


def _check_in_scan(v, scan):
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < scan.v_min) or np.any(v > scan.v_max):
        raise ValueError(f"voltage outside scan range [{scan.v_min}, {scan.v_max}]")
    return v


def voltage_to_phase(v, scan):
    """Linear PZT map: 2*pi*fringes*(v - v_center)/span + phase_offset."""
    v = _check_in_scan(v, scan)
    phase = 2.0 * math.pi * scan.fringes_per_scan * (v - scan.v_center) / scan.span_v
    out = phase + scan.phase_offset_rad
    return float(out) if out.ndim == 0 else out


def tilt_angle(v, scan):
    """Walk-off tilt angle (rad) induced by the asymmetric PZT drive."""
    v = np.asarray(v, dtype=np.float64)
    return scan.envelope.tilt_rad_per_v * (v - scan.v_center)


def envelope_visibility(v, scan):
    """Local fringe contrast in [0, 1] at scan voltage v."""
    v = _check_in_scan(v, scan)
    env = scan.envelope
    dv = np.abs(v - scan.v_center)  # abs keeps both modes exactly symmetric
    if env.mode == "gaussian":
        out = env.v_max * np.exp(-(dv * dv) / (2.0 * env.sigma_v**2))
    else:
        x = math.pi * env.tilt_rad_per_v * dv * env.aperture_m / env.wavelength_m
        out = env.v_max * np.abs(np.sinc(x / math.pi))  # np.sinc is sin(pi t)/(pi t)
    return float(out) if out.ndim == 0 else out


def output_prob_a(phase_rad, visibility, split_imbalance=0.0):
    """P(photon exits port A), vectorized over phase/visibility.

    An imbalance eps shifts both splitters to (1 +- eps)/2 power split; the
    dark port then floors at eps^2 instead of 0.
    """
    cos_term = visibility * np.cos(phase_rad)
    eps2 = split_imbalance * split_imbalance
    p_a = (1.0 - cos_term) / 2.0 + eps2 * (1.0 + cos_term) / 2.0
    return np.clip(p_a, 0.0, 1.0)


def mzi_output_probs(state):
    """(p_A, p_B) with p_A + p_B = 1 exactly."""
    p_a = float(output_prob_a(state.phase_rad, state.visibility, state.split_imbalance))
    return p_a, 1.0 - p_a


def coincidence_prob_normalized(state):
    """Product p_A * p_B: the pairwise-coincidence rate per photon pair.

    Equals (1 - V^2 cos^2 phi)/4 for a balanced splitter; peaks at 1/4 on
    the incoherent (V = 0) reference.
    """
    p_a, p_b = mzi_output_probs(state)
    return p_a * p_b


def route_photons(stream, state, rng):
    """Split a stream over the two outputs by independent per-photon draws.

    `state` is either a single MziState applied to every arrival or an
    array of per-arrival P(A) values (one per timestamp). The two output
    streams partition the input exactly.
    """
    ts = stream.timestamps
    if isinstance(state, MziState):
        p_a = output_prob_a(state.phase_rad, state.visibility, state.split_imbalance)
        to_a = rng.random(ts.size) < p_a
    else:
        p_a = np.asarray(state, dtype=np.float64)
        if p_a.shape != ts.shape:
            raise ValueError("per-photon probability array must match stream length")
        to_a = rng.random(ts.size) < p_a
    return (
        ArrivalStream(ts[to_a], stream.duration_s),
        ArrivalStream(ts[~to_a], stream.duration_s),
    )


def render_fringe_image(v, scan, image_params):
    """Detector-plane image at scan voltage v.

    I(x, y) = G(x, y) * (1 + cos(k_x x + phi(v))) with a Gaussian beam
    profile G and tilt-induced spatial frequency k_x = 2*pi*theta(v)/lambda.
    Uniform (no fringes) at the scan center; many fringes at the scan ends.
    """
    phi = voltage_to_phase(v, scan)
    theta = float(tilt_angle(v, scan))
    k_x = 2.0 * math.pi * theta / scan.envelope.wavelength_m

    p = image_params
    x = (np.arange(p.nx) - (p.nx - 1) / 2.0) * p.pixel_pitch_m
    y = (np.arange(p.ny) - (p.ny - 1) / 2.0) * p.pixel_pitch_m
    xx, yy = np.meshgrid(x, y)
    gauss = np.exp(-2.0 * (xx * xx + yy * yy) / (p.beam_waist_m**2))
    intensity = gauss * (1.0 + np.cos(k_x * xx + phi))
    intensity = np.maximum(intensity, 0.0)  # clip float dust at the dark fringe
    return FringeImage(intensity, p.pixel_pitch_m, p.beam_waist_m, k_x)


@dataclass(frozen=True)
class CwFringes:
    """Continuous-intensity sweep: both output traces and their product."""

    voltages: np.ndarray
    intensity_a: np.ndarray
    intensity_b: np.ndarray
    product: np.ndarray


def cw_fringes(scan, intensity_w, split_imbalance=0.0):
    """Deterministic intensity traces over the sweep, no photon discretization.

    The pointwise product of the two anti-phase traces peaks exactly at
    their crossings, the continuous analog of the coincidence fringe.
    """
    if intensity_w < 0:
        raise ValueError("intensity must be >= 0")
    v = scan.voltages()
    phase = voltage_to_phase(v, scan)
    vis = envelope_visibility(v, scan)
    p_a = output_prob_a(phase, vis, split_imbalance)
    i_a = intensity_w * p_a
    i_b = intensity_w * (1.0 - p_a)
    return CwFringes(v, i_a, i_b, i_a * i_b)
