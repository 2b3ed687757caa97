import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from mzisim.interferometer import (
    CwFringes,
    EnvelopeModel,
    FringeImage,
    ImageParams,
    MziState,
    ScanConfig,
    coincidence_prob_normalized,
    cw_fringes,
    envelope_visibility,
    mzi_output_probs,
    render_fringe_image,
    route_photons,
    voltage_to_phase,
)
from mzisim.source import sample_arrivals, spawn_rng


def walkoff_scan(v_max=1.0, zero_at_dv=50.0, aperture=2e-3, wavelength=532e-9):
    """Scan whose sinc envelope hits its first zero at |v - center| = zero_at_dv."""
    tilt = wavelength / (zero_at_dv * aperture)
    env = EnvelopeModel(mode="walkoff", v_max=v_max, tilt_rad_per_v=tilt,
                        aperture_m=aperture, wavelength_m=wavelength)
    return ScanConfig(envelope=env)


def aperture_visibility_oracle(x):
    """Contrast of cos fringes averaged over a uniform aperture, by quadrature."""
    re, _ = quad(lambda xi: math.cos(2.0 * x * xi), -0.5, 0.5, limit=200)
    return abs(re)


class TestVoltageToPhase:
    def test_center_convention(self):
        assert voltage_to_phase(75.0, ScanConfig()) == 0.0

    def test_one_fringe_per_fifteen_volts(self):
        scan = ScanConfig()
        dphi = voltage_to_phase(90.0, scan) - voltage_to_phase(75.0, scan)
        assert dphi == pytest.approx(2 * math.pi, rel=1e-12)

    def test_phase_step_per_data_point(self):
        scan = ScanConfig()
        step = scan.volts_per_point
        assert step == pytest.approx(150.0 / 2000.0)
        dphi = voltage_to_phase(75.0 + step, scan) - voltage_to_phase(75.0, scan)
        assert dphi == pytest.approx(0.01 * math.pi, rel=1e-12)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            voltage_to_phase(150.1, ScanConfig())
        with pytest.raises(ValueError):
            voltage_to_phase(-0.1, ScanConfig())

    def test_offset_and_vectorized(self):
        scan = ScanConfig(phase_offset_rad=math.pi)
        v = scan.voltages()
        phases = voltage_to_phase(v, scan)
        assert phases.shape == v.shape
        assert voltage_to_phase(75.0, scan) == pytest.approx(math.pi)


class TestEnvelopeVisibility:
    def test_center_is_v_max_both_modes(self):
        assert envelope_visibility(75.0, ScanConfig()) == pytest.approx(0.999)
        assert envelope_visibility(75.0, walkoff_scan(v_max=0.97)) == pytest.approx(0.97)

    def test_walkoff_zero_at_full_fringe_across_aperture(self):
        scan = walkoff_scan()
        assert envelope_visibility(125.0, scan) == pytest.approx(0.0, abs=1e-12)

    def test_walkoff_half_fringe_matches_quadrature_oracle(self):
        scan = walkoff_scan()
        oracle = aperture_visibility_oracle(math.pi / 2)
        got = envelope_visibility(100.0, scan)  # x = pi/2 at dv = 25
        assert got == pytest.approx(oracle, abs=1e-12)
        assert got == pytest.approx(0.6366, abs=1e-4)

    @given(st.floats(min_value=0.0, max_value=75.0))
    @settings(max_examples=50)
    def test_symmetric_about_center(self, dv):
        # 75 +- dv round asymmetrically for arbitrary dv, hence the tolerance;
        # dyadic offsets are representable exactly and must match exactly.
        for scan in (ScanConfig(), walkoff_scan()):
            assert envelope_visibility(75.0 + dv, scan) == pytest.approx(
                envelope_visibility(75.0 - dv, scan), rel=1e-12)

    @pytest.mark.parametrize("dv", [0.0, 0.5, 11.25, 37.5, 75.0])
    def test_symmetric_exact_on_representable_offsets(self, dv):
        for scan in (ScanConfig(), walkoff_scan()):
            assert envelope_visibility(75.0 + dv, scan) == envelope_visibility(75.0 - dv, scan)

    def test_gaussian_width(self):
        scan = ScanConfig()
        expected = 0.999 * math.exp(-(30.0**2) / (2 * 30.0**2))
        assert envelope_visibility(105.0, scan) == pytest.approx(expected, rel=1e-12)


class TestOutputProbs:
    def test_dark_bright_pair(self):
        assert mzi_output_probs(MziState(0.0, 1.0)) == (0.0, 1.0)

    def test_symmetry_at_pi(self):
        assert mzi_output_probs(MziState(math.pi, 1.0)) == (1.0, 0.0)

    def test_incoherent_limit(self):
        p_a, p_b = mzi_output_probs(MziState(1.2345, 0.0))
        assert p_a == 0.5 and p_b == 0.5

    @given(
        st.floats(min_value=-50.0, max_value=50.0),
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=-0.99, max_value=0.99),
    )
    @settings(max_examples=100)
    def test_probabilities_sum_to_one_exactly(self, phase, vis, imbalance):
        p_a, p_b = mzi_output_probs(MziState(phase, vis, imbalance))
        assert 0.0 <= p_a <= 1.0
        assert p_a + p_b == 1.0

    def test_imbalance_floors_dark_port(self):
        p_a, _ = mzi_output_probs(MziState(0.0, 1.0, split_imbalance=0.1))
        assert p_a == pytest.approx(0.01, rel=1e-12)


class TestCoincidenceProb:
    def test_perfect_anticorrelation(self):
        assert coincidence_prob_normalized(MziState(0.0, 1.0)) == 0.0

    def test_crossing_point(self):
        assert coincidence_prob_normalized(MziState(math.pi / 2, 1.0)) == pytest.approx(0.25)

    def test_incoherent_reference(self):
        assert coincidence_prob_normalized(MziState(0.777, 0.0)) == 0.25

    @given(st.floats(min_value=-10.0, max_value=10.0), st.floats(min_value=0.0, max_value=1.0))
    @settings(max_examples=100)
    def test_equals_product_and_bounded(self, phase, vis):
        state = MziState(phase, vis)
        p_a, p_b = mzi_output_probs(state)
        c = coincidence_prob_normalized(state)
        assert c == p_a * p_b
        assert c <= 0.25
        if abs(vis * math.cos(phase)) > 1e-6:
            assert c < 0.25


class TestRoutePhotons:
    def test_all_to_one_port(self):
        stream = sample_arrivals(1e4, 0.1, spawn_rng(1))
        a, b = route_photons(stream, MziState(math.pi, 1.0), spawn_rng(2))
        assert len(a) == len(stream) and len(b) == 0

    def test_dark_port_empty(self):
        stream = sample_arrivals(1e4, 0.1, spawn_rng(1))
        a, b = route_photons(stream, MziState(0.0, 1.0), spawn_rng(2))
        assert len(a) == 0 and len(b) == len(stream)

    def test_balanced_split_binomial_bound(self):
        stream = sample_arrivals(1e5, 1.0, spawn_rng(11))
        a, _ = route_photons(stream, MziState(math.pi / 2, 1.0), spawn_rng(12))
        n = len(stream)
        assert abs(len(a) - n / 2) < 5 * math.sqrt(n / 4)

    def test_conserves_and_partitions(self):
        stream = sample_arrivals(5e3, 0.5, spawn_rng(21))
        a, b = route_photons(stream, MziState(1.0, 0.7), spawn_rng(22))
        assert len(a) + len(b) == len(stream)
        merged = np.sort(np.concatenate((a.timestamps, b.timestamps)))
        np.testing.assert_array_equal(merged, stream.timestamps)

    def test_per_photon_probability_array(self):
        stream = sample_arrivals(5e3, 0.5, spawn_rng(31))
        p = np.zeros(len(stream))
        a, b = route_photons(stream, p, spawn_rng(32))
        assert len(a) == 0 and len(b) == len(stream)
        with pytest.raises(ValueError):
            route_photons(stream, np.zeros(3), spawn_rng(33))

    def test_same_seed_same_routing(self):
        stream = sample_arrivals(5e3, 0.5, spawn_rng(41))
        a1, _ = route_photons(stream, MziState(0.3, 0.9), spawn_rng(42))
        a2, _ = route_photons(stream, MziState(0.3, 0.9), spawn_rng(42))
        np.testing.assert_array_equal(a1.timestamps, a2.timestamps)

    def test_monte_carlo_singles_converge_to_probability(self):
        state = MziState(1.1, 0.8)
        p_a, _ = mzi_output_probs(state)
        stream = sample_arrivals(2e5, 1.0, spawn_rng(51))
        a, _ = route_photons(stream, state, spawn_rng(52))
        assert len(a) / len(stream) == pytest.approx(p_a, rel=0.02)


class TestFringeImage:
    def test_destructive_center_is_dark(self):
        scan = ScanConfig(phase_offset_rad=math.pi, envelope=walkoff_scan().envelope)
        img = render_fringe_image(75.0, scan, ImageParams(nx=64, ny=64))
        assert img.total() == pytest.approx(0.0, abs=1e-20)

    def test_constructive_center_gaussian_spot(self):
        scan = walkoff_scan()
        img = render_fringe_image(75.0, scan, ImageParams(nx=65, ny=65))
        row = img.intensity[32]
        assert np.argmax(row) == 32
        assert np.all(np.diff(row[32:]) <= 0)  # no fringes, pure falloff
        assert img.spatial_freq_rad_per_m == 0.0

    def test_scan_end_shows_multiple_fringes(self):
        scan = walkoff_scan()
        params = ImageParams(nx=512, ny=16, pixel_pitch_m=2e-3 / 512, beam_waist_m=1.0)
        img = render_fringe_image(0.0, scan, params)
        row = img.intensity[8]
        # x = 1.5 pi at dv = 75: three half-fringes across the aperture
        crossings = np.sum(np.diff(row > row.mean()) != 0)
        assert crossings >= 2

    def test_aperture_sum_visibility_matches_envelope(self):
        # image-integrated fringe contrast versus the walk-off envelope model
        scan = walkoff_scan()
        v = 100.0  # x = pi/2
        params = ImageParams(nx=2048, ny=4, pixel_pitch_m=2e-3 / 2048, beam_waist_m=10.0)
        sums = []
        for offset in np.linspace(0.0, 2 * math.pi, 32, endpoint=False):
            scan_off = ScanConfig(phase_offset_rad=offset, envelope=scan.envelope)
            sums.append(render_fringe_image(v, scan_off, params).total())
        sums = np.asarray(sums)
        vis = (sums.max() - sums.min()) / (sums.max() + sums.min())
        assert vis == pytest.approx(envelope_visibility(v, scan), rel=5e-3)

    def test_intensities_nonnegative(self):
        img = render_fringe_image(10.0, walkoff_scan(), ImageParams(nx=32, ny=32))
        assert np.all(img.intensity >= 0)


class TestCwFringes:
    def test_product_zero_at_fringe_phases(self):
        scan = ScanConfig(envelope=EnvelopeModel(v_max=1.0, sigma_v=1e9))
        out = cw_fringes(scan, 1e-5)
        at_npi = np.isclose((out.voltages - 75.0) % 7.5, 0.0)  # phase = n*pi
        assert at_npi.sum() >= 10
        assert out.product[at_npi].max() < 1e-12 * (1e-5) ** 2

    def test_incoherent_product_constant(self):
        scan = ScanConfig(envelope=EnvelopeModel(v_max=0.0))
        out = cw_fringes(scan, 4e-6)
        np.testing.assert_allclose(out.product, (4e-6 / 2) ** 2, rtol=1e-12)

    def test_product_maxima_at_trace_crossings(self):
        scan = ScanConfig(points_per_scan=4000)
        out = cw_fringes(scan, 1.0)
        # brute-force scan of the sampled curves
        diff = out.intensity_a - out.intensity_b
        crossings = np.flatnonzero(np.sign(diff[:-1]) != np.sign(diff[1:]))
        maxima = [
            i for i in range(1, len(out.product) - 1)
            if out.product[i] >= out.product[i - 1] and out.product[i] >= out.product[i + 1]
            and out.product[i] > 0.5 * out.product.max()
        ]
        for m in maxima:
            assert np.min(np.abs(crossings - m)) <= 1

    def test_negative_intensity_rejected(self):
        with pytest.raises(ValueError):
            cw_fringes(ScanConfig(), -1.0)


class TestValidation:
    def test_scan_config(self):
        with pytest.raises(ValueError):
            ScanConfig(v_min=80.0)
        with pytest.raises(ValueError):
            ScanConfig(points_per_scan=1)
        with pytest.raises(ValueError):
            ScanConfig(accumulation_s=0.0)

    def test_envelope_model(self):
        with pytest.raises(ValueError):
            EnvelopeModel(mode="other")
        with pytest.raises(ValueError):
            EnvelopeModel(v_max=1.5)
        with pytest.raises(ValueError):
            EnvelopeModel(sigma_v=0.0)

    def test_mzi_state(self):
        with pytest.raises(ValueError):
            MziState(0.0, 1.1)
        with pytest.raises(ValueError):
            MziState(0.0, 0.5, split_imbalance=1.0)

    def test_fringe_image_invariants(self):
        with pytest.raises(ValueError):
            FringeImage(np.array([[-1.0]]), 1e-5, 1e-3, 0.0)
