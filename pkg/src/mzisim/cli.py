"""Command-line driver: end-to-end simulation and analysis runs.

Subcommands:
  simulate          Monte Carlo sweep -> fringe CSV + manifest
  simulate-analytic noise-free expected curves + normalized product
  analyze           fringe CSV -> JSON report of all estimators
  traces            oscilloscope trace CSV -> pulse statistics report
  fit               envelope fit of one fringe channel
  render-image      detector-plane fringe image matrix at one voltage

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 analysis
non-convergence.

Rates are calibrated so the brightest scan point collects the configured
maximum singles per accumulation bin: 2e4 by default (a full sweep in well
under a minute), 2e5 with --paper-scale.
"""

import argparse
import copy
import datetime
import json
import sys
import types
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    FringeData,
    classical_reference,
    fit_envelope,
    g2_vs_incoherent,
    g2_zero,
    pixel_shift_align,
    product_prediction,
    visibility,
)
from .ccu import CcuConfig, accumulate, count_coincidences, bunched_event_stats
from .detection import DetectorParams, PulseTrain, detect
from .interferometer import (
    EnvelopeModel,
    ImageParams,
    MziState,
    ScanConfig,
    envelope_visibility,
    output_prob_a,
    render_fringe_image,
    route_photons,
    voltage_to_phase,
)
from .source import (
    PLANCK_CONSTANT,
    SPEED_OF_LIGHT,
    SourceParams,
    ar1_series,
    drift_factors,
    sample_arrivals,
    spawn_rng,
)
from .trace_io import (
    RunManifest,
    SchemaError,
    TraceFormatError,
    load_trace,
    read_fringe_csv,
    sha256_file,
    threshold_count,
    write_fringe_csv,
    write_image_csv,
    write_manifest,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NONCONVERGED = 3

# sub-seed domains (first spawn-key element)
_KEY_DRIFT = 0
_KEY_PHASE_NOISE = 1
_KEY_BIN = 2


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "seed": 12345,
    "source": {
        "wavelength_m": 532e-9,
        "power_w": 10e-3,
        "linewidth_hz": 5e6,
        "od_chain": [3.0, 10.0],
        "power_stability": 0.01,
        "drift_correlation_s": 1.0,
    },
    "scan": {
        "v_min": 0.0,
        "v_max": 150.0,
        "v_center": 75.0,
        "fringes_per_scan": 10.0,
        "points_per_scan": 2000,
        "accumulation_s": 0.1,
        "phase_offset_rad": 0.0,
        "envelope": {
            "mode": "gaussian",
            "v_max": 0.999,
            "sigma_v": 30.0,
            "tilt_rad_per_v": 3.55e-6,
            "aperture_m": 2e-3,
        },
    },
    "detector_1": {
        "efficiency": 0.5,
        "dead_time_s": 22e-9,
        "dark_rate_cps": 27.0,
        "pulse_width_s": 10e-9,
        "jitter_fwhm_s": 350e-12,
    },
    "detector_2": {
        "efficiency": 0.5,
        "dead_time_s": 22e-9,
        "dark_rate_cps": 27.0,
        "pulse_width_s": 10e-9,
        "jitter_fwhm_s": 350e-12,
    },
    "ccu": {
        "accumulation_s": 0.1,
        "rule": "overlap",
        "window_s": None,
    },
    "run": {
        "singles_max_per_bin": 2e4,
        "paper_singles_max_per_bin": 2e5,
        "split_imbalance": 0.0,
        "phase_noise_sigma_rad": 0.0,
        "phase_noise_correlation_s": 1.0,
        "jobs": 1,
    },
    "analysis": {
        "edge_fraction": 0.1,
        "max_align_shift": 10,
    },
}


def _merge_checked(defaults, override, path=""):
    if not isinstance(override, dict):
        raise ConfigError(f"config section {path or '<root>'} must be an object")
    merged = copy.deepcopy(defaults)
    for key, value in override.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(defaults[key], dict):
            merged[key] = _merge_checked(defaults[key], value, path + key + ".")
        else:
            merged[key] = value
    return merged


def load_config(path=None, overrides=None):
    """Defaults merged with an optional JSON file; unknown keys are rejected."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        cfg = _merge_checked(cfg, user)
    for key, value in (overrides or {}).items():
        cfg[key] = value
    return cfg


def build_objects(cfg):
    """Validated parameter objects from the config tree."""
    try:
        src = SourceParams(
            wavelength_m=cfg["source"]["wavelength_m"],
            power_w=cfg["source"]["power_w"],
            linewidth_hz=cfg["source"]["linewidth_hz"],
            od_chain=tuple(cfg["source"]["od_chain"]),
            power_stability=cfg["source"]["power_stability"],
        )
        env_cfg = cfg["scan"]["envelope"]
        envelope = EnvelopeModel(
            mode=env_cfg["mode"],
            v_max=env_cfg["v_max"],
            sigma_v=env_cfg["sigma_v"],
            tilt_rad_per_v=env_cfg["tilt_rad_per_v"],
            aperture_m=env_cfg["aperture_m"],
            wavelength_m=cfg["source"]["wavelength_m"],
        )
        scan = ScanConfig(
            v_min=cfg["scan"]["v_min"],
            v_max=cfg["scan"]["v_max"],
            v_center=cfg["scan"]["v_center"],
            fringes_per_scan=cfg["scan"]["fringes_per_scan"],
            points_per_scan=cfg["scan"]["points_per_scan"],
            accumulation_s=cfg["scan"]["accumulation_s"],
            phase_offset_rad=cfg["scan"]["phase_offset_rad"],
            envelope=envelope,
        )
        det1 = DetectorParams(**cfg["detector_1"])
        det2 = DetectorParams(**cfg["detector_2"])
        ccu = CcuConfig(
            accumulation_s=cfg["ccu"]["accumulation_s"],
            rule=cfg["ccu"]["rule"],
            window_s=cfg["ccu"]["window_s"],
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    return src, scan, det1, det2, ccu


def _effective_window(cfg):
    if cfg["ccu"]["rule"] == "overlap":
        return cfg["detector_1"]["pulse_width_s"] + cfg["detector_2"]["pulse_width_s"]
    return 2.0 * cfg["ccu"]["window_s"]


def _source_rate(cfg, paper_scale):
    key = "paper_singles_max_per_bin" if paper_scale else "singles_max_per_bin"
    singles_max = cfg["run"][key]
    eff = max(cfg["detector_1"]["efficiency"], cfg["detector_2"]["efficiency"])
    if eff <= 0:
        raise ConfigError("at least one detector needs efficiency > 0 to calibrate rates")
    return singles_max / (cfg["scan"]["accumulation_s"] * eff)


def simulate_bin_range(cfg, paper_scale, lo, hi, drift, phase_noise):
    """Records for scan bins [lo, hi); deterministic per (seed, bin index)."""
    src, scan, det1, det2, ccu = build_objects(cfg)
    seed = cfg["seed"]
    rate = _source_rate(cfg, paper_scale)
    imbalance = cfg["run"]["split_imbalance"]
    voltages = scan.voltages()
    bin_ccu = CcuConfig(accumulation_s=scan.accumulation_s, rule=ccu.rule, window_s=ccu.window_s)

    out = []
    for i in range(lo, hi):
        v = voltages[i]
        state = MziState(
            phase_rad=voltage_to_phase(v, scan) + phase_noise[i],
            visibility=float(envelope_visibility(v, scan)),
            split_imbalance=imbalance,
        )
        stream = sample_arrivals(rate * drift[i], scan.accumulation_s, spawn_rng(seed, _KEY_BIN, i, 0))
        stream_a, stream_b = route_photons(stream, state, spawn_rng(seed, _KEY_BIN, i, 1))
        train_1 = detect(stream_a, det1, spawn_rng(seed, _KEY_BIN, i, 2))
        train_2 = detect(stream_b, det2, spawn_rng(seed, _KEY_BIN, i, 3))
        rec = accumulate(train_1, train_2, bin_ccu)[0]
        out.append((i, rec.singles_1, rec.singles_2, rec.coincidences))
    return out


def _chunk_worker(args):
    cfg_json, paper_scale, lo, hi, drift, phase_noise = args
    return simulate_bin_range(json.loads(cfg_json), paper_scale, lo, hi, drift, phase_noise)


def run_simulation(cfg, paper_scale=False, jobs=None):
    """Full Monte Carlo sweep; a pure function of (config, seed)."""
    src, scan, det1, det2, ccu = build_objects(cfg)
    seed = cfg["seed"]
    n = scan.points_per_scan
    jobs = jobs if jobs is not None else int(cfg["run"]["jobs"])

    drift = drift_factors(
        n, scan.accumulation_s, src.power_stability,
        cfg["source"]["drift_correlation_s"], spawn_rng(seed, _KEY_DRIFT),
    )
    sigma_phi = cfg["run"]["phase_noise_sigma_rad"]
    phase_noise = ar1_series(
        n, scan.accumulation_s, sigma_phi,
        cfg["run"]["phase_noise_correlation_s"], spawn_rng(seed, _KEY_PHASE_NOISE),
    )

    if jobs > 1:
        bounds = np.linspace(0, n, 4 * jobs + 1, dtype=int)
        tasks = [
            (json.dumps(cfg), paper_scale, int(lo), int(hi), drift, phase_noise)
            for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_chunk_worker, tasks))
        rows = [row for chunk in chunks for row in chunk]
    else:
        rows = simulate_bin_range(cfg, paper_scale, 0, n, drift, phase_noise)
    rows.sort(key=lambda r: r[0])

    voltages = scan.voltages()
    phases = voltage_to_phase(voltages, scan)
    fringe = FringeData(
        voltage_v=voltages,
        phase_rad=phases,
        counts_d1=np.array([r[1] for r in rows], dtype=np.float64),
        counts_d2=np.array([r[2] for r in rows], dtype=np.float64),
        coincidences=np.array([r[3] for r in rows], dtype=np.float64),
        accumulation_s=scan.accumulation_s,
    )
    manifest = _build_manifest(cfg, paper_scale, mode="monte-carlo")
    return fringe, manifest


def run_analytic(cfg, paper_scale=False):
    """Noise-free expected singles curves and the normalized coincidence product.

    Singles columns carry expected counts per bin; the coincidence column is
    the normalized product p_A * p_B (peak 0.25 on the incoherent ends).
    """
    _, scan, det1, det2, _ = build_objects(cfg)
    rate = _source_rate(cfg, paper_scale)
    v = scan.voltages()
    phase = voltage_to_phase(v, scan)
    vis = envelope_visibility(v, scan)
    p_a = output_prob_a(phase, vis, cfg["run"]["split_imbalance"])
    p_b = 1.0 - p_a
    t = scan.accumulation_s
    fringe = FringeData(
        voltage_v=v,
        phase_rad=phase,
        counts_d1=rate * t * det1.efficiency * p_a,
        counts_d2=rate * t * det2.efficiency * p_b,
        coincidences=p_a * p_b,
        accumulation_s=t,
    )
    manifest = _build_manifest(cfg, paper_scale, mode="analytic")
    return fringe, manifest


def _build_manifest(cfg, paper_scale, mode):
    src, _, _, _, _ = build_objects(cfg)
    rate = _source_rate(cfg, paper_scale)
    tau = _effective_window(cfg)
    derived = {
        "mode": mode,
        "paper_scale": bool(paper_scale),
        "calibrated_source_rate_cps": rate,
        "physical_source_rate_cps": src.photon_rate_cps,
        "effective_window_s": tau,
        "mean_photon_number_window_s": tau,
        "mean_photon_number": rate * tau,
        "mean_photon_number_per_coherence_time": rate * src.coherence_time_s,
        "planck_constant_j_s": PLANCK_CONSTANT,
        "speed_of_light_m_s": SPEED_OF_LIGHT,
    }
    return RunManifest(
        version=__version__,
        seed=cfg["seed"],
        created_utc=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        params={k: cfg[k] for k in ("source", "scan", "detector_1", "detector_2", "ccu", "run")},
        derived=derived,
        outputs={},
    )


def _write_run_outputs(out_dir, fringe, manifest, csv_name):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / csv_name
    write_fringe_csv(csv_path, fringe, manifest_digest=manifest.config_digest())
    manifest = RunManifest(
        version=manifest.version,
        seed=manifest.seed,
        created_utc=manifest.created_utc,
        params=manifest.params,
        derived=manifest.derived,
        outputs={csv_name: sha256_file(csv_path)},
    )
    write_manifest(out / "manifest.json", manifest)
    return csv_path


def _records_view(fringe):
    return [
        types.SimpleNamespace(
            singles_1=fringe.counts_d1[i],
            singles_2=fringe.counts_d2[i],
            coincidences=fringe.coincidences[i],
        )
        for i in range(len(fringe))
    ]


def analyze_fringe(fringe, effective_window_s, edge_fraction=0.1, max_align_shift=10):
    """All estimator outputs for one fringe data set, as a JSON-ready dict."""
    records = _records_view(fringe)
    vis_1 = visibility(float(fringe.counts_d1.max()), float(fringe.counts_d1.min()))
    vis_2 = visibility(float(fringe.counts_d2.max()), float(fringe.counts_d2.min()))
    best_vis = max(vis_1, vis_2)

    g2 = g2_zero(records, effective_window_s, fringe.accumulation_s, visibility_value=best_vis)
    g2_cl = g2_vs_incoherent(records, effective_window_s, fringe.accumulation_s,
                             visibility_value=best_vis)

    predicted = product_prediction(fringe)
    residual = float(np.sqrt(np.mean((predicted - fringe.coincidences) ** 2)))
    reference = classical_reference(fringe, edge_fraction)
    max_shift = min(max_align_shift, max(0, len(fringe) // 4 - 1))
    shift = pixel_shift_align(fringe.counts_d1, fringe.counts_d2, max_shift)
    fit_1 = fit_envelope(fringe, "d1")
    fit_2 = fit_envelope(fringe, "d2")

    def fit_dict(fit):
        return {
            "v_max": fit.v_max,
            "sigma_v": fit.sigma_v,
            "omega_rad_per_v": fit.omega_rad_per_v,
            "phase_rad": fit.phase_rad,
            "baseline": fit.baseline,
            "residual_norm": fit.residual_norm,
            "converged": fit.converged,
        }

    return {
        "n_points": len(fringe),
        "accumulation_s": fringe.accumulation_s,
        "effective_window_s": effective_window_s,
        "visibility_d1": vis_1,
        "visibility_d2": vis_2,
        "visibility_exceeds_bell": bool(best_vis > 1.0 / np.sqrt(2.0)),
        "g2_accidental_normalized": {
            "g2": g2.g2,
            "uncertainty": g2.uncertainty,
            "below_g2_bound": g2.below_g2_bound,
        },
        "g2_vs_incoherent": {
            "g2": g2_cl.g2,
            "uncertainty": g2_cl.uncertainty,
            "below_g2_bound": g2_cl.below_g2_bound,
        },
        "product_prediction_residual_rms": residual,
        "classical_reference_level": reference.level,
        "below_reference_fraction": reference.below_fraction,
        "alignment_shift_points": int(shift),
        "fit_d1": fit_dict(fit_1),
        "fit_d2": fit_dict(fit_2),
    }


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def cmd_simulate(args, analytic=False):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "flip_ports", False):
        cfg["scan"]["phase_offset_rad"] += np.pi
    if analytic:
        fringe, manifest = run_analytic(cfg, paper_scale=args.paper_scale)
        name = "fringe_analytic.csv"
    else:
        fringe, manifest = run_simulation(cfg, paper_scale=args.paper_scale, jobs=args.jobs)
        name = "fringe.csv"
    path = _write_run_outputs(args.out, fringe, manifest, name)
    print(f"wrote {path} and {Path(args.out) / 'manifest.json'}")
    return EXIT_OK


def cmd_analyze(args):
    cfg = load_config(args.config)
    fringe = read_fringe_csv(args.fringe_csv)
    window = args.window if args.window is not None else _effective_window(cfg)
    report = analyze_fringe(
        fringe, window,
        edge_fraction=cfg["analysis"]["edge_fraction"],
        max_align_shift=cfg["analysis"]["max_align_shift"],
    )
    report["inputs"] = {str(args.fringe_csv): sha256_file(args.fringe_csv)}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", report)
    print(f"wrote {out / 'report.json'}")
    if not (report["fit_d1"]["converged"] and report["fit_d2"]["converged"]):
        print("envelope fit did not converge", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_traces(args):
    waveform = load_trace(args.trace_csv)
    duration = waveform.duration_s
    report = {
        "inputs": {str(args.trace_csv): sha256_file(args.trace_csv)},
        "sample_period_s": waveform.sample_period_s,
        "duration_s": duration,
        "threshold_v": args.threshold,
        "min_separation_s": args.min_separation,
        "cluster_window_s": args.cluster_window,
        "channels": {},
    }
    trains = []
    for name, samples in (("ch1", waveform.ch1_v), ("ch2", waveform.ch2_v)):
        times = threshold_count(samples, waveform.sample_period_s, args.threshold,
                                args.min_separation) if waveform.n_samples else np.empty(0)
        train = (PulseTrain(times, args.pulse_width, duration)
                 if duration > 0 and times.size else None)
        stats = (bunched_event_stats(train, args.cluster_window)
                 if train is not None else None)
        gaps = np.diff(times)
        if gaps.size:
            edges = np.linspace(0.0, float(gaps.max()), 51)
            hist, _ = np.histogram(gaps, bins=edges)
            gap_hist = {"bin_edges_s": edges.tolist(), "counts": hist.tolist()}
        else:
            gap_hist = {"bin_edges_s": [], "counts": []}
        report["channels"][name] = {
            "pulse_count": int(times.size),
            "clusters": {
                "singles": stats.singles if stats else 0,
                "doubles": stats.doubles if stats else 0,
                "triples": stats.triples if stats else 0,
                "higher": stats.higher if stats else 0,
            },
            "inter_arrival_histogram": gap_hist,
        }
        trains.append(train)
    if trains[0] is not None and trains[1] is not None:
        report["coincidences"] = count_coincidences(
            trains[0], trains[1], CcuConfig(accumulation_s=max(duration, 1e-12)))
    else:
        report["coincidences"] = 0
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "traces_report.json", report)
    print(f"wrote {out / 'traces_report.json'}")
    return EXIT_OK


def cmd_fit(args):
    fringe = read_fringe_csv(args.fringe_csv)
    fit = fit_envelope(fringe, args.channel)
    doc = {
        "channel": args.channel,
        "v_max": fit.v_max,
        "sigma_v": fit.sigma_v,
        "omega_rad_per_v": fit.omega_rad_per_v,
        "phase_rad": fit.phase_rad,
        "baseline": fit.baseline,
        "residual_norm": fit.residual_norm,
        "converged": fit.converged,
        "inputs": {str(args.fringe_csv): sha256_file(args.fringe_csv)},
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "fit.json", doc)
    print(f"wrote {out / 'fit.json'}")
    return EXIT_OK if fit.converged else EXIT_NONCONVERGED


def cmd_render_image(args):
    cfg = load_config(args.config)
    _, scan, _, _, _ = build_objects(cfg)
    params = ImageParams(nx=args.nx, ny=args.ny, pixel_pitch_m=args.pitch,
                         beam_waist_m=args.waist)
    image = render_fringe_image(args.voltage, scan, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_image_csv(out / "image.csv", image)
    print(f"wrote {out / 'image.csv'}")
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, default=None, help="JSON config file")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--out", type=str, default="out", help="output directory")
    common.add_argument("--paper-scale", action="store_true",
                        help="use full published count magnitudes")

    parser = argparse.ArgumentParser(prog="mzisim", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo fringe sweep")
    p.add_argument("--flip-ports", action="store_true",
                   help="flip which output is dark at the scan center")
    p.add_argument("--jobs", type=int, default=None, help="parallel worker processes")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("simulate-analytic", parents=[common],
                       help="noise-free expected curves and normalized product")
    p.add_argument("--flip-ports", action="store_true")
    p.set_defaults(func=lambda a: cmd_simulate(a, analytic=True))

    p = sub.add_parser("analyze", parents=[common], help="estimators over a fringe CSV")
    p.add_argument("fringe_csv", type=str)
    p.add_argument("--window", type=float, default=None,
                   help="effective coincidence window (s); default from config")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("traces", parents=[common], help="pulse statistics of a trace CSV")
    p.add_argument("trace_csv", type=str)
    p.add_argument("--threshold", type=float, default=0.5, help="edge threshold (V)")
    p.add_argument("--min-separation", type=float, default=10e-9,
                   help="re-trigger suppression window (s)")
    p.add_argument("--cluster-window", type=float, default=100e-9,
                   help="gap below which pulses count as bunched (s)")
    p.add_argument("--pulse-width", type=float, default=10e-9,
                   help="pulse width for cross-channel coincidence (s)")
    p.set_defaults(func=cmd_traces)

    p = sub.add_parser("fit", parents=[common], help="envelope fit of one channel")
    p.add_argument("fringe_csv", type=str)
    p.add_argument("--channel", choices=("d1", "d2"), default="d1")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("render-image", parents=[common],
                       help="detector-plane image matrix at one scan voltage")
    p.add_argument("--voltage", type=float, required=True)
    p.add_argument("--nx", type=int, default=256)
    p.add_argument("--ny", type=int, default=256)
    p.add_argument("--pitch", type=float, default=1e-5, help="pixel pitch (m)")
    p.add_argument("--waist", type=float, default=1e-3, help="beam waist (m)")
    p.set_defaults(func=cmd_render_image)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors, 0 for --help
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, TraceFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
