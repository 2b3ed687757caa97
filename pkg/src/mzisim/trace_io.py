"""File formats and oscilloscope-style trace processing.

Formats:
  trace CSV:  header time_s,ch1_v,ch2_v; uniform sampling required (1 ppm)
  fringe CSV: comment lines (# key=value), then
              bin_index,pzt_voltage_v,phase_rad,counts_d1,counts_d2,coincidences
  pulse CSV:  comment line with the duration, then start_time_s,width_s
  manifest:   JSON with a mandatory manifest_version field

All writers are deterministic: identical inputs give byte-identical files.
Numeric fields are serialized with 17 significant digits so float64 values
round-trip exactly.
"""

import hashlib
import json
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .analysis import FringeData
from .detection import PulseTrain, dead_time_filter

MANIFEST_VERSION = 1
FRINGE_SCHEMA = "fringe-v1"
FRINGE_HEADER = "bin_index,pzt_voltage_v,phase_rad,counts_d1,counts_d2,coincidences"
TRACE_HEADER = "time_s,ch1_v,ch2_v"
PULSE_HEADER = "start_time_s,width_s"


class SchemaError(ValueError):
    """File does not conform to the expected schema or version."""


class TraceFormatError(ValueError):
    """Malformed trace data; the message names the offending line."""


def _fmt(x):
    return format(float(x), ".17g")


def sha256_bytes(data):
    return hashlib.sha256(data).hexdigest()


def sha256_file(path):
    with open(path, "rb") as fh:
        return sha256_bytes(fh.read())


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled two-channel voltage trace."""

    sample_period_s: float
    ch1_v: np.ndarray
    ch2_v: np.ndarray

    def __post_init__(self):
        ch1 = np.asarray(self.ch1_v, dtype=np.float64)
        ch2 = np.asarray(self.ch2_v, dtype=np.float64)
        object.__setattr__(self, "ch1_v", ch1)
        object.__setattr__(self, "ch2_v", ch2)
        if ch1.size != ch2.size:
            raise ValueError("channels must have equal length")
        if ch1.size > 1 and self.sample_period_s <= 0:
            raise ValueError("sample period must be > 0")
        if self.sample_period_s < 0:
            raise ValueError("sample period must be >= 0")

    @property
    def n_samples(self):
        return int(self.ch1_v.size)

    @property
    def duration_s(self):
        return self.n_samples * self.sample_period_s


def load_trace(path):
    """Parse a trace CSV; rejects malformed rows with their line number."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != TRACE_HEADER:
        raise SchemaError(f"{path}: expected header '{TRACE_HEADER}'")

    times, ch1, ch2 = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 3:
            raise TraceFormatError(f"line {lineno}: expected 3 columns, got {len(cells)}")
        try:
            t, v1, v2 = (float(c) for c in cells)
        except ValueError:
            raise TraceFormatError(f"line {lineno}: non-numeric cell in {line!r}") from None
        times.append(t)
        ch1.append(v1)
        ch2.append(v2)

    if not times:
        warnings.warn(f"{path}: trace has no data rows", stacklevel=2)
        return Waveform(0.0, np.empty(0), np.empty(0))
    if len(times) == 1:
        raise TraceFormatError("single-row trace: sample period cannot be inferred")

    dt = np.diff(np.asarray(times))
    period = float(dt[0])
    if period <= 0 or np.any(np.abs(dt - period) > 1e-6 * period):
        raise TraceFormatError("non-uniform sampling (beyond 1 ppm)")
    return Waveform(period, np.asarray(ch1), np.asarray(ch2))


def write_trace(path, waveform):
    rows = [TRACE_HEADER]
    for i in range(waveform.n_samples):
        t = i * waveform.sample_period_s
        rows.append(f"{_fmt(t)},{_fmt(waveform.ch1_v[i])},{_fmt(waveform.ch2_v[i])}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")


def threshold_count(samples, sample_period_s, threshold_v, min_separation_s):
    """Rising-edge pulse start times with re-trigger suppression.

    A pulse starts where the previous sample is below the threshold and the
    current one is at or above it (a first sample already above threshold
    counts as an edge at t = 0). Edges closer than min_separation to the
    last accepted one are discarded.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if sample_period_s <= 0:
        raise ValueError("sample period must be > 0")
    if min_separation_s < sample_period_s:
        raise ValueError("min_separation must be >= sample period")
    if samples.size == 0:
        return np.empty(0)
    above = samples >= threshold_v
    rising = above.copy()
    rising[1:] &= ~above[:-1]
    times = np.flatnonzero(rising) * sample_period_s
    return dead_time_filter(times, min_separation_s)


def synthesize_waveform(train_1, train_2, sample_period_s, amplitude_v=1.0,
                        noise_rms_v=0.0, rng=None):
    """Render two pulse trains as an ideal square-pulse waveform (for tests).

    Optional white Gaussian noise of the given rms is added per sample.
    """
    if train_1.duration_s != train_2.duration_s:
        raise ValueError("trains must cover the same duration")
    if sample_period_s <= 0:
        raise ValueError("sample period must be > 0")
    n = int(round(train_1.duration_s / sample_period_s))

    def render(train):
        delta = np.zeros(n + 1)
        start = np.ceil(train.start_times / sample_period_s).astype(np.int64)
        stop = np.ceil((train.start_times + train.pulse_width_s) / sample_period_s)
        stop = np.minimum(stop.astype(np.int64), n)
        np.add.at(delta, start, amplitude_v)
        np.add.at(delta, stop, -amplitude_v)
        return np.cumsum(delta[:n])

    ch1 = render(train_1)
    ch2 = render(train_2)
    if noise_rms_v > 0:
        if rng is None:
            raise ValueError("noise requires an rng")
        ch1 = ch1 + rng.normal(0.0, noise_rms_v, n)
        ch2 = ch2 + rng.normal(0.0, noise_rms_v, n)
    return Waveform(sample_period_s, ch1, ch2)


def _parse_comments(lines):
    meta = {}
    body_start = 0
    for i, line in enumerate(lines):
        if not line.startswith("#"):
            body_start = i
            break
        key, _, value = line[1:].strip().partition("=")
        meta[key.strip()] = value.strip()
        body_start = i + 1
    return meta, body_start


def write_fringe_csv(path, fringe, manifest_digest=None):
    rows = [f"# schema={FRINGE_SCHEMA}", f"# accumulation_s={_fmt(fringe.accumulation_s)}"]
    if manifest_digest is not None:
        rows.append(f"# manifest={manifest_digest}")
    rows.append(FRINGE_HEADER)
    for i in range(len(fringe)):
        rows.append(",".join((
            str(i),
            _fmt(fringe.voltage_v[i]),
            _fmt(fringe.phase_rad[i]),
            _fmt(fringe.counts_d1[i]),
            _fmt(fringe.counts_d2[i]),
            _fmt(fringe.coincidences[i]),
        )))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")


def read_fringe_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    meta, body = _parse_comments(lines)
    if meta.get("schema") != FRINGE_SCHEMA:
        raise SchemaError(f"{path}: expected schema={FRINGE_SCHEMA}, got {meta.get('schema')!r}")
    if body >= len(lines) or lines[body] != FRINGE_HEADER:
        raise SchemaError(f"{path}: expected header '{FRINGE_HEADER}'")

    cols = [[], [], [], [], []]
    for lineno, line in enumerate(lines[body + 1:], start=body + 2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 6:
            raise SchemaError(f"line {lineno}: expected 6 columns, got {len(cells)}")
        try:
            for col, cell in zip(cols, cells[1:]):
                col.append(float(cell))
        except ValueError:
            raise SchemaError(f"line {lineno}: non-numeric cell in {line!r}") from None
    return FringeData(
        voltage_v=np.asarray(cols[0]),
        phase_rad=np.asarray(cols[1]),
        counts_d1=np.asarray(cols[2]),
        counts_d2=np.asarray(cols[3]),
        coincidences=np.asarray(cols[4]),
        accumulation_s=float(meta["accumulation_s"]),
    )


def write_pulse_csv(path, train):
    rows = [f"# duration_s={_fmt(train.duration_s)}", PULSE_HEADER]
    for t in train.start_times:
        rows.append(f"{_fmt(t)},{_fmt(train.pulse_width_s)}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")


def read_pulse_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    meta, body = _parse_comments(lines)
    if "duration_s" not in meta:
        raise SchemaError(f"{path}: missing duration_s")
    if body >= len(lines) or lines[body] != PULSE_HEADER:
        raise SchemaError(f"{path}: expected header '{PULSE_HEADER}'")
    starts, widths = [], []
    for line in lines[body + 1:]:
        if not line.strip():
            continue
        s, w = line.split(",")
        starts.append(float(s))
        widths.append(float(w))
    if widths and len(set(widths)) != 1:
        raise SchemaError(f"{path}: pulse widths must be uniform")
    width = widths[0] if widths else 1e-9
    return PulseTrain(np.asarray(starts), width, float(meta["duration_s"]))


def write_image_csv(path, image):
    np.savetxt(path, image.intensity, fmt="%.17g", delimiter=",")


@dataclass(frozen=True)
class RunManifest:
    """Reproducibility envelope: every simulation output points back to one."""

    version: str
    seed: int
    created_utc: str
    params: dict = field(default_factory=dict)
    derived: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)

    def config_digest(self):
        """Digest over the run-defining content only (version, seed, params).

        Excludes timestamps and output digests so that two runs with the
        same configuration reference the same digest in their CSVs.
        """
        payload = {"version": self.version, "seed": self.seed, "params": self.params}
        return sha256_bytes(_canonical_json(payload).encode("utf-8"))


def _canonical_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2)


def write_manifest(path, manifest):
    doc = {"manifest_version": MANIFEST_VERSION}
    doc.update(asdict(manifest))
    doc["config_digest"] = manifest.config_digest()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_canonical_json(doc) + "\n")


def read_manifest(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("manifest_version") != MANIFEST_VERSION:
        raise SchemaError(
            f"{path}: manifest_version {doc.get('manifest_version')!r} "
            f"not supported (expected {MANIFEST_VERSION})"
        )
    return RunManifest(
        version=doc["version"],
        seed=doc["seed"],
        created_utc=doc["created_utc"],
        params=doc["params"],
        derived=doc["derived"],
        outputs=doc["outputs"],
    )
