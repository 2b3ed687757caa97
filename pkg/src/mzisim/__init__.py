"""Monte Carlo simulator and analysis toolkit for attenuated-light
Mach-Zehnder coincidence experiments: photon event streams, interferometer
routing, detector and coincidence-counter models, and fringe/correlation
estimators."""

__version__ = "0.1.0"

from .source import (
    ArrivalStream,
    PoissonModel,
    SourceParams,
    attenuate,
    bin_counts,
    photon_rate,
    poisson_pmf,
    sample_arrivals,
    spawn_rng,
)
from .interferometer import (
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
from .detection import DetectorParams, PulseTrain, dark_counts, dead_time_filter, detect
from .ccu import (
    BunchedStats,
    CcuConfig,
    CountsRecord,
    accumulate,
    bunched_event_stats,
    count_coincidences,
)
from .analysis import (
    FitResult,
    FringeData,
    G2Result,
    classical_reference,
    fit_envelope,
    g2_vs_incoherent,
    g2_zero,
    pixel_shift_align,
    poisson_gof,
    product_prediction,
    visibility,
)
from .trace_io import (
    RunManifest,
    Waveform,
    load_trace,
    read_fringe_csv,
    read_manifest,
    synthesize_waveform,
    threshold_count,
    write_fringe_csv,
    write_manifest,
)
