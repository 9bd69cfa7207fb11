"""Single-electron discrimination of molecular structures in an electron
microscope, simulated end to end: phase-object interaction, angular-momentum
decomposition, exact discrimination bounds, the generalized sorter that
attains them, a real-space phase-plate baseline, and dose-limited Monte
Carlo detection.
"""

from .decompose import (
    MixedState,
    OamDecomposition,
    RadialGrid,
    default_radial_grid,
    dephase,
    load_decomposition,
    oam_decompose,
    recompose,
    save_decomposition,
    state_overlap,
)
from .discriminate import (
    EQUAL_PRIORS,
    ChannelMeasurement,
    DiscriminationReport,
    MeasurementScheme,
    Priors,
    helstrom_mixed,
    helstrom_pure,
    n_electron_probability,
    n_min,
    optimal_scheme,
    real_space_mixed_probability,
    real_space_mixed_stats,
    real_space_probability,
    real_space_stats,
    report_csv,
    scheme_probability,
    zernike_filter,
)
from .errors import DomainError, FormatError, UnreachableThresholdError
from .fields import (
    ComplexField,
    ElectronParams,
    GridSpec,
    SpecimenModel,
    electron_params,
    interact,
    load_potential_map,
    make_phantom,
    plane_wave_probe,
    save_potential_map,
)
from .montecarlo import (
    DetectionDistribution,
    ExperimentConfig,
    OutcomeHistogram,
    classify,
    empirical_success,
    sample_detection,
    success_curve,
    trial_rng,
)
from .pipeline import PairAnalysis, analyze_pair, pair_success_curve, phantom_presets
from .sorter import (
    DetectorImage,
    LogPolarField,
    SorterConfig,
    channel_weight,
    log_polar_rewrap,
    log_polar_unwrap,
    ml_success_probability,
    outcome_zero_regions,
    phase_flatten,
    physical_measurement_distribution,
    radial_diffract,
    region_labels,
    region_shot_stats,
    separate_channels,
)

__version__ = "0.1.0"
