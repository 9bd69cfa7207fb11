"""End-to-end analysis: specimens to fields, channel states, bounds, the
optimal scheme, the simulated detector, and a report row per pair."""

from __future__ import annotations

from dataclasses import dataclass

from .decompose import (
    OamDecomposition,
    default_radial_grid,
    oam_decompose,
    state_overlap,
)
from .discriminate import (
    DiscriminationReport,
    EQUAL_PRIORS,
    MeasurementScheme,
    Priors,
    helstrom_mixed,
    helstrom_pure,
    n_min,
    optimal_scheme,
    real_space_mixed_stats,
    scheme_probability,
)
from .errors import UnreachableThresholdError
from .fields import (
    ComplexField,
    ElectronParams,
    GridSpec,
    SpecimenModel,
    electron_params,
    interact,
    make_phantom,
    plane_wave_probe,
)
from .montecarlo import DetectionDistribution, success_curve
from .sorter import (
    DetectorImage,
    SorterConfig,
    DEFAULT_SORTER,
    ml_success_probability,
    outcome_zero_regions,
    physical_measurement_distribution,
    region_labels,
    region_shot_stats,
)

__all__ = ["PairAnalysis", "phantom_presets", "analyze_pair", "pair_success_curve"]

DEFAULT_GRID = GridSpec(512, 180.0)
DEFAULT_VOLTAGE_KV = 300.0
DEFAULT_THRESHOLDS = (0.9, 0.99)


def phantom_presets(grid: GridSpec = DEFAULT_GRID) -> dict[str, SpecimenModel]:
    """Three bundled test specimens: a loosely packed 7-fold ring (pa), a
    tightly packed 7-fold ring (pb), and a 6-fold variant of the loose one
    (pc).  pa/pb differ radially, pa/pc azimuthally."""
    return {
        "pa": make_phantom(grid, 7, blob_sigma=6.5, packing=0.30),
        "pb": make_phantom(grid, 7, blob_sigma=4.5, packing=1.00),
        "pc": make_phantom(grid, 6, blob_sigma=6.5, packing=0.30),
    }


@dataclass(frozen=True, eq=False)
class PairAnalysis:
    """Everything computed for one specimen pair."""

    report: DiscriminationReport
    field0: ComplexField
    field1: ComplexField
    dec0: OamDecomposition
    dec1: OamDecomposition
    scheme: MeasurementScheme
    image0: DetectorImage
    image1: DetectorImage
    regions: dict
    outcome0_cells: frozenset
    phys_s0: float
    phys_s1: float


def _try_n_min(s0: float, s1: float, priors: Priors, thresholds) -> tuple[int | None, ...]:
    out = []
    for x in thresholds:
        try:
            out.append(n_min(s0, s1, priors, x))
        except UnreachableThresholdError:
            out.append(None)
    return tuple(out)


def analyze_pair(
    spec0: SpecimenModel,
    spec1: SpecimenModel,
    params: ElectronParams | None = None,
    priors: Priors = EQUAL_PRIORS,
    label: str = "0,1",
    probe: ComplexField | None = None,
    m_max: int = 32,
    n_r: int = 256,
    thresholds=DEFAULT_THRESHOLDS,
    sorter: SorterConfig = DEFAULT_SORTER,
) -> PairAnalysis:
    """Run the full single-electron study for one specimen pair."""
    if params is None:
        params = electron_params(DEFAULT_VOLTAGE_KV)
    grid = spec0.grid
    if probe is None:
        probe = plane_wave_probe(grid)
    radial_grid = default_radial_grid(grid, n_r)

    field0 = interact(probe, spec0, params)
    field1 = interact(probe, spec1, params)
    dec0 = oam_decompose(field0, m_max=m_max, radial_grid=radial_grid)
    dec1 = oam_decompose(field1, m_max=m_max, radial_grid=radial_grid)

    overlap = state_overlap(dec0, dec1)
    p_pure = helstrom_pure(abs(overlap), priors)
    p_mixed = helstrom_mixed(dec0, dec1, priors)

    scheme = optimal_scheme(dec0, dec1, priors)
    p_oam, s0, s1 = scheme_probability(scheme, dec0, dec1, priors)

    p_rs, rs_s0, rs_s1 = real_space_mixed_stats(dec0, dec1, grid, priors=priors)

    image0 = physical_measurement_distribution(dec0, scheme, sorter)
    image1 = physical_measurement_distribution(dec1, scheme, sorter)
    p_phys = ml_success_probability(image0, image1, priors)
    regions = outcome_zero_regions(scheme, sorter)
    phys_s0, phys_s1 = region_shot_stats(image0, image1, regions)

    report = DiscriminationReport(
        label=label,
        overlap=overlap,
        p_max_pure=p_pure,
        p_max_mixed=p_mixed,
        p_real_space=p_rs,
        p_oam_exact=p_oam,
        p_oam_physical=p_phys,
        s0=s0,
        s1=s1,
        rs_s0=rs_s0,
        rs_s1=rs_s1,
        thresholds=tuple(thresholds),
        n_min_oam=_try_n_min(s0, s1, priors, thresholds),
        n_min_rs=_try_n_min(rs_s0, rs_s1, priors, thresholds),
        illuminated_area=grid.area,
    )
    return PairAnalysis(
        report=report,
        field0=field0,
        field1=field1,
        dec0=dec0,
        dec1=dec1,
        scheme=scheme,
        image0=image0,
        image1=image1,
        regions=regions,
        outcome0_cells=region_labels(regions),
        phys_s0=phys_s0,
        phys_s1=phys_s1,
    )


def pair_success_curve(
    analysis: PairAnalysis,
    doses,
    seed: int,
    trials: int = 400,
    priors: Priors = EQUAL_PRIORS,
    threads: int = 1,
) -> list[dict]:
    """Dose scan of the simulated experiment for an analyzed pair, using the
    physical detector's own per-shot statistics."""
    return success_curve(
        doses,
        analysis.report.illuminated_area,
        DetectionDistribution.from_detector_image(analysis.image0),
        DetectionDistribution.from_detector_image(analysis.image1),
        analysis.outcome0_cells,
        priors,
        analysis.phys_s0,
        analysis.phys_s1,
        seed,
        trials,
        threads,
    )
