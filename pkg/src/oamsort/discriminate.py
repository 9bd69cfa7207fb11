"""Two-hypothesis discrimination: exact bounds, the optimal channelized
measurement, a real-space phase-contrast baseline, and multi-shot detection
statistics.

Hypothesis k in {0, 1} (prior p_k) prepares the electron in a channelized
state with weights q_{k,m} and radial profiles chi_{k,m}.  All radial linear
algebra uses the radial-grid inner product.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.stats import binom

from ._io import atomic_write_text
from .decompose import ChannelState, MixedState, OamDecomposition, RadialGrid
from .errors import DomainError, UnreachableThresholdError
from .fields import ComplexField, GridSpec

__all__ = [
    "Priors",
    "EQUAL_PRIORS",
    "ChannelMeasurement",
    "MeasurementScheme",
    "DiscriminationReport",
    "helstrom_pure",
    "helstrom_mixed",
    "optimal_scheme",
    "scheme_probability",
    "zernike_filter",
    "real_space_stats",
    "real_space_probability",
    "real_space_mixed_stats",
    "real_space_mixed_probability",
    "n_electron_probability",
    "n_min",
    "scheme_to_json",
    "report_csv",
    "report_to_json",
    "save_report",
]

# Below this distance from |<chi0|chi1>| = 1 the two profiles are treated as
# collinear and the channel reduces to a single radial direction.
COLLINEAR_TOL = 1e-12


@dataclass(frozen=True)
class Priors:
    """A priori probabilities of the two hypotheses."""

    p0: float
    p1: float

    def __post_init__(self):
        if self.p0 < 0 or self.p1 < 0 or abs(self.p0 + self.p1 - 1.0) > 1e-12:
            raise DomainError(f"priors ({self.p0}, {self.p1}) must be nonnegative and sum to 1")

    @property
    def largest(self) -> float:
        return max(self.p0, self.p1)

    def swapped(self) -> "Priors":
        return Priors(self.p1, self.p0)


EQUAL_PRIORS = Priors(0.5, 0.5)


def helstrom_pure(overlap_mag: float, priors: Priors = EQUAL_PRIORS) -> float:
    """Best single-shot success probability for two pure states:

        1/2 + 1/2*sqrt(1 - 4*p0*p1*|<psi0|psi1>|^2)

    Ranges from max(p0, p1) for identical states to 1 for orthogonal ones.
    """
    if not -1e-12 <= overlap_mag <= 1 + 1e-9:
        raise DomainError(f"overlap magnitude {overlap_mag} outside [0, 1]")
    ov = min(max(float(overlap_mag), 0.0), 1.0)
    return 0.5 + 0.5 * math.sqrt(max(0.0, 1.0 - 4.0 * priors.p0 * priors.p1 * ov * ov))


def _channel_table(a: ChannelState, b: ChannelState):
    """Union of the two states' channels as (m, qa, chia, qb, chib) rows,
    with q = 0 and profile None where a state is absent."""
    for m in sorted(set(a.ms) | set(b.ms)):
        ia, ib = a.index(m), b.index(m)
        qa = 0.0 if ia is None else float(a.weights[ia])
        qb = 0.0 if ib is None else float(b.weights[ib])
        chia = None if ia is None else a.profiles[ia]
        chib = None if ib is None else b.profiles[ib]
        yield m, qa, chia, qb, chib


def _check_compatible(a: ChannelState, b: ChannelState) -> None:
    if a.radial_grid != b.radial_grid:
        raise DomainError("states use different radial grids")
    if a.m_max != b.m_max:
        raise DomainError("states use different channel ranges")


def _tails(a: ChannelState, b: ChannelState) -> tuple[float, float]:
    """Probability the finite channel range fails to represent.

    Treated throughout as a tail shared by both states that carries no
    which-hypothesis information; it vanishes for complete decompositions.
    Without it, representation truncation would masquerade as (spurious)
    distinguishability: identical states would come out with overlap below
    one and a finite discrimination shot count.
    """
    return max(0.0, a.truncation_loss), max(0.0, b.truncation_loss)


def helstrom_mixed(a: ChannelState, b: ChannelState, priors: Priors = EQUAL_PRIORS) -> float:
    """Best single-shot success probability once inter-channel phases are
    erased:

        1/2 + 1/2*sum_m sqrt((p0 qa + p1 qb)^2 - 4 p0 p1 qa qb |<chia|chib>|^2)

    A channel carried by only one state degenerates to |p0 qa - p1 qb| under
    the same square root (its cross term vanishes), so absent channels need
    no special casing.  With all weight in one shared channel this reduces
    to :func:`helstrom_pure` of the profile overlap.

    Truncation tails enter as one more shared channel with unit profile
    overlap (see ``_tails``), so identical states give exactly 1/2 at any
    channel range and the bound stays consistent with
    :func:`scheme_probability`.
    """
    _check_compatible(a, b)
    p0, p1 = priors.p0, priors.p1
    rg = a.radial_grid
    mass = []
    terms = []
    for _m, qa, chia, qb, chib in _channel_table(a, b):
        g2 = 0.0
        if chia is not None and chib is not None:
            g2 = abs(rg.inner(chia, chib)) ** 2
        mass.append(p0 * qa + p1 * qb)
        terms.append(math.sqrt(max(0.0, (p0 * qa + p1 * qb) ** 2 - 4 * p0 * p1 * qa * qb * g2)))
    t0, t1 = _tails(a, b)
    mass.append(p0 * t0 + p1 * t1)
    terms.append(abs(p0 * t0 - p1 * t1))
    return 0.5 * math.fsum(mass) + 0.5 * math.fsum(terms)


@dataclass(frozen=True, eq=False)
class ChannelMeasurement:
    """Two-outcome radial measurement within one angular channel.

    ``basis`` rows are orthonormal (radial inner product) and span the
    subspace the measurement resolves; ``outcome0`` is the outcome-0
    operator in that basis (Hermitian, 0 <= outcome0 <= I); outcome 1 is its
    complement.  Radial directions orthogonal to the span are routed to
    ``complement_outcome`` (they carry no probability under either state).
    ``flatten_target`` is the radial profile the sorter's final element
    conjugates before diffraction; ``kind`` is "split" when the channel
    genuinely separates two directions and "whole" when the entire channel
    goes to one outcome.
    """

    basis: np.ndarray
    outcome0: np.ndarray
    complement_outcome: int
    flatten_target: np.ndarray
    kind: str


@dataclass(frozen=True, eq=False)
class MeasurementScheme:
    """Per-channel two-outcome measurements over a shared radial grid."""

    radial_grid: RadialGrid
    m_max: int
    channels: dict[int, ChannelMeasurement]


def optimal_scheme(a: ChannelState, b: ChannelState, priors: Priors = EQUAL_PRIORS) -> MeasurementScheme:
    """Construct the channelized measurement that attains :func:`helstrom_mixed`.

    In each shared channel the weighted difference operator

        p0 qa |chia><chia| - p1 qb |chib><chib|

    is diagonalized on the span of the two profiles (a 2x2 problem after
    Gram-Schmidt); outcome 0 projects on its nonnegative eigenspace.
    Collinear profiles (overlap within 1e-12 of 1) collapse to a single
    direction assigned to the hypothesis with the larger weighted channel
    probability, as does the orthogonal complement of the span.  Channels
    carried by a single state are assigned wholly to that hypothesis.
    """
    _check_compatible(a, b)
    rg = a.radial_grid
    p0, p1 = priors.p0, priors.p1
    channels: dict[int, ChannelMeasurement] = {}
    for m, qa, chia, qb, chib in _channel_table(a, b):
        wa, wb = p0 * qa, p1 * qb
        if chib is None:
            channels[m] = ChannelMeasurement(
                basis=chia[None, :],
                outcome0=np.array([[1.0 + 0j]]),
                complement_outcome=0,
                flatten_target=chia,
                kind="whole",
            )
            continue
        if chia is None:
            channels[m] = ChannelMeasurement(
                basis=chib[None, :],
                outcome0=np.array([[0.0 + 0j]]),
                complement_outcome=1,
                flatten_target=chib,
                kind="whole",
            )
            continue
        g = rg.inner(chia, chib)
        keep0 = wa >= wb
        if abs(1.0 - abs(g)) < COLLINEAR_TOL:
            channels[m] = ChannelMeasurement(
                basis=chia[None, :],
                outcome0=np.array([[1.0 + 0j if keep0 else 0.0 + 0j]]),
                complement_outcome=0 if keep0 else 1,
                flatten_target=chia,
                kind="whole",
            )
            continue
        resid = chib - g * chia
        e2 = resid / rg.norm(resid)
        y1 = np.array([g, rg.inner(e2, chib)])
        mat = -wb * np.outer(y1, y1.conj())
        mat[0, 0] += wa
        evals, evecs = np.linalg.eigh(mat)
        tol = 1e-14 * max(1.0, float(np.abs(evals).max()))
        nonneg = evals >= -tol
        proj0 = evecs[:, nonneg] @ evecs[:, nonneg].conj().T
        top = evecs[:, int(np.argmax(evals))]
        channels[m] = ChannelMeasurement(
            basis=np.vstack([chia, e2]),
            outcome0=proj0,
            complement_outcome=0 if keep0 else 1,
            flatten_target=top[0] * chia + top[1] * e2,
            kind="split",
        )
    return MeasurementScheme(radial_grid=rg, m_max=a.m_max, channels=channels)


def scheme_probability(
    scheme: MeasurementScheme, a: ChannelState, b: ChannelState, priors: Priors = EQUAL_PRIORS
) -> tuple[float, float, float]:
    """Single-shot statistics of a channelized two-outcome measurement.

    Every (channel, outcome) event is assigned to the hypothesis with the
    larger weighted probability of producing it (ties to hypothesis 0); the
    states' truncation tails form one extra unresolved event handled the
    same way.  Returns ``(p, s0, s1)``: the success probability and the
    conditional probabilities that each hypothesis lands in an event
    assigned to it.  Depends only on channel weights and profiles, so
    dephasing cannot change the result.
    """
    _check_compatible(a, b)
    if scheme.radial_grid != a.radial_grid:
        raise DomainError("scheme and states use different radial grids")
    rg = a.radial_grid
    w = rg.weights()
    p0, p1 = priors.p0, priors.p1
    p_parts: list[float] = []
    s0_parts: list[float] = []
    s1_parts: list[float] = []
    for m, qa, chia, qb, chib in _channel_table(a, b):
        ch = scheme.channels.get(m)
        if ch is None:
            # The measurement does not address this channel; no outcome is
            # recorded, which can only lower the success probability.
            continue
        pr = np.zeros((2, 2))  # [hypothesis, outcome]
        for k, (q, chi) in enumerate(((qa, chia), (qb, chib))):
            if chi is None or q == 0.0:
                continue
            y = (ch.basis.conj() * w) @ chi
            in_span = float(np.real(y.conj() @ y))
            in0 = float(np.real(y.conj() @ ch.outcome0 @ y))
            in0 = min(max(in0, 0.0), in_span)
            resid = max(0.0, 1.0 - in_span)
            pr[k, 0] = q * (in0 + (resid if ch.complement_outcome == 0 else 0.0))
            pr[k, 1] = q * (in_span - in0 + (resid if ch.complement_outcome == 1 else 0.0))
        for outcome in (0, 1):
            v0 = p0 * pr[0, outcome]
            v1 = p1 * pr[1, outcome]
            p_parts.append(max(v0, v1))
            if v0 >= v1:
                s0_parts.append(pr[0, outcome])
            else:
                s1_parts.append(pr[1, outcome])
    t0, t1 = _tails(a, b)
    p_parts.append(max(p0 * t0, p1 * t1))
    if p0 * t0 >= p1 * t1:
        s0_parts.append(t0)
    else:
        s1_parts.append(t1)
    clamp = lambda x: min(max(x, 0.0), 1.0)
    return clamp(math.fsum(p_parts)), clamp(math.fsum(s0_parts)), clamp(math.fsum(s1_parts))


def zernike_filter(field: ComplexField) -> ComplexField:
    """Ideal central phase plate: the zero-frequency sample of the field's
    Fourier transform is advanced by pi/2, converting weak phase modulation
    into intensity contrast."""
    spectrum = np.fft.fft2(field.amplitudes)
    spectrum[0, 0] *= 1j
    return ComplexField(field.grid, np.fft.ifft2(spectrum))


def _ml_pixel_stats(i0: np.ndarray, i1: np.ndarray, pixel_area: float, priors: Priors):
    mask = priors.p0 * i0 >= priors.p1 * i1
    s0 = min(max(float(i0[mask].sum() * pixel_area), 0.0), 1.0)
    s1 = min(max(float(i1[~mask].sum() * pixel_area), 0.0), 1.0)
    return priors.p0 * s0 + priors.p1 * s1, s0, s1


def real_space_stats(
    field0: ComplexField,
    field1: ComplexField,
    priors: Priors = EQUAL_PRIORS,
    zernike: bool = True,
) -> tuple[float, float, float]:
    """Maximum-likelihood pixel statistics of direct imaging.

    Each hypothesis produces a detector intensity (optionally behind the
    central phase plate); every pixel is assigned to the likelier
    hypothesis.  Returns ``(p, s0, s1)``.
    """
    if field0.grid != field1.grid:
        raise DomainError("fields are sampled on different grids")
    pixel_area = field0.grid.pixel_area
    images = []
    for f in (field0, field1):
        g = zernike_filter(f) if zernike else f
        i = np.abs(g.amplitudes) ** 2
        images.append(i / (i.sum() * pixel_area))
    return _ml_pixel_stats(images[0], images[1], pixel_area, priors)


def real_space_probability(
    field0: ComplexField,
    field1: ComplexField,
    priors: Priors = EQUAL_PRIORS,
    zernike: bool = True,
) -> float:
    return real_space_stats(field0, field1, priors, zernike)[0]


def _mixed_intensity(state: ChannelState, grid: GridSpec, center, zernike: bool) -> np.ndarray:
    """Detector intensity of a dephased state: channel intensities add
    incoherently.  Only the m = 0 channel has any zero-frequency amplitude,
    so it alone feels the central phase plate; the result is azimuthally
    uniform.  Normalized to unit integral."""
    cx, cy = center
    X, Y = grid.mesh()
    r = np.hypot(X - cx, Y - cy)
    inside = r <= state.radial_grid.r_max
    rr = r[inside]
    rc = state.radial_grid.centers()
    intensity = np.zeros((grid.n, grid.n))
    for i, m in enumerate(state.ms):
        radial = CubicSpline(rc, state.profiles[i])(rr)
        if m == 0 and zernike:
            channel_field = np.zeros((grid.n, grid.n), dtype=complex)
            channel_field[inside] = radial
            filtered = zernike_filter(ComplexField(grid, channel_field))
            intensity += state.weights[i] * np.abs(filtered.amplitudes) ** 2
        else:
            intensity[inside] += state.weights[i] * np.abs(radial) ** 2
    return intensity / (intensity.sum() * grid.pixel_area)


def real_space_mixed_stats(
    a: ChannelState,
    b: ChannelState,
    grid: GridSpec,
    center=(0.0, 0.0),
    priors: Priors = EQUAL_PRIORS,
    zernike: bool = True,
) -> tuple[float, float, float]:
    """Direct-imaging statistics for dephased states.

    Equivalent to averaging the pure-state intensity over a uniformly
    distributed rotation of the specimen, computed exactly channel by
    channel.  Returns ``(p, s0, s1)``.
    """
    _check_compatible(a, b)
    i0 = _mixed_intensity(a, grid, center, zernike)
    i1 = _mixed_intensity(b, grid, center, zernike)
    return _ml_pixel_stats(i0, i1, grid.pixel_area, priors)


def real_space_mixed_probability(
    a: ChannelState,
    b: ChannelState,
    grid: GridSpec,
    center=(0.0, 0.0),
    priors: Priors = EQUAL_PRIORS,
    zernike: bool = True,
) -> float:
    return real_space_mixed_stats(a, b, grid, center, priors, zernike)[0]


def n_electron_probability(s0: float, s1: float, priors: Priors = EQUAL_PRIORS, n: int = 1) -> float:
    """Success probability of the maximum-likelihood decision after ``n``
    independent shots.

    A shot lands in outcome 0 with probability s0 under hypothesis 0 and
    1 - s1 under hypothesis 1; the decision compares the prior-weighted
    binomial likelihoods of the observed outcome-0 count:

        P(n) = sum_k max{p0 C(n,k) s0^k (1-s0)^(n-k),
                         p1 C(n,k) (1-s1)^k s1^(n-k)}

    Evaluated in log space, so large ``n`` neither overflows nor
    underflows.
    """
    if not (0.0 <= s0 <= 1.0 and 0.0 <= s1 <= 1.0):
        raise DomainError(f"per-shot probabilities ({s0}, {s1}) outside [0, 1]")
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    k = np.arange(n + 1)
    with np.errstate(divide="ignore"):
        log_like0 = np.log(priors.p0) + binom.logpmf(k, n, s0)
        log_like1 = np.log(priors.p1) + binom.logpmf(k, n, 1.0 - s1)
    best = np.maximum(log_like0, log_like1)
    best = best[np.isfinite(best)]
    return min(1.0, float(np.exp(best).sum()))


def n_min(
    s0: float,
    s1: float,
    priors: Priors = EQUAL_PRIORS,
    threshold: float = 0.9,
    max_n: int = 1 << 24,
) -> int:
    """Smallest shot count whose success probability reaches ``threshold``.

    Doubles n until the (exactly evaluated) probability crosses the
    threshold, then bisects; the multi-shot probability is nondecreasing in
    n because extra shots can always be ignored.  Raises
    :class:`UnreachableThresholdError` when a single shot is no better than
    guessing the likelier prior (then no finite n suffices).
    """
    if not 0.5 < threshold < 1.0:
        raise DomainError(f"threshold must lie in (0.5, 1), got {threshold}")
    single = n_electron_probability(s0, s1, priors, 1)
    if single <= priors.largest + 1e-12:
        raise UnreachableThresholdError(
            f"single-shot probability {single:.6f} does not beat the prior {priors.largest:.6f}"
        )
    if single >= threshold:
        return 1
    n = 2
    while n_electron_probability(s0, s1, priors, n) < threshold:
        n *= 2
        if n > max_n:
            raise UnreachableThresholdError(
                f"threshold {threshold} not reached within {max_n} shots"
            )
    lo, hi = n // 2, n
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if n_electron_probability(s0, s1, priors, mid) >= threshold:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True, eq=False)
class DiscriminationReport:
    """Summary row for one specimen pair.

    Probabilities: the pure and dephased single-shot maxima, the real-space
    phase-plate baseline (dephased), the exact channelized-measurement value
    and its simulated physical-layer counterpart.  ``s0``/``s1`` are the
    per-shot conditional success probabilities of the channelized
    measurement; ``rs_s0``/``rs_s1`` the real-space ones.  ``n_min_*`` hold
    one entry per threshold (None when unreachable); doses are the
    channelized n_min divided by the illuminated area.
    """

    label: str
    overlap: complex
    p_max_pure: float
    p_max_mixed: float
    p_real_space: float
    p_oam_exact: float
    p_oam_physical: float
    s0: float
    s1: float
    rs_s0: float
    rs_s1: float
    thresholds: tuple[float, ...]
    n_min_oam: tuple[int | None, ...]
    n_min_rs: tuple[int | None, ...]
    illuminated_area: float

    @property
    def doses(self) -> tuple[float | None, ...]:
        return tuple(None if n is None else n / self.illuminated_area for n in self.n_min_oam)


def report_csv(reports: list[DiscriminationReport]) -> str:
    """Render reports as CSV, one row per pair.

    Columns: pair label (quoted, it contains a comma), overlap magnitude,
    p_max_pure, p_max_mixed, p_rs, p_oam, then per-threshold n_rs, n_oam,
    and dose columns.  Unreachable thresholds render as the string
    ``unreachable``.
    """
    if not reports:
        return ""
    thresholds = reports[0].thresholds
    cols = ["pair", "overlap", "p_max_pure", "p_max_mixed", "p_rs", "p_oam"]
    cols += [f"n_rs_{x:g}" for x in thresholds]
    cols += [f"n_oam_{x:g}" for x in thresholds]
    cols += [f"dose_{x:g}" for x in thresholds]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for rep in reports:
        if rep.thresholds != thresholds:
            raise DomainError("reports in one table must share thresholds")
        row = [
            rep.label,
            f"{abs(rep.overlap):.6f}",
            f"{rep.p_max_pure:.6f}",
            f"{rep.p_max_mixed:.6f}",
            f"{rep.p_real_space:.6f}",
            f"{rep.p_oam_exact:.6f}",
        ]
        row += ["unreachable" if n is None else str(n) for n in rep.n_min_rs]
        row += ["unreachable" if n is None else str(n) for n in rep.n_min_oam]
        row += ["unreachable" if d is None else f"{d:.6g}" for d in rep.doses]
        writer.writerow(row)
    return buf.getvalue()


def scheme_to_json(scheme: MeasurementScheme, regions: dict[int, np.ndarray] | None = None) -> dict:
    """JSON-ready description of a scheme: per channel the basis, outcome-0
    operator, complement routing, flattening target, and (optionally) the
    detector bins read as outcome 0."""
    doc = {
        "radial_grid": {"n_r": scheme.radial_grid.n_r, "r_max": scheme.radial_grid.r_max},
        "m_max": scheme.m_max,
        "channels": [],
    }
    for m in sorted(scheme.channels):
        ch = scheme.channels[m]
        entry = {
            "m": m,
            "kind": ch.kind,
            "complement_outcome": ch.complement_outcome,
            "basis_re": ch.basis.real.tolist(),
            "basis_im": ch.basis.imag.tolist(),
            "outcome0_re": np.asarray(ch.outcome0).real.tolist(),
            "outcome0_im": np.asarray(ch.outcome0).imag.tolist(),
            "flatten_target_re": ch.flatten_target.real.tolist(),
            "flatten_target_im": ch.flatten_target.imag.tolist(),
        }
        if regions is not None and m in regions:
            entry["outcome0_bins"] = np.flatnonzero(regions[m]).tolist()
        doc["channels"].append(entry)
    return doc


def report_to_json(report: DiscriminationReport, scheme_doc: dict | None = None) -> dict:
    doc = {
        "pair": report.label,
        "overlap_magnitude": abs(report.overlap),
        "overlap_phase": float(np.angle(report.overlap)),
        "p_max_pure": report.p_max_pure,
        "p_max_mixed": report.p_max_mixed,
        "p_real_space": report.p_real_space,
        "p_oam_exact": report.p_oam_exact,
        "p_oam_physical": report.p_oam_physical,
        "s0": report.s0,
        "s1": report.s1,
        "rs_s0": report.rs_s0,
        "rs_s1": report.rs_s1,
        "illuminated_area": report.illuminated_area,
        "thresholds": list(report.thresholds),
        "n_min_oam": list(report.n_min_oam),
        "n_min_rs": list(report.n_min_rs),
        "doses": list(report.doses),
    }
    if scheme_doc is not None:
        doc["scheme"] = scheme_doc
    return doc


def save_report(report: DiscriminationReport, path, scheme_doc: dict | None = None) -> None:
    atomic_write_text(path, json.dumps(report_to_json(report, scheme_doc), indent=1))
