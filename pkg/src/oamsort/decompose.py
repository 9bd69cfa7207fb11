"""Angular-momentum decomposition of transverse fields.

A field is resampled onto a polar raster about a chosen center and Fourier
analyzed along the azimuth.  Channel m then carries a weight (the
probability of finding the electron with angular momentum m, conditioned on
the analysis disc), a phase, and a unit-norm complex radial profile.
Weights are normalized to the probability actually captured by the polar
resampling, so they sum to one up to the reported truncation loss
regardless of quadrature details.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from ._io import atomic_write_text
from .errors import DomainError
from .fields import ComplexField, GridSpec

__all__ = [
    "RadialGrid",
    "OamDecomposition",
    "MixedState",
    "default_radial_grid",
    "oam_decompose",
    "recompose",
    "state_overlap",
    "dephase",
    "decomposition_to_json",
    "decomposition_from_json",
    "save_decomposition",
    "load_decomposition",
]

DEFAULT_M_MAX = 32
DEFAULT_N_R = 256

# Channels below this weight are dropped and folded into the truncation loss.
MIN_CHANNEL_WEIGHT = 1e-12

# Captured fraction below which a decomposition is flagged (not an error).
LOW_CAPTURE_FRACTION = 0.99


@dataclass(frozen=True)
class RadialGrid:
    """Uniform radial bins on (0, r_max] with polar quadrature weights r*dr.

    Inner products are sum(conj(u)*v*w); with these weights the discrete
    norm of a radial function approximates its integral against r dr.
    """

    n_r: int
    r_max: float

    def __post_init__(self):
        if self.n_r < 2:
            raise DomainError(f"need at least 2 radial bins, got {self.n_r}")
        if not self.r_max > 0:
            raise DomainError(f"r_max must be positive, got {self.r_max}")

    @property
    def dr(self) -> float:
        return self.r_max / self.n_r

    def centers(self) -> np.ndarray:
        return (np.arange(self.n_r) + 0.5) * self.dr

    def weights(self) -> np.ndarray:
        return self.centers() * self.dr

    def inner(self, u, v) -> complex:
        return complex(np.sum(np.conj(u) * v * self.weights()))

    def norm(self, u) -> float:
        return math.sqrt(abs(float(np.sum(np.abs(u) ** 2 * self.weights()))))


@dataclass(frozen=True, eq=False)
class OamDecomposition:
    """Channelized form of a field: per-m weight, phase, and radial profile.

    ``profiles[i]`` has unit norm under the radial-grid inner product and its
    first significant component is real positive; the phase stripped off by
    that convention is stored in ``phases[i]``.  ``weights`` sum to
    1 - truncation_loss.  ``captured_fraction`` is the share of the field's
    probability picked up inside the analysis disc; below 0.99 the
    ``low_capture`` flag is set.
    """

    radial_grid: RadialGrid
    ms: tuple[int, ...]
    weights: np.ndarray
    phases: np.ndarray
    profiles: np.ndarray
    m_max: int
    truncation_loss: float
    captured_fraction: float
    low_capture: bool

    def index(self, m: int) -> int | None:
        try:
            return self.ms.index(m)
        except ValueError:
            return None

    def weight(self, m: int) -> float:
        i = self.index(m)
        return 0.0 if i is None else float(self.weights[i])

    def profile(self, m: int) -> np.ndarray | None:
        i = self.index(m)
        return None if i is None else self.profiles[i]

    def phase(self, m: int) -> float:
        i = self.index(m)
        return 0.0 if i is None else float(self.phases[i])


@dataclass(frozen=True, eq=False)
class MixedState:
    """Dephased counterpart of a decomposition.

    Same channel weights and radial profiles, with the inter-channel phases
    erased.
    """

    radial_grid: RadialGrid
    ms: tuple[int, ...]
    weights: np.ndarray
    profiles: np.ndarray
    m_max: int
    truncation_loss: float
    captured_fraction: float
    low_capture: bool

    def index(self, m: int) -> int | None:
        try:
            return self.ms.index(m)
        except ValueError:
            return None

    def weight(self, m: int) -> float:
        i = self.index(m)
        return 0.0 if i is None else float(self.weights[i])

    def profile(self, m: int) -> np.ndarray | None:
        i = self.index(m)
        return None if i is None else self.profiles[i]


# Either representation works wherever only weights and profiles are read.
ChannelState = OamDecomposition | MixedState


def default_radial_grid(grid: GridSpec, n_r: int = DEFAULT_N_R) -> RadialGrid:
    """Radial grid reaching one pixel short of the inscribed half-width."""
    return RadialGrid(n_r, grid.fov / 2 * (1 - 2 / grid.n))


def _polar_samples(field: ComplexField, center, radial_grid: RadialGrid, n_theta: int):
    cx, cy = center
    half = field.grid.half_extent
    if abs(cx) > half or abs(cy) > half:
        raise DomainError(f"center {center} lies outside the field of view")
    margin = min(half - abs(cx), half - abs(cy))
    if radial_grid.r_max > margin * (1 + 1e-12):
        raise DomainError(
            f"r_max {radial_grid.r_max:.3f} A exceeds the distance {margin:.3f} A "
            "from the center to the grid edge"
        )
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    rc = radial_grid.centers()
    xs = cx + rc[:, None] * np.cos(theta)[None, :]
    ys = cy + rc[:, None] * np.sin(theta)[None, :]
    return field.sample(xs, ys)


def oam_decompose(
    field: ComplexField,
    center=(0.0, 0.0),
    m_max: int = DEFAULT_M_MAX,
    radial_grid: RadialGrid | None = None,
    n_theta: int | None = None,
) -> OamDecomposition:
    """Decompose ``field`` into angular-momentum channels about ``center``.

    The field is interpolated onto the polar raster, the azimuthal FFT
    yields one complex radial profile per m, and channels with weight below
    1e-12 are folded into the truncation loss.  Phases follow the convention
    described on :class:`OamDecomposition`: conventions are arbitrary here,
    but a fixed one makes rotation covariance testable.

    Raises :class:`DomainError` if the analysis disc does not fit in the
    grid.  A captured fraction below 0.99 only sets ``low_capture``.
    """
    if m_max < 0:
        raise DomainError("m_max must be nonnegative")
    if radial_grid is None:
        radial_grid = default_radial_grid(field.grid)
    if n_theta is None:
        n_theta = max(256, 8 * m_max)
    if n_theta <= 2 * m_max:
        raise DomainError(f"n_theta {n_theta} cannot resolve channels up to {m_max}")
    polar = _polar_samples(field, center, radial_grid, n_theta)
    w = radial_grid.weights()

    captured = float((np.abs(polar) ** 2 * w[:, None]).sum() * 2 * np.pi / n_theta)
    if captured <= 0:
        raise DomainError("field carries no weight inside the analysis disc")
    total = field.norm()
    coeffs = np.fft.fft(polar, axis=1) / n_theta
    radial_power = (np.abs(coeffs) ** 2 * w[:, None]).sum(axis=0)  # per azimuthal bin

    ms: list[int] = []
    weights: list[float] = []
    phases: list[float] = []
    profiles: list[np.ndarray] = []
    for m in range(-m_max, m_max + 1):
        col = m % n_theta
        share = float(2 * np.pi * radial_power[col] / captured)
        if share < MIN_CHANNEL_WEIGHT:
            continue
        vec = coeffs[:, col]
        chi = vec / math.sqrt(float(radial_power[col]))
        lead = np.flatnonzero(np.abs(chi) > 1e-12 * np.abs(chi).max())[0]
        alpha = float(np.angle(chi[lead]))
        ms.append(m)
        weights.append(share)
        phases.append(alpha)
        profiles.append(chi * np.exp(-1j * alpha))
    if not ms:
        raise DomainError("no channel exceeds the minimum weight")
    kept = math.fsum(weights)
    frac = captured / total
    return OamDecomposition(
        radial_grid=radial_grid,
        ms=tuple(ms),
        weights=np.array(weights),
        phases=np.array(phases),
        profiles=np.vstack(profiles),
        m_max=m_max,
        truncation_loss=1.0 - kept,
        captured_fraction=frac,
        low_capture=frac < LOW_CAPTURE_FRACTION,
    )


def recompose(dec: OamDecomposition, grid: GridSpec, center=(0.0, 0.0)) -> ComplexField:
    """Resample a decomposition back onto a Cartesian grid.

    Channel i contributes sqrt(weight)*exp(i*phase)*chi(r)*e^{i m theta}
    over sqrt(2*pi), the normalized two-dimensional channel mode, so a
    decomposition without truncation recomposes to unit norm.  Radial
    profiles are interpolated with cubic splines; the result is zero outside
    the decomposition's analysis disc.
    """
    cx, cy = center
    X, Y = grid.mesh()
    dx = X - cx
    dy = Y - cy
    r = np.hypot(dx, dy)
    inside = r <= dec.radial_grid.r_max
    rr = r[inside]
    tt = np.arctan2(dy, dx)[inside]
    rc = dec.radial_grid.centers()
    acc = np.zeros(rr.shape, dtype=complex)
    for i, m in enumerate(dec.ms):
        radial = CubicSpline(rc, dec.profiles[i])(rr)
        acc += (
            math.sqrt(dec.weights[i] / (2.0 * np.pi))
            * np.exp(1j * dec.phases[i])
            * radial
            * np.exp(1j * m * tt)
        )
    out = np.zeros((grid.n, grid.n), dtype=complex)
    out[inside] = acc
    return ComplexField(grid, out)


def _check_same_support(a, b) -> None:
    if a.radial_grid != b.radial_grid:
        raise DomainError("decompositions use different radial grids")
    if a.m_max != b.m_max:
        raise DomainError("decompositions use different channel ranges")


def state_overlap(a: OamDecomposition, b: OamDecomposition) -> complex:
    """Channel-sum overlap sum_m sqrt(qa*qb) e^{i(beta-alpha)} <chi_a|chi_b>.

    Equals the Cartesian overlap integral of the underlying fields to the
    accuracy of the polar resampling (for fields supported inside the disc).
    The truncation tails count as perfectly overlapping and contribute
    sqrt(ta*tb) along the channel sum's own phase (their true relative phase
    is not representable), so identical decompositions overlap to exactly 1
    at any channel range and a global phase on either field cannot change
    the magnitude.
    """
    _check_same_support(a, b)
    total = 0j
    for i, m in enumerate(a.ms):
        j = b.index(m)
        if j is None:
            continue
        amp = math.sqrt(float(a.weights[i] * b.weights[j]))
        rel = np.exp(1j * (b.phases[j] - a.phases[i]))
        total += amp * rel * a.radial_grid.inner(a.profiles[i], b.profiles[j])
    tail = math.sqrt(max(0.0, a.truncation_loss) * max(0.0, b.truncation_loss))
    if total == 0:
        return complex(tail)
    return total * (1.0 + tail / abs(total))


def dephase(state: ChannelState) -> MixedState:
    """Erase inter-channel phases, keeping weights and radial profiles.

    Idempotent: a :class:`MixedState` passes through unchanged.
    """
    if isinstance(state, MixedState):
        return state
    return MixedState(
        radial_grid=state.radial_grid,
        ms=state.ms,
        weights=state.weights,
        profiles=state.profiles,
        m_max=state.m_max,
        truncation_loss=state.truncation_loss,
        captured_fraction=state.captured_fraction,
        low_capture=state.low_capture,
    )


def decomposition_to_json(state: ChannelState) -> dict:
    """JSON-ready dict: grid metadata plus per-channel m, weight, phase, and
    real/imag radial profile arrays (phases omitted for dephased states)."""
    doc = {
        "kind": "dephased" if isinstance(state, MixedState) else "pure",
        "radial_grid": {"n_r": state.radial_grid.n_r, "r_max": state.radial_grid.r_max},
        "m_max": state.m_max,
        "truncation_loss": state.truncation_loss,
        "captured_fraction": state.captured_fraction,
        "low_capture": state.low_capture,
        "channels": [],
    }
    for i, m in enumerate(state.ms):
        entry = {
            "m": m,
            "weight": float(state.weights[i]),
            "profile_re": state.profiles[i].real.tolist(),
            "profile_im": state.profiles[i].imag.tolist(),
        }
        if not isinstance(state, MixedState):
            entry["phase"] = float(state.phases[i])
        doc["channels"].append(entry)
    return doc


def decomposition_from_json(doc: dict) -> ChannelState:
    grid = RadialGrid(int(doc["radial_grid"]["n_r"]), float(doc["radial_grid"]["r_max"]))
    ms = tuple(int(ch["m"]) for ch in doc["channels"])
    weights = np.array([ch["weight"] for ch in doc["channels"]])
    profiles = np.vstack(
        [np.array(ch["profile_re"]) + 1j * np.array(ch["profile_im"]) for ch in doc["channels"]]
    )
    common = dict(
        radial_grid=grid,
        ms=ms,
        weights=weights,
        profiles=profiles,
        m_max=int(doc["m_max"]),
        truncation_loss=float(doc["truncation_loss"]),
        captured_fraction=float(doc["captured_fraction"]),
        low_capture=bool(doc["low_capture"]),
    )
    if doc["kind"] == "dephased":
        return MixedState(**common)
    phases = np.array([ch["phase"] for ch in doc["channels"]])
    return OamDecomposition(phases=phases, **common)


def save_decomposition(state: ChannelState, path) -> None:
    atomic_write_text(path, json.dumps(decomposition_to_json(state), indent=1))


def load_decomposition(path) -> ChannelState:
    with open(path, "r", encoding="utf-8") as fh:
        return decomposition_from_json(json.load(fh))
