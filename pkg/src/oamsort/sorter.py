"""Idealized generalized sorter: log-polar unwrap, channel separation,
phase flattening, radial diffraction, and synthetic detector images.

The optical elements are modeled as exact coordinate/phase transforms (no
propagation between them), so the only losses are the annulus cut and
channel truncation.  Detector intensities depend on channel weights and
radial profiles alone; a state and its dephased counterpart are therefore
indistinguishable here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline, RectBivariateSpline

from ._io import atomic_write_text, save_grayscale_png
from .decompose import ChannelState, default_radial_grid
from .discriminate import MeasurementScheme, Priors, EQUAL_PRIORS
from .errors import DomainError
from .fields import ComplexField, GridSpec

__all__ = [
    "SorterConfig",
    "LogPolarField",
    "DetectorImage",
    "log_polar_unwrap",
    "log_polar_rewrap",
    "separate_channels",
    "channel_weight",
    "phase_flatten",
    "radial_diffract",
    "physical_measurement_distribution",
    "outcome_zero_regions",
    "region_labels",
    "region_shot_stats",
    "ml_success_probability",
]


@dataclass(frozen=True)
class SorterConfig:
    """Geometry of the simulated sorter and its detector.

    ``r_min_steps`` sets the annulus inner edge in radial-grid steps (the
    log coordinate diverges at r = 0).  Each detector bin aggregates
    ``bin_factor`` adjacent radial-frequency samples, mimicking a finite
    detector pixel.  ``capture_fraction`` is the share of a channel's own
    flattened diffraction spot that its outcome-0 window must cover.
    """

    n_u: int = 256
    n_v: int = 256
    r_min_steps: float = 2.0
    bin_factor: int = 8
    capture_fraction: float = 0.9

    def __post_init__(self):
        if self.n_u < 2 or self.n_v < 2:
            raise DomainError("log-polar grid needs at least 2 samples per axis")
        if self.r_min_steps <= 0:
            raise DomainError("r_min_steps must be positive")
        if self.bin_factor < 1 or self.n_u % self.bin_factor:
            raise DomainError("bin_factor must divide n_u")
        if not 0 < self.capture_fraction < 1:
            raise DomainError("capture_fraction must lie in (0, 1)")


DEFAULT_SORTER = SorterConfig()


@dataclass(frozen=True, eq=False)
class LogPolarField:
    """Field resampled to (u = ln r, v = theta).

    Samples carry the r Jacobian, so sum(|values|^2)*du*dv equals the
    probability on the annulus r_min <= r <= r_max.
    """

    values: np.ndarray  # (n_u, n_v)
    u_min: float
    u_max: float

    @property
    def n_u(self) -> int:
        return self.values.shape[0]

    @property
    def n_v(self) -> int:
        return self.values.shape[1]

    @property
    def du(self) -> float:
        return (self.u_max - self.u_min) / self.n_u

    @property
    def dv(self) -> float:
        return 2.0 * np.pi / self.n_v

    def us(self) -> np.ndarray:
        return self.u_min + (np.arange(self.n_u) + 0.5) * self.du

    def vs(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_v) / self.n_v

    def weight(self) -> float:
        return float((np.abs(self.values) ** 2).sum() * self.du * self.dv)


def log_polar_unwrap(
    field: ComplexField,
    center=(0.0, 0.0),
    r_min: float | None = None,
    r_max: float | None = None,
    n_u: int = 256,
    n_v: int = 256,
) -> LogPolarField:
    """Resample ``field`` onto the (ln r, theta) raster.

    The samples are weighted by r so the map preserves probability on the
    annulus; an azimuthal winding e^{i m theta} becomes a plane wave along v
    with frequency m.
    """
    grid = field.grid
    if r_min is None:
        r_min = 2.0 * grid.pixel
    if r_max is None:
        r_max = default_radial_grid(grid).r_max
    cx, cy = center
    half = grid.half_extent
    margin = min(half - abs(cx), half - abs(cy))
    if not 0 < r_min < r_max:
        raise DomainError(f"degenerate annulus: r_min {r_min}, r_max {r_max}")
    if r_max > margin * (1 + 1e-12):
        raise DomainError(f"r_max {r_max:.3f} A exceeds the grid margin {margin:.3f} A")
    u_min, u_max = math.log(r_min), math.log(r_max)
    du = (u_max - u_min) / n_u
    rs = np.exp(u_min + (np.arange(n_u) + 0.5) * du)
    vs = 2.0 * np.pi * np.arange(n_v) / n_v
    xs = cx + rs[:, None] * np.cos(vs)[None, :]
    ys = cy + rs[:, None] * np.sin(vs)[None, :]
    values = field.sample(xs, ys) * rs[:, None]
    return LogPolarField(values, u_min, u_max)


def log_polar_rewrap(lp: LogPolarField, grid: GridSpec, center=(0.0, 0.0)) -> ComplexField:
    """Inverse of :func:`log_polar_unwrap`: resample back onto a Cartesian
    grid (zero outside the annulus)."""
    pad = 3  # azimuthal periodic padding for the spline
    vals = np.concatenate([lp.values[:, -pad:], lp.values, lp.values[:, :pad]], axis=1)
    vs = lp.vs()
    vs_padded = np.concatenate([vs[-pad:] - 2 * np.pi, vs, vs[:pad] + 2 * np.pi])
    sr = RectBivariateSpline(lp.us(), vs_padded, vals.real, kx=3, ky=3)
    si = RectBivariateSpline(lp.us(), vs_padded, vals.imag, kx=3, ky=3)
    cx, cy = center
    X, Y = grid.mesh()
    dx = X - cx
    dy = Y - cy
    r = np.hypot(dx, dy)
    inside = (r >= math.exp(lp.u_min)) & (r <= math.exp(lp.u_max))
    u = np.log(r[inside])
    v = np.mod(np.arctan2(dy, dx)[inside], 2.0 * np.pi)
    out = np.zeros((grid.n, grid.n), dtype=complex)
    out[inside] = (sr.ev(u, v) + 1j * si.ev(u, v)) / r[inside]
    return ComplexField(grid, out)


def separate_channels(lp: LogPolarField, m_max: int | None = None) -> dict[int, np.ndarray]:
    """Azimuthal Fourier analysis: channel m's complex profile over u.

    The profiles are invariant in modulus under cyclic shifts of the v
    samples; their weights (see :func:`channel_weight`) match the
    decomposition weights of the same field up to resampling error.
    """
    if m_max is None:
        m_max = lp.n_v // 2 - 1
    if m_max > lp.n_v // 2 - 1:
        raise DomainError(f"m_max {m_max} not resolvable with n_v {lp.n_v}")
    coeffs = np.fft.fft(lp.values, axis=1) / lp.n_v
    return {m: coeffs[:, m % lp.n_v] for m in range(-m_max, m_max + 1)}


def channel_weight(profile: np.ndarray, du: float) -> float:
    """Probability carried by one separated channel profile."""
    return float((np.abs(profile) ** 2).sum() * du * 2.0 * np.pi)


def phase_flatten(profile: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Multiply ``profile`` by the conjugate phase of ``target``.

    Bins where the target vanishes keep phase factor 1 (np.angle(0) is 0).
    The modulus is untouched; flattening a profile against itself leaves a
    nonnegative real profile that diffracts to a compact central spot.
    """
    return profile * np.exp(-1j * np.angle(target))


def radial_diffract(profile: np.ndarray, du: float = 1.0, bins: int | None = None) -> np.ndarray:
    """Intensity of the Fourier transform along u, zero frequency centered.

    Normalized so the output sums to the profile's weight
    sum(|profile|^2)*du.  With ``bins`` < len(profile), adjacent frequency
    samples are aggregated into coarser detector bins, keeping the zero
    frequency centered in the middle bin.
    """
    n = len(profile)
    intensity = np.abs(np.fft.fftshift(np.fft.fft(profile, norm="ortho"))) ** 2 * du
    if bins is not None and bins != n:
        if n % bins:
            raise DomainError(f"{bins} detector bins do not divide {n} frequency samples")
        factor = n // bins
        intensity = np.roll(intensity, factor // 2).reshape(bins, factor).sum(axis=1)
    return intensity


@dataclass(frozen=True, eq=False)
class DetectorImage:
    """Per-channel radial-frequency intensities behind the sorter.

    ``intensities[i, b]`` is the probability that an electron lands in
    detector bin b of channel ``ms[i]``.  The total is at most 1; the
    shortfall (``truncation_loss``) is probability lost outside the
    simulated annulus and channel range.
    """

    ms: tuple[int, ...]
    intensities: np.ndarray

    @property
    def n_bins(self) -> int:
        return self.intensities.shape[1]

    @property
    def center_bin(self) -> int:
        return self.n_bins // 2

    @property
    def truncation_loss(self) -> float:
        return 1.0 - float(self.intensities.sum())

    def cell_labels(self) -> list[tuple[int, int]]:
        return [(m, b) for m in self.ms for b in range(self.n_bins)]

    def cell_probs(self) -> np.ndarray:
        return self.intensities.reshape(-1)

    def to_array(self) -> np.ndarray:
        """2D layout with channels side by side (bins down, m across)."""
        return self.intensities.T.copy()

    def save_csv(self, path) -> None:
        lines = ["m,bin,intensity"]
        for i, m in enumerate(self.ms):
            for b in range(self.n_bins):
                lines.append(f"{m},{b},{self.intensities[i, b]:.17g}")
        atomic_write_text(path, "\n".join(lines) + "\n")

    def save_png(self, path) -> None:
        save_grayscale_png(self.to_array(), path)


def _log_grid(radial_grid, config: SorterConfig):
    r_min = config.r_min_steps * radial_grid.dr
    u_min, u_max = math.log(r_min), math.log(radial_grid.r_max)
    du = (u_max - u_min) / config.n_u
    rs = np.exp(u_min + (np.arange(config.n_u) + 0.5) * du)
    return rs, du


def _to_log_profile(radial_grid, values: np.ndarray, rs: np.ndarray) -> np.ndarray:
    """Transport a radial-grid profile to the log-radial raster, carrying
    the r Jacobian."""
    return rs * CubicSpline(radial_grid.centers(), values)(rs)


def physical_measurement_distribution(
    state: ChannelState, scheme: MeasurementScheme, config: SorterConfig = DEFAULT_SORTER
) -> DetectorImage:
    """Detector statistics of the flatten-then-diffract layer for one state.

    The image layout follows the scheme's channel set (the instrument is
    configured per channel), so images of different states under one scheme
    are directly comparable; channels the state does not populate stay dark.
    Each populated channel's radial profile is transported to the log-radial
    raster, phase flattened against the scheme's target for that channel,
    and diffracted onto the binned detector, scaled by the channel weight.
    State probability in channels outside the scheme goes unrecorded and
    shows up in the image's truncation loss.
    """
    if state.radial_grid != scheme.radial_grid:
        raise DomainError("state and scheme use different radial grids")
    rs, du = _log_grid(state.radial_grid, config)
    n_bins = config.n_u // config.bin_factor
    ms = tuple(sorted(scheme.channels))
    intensities = np.zeros((len(ms), n_bins))
    for i, m in enumerate(ms):
        j = state.index(m)
        if j is None:
            continue
        log_profile = _to_log_profile(state.radial_grid, state.profiles[j], rs)
        log_target = _to_log_profile(state.radial_grid, scheme.channels[m].flatten_target, rs)
        flattened = phase_flatten(log_profile, log_target)
        intensities[i] = state.weights[j] * radial_diffract(flattened, du, bins=n_bins)
    return DetectorImage(ms=ms, intensities=intensities)


def outcome_zero_regions(
    scheme: MeasurementScheme, config: SorterConfig = DEFAULT_SORTER
) -> dict[int, np.ndarray]:
    """Detector-bin masks read as outcome 0, channel by channel.

    A split channel gets the smallest centered window of detector bins
    capturing at least ``capture_fraction`` of its own flattened target's
    diffraction (the compact spot the flattening element produces).  A
    whole-channel measurement gets an all-True or all-False mask according
    to the hypothesis it is routed to.
    """
    rs, du = _log_grid(scheme.radial_grid, config)
    n_bins = config.n_u // config.bin_factor
    center = n_bins // 2
    regions: dict[int, np.ndarray] = {}
    for m, ch in scheme.channels.items():
        mask = np.zeros(n_bins, dtype=bool)
        if ch.kind == "whole":
            mask[:] = ch.complement_outcome == 0
            regions[m] = mask
            continue
        log_target = _to_log_profile(scheme.radial_grid, ch.flatten_target, rs)
        spot = radial_diffract(phase_flatten(log_target, log_target), du, bins=n_bins)
        goal = config.capture_fraction * float(spot.sum())
        half = 0
        while spot[max(0, center - half) : center + half + 1].sum() < goal and half < n_bins:
            half += 1
        mask[max(0, center - half) : center + half + 1] = True
        regions[m] = mask
    return regions


def region_labels(regions: dict[int, np.ndarray]) -> frozenset[tuple[int, int]]:
    """Flatten region masks into a set of (m, bin) cell labels."""
    return frozenset((m, b) for m, mask in regions.items() for b in np.flatnonzero(mask))


def region_shot_stats(
    image0: DetectorImage, image1: DetectorImage, regions: dict[int, np.ndarray]
) -> tuple[float, float]:
    """Per-shot conditional probabilities (s0, s1) of the region readout,
    conditioned on the electron being recorded at all."""
    stats = []
    for which, img in ((0, image0), (1, image1)):
        total = float(img.intensities.sum())
        inside = 0.0
        for i, m in enumerate(img.ms):
            mask = regions.get(m)
            if mask is not None:
                inside += float(img.intensities[i][mask].sum())
        share = inside / total
        stats.append(share if which == 0 else 1.0 - share)
    return stats[0], stats[1]


def ml_success_probability(
    image0: DetectorImage, image1: DetectorImage, priors: Priors = EQUAL_PRIORS
) -> float:
    """Success probability of maximum-likelihood assignment of every
    detector cell.  Electrons outside the recorded cells are discarded, so
    this can only underestimate an ideal measurement."""
    if image0.ms != image1.ms or image0.intensities.shape != image1.intensities.shape:
        raise DomainError("detector images have different layouts")
    return float(
        np.maximum(priors.p0 * image0.intensities, priors.p1 * image1.intensities).sum()
    )
