"""Grids, transverse wave fields, specimen models, and the beam interaction.

Units throughout: lengths in angstrom, projected potential in volt*angstrom,
phases in radians.  A field's total probability is sum(|psi|^2)*pixel_area,
so a normalized field integrates to one over its field of view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.constants as const
from scipy.interpolate import RectBivariateSpline

from ._io import atomic_write_text
from .errors import DomainError, FormatError

__all__ = [
    "GridSpec",
    "ComplexField",
    "ElectronParams",
    "SpecimenModel",
    "electron_params",
    "plane_wave_probe",
    "make_phantom",
    "interact",
    "save_potential_map",
    "load_potential_map",
]

PMAP_MAGIC = "PMAP1"


@dataclass(frozen=True)
class GridSpec:
    """Square sampling grid: ``n`` pixels per side covering ``fov`` angstrom.

    Pixel centers are placed symmetrically about the origin, so the sample
    set maps onto itself under quarter turns and reflections.
    """

    n: int
    fov: float

    def __post_init__(self):
        if self.n < 16 or self.n & (self.n - 1):
            raise DomainError(f"grid side must be a power of two >= 16, got {self.n}")
        if not self.fov > 0:
            raise DomainError(f"field of view must be positive, got {self.fov}")

    @property
    def pixel(self) -> float:
        return self.fov / self.n

    @property
    def pixel_area(self) -> float:
        return self.pixel**2

    @property
    def area(self) -> float:
        """Illuminated area of the full field of view, angstrom^2."""
        return self.fov**2

    @property
    def half_extent(self) -> float:
        """Distance from the origin to the outermost pixel center."""
        return (self.n - 1) / 2 * self.pixel

    def axis(self) -> np.ndarray:
        return (np.arange(self.n) - (self.n - 1) / 2) * self.pixel

    def mesh(self):
        """(X, Y) coordinate arrays; rows run along y, columns along x."""
        ax = self.axis()
        return np.meshgrid(ax, ax)


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Complex transverse wave function sampled on a :class:`GridSpec`.

    Immutable: the amplitude array is made read-only on construction.
    """

    grid: GridSpec
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.ascontiguousarray(self.amplitudes, dtype=complex)
        if amp.shape != (self.grid.n, self.grid.n):
            raise DomainError(
                f"amplitude shape {amp.shape} does not match grid {self.grid.n}x{self.grid.n}"
            )
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)

    def norm(self) -> float:
        """Total probability sum(|psi|^2)*pixel_area."""
        return float((np.abs(self.amplitudes) ** 2).sum() * self.grid.pixel_area)

    def normalized(self) -> "ComplexField":
        w = self.norm()
        if w <= 0:
            raise DomainError("cannot normalize a field with zero weight")
        return ComplexField(self.grid, self.amplitudes / math.sqrt(w))

    def _splines(self):
        cache = getattr(self, "_spline_cache", None)
        if cache is None:
            ax = self.grid.axis()
            cache = (
                RectBivariateSpline(ax, ax, self.amplitudes.real, kx=3, ky=3),
                RectBivariateSpline(ax, ax, self.amplitudes.imag, kx=3, ky=3),
            )
            object.__setattr__(self, "_spline_cache", cache)
        return cache

    def sample(self, x, y) -> np.ndarray:
        """Evaluate the field at arbitrary points by bicubic interpolation."""
        sr, si = self._splines()
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = sr.ev(y.ravel(), x.ravel()) + 1j * si.ev(y.ravel(), x.ravel())
        return out.reshape(x.shape)


@dataclass(frozen=True)
class ElectronParams:
    """Relativistic beam parameters for one accelerating voltage.

    voltage in kV, wavelength in angstrom, sigma (the phase-object
    interaction constant) in rad/(volt*angstrom).
    """

    voltage: float
    wavelength: float
    gamma: float
    sigma: float

    def __post_init__(self):
        if not (self.wavelength > 0 and self.gamma >= 1 and self.sigma > 0):
            raise DomainError("inconsistent electron parameters")


def electron_params(voltage: float) -> ElectronParams:
    """Beam parameters at ``voltage`` kilovolt (1 to 3000).

    The wavelength follows the relativistic de Broglie relation
    h/sqrt(2*m0*eU*(1 + eU/(2*m0*c^2))) and the interaction constant is
    2*pi*m0*gamma*e*lambda/h^2 expressed per volt*angstrom of projected
    potential (the electron charge converts volts to energy).
    """
    if not 1.0 <= voltage <= 3000.0:
        raise DomainError(f"voltage must lie in [1, 3000] kV, got {voltage}")
    e_u = const.e * voltage * 1e3
    rest = const.m_e * const.c**2
    gamma = 1.0 + e_u / rest
    lam = const.h / math.sqrt(2.0 * const.m_e * e_u * (1.0 + e_u / (2.0 * rest)))
    sigma = 2.0 * math.pi * const.m_e * gamma * const.e * lam / const.h**2 * 1e-10
    return ElectronParams(voltage, lam * 1e10, gamma, sigma)


@dataclass(frozen=True, eq=False)
class SpecimenModel:
    """Projected electrostatic potential plus an optional amplitude mask.

    ``potential`` is in volt*angstrom; ``amplitude`` (if given) lies in
    [0, 1] and defaults to fully transparent.
    """

    grid: GridSpec
    potential: np.ndarray
    amplitude: np.ndarray | None = None

    def __post_init__(self):
        pot = np.ascontiguousarray(self.potential, dtype=float)
        if pot.shape != (self.grid.n, self.grid.n):
            raise DomainError(
                f"potential shape {pot.shape} does not match grid {self.grid.n}x{self.grid.n}"
            )
        if not np.isfinite(pot).all():
            raise DomainError("potential contains non-finite values")
        pot.setflags(write=False)
        object.__setattr__(self, "potential", pot)
        if self.amplitude is not None:
            amp = np.ascontiguousarray(self.amplitude, dtype=float)
            if amp.shape != pot.shape:
                raise DomainError("amplitude mask shape does not match the grid")
            if not np.isfinite(amp).all() or amp.min() < 0 or amp.max() > 1:
                raise DomainError("amplitude mask values must lie in [0, 1]")
            amp.setflags(write=False)
            object.__setattr__(self, "amplitude", amp)


def plane_wave_probe(grid: GridSpec, radius: float | None = None, rolloff: float | None = None) -> ComplexField:
    """Unit-normalized plane-wave illumination apodized to a disc.

    The amplitude is 1 inside ``radius - rolloff``, falls to 0 at ``radius``
    with a cosine-squared shoulder, and vanishes outside.  The defaults
    (radius 17/36 of the field of view, rolloff fov/20) keep the beam fully
    inside the default polar analysis disc, so the downstream decomposition
    captures essentially all of the probability.
    """
    if radius is None:
        radius = grid.fov * 17.0 / 36.0
    if rolloff is None:
        rolloff = grid.fov / 20.0
    if not 0 < rolloff < radius or radius > grid.half_extent:
        raise DomainError("probe apodization does not fit inside the grid")
    X, Y = grid.mesh()
    r = np.hypot(X, Y)
    amp = np.ones_like(r)
    shoulder = (r > radius - rolloff) & (r < radius)
    amp[shoulder] = np.cos(0.5 * np.pi * (r[shoulder] - (radius - rolloff)) / rolloff) ** 2
    amp[r >= radius] = 0.0
    return ComplexField(grid, amp.astype(complex)).normalized()


# Each symmetry sector of a phantom carries three radially offset Gaussian
# blobs; the offsets are expressed in units of the packing spread.
_SUB_BLOB_OFFSETS = (-1.0, 0.0, 1.0)
_SUB_BLOB_WEIGHTS = (0.75, 1.0, 0.75)


def make_phantom(
    grid: GridSpec,
    n_fold: int,
    ring_radius: float = 55.0,
    blob_sigma: float = 6.0,
    packing: float = 0.45,
    peak_potential: float = 380.0,
    azimuth: float = 0.0,
) -> SpecimenModel:
    """Test specimen built from Gaussian blobs on a ring.

    Each of the ``n_fold`` sectors carries three radially offset blobs whose
    spread scales with ``1 - packing``: packing 1 stacks all mass on the
    ring (a tightly packed profile), smaller values smear it radially
    (a loosely packed profile).  Blob centers are placed analytically, so
    the potential is invariant under rotation by 2*pi/n_fold about the grid
    center by construction; ``azimuth`` rotates the whole pattern.  The
    result is rescaled so its maximum equals ``peak_potential``.
    """
    if n_fold < 1:
        raise DomainError(f"n_fold must be >= 1, got {n_fold}")
    if not 0 < packing <= 1:
        raise DomainError(f"packing must lie in (0, 1], got {packing}")
    if blob_sigma <= 0 or ring_radius <= 0:
        raise DomainError("ring_radius and blob_sigma must be positive")
    spread = 3.0 * blob_sigma * (1.0 - packing)
    if ring_radius + spread + 3.0 * blob_sigma >= grid.fov / 2:
        raise DomainError(
            f"phantom extends to {ring_radius + spread + 3 * blob_sigma:.1f} A, "
            f"beyond half the field of view ({grid.fov / 2:.1f} A)"
        )
    X, Y = grid.mesh()
    pot = np.zeros((grid.n, grid.n))
    two_sig2 = 2.0 * blob_sigma**2
    for k in range(n_fold):
        theta = azimuth + 2.0 * np.pi * k / n_fold
        for off, wt in zip(_SUB_BLOB_OFFSETS, _SUB_BLOB_WEIGHTS):
            rho = ring_radius + off * spread
            cx, cy = rho * np.cos(theta), rho * np.sin(theta)
            pot += wt * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / two_sig2)
    top = pot.max()
    if top > 0:
        pot *= peak_potential / top
    return SpecimenModel(grid, pot)


def interact(probe: ComplexField, specimen: SpecimenModel, params: ElectronParams) -> ComplexField:
    """Transmit ``probe`` through ``specimen``: A*exp(i*sigma*V)*psi_probe.

    The output is renormalized to unit total probability.
    """
    if probe.grid != specimen.grid:
        raise DomainError("probe and specimen are sampled on different grids")
    out = probe.amplitudes * np.exp(1j * params.sigma * specimen.potential)
    if specimen.amplitude is not None:
        out = out * specimen.amplitude
    return ComplexField(probe.grid, out).normalized()


def save_potential_map(specimen: SpecimenModel, path) -> None:
    """Write a PMAP1 text file.

    Format: one header line ``PMAP1 <n> <fov_angstrom>`` followed by n*n
    whitespace-separated potentials (volt*angstrom) in row-major order,
    17 significant digits (round-trips exactly through text).
    """
    rows = [f"{PMAP_MAGIC} {specimen.grid.n} {specimen.grid.fov:.17g}"]
    for row in specimen.potential:
        rows.append(" ".join(f"{v:.17g}" for v in row))
    atomic_write_text(path, "\n".join(rows) + "\n")


def load_potential_map(path) -> SpecimenModel:
    """Read a PMAP1 file written by :func:`save_potential_map`."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        body = fh.read().split()
    if len(header) != 3 or header[0] != PMAP_MAGIC:
        raise FormatError(f"{path}: missing or malformed {PMAP_MAGIC} header")
    try:
        n = int(header[1])
        fov = float(header[2])
    except ValueError as exc:
        raise FormatError(f"{path}: unreadable header fields") from exc
    if n < 16 or n & (n - 1):
        raise FormatError(f"{path}: grid side {n} is not a power of two >= 16")
    if not fov > 0:
        raise FormatError(f"{path}: non-positive field of view {fov}")
    if len(body) != n * n:
        raise FormatError(f"{path}: expected {n * n} values, found {len(body)}")
    try:
        values = np.array(body, dtype=float).reshape(n, n)
    except ValueError as exc:
        raise FormatError(f"{path}: unreadable potential values") from exc
    if not np.isfinite(values).all():
        raise FormatError(f"{path}: potential contains non-finite values")
    return SpecimenModel(GridSpec(n, fov), values)
