"""Shared test utilities: synthetic states and independent oracles.

The oracles here deliberately avoid the code paths they check: the mixed
bound is recomputed from an explicit block matrix and a full
eigendecomposition, the multi-shot probability from raw outcome-sequence
enumeration, and overlaps from the plain Cartesian sum.
"""

from __future__ import annotations

import numpy as np

from oamsort import MixedState, RadialGrid


def fidelity(field0, field1) -> float:
    num = abs((field0.amplitudes.conj() * field1.amplitudes).sum() * field0.grid.pixel_area)
    return num / np.sqrt(field0.norm() * field1.norm())


def overlap_integral(field0, field1) -> complex:
    return complex((field0.amplitudes.conj() * field1.amplitudes).sum() * field0.grid.pixel_area)


def random_profile(rng: np.random.Generator, grid: RadialGrid) -> np.ndarray:
    """Smooth random complex radial profile with unit grid norm."""
    rc = grid.centers()
    width = grid.r_max * rng.uniform(0.08, 0.3)
    center = grid.r_max * rng.uniform(0.2, 0.8)
    envelope = np.exp(-(((rc - center) / width) ** 2))
    phase = rng.uniform(-np.pi, np.pi) + rng.uniform(-3, 3) * rc / grid.r_max
    prof = envelope * np.exp(1j * phase) + 0.05 * (
        rng.standard_normal(grid.n_r) + 1j * rng.standard_normal(grid.n_r)
    ) * envelope
    return prof / grid.norm(prof)


def random_mixed_pair(
    rng: np.random.Generator, n_channels: int, n_r: int = 24, overlap_bias: float = 0.5
):
    """Two synthetic dephased states sharing a channel set.

    Some channels may be carried by a single state; profile pairs are a
    random mix of nearly collinear and nearly orthogonal cases.  Weights sum
    to one exactly (up to float rounding of the normalization).
    """
    grid = RadialGrid(n_r, 10.0)
    ms = tuple(sorted(rng.choice(np.arange(-8, 9), size=n_channels, replace=False).tolist()))
    raw0 = rng.uniform(0.05, 1.0, n_channels)
    raw1 = rng.uniform(0.05, 1.0, n_channels)
    # occasionally zero out a channel on one side only
    for i in range(n_channels):
        u = rng.random()
        if u < 0.15:
            raw0[i] = 0.0
        elif u < 0.3:
            raw1[i] = 0.0
    if raw0.sum() == 0:
        raw0[0] = 1.0
    if raw1.sum() == 0:
        raw1[-1] = 1.0
    w0 = raw0 / raw0.sum()
    w1 = raw1 / raw1.sum()

    profs0, profs1 = [], []
    for i in range(n_channels):
        a = random_profile(rng, grid)
        u = rng.random()
        if u < overlap_bias:
            b = random_profile(rng, grid)
        elif u < overlap_bias + 0.25:
            b = a * np.exp(1j * rng.uniform(-np.pi, np.pi))  # collinear
        else:
            c = random_profile(rng, grid)
            b = c - complex(grid.inner(a, c)) * a  # nearly orthogonal
            b = b / grid.norm(b)
        profs0.append(a)
        profs1.append(b)

    def build(weights, profiles):
        keep = weights > 0
        return MixedState(
            radial_grid=grid,
            ms=tuple(m for m, k in zip(ms, keep) if k),
            weights=weights[keep],
            profiles=np.vstack([p for p, k in zip(profiles, keep) if k]),
            m_max=8,
            truncation_loss=0.0,
            captured_fraction=1.0,
            low_capture=False,
        )

    return build(w0, profs0), build(w1, profs1)


def trace_norm_probability(a: MixedState, b: MixedState, priors) -> float:
    """Mixed-state bound via one explicit eigendecomposition.

    Builds the full weighted difference operator on the channel x radial
    product space (sqrt-weight embedding makes the radial metric Euclidean)
    and returns 1/2 + 1/2 * sum |eigenvalues|.
    """
    ms = sorted(set(a.ms) | set(b.ms))
    n_r = a.radial_grid.n_r
    sq = np.sqrt(a.radial_grid.weights())
    dim = len(ms) * n_r
    op = np.zeros((dim, dim), dtype=complex)
    for which, state, prior in ((0, a, priors.p0), (1, b, priors.p1)):
        sign = 1.0 if which == 0 else -1.0
        for i, m in enumerate(state.ms):
            k = ms.index(m)
            phi = state.profiles[i] * sq
            block = np.outer(phi, phi.conj()) * (sign * prior * state.weights[i])
            op[k * n_r : (k + 1) * n_r, k * n_r : (k + 1) * n_r] += block
    eigs = np.linalg.eigvalsh(op)
    return 0.5 + 0.5 * float(np.abs(eigs).sum())


def brute_force_multishot(s0: float, s1: float, p0: float, n: int) -> float:
    """Success probability by enumerating all 2^n outcome sequences."""
    seqs = np.arange(2**n, dtype=np.uint64)
    ones = np.zeros(2**n, dtype=np.int64)
    for bit in range(n):
        ones += ((seqs >> np.uint64(bit)) & np.uint64(1)).astype(np.int64)
    zeros = n - ones  # outcome-0 occurrences per sequence
    like0 = p0 * s0**zeros * (1 - s0) ** ones
    like1 = (1 - p0) * (1 - s1) ** zeros * s1**ones
    return float(np.maximum(like0, like1).sum())
