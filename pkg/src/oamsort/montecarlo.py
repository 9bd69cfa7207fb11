"""Dose-limited detection experiments with reproducible counter-based RNG.

Sampling is a double extraction: first the electron count (Poisson at the
requested dose, or fixed), then each electron's detector cell from the
categorical distribution, with the distribution's deficit acting as a loss
channel whose electrons go unrecorded.  Every trial derives its own Philox
stream from (seed, trial index), so results are identical regardless of
execution order or thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import binom

from ._io import atomic_write_text
from .discriminate import Priors, EQUAL_PRIORS, n_electron_probability
from .errors import DomainError
from .sorter import DetectorImage

__all__ = [
    "ExperimentConfig",
    "DetectionDistribution",
    "OutcomeHistogram",
    "trial_rng",
    "sample_detection",
    "classify",
    "empirical_success",
    "success_curve",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """One detection experiment: dose (e/A^2) on an illuminated area (A^2),
    under a given true hypothesis.  ``fixed_n`` bypasses the Poisson draw
    and records exactly that many electrons."""

    dose: float
    area: float
    truth: int
    seed: int
    trials: int = 1
    fixed_n: int | None = None

    def __post_init__(self):
        if self.dose < 0:
            raise DomainError(f"dose must be nonnegative, got {self.dose}")
        if self.area <= 0:
            raise DomainError(f"area must be positive, got {self.area}")
        if self.truth not in (0, 1):
            raise DomainError(f"truth must be 0 or 1, got {self.truth}")
        if self.trials < 1:
            raise DomainError(f"trials must be >= 1, got {self.trials}")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must fit in an unsigned 64-bit integer")
        if self.fixed_n is not None and self.fixed_n < 0:
            raise DomainError("fixed_n must be nonnegative")

    @property
    def mean_electrons(self) -> float:
        return self.dose * self.area


@dataclass(frozen=True, eq=False)
class DetectionDistribution:
    """Flattened per-cell probabilities with (channel, bin) labels.

    The deficit 1 - sum(probs) is the probability of an electron escaping
    the detector entirely.
    """

    labels: tuple[tuple[int, int], ...]
    probs: np.ndarray

    def __post_init__(self):
        probs = np.ascontiguousarray(self.probs, dtype=float)
        if probs.ndim != 1 or len(probs) != len(self.labels):
            raise DomainError("labels and probabilities disagree in length")
        if probs.min() < -1e-15 or probs.sum() > 1 + 1e-9:
            raise DomainError("cell probabilities must be nonnegative and sum to <= 1")
        probs = np.clip(probs, 0.0, None)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def loss(self) -> float:
        return max(0.0, 1.0 - float(self.probs.sum()))

    @classmethod
    def from_detector_image(cls, image: DetectorImage) -> "DetectionDistribution":
        return cls(tuple(image.cell_labels()), image.cell_probs())

    @classmethod
    def from_outcome_probs(cls, outcome_probs: dict[int, tuple[float, float]]) -> "DetectionDistribution":
        """Coarse per-(channel, outcome) distribution: bin 0 is outcome 0,
        bin 1 is outcome 1."""
        labels = []
        probs = []
        for m in sorted(outcome_probs):
            pr0, pr1 = outcome_probs[m]
            labels += [(m, 0), (m, 1)]
            probs += [pr0, pr1]
        return cls(tuple(labels), np.array(probs))


@dataclass(frozen=True, eq=False)
class OutcomeHistogram:
    """Electron counts per detector cell for one trial; n is the recorded
    total (lost electrons never appear)."""

    labels: tuple[tuple[int, int], ...]
    counts: np.ndarray
    n: int
    truth: int | None = None
    trial: int = 0

    def count_in(self, cells: frozenset | set) -> int:
        return int(sum(c for lab, c in zip(self.labels, self.counts) if lab in cells))

    def save_csv(self, path) -> None:
        lines = ["m,bin,count"]
        for (m, b), c in zip(self.labels, self.counts):
            lines.append(f"{m},{b},{int(c)}")
        atomic_write_text(path, "\n".join(lines) + "\n")


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Philox stream keyed by (seed, trial): counter-based, platform-stable,
    and independent across trials."""
    return np.random.Generator(np.random.Philox(key=np.array([seed, trial], dtype=np.uint64)))


def _draw_counts(
    rng: np.random.Generator,
    dist: DetectionDistribution,
    mean_electrons: float,
    fixed_n: int | None,
):
    if fixed_n is not None:
        total = float(dist.probs.sum())
        if total <= 0:
            if fixed_n > 0:
                raise DomainError("cannot record electrons from an all-loss distribution")
            return np.zeros(len(dist.probs), dtype=np.int64)
        return rng.multinomial(fixed_n, dist.probs / total).astype(np.int64)
    n_raw = int(rng.poisson(mean_electrons))
    if n_raw == 0:
        return np.zeros(len(dist.probs), dtype=np.int64)
    pvals = np.append(dist.probs, dist.loss)
    return rng.multinomial(n_raw, pvals / pvals.sum())[:-1].astype(np.int64)


def sample_detection(dist: DetectionDistribution, config: ExperimentConfig, trial: int = 0) -> OutcomeHistogram:
    """Draw one histogram: electron count first, then a cell per electron.

    Deterministic for a given (config.seed, trial).
    """
    counts = _draw_counts(trial_rng(config.seed, trial), dist, config.mean_electrons, config.fixed_n)
    return OutcomeHistogram(
        labels=dist.labels,
        counts=counts,
        n=int(counts.sum()),
        truth=config.truth,
        trial=trial,
    )


def classify(
    hist: OutcomeHistogram,
    outcome0_cells: frozenset | set,
    priors: Priors = EQUAL_PRIORS,
    s0: float = 0.5,
    s1: float = 0.5,
) -> tuple[int, float]:
    """Binomial maximum-likelihood decision from a recorded histogram.

    The histogram reduces to the count n0 inside the outcome-0 cells; the
    decision compares p0*Pr(n0 | hypothesis 0) against p1*Pr(n0 | 1) with
    outcome-0 rates s0 and 1 - s1.  Returns (hypothesis, log-likelihood
    ratio); ties and empty histograms fall back to the larger prior (then to
    hypothesis 0).
    """
    n = hist.n
    with np.errstate(divide="ignore"):
        if n == 0:
            llr = float(np.log(priors.p0) - np.log(priors.p1))
        else:
            n0 = hist.count_in(outcome0_cells)
            log0 = np.log(priors.p0) + binom.logpmf(n0, n, s0)
            log1 = np.log(priors.p1) + binom.logpmf(n0, n, 1.0 - s1)
            llr = float(log0 - log1)
    if math.isnan(llr):  # both hypotheses assign zero likelihood
        llr = 0.0
    return (0 if llr >= 0 else 1, llr)


def _success_count(
    trials: range,
    seed: int,
    dists: tuple[DetectionDistribution, DetectionDistribution],
    outcome0_cells: frozenset,
    priors: Priors,
    s0: float,
    s1: float,
    n: int,
) -> int:
    hits = 0
    for t in trials:
        rng = trial_rng(seed, t)
        truth = 0 if rng.random() < priors.p0 else 1
        counts = _draw_counts(rng, dists[truth], 0.0, n)
        hist = OutcomeHistogram(dists[truth].labels, counts, int(counts.sum()), truth, t)
        decision, _ = classify(hist, outcome0_cells, priors, s0, s1)
        hits += decision == truth
    return hits


def empirical_success(
    dist0: DetectionDistribution,
    dist1: DetectionDistribution,
    outcome0_cells: frozenset | set,
    priors: Priors,
    s0: float,
    s1: float,
    n: int,
    trials: int,
    seed: int,
    threads: int = 1,
) -> float:
    """Fraction of trials classified correctly at a fixed electron count.

    Each trial draws the true hypothesis from the priors, then n recorded
    electrons from that hypothesis' distribution, all from the trial's own
    stream; the result does not depend on ``threads``.
    """
    cells = frozenset(outcome0_cells)
    dists = (dist0, dist1)
    if threads <= 1:
        hits = _success_count(range(trials), seed, dists, cells, priors, s0, s1, n)
    else:
        chunk = max(1, math.ceil(trials / threads))
        ranges = [range(lo, min(lo + chunk, trials)) for lo in range(0, trials, chunk)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            hits = sum(
                pool.map(
                    lambda r: _success_count(r, seed, dists, cells, priors, s0, s1, n), ranges
                )
            )
    return hits / trials


def success_curve(
    doses,
    area: float,
    dist0: DetectionDistribution,
    dist1: DetectionDistribution,
    outcome0_cells: frozenset | set,
    priors: Priors,
    s0: float,
    s1: float,
    seed: int,
    trials: int = 400,
    threads: int = 1,
) -> list[dict]:
    """One row per dose: electron count n = round(dose*area), the exact
    multi-shot prediction, and the empirical success over ``trials``."""
    rows = []
    for i, dose in enumerate(doses):
        n = int(round(dose * area))
        predicted = n_electron_probability(s0, s1, priors, max(n, 1)) if n >= 1 else priors.largest
        empirical = empirical_success(
            dist0, dist1, outcome0_cells, priors, s0, s1, max(n, 1), trials,
            seed + 1000003 * i, threads,
        )
        rows.append(
            {"dose": dose, "n": n, "predicted": predicted, "empirical": empirical, "trials": trials}
        )
    return rows
