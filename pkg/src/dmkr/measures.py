"""Momentum distributions and the comparison measures used everywhere else.

A MomentumDistribution is a normalized histogram over uniformly spaced
momentum bins.  The three scalar measures defined here compare a classical
and a quantum marginal on the same bin grid:

* ``overlap``              -- cosine similarity of the probability vectors,
* ``dispersion_complement``-- 1 - |sigma_P - sigma_Q| / (sigma_P + sigma_Q),
* ``participation_ratio``  -- (sum P_i^2)^-1 / N.

The overlap uses the cosine normalization (1 for identical distributions)
rather than the bare integral of the product of densities; the bare
integral is available separately as ``literal_overlap`` for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainError,
    EmptyDistributionError,
    GeometryError,
    UndefinedMeasureError,
)

_GRID_TOL = 1e-12


@dataclass(frozen=True)
class BinSpec:
    """Uniform momentum bin grid: centers and common width."""

    centers: np.ndarray
    width: float

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=float)
        if centers.ndim != 1 or centers.size == 0:
            raise DomainError("bin centers must be a nonempty 1-d array")
        if centers.size > 1:
            diffs = np.diff(centers)
            if np.any(diffs <= 0):
                raise DomainError("bin centers must be strictly increasing")
            if np.max(np.abs(diffs - diffs[0])) > _GRID_TOL:
                raise DomainError("bin centers must be uniformly spaced")
        if not np.isfinite(self.width) or self.width <= 0:
            raise DomainError("bin width must be positive and finite")
        centers.setflags(write=False)
        object.__setattr__(self, "centers", centers)

    @property
    def n_bins(self) -> int:
        return self.centers.size

    @property
    def edges(self) -> np.ndarray:
        half = 0.5 * self.width
        return np.concatenate([self.centers - half, [self.centers[-1] + half]])

    def matches(self, other: "BinSpec") -> bool:
        return (
            self.n_bins == other.n_bins
            and abs(self.width - other.width) <= _GRID_TOL
            and np.max(np.abs(self.centers - other.centers)) <= _GRID_TOL
        )


@dataclass(frozen=True)
class MomentumDistribution:
    """Normalized probability distribution over uniform momentum bins."""

    bins: BinSpec
    probabilities: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probabilities, dtype=float)
        if probs.shape != (self.bins.n_bins,):
            raise GeometryError(
                f"probability vector length {probs.size} does not match "
                f"{self.bins.n_bins} bins"
            )
        if np.any(probs < 0):
            raise DomainError("probabilities must be nonnegative")
        total = probs.sum()
        if abs(total - 1.0) > 1e-12:
            raise DomainError(f"probabilities sum to {total!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "probabilities", probs)

    @property
    def bin_centers(self) -> np.ndarray:
        return self.bins.centers

    @property
    def bin_width(self) -> float:
        return self.bins.width

    @property
    def n_bins(self) -> int:
        return self.bins.n_bins


def normalize_distribution(weights, bin_spec: BinSpec) -> MomentumDistribution:
    """Build a MomentumDistribution from nonnegative weights.

    Raises EmptyDistributionError if every weight is zero and DomainError
    on negative weights or a length mismatch.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size != bin_spec.n_bins:
        raise GeometryError(
            f"weights length {w.size} does not match {bin_spec.n_bins} bins"
        )
    if np.any(~np.isfinite(w)):
        raise DomainError("weights must be finite")
    if np.any(w < 0):
        raise DomainError("weights must be nonnegative")
    total = w.sum()
    if total <= 0.0:
        raise EmptyDistributionError("all weights are zero")
    probs = w / total
    # guard against rounding drift before the 1e-12 invariant check
    probs = probs / probs.sum()
    return MomentumDistribution(bin_spec, probs)


def _require_same_bins(p: MomentumDistribution, q: MomentumDistribution) -> None:
    if not p.bins.matches(q.bins):
        raise GeometryError("distributions are on different bin grids")


def overlap(p: MomentumDistribution, q: MomentumDistribution) -> float:
    """Cosine overlap of two distributions on the same grid; 1 iff equal."""
    _require_same_bins(p, q)
    a, b = p.probabilities, q.probabilities
    denom = np.sqrt(np.dot(a, a) * np.dot(b, b))
    value = float(np.dot(a, b) / denom)
    return min(max(value, 0.0), 1.0)


def literal_overlap(p: MomentumDistribution, q: MomentumDistribution) -> float:
    """Unnormalized overlap integral of the two densities, sum P_i Q_i / dp.

    Diagnostic only: not scale invariant and not bounded by 1.
    """
    _require_same_bins(p, q)
    return float(np.dot(p.probabilities, q.probabilities) / p.bin_width)


def dispersion(p: MomentumDistribution) -> float:
    """Standard deviation of the bin centers weighted by probability."""
    centers = p.bin_centers
    mean = float(np.dot(p.probabilities, centers))
    var = float(np.dot(p.probabilities, (centers - mean) ** 2))
    return float(np.sqrt(max(var, 0.0)))


def dispersion_complement(p: MomentumDistribution, q: MomentumDistribution) -> float:
    """1 - |sigma_P - sigma_Q| / (sigma_P + sigma_Q), in [0, 1]."""
    sp, sq = dispersion(p), dispersion(q)
    total = sp + sq
    if total <= 0.0:
        raise UndefinedMeasureError(
            "both dispersions are zero; the complement is undefined"
        )
    value = 1.0 - abs(sp - sq) / total
    return min(max(value, 0.0), 1.0)


def participation_ratio(p: MomentumDistribution) -> float:
    """(sum_i P_i^2)^-1 / N, in [1/N, 1]; 1 for uniform, 1/N for a delta."""
    inv_sum = 1.0 / float(np.dot(p.probabilities, p.probabilities))
    return inv_sum / p.n_bins
