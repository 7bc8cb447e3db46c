"""Discrete distributions over a binned score axis and a categorical selection axis.

Everything the estimators touch is one of these types: a population is a joint
mass matrix over (score bin, selection category), a sample is a normalized
histogram plus the fraction of the population it captured, and a selection
mechanism is a matrix of per-cell inclusion probabilities. All objects are
immutable after construction and all operations are pure functions, so they can
be shared freely across threads and worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSelection, EmptyInput, GridMismatch, NotNormalized

DEFAULT_BINS = 100
#: fraction of the data range added on each side when deriving a grid from values
RANGE_PAD = 0.01
#: absolute tolerance when comparing normalized distributions
MASS_ATOL = 1e-12
#: constructors renormalize when |sum - 1| is below this and reject otherwise
NORMALIZE_TOL = 1e-9


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _set(obj, name, value) -> None:
    object.__setattr__(obj, name, value)


def _validated_edges(edges) -> np.ndarray:
    arr = np.array(edges, dtype=float)
    if arr.ndim != 1 or arr.size < 2:
        raise ValueError("need at least two bin edges")
    if not np.all(np.isfinite(arr)):
        raise ValueError("bin edges must be finite")
    if not np.all(np.diff(arr) > 0):
        raise ValueError("bin edges must be strictly increasing")
    arr.setflags(write=False)
    return arr


def _normalized_mass(mass, what: str) -> np.ndarray:
    arr = np.array(mass, dtype=float)
    if arr.size == 0:
        raise EmptyInput(f"{what}: empty mass array")
    if not np.all(np.isfinite(arr)):
        raise NotNormalized(f"{what}: non-finite mass entries")
    if np.any(arr < 0):
        raise NotNormalized(f"{what}: negative mass entries")
    total = float(arr.sum())
    if abs(total - 1.0) > NORMALIZE_TOL:
        raise NotNormalized(
            f"{what}: mass sums to {total!r}, expected 1 within {NORMALIZE_TOL}"
        )
    arr /= total
    arr.setflags(write=False)
    return arr


def same_edges(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and bool(np.array_equal(a, b))


@dataclass(frozen=True, eq=False)
class Grid:
    """Binned axis for the observed score plus a categorical selection axis."""

    edges: np.ndarray
    n_categories: int = 1

    def __post_init__(self):
        _set(self, "edges", _validated_edges(self.edges))
        if int(self.n_categories) < 1:
            raise ValueError("n_categories must be >= 1")
        _set(self, "n_categories", int(self.n_categories))

    @property
    def n_bins(self) -> int:
        return self.edges.size - 1

    @property
    def midpoints(self) -> np.ndarray:
        return _frozen(0.5 * (self.edges[:-1] + self.edges[1:]))

    @property
    def widths(self) -> np.ndarray:
        return _frozen(np.diff(self.edges))

    @classmethod
    def regular(cls, lo: float, hi: float, n_bins: int = DEFAULT_BINS, n_categories: int = 1) -> "Grid":
        return cls(np.linspace(lo, hi, n_bins + 1), n_categories)

    @classmethod
    def from_values(
        cls,
        values,
        n_bins: int = DEFAULT_BINS,
        n_categories: int = 1,
        pad: float = RANGE_PAD,
    ) -> "Grid":
        """Equal-width grid spanning the data range, padded by ``pad`` per side."""
        arr = np.asarray(values, dtype=float)
        arr = arr[np.isfinite(arr)]
        if arr.size == 0:
            raise EmptyInput("no finite values to derive a grid from")
        lo, hi = float(arr.min()), float(arr.max())
        span = hi - lo
        if span == 0.0:
            span = max(abs(lo), 1.0)
        return cls.regular(lo - pad * span, hi + pad * span, n_bins, n_categories)


@dataclass(frozen=True, eq=False)
class Marginal:
    """Normalized distribution over the observed-score bins only."""

    edges: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        _set(self, "edges", _validated_edges(self.edges))
        _set(self, "mass", _normalized_mass(self.mass, "Marginal"))
        if self.mass.ndim != 1 or self.mass.size != self.edges.size - 1:
            raise ValueError("mass must be a vector with one entry per bin")

    @property
    def n_bins(self) -> int:
        return self.edges.size - 1

    @property
    def midpoints(self) -> np.ndarray:
        return _frozen(0.5 * (self.edges[:-1] + self.edges[1:]))

    @property
    def mean(self) -> float:
        return float(self.mass @ self.midpoints)

    @property
    def second_moment(self) -> float:
        return float(self.mass @ self.midpoints**2)

    @classmethod
    def uniform(cls, edges) -> "Marginal":
        edges = _validated_edges(edges)
        n = edges.size - 1
        return cls(edges, np.full(n, 1.0 / n))


@dataclass(frozen=True, eq=False)
class BinnedJoint:
    """Nonnegative mass over the (score bin x selection category) grid.

    ``normalized=False`` admits unnormalized mass and is meant only for solver
    intermediates; every distribution handed between modules is normalized.
    """

    grid: Grid
    mass: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        arr = np.array(self.mass, dtype=float)
        if arr.shape != (self.grid.n_bins, self.grid.n_categories):
            raise ValueError(
                f"mass shape {arr.shape} does not match grid "
                f"({self.grid.n_bins}, {self.grid.n_categories})"
            )
        if self.normalized:
            _set(self, "mass", _normalized_mass(arr, "BinnedJoint").reshape(arr.shape))
        else:
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise NotNormalized("BinnedJoint: mass must be finite and nonnegative")
            arr.setflags(write=False)
            _set(self, "mass", arr)


@dataclass(frozen=True, eq=False)
class SelectionFunction:
    """Per-cell probability of being included in the sample."""

    grid: Grid
    prob: np.ndarray

    def __post_init__(self):
        arr = np.array(self.prob, dtype=float)
        if arr.shape != (self.grid.n_bins, self.grid.n_categories):
            raise ValueError(
                f"prob shape {arr.shape} does not match grid "
                f"({self.grid.n_bins}, {self.grid.n_categories})"
            )
        if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
            raise ValueError("selection probabilities must lie in [0, 1]")
        arr.setflags(write=False)
        _set(self, "prob", arr)

    @classmethod
    def per_category(cls, grid: Grid, probs) -> "SelectionFunction":
        """Selection depending on the category only (constant across bins)."""
        p = np.asarray(probs, dtype=float)
        if p.shape != (grid.n_categories,):
            raise ValueError("need one probability per category")
        return cls(grid, np.broadcast_to(p, (grid.n_bins, grid.n_categories)))


@dataclass(frozen=True, eq=False)
class ObservedHistogram:
    """Normalized sample histogram plus the sampled fraction of the population.

    The unnormalized observed mass per bin is ``inclusion_rate * shape``; the
    two parts are stored separately because empirical data delivers them
    separately (a histogram plus a known population size).
    """

    edges: np.ndarray
    shape: np.ndarray
    inclusion_rate: float

    def __post_init__(self):
        _set(self, "edges", _validated_edges(self.edges))
        _set(self, "shape", _normalized_mass(self.shape, "ObservedHistogram"))
        if self.shape.size != self.edges.size - 1:
            raise ValueError("shape must have one entry per bin")
        rate = float(self.inclusion_rate)
        if not (0.0 < rate <= 1.0):
            raise ValueError("inclusion_rate must lie in (0, 1]")
        _set(self, "inclusion_rate", rate)

    @property
    def n_bins(self) -> int:
        return self.edges.size - 1

    @property
    def observed_mass(self) -> np.ndarray:
        """Unnormalized per-bin observed mass (sums to the inclusion rate)."""
        return _frozen(self.inclusion_rate * self.shape)

    def as_marginal(self) -> Marginal:
        return Marginal(self.edges, self.shape)


def marginalize(joint: BinnedJoint) -> Marginal:
    """Sum the joint over selection categories."""
    return Marginal(joint.grid.edges, joint.mass.sum(axis=1))


def forward_observe(joint: BinnedJoint, sel: SelectionFunction) -> ObservedHistogram:
    """Thin the population by the selection probabilities.

    Returns the observed histogram a sample drawn with ``sel`` would have in
    expectation: its normalized shape and the overall inclusion rate.
    """
    if not (
        same_edges(joint.grid.edges, sel.grid.edges)
        and joint.grid.n_categories == sel.grid.n_categories
    ):
        raise GridMismatch("joint and selection function live on different grids")
    raw = (joint.mass * sel.prob).sum(axis=1)
    rate = float(raw.sum())
    if rate <= 0.0:
        raise DegenerateSelection("selection probabilities never include anyone")
    return ObservedHistogram(joint.grid.edges, raw / rate, min(rate, 1.0))


def entropy(dist) -> float:
    """Shannon entropy in nats, with the 0 log 0 = 0 convention."""
    mass = np.asarray(dist.mass, dtype=float).ravel()
    positive = mass[mass > 0]
    return float(-(positive * np.log(positive)).sum())


def tv_error(estimate: Marginal, truth: Marginal) -> float:
    """Total-variation distance: the fraction of misplaced probability mass."""
    if not same_edges(estimate.edges, truth.edges):
        raise GridMismatch("marginals live on different bin edges")
    return float(0.5 * np.abs(estimate.mass - truth.mass).sum())


def bin_samples(values, edges, clamp: bool = False) -> tuple[Marginal, int]:
    """Histogram raw values onto a grid.

    Values on an interior edge fall into the right bin; the last edge is
    inclusive. Out-of-range values are clamped into the end bins when ``clamp``
    is set and discarded otherwise; either way their count is returned.
    """
    edges = _validated_edges(edges)
    arr = np.asarray(values, dtype=float).ravel()
    outside = (arr < edges[0]) | (arr > edges[-1]) | ~np.isfinite(arr)
    n_outside = int(outside.sum())
    if clamp:
        kept = np.clip(arr[np.isfinite(arr)], edges[0], edges[-1])
    else:
        kept = arr[~outside]
    if kept.size == 0:
        raise EmptyInput("no value falls inside the grid range")
    idx = np.searchsorted(edges, kept, side="right") - 1
    n_bins = edges.size - 1
    idx[kept == edges[-1]] = n_bins - 1
    counts = np.bincount(idx, minlength=n_bins).astype(float)
    return Marginal(edges, counts / counts.sum()), n_outside
