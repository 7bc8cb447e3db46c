"""Replicated mixture-population benchmark for the three estimators.

Each replica draws a fresh Gaussian-mixture population, thins it with random
per-component selection probabilities, and scores three reconstructions of the
population histogram against the realized truth: the sample histogram taken at
face value, the maximum-entropy distribution built from the population mean
alone, and the full fusion of sample, selection probabilities, and mean.

Replicas are embarrassingly parallel: each one derives its RNG stream from
(seed, replica_index, attempt) only, results are collected by index, and the
aggregation is independent of execution order.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from .dists import Grid, ObservedHistogram, SelectionFunction, bin_samples, tv_error
from .errors import EmptySample, Infeasible, NotConverged
from .solver import (
    estimate_population,
    moment_constraints,
    pure_prior_estimate,
    pure_sample_estimate,
)
from .dists import _set

ESTIMATORS = ("pure_prior", "pure_sample", "prior_sample")
#: estimators whose reconstruction comes from a dual solve
SOLVER_ESTIMATORS = ("pure_prior", "prior_sample")
MAX_REDRAWS = 10


@dataclass(frozen=True, eq=False)
class MixtureSpec:
    """One Gaussian-mixture population: component means, stds, and weights."""

    means: np.ndarray
    stds: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=float)
        stds = np.array(self.stds, dtype=float)
        weights = np.array(self.weights, dtype=float)
        if not (means.shape == stds.shape == weights.shape) or means.ndim != 1:
            raise ValueError("means, stds and weights must be equal-length vectors")
        if np.any(stds <= 0):
            raise ValueError("component stds must be positive")
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be positive and sum to one")
        for name, arr in (("means", means), ("stds", stds), ("weights", weights)):
            arr.setflags(write=False)
            _set(self, name, arr)

    @property
    def n_components(self) -> int:
        return self.means.size


@dataclass(frozen=True)
class ReplicaConfig:
    """Benchmark layout: replica count, population shape, and draw ranges."""

    n_replicas: int
    rng_seed: int
    population_size: int = 10_000
    n_components: int = 4
    mean_range: tuple[float, float] = (-5.0, 5.0)
    std_range: tuple[float, float] = (0.0, 1.0)
    selection_range: tuple[float, float] = (0.0, 1.0)
    n_bins: int = 100

    def __post_init__(self):
        if self.n_replicas < 1:
            raise ValueError("n_replicas must be positive")
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be nonnegative")
        if self.population_size < 1 or self.n_components < 1 or self.n_bins < 1:
            raise ValueError("counts must be positive")
        for name in ("mean_range", "std_range", "selection_range"):
            lo, hi = getattr(self, name)
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ValueError(f"{name} must be a finite (lo, hi) interval")
        lo, hi = self.selection_range
        if lo < 0 or hi > 1:
            raise ValueError("selection_range must lie within [0, 1]")


def replica_rng(seed: int, replica_index: int, attempt: int = 0) -> np.random.Generator:
    """Independent, order-free stream for one replica attempt."""
    return np.random.default_rng(np.random.SeedSequence((seed, replica_index, attempt)))


def _draw_mixture(cfg: ReplicaConfig, rng: np.random.Generator) -> MixtureSpec:
    n = cfg.n_components
    means = rng.uniform(*cfg.mean_range, n)
    stds = np.maximum(rng.uniform(*cfg.std_range, n), 1e-9)
    return MixtureSpec(means, stds, np.full(n, 1.0 / n))


def _draw_individuals(
    spec: MixtureSpec, size: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    labels = rng.choice(spec.n_components, size=size, p=spec.weights)
    values = rng.normal(spec.means[labels], spec.stds[labels])
    return values, labels


def draw_population(
    cfg: ReplicaConfig, replica_index: int, attempt: int = 0
) -> tuple[MixtureSpec, np.ndarray, np.ndarray]:
    """The population of one replica: mixture spec, values, component labels."""
    rng = replica_rng(cfg.rng_seed, replica_index, attempt)
    spec = _draw_mixture(cfg, rng)
    values, labels = _draw_individuals(spec, cfg.population_size, rng)
    return spec, values, labels


def draw_sample(
    values: np.ndarray,
    labels: np.ndarray,
    selection_probs,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Bernoulli-thin a population with one inclusion probability per category."""
    probs = np.asarray(selection_probs, dtype=float)
    if probs.ndim != 1 or probs.size <= int(np.max(labels, initial=0)):
        raise ValueError("need one probability per category")
    if np.any(probs < 0) or np.any(probs > 1):
        raise ValueError("selection probabilities must lie in [0, 1]")
    keep = rng.random(len(values)) < probs[labels]
    if not keep.any():
        raise EmptySample("thinning selected no individual")
    return np.asarray(values)[keep], np.asarray(labels)[keep]


@dataclass(frozen=True)
class ReplicaResult:
    index: int
    errors: dict[str, float]          # nan = failed
    converged: dict[str, bool]
    max_residuals: dict[str, float]   # solver estimators only
    attempts: int


def _run_replica(cfg: ReplicaConfig, index: int) -> ReplicaResult:
    for attempt in range(MAX_REDRAWS):
        rng = replica_rng(cfg.rng_seed, index, attempt)
        spec = _draw_mixture(cfg, rng)
        values, labels = _draw_individuals(spec, cfg.population_size, rng)
        probs = rng.uniform(*cfg.selection_range, cfg.n_components)
        try:
            sample_values, _ = draw_sample(values, labels, probs, rng)
        except EmptySample:
            continue
        break
    else:
        return ReplicaResult(
            index,
            {name: float("nan") for name in ESTIMATORS},
            {name: False for name in ESTIMATORS},
            {name: float("nan") for name in SOLVER_ESTIMATORS},
            MAX_REDRAWS,
        )

    grid = Grid.from_values(values, cfg.n_bins, n_categories=cfg.n_components)
    truth, _ = bin_samples(values, grid.edges)
    sample_hist, _ = bin_samples(sample_values, grid.edges)
    obs = ObservedHistogram(
        grid.edges, sample_hist.mass, len(sample_values) / len(values)
    )
    sel = SelectionFunction.per_category(grid, probs)
    # the "survey" prior: the population average, measured on the same grid the
    # estimators work on (the binned mean is the one the constraints can reach)
    prior = moment_constraints(grid.edges, mean=truth.mean)

    errors = {"pure_sample": tv_error(pure_sample_estimate(obs), truth)}
    converged = {"pure_sample": True}
    residuals: dict[str, float] = {}

    try:
        prior_marginal = pure_prior_estimate(grid, prior)
        errors["pure_prior"] = tv_error(prior_marginal, truth)
        converged["pure_prior"] = True
        residuals["pure_prior"] = abs(prior_marginal.mean - prior[0].target)
    except (Infeasible, NotConverged):
        errors["pure_prior"] = float("nan")
        converged["pure_prior"] = False
        residuals["pure_prior"] = float("nan")

    try:
        est = estimate_population(obs, sel, prior)
        errors["prior_sample"] = tv_error(est.marginal, truth)
        converged["prior_sample"] = True
        residuals["prior_sample"] = est.max_residual
    except (Infeasible, NotConverged):
        errors["prior_sample"] = float("nan")
        converged["prior_sample"] = False
        residuals["prior_sample"] = float("nan")

    return ReplicaResult(index, errors, converged, residuals, attempt + 1)


def _replica_worker(args: tuple[ReplicaConfig, int]) -> ReplicaResult:
    return _run_replica(*args)


@dataclass(frozen=True, eq=False)
class BenchmarkReport:
    """Per-replica errors for each estimator plus deterministic aggregation."""

    estimators: tuple[str, ...]
    errors: dict[str, np.ndarray]
    converged: dict[str, np.ndarray]
    max_residuals: dict[str, np.ndarray]
    n_redrawn: int
    config: dict = field(default_factory=dict)

    @property
    def n_replicas(self) -> int:
        return len(next(iter(self.errors.values())))

    def n_failed(self, estimator: str) -> int:
        return int((~self.converged[estimator]).sum())

    def summary(self) -> dict:
        """JSON-ready statistics; recomputable from the per-replica table."""
        out: dict = {
            "n_replicas": self.n_replicas,
            "n_redrawn": self.n_redrawn,
            "estimators": {},
            "gains": {},
            "config": dict(self.config),
        }
        for name in self.estimators:
            stats = summarize(self.errors[name])
            stats["n_failed"] = self.n_failed(name)
            if name in self.max_residuals:
                finite = self.max_residuals[name][np.isfinite(self.max_residuals[name])]
                stats["max_residual"] = float(finite.max()) if finite.size else 0.0
            out["estimators"][name] = stats
        for bench in ("pure_sample", "pure_prior"):
            if bench in self.errors and "prior_sample" in self.errors:
                out["gains"][f"prior_sample_vs_{bench}"] = relative_gains(
                    self.errors["prior_sample"], self.errors[bench]
                )
        return out


def summarize(errors) -> dict:
    """Mean and interpolated quartiles over the finite entries."""
    arr = np.asarray(errors, dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        raise ValueError("no finite errors to summarize")
    p25, p50, p75 = np.percentile(arr, [25, 50, 75])
    return {
        "mean": float(arr.mean()),
        "p25": float(p25),
        "median": float(p50),
        "p75": float(p75),
        "n": int(arr.size),
    }


def relative_gains(err_new, err_bench) -> dict:
    """Error reductions of one estimator against a benchmark.

    Per-replica gains 1 - new/bench are summarized by mean and quartiles;
    ``of_means`` is the reduction of the mean errors themselves. Replicas
    where either estimator failed, or where the benchmark error is zero,
    are left out of the per-replica gains.
    """
    new = np.asarray(err_new, dtype=float)
    bench = np.asarray(err_bench, dtype=float)
    both = np.isfinite(new) & np.isfinite(bench)
    pair = both & (bench > 0)
    gains = 1.0 - new[pair] / bench[pair]
    out = {"n": int(pair.sum())}
    if gains.size:
        p25, p75 = np.percentile(gains, [25, 75])
        out.update(mean=float(gains.mean()), p25=float(p25), p75=float(p75))
    if both.any() and float(bench[both].mean()) > 0:
        out["of_means"] = float(1.0 - new[both].mean() / bench[both].mean())
    return out


def run_benchmark(cfg: ReplicaConfig, jobs: int = 1) -> BenchmarkReport:
    """Run every replica and aggregate; identical output for any ``jobs``."""
    tasks = [(cfg, index) for index in range(cfg.n_replicas)]
    if jobs > 1 and cfg.n_replicas > 1:
        with multiprocessing.Pool(processes=jobs) as pool:
            results = pool.map(_replica_worker, tasks, chunksize=max(1, cfg.n_replicas // (4 * jobs)))
    else:
        results = [_run_replica(cfg, index) for index in range(cfg.n_replicas)]
    results.sort(key=lambda r: r.index)
    return collect_report(
        results,
        ESTIMATORS,
        SOLVER_ESTIMATORS,
        config={
            "n_replicas": cfg.n_replicas,
            "rng_seed": cfg.rng_seed,
            "population_size": cfg.population_size,
            "n_components": cfg.n_components,
            "mean_range": list(cfg.mean_range),
            "std_range": list(cfg.std_range),
            "selection_range": list(cfg.selection_range),
            "n_bins": cfg.n_bins,
        },
    )


def collect_report(
    results: list[ReplicaResult],
    estimators: tuple[str, ...],
    solver_estimators: tuple[str, ...],
    config: dict,
) -> BenchmarkReport:
    errors = {
        name: np.array([r.errors[name] for r in results]) for name in estimators
    }
    converged = {
        name: np.array([r.converged[name] for r in results], dtype=bool)
        for name in estimators
    }
    residuals = {
        name: np.array([r.max_residuals.get(name, float("nan")) for r in results])
        for name in solver_estimators
    }
    n_redrawn = sum(r.attempts - 1 for r in results)
    return BenchmarkReport(
        estimators=estimators,
        errors=errors,
        converged=converged,
        max_residuals=residuals,
        n_redrawn=n_redrawn,
        config=config,
    )
