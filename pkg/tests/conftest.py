"""Shared instance generators for the solver and oracle cross-checks."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import popfuse as pf

FIXTURES = Path(__file__).parent / "fixtures"


def random_fusion_instance(seed: int):
    """A feasible estimate_population problem with at most 12 cells.

    The observed histogram and moment target are produced by pushing a random
    strictly positive joint through random selection probabilities, so the
    constraint set is nonempty by construction and has full support.
    """
    rng = np.random.default_rng(seed)
    n_bins = int(rng.integers(2, 5))
    n_cat = int(rng.integers(2, 4))
    while n_bins * n_cat > 12:
        n_cat -= 1
    edges = np.sort(rng.uniform(-3.0, 3.0, n_bins + 1))
    while np.any(np.diff(edges) < 1e-3):
        edges = np.sort(rng.uniform(-3.0, 3.0, n_bins + 1))
    grid = pf.Grid(edges, n_cat)
    rho_star = rng.uniform(0.2, 1.0, (n_bins, n_cat))
    rho_star /= rho_star.sum()
    prob = rng.uniform(0.05, 0.95, (n_bins, n_cat))
    sel = pf.SelectionFunction(grid, prob)
    obs = pf.forward_observe(pf.BinnedJoint(grid, rho_star), sel)
    mean_target = float(rho_star.sum(axis=1) @ grid.midpoints)
    return grid, obs, sel, mean_target


def random_censored_instance(seed: int):
    """A feasible censored_estimate problem with an interior W interval.

    Targets come from a reference (W0, r0), and the censored side keeps more
    bins than there are moment constraints so the sampled fraction is genuinely
    free (the nested-W oracle needs a feasible interval, not isolated points).
    """
    rng = np.random.default_rng(seed)
    n_bins = int(rng.integers(4, 9))
    edges = np.linspace(-1.0, 1.0, n_bins + 1) + rng.uniform(-0.05, 0.05)
    use_var = bool(rng.integers(0, 2))
    max_obs = n_bins - (3 if use_var else 2)
    n_obs = int(rng.integers(1, max_obs + 1))
    observable = np.zeros(n_bins, dtype=bool)
    observable[rng.permutation(n_bins)[:n_obs]] = True
    q = np.zeros(n_bins)
    q[observable] = rng.uniform(0.2, 1.0, n_obs)
    q /= q.sum()
    mids = 0.5 * (edges[:-1] + edges[1:])
    w0 = rng.uniform(0.25, 0.75)
    r0 = rng.uniform(0.2, 1.0, n_bins - n_obs)
    r0 /= r0.sum()
    features = [mids] + ([mids**2] if use_var else [])
    targets = [
        w0 * (f[observable] @ q[observable]) + (1.0 - w0) * (f[~observable] @ r0)
        for f in features
    ]
    return edges, q, observable, np.array(features), np.array(targets), use_var


def constraints_from_features(edges, features, targets):
    mids = 0.5 * (edges[:-1] + edges[1:])
    out = [pf.MomentConstraint(mids, float(targets[0]), "mean")]
    if len(targets) > 1:
        out.append(pf.MomentConstraint(mids**2, float(targets[1]), "second_moment"))
    return out


@pytest.fixture(scope="session")
def censored_demo():
    """Near-zero-mean score population whose negative half is the sample."""
    rng = np.random.default_rng(42)
    raw = rng.normal(0.03, 0.3, 60000)
    scores = raw[np.abs(raw) <= 1.0][:40000]
    grid = pf.Grid.from_values(scores, 100)
    truth, _ = pf.bin_samples(scores, grid.edges)
    observable = truth.midpoints < 0.0
    q = np.where(observable, truth.mass, 0.0)
    w_true = float(q.sum())
    obs_shape = pf.Marginal(grid.edges, q / w_true)
    mean_b = truth.mean
    std_b = float(np.sqrt(truth.second_moment - mean_b**2))
    return truth, obs_shape, observable, w_true, mean_b, std_b
