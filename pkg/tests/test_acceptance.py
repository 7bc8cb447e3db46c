"""Acceptance gate: every primary criterion at its stated tolerance.

Each test prints one line, ``ACCEPTANCE <criterion>: PASS`` or ``... FAIL``,
so the gate can be read off a verbose run directly:

    pytest tests/test_acceptance.py -v -s
"""

import json
import time
from contextlib import contextmanager

import numpy as np
import pytest

import popfuse as pf
from popfuse import io
from popfuse.cli import main
from popfuse.solver import ConstraintSet, DualState

from conftest import (
    constraints_from_features,
    random_censored_instance,
    random_fusion_instance,
)
from oracles import censored_oracle, joint_maxent_oracle


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    print(f"ACCEPTANCE {name}: PASS")


@pytest.fixture(scope="session")
def table1_run(tmp_path_factory):
    """The desk-scale Table 1 reproduction: simulate --replicas 300 --seed 1."""
    out = tmp_path_factory.mktemp("table1") / "report"
    start = time.time()
    code = main(["simulate", "--replicas", "300", "--seed", "1", "--jobs", "1", "--out", str(out)])
    elapsed = time.time() - start
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    return summary, elapsed


def test_table1_reproduction(table1_run):
    with criterion("table1-reproduction"):
        summary, elapsed = table1_run
        assert elapsed <= 300.0, f"runtime {elapsed:.0f}s exceeds 5 minutes"
        bands = {
            "pure_prior": (0.46, 0.05, (0.42, 0.46, 0.51)),
            "pure_sample": (0.19, 0.04, (0.12, 0.18, 0.24)),
            "prior_sample": (0.12, 0.04, (0.07, 0.11, 0.17)),
        }
        for name, (mean, tol, quartiles) in bands.items():
            stats = summary["estimators"][name]
            assert abs(stats["mean"] - mean) <= tol, (name, "mean", stats["mean"])
            for key, target in zip(("p25", "median", "p75"), quartiles):
                assert abs(stats[key] - target) <= 0.06, (name, key, stats[key])


def test_relative_gain_reproduction(table1_run):
    with criterion("relative-gain-29pct"):
        summary, _ = table1_run
        gain = summary["gains"]["prior_sample_vs_pure_sample"]["mean"]
        assert abs(gain - 0.29) <= 0.08, f"mean per-replica gain {gain:.3f}"


def test_oracle_equivalence():
    with criterion("oracle-equivalence"):
        start = time.time()
        worst_fusion = 0.0
        for seed in range(100):
            grid, obs, sel, mean_target = random_fusion_instance(seed)
            est = pf.estimate_population(
                obs, sel, pf.moment_constraints(grid.edges, mean=mean_target)
            )
            reference = joint_maxent_oracle(
                grid.midpoints,
                sel.prob,
                obs.inclusion_rate * obs.shape,
                mean_target,
                grid.n_bins,
                grid.n_categories,
            )
            worst_fusion = max(worst_fusion, 0.5 * np.abs(est.joint.mass - reference).sum())
        assert worst_fusion <= 1e-6, f"fusion oracle deviation {worst_fusion:.2e}"

        worst_censored = 0.0
        for seed in range(50):
            edges, q, observable, features, targets, _ = random_censored_instance(seed)
            moments = constraints_from_features(edges, features, targets)
            est = pf.censored_estimate(pf.Marginal(edges, q), observable, moments)
            _, reference = censored_oracle(q, observable, features, targets)
            worst_censored = max(worst_censored, 0.5 * np.abs(est.marginal.mass - reference).sum())
        assert worst_censored <= 1e-5, f"censored oracle deviation {worst_censored:.2e}"

        elapsed = time.time() - start
        assert elapsed <= 120.0, f"oracle suite took {elapsed:.0f}s"


def test_constraint_residuals_on_all_replicas(table1_run):
    with criterion("constraint-residuals"):
        summary, _ = table1_run
        for name in ("pure_prior", "prior_sample"):
            stats = summary["estimators"][name]
            assert stats["n_failed"] == 0
            assert stats["max_residual"] <= 1e-8, (name, stats["max_residual"])


def test_census_identity_property():
    with criterion("census-identity"):
        rng = np.random.default_rng(123)
        for _ in range(50):
            n_bins = int(rng.integers(3, 30))
            n_cat = int(rng.integers(1, 4))
            edges = np.sort(rng.uniform(-5.0, 5.0, n_bins + 1))
            while np.any(np.diff(edges) < 1e-4):
                edges = np.sort(rng.uniform(-5.0, 5.0, n_bins + 1))
            grid = pf.Grid(edges, n_cat)
            shape = rng.uniform(0.01, 1.0, n_bins)
            shape /= shape.sum()
            obs = pf.ObservedHistogram(edges, shape, 1.0)
            sel = pf.SelectionFunction(grid, np.ones((n_bins, n_cat)))
            moments = pf.moment_constraints(edges, mean=float(shape @ grid.midpoints))
            est = pf.estimate_population(obs, sel, moments)
            assert pf.tv_error(est.marginal, obs.as_marginal()) <= 1e-8


def test_gradient_matches_finite_differences():
    with criterion("gradient-check"):
        rng = np.random.default_rng(77)
        checked = 0
        seed = 0
        while checked < 50:
            grid, obs, sel, mean_target = random_fusion_instance(seed)
            seed += 1
            cs = ConstraintSet(
                grid, tuple(pf.moment_constraints(grid.edges, mean=mean_target)), (obs, sel)
            )
            base = DualState.zeros(cs)
            theta_f = rng.normal(scale=0.5, size=1)
            theta_o = rng.normal(scale=0.5, size=grid.n_bins)
            state = DualState(theta_f, theta_o, base.support_mask)
            grad = pf.dual_gradient(state, cs)
            obs_bins = np.nonzero(obs.shape > 0)[0]
            step = 1e-6
            finite = np.empty_like(grad)
            for j in range(grad.size):
                values = []
                for sign in (1.0, -1.0):
                    tf, to = theta_f.copy(), theta_o.copy()
                    if j == 0:
                        tf[0] += sign * step
                    else:
                        to[obs_bins[j - 1]] += sign * step
                    values.append(pf.dual_objective(DualState(tf, to, base.support_mask), cs))
                finite[j] = (values[0] - values[1]) / (2 * step)
            denom = np.maximum(np.abs(finite), 1e-8)
            assert np.max(np.abs(grad - finite) / denom) <= 1e-5
            checked += 1


def test_censored_ordering_and_corpus_gain(censored_demo):
    with criterion("censored-and-corpus-ordering"):
        truth, obs_shape, observable, _, mean_b, std_b = censored_demo
        pure_error = pf.tv_error(obs_shape, truth)
        mean_only = pf.censored_estimate(
            obs_shape, observable, pf.moment_constraints(truth.edges, mean=mean_b)
        )
        mean_std = pf.censored_estimate(
            obs_shape, observable, pf.moment_constraints(truth.edges, mean=mean_b, std=std_b)
        )
        error_mean = pf.tv_error(mean_only.marginal, truth)
        error_both = pf.tv_error(mean_std.marginal, truth)
        assert pure_error > error_mean > error_both, (pure_error, error_mean, error_both)
        assert error_both <= 0.5 * pure_error, (error_both, pure_error)

        records = pf.synthesize_corpus(20, 300, 1.5, seed=2)
        cfg = pf.CorpusConfig(rng_seed=2, n_replicas=600)
        population = pf.build_population(records, pf.synthetic_lexicon(), cfg)
        report = pf.run_corpus_benchmark(population.scores, population.user_labels, cfg)
        summary = report.summary()
        means = {k: v["mean"] for k, v in summary["estimators"].items()}
        assert means["prior_sample"] < means["pure_sample"]
        gain = summary["gains"]["prior_sample_vs_pure_sample"]["of_means"]
        assert gain >= 0.15, f"corpus relative gain {gain:.3f}"
        assert summary["estimators"]["prior_sample"]["max_residual"] <= 1e-8
        assert summary["estimators"]["prior_sample"]["n_failed"] == 0


def test_determinism_of_all_subcommands(tmp_path, censored_demo):
    with criterion("determinism"):
        # simulate: identical reruns at different parallelism degrees
        sim = ["simulate", "--replicas", "6", "--seed", "4", "--population-size", "1500",
               "--bins", "30", "--svg"]
        assert main(sim + ["--jobs", "1", "--out", str(tmp_path / "s1")]) == 0
        assert main(sim + ["--jobs", "2", "--out", str(tmp_path / "s2")]) == 0
        assert main(sim + ["--jobs", "1", "--out", str(tmp_path / "s3")]) == 0
        for name in ("replicas.csv", "summary.json", "errors.svg"):
            reference = (tmp_path / "s1" / name).read_bytes()
            assert (tmp_path / "s2" / name).read_bytes() == reference
            assert (tmp_path / "s3" / name).read_bytes() == reference

        # estimate: identical reruns
        rng = np.random.default_rng(0)
        grid = pf.Grid(np.linspace(-1, 1, 21), 2)
        mass = rng.uniform(0.1, 1.0, (20, 2))
        mass /= mass.sum()
        joint = pf.BinnedJoint(grid, mass)
        sel = pf.SelectionFunction.per_category(grid, np.array([0.8, 0.3]))
        obs = pf.forward_observe(joint, sel)
        io.write_marginal_csv(obs.as_marginal(), tmp_path / "obs.csv")
        io.write_selection_csv(sel, tmp_path / "sel.csv")
        est = ["estimate", "--obs", str(tmp_path / "obs.csv"),
               "--selection", str(tmp_path / "sel.csv"),
               "--inclusion-rate", repr(obs.inclusion_rate),
               "--mean", repr(float(mass.sum(axis=1) @ grid.midpoints)), "--svg"]
        assert main(est + ["--out", str(tmp_path / "e1")]) == 0
        assert main(est + ["--out", str(tmp_path / "e2")]) == 0
        for name in ("estimate.csv", "diagnostics.json", "estimate.svg"):
            assert (tmp_path / "e1" / name).read_bytes() == (tmp_path / "e2" / name).read_bytes()

        # censored: identical reruns
        truth, obs_shape, _, _, mean_b, std_b = censored_demo
        io.write_marginal_csv(obs_shape, tmp_path / "cobs.csv")
        io.write_marginal_csv(truth, tmp_path / "ctruth.csv")
        cen = ["censored", "--obs", str(tmp_path / "cobs.csv"), "--observable-below", "0.0",
               "--mean", repr(mean_b), "--std", repr(std_b),
               "--truth", str(tmp_path / "ctruth.csv"), "--svg"]
        assert main(cen + ["--out", str(tmp_path / "c1")]) == 0
        assert main(cen + ["--out", str(tmp_path / "c2")]) == 0
        for name in ("estimate.csv", "diagnostics.json", "estimate.svg"):
            assert (tmp_path / "c1" / name).read_bytes() == (tmp_path / "c2" / name).read_bytes()

        # sentiment: identical reruns at different parallelism degrees
        sen = ["sentiment", "--synthesize", "--users", "8", "--docs-per-user", "150",
               "--min-docs", "50", "--tails", "2", "--replicas", "8", "--seed", "9",
               "--bins", "40", "--svg"]
        assert main(sen + ["--jobs", "1", "--out", str(tmp_path / "t1")]) == 0
        assert main(sen + ["--jobs", "2", "--out", str(tmp_path / "t2")]) == 0
        for name in ("corpus.tsv", "lexicon.csv", "scored.csv", "population.csv",
                     "replicas.csv", "summary.json", "errors.svg"):
            assert (tmp_path / "t1" / name).read_bytes() == (tmp_path / "t2" / name).read_bytes()
