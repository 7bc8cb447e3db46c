"""Command-line front end: simulate, estimate, censored, sentiment.

Data goes to files under --out; diagnostics go to standard error. Every
subcommand is deterministic given its flags: stochastic subcommands require an
explicit --seed, and reruns produce byte-identical outputs at any --jobs.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .dists import ObservedHistogram, bin_samples, tv_error
from .errors import PopfuseError
from .sentiment import (
    CorpusConfig,
    build_population,
    run_corpus_benchmark,
    score_corpus,
    sentiment_grid,
    synthesize_corpus,
    synthetic_lexicon,
)
from .simulate import ReplicaConfig, run_benchmark
from .solver import censored_estimate, estimate_population, moment_constraints


def _positive_int(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return n


def _nonneg_int(value: str) -> int:
    n = int(value)
    if n < 0:
        raise argparse.ArgumentTypeError(f"must be a nonnegative integer, got {value}")
    return n


def _say(message: str) -> None:
    print(message, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="popfuse",
        description="Estimate population distributions from biased samples by maximum entropy.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="replicated mixture-population benchmark")
    sim.add_argument("--replicas", type=_positive_int, default=2000)
    sim.add_argument("--seed", type=_nonneg_int, required=True)
    sim.add_argument("--population-size", type=_positive_int, default=10_000)
    sim.add_argument("--components", type=_positive_int, default=4)
    sim.add_argument("--mean-range", type=float, nargs=2, default=(-5.0, 5.0), metavar=("LO", "HI"))
    sim.add_argument("--std-range", type=float, nargs=2, default=(0.0, 1.0), metavar=("LO", "HI"))
    sim.add_argument("--selection-range", type=float, nargs=2, default=(0.0, 1.0), metavar=("LO", "HI"))
    sim.add_argument("--bins", type=_positive_int, default=100)
    sim.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1)
    sim.add_argument("--out", required=True)
    sim.add_argument("--svg", action="store_true", help="also render the error-distribution figure")
    sim.set_defaults(func=cmd_simulate)

    est = sub.add_parser("estimate", help="estimate a population from observed data files")
    est.add_argument("--obs", required=True, help="observed histogram CSV (bin_lo,bin_hi,mass)")
    est.add_argument("--selection", required=True, help="selection CSV (bin_lo,bin_hi,category,prob)")
    est.add_argument("--inclusion-rate", type=float, required=True)
    est.add_argument("--mean", type=float, default=None, help="prior mean of the population")
    est.add_argument("--std", type=float, default=None, help="prior std (requires --mean)")
    est.add_argument("--out", required=True)
    est.add_argument("--svg", action="store_true")
    est.set_defaults(func=cmd_estimate)

    cen = sub.add_parser("censored", help="reconstruct from a deterministically censored sample")
    cen.add_argument("--obs", required=True, help="observed shape CSV, zero mass on censored bins")
    group = cen.add_mutually_exclusive_group(required=True)
    group.add_argument("--observable-below", type=float, default=None, metavar="X",
                       help="bins with midpoint < X are observable")
    group.add_argument("--observable-above", type=float, default=None, metavar="X",
                       help="bins with midpoint > X are observable")
    cen.add_argument("--mean", type=float, default=None)
    cen.add_argument("--std", type=float, default=None)
    cen.add_argument("--truth", default=None, help="ground-truth marginal CSV for error reporting")
    cen.add_argument("--out", required=True)
    cen.add_argument("--svg", action="store_true")
    cen.set_defaults(func=cmd_censored)

    sen = sub.add_parser("sentiment", help="score a corpus and run the random-sample benchmark")
    sen.add_argument("--corpus", default=None, help="TSV corpus: doc_id<TAB>user_id<TAB>text")
    sen.add_argument("--lexicon", default=None, help="lexicon CSV: word,score")
    sen.add_argument("--synthesize", action="store_true", help="generate a synthetic corpus instead")
    sen.add_argument("--users", type=_positive_int, default=20, help="synthetic user count")
    sen.add_argument("--docs-per-user", type=_positive_int, default=300)
    sen.add_argument("--polarization", type=float, default=1.5)
    sen.add_argument("--min-docs", type=_positive_int, default=100)
    sen.add_argument("--tails", type=_positive_int, default=5)
    sen.add_argument("--replicas", type=_positive_int, default=600)
    sen.add_argument("--seed", type=_nonneg_int, required=True)
    sen.add_argument("--census", action="store_true", help="selection probability 1 for every user")
    sen.add_argument("--bins", type=_positive_int, default=100)
    sen.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1)
    sen.add_argument("--out", required=True)
    sen.add_argument("--svg", action="store_true")
    sen.set_defaults(func=cmd_sentiment)

    return parser


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = ReplicaConfig(
        n_replicas=args.replicas,
        rng_seed=args.seed,
        population_size=args.population_size,
        n_components=args.components,
        mean_range=tuple(args.mean_range),
        std_range=tuple(args.std_range),
        selection_range=tuple(args.selection_range),
        n_bins=args.bins,
    )
    report = run_benchmark(cfg, jobs=args.jobs)
    out = _outdir(args)
    io.write_replicas_csv(report, out / "replicas.csv")
    io.write_json(report.summary(), out / "summary.json")
    if args.svg:
        from .plots import save_error_histogram

        save_error_histogram(out / "errors.svg", report.errors, hashsalt=str(args.seed))
    failed = sum(report.n_failed(name) for name in report.estimators)
    means = {n: report.summary()["estimators"][n]["mean"] for n in report.estimators}
    _say(f"simulate: {cfg.n_replicas} replicas, mean errors {means}, {failed} failed solves")
    return 0 if failed == 0 else 1


def _load_moments(args, edges):
    if args.std is not None and args.mean is None:
        raise PopfuseError("--std requires --mean")
    return moment_constraints(edges, mean=args.mean, std=args.std)


def cmd_estimate(args) -> int:
    obs_marginal = io.read_marginal_csv(args.obs)
    sel = io.read_selection_csv(args.selection)
    obs = ObservedHistogram(obs_marginal.edges, obs_marginal.mass, args.inclusion_rate)
    moments = _load_moments(args, obs.edges)
    out = _outdir(args)
    try:
        est = estimate_population(obs, sel, moments)
    except PopfuseError as exc:
        io.write_json(
            {"converged": False, "error": type(exc).__name__.lower(), "detail": str(exc)},
            out / "diagnostics.json",
        )
        _say(f"estimate failed: {type(exc).__name__.lower()}: {exc}")
        return 1
    io.write_marginal_csv(est.marginal, out / "estimate.csv")
    io.write_json(est.diagnostics(), out / "diagnostics.json")
    if args.svg:
        from .plots import save_marginal_plot

        save_marginal_plot(
            out / "estimate.svg",
            {"observed": obs.as_marginal(), "estimate": est.marginal},
            hashsalt="0",
        )
    _say(f"estimate: converged in {est.iterations} iterations, max residual {est.max_residual:.2e}")
    return 0


def cmd_censored(args) -> int:
    obs_shape = io.read_marginal_csv(args.obs)
    mids = obs_shape.midpoints
    if args.observable_below is not None:
        observable = mids < args.observable_below
    else:
        observable = mids > args.observable_above
    moments = _load_moments(args, obs_shape.edges)
    out = _outdir(args)
    try:
        est = censored_estimate(obs_shape, observable, moments)
    except PopfuseError as exc:
        io.write_json(
            {"converged": False, "error": type(exc).__name__.lower(), "detail": str(exc)},
            out / "diagnostics.json",
        )
        _say(f"censored estimate failed: {type(exc).__name__.lower()}: {exc}")
        return 1
    diagnostics = est.diagnostics()
    curves = {"observed": obs_shape, "estimate": est.marginal}
    if args.truth:
        truth = io.read_marginal_csv(args.truth)
        curves["truth"] = truth
        errors = {
            "pure_sample": tv_error(obs_shape, truth),
            "estimate": tv_error(est.marginal, truth),
        }
        if args.std is not None:
            mean_only = censored_estimate(
                obs_shape, observable, moment_constraints(obs_shape.edges, mean=args.mean)
            )
            errors["mean_only"] = tv_error(mean_only.marginal, truth)
        diagnostics["errors_vs_truth"] = errors
    io.write_marginal_csv(est.marginal, out / "estimate.csv")
    io.write_json(diagnostics, out / "diagnostics.json")
    if args.svg:
        from .plots import save_marginal_plot

        save_marginal_plot(out / "estimate.svg", curves, hashsalt="0")
    _say(
        f"censored: converged in {est.iterations} iterations, "
        f"recovered observable mass {est.observable_mass:.4f}"
    )
    return 0


def cmd_sentiment(args) -> int:
    out = _outdir(args)
    if args.synthesize:
        lexicon = synthetic_lexicon()
        records = synthesize_corpus(args.users, args.docs_per_user, args.polarization, args.seed)
        io.write_corpus_tsv(records, out / "corpus.tsv")
        io.write_lexicon_csv(lexicon, out / "lexicon.csv")
    else:
        if not args.corpus or not args.lexicon:
            raise PopfuseError("need --corpus and --lexicon, or --synthesize")
        records = io.read_corpus_tsv(args.corpus)
        lexicon = io.read_lexicon_csv(args.lexicon)

    scored, n_unmatched = score_corpus(records, lexicon)
    if n_unmatched:
        _say(f"sentiment: {n_unmatched} documents matched no lexicon word and were excluded")
    if not scored:
        _say("sentiment: no document matched the lexicon")
        return 1
    io.write_scored_csv(scored, out / "scored.csv")

    cfg = CorpusConfig(
        rng_seed=args.seed,
        min_docs_per_user=args.min_docs,
        extreme_users_per_tail=args.tails,
        n_replicas=args.replicas,
        n_bins=args.bins,
    )
    population = build_population(records, lexicon, cfg, scored=scored, n_unmatched=n_unmatched)
    grid = sentiment_grid(cfg.n_bins)
    hist, _ = bin_samples(population.scores, grid.edges)
    io.write_marginal_csv(hist, out / "population.csv")

    report = run_corpus_benchmark(
        population.scores, population.user_labels, cfg, jobs=args.jobs, census=args.census
    )
    io.write_replicas_csv(report, out / "replicas.csv")
    summary = report.summary()
    summary["population"] = {
        "users": list(population.users),
        "n_scores": int(population.scores.size),
        "n_unmatched_documents": int(n_unmatched),
        "mean_score": population.mean_score,
    }
    io.write_json(summary, out / "summary.json")
    if args.svg:
        from .plots import save_error_histogram

        save_error_histogram(out / "errors.svg", report.errors, hashsalt=str(args.seed))
    failed = sum(report.n_failed(name) for name in report.estimators)
    means = {n: summary["estimators"][n]["mean"] for n in report.estimators}
    _say(f"sentiment: {cfg.n_replicas} replicas, mean errors {means}, {failed} failed solves")
    return 0 if failed == 0 else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PopfuseError as exc:
        _say(f"error: {type(exc).__name__.lower()}: {exc}")
        return 1
    except (OSError, ValueError) as exc:
        _say(f"error: {exc}")
        return 1


def run() -> None:
    raise SystemExit(main())
