"""Lexicon sentiment scoring and the polarized-user corpus benchmark.

A document's score is the average lexicon score of its vocabulary-matched
tokens (counted with multiplicity), so it always lies in [-1, 1]. The corpus
pipeline keeps the most active users, picks the most polarized ones per tail,
and treats user identity as the selection variable: random per-user inclusion
probabilities generate biased samples whose correction is benchmarked exactly
like the simulated populations.
"""

from __future__ import annotations

import multiprocessing
import re
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dists import Grid, ObservedHistogram, SelectionFunction, bin_samples, tv_error, _set
from .errors import EmptySample, Infeasible, InsufficientUsers, NotConverged
from .simulate import MAX_REDRAWS, ReplicaResult, collect_report, replica_rng
from .solver import estimate_population, moment_constraints, pure_sample_estimate

CORPUS_ESTIMATORS = ("pure_sample", "prior_sample")

#: runs of Unicode letters; digits and underscores separate tokens
_TOKEN = re.compile(r"[^\W\d_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True, eq=False)
class Lexicon:
    """Word scores in [-1, 1]; keys are lowercased and stripped."""

    scores: dict

    def __post_init__(self):
        normalized: dict[str, float] = {}
        for word, score in self.scores.items():
            key = str(word).strip().lower()
            value = float(score)
            if not key:
                raise ValueError("empty word in lexicon")
            if not (-1.0 <= value <= 1.0):
                raise ValueError(f"score for {key!r} outside [-1, 1]: {value!r}")
            normalized[key] = value
        _set(self, "scores", normalized)

    def __len__(self) -> int:
        return len(self.scores)

    def __contains__(self, word: str) -> bool:
        return word in self.scores


class CorpusRecord(NamedTuple):
    doc_id: str
    user_id: str
    text: str


@dataclass(frozen=True)
class ScoredDocument:
    doc_id: str
    user_id: str
    matched_word_count: int
    score: float


@dataclass(frozen=True)
class CorpusConfig:
    """Corpus pipeline settings: activity filter, tails, replica count."""

    rng_seed: int
    min_docs_per_user: int = 100
    extreme_users_per_tail: int = 5
    n_replicas: int = 600
    n_bins: int = 100

    def __post_init__(self):
        if self.rng_seed < 0:
            raise ValueError("rng_seed must be nonnegative")
        if min(self.min_docs_per_user, self.extreme_users_per_tail, self.n_replicas, self.n_bins) < 1:
            raise ValueError("counts must be positive")


def score_document(
    text: str, lexicon: Lexicon, doc_id: str = "", user_id: str = ""
) -> ScoredDocument | None:
    """Average lexicon score of the matched tokens; None when nothing matches."""
    matched = [lexicon.scores[token] for token in tokenize(text) if token in lexicon]
    if not matched:
        return None
    score = float(np.clip(sum(matched) / len(matched), -1.0, 1.0))
    return ScoredDocument(doc_id, user_id, len(matched), score)


def score_corpus(records, lexicon: Lexicon) -> tuple[list[ScoredDocument], int]:
    """Score every record; returns the scored documents and the unmatched count."""
    scored: list[ScoredDocument] = []
    unmatched = 0
    for record in records:
        doc = score_document(record.text, lexicon, record.doc_id, record.user_id)
        if doc is None:
            unmatched += 1
        else:
            scored.append(doc)
    return scored, unmatched


@dataclass(frozen=True, eq=False)
class Population:
    """Scores of the selected polarized users, labeled by user category."""

    scores: np.ndarray
    user_labels: np.ndarray
    users: tuple[str, ...]
    n_unmatched: int = 0

    def __post_init__(self):
        _set(self, "scores", np.asarray(self.scores, dtype=float))
        _set(self, "user_labels", np.asarray(self.user_labels, dtype=int))

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def mean_score(self) -> float:
        return float(self.scores.mean())


def build_population(
    records, lexicon: Lexicon, cfg: CorpusConfig, *, scored=None, n_unmatched: int = 0
) -> Population:
    """Select the per-tail most polarized active users and pool their scores.

    Users qualify on their scored-document count; qualifying users are ranked
    by mean score (ties broken by user id) and the configured number is kept
    from each end. Pass ``scored`` to reuse an existing scoring pass.
    """
    if scored is None:
        scored, n_unmatched = score_corpus(records, lexicon)
    by_user: dict[str, list[float]] = {}
    for doc in scored:
        by_user.setdefault(doc.user_id, []).append(doc.score)
    eligible = {u: s for u, s in by_user.items() if len(s) >= cfg.min_docs_per_user}
    tails = cfg.extreme_users_per_tail
    if len(eligible) < 2 * tails:
        raise InsufficientUsers(
            f"{len(eligible)} users pass the {cfg.min_docs_per_user}-document filter, "
            f"need at least {2 * tails}"
        )
    ranked = sorted(eligible, key=lambda u: (float(np.mean(eligible[u])), u))
    chosen = tuple(ranked[:tails] + ranked[-tails:])
    index = {user: k for k, user in enumerate(chosen)}
    scores, labels = [], []
    for doc in scored:
        if doc.user_id in index:
            scores.append(doc.score)
            labels.append(index[doc.user_id])
    return Population(np.array(scores), np.array(labels), chosen, n_unmatched)


def sentiment_grid(n_bins: int = 100, n_categories: int = 1) -> Grid:
    """Default score binning over the full sentiment interval [-1, 1]."""
    return Grid.regular(-1.0, 1.0, n_bins, n_categories)


def _run_corpus_replica(args) -> ReplicaResult:
    scores, labels, n_users, cfg, prior_mean, census, index = args
    grid = sentiment_grid(cfg.n_bins, n_users)
    truth, _ = bin_samples(scores, grid.edges)
    for attempt in range(MAX_REDRAWS):
        rng = replica_rng(cfg.rng_seed, index, attempt)
        probs = np.ones(n_users) if census else rng.uniform(0.0, 1.0, n_users)
        keep = rng.random(len(scores)) < probs[labels]
        if keep.any():
            break
    else:
        return ReplicaResult(
            index,
            {name: float("nan") for name in CORPUS_ESTIMATORS},
            {name: False for name in CORPUS_ESTIMATORS},
            {"prior_sample": float("nan")},
            MAX_REDRAWS,
        )
    sample_hist, _ = bin_samples(scores[keep], grid.edges)
    obs = ObservedHistogram(grid.edges, sample_hist.mass, keep.mean())
    sel = SelectionFunction.per_category(grid, probs)
    prior = moment_constraints(grid.edges, mean=prior_mean)

    errors = {"pure_sample": tv_error(pure_sample_estimate(obs), truth)}
    converged = {"pure_sample": True}
    residuals: dict[str, float] = {}
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


def run_corpus_benchmark(
    scores,
    user_labels,
    cfg: CorpusConfig,
    jobs: int = 1,
    census: bool = False,
):
    """Replicated random-sample benchmark with user identity as the selection variable.

    Each replica draws one inclusion probability per user (all ones under
    ``census``), thins the documents, and compares the raw sample histogram
    against the fusion with the population mean score.
    """
    scores = np.asarray(scores, dtype=float)
    user_labels = np.asarray(user_labels, dtype=int)
    if scores.shape != user_labels.shape or scores.ndim != 1 or scores.size == 0:
        raise ValueError("scores and user_labels must be matching nonempty vectors")
    n_users = int(user_labels.max()) + 1
    # the survey prior is the population mean score measured on the score grid
    truth, _ = bin_samples(scores, sentiment_grid(cfg.n_bins).edges)
    prior_mean = truth.mean
    tasks = [
        (scores, user_labels, n_users, cfg, prior_mean, census, index)
        for index in range(cfg.n_replicas)
    ]
    if jobs > 1 and cfg.n_replicas > 1:
        with multiprocessing.Pool(processes=jobs) as pool:
            results = pool.map(_run_corpus_replica, tasks, chunksize=max(1, cfg.n_replicas // (4 * jobs)))
    else:
        results = [_run_corpus_replica(task) for task in tasks]
    results.sort(key=lambda r: r.index)
    return collect_report(
        results,
        CORPUS_ESTIMATORS,
        ("prior_sample",),
        config={
            "rng_seed": cfg.rng_seed,
            "min_docs_per_user": cfg.min_docs_per_user,
            "extreme_users_per_tail": cfg.extreme_users_per_tail,
            "n_replicas": cfg.n_replicas,
            "n_bins": cfg.n_bins,
            "n_users": n_users,
            "n_scores": int(scores.size),
            "census": bool(census),
        },
    )


def synthetic_lexicon(n_words: int = 200) -> Lexicon:
    """Deterministic alphabetic vocabulary with scores spread over [-1, 1]."""
    if n_words < 2 or n_words > 26 * 26:
        raise ValueError("n_words must be between 2 and 676")
    words = [
        "w" + chr(ord("a") + i // 26) + chr(ord("a") + i % 26) for i in range(n_words)
    ]
    scores = np.linspace(-1.0, 1.0, n_words)
    return Lexicon(dict(zip(words, scores)))


def synthesize_corpus(
    n_users: int,
    docs_per_user: int,
    polarization: float,
    seed: int,
    lexicon: Lexicon | None = None,
    words_per_doc: int = 8,
    doc_noise: float = 0.05,
) -> list[CorpusRecord]:
    """Generate a corpus of users with heterogeneous mean sentiment.

    User target means are spread evenly over ``polarization * [-0.5, 0.5]``
    (clipped to stay scoreable); each document picks vocabulary words near a
    noisy per-document target plus a few out-of-vocabulary fillers, so the
    realized document score tracks the target up to lexicon granularity.
    """
    if n_users < 1 or docs_per_user < 1:
        raise ValueError("counts must be positive")
    if polarization < 0:
        raise ValueError("polarization must be nonnegative")
    if lexicon is None:
        lexicon = synthetic_lexicon()
    vocab = sorted(lexicon.scores)
    vocab_scores = np.array([lexicon.scores[w] for w in vocab])
    order = np.argsort(vocab_scores, kind="stable")
    vocab = [vocab[i] for i in order]
    vocab_scores = vocab_scores[order]

    if n_users == 1:
        user_means = np.zeros(1)
    else:
        user_means = polarization * np.linspace(-0.5, 0.5, n_users)
    user_means = np.clip(user_means, -0.9, 0.9)

    rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
    records: list[CorpusRecord] = []
    for u in range(n_users):
        user_id = f"u{u:03d}"
        for d in range(docs_per_user):
            target = float(np.clip(user_means[u] + rng.normal(0.0, doc_noise), -0.95, 0.95))
            wanted = np.clip(target + rng.normal(0.0, 0.05, words_per_doc), -1.0, 1.0)
            picks = np.searchsorted(vocab_scores, wanted)
            picks = np.clip(picks, 0, len(vocab) - 1)
            words = [vocab[i] for i in picks]
            n_fillers = int(rng.integers(1, 4))
            words += ["zzfiller"] * n_fillers
            records.append(
                CorpusRecord(f"d{u:03d}x{d:05d}", user_id, " ".join(words))
            )
    return records
