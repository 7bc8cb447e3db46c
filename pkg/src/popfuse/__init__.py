"""popfuse: population distribution estimation from biased samples.

Fuses a detailed but biased sample histogram, known selection probabilities,
and prior survey moments into the maximum-entropy estimate of the population
distribution, and ships the replicated benchmarks that quantify the gain over
using either information source alone.
"""

from .dists import (
    BinnedJoint,
    Grid,
    Marginal,
    ObservedHistogram,
    SelectionFunction,
    bin_samples,
    entropy,
    forward_observe,
    marginalize,
    tv_error,
)
from .errors import (
    DegenerateSelection,
    EmptyInput,
    EmptySample,
    FormatError,
    GridMismatch,
    Infeasible,
    InsufficientUsers,
    NotConverged,
    NotNormalized,
    PopfuseError,
)
from .sentiment import (
    CorpusConfig,
    CorpusRecord,
    Lexicon,
    Population,
    ScoredDocument,
    build_population,
    run_corpus_benchmark,
    score_corpus,
    score_document,
    synthesize_corpus,
    synthetic_lexicon,
    tokenize,
)
from .simulate import (
    BenchmarkReport,
    MixtureSpec,
    ReplicaConfig,
    draw_population,
    draw_sample,
    relative_gains,
    run_benchmark,
    summarize,
)
from .solver import (
    ConstraintSet,
    DualState,
    Estimate,
    MomentConstraint,
    censored_estimate,
    dual_gradient,
    dual_objective,
    estimate_population,
    moment_constraints,
    pure_prior_estimate,
    pure_sample_estimate,
    reconstruct_primal,
    solve_dual,
)

__version__ = "0.1.0"
