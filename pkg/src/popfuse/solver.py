"""Constrained maximum-entropy estimation of a population distribution.

The estimate is the joint (score bin x selection category) distribution of
maximum entropy subject to linear expectation constraints: known population
moments, plus (when a sample is available) the requirement that thinning the
estimate by the selection probabilities reproduces the observed histogram
bin by bin. The solution is an exponential family over the active cells,

    rho(cell) = exp(sum_k lam_f[k] * f_k(cell) + lam_obs[bin] * p_sel(cell)) / N,

and the multipliers are found by minimizing the smooth convex dual

    D(lam) = log N(lam) - sum_k lam_f[k] * target_k - sum_i lam_obs[i] * obs_mass[i]

whose gradient components are exactly the constraint violations. The dual is
low dimensional (one multiplier per moment plus one per bin with sample mass),
so we use damped Newton steps with the exact Hessian (the feature covariance
under the current reconstruction), a ridge fallback when the Hessian is
singular, and a backtracking line search that enforces monotone dual decrease.

Bins with zero sample mass cannot carry population mass in any cell the
selection could ever sample (the multiplier would diverge), so those cells are
masked out up front; population mass can still flow into such bins through
cells the selection never samples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dists import (
    BinnedJoint,
    Grid,
    Marginal,
    ObservedHistogram,
    SelectionFunction,
    _frozen,
    _set,
    _validated_edges,
    marginalize,
    same_edges,
)
from .errors import DegenerateSelection, GridMismatch, Infeasible, NotConverged

#: convergence tolerance on the max-norm of the dual gradient
GRAD_TOL = 1e-9
#: constraint-violation bound guaranteed by any converged estimate
RESIDUAL_TOL = 1e-8
MAX_ITER = 500
#: ridge added to the Hessian, scaled by (1 + ||H||_F)
RIDGE = 1e-10
#: multiplier norm beyond which a non-vanishing gradient means infeasibility
DIVERGENCE_NORM = 1e6
_ARMIJO = 1e-4
_MIN_STEP = 2.0**-60


@dataclass(frozen=True, eq=False)
class MomentConstraint:
    """A tabulated feature together with its required expectation value.

    ``feature`` may be a vector over bins (the common case: the feature depends
    on the score only) or a full (n_bins, n_categories) matrix.
    """

    feature: np.ndarray
    target: float
    name: str = "moment"

    def __post_init__(self):
        arr = np.array(self.feature, dtype=float)
        if arr.ndim not in (1, 2):
            raise ValueError("feature must be a vector over bins or a bins x categories matrix")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature values must be finite")
        if not np.isfinite(self.target):
            raise ValueError("moment target must be finite")
        arr.setflags(write=False)
        _set(self, "feature", arr)
        _set(self, "target", float(self.target))

    def table(self, n_bins: int, n_categories: int) -> np.ndarray:
        """Feature values broadcast to the full cell grid."""
        if self.feature.ndim == 1:
            if self.feature.size != n_bins:
                raise GridMismatch(f"{self.name}: feature length {self.feature.size} != {n_bins} bins")
            return np.broadcast_to(self.feature[:, None], (n_bins, n_categories))
        if self.feature.shape != (n_bins, n_categories):
            raise GridMismatch(
                f"{self.name}: feature shape {self.feature.shape} != ({n_bins}, {n_categories})"
            )
        return self.feature

    @classmethod
    def mean(cls, edges, target: float) -> "MomentConstraint":
        edges = _validated_edges(edges)
        return cls(0.5 * (edges[:-1] + edges[1:]), target, "mean")

    @classmethod
    def second_moment(cls, edges, target: float) -> "MomentConstraint":
        edges = _validated_edges(edges)
        return cls((0.5 * (edges[:-1] + edges[1:])) ** 2, target, "second_moment")


def moment_constraints(edges, mean: float | None = None, std: float | None = None) -> list[MomentConstraint]:
    """Mean and optional standard-deviation priors as moment constraints."""
    out: list[MomentConstraint] = []
    if mean is not None:
        out.append(MomentConstraint.mean(edges, mean))
    if std is not None:
        if mean is None:
            raise ValueError("a standard-deviation prior needs the mean as well")
        if std < 0:
            raise ValueError("std must be nonnegative")
        out.append(MomentConstraint.second_moment(edges, mean**2 + std**2))
    return out


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Everything the maximum-entropy problem is conditioned on."""

    grid: Grid
    moments: tuple[MomentConstraint, ...] = ()
    observation: tuple[ObservedHistogram, SelectionFunction] | None = None

    def __post_init__(self):
        _set(self, "moments", tuple(self.moments))
        if not self.moments and self.observation is None:
            raise ValueError("need at least one constraint")
        for m in self.moments:
            m.table(self.grid.n_bins, self.grid.n_categories)  # shape check
        if self.observation is not None:
            obs, sel = self.observation
            if not same_edges(obs.edges, self.grid.edges):
                raise GridMismatch("observed histogram does not match the grid")
            if not same_edges(sel.grid.edges, self.grid.edges) or sel.grid.n_categories != self.grid.n_categories:
                raise GridMismatch("selection function does not match the grid")


@dataclass(frozen=True, eq=False)
class DualState:
    """Multipliers of the dual problem plus the active-support bookkeeping.

    ``lambda_obs`` has one entry per bin and is zero wherever no multiplier is
    active (bins without sample mass). ``support_mask`` is True on cells forced
    to zero mass.
    """

    lambda_f: np.ndarray
    lambda_obs: np.ndarray
    support_mask: np.ndarray

    def __post_init__(self):
        _set(self, "lambda_f", _frozen(np.atleast_1d(self.lambda_f)))
        _set(self, "lambda_obs", _frozen(np.atleast_1d(self.lambda_obs)))
        _set(self, "support_mask", _frozen(self.support_mask, dtype=bool))

    @classmethod
    def zeros(cls, cs: ConstraintSet) -> "DualState":
        mask = default_support_mask(cs)
        return cls(np.zeros(len(cs.moments)), np.zeros(cs.grid.n_bins), mask)


@dataclass(frozen=True, eq=False)
class Estimate:
    """A converged reconstruction with its diagnostics."""

    joint: BinnedJoint
    marginal: Marginal
    dual: DualState
    residual_moments: np.ndarray
    residual_observation: np.ndarray
    iterations: int
    converged: bool
    observable_mass: float | None = None

    @property
    def max_residual(self) -> float:
        parts = [0.0]
        if self.residual_moments.size:
            parts.append(float(np.abs(self.residual_moments).max()))
        if self.residual_observation.size:
            parts.append(float(np.abs(self.residual_observation).max()))
        return max(parts)

    def diagnostics(self) -> dict:
        """JSON-ready record of the solve."""
        out = {
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "max_residual": self.max_residual,
            "residual_moments": [float(r) for r in self.residual_moments],
            "residual_observation_max": (
                float(np.abs(self.residual_observation).max())
                if self.residual_observation.size
                else 0.0
            ),
            "multipliers_moments": [float(v) for v in self.dual.lambda_f],
            "multipliers_observation": [float(v) for v in self.dual.lambda_obs],
        }
        if self.observable_mass is not None:
            out["observable_mass"] = float(self.observable_mass)
        return out


def default_support_mask(cs: ConstraintSet) -> np.ndarray:
    """Cells forced to zero: sampleable cells in bins with no sample mass."""
    mask = np.zeros((cs.grid.n_bins, cs.grid.n_categories), dtype=bool)
    if cs.observation is not None:
        obs, sel = cs.observation
        zero_bins = obs.shape == 0.0
        mask[zero_bins] = sel.prob[zero_bins] > 0.0
    return mask


class _DualProblem:
    """Packed dual of one constraint set on a fixed active support.

    The packed variable vector is [moment multipliers..., one multiplier per
    bin with positive sample mass].
    """

    def __init__(self, cs: ConstraintSet, support_mask: np.ndarray):
        grid = cs.grid
        n_bins, n_cat = grid.n_bins, grid.n_categories
        active = ~np.asarray(support_mask, dtype=bool)
        if active.shape != (n_bins, n_cat):
            raise GridMismatch("support mask does not match the grid")
        if not active.any():
            raise Infeasible("every cell is excluded by the observation constraint")
        self.cs = cs
        self.n_bins, self.n_cat = n_bins, n_cat
        self.active = active
        bins_idx, _ = np.nonzero(active)
        self.cell_bin = bins_idx  # bin index of each active cell
        self.n_cells = bins_idx.size

        self.K = len(cs.moments)
        if self.K:
            self.F = np.stack([m.table(n_bins, n_cat)[active] for m in cs.moments])
            self.targets_f = np.array([m.target for m in cs.moments])
        else:
            self.F = np.empty((0, self.n_cells))
            self.targets_f = np.empty(0)

        if cs.observation is not None:
            obs, sel = cs.observation
            self.obs_bins = np.nonzero(obs.shape > 0.0)[0]
            self.rho_o = (obs.inclusion_rate * obs.shape)[self.obs_bins]
            self.prob_cells = sel.prob[active]
        else:
            self.obs_bins = np.empty(0, dtype=int)
            self.rho_o = np.empty(0)
            self.prob_cells = np.zeros(self.n_cells)
        self.dim = self.K + self.obs_bins.size
        self.targets = np.concatenate([self.targets_f, self.rho_o])

    # -- packing ---------------------------------------------------------
    def pack(self, state: DualState) -> np.ndarray:
        return np.concatenate([state.lambda_f, state.lambda_obs[self.obs_bins]])

    def to_state(self, theta: np.ndarray) -> DualState:
        lam_obs = np.zeros(self.n_bins)
        lam_obs[self.obs_bins] = theta[self.K :]
        return DualState(theta[: self.K].copy(), lam_obs, ~self.active)

    # -- evaluation ------------------------------------------------------
    def _logits(self, theta: np.ndarray) -> np.ndarray:
        g = np.zeros(self.n_cells)
        if self.K:
            g += theta[: self.K] @ self.F
        if self.obs_bins.size:
            lam_full = np.zeros(self.n_bins)
            lam_full[self.obs_bins] = theta[self.K :]
            g += lam_full[self.cell_bin] * self.prob_cells
        return g

    def value_state(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        """Dual objective and the primal reconstruction, overflow guarded."""
        g = self._logits(theta)
        top = g.max()
        z = np.exp(g - top)
        total = z.sum()
        log_norm = top + np.log(total)
        rho = z / total
        return float(log_norm - theta @ self.targets), rho

    def gradient(self, rho: np.ndarray) -> np.ndarray:
        parts = []
        if self.K:
            parts.append(self.F @ rho - self.targets_f)
        if self.obs_bins.size:
            seen = np.bincount(self.cell_bin, weights=rho * self.prob_cells, minlength=self.n_bins)
            parts.append(seen[self.obs_bins] - self.rho_o)
        if not parts:
            return np.empty(0)
        return np.concatenate(parts)

    def hessian(self, rho: np.ndarray) -> np.ndarray:
        K, n_obs = self.K, self.obs_bins.size
        H = np.empty((self.dim, self.dim))
        mu = np.empty(self.dim)
        if K:
            Fr = self.F * rho
            H[:K, :K] = Fr @ self.F.T
            mu[:K] = Fr.sum(axis=1)
        if n_obs:
            w = rho * self.prob_cells
            mu[K:] = np.bincount(self.cell_bin, weights=w, minlength=self.n_bins)[self.obs_bins]
            H[K:, K:] = np.diag(
                np.bincount(self.cell_bin, weights=w * self.prob_cells, minlength=self.n_bins)[self.obs_bins]
            )
            if K:
                cross = np.stack(
                    [
                        np.bincount(self.cell_bin, weights=self.F[k] * w, minlength=self.n_bins)[self.obs_bins]
                        for k in range(K)
                    ]
                )
                H[:K, K:] = cross
                H[K:, :K] = cross.T
        H -= np.outer(mu, mu)
        return H

    def joint(self, rho: np.ndarray) -> BinnedJoint:
        mass = np.zeros((self.n_bins, self.n_cat))
        mass[self.active] = rho
        return BinnedJoint(Grid(self.cs.grid.edges, self.n_cat), mass)


def _check_feasible(problem: _DualProblem) -> None:
    cs = problem.cs
    if cs.observation is not None:
        obs, sel = cs.observation
        unreachable = (obs.shape > 0.0) & (sel.prob.max(axis=1) == 0.0)
        if unreachable.any():
            raise Infeasible(
                f"{int(unreachable.sum())} bins carry sample mass but can never be sampled"
            )
    for k, m in enumerate(cs.moments):
        values = problem.F[k]
        lo, hi = float(values.min()), float(values.max())
        if m.target < lo or m.target > hi:
            raise Infeasible(
                f"{m.name} target {m.target!r} outside the achievable range [{lo!r}, {hi!r}]"
            )


def _newton(problem: _DualProblem, theta: np.ndarray) -> tuple[np.ndarray, int]:
    if problem.dim == 0:
        return theta, 0
    value, rho = problem.value_state(theta)
    eye = np.eye(problem.dim)
    for iteration in range(1, MAX_ITER + 1):
        grad = problem.gradient(rho)
        grad_max = float(np.abs(grad).max())
        if grad_max <= GRAD_TOL:
            return theta, iteration - 1
        if float(np.abs(theta).max()) > DIVERGENCE_NORM:
            raise Infeasible(
                f"multipliers diverged (|lambda| > {DIVERGENCE_NORM:g}) with "
                f"gradient {grad_max:.3e}: constraints look unsatisfiable"
            )
        hess = problem.hessian(rho)
        ridge = RIDGE * (1.0 + float(np.linalg.norm(hess)))
        step_dir = None
        for _ in range(4):
            try:
                step_dir = np.linalg.solve(hess + ridge * eye, -grad)
            except np.linalg.LinAlgError:
                ridge *= 1e3
                continue
            if np.all(np.isfinite(step_dir)):
                break
            ridge *= 1e3
            step_dir = None
        if step_dir is None:
            step_dir = -grad
        descent = float(grad @ step_dir)
        if descent >= 0.0:
            step_dir = -grad
            descent = -float(grad @ grad)
        # Near the optimum the predicted dual decrease drops below the float
        # resolution of the dual value and an Armijo test turns into noise, so
        # take the plain Newton step whenever it keeps shrinking the gradient.
        if grad_max <= 1e-6:
            candidate = theta + step_dir
            new_value, new_rho = problem.value_state(candidate)
            if (
                np.isfinite(new_value)
                and float(np.abs(problem.gradient(new_rho)).max()) < grad_max
            ):
                theta, value, rho = candidate, new_value, new_rho
                continue
        t = 1.0
        slack = 1e-14 * (1.0 + abs(value))  # float-resolution allowance
        while True:
            candidate = theta + t * step_dir
            new_value, new_rho = problem.value_state(candidate)
            if np.isfinite(new_value) and new_value <= value + _ARMIJO * t * descent + slack:
                break
            t *= 0.5
            if t < _MIN_STEP:
                raise NotConverged(
                    f"line search stalled at iteration {iteration} with gradient {grad_max:.3e}"
                )
        theta, value, rho = candidate, new_value, new_rho
    raise NotConverged(
        f"no convergence in {MAX_ITER} iterations "
        f"(gradient {float(np.abs(problem.gradient(rho)).max()):.3e})"
    )


def _solve(cs: ConstraintSet, init: DualState | None = None) -> tuple[DualState, int, _DualProblem]:
    state = DualState.zeros(cs) if init is None else init
    problem = _DualProblem(cs, state.support_mask)
    _check_feasible(problem)
    theta, iterations = _newton(problem, problem.pack(state))
    return problem.to_state(theta), iterations, problem


def solve_dual(cs: ConstraintSet, init: DualState | None = None) -> DualState:
    """Multipliers satisfying every constraint to within the gradient tolerance."""
    state, _, _ = _solve(cs, init)
    return state


def dual_objective(state: DualState, cs: ConstraintSet) -> float:
    problem = _DualProblem(cs, state.support_mask)
    value, _ = problem.value_state(problem.pack(state))
    return value


def dual_gradient(state: DualState, cs: ConstraintSet) -> np.ndarray:
    """Constraint violations of the reconstruction at ``state``, packed."""
    problem = _DualProblem(cs, state.support_mask)
    _, rho = problem.value_state(problem.pack(state))
    return problem.gradient(rho)


def reconstruct_primal(state: DualState, cs: ConstraintSet) -> BinnedJoint:
    """Exponential-family joint defined by the multipliers; masked cells are 0."""
    problem = _DualProblem(cs, state.support_mask)
    _, rho = problem.value_state(problem.pack(state))
    return problem.joint(rho)


def _residuals(
    joint: BinnedJoint, cs: ConstraintSet
) -> tuple[np.ndarray, np.ndarray]:
    n_bins, n_cat = joint.grid.n_bins, joint.grid.n_categories
    res_m = np.array(
        [abs(float((m.table(n_bins, n_cat) * joint.mass).sum()) - m.target) for m in cs.moments]
    )
    if cs.observation is not None:
        obs, sel = cs.observation
        seen = (joint.mass * sel.prob).sum(axis=1)
        res_o = np.abs(seen - obs.inclusion_rate * obs.shape)
    else:
        res_o = np.zeros(n_bins)
    return res_m, res_o


def estimate_population(
    obs: ObservedHistogram,
    sel: SelectionFunction,
    moments=(),
) -> Estimate:
    """Fuse a biased sample, its selection probabilities, and prior moments."""
    if not same_edges(obs.edges, sel.grid.edges):
        raise GridMismatch("observed histogram and selection function bin edges differ")
    if not np.any(sel.prob > 0.0):
        raise DegenerateSelection("selection probabilities are identically zero")
    cs = ConstraintSet(sel.grid, tuple(moments), (obs, sel))
    state, iterations, problem = _solve(cs)
    _, rho = problem.value_state(problem.pack(state))
    joint = problem.joint(rho)
    res_m, res_o = _residuals(joint, cs)
    return Estimate(
        joint=joint,
        marginal=marginalize(joint),
        dual=state,
        residual_moments=res_m,
        residual_observation=res_o,
        iterations=iterations,
        converged=True,
    )


def pure_sample_estimate(obs: ObservedHistogram) -> Marginal:
    """Benchmark: take the population to be distributed exactly as the sample."""
    return Marginal(obs.edges, obs.shape)


def pure_prior_estimate(grid: Grid, moments=()) -> Marginal:
    """Benchmark: maximum entropy given the prior moments only."""
    moments = tuple(moments)
    if not moments:
        return Marginal.uniform(grid.edges)
    cs = ConstraintSet(grid, moments, None)
    state, _, problem = _solve(cs)
    _, rho = problem.value_state(problem.pack(state))
    return marginalize(problem.joint(rho))


def censored_estimate(
    obs_shape: Marginal,
    observable,
    moments=(),
) -> Estimate:
    """Reconstruct a population sampled deterministically from part of its range.

    The sample covers the observable bins completely and the censored bins not
    at all, so the sampled fraction of the population is unknown. The estimate
    maximizes entropy subject to the prior moments and to its conditional shape
    on the observable bins matching the sample exactly; the mass it ends up
    placing on the observable side is the recovered sampled fraction, reported
    as ``observable_mass``.
    """
    observable = np.asarray(observable, dtype=bool)
    edges = obs_shape.edges
    n_bins = obs_shape.n_bins
    if observable.shape != (n_bins,):
        raise GridMismatch("observable mask must have one entry per bin")
    if not observable.any():
        raise Infeasible("no bin is observable")
    q = obs_shape.mass
    if np.any(q[~observable] > 0.0):
        raise ValueError("observed shape carries mass on censored bins")

    grid2 = Grid(edges, 2)
    moments = tuple(moments)

    if observable.all():
        # nothing censored: the sample pins the whole distribution
        mass = np.zeros((n_bins, 2))
        mass[:, 1] = q
        joint = BinnedJoint(grid2, mass)
        cs_m = ConstraintSet(grid2, moments) if moments else None
        res_m = _residuals(joint, cs_m)[0] if cs_m else np.empty(0)
        return Estimate(
            joint=joint,
            marginal=marginalize(joint),
            dual=DualState(np.zeros(len(moments)), np.zeros(n_bins), np.zeros((n_bins, 2), bool)),
            residual_moments=res_m,
            residual_observation=np.zeros(n_bins),
            iterations=0,
            converged=True,
            observable_mass=1.0,
        )

    # Active support: category 1 is the sampled state (observable bins with
    # sample mass), category 0 the never-sampled state (censored bins).
    mask = np.ones((n_bins, 2), dtype=bool)
    mask[observable & (q > 0.0), 1] = False
    mask[~observable, 0] = False

    # Conditional-shape constraints: mass in an observable bin must equal its
    # sample share of the total observable mass (linear, target zero).
    shape_constraints = []
    for i in np.nonzero(observable & (q > 0.0))[0]:
        feature = np.where(observable, -q[i], 0.0)
        feature[i] += 1.0
        shape_constraints.append(MomentConstraint(feature, 0.0, f"shape_bin_{i}"))

    cs = ConstraintSet(grid2, moments + tuple(shape_constraints), None)
    init = DualState(np.zeros(len(cs.moments)), np.zeros(n_bins), mask)
    state, iterations, problem = _solve(cs, init)
    _, rho = problem.value_state(problem.pack(state))
    joint = problem.joint(rho)
    marginal = marginalize(joint)

    w = float(joint.mass[observable, 1].sum())
    res_m = _residuals(joint, ConstraintSet(grid2, moments))[0] if moments else np.empty(0)
    res_o = np.zeros(n_bins)
    if w > 0.0:
        conditional = marginal.mass[observable] / w
        res_o[observable] = np.abs(conditional - q[observable])
    return Estimate(
        joint=joint,
        marginal=marginal,
        dual=state,
        residual_moments=res_m,
        residual_observation=res_o,
        iterations=iterations,
        converged=True,
        observable_mass=w,
    )
