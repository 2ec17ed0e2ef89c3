"""Choosing the grouping of clusters that maximizes estimated local power.

For rejection budget K = 1 the power of a pairing is prod Psi + prod (1-Psi)
over the selected pairs.  Maximizing it is a nonlinear assignment problem, but
conditioning the smaller product into a narrow interval makes the objective
linear in logs: partition [eps0, 2^-qbar] into A subintervals, solve one
side-constrained 0/1 assignment program per subinterval, and keep the feasible
solution with the best power.  With a fine enough partition this recovers the
exact optimum.

For K > 1 the power has no product form; a 2-opt local search over pairwise
swaps starts from the K = 1 solution and climbs until no swap improves the
(common-random-number) power estimate.

All programs are solved exactly by a depth-first branch and bound over row
assignments, with an additive objective bound and min/max side-sum feasibility
pruning; no external MILP solver is involved.  For q-bar <= 7 an equivalent
vectorized sweep over all q-bar! assignments is used, which is faster and
returns identical optima (including lexicographic tie-breaks).
"""

from __future__ import annotations

import functools
import itertools
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .crstest import k_budget
from .data import Grouping, Hypothesis, PanelDataset
from .errors import BoundError
from .estimation import (
    LimitParams,
    PsiMatrix,
    estimate_sigma,
    ols_within_group,
    psi_from_scales,
    psi_matrix,
)
from .power import PowerEstimate, power_from_limit
from .regression import RegressionSpec

ENUMERATION_MAX_QBAR = 7     # up to this size, sweep all q-bar! assignments directly
EXHAUSTIVE_MAX_QBAR = 8      # hard guard for the exhaustive oracle
UNEQUAL_MAX_SUBSETS = 10_000
EPS0_FLOOR = 1e-300          # keeps log(eps0) finite in double precision
_INTERVAL_TOL = 1e-9         # absolute slack on log-scale interval membership


@dataclass(frozen=True)
class IntervalPlan:
    """Increasing break points eps_0 < ... < eps_A = 2^-qbar for the side term."""

    eps: np.ndarray

    def __post_init__(self):
        eps = np.asarray(self.eps, dtype=np.float64)
        if eps.ndim != 1 or eps.shape[0] < 2:
            raise ValueError("interval plan needs at least one interval")
        if eps[0] <= 0.0 or np.any(np.diff(eps) <= 0.0):
            raise ValueError("interval break points must be positive and increasing")
        object.__setattr__(self, "eps", eps)

    @property
    def A(self) -> int:
        return self.eps.shape[0] - 1

    @classmethod
    def build(
        cls,
        psi: PsiMatrix,
        delta: float,
        A: int = 200,
        spacing: str = "linear",
        eps0: float | None = None,
    ) -> "IntervalPlan":
        """Default plan: the side product lives in [eps0, 2^-qbar].

        eps0 defaults to min(1 - Psi)^qbar when delta < 0 (min Psi^qbar when
        delta > 0), floored so its log is finite.
        """
        if A < 1:
            raise ValueError("A must be at least 1")
        top = 0.5 ** psi.qbar
        if eps0 is None:
            side_vals = psi.comp if delta < 0 else psi.values
            low = float(np.nanmin(side_vals))
            eps0 = max(low**psi.qbar, EPS0_FLOOR)
        eps0 = min(float(eps0), top * (1.0 - 1e-12))
        if spacing == "linear":
            eps = np.linspace(eps0, top, A + 1)
        elif spacing == "log":
            eps = np.geomspace(eps0, top, A + 1)
        else:
            raise ValueError("spacing must be 'linear' or 'log'")
        return cls(eps=eps)


@dataclass(frozen=True)
class AssignmentSolution:
    """A 0/1 assignment with its objective value and side-constraint sum."""

    z: np.ndarray
    grouping: Grouping
    objective: float
    side_sum: float
    feasible: bool = True


def _branch_coeffs(psi: PsiMatrix, delta: float):
    """Objective/side log-coefficient matrices for the sign of delta.

    delta < 0: maximize sum log Psi, side-constrain sum log(1 - Psi);
    delta > 0: the roles swap.  Excluded (NaN) pairs become -inf.
    """
    if delta == 0.0:
        raise ValueError("delta must be nonzero to pick a branch; see combine_k1")
    with np.errstate(divide="ignore", invalid="ignore"):
        log_psi = np.log(psi.values)
        log_comp = np.log(psi.comp)
    log_psi = np.where(np.isnan(log_psi), -np.inf, log_psi)
    log_comp = np.where(np.isnan(log_comp), -np.inf, log_comp)
    return (log_psi, log_comp) if delta < 0 else (log_comp, log_psi)


def _solve_assignment_bb(obj: np.ndarray, side: np.ndarray, lo: float, hi: float):
    """Exact DFS branch and bound for the side-constrained assignment program.

    Maximizes sum obj[i, cols[i]] over permutations ``cols`` subject to
    lo <= sum side[i, cols[i]] <= hi.  Cells with obj or side = -inf are
    excluded.  Pruning: (i) partial objective plus per-remaining-row column
    maxima cannot beat the incumbent; (ii) the side sum plus min/max attainable
    remainder cannot reach the interval.  Exploration is lexicographic, so the
    first incumbent among ties is the lexicographically smallest assignment.

    Returns (cols, objective, side_sum) or None if infeasible.
    """
    q = obj.shape[0]
    usable = np.isfinite(obj) & np.isfinite(side)
    best_cols: list[int] | None = None
    best_obj = -np.inf
    cols_used = np.zeros(q, dtype=bool)
    chosen = np.empty(q, dtype=np.int64)

    def dfs(row: int, obj_acc: float, side_acc: float) -> None:
        nonlocal best_cols, best_obj
        if row == q:
            if lo - _INTERVAL_TOL <= side_acc <= hi + _INTERVAL_TOL and obj_acc > best_obj:
                best_obj = obj_acc
                best_cols = chosen.tolist()
            return
        ub = obj_acc
        smin = side_acc
        smax = side_acc
        for rr in range(row, q):
            avail = usable[rr] & ~cols_used
            if not avail.any():
                return
            ub += obj[rr, avail].max()
            s = side[rr, avail]
            smin += s.min()
            smax += s.max()
        if best_cols is not None and ub <= best_obj:
            return
        if smin > hi + _INTERVAL_TOL or smax < lo - _INTERVAL_TOL:
            return
        for c in range(q):
            if cols_used[c] or not usable[row, c]:
                continue
            cols_used[c] = True
            chosen[row] = c
            dfs(row + 1, obj_acc + obj[row, c], side_acc + side[row, c])
            cols_used[c] = False

    dfs(0, 0.0, 0.0)
    if best_cols is None:
        return None
    cols = np.asarray(best_cols, dtype=np.int64)
    rows = np.arange(q)
    return cols, float(obj[rows, cols].sum()), float(side[rows, cols].sum())


def _solution_from_cols(psi: PsiMatrix, cols: np.ndarray, objective: float,
                        side_sum: float) -> AssignmentSolution:
    q = psi.qbar
    z = np.zeros((q, q), dtype=np.int64)
    z[np.arange(q), cols] = 1
    return AssignmentSolution(
        z=z, grouping=psi.grouping_for(cols), objective=objective, side_sum=side_sum
    )


def solve_interval_bilp(
    psi: PsiMatrix, interval: tuple[float, float], delta: float
) -> AssignmentSolution | None:
    """One side-constrained 0/1 assignment program on a raw-scale interval.

    Maximizes the branch objective over perfect assignments whose
    complementary log-sum lies in [log lo, log hi].  Returns None when no
    assignment is feasible.
    """
    lo, hi = float(interval[0]), float(interval[1])
    if not (lo < hi):
        raise ValueError("interval lower bound must be below the upper bound")
    if lo <= 0.0 or not math.isfinite(math.log(lo)) or not math.isfinite(math.log(hi)):
        raise ValueError("interval bounds must have finite logarithms")
    obj, side = _branch_coeffs(psi, delta)
    result = _solve_assignment_bb(obj, side, math.log(lo), math.log(hi))
    if result is None:
        return None
    cols, objective, side_sum = result
    return _solution_from_cols(psi, cols, objective, side_sum)


def _k1_power_of_perm(psi: PsiMatrix, cols: np.ndarray) -> tuple[float, float, float]:
    rows = np.arange(psi.qbar)
    pi_left = float(np.prod(psi.values[rows, cols]))
    pi_right = float(np.prod(psi.comp[rows, cols]))
    return pi_left + pi_right, pi_left, pi_right


@functools.lru_cache(maxsize=8)
def _perm_table(qbar: int) -> np.ndarray:
    table = np.array(list(itertools.permutations(range(qbar))), dtype=np.int64)
    table.setflags(write=False)
    return table


def combine_k1(
    psi: PsiMatrix,
    delta: float,
    A: int = 200,
    spacing: str = "linear",
    eps0: float | None = None,
):
    """Interval-partitioned assignment search for the K = 1 optimal pairing.

    Solves the side-constrained program on each of the A subintervals,
    evaluates the K = 1 power of every feasible solution, and returns the best
    (ties: smallest interval index, then lexicographically smallest pairing).

    Returns ``(grouping, estimate, diagnostics)`` where diagnostics holds one
    record per interval with its bounds, feasibility, and achieved power.

    delta = 0 makes the objective flat (every Psi is one half); the
    lexicographically smallest pairing is returned with a warning.
    """
    qbar = psi.qbar
    if delta == 0.0:
        warnings.warn(
            "delta = 0 makes every pairing equally powerful; returning the "
            "lexicographically smallest pairing",
            UserWarning,
            stacklevel=2,
        )
        cols = np.arange(qbar)
        value, pi_l, pi_r = _k1_power_of_perm(psi, cols)
        est = PowerEstimate(value=value, method="closed_k1", components=(pi_l, pi_r))
        return psi.grouping_for(cols), est, []

    plan = IntervalPlan.build(psi, delta, A=A, spacing=spacing, eps0=eps0)
    log_eps = np.log(plan.eps)
    obj, side = _branch_coeffs(psi, delta)

    best_cols: np.ndarray | None = None
    best_power = -np.inf
    diagnostics: list[dict] = []

    if qbar <= ENUMERATION_MAX_QBAR:
        perms = _perm_table(qbar)
        rows = np.arange(qbar)
        obj_sum = obj[rows, perms].sum(axis=1)
        side_sum = side[rows, perms].sum(axis=1)
        power = (np.prod(psi.values[rows, perms], axis=1)
                 + np.prod(psi.comp[rows, perms], axis=1))
        valid = np.isfinite(obj_sum) & np.isfinite(side_sum)
        for a in range(1, plan.A + 1):
            in_band = valid & (side_sum >= log_eps[a - 1] - _INTERVAL_TOL) \
                            & (side_sum <= log_eps[a] + _INTERVAL_TOL)
            rec = {"a": a, "lo": float(plan.eps[a - 1]), "hi": float(plan.eps[a]),
                   "feasible": bool(in_band.any()), "power": -np.inf}
            if rec["feasible"]:
                idx = np.flatnonzero(in_band)
                winner = idx[int(np.argmax(obj_sum[idx]))]
                rec["power"] = float(power[winner])
                if rec["power"] > best_power:
                    best_power = rec["power"]
                    best_cols = perms[winner]
            diagnostics.append(rec)
    else:
        for a in range(1, plan.A + 1):
            result = _solve_assignment_bb(obj, side, log_eps[a - 1], log_eps[a])
            rec = {"a": a, "lo": float(plan.eps[a - 1]), "hi": float(plan.eps[a]),
                   "feasible": result is not None, "power": -np.inf}
            if result is not None:
                cols, _, _ = result
                rec["power"], _, _ = _k1_power_of_perm(psi, cols)
                if rec["power"] > best_power:
                    best_power = rec["power"]
                    best_cols = cols
            diagnostics.append(rec)

    if best_cols is None:
        raise RuntimeError(
            "every subinterval program was infeasible; lower eps0 (the default "
            "covers all assignments, so this indicates a custom eps0 that is too large)"
        )
    value, pi_l, pi_r = _k1_power_of_perm(psi, best_cols)
    est = PowerEstimate(value=value, method="closed_k1", components=(pi_l, pi_r))
    return psi.grouping_for(best_cols), est, diagnostics


def limit_params_for_perm(psi: PsiMatrix, cols: np.ndarray) -> LimitParams:
    """Per-group (xi, sigma) induced by pairing row i with column cols[i]."""
    rows = np.arange(psi.qbar)
    return LimitParams(xi=psi.xi[rows, cols], sigma=psi.sigma[rows, cols])


def _perm_of_grouping(psi: PsiMatrix, g: Grouping) -> np.ndarray:
    col_of = {t: i for i, t in enumerate(psi.treated_ids)}
    row_of = {c: i for i, c in enumerate(psi.control_ids)}
    cols = np.empty(psi.qbar, dtype=np.int64)
    for ctrl, trt in g.groups:
        (c,) = ctrl
        (t,) = trt
        cols[row_of[c]] = col_of[t]
    return cols


def combine_exhaustive_psi(
    psi: PsiMatrix,
    delta: float,
    alpha: float,
    method: str = "auto",
    reps: int = 100_000,
    seed: int = 0,
):
    """Exhaustive power maximization over every pairing of a Psi matrix.

    The oracle: computationally heavy (q-bar! pairings) but exact up to the
    power evaluator.  Ties break to the lexicographically smallest pairing.
    """
    qbar = psi.qbar
    if qbar > EXHAUSTIVE_MAX_QBAR:
        raise BoundError(
            f"exhaustive search refuses q-bar={qbar} > {EXHAUSTIVE_MAX_QBAR}"
        )
    if method == "auto":
        method = "k1" if k_budget(1 << (qbar - 1), alpha) == 1 else "mc"
    perms = _perm_table(qbar)
    rows = np.arange(qbar)
    if method == "k1":
        power = (np.prod(psi.values[rows, perms], axis=1)
                 + np.prod(psi.comp[rows, perms], axis=1))
        power = np.where(np.isnan(power), -np.inf, power)
        winner = int(np.argmax(power))
        cols = perms[winner]
        value, pi_l, pi_r = _k1_power_of_perm(psi, cols)
        est = PowerEstimate(value=value, method="closed_k1", components=(pi_l, pi_r))
        return psi.grouping_for(cols), est
    best_cols = None
    best_est: PowerEstimate | None = None
    for cols in perms:
        if np.isnan(psi.values[rows, cols]).any():
            continue
        est = power_from_limit(limit_params_for_perm(psi, cols), delta, alpha,
                               method=method, reps=reps, seed=seed)
        if best_est is None or est.value > best_est.value:
            best_cols, best_est = cols, est
    if best_est is None:
        raise RuntimeError("no identified pairing exists")
    return psi.grouping_for(best_cols), best_est


def combine_exhaustive(
    d: PanelDataset,
    h: Hypothesis,
    spec: RegressionSpec | None = None,
    model: str = "ar1",
    alpha: float | None = None,
    delta: float | None = None,
    power_method: str = "auto",
    reps: int = 100_000,
    seed: int = 0,
):
    """Data-driven exhaustive oracle over all pairings (paired mode)."""
    spec = spec or RegressionSpec(outcome=d.y_name)
    alpha = h.alpha if alpha is None else alpha
    delta = h.delta if delta is None else delta
    psi = psi_matrix(d, replace(h, delta=delta), spec, model)
    return combine_exhaustive_psi(psi, delta, alpha, method=power_method,
                                  reps=reps, seed=seed)


def combine_loglinear(psi: PsiMatrix) -> AssignmentSolution:
    """Single-program baseline: maximize sum of log Psi + log(1 - Psi).

    A plain assignment problem without the side constraint.  It weights the
    two power terms equally and is kept for comparison only: it can perform
    worse than picking a pairing at random.
    """
    warnings.warn(
        "the log-linear objective weights both power terms equally and can "
        "perform worse than a random pairing; use combine_k1 for the real "
        "procedure",
        UserWarning,
        stacklevel=2,
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        obj = np.log(psi.values) + np.log(psi.comp)
    obj = np.where(np.isnan(obj), -np.inf, obj)
    zeros = np.zeros_like(obj)
    result = _solve_assignment_bb(obj, zeros, -1.0, 1.0)
    if result is None:
        raise RuntimeError("no identified pairing exists")
    cols, objective, _ = result
    return _solution_from_cols(psi, cols, objective, 0.0)


def combine_heuristic_psi(
    psi: PsiMatrix,
    delta: float,
    alpha: float,
    power_method: str = "auto",
    reps: int = 20_000,
    seed: int = 0,
    A: int = 200,
):
    """2-opt local search over pairwise swaps, starting from combine_k1.

    Every candidate pairing is scored with the same seed (common random
    numbers), so accepted swaps strictly increase the recorded power and the
    run is deterministic.  Returns ``(grouping, estimate, trace)``; the trace
    records the initial power and each accepted swap.
    """
    if power_method == "auto":
        power_method = "k1" if k_budget(1 << (psi.qbar - 1), alpha) == 1 else "mc"

    def evaluate(cols: np.ndarray) -> PowerEstimate:
        return power_from_limit(limit_params_for_perm(psi, cols), delta, alpha,
                                method=power_method, reps=reps, seed=seed)

    if delta == 0.0:
        cols = np.arange(psi.qbar)
    else:
        initial_grouping, _, _ = combine_k1(psi, delta, A=A)
        cols = _perm_of_grouping(psi, initial_grouping)
    current = evaluate(cols)
    trace: list[dict] = [{"swap": None, "power": current.value}]
    improved = True
    while improved:
        improved = False
        best_pair = None
        best_est = current
        for i, j in itertools.combinations(range(psi.qbar), 2):
            cand = cols.copy()
            cand[i], cand[j] = cand[j], cand[i]
            if np.isnan(psi.values[np.arange(psi.qbar), cand]).any():
                continue
            est = evaluate(cand)
            if est.value > best_est.value:
                best_pair, best_est = (i, j), est
        if best_pair is not None:
            i, j = best_pair
            cols[i], cols[j] = cols[j], cols[i]
            current = best_est
            trace.append({"swap": (i, j), "power": current.value})
            improved = True
    return psi.grouping_for(cols), current, trace


def combine_heuristic(
    d: PanelDataset,
    h: Hypothesis,
    spec: RegressionSpec | None = None,
    model: str = "ar1",
    alpha: float | None = None,
    delta: float | None = None,
    power_method: str = "auto",
    reps: int = 20_000,
    seed: int = 0,
    A: int = 200,
):
    """Data-driven 2-opt search (paired mode); see combine_heuristic_psi."""
    spec = spec or RegressionSpec(outcome=d.y_name)
    alpha = h.alpha if alpha is None else alpha
    delta = h.delta if delta is None else delta
    psi = psi_matrix(d, replace(h, delta=delta), spec, model)
    return combine_heuristic_psi(psi, delta, alpha, power_method=power_method,
                                 reps=reps, seed=seed, A=A)


def enumerate_side_subsets(big: tuple[int, ...], n_groups: int) -> list[frozenset[int]]:
    """Nonempty subsets of the larger side usable in an n_groups partition.

    Ordered by (size, members); a subset larger than len(big) - n_groups + 1
    cannot appear in any valid partition and is omitted.
    """
    max_size = len(big) - n_groups + 1
    out: list[frozenset[int]] = []
    for size in range(1, max_size + 1):
        for combo in itertools.combinations(sorted(big), size):
            out.append(frozenset(combo))
    return out


def _solve_partition_assignment(obj, side, subset_masks, full_mask, lo, hi,
                                subset_sizes, max_size):
    """Branch and bound over rows choosing disjoint subsets covering the big side.

    Same bounding as the square assignment, plus coverage pruning: the
    uncovered count must be splittable among the remaining rows with each
    getting between 1 and max_size elements, and the last row must take
    exactly the uncovered set.
    """
    q, n_sub = obj.shape
    best_choice: list[int] | None = None
    best_obj = -np.inf
    chosen = np.empty(q, dtype=np.int64)
    mask_of_full = full_mask
    total = int(bin(full_mask).count("1"))

    finite = np.isfinite(obj) & np.isfinite(side)

    def dfs(row: int, covered: int, obj_acc: float, side_acc: float) -> None:
        nonlocal best_choice, best_obj
        if row == q:
            if covered == mask_of_full and \
               lo - _INTERVAL_TOL <= side_acc <= hi + _INTERVAL_TOL and obj_acc > best_obj:
                best_obj = obj_acc
                best_choice = chosen.tolist()
            return
        remaining = q - row
        uncovered = total - int(bin(covered).count("1"))
        if uncovered < remaining or uncovered > remaining * max_size:
            return
        ub = obj_acc
        smin = side_acc
        smax = side_acc
        for rr in range(row, q):
            cand = [m for m in range(n_sub)
                    if finite[rr, m] and not (subset_masks[m] & covered)]
            if not cand:
                return
            vals = obj[rr, cand]
            svals = side[rr, cand]
            ub += vals.max()
            smin += svals.min()
            smax += svals.max()
        if best_choice is not None and ub <= best_obj:
            return
        if smin > hi + _INTERVAL_TOL or smax < lo - _INTERVAL_TOL:
            return
        for m in range(n_sub):
            if not finite[row, m] or (subset_masks[m] & covered):
                continue
            if row == q - 1 and (covered | subset_masks[m]) != mask_of_full:
                continue
            chosen[row] = m
            dfs(row + 1, covered | subset_masks[m], obj_acc + obj[row, m],
                side_acc + side[row, m])

    dfs(0, 0, 0.0, 0.0)
    if best_choice is None:
        return None
    rows = np.arange(q)
    choice = np.asarray(best_choice, dtype=np.int64)
    return choice, float(obj[rows, choice].sum()), float(side[rows, choice].sum())


def combine_unequal(
    d: PanelDataset,
    h: Hypothesis,
    spec: RegressionSpec | None = None,
    model: str = "ar1",
    delta: float | None = None,
    A: int = 200,
    partitions: list[frozenset[int]] | None = None,
):
    """K = 1 combination with unequal control/treated counts.

    The smaller side supplies one cluster per group; the larger side is
    partitioned across the groups, every cluster used exactly once.  Candidate
    subsets of the larger side are enumerated, Psi is precomputed per
    (singleton, subset) group, and the same interval-partitioned programs are
    solved with the partition constraint enforced inside the branch and bound.

    Returns ``(grouping, estimate)``.
    """
    spec = spec or RegressionSpec(outcome=d.y_name)
    delta = h.delta if delta is None else delta
    if delta == 0.0:
        raise ValueError("delta must be nonzero; the K = 1 objective is flat at delta = 0")
    controls = tuple(sorted(d.controls))
    treated = tuple(sorted(d.treated))
    if len(controls) == len(treated):
        raise ValueError("sides have equal counts; use the paired-mode routines")
    flip = len(controls) > len(treated)
    small, big = (treated, controls) if flip else (controls, treated)
    qbar = len(small)
    subsets = partitions if partitions is not None else enumerate_side_subsets(big, qbar)
    subsets = [frozenset(m) for m in subsets]
    if len(subsets) > UNEQUAL_MAX_SUBSETS:
        raise BoundError(
            f"{len(subsets)} candidate subsets exceed the guard of {UNEQUAL_MAX_SUBSETS}"
        )

    n_sub = len(subsets)
    xi = np.full((qbar, n_sub), np.nan)
    sigma = np.full((qbar, n_sub), np.nan)
    for i, j in enumerate(small):
        for m_idx, m in enumerate(subsets):
            fit = ols_within_group(d, {j} | m, spec)
            xi[i, m_idx] = np.sqrt(fit.n_g / d.n)
            sigma[i, m_idx] = estimate_sigma(fit, model, h.c)
    psi = psi_from_scales(xi, sigma, delta,
                          control_ids=small, treated_ids=tuple(range(n_sub)))

    obj, side = _branch_coeffs(psi, delta)
    plan = IntervalPlan.build(psi, delta, A=A)
    log_eps = np.log(plan.eps)
    big_index = {j: b for b, j in enumerate(sorted(big))}
    subset_masks = [sum(1 << big_index[j] for j in m) for m in subsets]
    full_mask = (1 << len(big)) - 1
    subset_sizes = [len(m) for m in subsets]
    max_size = len(big) - qbar + 1

    best_choice = None
    best_power = -np.inf
    rows = np.arange(qbar)
    for a in range(1, plan.A + 1):
        result = _solve_partition_assignment(
            obj, side, subset_masks, full_mask, log_eps[a - 1], log_eps[a],
            subset_sizes, max_size,
        )
        if result is None:
            continue
        choice, _, _ = result
        power = (float(np.prod(psi.values[rows, choice]))
                 + float(np.prod(psi.comp[rows, choice])))
        if power > best_power:
            best_power = power
            best_choice = choice
    if best_choice is None:
        raise RuntimeError("every subinterval program was infeasible; lower eps0")

    pi_l = float(np.prod(psi.values[rows, best_choice]))
    pi_r = float(np.prod(psi.comp[rows, best_choice]))
    est = PowerEstimate(value=pi_l + pi_r, method="closed_k1", components=(pi_l, pi_r))
    groups = []
    for i, j in enumerate(small):
        m = subsets[int(best_choice[i])]
        groups.append((m, frozenset({j})) if flip else (frozenset({j}), m))
    return Grouping(tuple(groups)), est


def default_delta(d: PanelDataset, positive: bool = True) -> float:
    """Default local-alternative magnitude 2*sqrt(n) (= 2*sqrt(q * T-bar)),
    signed by the direction of the alternative."""
    mag = 2.0 * math.sqrt(d.n)
    return mag if positive else -mag
