"""Local asymptotic power of the sign-change randomization test.

In the limit experiment the group scores are independent draws Z_g + xi_g *
delta with Z_g ~ N(0, sigma_g^2).  The rejection probability pi(delta, alpha)
of the test applied to these scores is the local asymptotic power.  Three
evaluators are provided:

- ``power_k1``: closed form for rejection budget K = 1, where rejection means
  the observed statistic strictly exceeds every other randomization value.
  Then pi = pi_L + pi_R with pi_L = prod_g Phi(-xi_g delta / sigma_g) and
  pi_R the product of the complements (the one-sided-test powers).
- ``power_exact``: for q <= 4, enumerates every ordering pattern that leaves
  the observed statistic among the top K values, writing each pattern as an
  intersection of half-space events in the partial sums of the scores; each
  joint probability is evaluated by Monte Carlo on one shared set of draws,
  so the patterns partition the rejection event exactly in-sample.
- ``power_mc``: simulates the limit experiment directly for any (q, K).

Normal cdf values come from scipy's erfc-based ``ndtr`` (absolute error below
1e-15), so independent implementations agree to ~1e-12.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .crstest import k_budget, sign_changes
from .data import Grouping, Hypothesis, PanelDataset
from .errors import BoundError
from .estimation import LimitParams, group_limit_params
from .regression import RegressionSpec

MC_BLOCK = 1 << 15  # fixed simulation block size; results never depend on scheduling

EXACT_MAX_Q = 4  # enumeration cost guard: L <= 7, |sign patterns| = 2^L <= 128


@dataclass(frozen=True)
class PowerEstimate:
    """A power value in [0, 1] with method and error metadata."""

    value: float
    method: str  # 'closed_k1' | 'exact_enum' | 'monte_carlo'
    mc_reps: int | None = None
    mc_se: float | None = None
    components: tuple[float, float] | None = None  # (pi_left, pi_right)

    def __post_init__(self):
        if not -1e-12 <= self.value <= 1.0 + 1e-12:
            raise ValueError(f"power value {self.value} outside [0, 1]")
        if self.method == "closed_k1" and self.components is None:
            raise ValueError("closed-form estimates must carry (pi_left, pi_right)")


@dataclass(frozen=True)
class EnumerationPlan:
    """Bookkeeping for the exact ordering enumeration at q <= 4.

    ``subsets(k)`` yields the index sets H of the k-1 sign vectors allowed to
    beat the observed statistic; ``sign_patterns()`` yields the 2^L half-space
    orientation patterns.
    """

    q: int
    alpha: float

    def __post_init__(self):
        if self.q > EXACT_MAX_Q:
            raise BoundError(
                f"exact enumeration supports q <= {EXACT_MAX_Q} (got q={self.q}); "
                f"use the Monte Carlo evaluator instead"
            )
        if self.q < 1:
            raise ValueError("q must be at least 1")

    @property
    def L(self) -> int:
        return (1 << (self.q - 1)) - 1

    @property
    def K(self) -> int:
        return k_budget(1 << (self.q - 1), self.alpha)

    def subsets(self, k: int):
        return itertools.combinations(range(self.L), k - 1)

    def sign_patterns(self):
        return itertools.product((1, 2), repeat=self.L)


def power_k1(lp: LimitParams, delta: float, alpha: float | None = None) -> PowerEstimate:
    """Closed-form local power when the rejection budget is K = 1.

    If ``alpha`` is given it must satisfy floor(alpha * 2^(q-1)) == 1; larger
    budgets need the exact or Monte Carlo evaluators.
    """
    if alpha is not None:
        k = k_budget(1 << (lp.q - 1), alpha)
        if k != 1:
            raise ValueError(
                f"alpha={alpha} gives rejection budget K={k} != 1 at q={lp.q}; "
                f"use power_exact or power_mc"
            )
    z = lp.xi * delta / lp.sigma
    pi_left = float(np.prod(ndtr(-z)))
    pi_right = float(np.prod(ndtr(z)))
    return PowerEstimate(
        value=pi_left + pi_right,
        method="closed_k1",
        components=(pi_left, pi_right),
    )


def _draw_scores(lp: LimitParams, delta: float, reps: int, seed) -> np.ndarray:
    """Blocked draws of Z + xi*delta; block seeding is scheduling-independent."""
    out = np.empty((reps, lp.q))
    shift = lp.xi * delta
    start = 0
    block_idx = 0
    while start < reps:
        stop = min(start + MC_BLOCK, reps)
        rng = np.random.default_rng(np.random.SeedSequence((seed, block_idx)))
        z = rng.standard_normal((stop - start, lp.q)) * lp.sigma
        out[start:stop] = z + shift
        start = stop
        block_idx += 1
    return out


def power_mc(
    lp: LimitParams, delta: float, alpha: float, reps: int = 100_000, seed: int = 0
) -> PowerEstimate:
    """Monte Carlo local power: simulate the limit experiment and run the test.

    Draws are seeded in fixed-size blocks so the estimate depends only on
    (seed, reps).  When K = 1 the all-negative / all-positive score events are
    tallied as the (pi_left, pi_right) components.
    """
    if reps < 1000:
        raise ValueError("reps must be at least 1000")
    s = sign_changes(lp.q)
    n_u = s.n_unique
    k = min(k_budget(n_u, alpha), n_u - 1)
    signs = s.unique.astype(np.float64).T  # (q, n_u)
    rejections = 0
    left = right = 0
    start = 0
    block_idx = 0
    shift = lp.xi * delta
    while start < reps:
        stop = min(start + MC_BLOCK, reps)
        rng = np.random.default_rng(np.random.SeedSequence((seed, block_idx)))
        w = rng.standard_normal((stop - start, lp.q)) * lp.sigma + shift
        values = np.abs(w @ signs) / lp.q
        statistic = values[:, 0]
        cv = np.partition(values, n_u - k - 1, axis=1)[:, n_u - k - 1]
        rejections += int(np.count_nonzero(statistic > cv))
        if k == 1:
            left += int(np.count_nonzero(np.all(w < 0.0, axis=1)))
            right += int(np.count_nonzero(np.all(w > 0.0, axis=1)))
        start = stop
        block_idx += 1
    p = rejections / reps
    se = math.sqrt(max(p * (1.0 - p), 0.0) / reps)
    components = (left / reps, right / reps) if k == 1 else None
    return PowerEstimate(value=p, method="monte_carlo", mc_reps=reps, mc_se=se,
                         components=components)


def power_exact(
    lp: LimitParams,
    delta: float,
    alpha: float,
    term_reps: int = 200_000,
    seed: int = 0,
) -> PowerEstimate:
    """Exact ordering enumeration of the local power for q <= 4.

    The rejection event splits over (rank k, beating set H, orientation
    pattern m) into disjoint intersections of half-space events in the
    same-sign / flipped-sign partial sums of the scores.  Each term's
    probability is evaluated on one shared set of ``term_reps`` draws, so the
    terms stay exactly disjoint in-sample and their sum equals the direct
    frequency of the union.
    """
    plan = EnumerationPlan(q=lp.q, alpha=alpha)
    L, K = plan.L, plan.K
    if K == 0:
        return PowerEstimate(value=0.0, method="exact_enum", mc_reps=term_reps, mc_se=0.0)
    s = sign_changes(lp.q)
    gbar = s.nonidentity  # (L, q)
    w = _draw_scores(lp, delta, term_reps, seed)
    if L == 0:
        # q = 1: reject only when the budget covers the whole set, impossible here
        total = 0
    else:
        same = (gbar == 1).astype(np.float64)
        diff = (gbar == -1).astype(np.float64)
        v_same = w @ same.T  # (reps, L)
        v_diff = w @ diff.T
        pos_s, neg_s = v_same > 0.0, v_same < 0.0
        pos_d, neg_d = v_diff > 0.0, v_diff < 0.0
        total = 0
        for k in range(1, K + 1):
            for subset in plan.subsets(k):
                in_h = np.zeros(L, dtype=bool)
                in_h[list(subset)] = True
                for m in plan.sign_patterns():
                    event = np.ones(term_reps, dtype=bool)
                    for ell in range(L):
                        if in_h[ell]:
                            cond = (pos_s[:, ell] & neg_d[:, ell]) if m[ell] == 1 else (
                                neg_s[:, ell] & pos_d[:, ell])
                        else:
                            cond = (pos_s[:, ell] & pos_d[:, ell]) if m[ell] == 1 else (
                                neg_s[:, ell] & neg_d[:, ell])
                        event &= cond
                        if not event.any():
                            break
                    total += int(np.count_nonzero(event))
    p = total / term_reps
    se = math.sqrt(max(p * (1.0 - p), 0.0) / term_reps)
    return PowerEstimate(value=p, method="exact_enum", mc_reps=term_reps, mc_se=se)


def power_of_grouping(
    d: PanelDataset,
    g: Grouping,
    h: Hypothesis,
    spec: RegressionSpec | None = None,
    model: str = "ar1",
    method: str = "auto",
    reps: int = 100_000,
    seed: int = 0,
) -> PowerEstimate:
    """Plug-in local power of a grouping: estimate (xi, sigma), then evaluate.

    ``method`` is one of 'auto', 'k1', 'exact', 'mc'.  'auto' picks the closed
    form when the rejection budget is 1, the exact enumeration when q <= 4,
    and Monte Carlo otherwise.
    """
    spec = spec or RegressionSpec(outcome=d.y_name)
    lp, _ = group_limit_params(d, g, h, spec, model)
    return power_from_limit(lp, h.delta, h.alpha, method=method, reps=reps, seed=seed)


def power_from_limit(
    lp: LimitParams,
    delta: float,
    alpha: float,
    method: str = "auto",
    reps: int = 100_000,
    seed: int = 0,
) -> PowerEstimate:
    """Dispatch a (xi, sigma) limit experiment to the right evaluator."""
    if method == "auto":
        if k_budget(1 << (lp.q - 1), alpha) == 1:
            method = "k1"
        elif lp.q <= EXACT_MAX_Q:
            method = "exact"
        else:
            method = "mc"
    if method == "k1":
        return power_k1(lp, delta, alpha)
    if method == "exact":
        return power_exact(lp, delta, alpha, term_reps=reps, seed=seed)
    if method == "mc":
        return power_mc(lp, delta, alpha, reps=reps, seed=seed)
    raise ValueError(f"unknown power method {method!r}")
