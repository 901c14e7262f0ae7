"""Quantile hedging through knockout superhedging.

The cheapest nonnegative semi-static hedge that dominates phi with
probability at least alpha under every scenario costs

    J = min over success sets H with min_P P(H) >= alpha of J(H),
    J(H) = sup_{Q in M} E^Q[phi 1_H].

The outer minimization is combinatorial.  ``quantile_price_exhaustive`` is
exact for small grids, ``quantile_price_greedy`` gives an upper bound at any
size and ``quantile_lower_bound`` a certified lower bound from the minimax
inequality with fractional success sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import InputError, TooLarge
from .lp_core import FEAS_TOL, MartingaleMeasure
from .marginals import MarketSpec
from .payoffs import PathSpace, PayoffSpec, validate_payoff
from .shortfall import ScenarioSet
from .superhedge import HedgePortfolio, PricingReport, psi_vector, superhedge_price

EXHAUSTIVE_CAP = 16
TIE_TOL = 1e-9


@dataclass(frozen=True)
class SuccessSet:
    """Boolean membership per path.  Every subset of a finite grid is closed."""

    membership: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "membership", np.asarray(self.membership, dtype=bool))

    @classmethod
    def from_indices(cls, indices, n_paths: int) -> "SuccessSet":
        m = np.zeros(n_paths, dtype=bool)
        m[list(indices)] = True
        return cls(m)

    @classmethod
    def full(cls, n_paths: int) -> "SuccessSet":
        return cls(np.ones(n_paths, dtype=bool))

    @classmethod
    def empty(cls, n_paths: int) -> "SuccessSet":
        return cls(np.zeros(n_paths, dtype=bool))

    @property
    def indices(self) -> list:
        return [int(k) for k in np.flatnonzero(self.membership)]

    def __len__(self):
        return int(self.membership.sum())

    def sort_key(self):
        return (len(self), self.indices)


@dataclass
class QuantileProblem:
    spec: MarketSpec
    phi: PayoffSpec
    scenarios: ScenarioSet
    alpha: float
    space: PathSpace = field(init=False)
    payoff: np.ndarray = field(init=False)
    notes: list = field(init=False, default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InputError("alpha must lie in [0, 1]")
        self.space = PathSpace.from_market(self.spec)
        self.payoff = validate_payoff(self.phi, self.space, nonnegative=True)
        if self.scenarios.n_paths != self.space.size:
            raise InputError(
                f"scenarios have {self.scenarios.n_paths} entries, grid has {self.space.size} paths"
            )
        for label, m in zip(self.scenarios.labels, self.scenarios.measures):
            res = MartingaleMeasure(m, self.space).residuals(self.spec)
            if max(res["marginal"], res["martingale"]) > 1e-9:
                self.notes.append(f"scenario {label!r} is not a martingale measure with the given marginals")


@dataclass
class QuantileReport:
    upper_bound: float
    lower_bound: float
    H_best: SuccessSet
    method: str
    hedge: HedgePortfolio
    alpha: float
    knockout: PricingReport | None = None
    evaluated: int = 0
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        from .serialization import fmt

        out = {
            "upper_bound": fmt(self.upper_bound),
            "lower_bound": fmt(self.lower_bound),
            "method": self.method,
            "alpha": fmt(self.alpha),
            "H": self.H_best.indices,
            "hedge": self.hedge.to_dict(),
        }
        if self.notes:
            out["notes"] = list(self.notes)
        return out


def feasible(h: SuccessSet, scenarios: ScenarioSet, alpha: float, feas_tol: float = FEAS_TOL) -> bool:
    mass = scenarios.measures @ h.membership.astype(float)
    return bool(mass.min() >= alpha - feas_tol)


def knockout_price(spec: MarketSpec, phi, h: SuccessSet, **tols) -> PricingReport:
    """Superhedge of phi 1_H.  Requires phi >= 0, so the hedge is nonnegative too."""
    space = PathSpace.from_market(spec)
    if isinstance(phi, PayoffSpec):
        validate_payoff(phi, space, nonnegative=True)
    elif np.any(np.asarray(phi) < 0):
        raise InputError("knockout pricing needs a nonnegative payoff")
    return superhedge_price(spec, phi, mask=h.membership, **tols)


def verify_quantile_hedge(hedge: HedgePortfolio, phi, scenarios: ScenarioSet) -> dict:
    """Minimum hedge payoff and each scenario's probability of {psi >= phi}."""
    values = validate_payoff(phi, hedge.space) if isinstance(phi, PayoffSpec) else np.asarray(phi, dtype=float)
    psi = psi_vector(hedge)
    success = (psi >= values - FEAS_TOL).astype(float)
    return {
        "psi_min": float(psi.min()),
        "success_prob": {lab: float(m @ success) for lab, m in zip(scenarios.labels, scenarios.measures)},
    }


def _subset_masks(n_paths: int) -> np.ndarray:
    """All subsets as an (2^N, N) bool matrix; row r is the set whose bit k is path k."""
    codes = np.arange(1 << n_paths, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n_paths)) & 1).astype(bool)


def _minimal_feasible(masks: np.ndarray, scen: np.ndarray, alpha: float, feas_tol: float) -> np.ndarray:
    """Codes of feasible sets none of whose one-point removals stays feasible."""
    n_paths = masks.shape[1]
    ok = (masks.astype(float) @ scen.T).min(axis=1) >= alpha - feas_tol
    codes = np.arange(masks.shape[0], dtype=np.int64)
    minimal = ok.copy()
    for k in range(n_paths):
        has = masks[:, k]
        minimal[has] &= ~ok[codes[has] ^ (1 << k)]
    return codes[minimal]


def _better(value, h, best_value, best_h) -> bool:
    if best_h is None or value < best_value - TIE_TOL:
        return True
    if value > best_value + TIE_TOL:
        return False
    return h.sort_key() < best_h.sort_key()


def quantile_price_exhaustive(
    p: QuantileProblem, exhaustive_cap: int = EXHAUSTIVE_CAP, feas_tol: float = FEAS_TOL
) -> QuantileReport:
    """Exact J over every feasible success set.

    Since phi >= 0 both J(H) and feasibility are monotone in H, so only
    minimal feasible sets can win, and a non-minimal set never beats a
    minimal subset of it on the (value, size, lexicographic) order.  A set is
    skipped without an LP solve when some martingale measure already found
    certifies E^Q[phi 1_H] above the incumbent, which is a valid lower bound
    on J(H).
    """
    space = p.space
    if space.size > exhaustive_cap:
        raise TooLarge(f"{space.size} paths exceed the exhaustive cap {exhaustive_cap}")
    masks = _subset_masks(space.size)
    candidates = _minimal_feasible(masks, p.scenarios.measures, p.alpha, feas_tol)
    cand_masks = masks[candidates].astype(float)

    full = superhedge_price(p.spec, p.payoff)
    pool = [full.optimal_measure.probs]
    lb = cand_masks @ (pool[0] * p.payoff)
    order = np.lexsort((candidates, cand_masks.sum(axis=1), lb))

    best_value, best_h, best_report, evaluated = math.inf, None, None, 0
    for r in order:
        if lb[r] > best_value + TIE_TOL:
            continue
        h = SuccessSet(masks[candidates[r]])
        rep = superhedge_price(p.spec, p.payoff, mask=h.membership)
        evaluated += 1
        pool.append(rep.optimal_measure.probs)
        np.maximum(lb, cand_masks @ (pool[-1] * p.payoff), out=lb)
        if _better(rep.primal_value, h, best_value, best_h):
            best_value, best_h, best_report = rep.primal_value, h, rep

    if best_h is None:
        raise InputError("no success set is feasible at this level")
    measures = [MartingaleMeasure(q, space) for q in pool]
    lower = quantile_lower_bound(p, measures)
    return QuantileReport(best_value, lower, best_h, "exhaustive", best_report.hedge,
                          p.alpha, best_report, evaluated, list(p.notes))


def quantile_price_greedy(p: QuantileProblem, feas_tol: float = FEAS_TOL) -> QuantileReport:
    """Upper bound by greedy path removal starting from the full grid.

    Each step removes the path with the largest ratio of payoff saving under
    the current knockout optimizer to worst-case scenario mass lost, among
    removals that keep the set feasible.
    """
    n_paths = p.space.size
    scen = p.scenarios.measures
    h = SuccessSet.full(n_paths)
    if not feasible(h, p.scenarios, p.alpha, feas_tol):
        raise InputError("no success set is feasible at this level")
    rep = superhedge_price(p.spec, p.payoff, mask=h.membership)
    best_value, best_h, best_report = rep.primal_value, h, rep
    pool = [rep.optimal_measure.probs]
    evaluated = 1
    while True:
        q = rep.optimal_measure.probs
        saving = q * p.payoff
        cost = scen.max(axis=0)
        mass = scen @ h.membership.astype(float)
        choice, choice_ratio = None, -math.inf
        for k in np.flatnonzero(h.membership):
            if (mass - scen[:, k]).min() < p.alpha - feas_tol:
                continue
            ratio = math.inf if cost[k] == 0 else saving[k] / cost[k]
            if ratio > choice_ratio:
                choice, choice_ratio = int(k), ratio
        if choice is None:
            break
        member = h.membership.copy()
        member[choice] = False
        h = SuccessSet(member)
        rep = superhedge_price(p.spec, p.payoff, mask=h.membership)
        evaluated += 1
        pool.append(rep.optimal_measure.probs)
        if _better(rep.primal_value, h, best_value, best_h):
            best_value, best_h, best_report = rep.primal_value, h, rep

    measures = [MartingaleMeasure(q, p.space) for q in pool]
    lower = quantile_lower_bound(p, measures)
    return QuantileReport(best_value, lower, best_h, "greedy", best_report.hedge,
                          p.alpha, best_report, evaluated, list(p.notes))


def quantile_lower_bound(p: QuantileProblem, candidate_measures) -> float:
    """max over candidate Q of min { sum phi Q h : h in [0,1]^N, P_k.h >= alpha for all k }.

    For fixed Q the inner minimum lower-bounds inf_H E^Q[phi 1_H] <= J, so
    the maximum over candidates is a valid lower bound on J.
    """
    if p.alpha <= 0:
        return 0.0
    scen = p.scenarios.measures
    best = 0.0
    for q in candidate_measures:
        probs = q.probs if isinstance(q, MartingaleMeasure) else np.asarray(q, dtype=float)
        c = np.clip(probs, 0.0, None) * p.payoff
        res = linprog(
            c,
            A_ub=-scen,
            b_ub=-np.full(scen.shape[0], p.alpha),
            bounds=(0.0, 1.0),
            method="highs-ds",
        )
        if res.status == 0:
            best = max(best, float(res.fun))
    return best


def quantile_price(p: QuantileProblem, exhaustive_cap: int = EXHAUSTIVE_CAP) -> QuantileReport:
    """Exhaustive when the grid is small enough, greedy otherwise."""
    if p.space.size <= exhaustive_cap:
        return quantile_price_exhaustive(p, exhaustive_cap)
    return quantile_price_greedy(p)
