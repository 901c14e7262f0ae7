"""Robust superhedging price sup_{Q in M} E^Q[phi] and its semi-static hedge.

A semi-static hedge pays

    cash + sum_i u_i(s_i) + sum_j Delta_j(s_1..s_j) (s_{j+1} - s_j)

and costs ``cash + sum_i E_{mu_i}[u_i]``.  The hedge is read off the optimal
LP duals: the normalization dual is the cash, the dual of the row
"mass through (i, s) equals mu_i(s)" is u_i(s), and the dual of the
martingale row of a prefix is the stock position held after that prefix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleModel, OffGridPath, SolverFailure
from .lp_core import FEAS_TOL, GAP_TOL, MartingaleMeasure, build_primal, check_solution, extract_measure, solve
from .marginals import MarketSpec, check_convex_order
from .payoffs import PathSpace, PayoffSpec, validate_payoff


@dataclass
class HedgePortfolio:
    space: PathSpace
    cash: float
    static_legs: list  # per date: array over axis points
    dynamic_legs: list  # per j = 1..n-1: array over prefixes of length j

    @classmethod
    def zero(cls, space: PathSpace) -> "HedgePortfolio":
        return cls(
            space,
            0.0,
            [np.zeros(k) for k in space.shape],
            [np.zeros(space.prefix_count(j)) for j in range(1, space.n)],
        )

    def cost(self, spec: MarketSpec) -> float:
        terms = [self.cash]
        for u, m in zip(self.static_legs, spec.marginals):
            terms.extend(np.asarray(u) * m.probs)
        return math.fsum(terms)

    def shifted(self, amount: float) -> "HedgePortfolio":
        return HedgePortfolio(self.space, self.cash + amount, self.static_legs, self.dynamic_legs)

    def max_position(self) -> float:
        return max((float(np.abs(d).max()) for d in self.dynamic_legs), default=0.0)

    def to_dict(self) -> dict:
        from .serialization import fmt

        return {
            "cash": fmt(self.cash),
            "static_legs": [
                {fmt_key(s): fmt(v) for s, v in zip(axis, u)}
                for axis, u in zip(self.space.axes, self.static_legs)
            ],
            "dynamic_legs": [{str(k): fmt(v) for k, v in enumerate(d)} for d in self.dynamic_legs],
        }


def fmt_key(x: float) -> str:
    return f"{float(x):.12g}"


def psi_vector(h: HedgePortfolio) -> np.ndarray:
    """Hedge payoff on every path of its grid."""
    space = h.space
    total = np.full(space.size, float(h.cash))
    for i, u in enumerate(h.static_legs):
        total += np.asarray(u, dtype=float)[space.axis_index(i)]
    for j, d in enumerate(h.dynamic_legs, start=1):
        step = space.paths[:, j] - space.paths[:, j - 1]
        total += np.asarray(d, dtype=float)[space.prefix_index(j)] * step
    return total


def evaluate_psi(h: HedgePortfolio, path) -> float:
    space = h.space
    c = space.coords(path)  # raises OffGridPath
    s = np.asarray(path, dtype=float)
    terms = [h.cash]
    terms.extend(float(u[k]) for u, k in zip(h.static_legs, c))
    for j, d in enumerate(h.dynamic_legs, start=1):
        prefix = int(np.ravel_multi_index(c[:j], space.shape[:j]))
        terms.append(float(d[prefix]) * (s[j] - s[j - 1]))
    return math.fsum(terms)


@dataclass
class PricingReport:
    primal_value: float
    dual_value: float
    gap: float
    hedge: HedgePortfolio
    optimal_measure: MartingaleMeasure
    violation: float = 0.0

    def to_dict(self) -> dict:
        from .serialization import fmt

        return {
            "primal": fmt(self.primal_value),
            "dual": fmt(self.dual_value),
            "gap": fmt(self.gap),
            "hedge": self.hedge.to_dict(),
            "measure": [fmt(q) for q in self.optimal_measure.probs],
        }


def _target(phi, space: PathSpace, mask) -> np.ndarray:
    values = validate_payoff(phi, space) if isinstance(phi, PayoffSpec) else np.asarray(phi, dtype=float)
    if mask is not None:
        values = np.where(np.asarray(mask, dtype=bool), values, 0.0)
    return values


def verify_superhedge(h: HedgePortfolio, phi, space: PathSpace | None = None, mask=None) -> float:
    """Worst shortfall max_paths (phi 1_mask - psi); <= feas_tol certifies the hedge."""
    space = space or h.space
    if space != h.space:
        raise OffGridPath("hedge and payoff live on different grids")
    return float((_target(phi, space, mask) - psi_vector(h)).max())


def hedge_from_duals(duals: np.ndarray, space: PathSpace) -> HedgePortfolio:
    cash = float(duals[0])
    pos = 1
    static = []
    for k in space.shape:
        static.append(np.array(duals[pos:pos + k], dtype=float))
        pos += k
    dynamic = []
    for j in range(1, space.n):
        k = space.prefix_count(j)
        dynamic.append(np.array(duals[pos:pos + k], dtype=float))
        pos += k
    return HedgePortfolio(space, cash, static, dynamic)


def superhedge_price(
    spec: MarketSpec,
    phi,
    mask=None,
    feas_tol: float = FEAS_TOL,
    gap_tol: float = GAP_TOL,
) -> PricingReport:
    """Price sup_{Q in M} E^Q[phi 1_mask] with its dual hedge.

    The dual hedge is certified by path enumeration.  Dual round-off leaves a
    residual shortfall of order 1e-10 on some paths; it is absorbed into cash
    so the returned hedge dominates exactly up to floating point.
    """
    order = check_convex_order(spec)
    if not order.passed:
        raise InfeasibleModel("marginals are not in convex order with common mean", order)
    space = PathSpace.from_market(spec)
    target = _target(phi, space, mask)
    lp = build_primal(spec, target, space=space)
    sol = solve(lp)
    if sol.status == "infeasible":
        raise InfeasibleModel("martingale polytope is empty")
    if not sol.optimal:
        raise SolverFailure(f"unexpected LP status {sol.status}", {"message": sol.message})
    diag = check_solution(lp, sol)
    if diag["primal_residual"] > feas_tol:
        raise SolverFailure("primal residual above tolerance", diag)
    measure = extract_measure(sol, space, feas_tol)
    hedge = hedge_from_duals(sol.dual_values, space)
    shortfall = float((target - psi_vector(hedge)).max())
    if shortfall > 0:
        hedge = hedge.shifted(shortfall)
    violation = float((target - psi_vector(hedge)).max())
    primal = measure.expectation(target)
    dual = hedge.cost(spec)
    gap = abs(primal - dual)
    if gap > gap_tol:
        raise SolverFailure(f"duality gap {gap:.3g} exceeds {gap_tol:.3g}", diag)
    return PricingReport(primal, dual, gap, hedge, measure, violation)
