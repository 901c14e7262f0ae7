"""Pricing under a shortfall-risk constraint.

For a nondecreasing concave utility U that is strictly increasing around
beta = U^{-1}(alpha), the cheapest semi-static hedge with
inf_P E^P[U(psi - phi)] >= alpha costs

    sup_{Q in M} E^Q[phi] + U^{-1}(alpha),

for any scenario family P containing the martingale measures.  The price
never looks at P; scenarios only enter the feasibility diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, InputError, OutOfRange, PlateauAtLevel
from .lp_core import FEAS_TOL, MartingaleMeasure
from .marginals import MarketSpec
from .payoffs import PathSpace, PayoffSpec, validate_payoff
from .superhedge import HedgePortfolio, PricingReport, psi_vector, superhedge_price

UTILITY_KINDS = ("linear", "exponential_capped", "power", "piecewise_linear", "callable")
SLOPE_FLOOR = 1e-10


@dataclass(frozen=True)
class UtilitySpec:
    """Utility function on wealth.

    - ``linear``: ``slope * x + intercept`` (defaults 1, 0)
    - ``exponential_capped``: ``1 - exp(-rate * x)`` (rate defaults to 1)
    - ``power``: ``(x + shift) ** p`` for ``x >= -shift``, ``0 < p <= 1``
    - ``piecewise_linear``: linear interpolation of ``knots`` ``[[x, y], ...]``,
      continued with the first and last segment slopes
    - ``callable``: user function in ``params["fn"]`` with a bracket
      ``params["bracket"]`` used to invert it by bisection
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in UTILITY_KINDS:
            raise InputError(f"unknown utility kind {self.kind!r}")
        p = self.params
        if self.kind == "linear" and not float(p.get("slope", 1.0)) > 0:
            raise InputError("linear utility needs a positive slope")
        if self.kind == "exponential_capped" and not float(p.get("rate", 1.0)) > 0:
            raise InputError("exponential utility needs a positive rate")
        if self.kind == "power" and not 0 < float(p.get("p", 0.5)) <= 1:
            raise InputError("power utility needs 0 < p <= 1")
        if self.kind == "piecewise_linear":
            knots = np.asarray(p.get("knots", ()), dtype=float)
            if knots.ndim != 2 or knots.shape[0] < 2 or knots.shape[1] != 2:
                raise InputError("piecewise_linear needs at least two [x, y] knots")
            if np.any(np.diff(knots[:, 0]) <= 0):
                raise InputError("knot abscissae must be strictly ascending")
            slopes = np.diff(knots[:, 1]) / np.diff(knots[:, 0])
            if np.any(slopes < 0) or np.any(np.diff(slopes) > 1e-12):
                raise InputError("piecewise_linear utility must be nondecreasing and concave")
        if self.kind == "callable" and not callable(p.get("fn")):
            raise InputError("callable utility needs params['fn']")

    @classmethod
    def from_dict(cls, d: dict) -> "UtilitySpec":
        try:
            return cls(str(d["kind"]), dict(d.get("params", {})))
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad utility spec: {exc}") from exc

    def to_dict(self) -> dict:
        params = {k: v for k, v in self.params.items() if not callable(v)}
        return {"kind": self.kind, "params": params}

    @property
    def domain_floor(self) -> float:
        if self.kind == "power":
            return -float(self.params.get("shift", 0.0))
        return -math.inf


def utility_values(u: UtilitySpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    p = u.params
    if u.kind == "linear":
        slope, icpt = float(p.get("slope", 1.0)), float(p.get("intercept", 0.0))
        return x if (slope == 1.0 and icpt == 0.0) else slope * x + icpt
    if u.kind == "exponential_capped":
        return -np.expm1(-float(p.get("rate", 1.0)) * x)
    if u.kind == "power":
        z = x - u.domain_floor
        if np.any(z < 0):
            raise DomainError(f"power utility undefined below {u.domain_floor}")
        return z ** float(p.get("p", 0.5))
    if u.kind == "piecewise_linear":
        knots = np.asarray(p["knots"], dtype=float)
        xs, ys = knots[:, 0], knots[:, 1]
        lo = (ys[1] - ys[0]) / (xs[1] - xs[0])
        hi = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        out = np.interp(x, xs, ys)
        out = np.where(x < xs[0], ys[0] + lo * (x - xs[0]), out)
        return np.where(x > xs[-1], ys[-1] + hi * (x - xs[-1]), out)
    fn = p["fn"]
    return np.vectorize(lambda t: float(fn(t)), otypes=[float])(x)


def utility_value(u: UtilitySpec, x: float) -> float:
    return float(utility_values(u, x))


def _sup(u: UtilitySpec) -> float:
    if u.kind == "exponential_capped":
        return 1.0
    if u.kind == "piecewise_linear":
        knots = np.asarray(u.params["knots"], dtype=float)
        if knots[-1, 1] == knots[-2, 1]:
            return float(knots[-1, 1])
    if u.kind == "callable" and "sup" in u.params:
        return float(u.params["sup"])
    return math.inf


def check_strict_increase(u: UtilitySpec, beta: float) -> None:
    """Both one-sided sampled slopes at beta must exceed SLOPE_FLOOR."""
    h = 1e-6 * (1.0 + abs(beta))
    lo = max(beta - h, u.domain_floor)
    mid = utility_value(u, beta)
    right = (utility_value(u, beta + h) - mid) / h
    left = (mid - utility_value(u, lo)) / (beta - lo) if beta > lo else right
    if right <= SLOPE_FLOOR or left <= SLOPE_FLOOR:
        raise PlateauAtLevel(
            f"utility is flat near beta={beta:.6g} (slopes {left:.3g}, {right:.3g})"
        )


def utility_inverse(u: UtilitySpec, alpha: float) -> float:
    """beta = inf{x : U(x) >= alpha}, checked for strict increase around beta."""
    alpha = float(alpha)
    p = u.params
    if alpha > _sup(u) or (alpha == _sup(u) and u.kind == "exponential_capped"):
        raise OutOfRange(f"level {alpha} is not attained by the utility")
    if u.kind == "linear":
        slope, icpt = float(p.get("slope", 1.0)), float(p.get("intercept", 0.0))
        beta = alpha if (slope == 1.0 and icpt == 0.0) else (alpha - icpt) / slope
    elif u.kind == "exponential_capped":
        beta = -math.log1p(-alpha) / float(p.get("rate", 1.0))
    elif u.kind == "power":
        if alpha < 0:
            raise OutOfRange("power utility is nonnegative")
        beta = alpha ** (1.0 / float(p.get("p", 0.5))) + u.domain_floor
    elif u.kind == "piecewise_linear":
        beta = _piecewise_inverse(np.asarray(p["knots"], dtype=float), alpha)
    else:
        beta = _bisect_inverse(u, alpha)
    check_strict_increase(u, beta)
    return beta


def _piecewise_inverse(knots: np.ndarray, alpha: float) -> float:
    xs, ys = knots[:, 0], knots[:, 1]
    if alpha <= ys[0]:
        lo = (ys[1] - ys[0]) / (xs[1] - xs[0])
        if lo <= 0:
            return float(-math.inf) if alpha < ys[0] else float(xs[0])
        return float(xs[0] + (alpha - ys[0]) / lo)
    for k in range(1, len(xs)):
        if ys[k] >= alpha:
            return float(xs[k - 1] + (alpha - ys[k - 1]) * (xs[k] - xs[k - 1]) / (ys[k] - ys[k - 1]))
    hi = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
    return float(xs[-1] + (alpha - ys[-1]) / hi)


def _bisect_inverse(u: UtilitySpec, alpha: float) -> float:
    a, b = (float(v) for v in u.params.get("bracket", (-1e6, 1e6)))
    fa, fb = utility_value(u, a) - alpha, utility_value(u, b) - alpha
    if fa > 0 or fb < 0:
        raise OutOfRange(f"level {alpha} is not bracketed by [{a}, {b}]")
    if fa == 0:
        return a
    return float(brentq(lambda t: utility_value(u, t) - alpha, a, b, xtol=1e-12, rtol=4 * np.finfo(float).eps))


@dataclass(frozen=True)
class ScenarioSet:
    measures: np.ndarray  # (k, n_paths)
    labels: tuple = ()

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.measures, dtype=float))
        if m.size == 0:
            raise InputError("scenario set is empty")
        if np.any(m < -FEAS_TOL) or np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-9):
            raise InputError("every scenario must be a probability vector")
        labels = tuple(self.labels) or tuple(f"scenario_{k}" for k in range(m.shape[0]))
        if len(labels) != m.shape[0]:
            raise InputError("one label per scenario")
        object.__setattr__(self, "measures", m)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.measures.shape[0]

    @property
    def n_paths(self) -> int:
        return self.measures.shape[1]

    def extended(self, measures, labels) -> "ScenarioSet":
        return ScenarioSet(np.vstack([self.measures, np.atleast_2d(measures)]), self.labels + tuple(labels))

    @classmethod
    def uniform(cls, space: PathSpace) -> "ScenarioSet":
        return cls(np.full((1, space.size), 1.0 / space.size), ("uniform",))

    @classmethod
    def from_dict(cls, d: dict, space: PathSpace) -> "ScenarioSet":
        """``{"scenarios": [{"label": str, "probs": [...]} | {"label": str, "kind": "uniform"}]}``"""
        try:
            rows, labels = [], []
            for k, item in enumerate(d["scenarios"]):
                labels.append(str(item.get("label", f"scenario_{k}")))
                if item.get("kind") == "uniform":
                    rows.append(np.full(space.size, 1.0 / space.size))
                else:
                    rows.append(np.asarray(item["probs"], dtype=float))
            if any(r.shape != (space.size,) for r in rows):
                raise InputError(f"scenario pmfs must have {space.size} entries")
            return cls(np.array(rows), tuple(labels))
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"bad scenario file: {exc}") from exc

    def to_dict(self) -> dict:
        return {"scenarios": [{"label": l, "probs": m.tolist()} for l, m in zip(self.labels, self.measures)]}


@dataclass
class ShortfallReport:
    price: float
    superhedge_term: float
    inverse_term: float
    alpha: float
    beta: float
    hedge: HedgePortfolio
    superhedge: PricingReport

    def to_dict(self) -> dict:
        from .serialization import fmt

        return {
            "price": fmt(self.price),
            "superhedge_term": fmt(self.superhedge_term),
            "inverse_term": fmt(self.inverse_term),
            "alpha": fmt(self.alpha),
            "beta": fmt(self.beta),
            "hedge": self.hedge.to_dict(),
        }


def shortfall_price(spec: MarketSpec, phi, u: UtilitySpec, alpha: float, **tols) -> ShortfallReport:
    """Superhedge price plus U^{-1}(alpha); the hedge is the superhedge with beta extra cash."""
    beta = utility_inverse(u, alpha)
    sup = superhedge_price(spec, phi, **tols)
    return ShortfallReport(
        price=sup.primal_value + beta,
        superhedge_term=sup.primal_value,
        inverse_term=beta,
        alpha=float(alpha),
        beta=beta,
        hedge=sup.hedge.shifted(beta),
        superhedge=sup,
    )


@dataclass
class FeasibilityReport:
    pointwise_min: float
    scenario_values: dict
    alpha: float
    tol: float

    @property
    def scenario_min(self) -> float:
        return min(self.scenario_values.values()) if self.scenario_values else math.inf

    @property
    def pointwise_feasible(self) -> bool:
        return self.pointwise_min >= self.alpha - self.tol

    @property
    def feasible(self) -> bool:
        return self.scenario_min >= self.alpha - self.tol

    def to_dict(self) -> dict:
        from .serialization import fmt

        return {
            "pointwise_min": fmt(self.pointwise_min),
            "scenario_min": fmt(self.scenario_min),
            "scenario_values": {k: fmt(v) for k, v in self.scenario_values.items()},
            "pointwise_feasible": self.pointwise_feasible,
            "feasible": self.feasible,
        }


def hedging_error(h: HedgePortfolio, phi) -> np.ndarray:
    values = validate_payoff(phi, h.space) if isinstance(phi, PayoffSpec) else np.asarray(phi, dtype=float)
    return psi_vector(h) - values


def _utility_of_error(u: UtilitySpec, err: np.ndarray) -> np.ndarray:
    if np.any(err < u.domain_floor):
        raise DomainError("hedging error leaves the utility's domain on the grid")
    return utility_values(u, err)


def verify_shortfall_feasibility(
    h: HedgePortfolio, phi, u: UtilitySpec, alpha: float, scenarios: ScenarioSet, tol: float = FEAS_TOL
) -> FeasibilityReport:
    """Pointwise and per-scenario expected utility of the hedging error."""
    util = _utility_of_error(u, hedging_error(h, phi))
    if scenarios.n_paths != h.space.size:
        raise InputError("scenarios and hedge live on different grids")
    values = {lab: math.fsum(m * util) for lab, m in zip(scenarios.labels, scenarios.measures)}
    return FeasibilityReport(float(util.min()), values, float(alpha), tol)


def default_scenarios(report: ShortfallReport, extra: ScenarioSet | None = None, seed: int | None = 0) -> ScenarioSet:
    """Q*, the uniform path pmf, a seeded random pmf, then any user scenarios."""
    space = report.hedge.space
    rows = [report.superhedge.optimal_measure.probs, np.full(space.size, 1.0 / space.size)]
    labels = ["optimal_measure", "uniform"]
    if seed is not None:
        rows.append(np.random.default_rng(seed).dirichlet(np.ones(space.size)))
        labels.append(f"dirichlet_seed_{seed}")
    out = ScenarioSet(np.array(rows), tuple(labels))
    if extra is not None:
        out = out.extended(extra.measures, extra.labels)
    return out


def jensen_bound_check(h: HedgePortfolio, phi, u: UtilitySpec, q: MartingaleMeasure) -> tuple[float, float]:
    """(U(E^Q[psi - phi]), E^Q[U(psi - phi)]); lhs >= rhs for concave U."""
    err = hedging_error(h, phi)
    w = np.clip(np.asarray(q.probs, dtype=float), 0.0, None)
    total = math.fsum(w)
    if total != 1.0:
        w = w / total
    lhs = utility_value(u, math.fsum(w * err))
    rhs = math.fsum(w * _utility_of_error(u, err))
    return lhs, rhs


def check_concave(u: UtilitySpec, xs) -> bool:
    """Sampled check that U is nondecreasing and concave on ``xs``."""
    xs = np.sort(np.asarray(xs, dtype=float))
    ys = utility_values(u, xs)
    slopes = np.diff(ys) / np.diff(xs)
    return bool(np.all(slopes >= -1e-12) and np.all(np.diff(slopes) <= 1e-9 * (1 + np.abs(slopes[:-1]))))
