"""Discrete marginal laws, call-price curves and the convex-order check.

A marginal is recovered from call prices by second differences in strike
(Breeden-Litzenberger on a finite, possibly non-uniform grid).  The family of
marginals admits a martingale coupling iff all means agree with the spot and
call prices are nondecreasing in maturity at every strike.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ExtrapolationError, InputError, NegativeMass, NonConvexCurve

logger = logging.getLogger(__name__)

MASS_TOL = 1e-12
PRICE_TOL = 1e-9


@dataclass(frozen=True)
class CallCurve:
    time_index: int
    strikes: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        strikes = np.asarray(self.strikes, dtype=float)
        prices = np.asarray(self.prices, dtype=float)
        if strikes.ndim != 1 or strikes.shape != prices.shape:
            raise InputError("strikes and prices must be 1-d arrays of equal length")
        if strikes.size == 0:
            raise InputError("empty call curve")
        if np.any(strikes < 0) or np.any(np.diff(strikes) <= 0):
            raise InputError("strikes must be nonnegative and strictly ascending")
        if np.any(prices < 0) or not np.all(np.isfinite(prices)):
            raise InputError("call prices must be finite and nonnegative")
        object.__setattr__(self, "strikes", strikes)
        object.__setattr__(self, "prices", prices)

    def slopes(self) -> np.ndarray:
        return np.diff(self.prices) / np.diff(self.strikes)

    def arbitrage_violations(self, tol: float = PRICE_TOL) -> dict:
        """Strikes where monotonicity or convexity fails by more than ``tol``."""
        slopes = self.slopes()
        increasing = [float(k) for k, s in zip(self.strikes[1:], slopes) if s > tol]
        # convexity <=> slopes nondecreasing; scale by spacing to compare in price units
        h = np.diff(self.strikes)
        kinks = []
        for i in range(1, slopes.size):
            drop = (slopes[i - 1] - slopes[i]) * min(h[i - 1], h[i])
            if drop > tol:
                kinks.append(float(self.strikes[i]))
        return {"increasing": increasing, "concave": kinks}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["strike", "price"])
            for k, c in zip(self.strikes, self.prices):
                writer.writerow([repr(float(k)), repr(float(c))])

    @classmethod
    def from_csv(cls, path, time_index: int) -> "CallCurve":
        try:
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["strike", "price"]:
                    raise InputError(f"{path}: expected header 'strike,price'")
                rows = [(float(r["strike"]), float(r["price"])) for r in reader]
        except (OSError, ValueError, KeyError, TypeError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"{path}: {exc}") from exc
        if not rows:
            raise InputError(f"{path}: no quotes")
        rows.sort()
        strikes, prices = zip(*rows)
        return cls(time_index, np.array(strikes), np.array(prices))


@dataclass(frozen=True)
class MarginalDistribution:
    time_index: int
    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if support.ndim != 1 or support.shape != probs.shape or support.size == 0:
            raise InputError("support and probs must be nonempty 1-d arrays of equal length")
        if np.any(support < 0) or np.any(np.diff(support) <= 0):
            raise InputError("support must be nonnegative and strictly ascending")
        if np.any(probs < 0) or np.any(probs > 1):
            raise InputError("probabilities must lie in [0, 1]")
        if abs(probs.sum() - 1.0) > MASS_TOL:
            raise InputError(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)

    @property
    def mean(self) -> float:
        return float(self.probs @ self.support)

    def call_prices(self, strikes) -> np.ndarray:
        strikes = np.asarray(strikes, dtype=float)
        return np.maximum(self.support[None, :] - strikes[:, None], 0.0) @ self.probs

    def compact(self) -> "MarginalDistribution":
        """Drop zero-probability atoms."""
        keep = self.probs > 0
        if keep.all():
            return self
        probs = self.probs[keep]
        return MarginalDistribution(self.time_index, self.support[keep], probs / probs.sum())

    def to_dict(self) -> dict:
        return {
            "time_index": self.time_index,
            "support": self.support.tolist(),
            "probs": self.probs.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MarginalDistribution":
        try:
            return cls(int(d["time_index"]), d["support"], d["probs"])
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad marginal record: {exc}") from exc

    @classmethod
    def uniform(cls, support, time_index: int = 1) -> "MarginalDistribution":
        support = np.asarray(support, dtype=float)
        return cls(time_index, support, np.full(support.size, 1.0 / support.size))

    @classmethod
    def dirac(cls, point: float, time_index: int = 1) -> "MarginalDistribution":
        return cls(time_index, [point], [1.0])


@dataclass(frozen=True)
class MarketSpec:
    """Spot price plus the marginal laws at dates 1..n.

    Zero-probability atoms are removed here, so downstream path grids only
    carry points that some martingale measure can charge.
    """

    spot: float
    marginals: tuple

    def __post_init__(self):
        if self.spot < 0 or not np.isfinite(self.spot):
            raise InputError("spot must be finite and nonnegative")
        margs = tuple(m.compact() for m in self.marginals)
        if not margs:
            raise InputError("at least one marginal is required")
        for i, m in enumerate(margs, start=1):
            if m.time_index != i:
                raise InputError(f"marginal #{i} has time_index {m.time_index}")
        object.__setattr__(self, "marginals", margs)

    @classmethod
    def of(cls, spot: float, *laws: MarginalDistribution) -> "MarketSpec":
        """Build from laws given in date order, renumbering their time indices."""
        margs = tuple(
            MarginalDistribution(i, m.support, m.probs) for i, m in enumerate(laws, start=1)
        )
        return cls(float(spot), margs)

    @property
    def n(self) -> int:
        return len(self.marginals)

    def to_dict(self) -> dict:
        return {"spot": self.spot, "marginals": [m.to_dict() for m in self.marginals]}

    @classmethod
    def from_dict(cls, d: dict) -> "MarketSpec":
        try:
            margs = [MarginalDistribution.from_dict(m) for m in d["marginals"]]
            return cls(float(d["spot"]), tuple(margs))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"bad market spec: {exc}") from exc


@dataclass(frozen=True)
class ConvexOrderReport:
    passed: bool
    mean_violations: list = field(default_factory=list)  # (i, mean)
    order_violations: list = field(default_factory=list)  # (i, K, C_i(K), C_{i+1}(K))

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "mean_violations": [{"time_index": i, "mean": m} for i, m in self.mean_violations],
            "order_violations": [
                {"time_index": i, "strike": k, "call_i": a, "call_next": b}
                for i, k, a, b in self.order_violations
            ],
        }


def synth_call_curve(m: MarginalDistribution, strikes) -> CallCurve:
    strikes = np.asarray(strikes, dtype=float)
    return CallCurve(m.time_index, strikes, m.call_prices(strikes))


def fill_prices(curve: CallCurve, points) -> tuple[np.ndarray, np.ndarray]:
    """Call prices at ``points``, interpolating linearly between quotes.

    Linear interpolation keeps a monotone convex curve monotone and convex.
    Outside the quoted range a value is only produced where it is forced:
    below zero strike (C(K) = C(0) - K needs C(0) quoted), and to the right
    of a zero quote (C stays 0).  Returns (prices, interpolated_mask).
    """
    points = np.asarray(points, dtype=float)
    k, c = curve.strikes, curve.prices
    out = np.interp(points, k, c)
    quoted = np.isin(points, k)
    left = points < k[0]
    right = points > k[-1]
    if np.any(left):
        if k[0] != 0.0 or np.any(points[left] > 0):
            raise ExtrapolationError(f"price needed below lowest quoted strike {k[0]}")
        out[left] = c[0] - points[left]
    if np.any(right):
        if c[-1] > PRICE_TOL:
            raise ExtrapolationError(f"price needed above highest quoted strike {k[-1]}")
        out[right] = 0.0
    return out, ~quoted & ~left & ~right


def calibrate_from_calls(curve: CallCurve, grid, tol: float = PRICE_TOL) -> MarginalDistribution:
    """Recover the pmf on ``grid`` whose call prices match ``curve``.

    The grid is taken to cover the support of the law: below the first grid
    point the call curve has slope -1 unless quotes say otherwise, and past
    the last grid point the curve must already be flat at zero.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0) or np.any(grid < 0):
        raise InputError("grid must be nonnegative and strictly ascending")

    bad = curve.arbitrage_violations(tol)
    if bad["concave"]:
        raise NonConvexCurve(f"call curve is not convex at strikes {bad['concave']}")
    if bad["increasing"]:
        raise NegativeMass(f"call curve increases at strikes {bad['increasing']}")

    if grid.size == 1:
        h_lo = h_hi = max(grid[0], 1.0)
    else:
        h_lo, h_hi = grid[1] - grid[0], grid[-1] - grid[-2]
    lo, hi = grid[0] - h_lo, grid[-1] + h_hi

    prices, filled = fill_prices(curve, grid)
    if filled.any():
        logger.warning("interpolated call prices at strikes %s", grid[filled].tolist())

    if lo >= curve.strikes[0]:
        c_lo = fill_prices(curve, [lo])[0][0]
    elif curve.strikes[0] == 0.0 and lo < 0:
        c_lo = curve.prices[0] - lo
    else:
        # support starts at grid[0]: slope -1 to the left
        c_lo = prices[0] + h_lo
    c_hi = fill_prices(curve, [hi])[0][0]

    ext = np.concatenate([[c_lo], prices, [c_hi]])
    knots = np.concatenate([[lo], grid, [hi]])
    slopes = np.diff(ext) / np.diff(knots)
    mass = slopes[1:] - slopes[:-1]
    if np.any(mass < -tol):
        where = grid[mass < -tol].tolist()
        raise NegativeMass(f"negative probability mass at strikes {where}")
    mass = np.clip(mass, 0.0, None)
    total = mass.sum()
    if total <= 0:
        raise NegativeMass("call curve carries no probability mass on the grid")
    return MarginalDistribution(curve.time_index, grid, mass / total)


def check_convex_order(spec: MarketSpec, tol: float = PRICE_TOL) -> ConvexOrderReport:
    mean_bad = [
        (m.time_index, m.mean) for m in spec.marginals if abs(m.mean - spec.spot) > tol
    ]
    strikes = np.unique(np.concatenate([m.support for m in spec.marginals]))
    order_bad = []
    for a, b in zip(spec.marginals[:-1], spec.marginals[1:]):
        ca, cb = a.call_prices(strikes), b.call_prices(strikes)
        for k, x, y in zip(strikes, ca, cb):
            if x > y + tol:
                order_bad.append((a.time_index, float(k), float(x), float(y)))
    return ConvexOrderReport(not mean_bad and not order_bad, mean_bad, order_bad)


def load_call_curves(paths: Sequence) -> list[CallCurve]:
    """One CSV per maturity, in maturity order."""
    return [CallCurve.from_csv(Path(p), i) for i, p in enumerate(paths, start=1)]
