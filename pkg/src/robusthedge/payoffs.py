"""Exotic payoffs on the finite path grid.

Paths are enumerated in lexicographic order over the marginal supports, so
path ``k`` of an ``(m1, ..., mn)`` grid is ``np.unravel_index(k, (m1, ..., mn))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import GrowthBoundViolation, InputError, NegativePayoff, OffGridPath, UnknownKind
from .marginals import MarketSpec

KINDS = (
    "asian_call",
    "lookback_max",
    "basket_time_call",
    "digital_above",
    "forward_start_call",
    "custom_table",
)


class PathSpace:
    """Product grid of the marginal supports."""

    def __init__(self, axes):
        self.axes = tuple(np.asarray(a, dtype=float) for a in axes)
        if not self.axes:
            raise InputError("path space needs at least one axis")
        for a in self.axes:
            if a.ndim != 1 or a.size == 0 or np.any(a < 0) or np.any(np.diff(a) <= 0):
                raise InputError("each axis must be nonempty, nonnegative and ascending")
        self.shape = tuple(a.size for a in self.axes)
        grids = np.meshgrid(*self.axes, indexing="ij")
        self.paths = np.stack([g.ravel() for g in grids], axis=1)
        self.paths.setflags(write=False)

    @classmethod
    def from_market(cls, spec: MarketSpec) -> "PathSpace":
        return cls([m.support for m in spec.marginals])

    @property
    def n(self) -> int:
        return len(self.axes)

    @property
    def size(self) -> int:
        return self.paths.shape[0]

    def __len__(self):
        return self.size

    def __eq__(self, other):
        return (
            isinstance(other, PathSpace)
            and self.shape == other.shape
            and all(np.array_equal(a, b) for a, b in zip(self.axes, other.axes))
        )

    def __repr__(self):
        return f"PathSpace(shape={self.shape})"

    def coords(self, path) -> tuple:
        """Axis indices of ``path``; raises OffGridPath when a coordinate is not a grid value."""
        path = np.asarray(path, dtype=float)
        if path.shape != (self.n,):
            raise OffGridPath(f"path has length {path.size}, expected {self.n}")
        out = []
        for x, axis in zip(path, self.axes):
            j = int(np.searchsorted(axis, x))
            if j >= axis.size or axis[j] != x:
                raise OffGridPath(f"coordinate {x} is not on the grid")
            out.append(j)
        return tuple(out)

    def index_of(self, path) -> int:
        return int(np.ravel_multi_index(self.coords(path), self.shape))

    def prefix_count(self, j: int) -> int:
        """Number of distinct prefixes (s_1..s_j)."""
        return int(np.prod(self.shape[:j]))

    def prefix_index(self, j: int) -> np.ndarray:
        """Lexicographic prefix index of length ``j`` for every path."""
        return np.arange(self.size) // int(np.prod(self.shape[j:]))

    def axis_index(self, i: int) -> np.ndarray:
        """Index into axis ``i`` (0-based date) for every path."""
        return np.unravel_index(np.arange(self.size), self.shape)[i]


@dataclass(frozen=True)
class PayoffSpec:
    """Payoff kind plus parameters.

    Builtin kinds (dates are 1-based, ``n`` is the last date):

    - ``asian_call``: ``max(mean(s) - strike, 0)``
    - ``lookback_max``: ``max(max(s) - strike, 0)``, strike defaults to 0
    - ``basket_time_call``: ``max(sum_i w_i s_i - strike, 0)``, weights default to 1
    - ``digital_above``: ``1`` if ``s_date >= level`` else ``0``, date defaults to ``n``
    - ``forward_start_call``: ``max(s_end - moneyness * s_start, 0)``; with
      ``signed=True`` the positive part is dropped, which makes it a
      forward-start forward that can go negative (rejected for quantile pricing)
    - ``custom_table``: ``values`` listed per path in lexicographic order; the
      optional ``axes`` pin the grid the table belongs to
    """

    kind: str
    params: dict = field(default_factory=dict)
    growth_constant: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnknownKind(f"unknown payoff kind {self.kind!r}")
        if not self.growth_constant > 0:
            raise InputError("growth_constant must be positive")

    @property
    def signed(self) -> bool:
        return self.kind == "forward_start_call" and bool(self.params.get("signed", False))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "growth_constant": self.growth_constant}

    @classmethod
    def from_dict(cls, d: dict) -> "PayoffSpec":
        try:
            params = dict(d.get("params", {}))
            return cls(str(d["kind"]), params, float(d.get("growth_constant", 1.0)))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InputError):
                raise
            raise InputError(f"bad payoff spec: {exc}") from exc

    @classmethod
    def table(cls, values, axes=None, growth_constant: float = 1.0) -> "PayoffSpec":
        params = {"values": [float(v) for v in values]}
        if axes is not None:
            params["axes"] = [[float(x) for x in a] for a in axes]
        return cls("custom_table", params, growth_constant)

    @classmethod
    def from_function(cls, space: PathSpace, fn: Callable, growth_constant: float | None = None) -> "PayoffSpec":
        """Tabulate ``fn(path)`` over ``space``; the growth constant defaults to the tightest valid one."""
        values = [float(fn(p)) for p in space.paths]
        spec = cls.table(values, space.axes)
        if growth_constant is None:
            growth_constant = max(check_growth_bound(spec, space), 0.0) + 1e-12
        return cls("custom_table", spec.params, growth_constant)


def _date(params, key, default, n) -> int:
    d = int(params.get(key, default))
    if not 1 <= d <= n:
        raise InputError(f"{key}={d} outside dates 1..{n}")
    return d - 1


def evaluate(phi: PayoffSpec, path) -> float:
    s = np.asarray(path, dtype=float)
    if s.ndim != 1 or np.any(s < 0):
        raise InputError("path must be a 1-d tuple of nonnegative prices")
    return float(_evaluate_many(phi, s[None, :])[0])


def payoff_vector(phi: PayoffSpec, space: PathSpace) -> np.ndarray:
    """Payoff on every path of ``space`` in lexicographic order."""
    if phi.kind == "custom_table":
        values = np.asarray(phi.params.get("values", ()), dtype=float)
        axes = phi.params.get("axes")
        if axes is None or PathSpace(axes) == space:
            if values.size != space.size:
                raise UnknownKind(f"custom table has {values.size} values, grid has {space.size} paths")
            return values.copy()
    return _evaluate_many(phi, space.paths)


def _evaluate_many(phi: PayoffSpec, s: np.ndarray) -> np.ndarray:
    p, n = phi.params, s.shape[1]
    kind = phi.kind
    if kind == "asian_call":
        return np.maximum(s.mean(axis=1) - float(p.get("strike", 0.0)), 0.0)
    if kind == "lookback_max":
        return np.maximum(s.max(axis=1) - float(p.get("strike", 0.0)), 0.0)
    if kind == "basket_time_call":
        w = np.asarray(p.get("weights", [1.0] * n), dtype=float)
        if w.shape != (n,):
            raise InputError(f"basket_time_call needs {n} weights")
        return np.maximum(s @ w - float(p.get("strike", 0.0)), 0.0)
    if kind == "digital_above":
        d = _date(p, "date", n, n)
        return (s[:, d] >= float(p["level"])).astype(float)
    if kind == "forward_start_call":
        a = _date(p, "start", 1, n)
        b = _date(p, "end", n, n)
        fwd = s[:, b] - float(p.get("moneyness", 1.0)) * s[:, a]
        return fwd if phi.signed else np.maximum(fwd, 0.0)
    # custom_table evaluated at arbitrary paths needs its grid
    axes = p.get("axes")
    if axes is None:
        raise UnknownKind("custom table without axes cannot be evaluated off its own grid")
    grid = PathSpace(axes)
    values = np.asarray(p["values"], dtype=float)
    if values.size != grid.size:
        raise UnknownKind(f"custom table has {values.size} values, grid has {grid.size} paths")
    try:
        return np.array([values[grid.index_of(row)] for row in s])
    except OffGridPath as exc:
        raise UnknownKind(f"path not in custom table: {exc}") from exc


def check_growth_bound(phi: PayoffSpec, space: PathSpace) -> float:
    """Smallest K with phi <= K (1 + s_1 + ... + s_n) on the grid."""
    ratio = payoff_vector(phi, space) / (1.0 + space.paths.sum(axis=1))
    return float(ratio.max())


def validate_payoff(phi: PayoffSpec, space: PathSpace, nonnegative: bool = False) -> np.ndarray:
    """Payoff vector after checking the declared growth bound (and sign, if asked)."""
    values = payoff_vector(phi, space)
    k = check_growth_bound(phi, space)
    if k > phi.growth_constant * (1 + 1e-12):
        raise GrowthBoundViolation(
            f"payoff needs growth constant {k:.6g} > declared {phi.growth_constant:.6g}"
        )
    if nonnegative:
        if phi.signed:
            raise NegativePayoff("signed forward-start payoffs are not allowed here")
        if np.any(values < 0):
            raise NegativePayoff(f"payoff is negative on {int((values < 0).sum())} paths")
    return values
