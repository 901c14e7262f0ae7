"""Martingale optimal transport as a linear program on the path grid.

Variables are path probabilities in lexicographic order.  Equality rows come
in a fixed order: one normalization row, then one row per (date, support
point), then one martingale row per (date j < n, prefix s_1..s_j).  The
optimal dual of a row is the matching hedge coefficient: cash, static leg
u_i(s) and dynamic position Delta_j(prefix) respectively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .errors import NotOptimal, SolverFailure
from .marginals import MarketSpec
from .payoffs import PathSpace, PayoffSpec, validate_payoff

FEAS_TOL = 1e-9
GAP_TOL = 1e-7

_HIGHS_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
    "presolve": True,
}


@dataclass
class LinearProgram:
    objective: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    sense: str = "max"
    row_labels: list = field(default_factory=list)

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self.b_eq = np.asarray(self.b_eq, dtype=float)
        self.a_eq = sp.csr_matrix(self.a_eq, shape=(self.b_eq.size, self.objective.size))
        if self.sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")

    @property
    def n_vars(self) -> int:
        return self.objective.size

    @property
    def n_rows(self) -> int:
        return self.b_eq.size

    def to_lp_format(self) -> str:
        """CPLEX LP text for cross-checking with external solvers."""
        def term(c, name):
            return f"{'-' if c < 0 else '+'} {abs(c):.17g} {name}"

        lines = ["Maximize" if self.sense == "max" else "Minimize", " obj:"]
        obj = [term(c, f"q{k}") for k, c in enumerate(self.objective) if c != 0]
        lines[-1] += " " + (" ".join(obj) if obj else "0 q0")
        lines.append("Subject To")
        a = self.a_eq.tocsr()
        for r in range(self.n_rows):
            row = a.getrow(r)
            body = " ".join(term(c, f"q{k}") for k, c in zip(row.indices, row.data))
            label = self.row_labels[r] if r < len(self.row_labels) else f"r{r}"
            lines.append(f" {label}: {body or '0 q0'} = {self.b_eq[r]:.17g}")
        lines.append("Bounds")
        lines.extend(f" q{k} >= 0" for k in range(self.n_vars))
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded
    objective_value: float
    primal_values: np.ndarray
    dual_values: np.ndarray
    sense: str = "max"
    iterations: int = 0
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class MartingaleMeasure:
    probs: np.ndarray
    space: PathSpace

    def expectation(self, values) -> float:
        return math.fsum(self.probs * np.asarray(values, dtype=float))

    def residuals(self, spec: MarketSpec) -> dict:
        """Worst violation of each defining constraint of the martingale polytope."""
        q = self.probs
        space = self.space
        out = {"negativity": max(0.0, -float(q.min())), "normalization": abs(math.fsum(q) - 1.0)}
        marg = 0.0
        for i, m in enumerate(spec.marginals):
            idx = space.axis_index(i)
            got = np.bincount(idx, weights=q, minlength=space.shape[i])
            marg = max(marg, float(np.abs(got - m.probs).max()))
        out["marginal"] = marg
        mart = 0.0
        for j in range(1, space.n):
            step = space.paths[:, j] - space.paths[:, j - 1]
            got = np.bincount(space.prefix_index(j), weights=q * step, minlength=space.prefix_count(j))
            mart = max(mart, float(np.abs(got).max()))
        out["martingale"] = mart
        return out


def _constraint_matrix(space: PathSpace, spec: MarketSpec):
    """Rows and labels in assembly order: normalization, marginals by date, martingale by prefix."""
    n_paths = space.size
    cols = np.arange(n_paths)
    blocks = [sp.csr_matrix(np.ones((1, n_paths)))]
    rhs = [np.ones(1)]
    labels = ["norm"]
    for i, m in enumerate(spec.marginals):
        idx = space.axis_index(i)
        blocks.append(sp.csr_matrix((np.ones(n_paths), (idx, cols)), shape=(space.shape[i], n_paths)))
        rhs.append(m.probs)
        labels.extend(f"marg_{i + 1}_{k}" for k in range(space.shape[i]))
    for j in range(1, space.n):
        step = space.paths[:, j] - space.paths[:, j - 1]
        rows = space.prefix_index(j)
        blocks.append(sp.csr_matrix((step, (rows, cols)), shape=(space.prefix_count(j), n_paths)))
        rhs.append(np.zeros(space.prefix_count(j)))
        labels.extend(f"mart_{j}_{k}" for k in range(space.prefix_count(j)))
    return sp.vstack(blocks, format="csr"), np.concatenate(rhs), labels


def build_primal(spec: MarketSpec, phi: PayoffSpec | np.ndarray, mask=None, space: PathSpace | None = None) -> LinearProgram:
    """LP maximizing E^Q[phi 1_mask] over the martingale measures with the given marginals.

    ``phi`` may be a PayoffSpec or a precomputed payoff vector; ``mask`` is a
    boolean vector over paths (or ``None`` for all paths).
    """
    space = space or PathSpace.from_market(spec)
    if isinstance(phi, PayoffSpec):
        values = validate_payoff(phi, space)
    else:
        values = np.asarray(phi, dtype=float)
    if values.shape != (space.size,):
        raise ValueError(f"payoff vector has shape {values.shape}, expected ({space.size},)")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != (space.size,):
            raise ValueError("mask must have one flag per path")
        values = np.where(mask, values, 0.0)
    a, b, labels = _constraint_matrix(space, spec)
    return LinearProgram(values, a, b, "max", labels)


def solve(lp: LinearProgram) -> LpSolution:
    """Solve with HiGHS dual simplex.

    Dual values are reported for the problem as posed: for a maximization
    they satisfy ``A^T y >= c`` with ``b.y`` equal to the optimum.
    """
    c = -lp.objective if lp.sense == "max" else lp.objective
    kwargs = {}
    if lp.n_rows:
        kwargs = {"A_eq": lp.a_eq, "b_eq": lp.b_eq}
    res = linprog(c, bounds=(0, None), method="highs-ds", options=_HIGHS_OPTIONS, **kwargs)
    nit = int(getattr(res, "nit", 0) or 0)
    if res.status == 2:
        return LpSolution("infeasible", math.nan, np.full(lp.n_vars, math.nan), np.full(lp.n_rows, math.nan),
                          lp.sense, nit, res.message)
    if res.status == 3:
        inf = math.inf if lp.sense == "max" else -math.inf
        return LpSolution("unbounded", inf, np.full(lp.n_vars, math.nan), np.full(lp.n_rows, math.nan),
                          lp.sense, nit, res.message)
    if res.status != 0:
        raise SolverFailure(f"HiGHS failed: {res.message}", {"status": int(res.status), "iterations": nit})
    duals = np.asarray(res.eqlin.marginals, dtype=float) if lp.n_rows else np.zeros(0)
    value = float(-res.fun if lp.sense == "max" else res.fun)
    if lp.sense == "max":
        duals = -duals
    return LpSolution("optimal", value, np.asarray(res.x, dtype=float), duals, lp.sense, nit, res.message)


def check_solution(lp: LinearProgram, sol: LpSolution) -> dict:
    """Primal residual, dual infeasibility and duality gap of an optimal solution."""
    x, y = sol.primal_values, sol.dual_values
    resid = float(np.abs(lp.a_eq @ x - lp.b_eq).max()) if lp.n_rows else 0.0
    resid = max(resid, float(max(0.0, -x.min())) if x.size else 0.0)
    reduced = lp.a_eq.T @ y - lp.objective if lp.n_rows else -lp.objective
    if lp.sense == "min":
        reduced = -reduced
    dual_infeas = float(max(0.0, -reduced.min())) if reduced.size else 0.0
    gap = abs(math.fsum(lp.objective * x) - math.fsum(lp.b_eq * y))
    return {"primal_residual": resid, "dual_infeasibility": dual_infeas, "gap": gap}


def extract_measure(sol: LpSolution, space: PathSpace, feas_tol: float = FEAS_TOL) -> MartingaleMeasure:
    """Optimal path measure; round-off negatives down to ``-feas_tol`` are clipped to zero."""
    if not sol.optimal:
        raise NotOptimal(f"solution status is {sol.status}")
    q = np.array(sol.primal_values, dtype=float)
    if q.shape != (space.size,):
        raise ValueError("solution does not belong to this path space")
    if q.min() < -feas_tol:
        raise NotOptimal(f"primal value {q.min():.3g} is negative beyond tolerance")
    q[q < 0] = 0.0
    return MartingaleMeasure(q, space)
