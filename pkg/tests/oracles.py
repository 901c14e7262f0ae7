"""Independent reference computations for the test suite.

Nothing here imports the LP assembly of the package; constraints are
rebuilt by hand from the martingale definitions.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog


def paths_of(axes):
    return [tuple(p) for p in itertools.product(*axes)]


def dense_constraints(axes, probs):
    """Equality system of the martingale polytope, one path per column."""
    paths = paths_of(axes)
    rows, rhs = [], []
    rows.append([1.0] * len(paths))
    rhs.append(1.0)
    for i, (axis, mu) in enumerate(zip(axes, probs)):
        for s, w in zip(axis, mu):
            rows.append([1.0 if p[i] == s else 0.0 for p in paths])
            rhs.append(w)
    for j in range(1, len(axes)):
        for prefix in itertools.product(*axes[:j]):
            rows.append([p[j] - p[j - 1] if p[:j] == prefix else 0.0 for p in paths])
            rhs.append(0.0)
    return np.array(rows), np.array(rhs), paths


def vertex_enumeration_max(axes, probs, payoff):
    """max payoff.q over the polytope by visiting every basic feasible solution."""
    a, b, paths = dense_constraints(axes, probs)
    c = np.array([payoff(p) for p in paths])
    rank = np.linalg.matrix_rank(a)
    best = -np.inf
    n = len(paths)
    for basis in itertools.combinations(range(n), rank):
        sub = a[:, basis]
        if np.linalg.matrix_rank(sub) < rank:
            continue
        xb, *_ = np.linalg.lstsq(sub, b, rcond=None)
        if np.abs(sub @ xb - b).max() > 1e-10 or xb.min() < -1e-12:
            continue
        x = np.zeros(n)
        x[list(basis)] = xb
        best = max(best, float(c @ x))
    return best


def knockout_lp(axes, probs, payoff_values, member, system=None):
    """sup_Q E^Q[phi 1_H] with an interior-point solve on the dense system."""
    a, b, _ = system or dense_constraints(axes, probs)
    c = -np.where(member, payoff_values, 0.0)
    res = linprog(c, A_eq=a, b_eq=b, bounds=(0, None), method="highs-ipm")
    assert res.status == 0, res.message
    return -res.fun


def brute_force_quantile(axes, probs, payoff_values, scenarios, alpha, tol=1e-9):
    """min J(H) over every subset H with min_k P_k(H) >= alpha, no pruning."""
    system = dense_constraints(axes, probs)
    n = len(payoff_values)
    best = np.inf
    for code in range(1 << n):
        member = np.array([(code >> k) & 1 for k in range(n)], dtype=bool)
        if (scenarios @ member).min() < alpha - tol:
            continue
        best = min(best, knockout_lp(axes, probs, payoff_values, member, system))
    return best


def forward_expectation(support, probs, strike):
    """E[(S - K)^+] in exact rational arithmetic."""
    return sum(Fraction(p) * max(Fraction(s) - Fraction(strike), 0) for s, p in zip(support, probs))
