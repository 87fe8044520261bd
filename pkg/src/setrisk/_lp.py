"""Thin wrapper over HiGHS (through scipy) with a three-way status."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
    "presolve": True,
}


@dataclass(frozen=True)
class LPResult:
    status: str  # "optimal" | "unbounded" | "infeasible"
    x: np.ndarray | None
    fun: float
    eq_duals: np.ndarray | None = None
    ub_duals: np.ndarray | None = None


def _call(c, A_ub, b_ub, A_eq, b_eq, bounds):
    return linprog(
        c,
        A_ub=A_ub if A_ub is not None and len(A_ub) else None,
        b_ub=b_ub if b_ub is not None and len(b_ub) else None,
        A_eq=A_eq if A_eq is not None and len(A_eq) else None,
        b_eq=b_eq if b_eq is not None and len(b_eq) else None,
        bounds=bounds,
        method="highs-ds",
        options=_OPTIONS,
    )


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None) -> LPResult:
    """Minimize ``c @ x``; variables are free unless ``bounds`` says otherwise."""
    c = np.asarray(c, dtype=float)
    if bounds is None:
        bounds = [(None, None)] * c.size
    res = _call(c, A_ub, b_ub, A_eq, b_eq, bounds)
    if res.status == 0:
        duals_eq = getattr(res, "eqlin", None)
        duals_ub = getattr(res, "ineqlin", None)
        return LPResult(
            "optimal",
            res.x,
            float(res.fun),
            None if duals_eq is None else np.asarray(duals_eq.marginals),
            None if duals_ub is None else np.asarray(duals_ub.marginals),
        )
    if res.status in (2, 3):
        # HiGHS may report "infeasible or unbounded"; settle it with a zero objective
        probe = _call(np.zeros_like(c), A_ub, b_ub, A_eq, b_eq, bounds)
        if probe.status == 0:
            return LPResult("unbounded", None, -np.inf)
        return LPResult("infeasible", None, np.inf)
    raise RuntimeError(f"LP solver failed: {res.message}")


def recession_ray(c, A_ub=None, A_eq=None, bounds=None) -> np.ndarray | None:
    """A direction ``d`` with ``c @ d = -1`` in the recession cone of the feasible set."""
    c = np.asarray(c, dtype=float)
    nvar = c.size
    if bounds is None:
        bounds = [(None, None)] * nvar
    ray_bounds = []
    for lo, hi in bounds:
        rlo = -1e6 if lo is None else (0.0 if np.isfinite(lo) else -1e6)
        rhi = 1e6 if hi is None else (0.0 if np.isfinite(hi) else 1e6)
        ray_bounds.append((rlo, rhi))
    eq_rows = [c.reshape(1, -1)]
    eq_rhs = [np.array([-1.0])]
    if A_eq is not None and len(A_eq):
        eq_rows.insert(0, np.asarray(A_eq, dtype=float))
        eq_rhs.insert(0, np.zeros(len(A_eq)))
    A = np.vstack(eq_rows)
    b = np.concatenate(eq_rhs)
    ub = None if A_ub is None or not len(A_ub) else np.asarray(A_ub, dtype=float)
    res = _call(np.zeros(nvar), ub, None if ub is None else np.zeros(len(ub)), A, b, ray_bounds)
    if res.status != 0:
        return None
    return res.x
