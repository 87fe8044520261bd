"""Primal linear programs for set-valued shortfall risk.

The program minimizes ``w @ z`` over capital vectors ``z`` and (optionally)
nonnegative trade weights ``theta`` subject to

* the position after trading ``X = base - reshape(M @ theta)``,
* linear side constraints on ``theta``,
* ``x0 - E[loss(-X - z)] in C``.

Each ``loss_i(-X_ki - z_i)`` is replaced by an epigraph variable bounded
below by affine minorants of the loss.  Piecewise-linear losses contribute
all of their pieces up front, so the LP is exact.  Smooth losses start from
a few tangents and receive new tangents at the current solution until the
true constraint holds (outer approximation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._lp import recession_ray, solve_lp
from .config import DEFAULT_CONFIG, NumericConfig
from .loss_div import LossSpec
from .polyhedron import ThresholdData


@dataclass(frozen=True)
class TradeStructure:
    """Linear trading on top of a base position.

    ``M`` has shape ``(n * m, q)``; row ``k * m + i`` gives how ``theta``
    reduces ``X_ki``.  Side constraints: ``A_eq @ theta = b_eq`` and
    ``A_ub @ theta <= b_ub``.
    """

    M: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None

    @property
    def q(self) -> int:
        return self.M.shape[1]


@dataclass(frozen=True)
class PrimalResult:
    status: str  # "optimal" | "unbounded" | "infeasible"
    value: float
    z: np.ndarray | None = None
    theta: np.ndarray | None = None
    X: np.ndarray | None = None
    ray: dict | None = field(default=None)
    iterations: int = 0


class _Cuts:
    """Affine minorants ``slope * x + intercept`` per loss component."""

    def __init__(self, losses):
        self.losses = losses
        self.slopes, self.intercepts, self.points = [], [], []
        for loss in losses:
            if loss.is_piecewise_linear:
                self.slopes.append(list(loss.slopes))
                self.intercepts.append(list(loss.intercepts))
                self.points.append([])
            else:
                self.slopes.append([0.0] if math.isfinite(loss.range_inf) else [])
                self.intercepts.append([loss.range_inf] if math.isfinite(loss.range_inf) else [])
                self.points.append([])
                for x in np.linspace(-3.0, 3.0, 7):
                    self.add(len(self.points) - 1, x)

    def add(self, i, x):
        loss = self.losses[i]
        slope = float(loss.right_derivative(x))
        value = float(loss(x))
        if math.isfinite(slope) and math.isfinite(value):
            self.slopes[i].append(slope)
            self.intercepts[i].append(value - slope * x)
            self.points[i].append(float(x))

    def steepen(self, i, rounds):
        """Add a tangent far to the right of every existing one."""
        self.add(i, max(self.points[i]) + 2.0 ** rounds)


def _normalized(C):
    scale = np.linalg.norm(C.normals, axis=1)
    return C.normals / scale[:, None], C.offsets / scale


def _build(p, base, losses, thresh, trades, cuts, mode, w, z_fixed):
    n, m = base.shape
    q = 0 if trades is None else trades.q
    nz, ne = m, n * m
    nvar = nz + q + ne + 1
    iz, itheta, ie, itau = 0, nz, nz + q, nz + q + ne
    rows, rhs = [], []

    M = trades.M if trades is not None else np.zeros((n * m, 0))
    for k in range(n):
        for i in range(m):
            r = k * m + i
            for a, c in zip(cuts.slopes[i], cuts.intercepts[i]):
                row = np.zeros(nvar)
                row[iz + i] = -a
                row[itheta:itheta + q] = a * M[r]
                row[ie + r] = -1.0
                rows.append(row)
                rhs.append(a * base[k, i] - c)
            u = losses[i].upper
            if math.isfinite(u):
                row = np.zeros(nvar)
                row[iz + i] = -1.0
                row[itheta:itheta + q] = M[r]
                rows.append(row)
                rhs.append(u + base[k, i])

    A_C, b_C = _normalized(thresh.C)
    for j in range(A_C.shape[0]):
        row = np.zeros(nvar)
        for i in range(m):
            row[ie + i:ie + ne:m] = A_C[j, i] * p
        row[itau] = -1.0
        rows.append(row)
        rhs.append(float(A_C[j] @ thresh.x0 - b_C[j]))

    A_ub = np.array(rows)
    b_ub = np.array(rhs)
    A_eq = b_eq = None
    if trades is not None and trades.A_ub is not None and len(trades.A_ub):
        extra = np.zeros((len(trades.A_ub), nvar))
        extra[:, itheta:itheta + q] = trades.A_ub
        A_ub = np.vstack([A_ub, extra])
        b_ub = np.concatenate([b_ub, trades.b_ub])
    if trades is not None and trades.A_eq is not None and len(trades.A_eq):
        A_eq = np.zeros((len(trades.A_eq), nvar))
        A_eq[:, itheta:itheta + q] = trades.A_eq
        b_eq = np.asarray(trades.b_eq, dtype=float)

    bounds = [(None, None)] * nz + [(0.0, None)] * q + [(None, None)] * ne
    c = np.zeros(nvar)
    if mode == "support":
        c[iz:iz + nz] = w
        bounds.append((0.0, 0.0))
    else:
        bounds = [(float(v), float(v)) for v in z_fixed] + bounds[nz:]
        c[itau] = 1.0
        bounds.append((-1.0, None))
    return c, A_ub, b_ub, A_eq, b_eq, bounds, (iz, itheta, ie, itau, q)


def _position(base, trades, theta):
    if trades is None or trades.q == 0:
        return base.copy()
    return base - (trades.M @ theta).reshape(base.shape)


def _true_margin(p, X, z, losses, thresh):
    """``min_j`` normalized residual of ``x0 - E[loss(-X - z)]`` in ``C`` (``-inf`` if infinite)."""
    E = np.array([p @ losses[i](-X[:, i] - z[i]) for i in range(X.shape[1])])
    if not np.all(np.isfinite(E)):
        return -math.inf, E
    A_C, b_C = _normalized(thresh.C)
    return float(np.min(A_C @ (thresh.x0 - E) - b_C)), E


def _solve(p, base, losses: tuple[LossSpec, ...], thresh: ThresholdData, trades, mode, w, z_fixed,
           config: NumericConfig):
    base = np.asarray(base, dtype=float)
    smooth = [i for i, loss in enumerate(losses) if not loss.is_piecewise_linear]
    cuts = _Cuts(losses)
    tol = config.market_cut_tol
    steep_rounds = 0
    for it in range(1, config.market_cut_max_iter + 1):
        c, A_ub, b_ub, A_eq, b_eq, bounds, layout = _build(
            p, base, losses, thresh, trades, cuts, mode, w, z_fixed
        )
        iz, itheta, ie, itau, q = layout
        res = solve_lp(c, A_ub, b_ub, A_eq, b_eq, bounds)
        if res.status == "infeasible":
            return PrimalResult("infeasible", math.inf, iterations=it)
        if res.status == "unbounded":
            ray = recession_ray(c, A_ub, A_eq, bounds)
            if ray is not None and smooth and steep_rounds < 60:
                dz = ray[iz:iz + base.shape[1]]
                dX = _position(np.zeros_like(base), trades, ray[itheta:itheta + q])
                dx = -dX - dz
                grow = [i for i in smooth if np.any(dx[:, i] > 1e-9)]
                if grow:
                    # the relaxation is too flat far out; add steeper tangents and retry
                    steep_rounds += 1
                    for i in grow:
                        cuts.steepen(i, steep_rounds)
                    continue
            certificate = None
            if ray is not None:
                certificate = {"z": ray[iz:iz + base.shape[1]], "theta": ray[itheta:itheta + q]}
            return PrimalResult("unbounded", -math.inf, ray=certificate, iterations=it)

        x = res.x
        z = x[iz:iz + base.shape[1]]
        theta = x[itheta:itheta + q]
        X = _position(base, trades, theta)
        margin, _ = _true_margin(p, X, z, losses, thresh)
        if mode == "support":
            if not smooth or margin >= -tol:
                return PrimalResult("optimal", res.fun, z=z, theta=theta, X=X, iterations=it)
        else:
            violation, tau = -margin, x[itau]
            if (not smooth or violation <= config.membership_tol or tau > config.membership_tol
                    or violation - tau <= tol):
                status = "optimal" if violation <= config.membership_tol else "infeasible"
                return PrimalResult(status, violation, z=z, theta=theta, X=X, iterations=it)
        e = x[ie:ie + base.size].reshape(base.shape)
        for i in smooth:
            args = -X[:, i] - z[i]
            gap = losses[i](args) - e[:, i]
            for k in np.nonzero(gap > 1e-14)[0]:
                cuts.add(i, args[k])
    raise RuntimeError("cutting-plane loop did not converge")


def minimize_support(p, base, losses, thresh: ThresholdData, w, trades: TradeStructure | None = None,
                     config: NumericConfig = DEFAULT_CONFIG) -> PrimalResult:
    """``inf w @ z`` over capital ``z`` (and trades) keeping ``x0 - E[loss(-X - z)]`` in ``C``."""
    return _solve(p, base, tuple(losses), thresh, trades, "support", np.asarray(w, dtype=float), None, config)


def acceptance_margin(p, base, losses, thresh: ThresholdData, z, trades: TradeStructure | None = None,
                      config: NumericConfig = DEFAULT_CONFIG) -> PrimalResult:
    """Best achievable violation of the acceptance constraint with capital fixed to ``z``.

    ``status == "optimal"`` means some trade keeps the violation within
    ``config.membership_tol``; ``value`` is the smallest violation found.
    """
    return _solve(p, base, tuple(losses), thresh, trades, "feasibility", None,
                  np.asarray(z, dtype=float), config)
