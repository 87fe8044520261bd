"""Closed forms for entropic and average value at risk measures."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, xlogy

from ._lp import solve_lp
from .config import DEFAULT_CONFIG, NumericConfig
from .errors import IMPROPER, ConvergenceError, PreconditionError, Signal
from .loss_div import ExponentialLoss, ScaledPositivePart
from .polyhedron import PenaltyValue, Polyhedron, ThresholdData
from .prob_core import RandomVector, VectorMeasure

__all__ = [
    "AvarSpec",
    "EntropicOptimum",
    "EntropicSpec",
    "avar_region",
    "avar_scalar",
    "avar_scalar_detail",
    "entropic_certificate",
    "entropic_optimal_r",
    "entropic_penalty",
    "entropic_region_membership",
    "entropic_vector",
    "relative_entropy",
]


@dataclass(frozen=True, eq=False)
class EntropicSpec:
    """Risk aversion ``beta > 0`` per component with threshold data.

    ``x0_i > -1/beta_i`` is required so that ``x0`` lies in the interior of
    the range of the exponential loss.
    """

    beta: np.ndarray
    thresh: ThresholdData

    def __init__(self, beta, thresh: ThresholdData):
        beta = np.broadcast_to(np.asarray(beta, dtype=float), (thresh.m,)).copy()
        if np.any(~(beta > 0)) or not np.all(np.isfinite(beta)):
            raise PreconditionError("risk aversion must be positive and finite")
        if np.any(thresh.x0 <= -1.0 / beta):
            raise PreconditionError("threshold must satisfy x0_i > -1/beta_i")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "thresh", thresh)

    @property
    def m(self) -> int:
        return self.beta.size

    @property
    def losses(self) -> tuple[ExponentialLoss, ...]:
        return tuple(ExponentialLoss(float(b)) for b in self.beta)

    def objective(self, w, r) -> float:
        """``f_w(r) + h_w(r)``: the quantity minimized by :func:`entropic_optimal_r`."""
        w = np.asarray(w, dtype=float)
        r = np.asarray(r, dtype=float)
        f = float(np.sum(w / self.beta * (-1.0 + r - np.log(r)) + w * r * self.thresh.x0))
        return f - self.thresh.C.support(w * r)


@dataclass(frozen=True, eq=False)
class AvarSpec:
    """Levels ``alpha in (0, 1]``, scalings ``r >= alpha`` and threshold data."""

    alpha: np.ndarray
    r: np.ndarray
    thresh: ThresholdData

    def __init__(self, alpha, r, thresh: ThresholdData):
        alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (thresh.m,)).copy()
        r = np.broadcast_to(np.asarray(r, dtype=float), (thresh.m,)).copy()
        if np.any(~((alpha > 0) & (alpha <= 1))):
            raise PreconditionError("levels must lie in (0, 1]")
        if np.any(~(r >= alpha)) or not np.all(np.isfinite(r)):
            raise PreconditionError("scalings must satisfy r_i >= alpha_i")
        alpha.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "thresh", thresh)

    @property
    def losses(self) -> tuple[ScaledPositivePart, ...]:
        return tuple(ScaledPositivePart(float(a)) for a in self.alpha)


# --------------------------------------------------------------------------
# Entropic


def entropic_vector(X: RandomVector, beta) -> np.ndarray:
    """``(1/beta_i) log E[exp(-beta_i X_i)]`` per component, overflow-safe."""
    beta = np.broadcast_to(np.asarray(beta, dtype=float), (X.m,))
    logp = np.log(X.space.p)
    return np.array([
        logsumexp(-beta[i] * X.column(i) + logp) / beta[i] for i in range(X.m)
    ])


def entropic_region_membership(X: RandomVector, spec: EntropicSpec, z,
                               config: NumericConfig = DEFAULT_CONFIG) -> bool:
    """Closed-form membership ``z in rho_ent(X) + C~``.

    ``z - rho`` is mapped back to the threshold space by
    ``c_i = x0_i - (exp(-beta_i (z_i - rho_i)) - 1) / beta_i`` and tested
    against ``C`` with the usual halfspace tolerance.
    """
    z = np.asarray(z, dtype=float)
    rho = entropic_vector(X, spec.beta)
    with np.errstate(over="ignore"):
        c = spec.thresh.x0 - np.expm1(-spec.beta * (z - rho)) / spec.beta
    if not np.all(np.isfinite(c)):
        return False
    return spec.thresh.C.contains(c, config.membership_tol)


@dataclass(frozen=True)
class EntropicOptimum:
    """Minimizer ``r`` of ``f_w + h_w``, the matching threshold-space point ``c`` and the minimum."""

    r: np.ndarray
    c: np.ndarray
    value: float
    iterations: int


def _is_proper(A: np.ndarray, w: np.ndarray) -> bool:
    """Whether some ``r > 0`` gives ``w * r`` in the cone spanned by the normals of ``C``."""
    k, m = A.shape
    pos = w > 0
    # variables: mu (k), r for positive weights
    npos = int(pos.sum())
    A_eq = np.zeros((m, k + npos))
    A_eq[:, :k] = A.T
    cols = np.flatnonzero(pos)
    for j, i in enumerate(cols):
        A_eq[i, k + j] = -w[i]
    bounds = [(0, None)] * k + [(1.0, None)] * npos
    return solve_lp(np.zeros(k + npos), A_eq=A_eq, b_eq=np.zeros(m), bounds=bounds).status == "optimal"


def _barrier_solve(A, b, coef, cap, config):
    """Maximize ``sum coef_i log(cap_i - c_i)`` over ``A c >= b`` by a log-barrier path."""
    m = cap.size
    start = min(0.5 * float(cap.min()), 1.0)
    c = np.full(m, start)
    t, iters = 1.0, 0
    n_barrier = A.shape[0]

    def value(c, t):
        s = cap - c
        slack = A @ c - b
        if np.any(s <= 0) or np.any(slack <= 0):
            return -math.inf
        return t * float(coef @ np.log(s)) + float(np.log(slack).sum())

    while True:
        for _ in range(config.newton_max_iter):
            iters += 1
            s = cap - c
            slack = A @ c - b
            weight = t * coef
            grad = -weight / s + A.T @ (1.0 / slack)
            hess = -np.diag(weight / s**2) - (A.T * (1.0 / slack**2)) @ A
            step = np.linalg.lstsq(-hess, grad, rcond=None)[0]
            decrement = float(grad @ step)
            if decrement / 2 <= 1e-12:
                break
            base = value(c, t)
            size = 1.0
            while value(c + size * step, t) < base + 0.25 * size * decrement:
                size *= 0.5
                if size < 1e-16:
                    break
            if size < 1e-16 or size * decrement <= 1e-15 * max(1.0, abs(base)):
                break
            c = c + size * step
        else:
            raise ConvergenceError("barrier Newton iteration did not converge")
        # the active-set polish takes over from here; larger t only amplifies roundoff
        if n_barrier / t < 1e-8:
            return c, iters
        t *= 10.0


def _polish(A, b, coef, cap, c):
    """Newton on the KKT system of the active set; ``None`` if the guess does not hold up."""
    slack = A @ c - b
    active = np.flatnonzero(slack <= 1e-6 * max(1.0, float(np.abs(c).max())))
    Aa = A[active]
    nu = np.linalg.lstsq(Aa.T, coef / (cap - c), rcond=None)[0] if active.size else np.zeros(0)
    for _ in range(50):
        s = cap - c
        r1 = -coef / s + Aa.T @ nu
        r2 = Aa @ c - b[active]
        K = np.block([[-np.diag(coef / s**2), Aa.T], [Aa, np.zeros((active.size, active.size))]])
        delta = np.linalg.lstsq(K, -np.concatenate([r1, r2]), rcond=None)[0]
        c = c + delta[:c.size]
        nu = nu + delta[c.size:]
        if np.any(cap - c <= 0):
            return None
        if np.linalg.norm(delta) <= 1e-15 * max(1.0, np.linalg.norm(c)):
            break
    stationarity = -coef / (cap - c) + Aa.T @ nu
    if np.any(nu < -1e-10) or np.any(A @ c - b < -1e-12) or np.linalg.norm(stationarity) > 1e-9:
        return None
    return c


def entropic_optimal_r(spec: EntropicSpec, w, config: NumericConfig = DEFAULT_CONFIG) -> EntropicOptimum | Signal:
    """Unique minimizer ``r^w`` of ``f_w + h_w`` or :data:`IMPROPER` when ``h_w`` is identically ``+inf``.

    ``h_w`` is a support function, hence nonsmooth, so the problem is solved
    through its smooth concave dual
    ``max_{c in C} sum_i (w_i / beta_i) log(1 + beta_i (x0_i - c_i))``
    (interior-point path followed by an active-set Newton polish), and
    ``r_i = 1 / (1 + beta_i (x0_i - c_i))``.  Components with zero weight do
    not affect the objective and leave ``c_i`` unconstrained, so every facet
    involving them drops out; their ``r_i`` is reported as 1.
    """
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != spec.m or np.any(w < 0) or not np.any(w > 0):
        raise PreconditionError("direction must be nonnegative, nonzero and of matching length")
    C, x0, beta = spec.thresh.C, spec.thresh.x0, spec.beta
    if not _is_proper(C.normals, w):
        return IMPROPER
    scale = np.linalg.norm(C.normals, axis=1)
    A, b = C.normals / scale[:, None], C.offsets / scale
    pos = w > 0
    keep = np.all(A[:, ~pos] == 0, axis=1)
    A, b = A[keep][:, pos], b[keep]
    coef = w[pos] / beta[pos]
    cap = x0[pos] + 1.0 / beta[pos]
    sub, iters = _barrier_solve(A, b, coef, cap, config)
    polished = _polish(A, b, coef, cap, sub)
    if polished is not None:
        sub = polished
    c = np.array(x0, dtype=float)
    c[pos] = sub
    r = 1.0 / (1.0 + beta * (x0 - c))
    return EntropicOptimum(r, c, spec.objective(w, r), iters)


def entropic_certificate(spec: EntropicSpec, w, r) -> tuple[float, float]:
    """Residuals of the first-order conditions at ``r``.

    Returns ``(membership, support)``: how far ``(1/beta)(1 - 1/r)`` lies
    outside ``-x0 + C`` (0 when inside) and
    ``|inf_{x in -x0 + C} w @ diag(r) x - sum_i (w_i r_i / beta_i)(1 - 1/r_i)|``.
    """
    w = np.asarray(w, dtype=float)
    r = np.asarray(r, dtype=float)
    point = (1.0 - 1.0 / r) / spec.beta
    resid = spec.thresh.C.residuals(point + spec.thresh.x0)
    scale = np.linalg.norm(spec.thresh.C.normals, axis=1)
    membership = float(max(0.0, -np.min(resid / scale)))
    lhs = spec.thresh.shifted_support(w * r)
    rhs = float(np.sum(w * r * point))
    return membership, abs(lhs - rhs)


def relative_entropy(Q: VectorMeasure) -> np.ndarray:
    """``H(Q_i | P) = E[d_i log d_i]`` per component."""
    p = Q.space.p
    return np.array([float(p @ xlogy(Q.component(i), Q.component(i))) for i in range(Q.m)])


def entropic_penalty(spec: EntropicSpec, Q: VectorMeasure, w,
                     config: NumericConfig = DEFAULT_CONFIG) -> PenaltyValue:
    """Minimal penalty halfspace of the entropic set-valued risk measure at ``(Q, w)``.

    Offset ``-sum_i (w_i / beta_i) H(Q_i | P) - (f_w + h_w)(r^w)``; the whole
    space when ``h_w`` is identically ``+inf``.
    """
    opt = entropic_optimal_r(spec, w, config)
    w = np.asarray(w, dtype=float)
    if opt is IMPROPER:
        return PenaltyValue.all_space(w)
    offset = -float(np.sum(w / spec.beta * relative_entropy(Q))) - opt.value
    return PenaltyValue(w, offset)


# --------------------------------------------------------------------------
# Average value at risk


def avar_scalar(values, alpha: float, r: float = 1.0, x0: float = 0.0, p=None) -> float:
    """``inf_s (s + (r/alpha) E[(-X - s)^+]) - r x0`` by breakpoint enumeration.

    With ``r = 1`` and ``x0 = 0`` this is the classical average value at
    risk at level ``alpha``.
    """
    return avar_scalar_detail(values, alpha, r, x0, p)[0]


def avar_scalar_detail(values, alpha: float, r: float = 1.0, x0: float = 0.0, p=None) -> tuple[float, float]:
    """Value and smallest minimizing ``s`` (an upper ``alpha/r``-quantile of ``-X``)."""
    values = np.asarray(values, dtype=float).reshape(-1)
    p = np.full(values.size, 1.0 / values.size) if p is None else np.asarray(p, dtype=float)
    if not 0 < alpha <= 1:
        raise PreconditionError("level must lie in (0, 1]")
    if not r >= alpha:
        raise PreconditionError("scaling must satisfy r >= alpha")
    losses = np.sort(-values)
    order_p = p[np.argsort(-values, kind="stable")]
    # E[(L - L_j)^+] for every breakpoint L_j, via suffix sums on the sorted losses
    tail_p = np.cumsum(order_p[::-1])[::-1]
    tail_pl = np.cumsum((order_p * losses)[::-1])[::-1]
    excess = np.append(tail_pl[1:], 0.0) - losses * np.append(tail_p[1:], 0.0)
    phi = losses + (r / alpha) * excess
    best = float(phi.min())
    j = int(np.argmax(phi <= best + 1e-12 * (1.0 + abs(best))))
    return best - r * x0, float(losses[j])


def avar_region(X: RandomVector, spec: AvarSpec) -> Polyhedron:
    """``(avar_scalar(X_i, alpha_i, r_i))_i + diag(r) C``."""
    shift = np.array([
        avar_scalar(X.column(i), spec.alpha[i], spec.r[i], 0.0, X.space.p) for i in range(X.m)
    ])
    return spec.thresh.C.scale(spec.r).translate(shift)
