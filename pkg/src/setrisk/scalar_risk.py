"""Scalar shortfall risk, divergence (OCE-type) risk, divergence functionals and penalties."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import DEFAULT_CONFIG, NumericConfig
from .errors import MINUS_INFINITY, PreconditionError, Signal
from .loss_div import DivergenceSpec, LossSpec, one_over_dom
from .prob_core import RandomVector, VectorMeasure

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ScalarRiskResult:
    """A finite scalar risk value.

    ``minimizer_s`` is the inner variable: the shortfall value itself for
    shortfall risk, the smallest inner minimizer for divergence risk.
    """

    value: float
    minimizer_s: float
    iterations: int


def _column(X, component: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(X, RandomVector):
        if component is None:
            if X.m != 1:
                raise PreconditionError("pass component= for multi-column random vectors")
            component = 0
        return X.column(component), X.space.p
    raise PreconditionError("expected a RandomVector")


def check_threshold(loss: LossSpec, x0: float) -> None:
    """Raise unless ``x0`` lies in the interior of the loss range."""
    if not loss.range_interior().contains(float(x0)):
        lo, hi = loss.range_inf, loss.range_sup
        raise PreconditionError(f"threshold {x0} is outside the interior of the loss range ({lo}, {hi})")


# --------------------------------------------------------------------------
# Shortfall risk


def shortfall_bracket(values: np.ndarray, loss: LossSpec, x0: float) -> tuple[float, float]:
    """Bracket ``[lo, hi]`` with ``E[loss(-X - lo)] >= x0 >= E[loss(-X - hi)]``."""
    pivot = loss.inverse(x0)
    return -float(values.max()) - pivot, -float(values.min()) - pivot


def _shortfall_pwl(values, p, loss, x0, lo, hi):
    kinks = (-values[:, None] - loss.kinks()[None, :]).ravel()
    pts = np.unique(np.concatenate([[lo, hi], kinks[(kinks > lo) & (kinks < hi)]]))
    f = loss.expected(values, p, pts) - x0
    i = int(np.argmax(f <= 0))
    if i == 0 or not math.isfinite(f[i - 1]):
        s = float(pts[i])
    else:
        a, b = pts[i - 1], pts[i]
        s = float(min(max(a + (b - a) * f[i - 1] / (f[i - 1] - f[i]), a), b))
    # rounding in the interpolation must not leave the acceptance set
    for _ in range(64):
        if loss.expected(values, p, s)[0] <= x0:
            break
        s = float(np.nextafter(s, math.inf))
    return s, pts.size


def _shortfall_bisect(values, p, loss, x0, lo, hi, config):
    iters = 0
    while hi - lo > config.bisection_tol and iters < config.bisection_max_iter:
        mid = 0.5 * (lo + hi)
        if loss.expected(values, p, mid)[0] <= x0:
            hi = mid
        else:
            lo = mid
        iters += 1
    return hi, iters


def shortfall_values(values: np.ndarray, p: np.ndarray, loss: LossSpec, x0: float,
                     config: NumericConfig = DEFAULT_CONFIG) -> ScalarRiskResult:
    """Shortfall risk of an outcome column ``values`` with probabilities ``p``."""
    check_threshold(loss, x0)
    lo, hi = shortfall_bracket(values, loss, x0)
    if hi <= lo:
        return ScalarRiskResult(hi, hi, 0)
    if loss.is_piecewise_linear:
        s, iters = _shortfall_pwl(values, p, loss, x0, lo, hi)
    else:
        s, iters = _shortfall_bisect(values, p, loss, x0, lo, hi, config)
    return ScalarRiskResult(s, s, iters)


def shortfall_scalar(X: RandomVector, loss: LossSpec, x0: float, *, component: int | None = None,
                     config: NumericConfig = DEFAULT_CONFIG) -> ScalarRiskResult:
    """``inf{s : E[loss(-X - s)] <= x0}``.

    Piecewise-linear losses are solved exactly by locating the root between
    consecutive kinks; smooth losses by bisection on the bracket from
    :func:`shortfall_bracket`.
    """
    values, p = _column(X, component)
    return shortfall_values(values, p, loss, x0, config)


# --------------------------------------------------------------------------
# Divergence (OCE-type) risk


def _oce_pwl(values, p, loss, lams):
    kinks = np.unique((-values[:, None] - loss.kinks()[None, :]).ravel())
    if kinks.size == 0:
        kinks = np.zeros(1)
    e = loss.expected(values, p, kinks)
    finite = np.isfinite(e)
    kinks, e = kinks[finite], e[finite]
    phi = kinks[None, :] + lams[:, None] * e[None, :]
    best = phi.min(axis=1)
    tol = 1e-12 * (1.0 + np.abs(best))
    idx = np.argmax(phi <= (best + tol)[:, None], axis=1)
    return best, kinks[idx], np.full(lams.size, kinks.size)


def _oce_smooth(values, p, loss, lams, config):
    def slope(s):
        with np.errstate(over="ignore", invalid="ignore"):
            return 1.0 - lams * (loss.right_derivative(-values[None, :] - s[:, None]) @ p)

    lo = np.full(lams.size, -float(values.max()))
    hi = np.full(lams.size, -float(values.min()))
    step = 1.0
    for _ in range(200):
        bad_hi = slope(hi) < 0
        bad_lo = slope(lo) > 0
        if not (bad_hi.any() or bad_lo.any()):
            break
        hi = np.where(bad_hi, hi + step, hi)
        lo = np.where(bad_lo, lo - step, lo)
        step *= 2.0
    iters = 0
    while iters < config.bisection_max_iter:
        width = hi - lo
        if np.all(width <= config.inner_tol * np.maximum(1.0, np.abs(hi))):
            break
        mid = 0.5 * (lo + hi)
        up = slope(mid) >= 0
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
        iters += 1
    s = 0.5 * (lo + hi)
    phi = s + lams * loss.expected(values, p, s)
    return phi, s, np.full(lams.size, iters)


def oce_inner(values: np.ndarray, p: np.ndarray, loss: LossSpec, lams,
              config: NumericConfig = DEFAULT_CONFIG):
    """``inf_s (s + lam E[loss(-X - s)])`` for every admissible ``lam`` in ``lams``.

    Returns ``(values, minimizers, iterations)`` arrays.  Callers must have
    checked ``lams`` against :func:`one_over_dom`.
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    if loss.is_piecewise_linear:
        return _oce_pwl(values, p, loss, lams)
    return _oce_smooth(values, p, loss, lams, config)


def divergence_risk_values(values, p, loss: LossSpec, lam: float, x0: float,
                           config: NumericConfig = DEFAULT_CONFIG) -> ScalarRiskResult | Signal:
    if not lam > 0:
        raise PreconditionError(f"divergence index must be positive, got {lam}")
    if not one_over_dom(loss.conjugate()).contains(lam):
        return MINUS_INFINITY
    val, s, iters = oce_inner(values, p, loss, [lam], config)
    return ScalarRiskResult(float(val[0] - lam * x0), float(s[0]), int(iters[0]))


def divergence_risk_scalar(X: RandomVector, loss: LossSpec, lam: float, x0: float, *,
                           component: int | None = None,
                           config: NumericConfig = DEFAULT_CONFIG) -> ScalarRiskResult | Signal:
    """``inf_s (s + lam E[loss(-X - s)]) - lam x0``.

    Returns :data:`~setrisk.errors.MINUS_INFINITY` when ``lam`` lies outside
    ``one_over_dom(conjugate(loss))``.  Piecewise-linear losses are solved
    by enumerating kinks; ties resolve to the smallest minimizer.
    """
    values, p = _column(X, component)
    return divergence_risk_values(values, p, loss, lam, x0, config)


def dual_breakpoints(values: np.ndarray, p: np.ndarray, loss: LossSpec) -> np.ndarray:
    """Indices where ``lam -> inf_s (s + lam E[loss(-X - s)])`` changes slope.

    For a piecewise-linear loss the infimum is attained at one of the
    finitely many kink positions ``s``, so the inner value is the lower
    envelope of the lines ``s + lam E(s)``; every pairwise crossing is
    returned.  Smooth losses have no breakpoints.
    """
    if not loss.is_piecewise_linear:
        return np.empty(0)
    values = np.asarray(values, dtype=float)
    s = np.unique((-values[:, None] - loss.kinks()[None, :]).ravel())
    e = loss.expected(values, p, s)
    keep = np.isfinite(e)
    s, e = s[keep], e[keep]
    ds = s[None, :] - s[:, None]
    de = e[:, None] - e[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        cross = ds / de
    cross = cross[np.isfinite(cross) & (cross > 0)]
    return np.unique(cross)


def lambda_grid(loss: LossSpec, size: int | None = None,
                config: NumericConfig = DEFAULT_CONFIG, *, values=None, p=None) -> np.ndarray:
    """Log-spaced admissible divergence indices clipped to ``config.lambda_bounds``.

    Given outcomes ``values`` with probabilities ``p``, the admissible
    :func:`dual_breakpoints` replace log points so the grid keeps ``size``
    entries and contains every kink of the piecewise-linear dual function.
    """
    size = size or config.lambda_grid_size
    interval = one_over_dom(loss.conjugate())
    lo, hi = interval.clip(*config.lambda_bounds)
    if interval.is_point:
        return np.array([interval.lower])
    extra = np.empty(0)
    if values is not None:
        extra = dual_breakpoints(values, p, loss)
        extra = extra[(extra >= lo) & (extra <= hi)]
        extra = extra[np.array([interval.contains(x) for x in extra], dtype=bool)]
        extra = extra[:max(size - 2, 0)]
    grid = np.geomspace(lo, hi, size - extra.size)
    keep = np.array([interval.contains(g) for g in grid])
    return np.union1d(grid[keep], extra)


def _golden_max(f, a, b, tol, max_iter):
    """Maximize a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def shortfall_dual_sup(X: RandomVector, loss: LossSpec, x0: float, *, grid_size: int | None = None,
                       refine: bool = True, component: int | None = None,
                       config: NumericConfig = DEFAULT_CONFIG) -> tuple[float, float]:
    """``sup_lam`` of the divergence risk over the log grid, then golden refinement.

    Returns ``(value, lam)``.  This is the dual route to the shortfall risk.
    """
    values, p = _column(X, component)
    grid = lambda_grid(loss, grid_size, config, values=values, p=p)
    vals, _, _ = oce_inner(values, p, loss, grid, config)
    obj = vals - grid * x0
    k = int(np.argmax(obj))
    best, lam = float(obj[k]), float(grid[k])
    if refine and grid.size > 2:
        a = math.log(grid[max(k - 1, 0)])
        b = math.log(grid[min(k + 1, grid.size - 1)])

        def f(t):
            v, _, _ = oce_inner(values, p, loss, [math.exp(t)], config)
            return float(v[0]) - math.exp(t) * x0

        t, val = _golden_max(f, a, b, config.golden_tol, config.golden_max_iter)
        if val > best:
            best, lam = val, math.exp(t)
    return best, lam


# --------------------------------------------------------------------------
# Divergence functionals and penalties


def divergence_values(g: DivergenceSpec, lam: float, density: np.ndarray, p: np.ndarray) -> float:
    """``sum_k p_k lam g(density_k / lam)``; ``inf`` if any term is infinite."""
    if not lam > 0:
        raise PreconditionError(f"divergence index must be positive, got {lam}")
    terms = lam * g(np.asarray(density, dtype=float) / lam)
    if not np.all(np.isfinite(terms)):
        return math.inf
    return float(p @ terms)


def divergence_functional(g: DivergenceSpec, lam: float, Q: VectorMeasure, *,
                          component: int = 0) -> float:
    """The ``(g, lam)``-divergence of ``Q_component`` with respect to the base measure."""
    return divergence_values(g, lam, Q.component(component), Q.space.p)


def penalty_divergence_scalar(loss: LossSpec, lam: float, x0: float, Q: VectorMeasure, *,
                              component: int = 0) -> float:
    """Minimal penalty of the divergence risk measure: ``I_{g,lam}(Q|P) + lam x0``."""
    return divergence_functional(loss.conjugate(), lam, Q, component=component) + lam * x0


def _penalty_lambda_range(g: DivergenceSpec, density: np.ndarray) -> tuple[float, float] | None:
    lo, hi = g.domain
    lam_lo = float(density.max()) / hi if math.isfinite(hi) else 0.0
    if lo > 0:
        if density.min() <= 0:
            return None
        lam_hi = float(density.min()) / lo
    else:
        lam_hi = math.inf
    if lam_hi < lam_lo:
        return None
    return lam_lo, lam_hi


def penalty_shortfall_values(loss: LossSpec, x0: float, density: np.ndarray, p: np.ndarray,
                             config: NumericConfig = DEFAULT_CONFIG) -> tuple[float, float]:
    """``inf_{lam > 0} (lam x0 + I_{g,lam}(Q|P))`` and the minimizing ``lam``."""
    check_threshold(loss, x0)
    g = loss.conjugate()
    rng = _penalty_lambda_range(g, density)
    if rng is None:
        return math.inf, math.nan
    lo = max(rng[0], 1e-8)
    hi = min(rng[1], 1e8)

    def cost(lam):
        return lam * x0 + divergence_values(g, lam, density, p)

    if hi <= lo:
        lam = rng[0] if rng[0] > 0 else lo
        return cost(lam), lam
    t, neg = _golden_max(lambda t: -cost(math.exp(t)), math.log(lo), math.log(hi),
                         config.golden_tol, config.golden_max_iter)
    best, lam = -neg, math.exp(t)
    for edge in (lo, hi):
        c = cost(edge)
        if c < best:
            best, lam = c, edge
    return best, lam


def penalty_shortfall_scalar(loss: LossSpec, x0: float, Q: VectorMeasure, *, component: int = 0,
                             config: NumericConfig = DEFAULT_CONFIG) -> float:
    """Minimal penalty of the shortfall risk measure at ``Q``.

    Golden-section search over ``log lam`` on the range where the divergence
    is finite; ``inf`` when no ``lam`` makes it finite.
    """
    value, _ = penalty_shortfall_values(loss, x0, Q.component(component), Q.space.p, config)
    return value


__all__ = [
    "ScalarRiskResult",
    "check_threshold",
    "divergence_functional",
    "divergence_risk_scalar",
    "divergence_values",
    "dual_breakpoints",
    "lambda_grid",
    "oce_inner",
    "penalty_divergence_scalar",
    "penalty_shortfall_scalar",
    "shortfall_dual_sup",
    "shortfall_scalar",
]
