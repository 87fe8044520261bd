"""Set-valued shortfall and divergence risk measures on finite spaces.

Regions are unbounded upper sets, so they are handled through membership
oracles, support functions (``inf_{z in R} w @ z``) and boundary point
clouds rather than vertex enumeration.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import qmc

from ._lp import solve_lp
from .config import DEFAULT_CONFIG, NumericConfig
from .errors import MINUS_INFINITY, NOT_FINITE, PLUS_INFINITY, PreconditionError, Signal
from .loss_div import DivergenceSpec, LossSpec, PiecewiseLinearDivergence, as_vector_loss, one_over_dom
from .polyhedron import PenaltyValue, Polyhedron, ThresholdData, support_lower
from .prob_core import RandomVector, VectorMeasure
from .scalar_risk import check_threshold, divergence_values, oce_inner
from .shortfall_program import minimize_support

__all__ = [
    "BoundaryCloud",
    "DualSolution",
    "PenaltyValue",
    "Polyhedron",
    "RegionOracle",
    "RoundtripReport",
    "ThresholdData",
    "acceptance_set_roundtrip",
    "divergence_region",
    "divergence_risk_vector",
    "penalty_divergence_set",
    "penalty_shortfall_set",
    "r_grid",
    "sample_directions",
    "shortfall_membership",
    "shortfall_region",
    "shortfall_support",
    "shortfall_support_detail",
    "support_lower",
    "vector_divergence",
]


def _losses(losses, m: int) -> tuple[LossSpec, ...]:
    return as_vector_loss(losses, m)


def _check_thresholds(losses, thresh: ThresholdData) -> None:
    for loss, x0 in zip(losses, thresh.x0):
        check_threshold(loss, x0)


def _check_direction(w, m: int) -> np.ndarray:
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != m:
        raise PreconditionError(f"direction must have length {m}")
    if np.any(w < 0) or not np.any(w > 0):
        raise PreconditionError("direction must be nonnegative and nonzero")
    return w


# --------------------------------------------------------------------------
# Divergences and divergence risk


def vector_divergence(divergences: Sequence[DivergenceSpec], r, Q: VectorMeasure) -> np.ndarray | Signal:
    """Componentwise ``I_{g_i, r_i}(Q_i | P)``; :data:`PLUS_INFINITY` if any entry is infinite."""
    r = np.asarray(r, dtype=float).reshape(-1)
    if r.size != Q.m or len(divergences) != Q.m:
        raise PreconditionError("divergences, indices and measure disagree on dimension")
    out = np.empty(Q.m)
    for i, (g, ri) in enumerate(zip(divergences, r)):
        if ri <= 0:
            return PLUS_INFINITY
        out[i] = divergence_values(g, ri, Q.component(i), Q.space.p)
        if not math.isfinite(out[i]):
            return PLUS_INFINITY
    return out


def divergence_risk_vector(X: RandomVector, losses, r, x0,
                           config: NumericConfig = DEFAULT_CONFIG) -> np.ndarray | Signal:
    """Componentwise divergence risks; :data:`MINUS_INFINITY` if any component is."""
    losses = _losses(losses, X.m)
    r = np.asarray(r, dtype=float).reshape(-1)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    out = np.empty(X.m)
    for i, loss in enumerate(losses):
        if not (r[i] > 0 and one_over_dom(loss.conjugate()).contains(r[i])):
            return MINUS_INFINITY
        val, _, _ = oce_inner(X.column(i), X.space.p, loss, [r[i]], config)
        out[i] = val[0] - r[i] * x0[i]
    return out


def divergence_region(X: RandomVector, losses, r, thresh: ThresholdData,
                      config: NumericConfig = DEFAULT_CONFIG) -> Polyhedron | Signal:
    """``delta_{g,r}(X) + diag(r) C``; :data:`NOT_FINITE` when ``r`` is not admissible."""
    delta = divergence_risk_vector(X, losses, r, thresh.x0, config)
    if delta is MINUS_INFINITY:
        return NOT_FINITE
    return thresh.C.scale(r).translate(delta)


# --------------------------------------------------------------------------
# Shortfall region


def expected_losses(X: RandomVector, losses, z) -> np.ndarray:
    """``E[loss_i(-X_i - z_i)]`` per component."""
    z = np.asarray(z, dtype=float)
    return np.array([X.space.p @ loss(-X.column(i) - z[i]) for i, loss in enumerate(losses)])


def shortfall_membership(X: RandomVector, losses, thresh: ThresholdData, z,
                         config: NumericConfig = DEFAULT_CONFIG) -> bool:
    """Whether ``x0 - E[loss(-X - z)]`` lies in ``C`` (halfspace tolerance ``membership_tol``)."""
    losses = _losses(losses, X.m)
    E = expected_losses(X, losses, z)
    if not np.all(np.isfinite(E)):
        return False
    return thresh.C.contains(thresh.x0 - E, config.membership_tol)


def sample_directions(m: int, count: int | None = None) -> np.ndarray:
    """Deterministic unit directions in the closed nonnegative orthant.

    Always contains the coordinate axes and the normalized all-ones vector;
    the rest follow a Fibonacci-type lattice (uniform angles when ``m = 2``,
    golden-angle spiral on the octant when ``m = 3``, a Halton sequence
    beyond that).
    """
    if m == 1:
        return np.ones((1, 1))
    if count is None:
        count = 64 if m == 2 else 256
    fixed = np.vstack([np.eye(m), np.full((1, m), 1.0 / math.sqrt(m))])
    extra = max(count - fixed.shape[0], 0)
    golden = (1 + math.sqrt(5)) / 2
    if m == 2:
        # irrational spacing never revisits the axes or the diagonal
        interior = np.mod(np.arange(1, extra + 1) / golden, 1.0) * (math.pi / 2)
        angles = np.sort(np.concatenate([[0.0, math.pi / 4, math.pi / 2], interior]))
        out = np.column_stack([np.cos(angles), np.sin(angles)])
        out[np.abs(out) < 1e-15] = 0.0
        return out
    if m == 3:
        k = np.arange(extra)
        height = (k + 0.5) / max(extra, 1)
        phi = np.mod(k / golden, 1.0) * (math.pi / 2)
        rho = np.sqrt(1 - height**2)
        pts = np.column_stack([rho * np.cos(phi), rho * np.sin(phi), height])
    else:
        pts = np.abs(qmc.Halton(d=m, scramble=False).random(extra + 1)[1:] - 0.5) + 1e-3
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    return np.vstack([fixed, pts])


@dataclass(frozen=True, eq=False)
class BoundaryCloud:
    """Boundary samples of a shortfall region.

    Row ``j`` pairs direction ``directions[j]`` with the support value in
    that direction and a boundary point attaining it (``nan`` when the
    support is not finite).  ``ray_points[j]`` is where the ray from the
    anchor along ``-directions[j]`` leaves the region.
    """

    directions: np.ndarray
    support: np.ndarray
    points: np.ndarray
    ray_points: np.ndarray

    def to_csv(self) -> str:
        m = self.directions.shape[1]
        header = [f"w{i + 1}" for i in range(m)] + ["support"] + [f"z{i + 1}" for i in range(m)]
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for w, s, z in zip(self.directions, self.support, self.points):
            cells = [*w, s, *z]
            buf.write(",".join(_fmt(c) for c in cells) + "\n")
        return buf.getvalue()


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    out = f"{x:.9g}"
    return "0" if out == "-0" else out


class RegionOracle:
    """Membership oracle for the shortfall region ``R(X)`` of a vector loss."""

    def __init__(self, X: RandomVector, losses, thresh: ThresholdData,
                 config: NumericConfig = DEFAULT_CONFIG):
        self.X = X
        self.losses = _losses(losses, X.m)
        self.thresh = thresh
        self.config = config
        _check_thresholds(self.losses, thresh)
        # componentwise feasible corner: E[loss_i] <= x0_i, pushed one unit inward
        self.anchor = np.array([
            -X.column(i).min() - loss.inverse(x0) + 1.0
            for i, (loss, x0) in enumerate(zip(self.losses, thresh.x0))
        ])

    @property
    def m(self) -> int:
        return self.X.m

    def __contains__(self, z) -> bool:
        return shortfall_membership(self.X, self.losses, self.thresh, z, self.config)

    def contains(self, z) -> bool:
        return z in self

    def interior_point(self) -> np.ndarray:
        return self.anchor.copy()

    def ray_exit(self, direction) -> np.ndarray | None:
        """Boundary point on the ray ``anchor - t * direction``; ``None`` if the ray never leaves."""
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        lo, hi = 0.0, 1.0
        while self.contains(self.anchor - hi * d):
            lo, hi = hi, 2.0 * hi
            if hi > self.config.ray_max_extent:
                return None
        while hi - lo > self.config.ray_tol:
            mid = 0.5 * (lo + hi)
            if self.contains(self.anchor - mid * d):
                lo = mid
            else:
                hi = mid
        return self.anchor - lo * d

    def support(self, w) -> float:
        return shortfall_support(self.X, self.losses, self.thresh, w, self.config)

    def support_point(self, w) -> np.ndarray | None:
        """A minimizer of ``w @ z`` over the region from the primal program, if finite."""
        res = minimize_support(self.X.space.p, self.X.values, self.losses, self.thresh,
                               _check_direction(w, self.m), config=self.config)
        return res.z if res.status == "optimal" else None

    def bounding_box(self, cloud: "BoundaryCloud") -> tuple[np.ndarray, np.ndarray]:
        """Box spanned by the finite cloud points and the anchor."""
        pts = np.vstack([cloud.points, cloud.ray_points, self.anchor[None, :]])
        pts = pts[np.all(np.isfinite(pts), axis=1)]
        return pts.min(axis=0), pts.max(axis=0)


def shortfall_region(X: RandomVector, losses, thresh: ThresholdData, directions: int | np.ndarray | None = None,
                     config: NumericConfig = DEFAULT_CONFIG) -> tuple[RegionOracle, BoundaryCloud]:
    """Membership oracle plus a boundary cloud.

    For every sampled direction ``w`` the cloud stores the support value
    (dual route), the ray-shot boundary point toward the primal support
    point, and the ray-shot exit point along ``-w``.
    """
    oracle = RegionOracle(X, losses, thresh, config)
    dirs = directions if isinstance(directions, np.ndarray) else sample_directions(X.m, directions)
    m = X.m
    support = np.full(len(dirs), math.nan)
    points = np.full((len(dirs), m), math.nan)
    ray_points = np.full((len(dirs), m), math.nan)
    for j, w in enumerate(dirs):
        support[j] = shortfall_support(X, oracle.losses, thresh, w, config)
        exit_point = oracle.ray_exit(w)
        if exit_point is not None:
            ray_points[j] = exit_point
        target = oracle.support_point(w) if math.isfinite(support[j]) else None
        if target is not None:
            offset = oracle.anchor - target
            norm = np.linalg.norm(offset)
            hit = oracle.ray_exit(offset) if norm > 0 else target
            points[j] = target if hit is None else hit
    return oracle, BoundaryCloud(dirs, support, points, ray_points)


# --------------------------------------------------------------------------
# Dual scalarization by cutting planes


@dataclass(frozen=True)
class DualSolution:
    """Result of the concave dual maximization over ``lam = diag(r) w``."""

    value: float
    lam: np.ndarray | None
    r: np.ndarray | None
    iterations: int
    gap: float


def r_grid(loss: LossSpec, size: int | None = None, config: NumericConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Log-spaced admissible ``r`` clipped to ``config.r_bounds``."""
    size = size or config.r_grid_size
    interval = one_over_dom(loss.conjugate())
    if interval.is_point:
        return np.array([interval.lower])
    lo, hi = interval.clip(*config.r_bounds)
    grid = np.geomspace(lo, hi, size)
    return grid[[interval.contains(g) for g in grid]]


class _Component:
    """A concave function of one multiplier, known through values and supergradients."""

    def __init__(self, lo, hi, evaluate, initial):
        self.lo, self.hi = lo, hi
        self.evaluate = evaluate  # lam array -> (values, supergradients)
        self.cuts_a: list[float] = []  # value at 0 of each tangent
        self.cuts_b: list[float] = []  # slope
        self.add(initial)

    def add(self, lams):
        lams = np.atleast_1d(np.asarray(lams, dtype=float))
        lams = lams[(lams >= self.lo) & (lams <= self.hi)]
        if lams.size == 0:
            return
        vals, grads = self.evaluate(lams)
        for lam, v, g in zip(lams, vals, grads):
            if math.isfinite(v) and math.isfinite(g):
                self.cuts_a.append(float(v - g * lam))
                self.cuts_b.append(float(g))


def _maximize_dual(components: list[_Component], thresh: ThresholdData,
                   config: NumericConfig) -> DualSolution:
    """Maximize ``sum_i F_i(lam_i) + inf_{x in -x0 + C} lam @ x`` by Kelley's cutting planes.

    The support term is written through facet multipliers ``mu >= 0`` with
    ``C.normals.T @ mu = lam`` so each LP is exact in that term.
    """
    m = len(components)
    A, b = thresh.C.normals, thresh.C.offsets
    k = b.size
    nvar = m + k + m  # lam, mu, t
    best_val, best_lam, gap, it = -math.inf, None, math.inf, 0
    for it in range(1, config.cut_max_iter + 1):
        rows, rhs = [], []
        for i, comp in enumerate(components):
            for a, slope in zip(comp.cuts_a, comp.cuts_b):
                row = np.zeros(nvar)
                row[m + k + i] = 1.0  # t_i
                row[i] = -slope
                rows.append(row)
                rhs.append(a)
        A_eq = np.zeros((m, nvar))
        A_eq[:, :m] = -np.eye(m)
        A_eq[:, m:m + k] = A.T
        c = np.zeros(nvar)
        c[:m] = thresh.x0
        c[m:m + k] = -b
        c[m + k:] = -1.0
        bounds = [(comp.lo, comp.hi) for comp in components] + [(0, None)] * k + [(None, None)] * m
        res = solve_lp(c, np.array(rows), np.array(rhs), A_eq, np.zeros(m), bounds)
        if res.status == "infeasible":
            return DualSolution(-math.inf, None, None, it, 0.0)
        if res.status == "unbounded":
            return DualSolution(math.inf, None, None, it, 0.0)
        upper = -res.fun
        lam = np.clip(res.x[:m], [cp.lo for cp in components], [cp.hi for cp in components])
        mu = res.x[m:m + k]
        exact = [comp.evaluate(np.array([lam[i]])) for i, comp in enumerate(components)]
        vals = np.array([v[0][0] for v in exact])
        lower = float(vals.sum() - lam @ thresh.x0 + b @ mu)
        if lower > best_val:
            best_val, best_lam = lower, lam.copy()
        gap = upper - best_val
        if gap <= config.cut_tol * (1.0 + abs(best_val)):
            break
        for i, comp in enumerate(components):
            comp.add([lam[i]])
    return DualSolution(best_val, best_lam, None, it, max(gap, 0.0))


def _lam_bounds(w_i: float, interval, config: NumericConfig) -> tuple[float, float]:
    lo, hi = interval.clip(*config.r_bounds)
    return w_i * lo, w_i * hi


def shortfall_support_detail(X: RandomVector, losses, thresh: ThresholdData, w,
                             config: NumericConfig = DEFAULT_CONFIG) -> DualSolution:
    """``inf_{z in R(X)} w @ z`` through the dual over multipliers ``lam = diag(r) w``.

    Each component contributes the concave function
    ``F_i(lam_i) = inf_s (w_i s + lam_i E[loss_i(-X_i - s)])``; the support
    term ``inf_{x in -x0 + C} lam @ x`` is handled exactly.  ``r`` is kept in
    ``config.r_bounds``.  Zero weights use the unscaled multiplier, whose
    contribution is ``lam_i * inf loss_i``.
    """
    losses = _losses(losses, X.m)
    _check_thresholds(losses, thresh)
    w = _check_direction(w, X.m)
    wmax = float(w.max())
    p = X.space.p
    comps = []
    for i, loss in enumerate(losses):
        values = X.column(i)
        if w[i] > 0:
            interval = one_over_dom(loss.conjugate())
            lo, hi = _lam_bounds(w[i], interval, config)

            def evaluate(lams, values=values, loss=loss, wi=w[i]):
                inner, s, _ = oce_inner(values, p, loss, lams / wi, config)
                grads = loss.expected(values, p, s)
                return wi * inner, grads

            if loss.is_piecewise_linear:
                kinks = np.unique((-values[:, None] - loss.kinks()[None, :]).ravel())
                e = loss.expected(values, p, kinks)
                comp = _Component(lo, hi, evaluate, [])
                for s, ev in zip(kinks, e):
                    if math.isfinite(ev):
                        comp.cuts_a.append(float(w[i] * s))
                        comp.cuts_b.append(float(ev))
                comp.add([lo, hi])
            else:
                comp = _Component(lo, hi, evaluate, np.geomspace(lo, hi, 20))
        else:
            floor = loss.range_inf
            hi = wmax * config.r_bounds[1] if math.isfinite(floor) else 0.0

            def evaluate(lams, floor=floor):
                return lams * (floor if math.isfinite(floor) else 0.0), np.full(lams.size, floor if math.isfinite(floor) else 0.0)

            comp = _Component(0.0, hi, evaluate, [0.0])
        comps.append(comp)
    sol = _maximize_dual(comps, thresh, config)
    r = None
    if sol.lam is not None:
        r = np.where(w > 0, sol.lam / np.where(w > 0, w, 1.0), math.nan)
    return DualSolution(sol.value, sol.lam, r, sol.iterations, sol.gap)


def shortfall_support(X: RandomVector, losses, thresh: ThresholdData, w,
                      config: NumericConfig = DEFAULT_CONFIG) -> float:
    """``inf_{z in R(X)} w @ z`` (``-inf`` when unbounded below)."""
    return shortfall_support_detail(X, losses, thresh, w, config).value


# --------------------------------------------------------------------------
# Penalties


def penalty_divergence_set(divergences: Sequence[DivergenceSpec], r, thresh: ThresholdData,
                           Q: VectorMeasure, w) -> PenaltyValue:
    """``{z : w @ z >= -w @ I_{g,r}(Q|P) + inf_{x in -x0 + C} w @ diag(r) x}``."""
    w = _check_direction(w, thresh.m)
    r = np.asarray(r, dtype=float).reshape(-1)
    div = vector_divergence(divergences, r, Q)
    if div is PLUS_INFINITY:
        return PenaltyValue.all_space(w)
    offset = -float(w @ div) + thresh.shifted_support(w * r)
    if not math.isfinite(offset):
        return PenaltyValue.all_space(w)
    return PenaltyValue(w, offset)


def _penalty_component(g: DivergenceSpec, density: np.ndarray, p: np.ndarray, w_i: float,
                       config: NumericConfig) -> _Component | None:
    """``G(lam) = -lam E[g(w_i d / lam)]`` as a cutting-plane component, ``None`` if never finite."""
    lo_dom, hi_dom = g.domain
    c = w_i * density
    lam_lo = float(c.max()) / hi_dom if math.isfinite(hi_dom) else 0.0
    if lo_dom > 0:
        if c.min() <= 0:
            return None
        lam_hi = float(c.min()) / lo_dom
    else:
        lam_hi = math.inf
    r_lo, r_hi = config.r_bounds
    lo, hi = max(lam_lo, w_i * r_lo), min(lam_hi, w_i * r_hi)
    if lo > hi:
        return None

    def evaluate(lams):
        vals, grads = [], []
        for lam in lams:
            y = c / lam
            gy = g(y)
            dg = g.right_derivative(y)
            with np.errstate(invalid="ignore"):
                ydg = np.where(y > 0, y * dg, 0.0)
            vals.append(-lam * float(p @ gy))
            grads.append(float(p @ (-gy + ydg)))
        return np.array(vals), np.array(grads)

    init = np.geomspace(max(lo, 1e-12), hi, 20) if hi > lo else np.array([lo])
    if isinstance(g, PiecewiseLinearDivergence):
        kinks = [float(ck / kn) for ck in c for kn in g.knots if kn > 0 and ck > 0]
        init = np.concatenate([init, kinks])
    return _Component(lo, hi, evaluate, init)


def penalty_shortfall_set(losses: Sequence[LossSpec], thresh: ThresholdData, Q: VectorMeasure, w,
                          config: NumericConfig = DEFAULT_CONFIG) -> PenaltyValue:
    """Minimal penalty of the set-valued shortfall risk at ``(Q, w)``.

    The offset is ``sup_r (-w @ I_{g,r}(Q|P) + inf_{x in -x0 + C} w @ diag(r) x)``
    with ``r`` restricted to ``config.r_bounds``; the maximization uses the
    same cutting-plane scheme as :func:`shortfall_support_detail`.  For ``w``
    with zero entries the result is the intersection over admissible ``r``
    and is not claimed to be minimal.
    """
    losses = _losses(losses, Q.m)
    _check_thresholds(losses, thresh)
    w = _check_direction(w, thresh.m)
    comps = []
    for i, loss in enumerate(losses):
        g = loss.conjugate()
        density = Q.component(i)
        if w[i] > 0:
            comp = _penalty_component(g, density, Q.space.p, w[i], config)
        else:
            probe = _penalty_component(g, density, Q.space.p, 1.0, config)
            comp = None if probe is None else _Component(0.0, 0.0, lambda lams: (np.zeros(lams.size), np.zeros(lams.size)), [0.0])
        if comp is None:
            return PenaltyValue.all_space(w)
        comps.append(comp)
    sol = _maximize_dual(comps, thresh, config)
    if not math.isfinite(sol.value):
        return PenaltyValue.all_space(w)
    return PenaltyValue(w, sol.value)


# --------------------------------------------------------------------------
# Acceptance sets


@dataclass(frozen=True)
class RoundtripReport:
    """Counts of disagreements found by :func:`acceptance_set_roundtrip`."""

    checked: int
    acceptance_mismatches: int
    translation_mismatches: int
    monotonicity_violations: int

    @property
    def ok(self) -> bool:
        return not (self.acceptance_mismatches or self.translation_mismatches or self.monotonicity_violations)


def acceptance_set_roundtrip(member: Callable[[RandomVector, np.ndarray], bool],
                             accepted: Callable[[RandomVector], bool],
                             cases: Iterable[tuple[RandomVector, np.ndarray]],
                             rng: np.random.Generator | None = None) -> RoundtripReport:
    """Check that a risk measure and its acceptance set determine each other.

    ``member(X, z)`` tests ``z in R(X)``; ``accepted(X)`` tests ``X in A``
    independently.  For each case it checks ``X in A  <=>  0 in R(X)``,
    ``z in R(X)  <=>  X + z in A`` and that adding a nonnegative random
    vector to an accepted position keeps it accepted.
    """
    rng = rng or np.random.default_rng(0)
    checked = acc = trans = mono = 0
    for X, z in cases:
        checked += 1
        zero = np.zeros(X.m)
        if accepted(X) != member(X, zero):
            acc += 1
        if member(X, np.asarray(z)) != accepted(X.shifted(z)):
            trans += 1
        if accepted(X):
            bump = RandomVector(X.space, X.values + rng.uniform(0, 1, X.values.shape))
            if not accepted(bump):
                mono += 1
    return RoundtripReport(checked, acc, trans, mono)
