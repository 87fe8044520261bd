"""Brute-force verifiers built directly on the definitions.

Everything here scans grids (with local zooming) and evaluates losses and
divergences pointwise.  The only shared machinery is the probability
space, loss evaluation and, for polyhedral support terms, a plain LP.
These functions are slow by design and are not exported from the package
namespace.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .loss_div import DivergenceSpec, LossSpec
from .polyhedron import ThresholdData
from .prob_core import RandomVector, VectorMeasure


@dataclass(frozen=True)
class GridConfig:
    """Resolutions for the brute-force scans.

    ``None`` ranges are derived from the data.  ``zoom_rounds`` local
    refinements follow every coarse scan.
    """

    s_range: tuple[float, float] | None = None
    s_count: int = 2001
    zoom_rounds: int = 4
    zoom_count: int = 41
    lam_range: tuple[float, float] = (1e-4, 1e4)
    lam_count: int = 200
    simplex_resolution: int = 200
    z_range: tuple[float, float] = (-3.0, 3.0)
    z_count: int = 41
    threshold_count: int = 401
    trade_range: tuple[float, float] = (-2.0, 2.0)
    trade_count: int = 41
    position_count: int = 21
    seed: int = 0

    def __post_init__(self):
        counts = [self.s_count, self.zoom_count, self.lam_count, self.simplex_resolution,
                  self.z_count, self.threshold_count, self.trade_count, self.position_count]
        if min(counts) < 3:
            raise ValueError("grid counts must be at least 3")
        ranges = [r for r in (self.s_range, self.lam_range, self.z_range, self.trade_range) if r is not None]
        if not all(math.isfinite(a) and math.isfinite(b) and a < b for a, b in ranges):
            raise ValueError("grid ranges must be finite and increasing")

    def step(self, lo: float, hi: float, count: int) -> float:
        return (hi - lo) / (count - 1)


DEFAULT_GRID = GridConfig()


def _expected_loss(values, p, loss, s):
    """``E[loss(-X - s)]`` for a vector of shifts, straight from the loss values."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    with np.errstate(over="ignore", invalid="ignore"):
        out = loss(-values[None, :] - s[:, None]) @ p
    return np.where(np.isnan(out), math.inf, out)


def _scalar_shortfall(values, p, loss: LossSpec, x0: float, grid: GridConfig) -> float:
    if grid.s_range is not None:
        lo, hi = grid.s_range
    else:
        span = float(values.max() - values.min()) + 1.0
        lo, hi = -float(values.max()) - 50.0 * span, -float(values.min()) + 50.0 * span
    for _ in range(grid.zoom_rounds + 1):
        s = np.linspace(lo, hi, grid.s_count)
        ok = _expected_loss(values, p, loss, s) <= x0
        if not ok.any():
            return math.inf
        first = int(np.argmax(ok))
        if first == 0:
            return -math.inf if grid.s_range is None else float(s[0])
        lo, hi = float(s[first - 1]), float(s[first])
    return hi


def oracle_scalar_shortfall(X: RandomVector, loss: LossSpec, x0: float, grid: GridConfig = DEFAULT_GRID,
                            component: int = 0) -> float:
    """Smallest grid point ``s`` with ``E[loss(-X - s)] <= x0`` after zooming into the bracket."""
    return _scalar_shortfall(X.column(component), X.space.p, loss, x0, grid)


def _simplex_points(n: int, resolution: int) -> np.ndarray:
    """All ``q`` with ``q_k = j_k / resolution`` summing to one."""
    pts = []
    for cut in itertools.combinations(range(resolution + n - 1), n - 1):
        parts = np.diff(np.concatenate([[-1], cut, [resolution + n - 1]])) - 1
        pts.append(parts)
    return np.array(pts, dtype=float) / resolution


def _dual_objective(values, p, g: DivergenceSpec, lam: float, q: np.ndarray) -> np.ndarray:
    density = q / p
    with np.errstate(over="ignore", invalid="ignore"):
        penalty = lam * (g(density / lam) @ p)
    out = -(q @ values) - penalty
    return np.where(np.isnan(out), -math.inf, out)


def oracle_dual_sup(X: RandomVector, g: DivergenceSpec, lam: float, grid: GridConfig = DEFAULT_GRID,
                    component: int = 0) -> tuple[float, np.ndarray]:
    """``max_Q (E^Q[-X] - lam E[g(dQ/dP / lam)])`` over a simplex grid, zoomed locally.

    Returns the best value and the probabilities of the maximizing measure.
    Limited to at most four atoms.
    """
    values, p = X.column(component), X.space.p
    n = p.size
    if n > 4:
        raise ValueError("simplex grids are limited to four atoms")
    q = _simplex_points(n, grid.simplex_resolution)
    vals = _dual_objective(values, p, g, lam, q)
    best = int(np.argmax(vals))
    q_best, v_best = q[best], float(vals[best])
    h = 1.0 / grid.simplex_resolution
    k = 4
    offsets = np.array(list(itertools.product(range(-k, k + 1), repeat=n - 1)), dtype=float)
    for _ in range(grid.zoom_rounds * 3):
        step = h / k
        delta = np.hstack([offsets, -offsets.sum(axis=1, keepdims=True)]) * step
        cand = q_best + delta
        cand = cand[np.all(cand >= 0, axis=1)]
        cand = cand / cand.sum(axis=1, keepdims=True)
        vals = _dual_objective(values, p, g, lam, cand)
        j = int(np.argmax(vals))
        if vals[j] > v_best:
            q_best, v_best = cand[j], float(vals[j])
        h = step
    return v_best, q_best


def oracle_membership(X: RandomVector, losses, thresh: ThresholdData, z) -> bool:
    """``x0 - E[loss(-X - z)]`` inside ``C`` (halfspace tolerance 1e-9), term by term."""
    z = np.asarray(z, dtype=float)
    E = np.empty(X.m)
    for i, loss in enumerate(losses):
        total = 0.0
        for k, pk in enumerate(X.space.p):
            total += pk * float(loss(-X.values[k, i] - z[i]))
        E[i] = total
    if not np.all(np.isfinite(E)):
        return False
    c = thresh.x0 - E
    return bool(np.all(thresh.C.normals @ c - thresh.C.offsets >= -1e-9))


def oracle_set_region(X: RandomVector, losses, thresh: ThresholdData, grid: GridConfig = DEFAULT_GRID,
                      center=None) -> tuple[np.ndarray, np.ndarray]:
    """Classify a regular ``z``-grid (``m <= 3``); returns ``(points, member_flags)``."""
    if X.m > 3:
        raise ValueError("region grids are limited to three dimensions")
    center = np.zeros(X.m) if center is None else np.asarray(center, dtype=float)
    axis = np.linspace(*grid.z_range, grid.z_count)
    pts = np.array(list(itertools.product(axis, repeat=X.m))) + center
    flags = np.array([oracle_membership(X, losses, thresh, z) for z in pts])
    return pts, flags


def oracle_region_support(X: RandomVector, losses, thresh: ThresholdData, w,
                          grid: GridConfig = DEFAULT_GRID) -> float:
    """``inf w @ z`` over the region for ``m <= 2``.

    The region is the union over admissible expected-loss levels ``e`` in
    ``x0 - C`` of the boxes ``{z : z_i >= shortfall of X_i at level e_i}``;
    shortfall decreases in the level, so only the upper boundary of
    ``x0 - C`` matters and it is scanned on a grid.
    """
    w = np.asarray(w, dtype=float)
    m = X.m
    shortfall = [lambda e, i=i: _scalar_shortfall(X.column(i), X.space.p, losses[i], e, grid) for i in range(m)]
    if m == 1:
        # in one dimension C is the nonnegative half-line
        return float(w[0] * shortfall[0](float(thresh.x0[0])))
    if m != 2:
        raise ValueError("support scans are limited to two dimensions")
    A, b, x0 = thresh.C.normals, thresh.C.offsets, thresh.x0

    def top(e1):
        # largest e2 with A (x0 - e) >= b
        caps = [(A[j] @ x0 - b[j] - A[j, 0] * e1) / A[j, 1] for j in range(len(b)) if A[j, 1] > 0]
        if any(A[j, 1] == 0 and A[j] @ x0 - b[j] - A[j, 0] * e1 < -1e-12 for j in range(len(b))):
            return None
        return min(caps) if caps else math.inf

    def value(e1):
        e2 = top(e1)
        if e2 is None:
            return math.inf
        total = 0.0
        for i, e in enumerate((e1, e2)):
            # every component needs a finite shortfall, weighted or not
            level = shortfall[i](min(e, 1e12))
            if level == math.inf:
                return math.inf
            total += w[i] * level if w[i] > 0 else 0.0
        return math.inf if math.isnan(total) else total

    floor = losses[0].range_inf
    lo = floor if math.isfinite(floor) else x0[0] - 50.0
    hi = x0[0] + 50.0 * (1.0 + abs(x0[0]))
    e_axis = np.linspace(lo, hi, grid.threshold_count)
    for _ in range(grid.zoom_rounds + 1):
        vals = np.array([value(e) for e in e_axis])
        j = int(np.argmin(vals))
        step = e_axis[1] - e_axis[0]
        best = float(vals[j])
        e_axis = np.linspace(max(lo, e_axis[j] - step), e_axis[j] + step, grid.zoom_count)
    return best


def oracle_penalty_offset(divergences, thresh: ThresholdData, Q: VectorMeasure, w,
                          grid: GridConfig = DEFAULT_GRID, r_range=(1e-3, 1e3), count: int = 50) -> float:
    """``sup_r (-w @ I_{g,r}(Q|P) + inf_{x in -x0 + C} w @ diag(r) x)`` by a log-grid with zooming.

    Components with zero weight are skipped.  ``m <= 2``.
    """
    w = np.asarray(w, dtype=float)
    p = Q.space.p
    active = [i for i in range(Q.m) if w[i] > 0]
    if len(active) > 2:
        raise ValueError("penalty scans are limited to two weighted components")

    def divergence(i, r):
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            val = r * float(np.sum(p * divergences[i](Q.component(i) / r)))
        return math.inf if math.isnan(val) else val

    def objective(rs):
        r = np.zeros(Q.m)
        r[active] = rs
        total = -sum(w[i] * divergence(i, r[i]) for i in active)
        if not math.isfinite(total):
            return -math.inf
        return total + thresh.shifted_support(w * r)

    log_lo, log_hi = math.log(r_range[0]), math.log(r_range[1])
    axes = [np.linspace(log_lo, log_hi, count) for _ in active]
    best_val, best = -math.inf, None
    for _ in range(grid.zoom_rounds + 2):
        for point in itertools.product(*axes):
            val = objective(np.exp(point))
            if val > best_val:
                best_val, best = val, np.array(point)
        if best is None:
            return -math.inf
        steps = [ax[1] - ax[0] for ax in axes]
        axes = [np.linspace(max(log_lo, c - s), min(log_hi, c + s), 15) for c, s in zip(best, steps)]
    return best_val


def oracle_minimal_penalty_offset(losses, thresh: ThresholdData, Q: VectorMeasure, w,
                                  box: tuple[float, float] = (-5.0, 5.0), grid: GridConfig = DEFAULT_GRID) -> float:
    """``min w @ E^Q[X]`` over accepted positions ``X`` on a grid in ``box`` (zoomed).

    Accepted means ``x0 - E[loss(-X)]`` lies in ``C``.  The grid covers all
    ``n * m`` outcome coordinates, so keep ``n * m <= 4``.
    """
    w = np.asarray(w, dtype=float)
    space = Q.space
    n, m = space.n, Q.m
    if n * m > 4:
        raise ValueError("position grids are limited to four coordinates")
    zero = np.zeros(m)

    def value(flat):
        X = RandomVector(space, flat.reshape(n, m))
        if not oracle_membership(X, losses, thresh, zero):
            return math.inf
        return float(w @ (space.p @ (Q.densities * X.values)))

    axes = [np.linspace(*box, grid.position_count) for _ in range(n * m)]
    best_val, best = math.inf, None
    for _ in range(3 * grid.zoom_rounds):
        for point in itertools.product(*axes):
            val = value(np.array(point))
            if val < best_val:
                best_val, best = val, np.array(point)
        if best is None:
            return math.inf
        # a window of four steps each way lets the search slide along a curved boundary
        steps = [ax[1] - ax[0] for ax in axes]
        axes = [np.linspace(c - 4 * s, c + 4 * s, 17) for c, s in zip(best, steps)]
    return best_val


def oracle_market(Y: RandomVector, regulator, model, w, grid: GridConfig = DEFAULT_GRID) -> float:
    """Best regulator support over a grid of trade plans (``d <= 2``, at most three leaves, ``T <= 2``).

    Paying more cash than a trade requires never helps, so each node grids
    the amount of the last asset handed over and pays the cheapest cash the
    cone and the constraint allow.  When only the first asset is eligible
    the leaf amount is fixed by liquidation; otherwise it is gridded too.
    """
    tree, d, m = model.tree, model.d, regulator.m
    if d > 2 or len(tree.leaves) > 3 or tree.T > 2:
        raise ValueError("market grids need d <= 2, at most three leaves and T <= 2")
    w = np.asarray(w, dtype=float)
    inner = [node for node in tree.nodes if tree.children[node]]
    leaves = list(tree.leaves)
    axis = np.linspace(*grid.trade_range, grid.trade_count)
    normals = {node: model.cones[node].halfspaces() for node in tree.nodes}

    def cheapest(node, amount):
        # smallest first coordinate completing a trade in the cone and the constraint
        if d == 1:
            u = np.array([amount])
            return u if amount >= -1e-12 and model.constraint(node).contains(u) else None
        N = normals[node]
        if any(row[0] <= 0 and row[1] * amount < -1e-12 for row in N):
            return None
        bounds = [-(row[1] * amount) / row[0] for row in N if row[0] > 0]
        u = np.array([max(bounds) if bounds else -math.inf, amount])
        return u if math.isfinite(u[0]) and model.constraint(node).contains(u) else None

    def choices(node):
        return [u for u in (cheapest(node, a) for a in axis) if u is not None]

    inner_choices = [choices(node) for node in inner]
    liquidate = m < d
    leaf_choices = [[None] if liquidate else choices(leaf) for leaf in leaves]
    best = math.inf
    for inner_trades in itertools.product(*inner_choices):
        plan = dict(zip(inner, inner_trades))
        for leaf_trades in itertools.product(*leaf_choices):
            values = np.array(Y.values, dtype=float)
            ok = True
            for k, leaf in enumerate(leaves):
                spent = sum((plan[node] for node in tree.path(leaf) if node in plan), np.zeros(d))
                u = cheapest(leaf, Y.values[k, -1] - spent[-1]) if liquidate else leaf_trades[k]
                if u is None:
                    ok = False
                    break
                values[k] -= spent + u
            if not ok:
                continue
            X = RandomVector(Y.space, values[:, :m])
            best = min(best, oracle_region_support(X, regulator.losses, regulator.thresh, w, grid))
    return best
