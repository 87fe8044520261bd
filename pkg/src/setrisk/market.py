"""Conical markets with proportional transaction costs on finite scenario trees.

Positions live in ``R^d``.  At every node of the tree the investor may
hand over any portfolio of the node's solvency cone intersected with the
node's trading constraint; the regulator only accepts the first ``m``
assets, so the remaining ``d - m`` have to be liquidated to zero.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from ._lp import solve_lp
from .config import DEFAULT_CONFIG, NumericConfig
from .errors import PreconditionError
from .loss_div import LossSpec, as_vector_loss
from .polyhedron import PenaltyValue, Polyhedron, ThresholdData
from .prob_core import RandomVector, ScenarioTree, VectorMeasure, node_conditional_expect
from .scalar_risk import check_threshold
from .set_risk import penalty_shortfall_set
from .shortfall_program import TradeStructure, acceptance_margin, minimize_support

__all__ = [
    "Cone",
    "FinitenessReport",
    "MarketModel",
    "MarketSupport",
    "Regulator",
    "TradeConstraint",
    "TradePlan",
    "finiteness_check",
    "market_acceptance_check",
    "market_extension_support",
    "market_extension_support_detail",
    "market_penalty",
    "reachable",
    "wcone_membership",
]


class Cone:
    """Polyhedral cone ``{G @ theta : theta >= 0}`` given by generator columns.

    Solvency cones must contain the nonnegative orthant and meet the
    nonpositive orthant only at the origin.
    """

    def __init__(self, generators, *, check: bool = True, config: NumericConfig = DEFAULT_CONFIG):
        G = np.array(generators, dtype=float)
        if G.ndim != 2 or G.shape[0] == 0:
            raise PreconditionError("generators must be a nonempty list of vectors")
        G = G.T  # columns are generators
        G = G[:, np.any(G != 0, axis=0)]
        G.setflags(write=False)
        self._G = G
        if check:
            self._validate(config)

    @classmethod
    def orthant(cls, d: int) -> "Cone":
        return cls(np.eye(d))

    @classmethod
    def from_exchange_matrix(cls, rates) -> "Cone":
        """Kabanov-style cone: ``rates[i][j]`` units of asset ``i`` buy one unit of ``j``.

        Infinite or ``None`` entries mark pairs that cannot be exchanged.
        """
        rates = np.array([[math.inf if v is None else v for v in row] for row in rates], dtype=float)
        d = rates.shape[0]
        gens = [row for row in np.eye(d)]
        for i, j in itertools.product(range(d), repeat=2):
            if i != j and math.isfinite(rates[i, j]):
                g = np.zeros(d)
                g[i], g[j] = rates[i, j], -1.0
                gens.append(g)
        return cls(gens)

    @classmethod
    def bid_ask(cls, bid: float, ask: float) -> "Cone":
        """Cash plus one risky asset traded at ``bid <= ask`` (prices in cash)."""
        if not 0 < bid <= ask:
            raise PreconditionError("need 0 < bid <= ask")
        return cls([[1.0, 0.0], [0.0, 1.0], [ask, -1.0], [-bid, 1.0]])

    @property
    def generators(self) -> np.ndarray:
        """Generators as columns, shape ``(d, k)``."""
        return self._G

    @property
    def d(self) -> int:
        return self._G.shape[0]

    def _validate(self, config: NumericConfig) -> None:
        d, k = self._G.shape
        for i in range(d):
            if not self.contains(np.eye(d)[i], config.cone_tol):
                raise PreconditionError(f"cone does not contain the unit vector e_{i + 1}")
        # x = G theta <= 0 with 1 @ x = -1 must be infeasible
        A_ub = np.hstack([self._G])
        A_eq = np.ones((1, d)) @ self._G
        res = solve_lp(np.zeros(k), A_ub=A_ub, b_ub=np.zeros(d), A_eq=A_eq, b_eq=[-1.0],
                       bounds=[(0, None)] * k)
        if res.status == "optimal":
            raise PreconditionError("cone contains a nonzero nonpositive vector")

    def contains(self, x, tol: float = DEFAULT_CONFIG.cone_tol) -> bool:
        """Membership by an L1 fitting LP."""
        x = np.asarray(x, dtype=float)
        d, k = self._G.shape
        c = np.concatenate([np.zeros(k), np.ones(2 * d)])
        A_eq = np.hstack([self._G, np.eye(d), -np.eye(d)])
        res = solve_lp(c, A_eq=A_eq, b_eq=x, bounds=[(0, None)] * (k + 2 * d))
        return res.status == "optimal" and res.fun <= tol

    def in_dual(self, v, tol: float = DEFAULT_CONFIG.cone_tol) -> bool:
        """Whether ``v @ g >= -tol`` for every generator ``g``."""
        return bool(np.all(np.asarray(v, dtype=float) @ self._G >= -tol))

    def halfspaces(self, tol: float = 1e-12) -> np.ndarray:
        """Facet normals ``N`` (unit rows) with ``cone = {x : N @ x >= 0}``; needs ``d <= 3``."""
        d = self.d
        G = self._G.T
        if d == 1:
            return np.ones((1, 1))
        if d == 2:
            cand = [np.array([-g[1], g[0]]) for g in G]
        elif d == 3:
            cand = [np.cross(a, b) for a, b in itertools.combinations(G, 2)]
        else:
            raise PreconditionError("facet computation is limited to d <= 3; pass halfspaces explicitly")
        out: list[np.ndarray] = []
        for n in cand:
            norm = np.linalg.norm(n)
            if norm <= tol:
                continue
            for sign in (1.0, -1.0):
                u = sign * n / norm
                if np.all(G @ u >= -1e-12) and not any(np.allclose(u, v, atol=1e-10) for v in out):
                    out.append(u)
        return np.array(out).reshape(-1, d)

    def to_json(self) -> list:
        return self._G.T.tolist()


@dataclass(frozen=True, eq=False)
class TradeConstraint:
    """``{y : A @ y <= upper}``; ``A`` empty means no constraint."""

    A: np.ndarray
    upper: np.ndarray

    @classmethod
    def all_space(cls, d: int) -> "TradeConstraint":
        return cls(np.zeros((0, d)), np.zeros(0))

    @classmethod
    def box(cls, upper) -> "TradeConstraint":
        """``y_i <= upper_i`` (infinite entries are dropped)."""
        upper = np.asarray(upper, dtype=float)
        keep = np.isfinite(upper)
        return cls(np.eye(upper.size)[keep], upper[keep])

    @classmethod
    def halfspace(cls, normal, bound: float) -> "TradeConstraint":
        return cls(np.reshape(np.asarray(normal, dtype=float), (1, -1)), np.array([float(bound)]))

    @property
    def is_all_space(self) -> bool:
        return self.A.shape[0] == 0

    def contains(self, y, tol: float = DEFAULT_CONFIG.cone_tol) -> bool:
        return self.is_all_space or bool(np.all(self.A @ np.asarray(y, dtype=float) <= self.upper + tol))


@dataclass(frozen=True, eq=False)
class MarketModel:
    """Tree, asset count, and a solvency cone plus trading constraint per node."""

    tree: ScenarioTree
    d: int
    cones: Mapping[Hashable, Cone]
    constraints: Mapping[Hashable, TradeConstraint] = field(default_factory=dict)

    def __post_init__(self):
        for node in self.tree.nodes:
            if node not in self.cones:
                raise PreconditionError(f"node {node!r} has no solvency cone")
            if self.cones[node].d != self.d:
                raise PreconditionError(f"cone at node {node!r} lives in R^{self.cones[node].d}, not R^{self.d}")
            con = self.constraint(node)
            if con.A.shape[1] != self.d:
                raise PreconditionError(f"constraint at node {node!r} has the wrong dimension")
            if not con.contains(np.zeros(self.d)):
                raise PreconditionError(f"constraint at node {node!r} excludes the zero trade")

    @classmethod
    def uniform(cls, tree: ScenarioTree, cone: Cone, constraint: TradeConstraint | None = None) -> "MarketModel":
        cones = {node: cone for node in tree.nodes}
        constraints = {} if constraint is None else {node: constraint for node in tree.nodes}
        return cls(tree, cone.d, cones, constraints)

    @classmethod
    def no_trade(cls, tree: ScenarioTree, d: int) -> "MarketModel":
        """Only free disposal: every cone is the nonnegative orthant."""
        return cls.uniform(tree, Cone.orthant(d))

    def constraint(self, node) -> TradeConstraint:
        return self.constraints.get(node, TradeConstraint.all_space(self.d))

    @property
    def conical(self) -> bool:
        return all(self.constraint(node).is_all_space for node in self.tree.nodes)


@dataclass(frozen=True, eq=False)
class TradePlan:
    """One trade vector ``U_t(node)`` per node; nodes left out trade nothing."""

    trades: Mapping[Hashable, np.ndarray]

    def trade(self, node, d: int) -> np.ndarray:
        return np.asarray(self.trades.get(node, np.zeros(d)), dtype=float)

    def validate(self, model: MarketModel, tol: float = DEFAULT_CONFIG.cone_tol) -> None:
        for node, u in self.trades.items():
            if node not in model.cones:
                raise PreconditionError(f"plan trades at unknown node {node!r}")
            u = np.asarray(u, dtype=float)
            if not model.cones[node].contains(u, tol):
                raise PreconditionError(f"trade at node {node!r} leaves the solvency cone")
            if not model.constraint(node).contains(u, tol):
                raise PreconditionError(f"trade at node {node!r} violates the trading constraint")


def reachable(Y: RandomVector, plan: TradePlan, model: MarketModel, *, validate: bool = True) -> RandomVector:
    """Leafwise ``Y - sum of the trades along the path``."""
    if validate:
        plan.validate(model)
    tree = model.tree
    out = np.array(Y.values, dtype=float)
    for node in tree.nodes:
        start, stop = tree.leaf_range(node)
        out[start:stop] -= plan.trade(node, model.d)
    return RandomVector(Y.space, out)


@dataclass(frozen=True, eq=False)
class Regulator:
    """Vector loss on the first ``m`` assets with threshold data."""

    losses: tuple[LossSpec, ...]
    thresh: ThresholdData

    def __init__(self, losses, thresh: ThresholdData):
        losses = as_vector_loss(losses, thresh.m)
        for loss, x0 in zip(losses, thresh.x0):
            check_threshold(loss, x0)
        object.__setattr__(self, "losses", losses)
        object.__setattr__(self, "thresh", thresh)

    @property
    def m(self) -> int:
        return self.thresh.m


def _trade_structure(Y: RandomVector, model: MarketModel, m: int) -> tuple[TradeStructure, list]:
    """Trade variables are generator weights per node; the last ``d - m`` assets must end at zero."""
    tree, d = model.tree, model.d
    n = Y.space.n
    blocks, col = [], 0
    for node in tree.nodes:
        k = model.cones[node].generators.shape[1]
        blocks.append((node, col, k))
        col += k
    q = col
    # S[(leaf, asset), theta] = sum over the leaf's path of the traded amount of that asset
    S = np.zeros((n, d, q))
    A_ub, b_ub = [], []
    for node, start, k in blocks:
        G = model.cones[node].generators
        lo, hi = tree.leaf_range(node)
        S[lo:hi, :, start:start + k] += G[None, :, :]
        con = model.constraint(node)
        for a, u in zip(con.A, con.upper):
            row = np.zeros(q)
            row[start:start + k] = a @ G
            A_ub.append(row)
            b_ub.append(u)
    M = S[:, :m, :].reshape(n * m, q)
    A_eq = S[:, m:, :].reshape(n * (d - m), q)
    b_eq = Y.values[:, m:].reshape(-1)
    trades = TradeStructure(
        M,
        A_eq if A_eq.size else None,
        b_eq if A_eq.size else None,
        np.array(A_ub) if A_ub else None,
        np.array(b_ub) if b_ub else None,
    )
    return trades, blocks


def _plan_from(theta, model: MarketModel, blocks) -> TradePlan:
    return TradePlan({
        node: model.cones[node].generators @ theta[start:start + k] for node, start, k in blocks
    })


@dataclass(frozen=True)
class MarketSupport:
    """Scalarized market extension: value, status and, when available, a plan or a ray."""

    status: str  # "optimal" | "unbounded" | "infeasible"
    value: float
    z: np.ndarray | None = None
    plan: TradePlan | None = None
    certificate: dict | None = None
    message: str = ""


def _check_market_inputs(Y: RandomVector, regulator: Regulator, model: MarketModel) -> None:
    if Y.m != model.d:
        raise PreconditionError(f"position has {Y.m} assets but the market has {model.d}")
    if regulator.m > model.d:
        raise PreconditionError("the regulator cannot see more assets than the market has")
    if Y.space.n != model.tree.space.n or not np.array_equal(Y.space.p, model.tree.space.p):
        raise PreconditionError("position and tree live on different probability spaces")


def market_extension_support_detail(Y: RandomVector, regulator: Regulator, model: MarketModel, w,
                                    config: NumericConfig = DEFAULT_CONFIG) -> MarketSupport:
    """``inf w @ z`` over ``z`` in the union of regulator regions of all liquidated positions.

    One LP over capital, generator weights at every node and epigraph
    variables for the losses.  Piecewise-linear losses are encoded exactly;
    smooth losses are refined with tangent cuts.
    """
    _check_market_inputs(Y, regulator, model)
    m = regulator.m
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != m or np.any(w < 0) or not np.any(w > 0):
        raise PreconditionError("direction must be nonnegative, nonzero and of length m")
    trades, blocks = _trade_structure(Y, model, m)
    res = minimize_support(Y.space.p, Y.values[:, :m], regulator.losses, regulator.thresh, w,
                           trades=trades, config=config)
    if res.status == "infeasible":
        return MarketSupport("infeasible", math.inf, message="no trading strategy liquidates the ineligible assets")
    if res.status == "unbounded":
        cert = None
        if res.ray is not None:
            cert = {
                "z": res.ray["z"].tolist(),
                "trades": {str(node): u.tolist() for node, u in _plan_from(res.ray["theta"], model, blocks).trades.items()},
            }
        return MarketSupport("unbounded", -math.inf, certificate=cert,
                             message="support is unbounded below along the certificate ray")
    return MarketSupport("optimal", float(res.value), z=res.z, plan=_plan_from(res.theta, model, blocks))


def market_extension_support(Y: RandomVector, regulator: Regulator, model: MarketModel, w,
                             config: NumericConfig = DEFAULT_CONFIG) -> float:
    return market_extension_support_detail(Y, regulator, model, w, config).value


def market_acceptance_check(Y: RandomVector, regulator: Regulator, model: MarketModel,
                            config: NumericConfig = DEFAULT_CONFIG) -> bool:
    """Whether some admissible trading turns ``Y`` into an accepted, fully liquidated position."""
    _check_market_inputs(Y, regulator, model)
    m = regulator.m
    trades, _ = _trade_structure(Y, model, m)
    res = acceptance_margin(Y.space.p, Y.values[:, :m], regulator.losses, regulator.thresh,
                            np.zeros(m), trades=trades, config=config)
    return res.status == "optimal"


def wcone_membership(model: MarketModel, Q: VectorMeasure, w, config: NumericConfig = DEFAULT_CONFIG) -> bool:
    """Whether ``diag(w) E[dQ/dP | node]`` lies in the dual cone at every node."""
    if Q.m != model.d:
        raise PreconditionError(f"measure has {Q.m} components but the market has {model.d} assets")
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != model.d or np.any(w < 0):
        raise PreconditionError("weights must be nonnegative with one entry per asset")
    for node in model.tree.nodes:
        density = node_conditional_expect(model.tree, Q, node)
        if not model.cones[node].in_dual(w * density, config.cone_tol):
            return False
    return True


def market_penalty(model: MarketModel, regulator: Regulator, Q: VectorMeasure, w,
                   config: NumericConfig = DEFAULT_CONFIG) -> PenaltyValue:
    """Regulator penalty at the first ``m`` components, or the whole space outside the consistent set."""
    if not model.conical:
        raise PreconditionError("the dual penalty is only available for purely conical models")
    m = regulator.m
    w = np.asarray(w, dtype=float).reshape(-1)
    if not np.any(w[:m] > 0):
        raise PreconditionError("weights on the eligible assets must not all vanish")
    if not wcone_membership(model, Q, w, config):
        return PenaltyValue.all_space(w[:m])
    return penalty_shortfall_set(regulator.losses, regulator.thresh, Q.truncate(m), w[:m], config)


def market_dual_bound(Y: RandomVector, model: MarketModel, regulator: Regulator, Q: VectorMeasure, w,
                      config: NumericConfig = DEFAULT_CONFIG) -> float:
    """Lower bound ``offset + sum_i w_i E^{Q_i}[-Y_i]`` on the market support at ``w[:m]``.

    ``-inf`` when the penalty is the whole space.
    """
    pen = market_penalty(model, regulator, Q, w, config)
    if pen.is_all_space:
        return -math.inf
    w = np.asarray(w, dtype=float)
    expected = Y.space.p @ (Q.densities * Y.values)
    return pen.offset - float(w @ expected)


@dataclass(frozen=True)
class FinitenessReport:
    """Outcome of :func:`finiteness_check`."""

    common_halfspace: bool
    weight: np.ndarray | None
    condition_holds: bool
    support_value: float

    def to_json(self) -> dict:
        return {
            "common_halfspace": self.common_halfspace,
            "weight": None if self.weight is None else self.weight.tolist(),
            "condition_holds": self.condition_holds,
            "support_value": self.support_value,
        }


def finiteness_check(model: MarketModel, r, thresh: ThresholdData) -> FinitenessReport:
    """Look for ``w >= 0`` with ``1 @ w = 1`` supporting every solvency cone.

    The report also says whether some such ``w`` makes
    ``inf_{x in C} w @ diag(r) x`` finite, which together with the first
    part keeps the divergence market extension away from ``-inf``.
    """
    d = model.d
    if thresh.m != d:
        raise PreconditionError("the finiteness test needs as many eligible assets as market assets")
    r = np.broadcast_to(np.asarray(r, dtype=float), (d,))
    if np.any(r <= 0):
        raise PreconditionError("scalings must be positive")
    rows = np.vstack([-model.cones[node].generators.T for node in model.tree.nodes])
    base = solve_lp(np.zeros(d), A_ub=rows, b_ub=np.zeros(rows.shape[0]),
                    A_eq=np.ones((1, d)), b_eq=[1.0], bounds=[(0, None)] * d)
    if base.status != "optimal":
        return FinitenessReport(False, None, False, -math.inf)
    A = thresh.C.normals
    k = A.shape[0]
    # variables (w, mu): A^T mu = diag(r) w
    A_eq = np.vstack([
        np.hstack([np.ones((1, d)), np.zeros((1, k))]),
        np.hstack([-np.diag(r), A.T]),
    ])
    A_ub = np.hstack([rows, np.zeros((rows.shape[0], k))])
    joint = solve_lp(np.zeros(d + k), A_ub=A_ub, b_ub=np.zeros(rows.shape[0]), A_eq=A_eq,
                     b_eq=np.concatenate([[1.0], np.zeros(d)]), bounds=[(0, None)] * (d + k))
    if joint.status == "optimal":
        weight = joint.x[:d]
        return FinitenessReport(True, weight, True, thresh.C.support(r * weight))
    weight = base.x
    return FinitenessReport(True, weight, False, thresh.C.support(r * weight))
