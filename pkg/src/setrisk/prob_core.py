"""Finite probability spaces, random vectors, vector measures and scenario trees."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Mapping, Sequence

import numpy as np

from .config import DEFAULT_CONFIG, NumericConfig
from .errors import PreconditionError


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class FiniteProbSpace:
    """Atoms ``0..n-1`` with strictly positive probabilities ``p``."""

    p: np.ndarray

    def __init__(self, p: Sequence[float], config: NumericConfig = DEFAULT_CONFIG):
        arr = np.array(p, dtype=float).reshape(-1)
        if arr.size == 0:
            raise PreconditionError("probability vector is empty")
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise PreconditionError("probabilities must be finite and strictly positive")
        if abs(arr.sum() - 1.0) > config.prob_sum_tol:
            raise PreconditionError(f"probabilities sum to {arr.sum():.17g}, not 1")
        object.__setattr__(self, "p", _frozen(arr))

    @classmethod
    def uniform(cls, n: int) -> "FiniteProbSpace":
        return cls(np.full(n, 1.0 / n))

    @property
    def n(self) -> int:
        return self.p.size


@dataclass(frozen=True, eq=False)
class RandomVector:
    """An ``n x m`` matrix of outcomes; row ``k`` is the value on atom ``k``."""

    space: FiniteProbSpace
    values: np.ndarray

    def __init__(self, space: FiniteProbSpace, values):
        arr = np.array(values, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] != space.n:
            raise PreconditionError(
                f"values must have shape ({space.n}, m), got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise PreconditionError("random vector entries must be finite")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "values", _frozen(arr))

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def column(self, i: int) -> np.ndarray:
        return self.values[:, i]

    def shifted(self, z) -> "RandomVector":
        """``X + z`` for a deterministic vector ``z``."""
        return RandomVector(self.space, self.values + np.asarray(z, dtype=float))

    def combine(self, other: "RandomVector", theta: float) -> "RandomVector":
        """Pointwise ``theta * self + (1 - theta) * other``."""
        _check_same_space(self.space, other.space)
        return RandomVector(self.space, theta * self.values + (1 - theta) * other.values)

    def ess_inf(self) -> np.ndarray:
        return self.values.min(axis=0)

    def ess_sup(self) -> np.ndarray:
        return self.values.max(axis=0)


@dataclass(frozen=True, eq=False)
class VectorMeasure:
    """``m`` probability measures given by densities ``dQ_i/dP`` per atom."""

    space: FiniteProbSpace
    densities: np.ndarray

    def __init__(self, space: FiniteProbSpace, densities, config: NumericConfig = DEFAULT_CONFIG):
        arr = np.array(densities, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2 or arr.shape[0] != space.n:
            raise PreconditionError(
                f"densities must have shape ({space.n}, m), got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise PreconditionError("densities must be finite and nonnegative")
        totals = space.p @ arr
        if np.any(np.abs(totals - 1.0) > config.density_sum_tol):
            raise PreconditionError(f"densities integrate to {totals.tolist()}, not 1")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "densities", _frozen(arr))

    @classmethod
    def base(cls, space: FiniteProbSpace, m: int) -> "VectorMeasure":
        """The base measure ``P`` repeated ``m`` times."""
        return cls(space, np.ones((space.n, m)))

    @classmethod
    def from_probabilities(cls, space: FiniteProbSpace, q) -> "VectorMeasure":
        """Build from per-atom probabilities ``q`` (``n`` or ``n x m``)."""
        q = np.array(q, dtype=float)
        if q.ndim == 1:
            q = q.reshape(-1, 1)
        return cls(space, q / space.p[:, None])

    @property
    def m(self) -> int:
        return self.densities.shape[1]

    def component(self, i: int) -> np.ndarray:
        return self.densities[:, i]

    def truncate(self, m: int) -> "VectorMeasure":
        """Keep the first ``m`` components."""
        return VectorMeasure(self.space, self.densities[:, :m])


def _check_same_space(a: FiniteProbSpace, b: FiniteProbSpace) -> None:
    if a is not b and (a.n != b.n or not np.array_equal(a.p, b.p)):
        raise PreconditionError("objects live on different probability spaces")


def expect(X: RandomVector) -> np.ndarray:
    """Componentwise expectation under the base measure."""
    return X.space.p @ X.values


def expect_under(Q: VectorMeasure, X: RandomVector) -> np.ndarray:
    """Component ``i`` is the expectation of ``X_i`` under ``Q_i``."""
    _check_same_space(Q.space, X.space)
    if Q.m != X.m:
        raise PreconditionError(f"measure has {Q.m} components, vector has {X.m}")
    return X.space.p @ (Q.densities * X.values)


@dataclass(frozen=True, eq=False)
class ScenarioTree:
    """A filtration tree whose leaves are the atoms of ``space``.

    Nodes are identified by arbitrary hashable ids.  Leaves are numbered in
    depth-first order, so the leaves below any node form a contiguous range
    ``leaf_range(node)`` of atom indices.
    """

    space: FiniteProbSpace
    root: Hashable
    parent: Mapping[Hashable, Hashable | None]
    children: Mapping[Hashable, tuple]
    order: tuple  # nodes in depth-first order
    depth: Mapping[Hashable, int]
    T: int
    _ranges: Mapping[Hashable, tuple[int, int]] = field(repr=False)
    _node_prob: Mapping[Hashable, float] = field(repr=False)

    @classmethod
    def from_parents(
        cls,
        parents: Mapping[Hashable, Hashable | None] | Sequence[tuple[Hashable, Hashable | None]],
        leaf_probs: Mapping[Hashable, float],
        node_probs: Mapping[Hashable, float] | None = None,
        config: NumericConfig = DEFAULT_CONFIG,
    ) -> "ScenarioTree":
        """Build a tree from ``node -> parent`` links (root has parent ``None``).

        Children keep their insertion order.  ``node_probs``, if given, must
        agree with the sums of leaf probabilities.
        """
        items = list(parents.items()) if isinstance(parents, Mapping) else list(parents)
        parent: dict = {}
        children: dict = {}
        for node, par in items:
            if node in parent:
                raise PreconditionError(f"duplicate node id {node!r}")
            parent[node] = par
            children.setdefault(node, [])
        roots = [node for node, par in parent.items() if par is None]
        if len(roots) != 1:
            raise PreconditionError(f"expected exactly one root, found {len(roots)}")
        for node, par in items:
            if par is not None:
                if par not in parent:
                    raise PreconditionError(f"node {node!r} has unknown parent {par!r}")
                children[par].append(node)
        root = roots[0]

        order: list = []
        depth = {root: 0}
        stack = [root]
        while stack:
            node = stack.pop()
            order.append(node)
            for child in reversed(children[node]):
                depth[child] = depth[node] + 1
                stack.append(child)
        if len(order) != len(parent):
            raise PreconditionError("parent links contain a cycle or a detached node")

        leaves = [node for node in order if not children[node]]
        T = depth[leaves[0]]
        if any(depth[leaf] != T for leaf in leaves):
            raise PreconditionError("all leaves must sit at the same depth")
        missing = [leaf for leaf in leaves if leaf not in leaf_probs]
        if missing:
            raise PreconditionError(f"missing probabilities for leaves {missing!r}")
        space = FiniteProbSpace([leaf_probs[leaf] for leaf in leaves], config)

        ranges: dict = {}
        node_prob: dict = {}
        leaf_index = {leaf: k for k, leaf in enumerate(leaves)}
        for node in reversed(order):
            if not children[node]:
                k = leaf_index[node]
                ranges[node] = (k, k + 1)
            else:
                first, last = children[node][0], children[node][-1]
                ranges[node] = (ranges[first][0], ranges[last][1])
            start, stop = ranges[node]
            node_prob[node] = float(space.p[start:stop].sum())
        if node_probs is not None:
            for node, prob in node_probs.items():
                if node not in node_prob:
                    raise PreconditionError(f"probability given for unknown node {node!r}")
                if abs(prob - node_prob[node]) > 1e-9:
                    raise PreconditionError(
                        f"node {node!r} probability {prob} differs from the sum over "
                        f"its children {node_prob[node]}"
                    )
        return cls(
            space=space,
            root=root,
            parent=parent,
            children={k: tuple(v) for k, v in children.items()},
            order=tuple(order),
            depth=depth,
            T=T,
            _ranges=ranges,
            _node_prob=node_prob,
        )

    @classmethod
    def single_period(cls, leaf_probs: Sequence[float]) -> "ScenarioTree":
        """Root ``0`` with leaves ``1..n``."""
        parents = {0: None} | {k + 1: 0 for k in range(len(leaf_probs))}
        return cls.from_parents(parents, {k + 1: q for k, q in enumerate(leaf_probs)})

    @classmethod
    def deterministic(cls) -> "ScenarioTree":
        """A single node that is both root and leaf (``T = 0``)."""
        return cls.from_parents({0: None}, {0: 1.0})

    @property
    def nodes(self) -> tuple:
        return self.order

    @property
    def leaves(self) -> tuple:
        return tuple(node for node in self.order if not self.children[node])

    def leaf_range(self, node) -> tuple[int, int]:
        if node not in self._ranges:
            raise PreconditionError(f"node {node!r} is not in the tree")
        return self._ranges[node]

    def node_prob(self, node) -> float:
        self.leaf_range(node)
        return self._node_prob[node]

    def path(self, node) -> list:
        """Nodes from the root down to ``node``."""
        out = []
        while node is not None:
            out.append(node)
            node = self.parent[node]
        return out[::-1]

    def leaf_node_incidence(self) -> np.ndarray:
        """``n x N`` 0/1 matrix: entry ``(k, j)`` is 1 iff node ``order[j]`` lies on leaf ``k``'s path."""
        mat = np.zeros((self.space.n, len(self.order)))
        for j, node in enumerate(self.order):
            start, stop = self._ranges[node]
            mat[start:stop, j] = 1.0
        return mat


def node_conditional_expect(tree: ScenarioTree, Q: VectorMeasure, node) -> np.ndarray:
    """Conditional density ``E[dQ/dP | F_t]`` on ``node``, one entry per component."""
    _check_same_space(tree.space, Q.space)
    start, stop = tree.leaf_range(node)
    p = tree.space.p[start:stop]
    return p @ Q.densities[start:stop] / p.sum()
