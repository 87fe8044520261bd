"""Polyhedra in H-representation, threshold data and halfspace penalty values."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._lp import solve_lp
from .config import DEFAULT_CONFIG, NumericConfig
from .errors import PreconditionError


class Polyhedron:
    """``{z : normals @ z >= offsets}``, or the empty set when ``is_empty``."""

    def __init__(self, normals, offsets, *, check: bool = True):
        A = np.array(normals, dtype=float)
        b = np.array(offsets, dtype=float).reshape(-1)
        if A.ndim != 2 or A.shape[0] != b.size:
            raise PreconditionError(f"normals {A.shape} and offsets {b.shape} do not match")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise PreconditionError("polyhedron data must be finite")
        zero = np.all(A == 0, axis=1)
        if np.any(b[zero] > 0):
            raise PreconditionError("a zero normal with positive offset describes the empty set; use Polyhedron.empty")
        A, b = A[~zero], b[~zero]
        A.setflags(write=False)
        b.setflags(write=False)
        self._A, self._b, self._m, self._empty = A, b, A.shape[1], False
        if check and b.size:
            probe = solve_lp(np.zeros(self._m), A_ub=-A, b_ub=-b)
            if probe.status == "infeasible":
                raise PreconditionError("halfspaces have empty intersection; use Polyhedron.empty")

    @classmethod
    def _trusted(cls, A, b) -> "Polyhedron":
        return cls(A, b, check=False)

    @classmethod
    def empty(cls, m: int) -> "Polyhedron":
        poly = cls(np.zeros((0, m)), np.zeros(0), check=False)
        poly._empty = True
        return poly

    @classmethod
    def whole_space(cls, m: int) -> "Polyhedron":
        return cls(np.zeros((0, m)), np.zeros(0), check=False)

    @classmethod
    def orthant(cls, m: int) -> "Polyhedron":
        return cls(np.eye(m), np.zeros(m), check=False)

    @classmethod
    def halfspace(cls, normal, offset: float) -> "Polyhedron":
        return cls(np.reshape(normal, (1, -1)), [offset], check=False)

    @property
    def normals(self) -> np.ndarray:
        return self._A

    @property
    def offsets(self) -> np.ndarray:
        return self._b

    @property
    def m(self) -> int:
        return self._m

    @property
    def is_empty(self) -> bool:
        return self._empty

    @property
    def upper_set(self) -> bool:
        """Whether the set is closed under adding the nonnegative orthant."""
        return not self._empty and bool(np.all(self._A >= 0))

    def __repr__(self):
        if self._empty:
            return f"Polyhedron.empty({self._m})"
        return f"Polyhedron(normals={self._A.tolist()}, offsets={self._b.tolist()})"

    def residuals(self, z) -> np.ndarray:
        """``normals @ z - offsets`` (last axis of ``z`` is the coordinate)."""
        return np.asarray(z, dtype=float) @ self._A.T - self._b

    def contains(self, z, tol: float = DEFAULT_CONFIG.membership_tol) -> bool:
        if self._empty:
            return False
        return bool(np.all(self.residuals(z) >= -tol))

    def translate(self, v) -> "Polyhedron":
        """``self + v``."""
        if self._empty:
            return self
        v = np.asarray(v, dtype=float)
        return Polyhedron._trusted(self._A, self._b + self._A @ v)

    def scale(self, r) -> "Polyhedron":
        """``diag(r) self`` for strictly positive ``r``."""
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise PreconditionError("scaling factors must be strictly positive")
        if self._empty:
            return self
        return Polyhedron._trusted(self._A / r, self._b)

    def intersect(self, other: "Polyhedron") -> "Polyhedron":
        if self._empty or other._empty:
            return Polyhedron.empty(self._m)
        A = np.vstack([self._A, other._A])
        b = np.concatenate([self._b, other._b])
        try:
            return Polyhedron(A, b)
        except PreconditionError:
            return Polyhedron.empty(self._m)

    def support(self, w) -> float:
        """``inf_{x in self} w @ x``: ``-inf`` if unbounded below, ``+inf`` if empty."""
        w = np.asarray(w, dtype=float)
        if self._empty:
            return math.inf
        if self._b.size == 0:
            return 0.0 if not np.any(w) else -math.inf
        res = solve_lp(w, A_ub=-self._A, b_ub=-self._b)
        return res.fun

    def support_with_multipliers(self, w) -> tuple[float, np.ndarray | None]:
        """Support value and facet multipliers ``mu >= 0`` with ``normals.T @ mu = w``."""
        w = np.asarray(w, dtype=float)
        if self._b.size == 0:
            return (0.0, np.zeros(0)) if not np.any(w) else (-math.inf, None)
        res = solve_lp(-self._b, A_eq=self._A.T, b_eq=w, bounds=[(0, None)] * self._b.size)
        if res.status != "optimal":
            return -math.inf, None
        return -res.fun, res.x

    def exit_time(self, anchor, direction) -> float:
        """Largest ``t >= 0`` with ``anchor - t * direction`` in the polyhedron."""
        anchor = np.asarray(anchor, dtype=float)
        d = np.asarray(direction, dtype=float)
        slack = self._A @ anchor - self._b
        rate = self._A @ d
        moving = rate > 0
        if not np.any(moving):
            return math.inf
        return float(np.min(slack[moving] / rate[moving]))

    def to_json(self) -> dict:
        return {"normals": self._A.tolist(), "offsets": self._b.tolist()}


def support_lower(poly: Polyhedron, w) -> float:
    """``inf_{x in poly} w @ x`` for ``w`` in the nonnegative orthant minus the origin."""
    w = np.asarray(w, dtype=float)
    if w.shape != (poly.m,):
        raise PreconditionError(f"direction must have length {poly.m}")
    if np.any(w < 0) or not np.any(w > 0):
        raise PreconditionError("direction must be nonnegative and nonzero")
    return poly.support(w)


@dataclass(frozen=True, eq=False)
class ThresholdData:
    """Threshold level ``x0`` and acceptance cone-like set ``C`` (upper set, 0 on its boundary)."""

    x0: np.ndarray
    C: Polyhedron

    def __init__(self, x0, C: Polyhedron | None = None, config: NumericConfig = DEFAULT_CONFIG):
        x0 = np.array(x0, dtype=float).reshape(-1)
        if C is None:
            C = Polyhedron.orthant(x0.size)
        if C.m != x0.size:
            raise PreconditionError(f"C lives in R^{C.m} but x0 has {x0.size} entries")
        if C.is_empty or not C.upper_set:
            raise PreconditionError("C must be a nonempty upper set (all normals nonnegative)")
        if C.offsets.size == 0:
            raise PreconditionError("C must not be the whole space: 0 has to be a boundary point")
        if np.any(C.offsets > config.membership_tol):
            raise PreconditionError("0 must belong to C")
        if not np.any(np.abs(C.offsets) <= config.membership_tol):
            raise PreconditionError("0 must lie on the boundary of C")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "C", C)

    @property
    def m(self) -> int:
        return self.x0.size

    def shifted_support(self, lam) -> float:
        """``inf_{x in -x0 + C} lam @ x``."""
        lam = np.asarray(lam, dtype=float)
        return self.C.support(lam) - float(lam @ self.x0)


@dataclass(frozen=True, eq=False)
class PenaltyValue:
    """The halfspace ``{z : normal @ z >= offset}``; ``offset = -inf`` is the whole space."""

    normal: np.ndarray
    offset: float

    @classmethod
    def all_space(cls, w) -> "PenaltyValue":
        return cls(np.asarray(w, dtype=float), -math.inf)

    @property
    def is_all_space(self) -> bool:
        return self.offset == -math.inf

    def contains(self, z, tol: float = DEFAULT_CONFIG.membership_tol) -> bool:
        return self.is_all_space or float(self.normal @ np.asarray(z, dtype=float)) >= self.offset - tol

    def to_json(self) -> dict:
        if self.is_all_space:
            return {"kind": "all-space", "normal": self.normal.tolist()}
        return {"kind": "halfspace", "normal": self.normal.tolist(), "offset": self.offset}
