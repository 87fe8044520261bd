"""Loss functions, their conjugate divergence functions and domain metadata.

Pointwise evaluators follow IEEE conventions: values outside the effective
domain are ``inf``.  Callers that must distinguish an infinite *risk*
value use the signals in :mod:`setrisk.errors` instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import PreconditionError


@dataclass(frozen=True)
class Interval:
    """A real interval with explicit endpoint closedness."""

    lower: float
    upper: float
    lower_closed: bool
    upper_closed: bool

    def contains(self, x: float) -> bool:
        if x < self.lower or x > self.upper:
            return False
        if x == self.lower and not self.lower_closed:
            return False
        if x == self.upper and not self.upper_closed:
            return False
        return True

    def clip(self, lo: float, hi: float) -> tuple[float, float]:
        """Finite bounds ``[max(lower, lo), min(upper, hi)]``."""
        return max(self.lower, lo), min(self.upper, hi)

    @property
    def is_point(self) -> bool:
        return self.lower == self.upper


# --------------------------------------------------------------------------
# Loss functions


class LossSpec:
    """Base class for nondecreasing convex loss functions with ``0`` in the domain."""

    kind: str

    def __call__(self, x):
        raise NotImplementedError

    def right_derivative(self, x):
        raise NotImplementedError

    @property
    def upper(self) -> float:
        """Right endpoint of the domain (``inf`` when unbounded)."""
        return math.inf

    @property
    def range_inf(self) -> float:
        raise NotImplementedError

    @property
    def range_sup(self) -> float:
        raise NotImplementedError

    def range_interior(self) -> Interval:
        return Interval(self.range_inf, self.range_sup, False, False)

    def inverse(self, y: float) -> float:
        """The unique ``x`` with ``loss(x) = y`` for ``y`` in the interior of the range."""
        raise NotImplementedError

    def conjugate(self) -> "DivergenceSpec":
        raise NotImplementedError

    @property
    def is_piecewise_linear(self) -> bool:
        return False

    def kinks(self) -> np.ndarray:
        """Points where the loss is not differentiable (including a finite domain end)."""
        return np.empty(0)

    def expected(self, values: np.ndarray, p: np.ndarray, s) -> np.ndarray:
        """``E[loss(-X - s)]`` for each entry of ``s`` with ``X`` given by ``values``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        with np.errstate(over="ignore", invalid="ignore"):
            return self(-values[None, :] - s[:, None]) @ p

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ExponentialLoss(LossSpec):
    """``loss(x) = (exp(beta x) - 1) / beta``."""

    beta: float
    kind = "exponential"

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise PreconditionError(f"exponential loss needs beta > 0, got {self.beta}")

    def __call__(self, x):
        with np.errstate(over="ignore"):
            return np.expm1(self.beta * np.asarray(x, dtype=float)) / self.beta

    def right_derivative(self, x):
        with np.errstate(over="ignore"):
            return np.exp(self.beta * np.asarray(x, dtype=float))

    @property
    def range_inf(self) -> float:
        return -1.0 / self.beta

    @property
    def range_sup(self) -> float:
        return math.inf

    def inverse(self, y: float) -> float:
        return math.log1p(self.beta * y) / self.beta

    def conjugate(self) -> "EntropicDivergence":
        return EntropicDivergence(self.beta)

    def expected(self, values, p, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        b = self.beta
        # exp(-b s) E[exp(-b X)] with the max shift applied to X
        shift = -values.min()
        mgf = p @ np.exp(-b * (values + shift))
        with np.errstate(over="ignore"):
            return (np.exp(b * (shift - s)) * mgf - 1.0) / b

    def to_json(self) -> dict:
        return {"kind": "exponential", "beta": self.beta}


class PiecewiseLinearLoss(LossSpec):
    """Continuous convex piecewise-linear loss.

    ``breakpoints`` ``b_1 < ... < b_k`` split the line into ``k + 1`` pieces
    with nondecreasing slopes ``s_0 <= ... <= s_k`` (all ``>= 0``).  The
    function is pinned by ``value_at_zero``; ``upper`` optionally truncates
    the domain to ``(-inf, upper]``.
    """

    kind = "pwl"

    def __init__(
        self,
        breakpoints: Sequence[float],
        slopes: Sequence[float],
        value_at_zero: float = 0.0,
        upper: float = math.inf,
    ):
        b = np.array(breakpoints, dtype=float).reshape(-1)
        s = np.array(slopes, dtype=float).reshape(-1)
        if s.size != b.size + 1:
            raise PreconditionError(
                f"need len(slopes) == len(breakpoints) + 1, got {s.size} and {b.size}"
            )
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(s))):
            raise PreconditionError("breakpoints and slopes must be finite")
        if np.any(np.diff(b) <= 0):
            raise PreconditionError("breakpoints must be strictly increasing")
        if np.any(s < 0) or np.any(np.diff(s) < 0):
            raise PreconditionError("slopes must be nonnegative and nondecreasing")
        if not math.isfinite(value_at_zero):
            raise PreconditionError("value_at_zero must be finite")
        upper = float(upper)
        if upper < 0:
            raise PreconditionError("0 must lie in the domain (upper >= 0)")
        if b.size and upper <= b[-1]:
            raise PreconditionError("upper must exceed every breakpoint")
        if s[-1] == 0:
            raise PreconditionError("loss is constant on its domain")
        # intercepts of each affine piece, continuity fixes them up to a shift
        c = np.zeros(s.size)
        for j in range(1, s.size):
            c[j] = c[j - 1] + (s[j - 1] - s[j]) * b[j - 1]
        piece0 = int(np.searchsorted(b, 0.0, side="right"))
        c += value_at_zero - c[piece0]
        for name, arr in (("breakpoints", b), ("slopes", s), ("intercepts", c)):
            arr.setflags(write=False)
            setattr(self, "_" + name, arr)
        self._value_at_zero = float(value_at_zero)
        self._upper = upper

    @property
    def breakpoints(self) -> np.ndarray:
        return self._breakpoints

    @property
    def slopes(self) -> np.ndarray:
        return self._slopes

    @property
    def intercepts(self) -> np.ndarray:
        return self._intercepts

    @property
    def upper(self) -> float:
        return self._upper

    @property
    def value_at_zero(self) -> float:
        return self._value_at_zero

    def __eq__(self, other):
        return (
            isinstance(other, PiecewiseLinearLoss)
            and np.array_equal(self._breakpoints, other._breakpoints)
            and np.array_equal(self._slopes, other._slopes)
            and self._value_at_zero == other._value_at_zero
            and self._upper == other._upper
        )

    def __hash__(self):
        return hash((self._breakpoints.tobytes(), self._slopes.tobytes(), self._value_at_zero, self._upper))

    def __repr__(self):
        extra = "" if self._value_at_zero == 0 else f", value_at_zero={self._value_at_zero}"
        extra += "" if math.isinf(self._upper) else f", upper={self._upper}"
        return f"PiecewiseLinearLoss({self._breakpoints.tolist()}, {self._slopes.tolist()}{extra})"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        vals = np.max(x[..., None] * self._slopes + self._intercepts, axis=-1)
        return np.where(x > self._upper, math.inf, vals)

    def right_derivative(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self._breakpoints, x, side="right")
        return np.where(x >= self._upper, math.inf, self._slopes[idx])

    @property
    def range_inf(self) -> float:
        return -math.inf if self._slopes[0] > 0 else float(self._intercepts[0])

    @property
    def range_sup(self) -> float:
        return math.inf if math.isinf(self._upper) else float(self(self._upper))

    def inverse(self, y: float) -> float:
        if not self.range_interior().contains(y):
            raise PreconditionError(f"{y} is outside the interior of the loss range")
        values = self(self._breakpoints)
        j = int(np.searchsorted(values, y, side="left"))
        if j == 0:
            return float((y - self._intercepts[0]) / self._slopes[0])
        return float(self._breakpoints[j - 1] + (y - values[j - 1]) / self._slopes[j])

    def conjugate(self) -> "PiecewiseLinearDivergence":
        # the conjugate takes value -c_j at y = s_j and is affine in between
        keep = np.concatenate([[True], np.diff(self._slopes) > 0])
        return PiecewiseLinearDivergence(
            self._slopes[keep], 0.0 - self._intercepts[keep], right_slope=self._upper
        )

    @property
    def is_piecewise_linear(self) -> bool:
        return True

    def kinks(self) -> np.ndarray:
        if math.isinf(self._upper):
            return self._breakpoints
        return np.append(self._breakpoints, self._upper)

    def to_json(self) -> dict:
        out = {
            "kind": "pwl",
            "breakpoints": self._breakpoints.tolist(),
            "slopes": self._slopes.tolist(),
        }
        if self._value_at_zero != 0:
            out["value_at_zero"] = self._value_at_zero
        if not math.isinf(self._upper):
            out["upper"] = self._upper
        return out


class ScaledPositivePart(PiecewiseLinearLoss):
    """``loss(x) = max(x, 0) / alpha``, the loss behind average value at risk."""

    kind = "avar"

    def __init__(self, alpha: float):
        if not (0 < alpha <= 1):
            raise PreconditionError(f"alpha must lie in (0, 1], got {alpha}")
        super().__init__([0.0], [0.0, 1.0 / alpha])
        self.alpha = float(alpha)

    def __repr__(self):
        return f"ScaledPositivePart(alpha={self.alpha})"

    def to_json(self) -> dict:
        return {"kind": "avar", "alpha": self.alpha}


# --------------------------------------------------------------------------
# Divergence functions


class DivergenceSpec:
    """Base class for convex divergence functions with domain inside ``[0, inf)``."""

    def __call__(self, y):
        raise NotImplementedError

    def right_derivative(self, y):
        raise NotImplementedError

    @property
    def domain(self) -> tuple[float, float]:
        raise NotImplementedError

    def conjugate(self) -> LossSpec:
        raise NotImplementedError


@dataclass(frozen=True)
class EntropicDivergence(DivergenceSpec):
    """``g(y) = (y log y - y + 1) / beta`` on ``y >= 0``."""

    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise PreconditionError(f"entropic divergence needs beta > 0, got {self.beta}")

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            ylogy = np.where(y > 0, y * np.log(np.where(y > 0, y, 1.0)), 0.0)
            out = (ylogy - y + 1.0) / self.beta
        return np.where(y < 0, math.inf, out)

    def right_derivative(self, y):
        y = np.asarray(y, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(y > 0, np.log(np.where(y > 0, y, 1.0)), -math.inf) / self.beta

    @property
    def domain(self) -> tuple[float, float]:
        return 0.0, math.inf

    def conjugate(self) -> ExponentialLoss:
        return ExponentialLoss(self.beta)


class PiecewiseLinearDivergence(DivergenceSpec):
    """Convex piecewise-linear divergence.

    ``knots`` ``y_0 < ... < y_k`` (all ``>= 0``) carry the values ``values``;
    the function interpolates linearly between knots.  To the right of the
    last knot it continues with slope ``right_slope`` (``inf`` means the
    domain ends at ``y_k``).  Left of ``y_0`` it is ``+inf``.
    """

    def __init__(self, knots, values, right_slope: float = math.inf):
        y = np.array(knots, dtype=float).reshape(-1)
        v = np.array(values, dtype=float).reshape(-1)
        if y.size == 0 or y.size != v.size:
            raise PreconditionError("knots and values must be nonempty and equally long")
        if np.any(np.diff(y) <= 0) or y[0] < 0:
            raise PreconditionError("knots must be nonnegative and strictly increasing")
        if y.size > 1:
            gaps = np.diff(v) / np.diff(y)
            if np.any(np.diff(gaps) < -1e-12) or (
                math.isfinite(right_slope) and right_slope < gaps[-1] - 1e-12
            ):
                raise PreconditionError("divergence values are not convex")
        if y.size == 1 and y[0] == 0 and math.isinf(right_slope):
            raise PreconditionError("divergence domain {0} is not allowed")
        y.setflags(write=False)
        v.setflags(write=False)
        self.knots, self.values, self.right_slope = y, v, float(right_slope)

    def __repr__(self):
        return (
            f"PiecewiseLinearDivergence({self.knots.tolist()}, {self.values.tolist()}, "
            f"right_slope={self.right_slope})"
        )

    def __eq__(self, other):
        return (
            isinstance(other, PiecewiseLinearDivergence)
            and np.array_equal(self.knots, other.knots)
            and np.array_equal(self.values, other.values)
            and self.right_slope == other.right_slope
        )

    def __hash__(self):
        return hash((self.knots.tobytes(), self.values.tobytes(), self.right_slope))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        lo, hi = self.domain
        inside = np.interp(y, self.knots, self.values)
        if math.isfinite(self.right_slope):
            beyond = self.values[-1] + self.right_slope * (y - self.knots[-1])
            inside = np.where(y > self.knots[-1], beyond, inside)
        return np.where((y < lo) | (y > hi), math.inf, inside)

    def right_derivative(self, y):
        y = np.asarray(y, dtype=float)
        gaps = np.diff(self.values) / np.diff(self.knots) if self.knots.size > 1 else np.empty(0)
        slopes = np.concatenate([gaps, [self.right_slope]])
        idx = np.searchsorted(self.knots, y, side="right") - 1
        out = slopes[np.clip(idx, 0, slopes.size - 1)]
        return np.where(idx < 0, -math.inf, out)

    @property
    def domain(self) -> tuple[float, float]:
        hi = self.knots[-1] if math.isinf(self.right_slope) else math.inf
        return float(self.knots[0]), float(hi)

    def conjugate(self) -> PiecewiseLinearLoss:
        # loss(x) = max_j (x y_j - g(y_j)); kinks sit at the chord slopes of g
        y, v = self.knots, self.values
        if y.size > 2:
            gaps = np.diff(v) / np.diff(y)
            keep = np.concatenate([[True], np.abs(np.diff(gaps)) > 1e-15, [True]])
            y, v = y[keep], v[keep]
        slopes = y
        intercepts = 0.0 - v
        breakpoints = np.diff(v) / np.diff(y) if y.size > 1 else []
        value_at_zero = float(np.max(intercepts))
        return PiecewiseLinearLoss(breakpoints, slopes, value_at_zero, upper=self.right_slope)


# --------------------------------------------------------------------------
# Operations


def eval_loss(loss: LossSpec, x):
    """``loss(x)``, ``inf`` outside the domain."""
    return loss(x)


def conjugate(loss: LossSpec) -> DivergenceSpec:
    """The divergence function ``g = loss*``."""
    return loss.conjugate()


def one_over_dom(g: DivergenceSpec) -> Interval:
    """``{1/y : 0 != y in dom g}``, the admissible divergence indices."""
    lo, hi = g.domain
    lower = 0.0 if math.isinf(hi) else 1.0 / hi
    upper = math.inf if lo == 0 else 1.0 / lo
    return Interval(lower, upper, lower_closed=math.isfinite(hi), upper_closed=lo > 0)


def scaled_divergence_eval(g: DivergenceSpec, lam: float, y):
    """``lam * g(y / lam)``."""
    if not lam > 0:
        raise PreconditionError(f"divergence index must be positive, got {lam}")
    return lam * g(np.asarray(y, dtype=float) / lam)


# --------------------------------------------------------------------------
# Vector helpers and JSON


def as_vector_loss(losses, m: int) -> tuple[LossSpec, ...]:
    """Broadcast a single loss (or a length-1 sequence) to ``m`` coordinates."""
    if isinstance(losses, LossSpec):
        losses = (losses,)
    losses = tuple(losses)
    if len(losses) == 1 and m > 1:
        losses = losses * m
    if len(losses) != m:
        raise PreconditionError(f"expected {m} loss components, got {len(losses)}")
    return losses


def _per_component(value, name):
    if isinstance(value, (int, float)):
        return [float(value)]
    if not value:
        raise PreconditionError(f"{name} must be nonempty")
    return [float(v) for v in value]


def loss_from_json(obj: dict) -> tuple[LossSpec, ...]:
    """Parse the loss JSON format into one spec per coordinate."""
    kind = obj["kind"]
    if kind == "mixed":
        return tuple(loss for part in obj["components"] for loss in loss_from_json(part))
    if kind == "exponential":
        return tuple(ExponentialLoss(b) for b in _per_component(obj["beta"], "beta"))
    if kind == "avar":
        return tuple(ScaledPositivePart(a) for a in _per_component(obj["alpha"], "alpha"))
    if kind == "pwl":
        bps, slopes = obj["breakpoints"], obj["slopes"]
        nested = bool(slopes) and isinstance(slopes[0], list)
        if not nested:
            bps, slopes = [bps], [slopes]
        m = len(slopes)
        v0 = obj.get("value_at_zero", 0.0)
        up = obj.get("upper", math.inf)
        v0 = v0 if isinstance(v0, list) else [v0] * m
        up = up if isinstance(up, list) else [up] * m
        if not (len(bps) == len(v0) == len(up) == m):
            raise PreconditionError("pwl component lists have different lengths")
        return tuple(
            PiecewiseLinearLoss(b, s, z, math.inf if u is None else u)
            for b, s, z, u in zip(bps, slopes, v0, up)
        )
    raise PreconditionError(f"unknown loss kind {kind!r}")
