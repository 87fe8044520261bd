"""Numerical tolerances and grid sizes shared by every module."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class NumericConfig:
    """Single knob surface for tolerances, iteration budgets and grids.

    Every solver takes an optional ``config`` argument and falls back to
    :data:`DEFAULT_CONFIG`.
    """

    # probability spaces
    prob_sum_tol: float = 1e-12
    density_sum_tol: float = 1e-10

    # scalar root finding
    bisection_tol: float = 1e-10
    bisection_max_iter: int = 200
    inner_tol: float = 1e-12

    # lambda / r grids
    lambda_bounds: tuple[float, float] = (1e-4, 1e4)
    lambda_grid_size: int = 200
    r_bounds: tuple[float, float] = (1e-3, 1e3)
    r_grid_size: int = 50
    golden_tol: float = 1e-10
    golden_max_iter: int = 200

    # polyhedra and regions
    membership_tol: float = 1e-9
    ray_tol: float = 1e-8
    ray_max_extent: float = 1e6

    # cutting-plane dual solver
    cut_tol: float = 1e-10
    cut_max_iter: int = 500

    # entropic Newton solve
    newton_tol: float = 1e-12
    newton_max_iter: int = 500

    # markets
    cone_tol: float = 1e-9
    market_cut_tol: float = 1e-10
    market_cut_max_iter: int = 400

    def with_overrides(self, **overrides) -> "NumericConfig":
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise KeyError(f"unknown config keys: {sorted(unknown)}")
        return replace(self, **overrides)


DEFAULT_CONFIG = NumericConfig()
