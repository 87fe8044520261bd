import math

import numpy as np
import pytest
from conftest import coin

from setrisk import (
    EntropicDivergence,
    ExponentialLoss,
    FiniteProbSpace,
    MarketModel,
    RandomVector,
    Regulator,
    RegionOracle,
    ScaledPositivePart,
    ScenarioTree,
    ThresholdData,
    shortfall_scalar,
    shortfall_support,
)
from setrisk.oracle import (
    GridConfig,
    oracle_dual_sup,
    oracle_market,
    oracle_membership,
    oracle_region_support,
    oracle_scalar_shortfall,
    oracle_set_region,
)


@pytest.mark.parametrize("kwargs", [
    {"s_count": 2},
    {"trade_count": 1},
    {"z_range": (1.0, -1.0)},
    {"lam_range": (0.0, math.inf)},
])
def test_grid_config_validation(kwargs):
    with pytest.raises(ValueError):
        GridConfig(**kwargs)


def test_grid_step():
    assert GridConfig().step(-2.0, 2.0, 41) == pytest.approx(0.1)


def test_scalar_oracle_examples():
    grid = GridConfig()
    assert oracle_scalar_shortfall(coin([1.0, -1.0]), ExponentialLoss(1.0), 0.0) == pytest.approx(
        math.log(math.cosh(1.0)), abs=1e-6)
    for c in (-2.0, 0.0, 3.5):
        assert oracle_scalar_shortfall(coin([c, c]), ExponentialLoss(2.0), 0.0) == pytest.approx(-c, abs=1e-6)
    # AV@R at level 1/2 of a +-2 coin sits on the lower outcome
    assert oracle_scalar_shortfall(coin([2.0, -2.0]), ScaledPositivePart(0.5), 1.0) == pytest.approx(
        shortfall_scalar(coin([2.0, -2.0]), ScaledPositivePart(0.5), 1.0).value, abs=grid.step(-1, 1, 3))


def test_scalar_oracle_tracks_library(rng):
    for _ in range(10):
        space = FiniteProbSpace(rng.dirichlet(np.ones(4)))
        X = RandomVector(space, rng.normal(size=4))
        for loss, x0 in ((ExponentialLoss(1.5), 0.2), (ScaledPositivePart(0.3), 0.1)):
            assert oracle_scalar_shortfall(X, loss, x0) == pytest.approx(
                shortfall_scalar(X, loss, x0).value, abs=1e-6)


def test_dual_sup_recovers_gibbs_density():
    space = FiniteProbSpace([0.2, 0.3, 0.5])
    values = np.array([1.0, -0.5, 0.25])
    X = RandomVector(space, values)
    beta, lam = 1.0, 1.0
    value, q = oracle_dual_sup(X, ExponentialLoss(beta).conjugate(), lam)
    # the entropic conjugate tilts P by exp(-beta X) up to normalisation
    gibbs = space.p * np.exp(-beta * values)
    gibbs /= gibbs.sum()
    assert np.allclose(q, gibbs, atol=2e-3)
    assert value <= 1e-12 + max(-values)


def test_dual_sup_constant_is_minus_c():
    X = coin([0.7, 0.7])
    value, q = oracle_dual_sup(X, EntropicDivergence(1.0), 1.0)
    assert q == pytest.approx(X.space.p, abs=1e-6)
    assert value == pytest.approx(-0.7, abs=1e-9)


def test_region_grid_matches_membership_oracle():
    X = RandomVector(FiniteProbSpace([0.25] * 4), [[1, 1], [1, -1], [-1, 1], [-1, -1]])
    losses = (ExponentialLoss(1.0), ScaledPositivePart(0.5))
    thresh = ThresholdData([0.2, 0.3])
    pts, flags = oracle_set_region(X, losses, thresh, GridConfig(z_count=15))
    oracle = RegionOracle(X, losses, thresh)
    assert flags.any() and not flags.all()
    assert all(bool(f) == (z in oracle) for z, f in zip(pts, flags))
    assert all(bool(f) == oracle_membership(X, losses, thresh, z) for z, f in zip(pts, flags))


def test_region_support_upper_bounds_library(rng):
    X = RandomVector(FiniteProbSpace([0.5, 0.5]), rng.normal(size=(2, 2)))
    losses = (ExponentialLoss(1.0), ExponentialLoss(2.0))
    thresh = ThresholdData([0.1, 0.1])
    for w in ([1.0, 0.0], [1.0, 1.0], [0.3, 1.0]):
        lib = shortfall_support(X, losses, thresh, w)
        assert lib <= oracle_region_support(X, losses, thresh, w) + 1e-9
        assert oracle_region_support(X, losses, thresh, w) == pytest.approx(lib, abs=1e-4)


def test_market_oracle_zero_cone_and_translativity():
    tree = ScenarioTree.from_parents([(0, None), (1, 0), (2, 0)], {1: 0.5, 2: 0.5})
    model = MarketModel.no_trade(tree, 1)
    reg = Regulator((ScaledPositivePart(0.5),), ThresholdData([0.1]))
    Y = RandomVector(tree.space, [[0.4], [-0.6]])
    grid = GridConfig(trade_range=(-1.0, 1.0), trade_count=5)
    base = oracle_market(Y, reg, model, [1.0], grid)
    assert base == pytest.approx(shortfall_support(Y, reg.losses, reg.thresh, [1.0]), abs=1e-12)
    shifted = RandomVector(tree.space, Y.values + 0.5)
    assert oracle_market(shifted, reg, model, [1.0], grid) == pytest.approx(base - 0.5, abs=1e-12)


def test_market_oracle_limits():
    tree = ScenarioTree.from_parents([(k, None if k == 0 else 0) for k in range(5)],
                                     {k: 0.25 for k in range(1, 5)})
    model = MarketModel.no_trade(tree, 1)
    reg = Regulator((ScaledPositivePart(0.5),), ThresholdData([0.1]))
    with pytest.raises(ValueError):
        oracle_market(RandomVector(tree.space, np.zeros((4, 1))), reg, model, [1.0])
