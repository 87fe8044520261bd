import json
import math

import numpy as np
import pytest

from setrisk import (
    Cone,
    FiniteProbSpace,
    MarketModel,
    PreconditionError,
    RandomVector,
    Regulator,
    ScaledPositivePart,
    ScenarioTree,
    ThresholdData,
    TradeConstraint,
    TradePlan,
    VectorMeasure,
    finiteness_check,
    market_acceptance_check,
    market_extension_support,
    market_extension_support_detail,
    market_penalty,
    reachable,
    sample_directions,
    shortfall_support,
    wcone_membership,
)
from setrisk.cli import market_from_json
from setrisk.market import market_dual_bound
from setrisk.oracle import GridConfig, oracle_market

from conftest import FIXTURES

WCONE = sorted((FIXTURES / "wcone").glob("*.json"))
GRID_STEP = 0.1


def bid_ask(bid, ask):
    return Cone([[1, 0], [0, 1], [ask, -1], [-bid, 1]])


def bid_ask_model():
    tree = ScenarioTree.deterministic()
    return MarketModel(tree, 2, {tree.root: bid_ask(0.9, 1.1)})


def two_period_model():
    tree = ScenarioTree.from_parents([(0, None), (1, 0), (2, 0)], {1: 0.5, 2: 0.5})
    cones = {0: bid_ask(0.95, 1.05), 1: bid_ask(1.2, 1.3), 2: bid_ask(0.75, 0.85)}
    return MarketModel(tree, 2, cones, {1: TradeConstraint.box([math.inf, 2.0])})


def avar_regulator(x0=0.1, m=1, alpha=0.5):
    return Regulator((ScaledPositivePart(alpha),) * m, ThresholdData([x0] * m))


# --------------------------------------------------------------------------
# Cones, constraints and plans


def test_cone_constructors_agree():
    ba = Cone.bid_ask(0.9, 1.1)
    assert ba.contains([1.1, -1]) and ba.contains([-0.9, 1])
    assert not ba.contains([1.0, -1]) and not ba.contains([-1.0, 1])
    rates = Cone.from_exchange_matrix([[1, 1.1], [1 / 0.9, 1]])
    for x in ([1.1, -1], [-0.9, 1], [0.3, 0.2]):
        assert rates.contains(x)
    assert Cone.orthant(3).in_dual([0, 1, 2]) and not Cone.orthant(3).in_dual([1, -0.1, 0])


def test_cone_halfspaces_describe_the_cone(rng):
    cone = Cone.bid_ask(0.8, 1.25)
    H = cone.halfspaces()
    for _ in range(200):
        x = rng.normal(size=2)
        assert cone.contains(x) == bool(np.all(H @ x >= -1e-9))


@pytest.mark.parametrize("generators", [
    [[1, 0]],                      # misses the second unit vector
    [[1, 0], [0, 1], [-1, 0.5], [0.5, -1]],  # the last two sum to a negative vector
    [[1, 0], [0, 1], [1, -1], [-1, 0.9]],
])
def test_invalid_cones_are_rejected(generators):
    with pytest.raises(PreconditionError):
        Cone(generators)


def test_model_validation():
    tree = ScenarioTree.deterministic()
    with pytest.raises(PreconditionError):
        MarketModel(tree, 2, {})
    with pytest.raises(PreconditionError):
        MarketModel(tree, 3, {tree.root: bid_ask(0.9, 1.1)})
    with pytest.raises(PreconditionError):
        MarketModel(tree, 2, {tree.root: bid_ask(0.9, 1.1)},
                    {tree.root: TradeConstraint.halfspace([1, 0], -1.0)})
    assert MarketModel.no_trade(tree, 2).conical
    assert not two_period_model().conical


def test_reachable_follows_the_path_sum():
    model = two_period_model()
    Y = RandomVector(model.tree.space, [[0.0, 1.0], [0.0, 1.0]])
    assert np.array_equal(reachable(Y, TradePlan({}), model).values, Y.values)
    plan = TradePlan({0: np.array([1.05, -1.0]), 2: np.array([0.0, 0.5])})
    out = reachable(Y, plan, model).values
    assert np.allclose(out, [[-1.05, 2.0], [-1.05, 1.5]])
    with pytest.raises(PreconditionError):
        reachable(Y, TradePlan({0: np.array([1.0, -1.0])}), model)
    with pytest.raises(PreconditionError):
        reachable(Y, TradePlan({1: np.array([0.0, 3.0])}), model)


def test_free_disposal_lowers_positions(rng):
    model = MarketModel.no_trade(ScenarioTree.from_parents([(0, None), (1, 0), (2, 0)], {1: 0.3, 2: 0.7}), 2)
    Y = RandomVector(model.tree.space, rng.normal(size=(2, 2)))
    plan = TradePlan({node: rng.uniform(0, 1, size=2) for node in model.tree.nodes})
    assert np.all(reachable(Y, plan, model).values <= Y.values)


# --------------------------------------------------------------------------
# Market extension


def test_no_trade_reduces_to_regulator(rng):
    space = FiniteProbSpace([0.2, 0.3, 0.5])
    tree = ScenarioTree.from_parents([("r", None), ("a", "r"), ("b", "r"), ("c", "r")],
                                     dict(zip("abc", space.p)))
    model = MarketModel.no_trade(tree, 2)
    reg = Regulator((ScaledPositivePart(0.5), ScaledPositivePart(0.8)), ThresholdData([0.2, 0.3]))
    Y = RandomVector(tree.space, rng.normal(size=(3, 2)))
    for w in sample_directions(2, 64):
        lp = market_extension_support(Y, reg, model, w)
        ref = shortfall_support(Y, reg.losses, reg.thresh, w)
        assert abs(lp - ref) <= 1e-9


def test_bid_ask_matches_trade_grid(frozen):
    model = bid_ask_model()
    Y = RandomVector(model.tree.space, [[0.0, 1.0]])
    detail = market_extension_support_detail(Y, avar_regulator(), model, [1.0])
    assert detail.status == "optimal"
    # selling the unit at the bid leaves cash 0.9 against a threshold of 0.1
    assert detail.value == pytest.approx(-0.95, abs=1e-9)
    assert abs(detail.value - frozen["bid_ask"]["oracle"]) <= 2 * GRID_STEP
    detail.plan.validate(model)


def test_two_period_within_grid_of_oracle(frozen):
    model = two_period_model()
    Y = RandomVector(model.tree.space, [[0.0, 1.0], [0.0, 1.0]])
    lp = market_extension_support(Y, avar_regulator(), model, [1.0])
    oracle = frozen["two_period"]["oracle"]
    assert lp <= oracle + 1e-9
    assert oracle - lp <= 2 * GRID_STEP
    # selling 7/9 of the unit at the root balances both leaves
    assert lp == pytest.approx(-1.0 - 0.05 / 9, abs=1e-9)


def test_infimal_convolution_one_period():
    tree = ScenarioTree.from_parents([(0, None), (1, 0), (2, 0)], {1: 0.4, 2: 0.6})
    model = MarketModel.uniform(tree, bid_ask(0.9, 1.1))
    Y = RandomVector(tree.space, [[0.5, 1.0], [-1.0, 0.5]])
    reg = avar_regulator(x0=0.2)
    lp = market_extension_support(Y, reg, model, [1.0])
    grid = GridConfig(trade_range=(-2.0, 2.0), trade_count=81)
    assert abs(oracle_market(Y, reg, model, [1.0], grid) - lp) <= 1e-3


def test_unbounded_market_has_certificate():
    model, Y = market_from_json(json.loads((FIXTURES / "cli" / "arbitrage_tree.json").read_text()))
    Y = Y if Y is not None else RandomVector(model.tree.space, np.zeros((model.tree.space.n, 2)))
    detail = market_extension_support_detail(Y, avar_regulator(), model, [1.0])
    assert detail.status == "unbounded" and detail.value == -math.inf
    assert detail.certificate is not None
    trades = {k: np.array(v) for k, v in detail.certificate["trades"].items()}
    for node in model.tree.nodes:
        u = trades.get(str(node), np.zeros(2))
        assert model.cones[node].contains(u, 1e-8)


def test_liquidation_infeasible():
    tree = ScenarioTree.deterministic()
    model = MarketModel.no_trade(tree, 2)
    Y = RandomVector(tree.space, [[0.0, 1.0]])
    detail = market_extension_support_detail(Y, avar_regulator(), model, [1.0])
    # only disposal is possible: throwing away the unit of asset 2 liquidates it
    assert detail.status == "optimal"
    Y_short = RandomVector(tree.space, [[0.0, -1.0]])
    detail = market_extension_support_detail(Y_short, avar_regulator(), model, [1.0])
    assert detail.status == "infeasible" and detail.value == math.inf


def test_translativity_of_cash():
    model = two_period_model()
    Y = RandomVector(model.tree.space, [[0.0, 1.0], [0.0, 1.0]])
    reg = avar_regulator()
    base = market_extension_support(Y, reg, model, [1.0])
    for z0 in (-0.7, 0.3, 2.0):
        shifted = RandomVector(Y.space, Y.values + np.array([z0, 0.0]))
        assert market_extension_support(shifted, reg, model, [1.0]) == pytest.approx(base - z0, abs=1e-9)


def test_translativity_two_eligible(rng):
    tree = ScenarioTree.from_parents([(0, None), (1, 0), (2, 0)], {1: 0.5, 2: 0.5})
    model = MarketModel.uniform(tree, bid_ask(0.9, 1.1))
    reg = avar_regulator(m=2)
    Y = RandomVector(tree.space, rng.normal(size=(2, 2)))
    z0 = np.array([0.4, -0.25])
    shifted = RandomVector(Y.space, Y.values + z0)
    for w in sample_directions(2, 8):
        assert market_extension_support(shifted, reg, model, w) == pytest.approx(
            market_extension_support(Y, reg, model, w) - w @ z0, abs=1e-8)


def test_enlarging_cones_never_hurts(rng):
    tree = ScenarioTree.from_parents([(0, None), (1, 0), (2, 0)], {1: 0.5, 2: 0.5})
    reg = avar_regulator(m=2)
    narrow = MarketModel.uniform(tree, bid_ask(0.8, 1.25))
    wide = MarketModel.uniform(tree, bid_ask(0.9, 1.1))
    orthant = MarketModel.no_trade(tree, 2)
    for _ in range(5):
        Y = RandomVector(tree.space, rng.normal(size=(2, 2)))
        for w in sample_directions(2, 8):
            a = market_extension_support(Y, reg, orthant, w)
            b = market_extension_support(Y, reg, narrow, w)
            c = market_extension_support(Y, reg, wide, w)
            assert c <= b + 1e-9 <= a + 2e-9


def test_market_inputs_are_checked():
    model = bid_ask_model()
    Y = RandomVector(model.tree.space, [[0.0, 1.0]])
    with pytest.raises(PreconditionError):
        market_extension_support(Y, avar_regulator(), model, [-1.0])
    with pytest.raises(PreconditionError):
        market_extension_support(RandomVector(model.tree.space, [[0.0]]), avar_regulator(), model, [1.0])
    with pytest.raises(PreconditionError):
        market_extension_support(Y, avar_regulator(m=3), model, [1, 1, 1])


# --------------------------------------------------------------------------
# Acceptance


def test_acceptance_check():
    model = two_period_model()
    reg = avar_regulator()
    good = RandomVector(model.tree.space, [[0.5, 0.0], [0.5, 0.0]])
    assert market_acceptance_check(good, reg, model)
    asset_only = RandomVector(model.tree.space, [[0.0, 1.0], [0.0, 1.0]])
    assert market_acceptance_check(asset_only, reg, model)
    deep = RandomVector(model.tree.space, [[-5.0, 1.0], [-5.0, 1.0]])
    assert not market_acceptance_check(deep, reg, model)


def test_acceptance_matches_support_sign(rng):
    # 0 lies in the closed upper region exactly when no direction gives a positive support
    tree = ScenarioTree.from_parents([(0, None), (1, 0), (2, 0)], {1: 0.5, 2: 0.5})
    model = MarketModel.uniform(tree, bid_ask(0.9, 1.1))
    reg = avar_regulator(m=2)
    dirs = sample_directions(2, 512)
    seen = set()
    for _ in range(20):
        Y = RandomVector(tree.space, rng.normal(size=(2, 2)))
        accepted = market_acceptance_check(Y, reg, model)
        seen.add(accepted)
        supports = (market_extension_support(Y, reg, model, w) for w in (dirs[::8] if accepted else dirs))
        if accepted:
            assert max(supports) <= 1e-9
        else:
            assert any(v > 0 for v in supports)
    assert seen == {True, False}


# --------------------------------------------------------------------------
# Dual side


@pytest.mark.parametrize("path", WCONE, ids=[p.stem for p in WCONE])
def test_wcone_hand_deflators(path):
    fx = json.loads(path.read_text())
    model, _ = market_from_json(fx["tree"])
    for case in fx["cases"]:
        Q = VectorMeasure(model.tree.space, np.array(case["measure"]["densities"], dtype=float))
        assert wcone_membership(model, Q, case["weights"]) == case["consistent"], case


def test_wcone_orthant_accepts_everything(rng):
    tree = ScenarioTree.from_parents([(0, None), (1, 0), (2, 0)], {1: 0.5, 2: 0.5})
    model = MarketModel.no_trade(tree, 2)
    for _ in range(20):
        q = rng.dirichlet([1, 1], size=2).T
        Q = VectorMeasure.from_probabilities(tree.space, q)
        assert wcone_membership(model, Q, rng.uniform(0, 2, size=2))


def _measures(space, steps=11):
    grid = np.linspace(0.0, 1.0, steps)
    for a in grid:
        for b in grid:
            yield VectorMeasure.from_probabilities(space, np.array([[a, b], [1 - a, 1 - b]]))


def test_market_penalty_outside_wcone_is_everything():
    model = MarketModel.uniform(ScenarioTree.deterministic(), bid_ask(0.5, 0.8))
    Q = VectorMeasure.from_probabilities(model.tree.space, np.array([[1.0, 1.0]]))
    pen = market_penalty(model, avar_regulator(), Q, [1.0, 1.0])
    assert pen.is_all_space
    inside = market_penalty(model, avar_regulator(), Q, [1.0, 0.6])
    assert not inside.is_all_space


def test_market_penalty_rejects_constraints():
    model = two_period_model()
    Q = VectorMeasure.from_probabilities(model.tree.space, np.full((2, 2), 0.5))
    with pytest.raises(PreconditionError):
        market_penalty(model, avar_regulator(), Q, [1.0, 1.0])


def test_no_trade_penalty_is_regulator_penalty(rng):
    from setrisk import penalty_shortfall_set

    tree = ScenarioTree.from_parents([(0, None), (1, 0), (2, 0)], {1: 0.5, 2: 0.5})
    model = MarketModel.no_trade(tree, 2)
    reg = avar_regulator(m=2)
    for Q in list(_measures(tree.space, 5))[:10]:
        w = rng.uniform(0.2, 1.5, size=2)
        a = market_penalty(model, reg, Q, w)
        b = penalty_shortfall_set(reg.losses, reg.thresh, Q, w)
        assert a.offset == pytest.approx(b.offset, abs=1e-12)


def test_weak_duality_on_grid(rng):
    tree = ScenarioTree.from_parents([(0, None), (1, 0), (2, 0)], {1: 0.5, 2: 0.5})
    model = MarketModel.uniform(tree, bid_ask(0.9, 1.1))
    reg = avar_regulator(m=1)
    Y = RandomVector(tree.space, [[0.2, 1.0], [-0.4, -0.5]])
    lp = market_extension_support(Y, reg, model, [1.0])
    checked = 0
    for Q in _measures(tree.space, 21):
        for w2 in np.linspace(0.8, 1.2, 9):
            w = [1.0, w2]
            if not wcone_membership(model, Q, w):
                continue
            checked += 1
            assert market_dual_bound(Y, model, reg, Q, w) <= lp + 1e-6
    assert checked > 10


def test_dual_bound_is_tight_on_bid_ask():
    model = MarketModel.uniform(ScenarioTree.deterministic(), bid_ask(0.9, 1.1))
    Y = RandomVector(model.tree.space, [[0.0, 1.0]])
    reg = avar_regulator()
    Q = VectorMeasure.from_probabilities(model.tree.space, np.array([[1.0, 1.0]]))
    best = max(market_dual_bound(Y, model, reg, Q, [1.0, w2]) for w2 in np.linspace(0.9, 1.1, 21))
    assert best == pytest.approx(market_extension_support(Y, reg, model, [1.0]), abs=1e-9)


# --------------------------------------------------------------------------
# Finiteness


def test_finiteness_constant_cone():
    tree = ScenarioTree.from_parents([(0, None), (1, 0), (2, 0)], {1: 0.5, 2: 0.5})
    model = MarketModel.uniform(tree, bid_ask(0.9, 1.1))
    report = finiteness_check(model, [1.0, 1.0], ThresholdData([0.0, 0.0]))
    assert report.common_halfspace and report.condition_holds
    assert all(model.cones[0].in_dual(report.weight) for _ in [0])
    assert report.support_value == pytest.approx(0.0, abs=1e-12)


def test_finiteness_disjoint_duals():
    model, _ = market_from_json(json.loads((FIXTURES / "cli" / "arbitrage_tree.json").read_text()))
    report = finiteness_check(model, 1.0, ThresholdData([0.0, 0.0]))
    assert not report.common_halfspace and not report.condition_holds
    assert report.weight is None


def test_finiteness_rejects_partial_eligibility():
    with pytest.raises(PreconditionError):
        finiteness_check(bid_ask_model(), 1.0, ThresholdData([0.0]))
