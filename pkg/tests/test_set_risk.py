import math

import numpy as np
import pytest
from conftest import coin, random_space

from setrisk import (
    MINUS_INFINITY,
    NOT_FINITE,
    PLUS_INFINITY,
    ExponentialLoss,
    FiniteProbSpace,
    PiecewiseLinearLoss,
    Polyhedron,
    PreconditionError,
    RandomVector,
    ScaledPositivePart,
    ThresholdData,
    VectorMeasure,
    acceptance_set_roundtrip,
    divergence_region,
    divergence_risk_vector,
    entropic_vector,
    penalty_divergence_set,
    penalty_shortfall_scalar,
    penalty_shortfall_set,
    sample_directions,
    shortfall_membership,
    shortfall_region,
    shortfall_scalar,
    shortfall_support,
    shortfall_support_detail,
    support_lower,
    vector_divergence,
)
from setrisk.oracle import GridConfig, oracle_region_support, oracle_set_region

EXP2 = (ExponentialLoss(1.0), ExponentialLoss(2.0))
AVAR2 = (ScaledPositivePart(0.5), ScaledPositivePart(0.5))
MIXED2 = (ExponentialLoss(1.5), PiecewiseLinearLoss([0.0], [0.25, 1.0]))


def coin4():
    return RandomVector(FiniteProbSpace.uniform(4), [[1, 1], [1, -1], [-1, 1], [-1, -1]])


def slanted_threshold(x0=(0.0, 0.0)):
    return ThresholdData(x0, Polyhedron([[1, 0], [0, 1], [1, 1]], [-0.5, -0.5, 0.0]))


# --------------------------------------------------------------------------
# polyhedra


def test_support_lower_examples():
    assert support_lower(Polyhedron.orthant(3), [1.0, 0.5, 0.0]) == 0.0
    assert support_lower(Polyhedron.halfspace([1, 1], 1.0), [1.0, 1.0]) == pytest.approx(1.0)
    assert support_lower(Polyhedron.halfspace([1, 1], 1.0), [1.0, 0.0]) == -math.inf
    assert support_lower(Polyhedron.empty(2), [1.0, 1.0]) == math.inf
    with pytest.raises(PreconditionError):
        support_lower(Polyhedron.orthant(2), [1.0, -1.0])


def test_polyhedron_translate_scale_exit_time():
    P = Polyhedron([[1, 0], [0, 1], [1, 1]], [-0.5, -0.5, 0.0])
    Q = P.scale([2.0, 0.5]).translate([1.0, -1.0])
    for z in np.random.default_rng(1).normal(size=(200, 2)):
        inside = P.contains((z - [1.0, -1.0]) / [2.0, 0.5])
        assert Q.contains(z) == inside
    t = P.exit_time([1.0, 1.0], [1.0, 1.0])
    assert t == pytest.approx(1.0)
    assert P.exit_time([0.0, 0.0], [-1.0, -1.0]) == math.inf


def test_threshold_validation():
    with pytest.raises(PreconditionError):
        ThresholdData([0.0, 0.0], Polyhedron([[1, -1]], [0.0]))
    with pytest.raises(PreconditionError):
        ThresholdData([0.0], Polyhedron([[1]], [0.5]))
    with pytest.raises(PreconditionError):
        ThresholdData([0.0], Polyhedron([[1]], [-0.5]))


# --------------------------------------------------------------------------
# divergence side


def test_vector_divergence_examples():
    space = FiniteProbSpace([0.5, 0.5])
    divs = tuple(loss.conjugate() for loss in EXP2)
    assert vector_divergence(divs, [1, 1], VectorMeasure.base(space, 2)) == pytest.approx([0.0, 0.0])
    assert vector_divergence(divs, [1, 0], VectorMeasure.base(space, 2)) is PLUS_INFINITY
    Q = VectorMeasure(space, [[2.0, 1.0], [0.0, 1.0]])
    assert vector_divergence(divs, [1, 1], Q) == pytest.approx([math.log(2.0), 0.0])


def test_divergence_risk_vector_examples(rng):
    X = RandomVector(random_space(rng, 5), rng.normal(size=(5, 2)))
    out = divergence_risk_vector(X, EXP2, [1, 1], [0, 0])
    assert out == pytest.approx(entropic_vector(X, [1.0, 2.0]), abs=1e-10)
    assert divergence_risk_vector(X, AVAR2, [0.4, 1.0], [0, 0]) is MINUS_INFINITY
    assert np.all(np.isfinite(divergence_risk_vector(X, AVAR2, [0.5, 3.0], [0, 0])))


def test_divergence_region_examples(rng):
    X = RandomVector(FiniteProbSpace([0.5, 0.5]), np.zeros((2, 2)))
    region = divergence_region(X, AVAR2, [1, 1], ThresholdData([1, 1]))
    assert region.contains([-1, -1]) and not region.contains([-1.01, 0])
    assert support_lower(region, [1, 1]) == pytest.approx(-2.0)
    assert divergence_region(X, AVAR2, [0.3, 1], ThresholdData([1, 1])) is NOT_FINITE
    # translativity on the H-representation
    Y = RandomVector(random_space(rng, 4), rng.normal(size=(4, 2)))
    z0 = np.array([0.3, -0.8])
    a = divergence_region(Y.shifted(z0), MIXED2, [1.2, 2.0], slanted_threshold())
    b = divergence_region(Y, MIXED2, [1.2, 2.0], slanted_threshold()).translate(-z0)
    assert np.allclose(a.normals, b.normals) and np.allclose(a.offsets, b.offsets, atol=1e-12)


# --------------------------------------------------------------------------
# shortfall region


def test_membership_examples(rng):
    X = RandomVector(random_space(rng, 6), rng.normal(size=(6, 2)))
    thresh = ThresholdData([0.2, 0.1])
    far = -X.values.min(axis=0) - np.array([l.inverse(x) for l, x in zip(EXP2, thresh.x0)])
    assert shortfall_membership(X, EXP2, thresh, far)
    assert not shortfall_membership(X, EXP2, thresh, far - 50.0)
    X1 = RandomVector(X.space, X.values[:, :1])
    s = shortfall_scalar(X1, EXP2[0], 0.2).value
    assert shortfall_membership(X1, EXP2[:1], ThresholdData([0.2]), [s + 1e-9])
    assert not shortfall_membership(X1, EXP2[:1], ThresholdData([0.2]), [s - 1e-6])


@pytest.mark.parametrize("losses,x0", [(EXP2, (0.0, 0.0)), (AVAR2, (0.2, 0.2)), (MIXED2, (0.1, 0.1))],
                         ids=["entropic", "avar", "mixed"])
def test_oracle_classification_matches(losses, x0):
    X = coin4()
    thresh = slanted_threshold(x0)
    oracle, _ = shortfall_region(X, losses, thresh, 4)
    pts, flags = oracle_set_region(X, losses, thresh, GridConfig(z_count=31), center=oracle.anchor - 2.0)
    mine = np.array([oracle.contains(z) for z in pts])
    assert np.array_equal(mine, flags)
    assert 0 < flags.sum() < flags.size


def test_region_cloud_and_support(frozen):
    X = coin4()
    thresh = slanted_threshold()
    oracle, cloud = shortfall_region(X, EXP2[:1] * 2, thresh, 16)
    assert cloud.directions.shape == (16, 2)
    for w, s, z in zip(cloud.directions, cloud.support, cloud.points):
        assert oracle.contains(z + 1e-6)
        assert w @ z == pytest.approx(s, abs=1e-5)
    # every member is above the support plane
    rng = np.random.default_rng(5)
    members = [z for z in oracle.anchor + rng.normal(scale=2.0, size=(400, 2)) if oracle.contains(z)]
    assert len(members) > 50
    for w, s in zip(cloud.directions, cloud.support):
        assert min(w @ z for z in members) >= s - 1e-9
    cases = frozen["halfspace_support"]
    assert shortfall_support(X, EXP2[:1] * 2, thresh, [1, 1]) == pytest.approx(cases["diag"], abs=1e-5)
    assert shortfall_support(X, EXP2[:1] * 2, thresh, [0.6, 0.8]) == pytest.approx(cases["tilted"], abs=1e-5)
    assert shortfall_support(X, EXP2[:1] * 2, thresh, [1, 0]) == pytest.approx(cases["axis"], abs=1e-5)


def test_region_in_one_dimension():
    X = coin([1.0, -1.0])
    oracle, cloud = shortfall_region(X, (ExponentialLoss(1.0),), ThresholdData([0.0]))
    s = shortfall_scalar(X, ExponentialLoss(1.0), 0.0).value
    assert cloud.support[0] == pytest.approx(s, abs=1e-9)
    assert oracle.contains([s + 1e-8]) and not oracle.contains([s - 1e-6])


def test_entropic_orthant_optimal_scaling(rng):
    X = RandomVector(random_space(rng, 5), rng.normal(size=(5, 2)))
    beta, x0 = np.array([1.0, 2.0]), np.array([0.3, 0.1])
    sol = shortfall_support_detail(X, EXP2, ThresholdData(x0), [0.4, 0.9])
    # the dual is flat at its peak: the value is sharp, the maximizer less so
    assert sol.r == pytest.approx(1 / (1 + beta * x0), abs=1e-4)
    closed = 0.4 * entropic_vector(X, beta)[0] + 0.9 * entropic_vector(X, beta)[1] \
        - 0.4 * np.log(1 + beta[0] * x0[0]) / beta[0] - 0.9 * np.log(1 + beta[1] * x0[1]) / beta[1]
    assert sol.value == pytest.approx(closed, abs=1e-9)


def test_support_against_oracle_scan():
    X = coin4()
    for losses, x0 in [(AVAR2, (0.2, 0.3)), (MIXED2, (0.1, 0.0))]:
        thresh = slanted_threshold(x0)
        for w in sample_directions(2, 6):
            mine = shortfall_support(X, losses, thresh, w)
            assert mine == pytest.approx(oracle_region_support(X, losses, thresh, w), abs=1e-5)


def test_unbounded_support():
    X = coin4()
    # with C = {x1 + x2 >= 0} and a loss unbounded below, z1 can trade off against z2 forever
    thresh = ThresholdData([0.0, 0.0], Polyhedron([[1, 1]], [0.0]))
    pwl = PiecewiseLinearLoss([0.0], [0.25, 1.0])
    assert shortfall_support(X, (pwl, pwl), thresh, [1, 0]) == -math.inf
    assert math.isfinite(shortfall_support(X, (pwl, pwl), thresh, [1, 1]))
    assert math.isfinite(shortfall_support(X, EXP2, thresh, [1, 0]))


# --------------------------------------------------------------------------
# penalties


def test_penalty_divergence_examples():
    space = FiniteProbSpace([0.5, 0.5])
    divs = tuple(loss.conjugate() for loss in EXP2)
    pen = penalty_divergence_set(divs, [1, 1], ThresholdData([0, 0]), VectorMeasure.base(space, 2), [1, 1])
    assert pen.offset == pytest.approx(0.0) and np.array_equal(pen.normal, [1, 1])
    avar = tuple(loss.conjugate() for loss in AVAR2)
    Q = VectorMeasure(space, [[1.8, 1.0], [0.2, 1.0]])
    assert penalty_divergence_set(avar, [0.5, 1.0], ThresholdData([0.1, 0.1]), Q, [1, 1]).is_all_space
    assert not penalty_divergence_set(avar, [1.0, 1.0], ThresholdData([0.1, 0.1]), Q, [1, 1]).is_all_space


def test_penalty_shortfall_frozen(frozen):
    space = FiniteProbSpace([0.5, 0.5])
    Q = VectorMeasure(space, np.array([[1.6, 1.2], [0.4, 0.8]]))
    pen = penalty_shortfall_set(EXP2, ThresholdData([0.2, 0.1]), Q, [1.0, 0.5])
    assert pen.offset == pytest.approx(frozen["entropic_penalty"]["oracle_offset"], abs=5e-4)
    assert pen.offset >= frozen["entropic_penalty"]["oracle_offset"] - 1e-9
    assert pen.offset <= frozen["minimal_penalty_m2"]["oracle_offset"] + 1e-9
    pen = penalty_shortfall_set((ScaledPositivePart(0.5), ScaledPositivePart(0.8)), ThresholdData([0.3, 0.3]),
                                Q, [1.0, 1.0])
    assert pen.offset == pytest.approx(frozen["avar_penalty"]["oracle_offset"], abs=5e-4)


def test_penalty_shortfall_dominates_divergence_penalties(rng):
    space = FiniteProbSpace([0.5, 0.5])
    Q = VectorMeasure(space, np.array([[1.6, 1.2], [0.4, 0.8]]))
    thresh = ThresholdData([0.2, 0.1])
    w = np.array([1.0, 0.5])
    best = penalty_shortfall_set(EXP2, thresh, Q, w).offset
    divs = tuple(loss.conjugate() for loss in EXP2)
    for r in rng.uniform(0.2, 3.0, size=(50, 2)):
        assert penalty_divergence_set(divs, r, thresh, Q, w).offset <= best + 1e-9


def test_penalty_shortfall_reduces_to_scalar():
    Q1 = VectorMeasure(FiniteProbSpace([0.5, 0.5]), np.array([[1.5], [0.5]]))
    for loss, x0 in [(ExponentialLoss(1.0), 0.0), (ScaledPositivePart(0.5), 0.2)]:
        pen = penalty_shortfall_set((loss,), ThresholdData([x0]), Q1, [1.0])
        assert pen.offset == pytest.approx(-penalty_shortfall_scalar(loss, x0, Q1), abs=1e-7)


# --------------------------------------------------------------------------
# acceptance sets


def test_acceptance_roundtrip(rng):
    thresh = slanted_threshold((0.1, 0.1))
    space = FiniteProbSpace.uniform(3)

    def member(X, z):
        return shortfall_membership(X, MIXED2, thresh, z)

    def accepted(X):
        # zero capital: expected losses of X itself
        E = np.array([space.p @ loss(-X.column(i)) for i, loss in enumerate(MIXED2)])
        return bool(np.all(np.isfinite(E))) and thresh.C.contains(thresh.x0 - E)

    cases = [(RandomVector(space, rng.normal(size=(3, 2))), rng.normal(size=2)) for _ in range(40)]
    report = acceptance_set_roundtrip(member, accepted, cases, rng)
    assert report.checked == 40
    assert report.ok
