import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fairmo.data import Dataset, gen_toy
from fairmo.model import Batch, BCEObjective, Model, ModelSpec, draw_masks, forward, grad
from fairmo.relax import (
    NOTIONS,
    RELAXATIONS,
    DegenerateGroupError,
    FairnessNotion,
    FairnessObjective,
    Relaxation,
    fairness_loss,
    fairness_value,
    landscape_grid,
    relax_neg,
    relax_pos,
    write_grid_csv,
)

from .helpers import central_difference, grad_close, random_batch, random_model

HTR = Relaxation("htr", c=2.0)
IND = Relaxation("indicator")
DDP = FairnessNotion("ddp", "a")


@pytest.mark.parametrize("c", [0.5, 2.0, 50.0])
def test_htr_pos_nonpositive_is_zero(c):
    r = Relaxation("htr", c=c)
    assert relax_pos(r, -3.0) == 0.0
    assert relax_pos(r, 0.0) == 0.0


def test_htr_pos_saturates():
    assert abs(relax_pos(Relaxation("htr", c=1.0), 10.0) - 1.0) <= 1e-8
    # 1 - tanh(10) from the exponential form, independent of np.tanh
    assert 1 - relax_pos(Relaxation("htr", c=1.0), 10.0) == pytest.approx(2 / (math.exp(20) + 1), rel=1e-6)


def test_htr_neg():
    assert relax_neg(HTR, 3.0) == 0.0
    assert abs(relax_neg(Relaxation("htr", c=1.0), -10.0) - 1.0) <= 1e-8
    assert relax_neg(IND, 0.0) == 0.0


def test_relaxation_kinds_pointwise():
    x = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
    np.testing.assert_array_equal(relax_pos(IND, x), [0, 0, 0, 1, 1])
    np.testing.assert_array_equal(relax_pos(Relaxation("linear"), x), x)
    np.testing.assert_array_equal(relax_pos(Relaxation("convex-concave"), x), np.minimum(0, x))
    np.testing.assert_array_equal(relax_neg(IND, x), [1, 1, 0, 0, 0])
    np.testing.assert_array_equal(relax_neg(Relaxation("linear"), x), -x)
    np.testing.assert_array_equal(relax_neg(Relaxation("convex-concave"), x), np.minimum(0, -x))


SIGNED = [x for v in (0.1, 0.5, 1.0, 5.0) for x in (v, -v)]


def test_tanh_converges_to_sign():
    for x in SIGNED:
        assert abs(math.tanh(100 * x) - math.copysign(1.0, x)) <= 1e-8
    assert math.tanh(0.0) == 0.0


def test_htr_converges_to_indicator():
    r = Relaxation("htr", c=100.0)
    for x in SIGNED:
        assert abs(relax_pos(r, x) - (1.0 if x > 0 else 0.0)) <= 1e-8
        if x <= 0:
            assert relax_pos(r, x) == 0.0


@settings(max_examples=200, deadline=None)
@given(
    x=st.floats(-20, 20),
    dx=st.floats(0, 5),
    c=st.floats(0.01, 50),
    dc=st.floats(0, 50),
)
def test_htr_monotone_in_x_and_c(x, dx, c, dc):
    lo, hi = Relaxation("htr", c=c), Relaxation("htr", c=c + dc)
    assert relax_pos(lo, x + dx) >= relax_pos(lo, x)
    if x > 0:
        assert relax_pos(hi, x) >= relax_pos(lo, x)
    assert 0.0 <= relax_pos(lo, x) <= 1.0


def test_indicator_ddp_worked_example():
    scores = np.array([1.0, -1.0, 1.0, 1.0])
    groups = np.array([-1.0, -1.0, 1.0, 1.0])
    v = fairness_value(scores, np.ones(4), groups, DDP, IND)
    assert v.signed == pytest.approx(-0.5)
    assert v.absolute == pytest.approx(0.5)
    assert v.rates == {-1: 0.5, 1: 1.0}


@pytest.mark.parametrize("kind", RELAXATIONS)
@pytest.mark.parametrize("notion", NOTIONS)
def test_identical_groups_are_fair(kind, notion):
    rng = np.random.default_rng(0)
    s = rng.normal(size=6)
    y = np.array([1, -1, 1, -1, 1, -1.0])
    scores = np.concatenate([s, s])
    labels = np.concatenate([y, y])
    groups = np.repeat([-1.0, 1.0], 6)
    v = fairness_value(scores, labels, groups, FairnessNotion(notion, "a"), Relaxation(kind))
    assert v.signed == pytest.approx(0.0, abs=1e-15)


def test_perfect_equal_opportunity():
    scores = np.array([2.0, 1.0, -1.0, 3.0, 0.5, -2.0])
    labels = np.array([1, 1, -1, 1, 1, -1.0])
    groups = np.array([-1, -1, -1, 1, 1, 1.0])
    assert fairness_value(scores, labels, groups, FairnessNotion("deo", "a"), IND).signed == 0.0


def test_rate_parity_subsets():
    # group -1: (y=+1, f>0), (y=-1, f>0); group +1: (y=+1, f<0), (y=-1, f<0)
    scores = np.array([1.0, 1.0, -1.0, -1.0])
    labels = np.array([1.0, -1.0, 1.0, -1.0])
    groups = np.array([-1.0, -1.0, 1.0, 1.0])
    expect = {"tpr": 1.0, "deo": 1.0, "fpr": 1.0, "fnr": -1.0, "tnr": -1.0, "ddp": 1.0}
    for kind, val in expect.items():
        assert fairness_value(scores, labels, groups, FairnessNotion(kind, "a"), IND).signed == val, kind


def test_degenerate_group():
    with pytest.raises(DegenerateGroupError, match="deo"):
        fairness_value(np.ones(3), np.array([1, -1, -1.0]), np.array([1, -1, -1.0]), FairnessNotion("deo", "a"), IND)


def test_global_normalization_is_literal_sum_over_n():
    scores = np.array([1.0, 1.0, 1.0, -1.0])
    groups = np.array([-1.0, 1.0, 1.0, 1.0])
    group = fairness_value(scores, np.ones(4), groups, DDP, IND)
    glob = fairness_value(scores, np.ones(4), groups, DDP, Relaxation("indicator", normalization="global"))
    assert group.signed == pytest.approx(1.0 - 2 / 3)
    assert glob.signed == pytest.approx(1 / 4 - 2 / 4)


def _pm1_pairs(n):
    return st.tuples(
        arrays(float, n, elements=st.floats(-5, 5)),
        arrays(float, n, elements=st.sampled_from([-1.0, 1.0])),
        arrays(float, n, elements=st.sampled_from([-1.0, 1.0])),
    )


@settings(max_examples=200, deadline=None)
@given(data=st.integers(4, 40).flatmap(_pm1_pairs), kind=st.sampled_from(RELAXATIONS), notion=st.sampled_from(NOTIONS))
def test_group_swap_antisymmetry_and_bounds(data, kind, notion):
    scores, labels, groups = data
    n = FairnessNotion(notion, "a")
    r = Relaxation(kind)
    try:
        v = fairness_value(scores, labels, groups, n, r)
    except DegenerateGroupError:
        return
    swapped = fairness_value(scores, labels, -groups, n, r)
    assert swapped.signed == pytest.approx(-v.signed, abs=1e-12)
    if kind in ("indicator", "htr"):
        assert abs(v.signed) <= 1.0 + 1e-12
    if kind == "indicator":
        assert all(0.0 <= rate <= 1.0 for rate in v.rates.values())


@pytest.mark.parametrize("seed", range(20))
def test_indicator_ddp_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 51))
    scores = rng.normal(size=n)
    groups = rng.choice([-1.0, 1.0], n)
    groups[:2] = [-1.0, 1.0]
    pos = {-1: 0, 1: 0}
    cnt = {-1: 0, 1: 0}
    for s, g in zip(scores, groups):
        cnt[int(g)] += 1
        pos[int(g)] += 1 if s > 0 else 0
    expected = pos[-1] / cnt[-1] - pos[1] / cnt[1]
    assert fairness_value(scores, np.ones(n), groups, DDP, IND).signed == pytest.approx(expected, abs=1e-14)


def test_fairness_loss_examples():
    spec = ModelSpec("linear", 2)
    zero = Model(spec, np.zeros(3))
    x = np.array([[1.0, 2.0], [1.0, 2.0], [3.0, 0.0], [3.0, 0.0]])
    batch = Batch(x, np.array([1, -1, 1, -1.0]), {"a": np.array([-1, -1, 1, 1.0])})
    assert fairness_loss(zero, batch, DDP, HTR, lam=0.0) == 0.0
    assert fairness_loss(zero, batch, DDP, HTR, lam=0.1) == pytest.approx(0.0693147, abs=1e-7)


def test_fairness_loss_symmetric_batch():
    spec = ModelSpec("linear", 2)
    m = Model(spec, np.array([0.3, -0.7, 0.1]))
    x = np.array([[1.0, 2.0], [-1.0, 0.5], [1.0, 2.0], [-1.0, 0.5]])
    batch = Batch(x, np.array([1, -1, 1, -1.0]), {"a": np.array([-1, -1, 1, 1.0])})
    assert fairness_loss(m, batch, DDP, HTR, lam=0.0) == 0.0


def test_indicator_not_trainable():
    with pytest.raises(ValueError):
        FairnessObjective(DDP, IND, 0.1)


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("notion", NOTIONS)
@pytest.mark.parametrize("kind", ["htr", "linear", "convex-concave"])
def test_fairness_objective_gradient(seed, notion, kind):
    rng = np.random.default_rng(seed)
    spec = ModelSpec("mlp", 4, hidden=(4, 3), dropout=0.2)
    model = random_model(rng, spec)
    batch = random_batch(rng, 12, 4)
    masks = draw_masks(spec, 12, rng)
    obj = FairnessObjective(FairnessNotion(notion, "a"), Relaxation(kind, c=2.0), lam=0.1)
    _, analytic = grad(model, obj, batch, masks)
    numeric = central_difference(lambda p: obj(forward(Model(spec, p), batch.x, masks), batch)[0], model.params)
    assert grad_close(analytic, numeric)


def test_landscape_all_positive_cell_is_fair():
    ds = gen_toy(0, 50)
    a0, a1, raw = landscape_grid(ds, IND, FairnessNotion("ddp", "group"), (100.0, 200.0), (0.0, 0.0), 2)
    np.testing.assert_array_equal(raw, 0.0)


def test_landscape_indicator_cells_match_counting():
    ds = gen_toy(3, 20)
    notion = FairnessNotion("ddp", "group")
    a0, a1, grid = landscape_grid(ds, IND, notion, (-3, 3), (-2, 2), 7)
    x1, x2 = ds.features.T
    g = ds.sensitive["group"]
    direct = np.empty_like(grid)
    for i, j in itertools.product(range(7), range(7)):
        pred = (-x2 + a1[j] * x1 + a0[i]) > 0
        direct[i, j] = abs(pred[g == -1].mean() - pred[g == 1].mean())
    np.testing.assert_allclose(grid, direct / direct.max(), atol=1e-12)


def test_landscape_normalized_and_csv(tmp_path):
    ds = gen_toy(1, 30)
    a0, a1, grid = landscape_grid(ds, HTR, FairnessNotion("ddp", "group"), (-5, 5), (-5, 5), 2)
    assert grid.shape == (2, 2)
    assert grid.max() == 1.0 and grid.min() >= 0.0
    path = tmp_path / "g.csv"
    write_grid_csv(path, a0, a1, grid)
    lines = path.read_text().splitlines()
    assert lines[0] == "a0,a1,value"
    assert len(lines) == 5
    assert [float(v) for v in lines[2].split(",")[:2]] == [-5.0, 5.0]


def test_landscape_wrong_dimension():
    ds = Dataset(np.zeros((4, 3)), np.ones(4), {"group": np.array([1, -1, 1, -1.0])})
    with pytest.raises(ValueError):
        landscape_grid(ds, HTR, FairnessNotion("ddp", "group"), (0, 1), (0, 1), 3)
