import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pasd.data import Dataset
from pasd.errors import DatasetTooSmall, DimensionMismatch, GroupLevelMeasure, MeasureMismatch
from pasd.measures import Measure
from pasd.tree import (
    AUCTarget,
    Criterion,
    GrowthConfig,
    LossTarget,
    Tree,
    best_split_cart_to,
    best_split_pasd,
    grow,
    grow_tree,
    honest_estimate,
    make_target,
    predict,
    reestimate,
)

from oracles import grow_brute, tree_shape


def _loss_fixture(seed, n, p, discrete=False):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 4, (n, p)).astype(float) if discrete else rng.normal(size=(n, p))
    v = rng.exponential(size=n) + X[:, 0] * rng.uniform(0, 2)
    return X, v


@pytest.mark.parametrize("criterion", ["pasd", "cart-to"])
@pytest.mark.parametrize("seed", range(12))
def test_loss_tree_matches_exhaustive_growth(seed, criterion):
    n = 8 + seed % 5
    X, v = _loss_fixture(seed, n, 1 + seed % 3, discrete=seed % 2 == 1)
    cfg = GrowthConfig(max_depth=None, min_node_size=2, criterion=criterion)
    tree = grow(X, LossTarget(v), cfg, keep_indices=True)
    expected = grow_brute(X, "loss", criterion, v.tolist(), min_node=2)
    assert tree_shape(tree.root) == expected


@pytest.mark.parametrize("seed", range(12))
def test_auc_tree_matches_exhaustive_growth(seed):
    rng = np.random.default_rng(100 + seed)
    n = 16 + seed % 7
    p = 1 + seed % 3
    X = rng.normal(size=(n, p))
    labels = rng.integers(0, 2, n)
    labels[:4] = [1, 1, 0, 0]
    labels[4:8] = [1, 0, 1, 0]
    scores = np.round(rng.normal(size=n) + labels * X[:, 0], 1)
    cfg = GrowthConfig.fully_grown(Measure.AUC)
    tree = grow(X, AUCTarget(labels, scores), cfg, keep_indices=True)
    expected = grow_brute(X, "auc", "pasd", scores.tolist(), labels.tolist(), min_node=4,
                          min_cases=2, min_controls=2)
    assert tree_shape(tree.root) == expected


def _compare_trees(a: Tree, b: Tree):
    na, nb = a.nodes(), b.nodes()
    assert [n.node_id for n in na] == [n.node_id for n in nb]
    for x, y in zip(na, nb):
        assert x.split == y.split
        assert x.depth == y.depth
        assert x.stats.n == y.stats.n
        assert x.stats.estimate == pytest.approx(y.stats.estimate, rel=1e-12, abs=1e-12)
        assert x.stats.variance == pytest.approx(y.stats.variance, rel=1e-9, abs=1e-12)
        if x.statistic is None:
            assert y.statistic is None
        else:
            assert x.statistic == pytest.approx(y.statistic, rel=1e-9, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    n=st.integers(10, 120),
    p=st.integers(1, 4),
    min_node=st.integers(2, 8),
    depth=st.one_of(st.none(), st.integers(0, 5)),
    cart=st.booleans(),
    discrete=st.booleans(),
    mtry=st.integers(0, 4),
)
def test_compiled_grower_equals_reference(seed, n, p, min_node, depth, cart, discrete, mtry):
    X, v = _loss_fixture(seed, n, p, discrete)
    if n < min_node:
        return
    cfg = GrowthConfig(max_depth=depth, min_node_size=min_node,
                       criterion="cart-to" if cart else "pasd",
                       mtry=mtry if 1 <= mtry <= p else None, rng_seed=seed)
    fast = grow(X, LossTarget(v), cfg)
    ref = grow(X, LossTarget(v), cfg, reference=True)
    _compare_trees(fast, ref)
    np.testing.assert_array_equal(fast.apply(X), ref.apply(X))


def test_children_respect_minimum_sizes():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(400, 3))
    labels = (rng.random(400) < 0.3).astype(int)
    scores = rng.normal(size=400) + labels
    cfg = GrowthConfig(max_depth=None, min_node_size=15, min_cases=6, min_controls=8)
    tree = grow(X, AUCTarget(labels, scores), cfg)
    for leaf in tree.leaves():
        assert leaf.stats.n >= 15
        assert leaf.stats.n_cases >= 6 and leaf.stats.n_controls >= 8
    assert tree.n_leaves > 1


def test_mtry_restricts_features_per_node():
    X, v = _loss_fixture(7, 300, 5)
    cfg = GrowthConfig(max_depth=None, min_node_size=10, mtry=1, rng_seed=11)
    a = grow(X, LossTarget(v), cfg)
    b = grow(X, LossTarget(v), cfg)
    assert [n.split for n in a.nodes()] == [n.split for n in b.nodes()]
    # with a single random feature per node, the split features vary
    assert len(a.split_features()) > 1


def test_split_search_helpers():
    X = np.array([[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]])
    v = np.array([0.0, 0.1, 0.2, 5.0, 5.1, 5.3])
    split, s = best_split_pasd(X, LossTarget(v), GrowthConfig(min_node_size=2))
    assert split.feature == 0 and split.cutpoint == 2.5
    assert s > 0
    split, crit = best_split_cart_to(X, LossTarget(v), GrowthConfig(min_node_size=2))
    assert split.cutpoint == 2.5
    assert best_split_pasd(X, LossTarget(v), GrowthConfig(min_node_size=4)) is None
    with pytest.raises(GroupLevelMeasure):
        best_split_cart_to(X, AUCTarget([1, 1, 1, 0, 0, 0], v), GrowthConfig(min_node_size=2))


def test_cart_to_criterion_is_summed_sse():
    X = np.arange(6.0)[:, None]
    v = np.array([0.0, 0.1, 0.2, 5.0, 5.1, 5.3])
    _, crit = best_split_cart_to(X, LossTarget(v), GrowthConfig(min_node_size=2))
    left, right = v[:3], v[3:]
    assert crit == pytest.approx(((left - left.mean()) ** 2).sum() + ((right - right.mean()) ** 2).sum())


def test_config_validation():
    X, v = _loss_fixture(0, 30, 2)
    with pytest.raises(ValueError):
        grow(X, LossTarget(v), GrowthConfig(min_node_size=1))
    with pytest.raises(ValueError):
        grow(X, LossTarget(v), GrowthConfig(mtry=3))
    labels = np.tile([0, 1], 15)
    with pytest.raises(MeasureMismatch):
        grow(X, AUCTarget(labels, v), GrowthConfig(criterion=Criterion.CART_TO))
    with pytest.raises(ValueError):
        grow(X, AUCTarget(labels, v), GrowthConfig(min_cases=1))
    with pytest.raises(DatasetTooSmall):
        grow(X[:5], LossTarget(v[:5]), GrowthConfig(min_node_size=10))


def test_prediction_and_routing():
    X, v = _loss_fixture(5, 200, 3)
    tree = grow(X, LossTarget(v), GrowthConfig(max_depth=3, min_node_size=10))
    leaves = {nd.node_id: nd for nd in tree.leaves()}
    ids = tree.apply(X)
    est = tree.predict(X)
    for i in range(0, 200, 17):
        assert est[i] == leaves[ids[i]].stats.estimate
        assert predict(tree, X[i]) == est[i]
    for nid, rows in tree.route(X).items():
        assert rows.size == tree.node(nid).stats.n
    with pytest.raises(DimensionMismatch):
        tree.predict(np.zeros((2, 4)))
    with pytest.raises(DimensionMismatch):
        predict(tree, np.zeros(2))


def _validator(name):
    jsonschema = pytest.importorskip("jsonschema")
    from referencing import Registry, Resource

    from pasd import schemas

    registry = Registry().with_resources(
        (uri, Resource.from_contents(doc)) for uri, doc in schemas.all_schemas().items()
    )
    return jsonschema.Draft202012Validator(schemas.load(name), registry=registry)


@pytest.mark.parametrize("measure", ["squared_error", "auc"])
def test_serialisation_round_trip_and_schema(measure):
    rng = np.random.default_rng(9)
    X = rng.normal(size=(300, 2))
    y = (rng.random(300) < 0.5).astype(float)
    h = np.clip(0.5 + 0.3 * (y - 0.5) + 0.2 * X[:, 0], 0.01, 0.99) + rng.normal(0, 0.1, 300)
    data = Dataset(X, y, h[:, None])
    cfg = GrowthConfig(max_depth=3, min_node_size=20)
    tree = grow_tree(data, measure, 0, cfg)
    doc = json.loads(json.dumps(tree.to_dict()))
    _validator("tree").validate(doc)
    back = Tree.from_dict(doc)
    _compare_trees(tree, back)
    np.testing.assert_array_equal(back.predict(X), tree.predict(X))
    assert back.config == tree.config
    assert tree.render().splitlines()[0].startswith("root: n=300")


def test_reestimate_uses_new_rows_and_falls_back_to_ancestor():
    X, v = _loss_fixture(2, 200, 2)
    tree = grow(X, LossTarget(v), GrowthConfig(max_depth=3, min_node_size=10))
    rng = np.random.default_rng(1)
    Xn = rng.normal(size=(60, 2))
    vn = rng.exponential(size=60)
    fresh = reestimate(tree, Xn, LossTarget(vn))
    routed = tree.route(Xn)
    for node in fresh.nodes():
        rows = routed[node.node_id]
        if rows.size >= 2:
            assert not node.stats.fallback
            assert node.stats.n == rows.size
            assert node.stats.estimate == pytest.approx(vn[rows].mean())
        else:
            assert node.stats.fallback
    # a node with fewer than 2 rows copies its nearest estimable ancestor
    for node in fresh.nodes():
        if node.split is None:
            continue
        for child in (node.left, node.right):
            if child.stats.fallback and not node.stats.fallback:
                assert child.stats.estimate == node.stats.estimate


def test_reestimate_with_empty_root_keeps_training_stats_flagged():
    X, v = _loss_fixture(2, 100, 2)
    tree = grow(X, LossTarget(v), GrowthConfig(max_depth=2, min_node_size=10))
    fresh = reestimate(tree, X[:1], LossTarget(v[:1]))
    assert fresh.root.stats.fallback
    assert fresh.root.stats.estimate == tree.root.stats.estimate


def test_honest_estimate_auc():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(600, 2))
    y = (rng.random(600) < 0.5).astype(float)
    h = y * (X[:, 0] > 0) + rng.normal(size=600)
    data = Dataset(X, y, h[:, None])
    train, hold = data.subset(np.arange(300)), data.subset(np.arange(300, 600))
    tree = grow_tree(train, "auc", 0, GrowthConfig(max_depth=2, min_node_size=30))
    honest = honest_estimate(tree, hold)
    target = make_target("auc", hold.y, hold.H[:, 0])
    routed = honest.route(hold.X)
    for node in honest.nodes():
        s = target.node_stats(routed[node.node_id])
        if s is not None:
            assert node.stats.estimate == pytest.approx(s.estimate)
    assert [n.split for n in honest.nodes()] == [n.split for n in tree.nodes()]
    assert math.isclose(honest.root.stats.n, 300)
