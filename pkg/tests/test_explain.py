import numpy as np
import pytest

from vowelgraph.dataset import FEATURE_NAMES
from vowelgraph.errors import ExactInfeasibleError
from vowelgraph.explain import Importance, ShapleyTable, aggregate_importance, shapley_interventional
from vowelgraph.model import Forest, Tree, train_forest


def stump(feature=0, n_features=3, thr=0.0, left=(0.9, 0.1), right=(0.1, 0.9)):
    return Tree(np.array([feature, -1, -1]), np.array([thr, 0.0, 0.0]), np.array([1, -1, -1]),
                np.array([2, -1, -1]), np.array([[0, 0], left, right], dtype=float),
                np.array([0, 1, 1]), 1, 0)


def stump_forest(n_features=3):
    return Forest([stump(n_features=n_features)], 1, 1, ("a", "b"), n_features, 0)


def small_forest(rng, p=6, n_estimators=5):
    X = rng.normal(size=(300, p))
    y = np.where(X[:, 0] + 0.5 * X[:, 3] > 0, "a", "b")
    return train_forest((X, list(y)), n_estimators, 4, seed=1), X


@pytest.mark.parametrize("mode", ["exact", "sampled"])
def test_stump_closed_form(mode):
    f = stump_forest()
    x = np.array([-1.0, 5.0, 5.0])
    bg = np.array([[-1.0, 0, 0], [1.0, 0, 0]] * 5)
    a = shapley_interventional(f, x, bg, mode=mode, n_perm=32)
    assert a.target == 0
    assert a.baseline == pytest.approx(0.5)
    assert a.phi[0] == pytest.approx(0.4, abs=1e-12)
    assert a.phi[1] == 0.0 and a.phi[2] == 0.0


def test_x_equal_to_background_gives_zero(rng):
    f, X = small_forest(rng)
    x = X[0]
    a = shapley_interventional(f, x, np.tile(x, (20, 1)), mode="exact")
    assert np.all(a.phi == 0.0)


def test_exact_local_accuracy_and_null_features(rng):
    f, X = small_forest(rng)
    unused = set(range(6)) - f.used_features()
    for x in X[:5]:
        a = shapley_interventional(f, x, X[100:150], mode="exact")
        assert abs(a.baseline + a.phi.sum() - a.fx) < 1e-6
        assert all(a.phi[j] == 0.0 for j in unused)


def test_sampled_local_accuracy(rng):
    f, X = small_forest(rng)
    a = shapley_interventional(f, X[0], X[100:150], mode="sampled", n_perm=64, seed=3)
    assert abs(a.baseline + a.phi.sum() - a.fx) < 1e-9


def test_sampled_converges_to_exact(rng):
    f, X = small_forest(rng)
    exact = shapley_interventional(f, X[1], X[100:140], mode="exact").phi
    approx = shapley_interventional(f, X[1], X[100:140], mode="sampled", n_perm=1500, seed=0).phi
    np.testing.assert_allclose(approx, exact, atol=0.01)


def test_sampled_error_shrinks_with_permutations(rng):
    # the spread of a permutation estimate scales as 1/sqrt(n_perm)
    f, X = small_forest(rng)
    bg = X[100:120]
    spread = {}
    for n_perm in (16, 64):
        est = np.array([shapley_interventional(f, X[2], bg, "sampled", n_perm, seed=s).phi for s in range(30)])
        spread[n_perm] = est.std(axis=0).sum()
    assert spread[16] / spread[64] == pytest.approx(2.0, rel=0.3)


def test_symmetry_duplicated_features():
    # one tree splits on feature 0 then 1, its mirror on 1 then 0
    def tree(first, second):
        return Tree(np.array([first, second, -1, -1, -1]), np.array([0.0, 0.0, 0, 0, 0]),
                    np.array([1, 3, -1, -1, -1]), np.array([2, 4, -1, -1, -1]),
                    np.array([[0, 0], [0, 0], [0, 1], [1, 0], [0.5, 0.5]], dtype=float),
                    np.array([0, 1, 1, 2, 2]), 2, 0)

    f = Forest([tree(0, 1), tree(1, 0)], 2, 2, ("a", "b"), 2, 0)
    bg = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0]])
    a = shapley_interventional(f, np.array([-1.0, -1.0]), bg, mode="exact")
    assert a.phi[0] == pytest.approx(a.phi[1], abs=1e-12)


def test_exact_refuses_many_features(rng):
    X = rng.normal(size=(400, 20))
    y = list(np.where(X.sum(axis=1) > 0, "a", "b"))
    f = train_forest((X, y), 30, 8, seed=0)
    assert len(f.used_features()) > 12
    with pytest.raises(ExactInfeasibleError):
        shapley_interventional(f, X[0], X[:10], mode="exact")


def test_importance_aggregation():
    phi = np.zeros((1, 20))
    phi[0, 0] = 1.0
    t = ShapleyTable(phi, np.zeros(1), np.zeros(1), np.zeros(1, dtype=int))
    imp = aggregate_importance([t])
    assert imp.per_feature[0] == 1.0 and imp.per_feature[1:].sum() == 0.0
    phi2 = np.zeros((2, 20))
    phi2[:, 0] = [1.0, -1.0]
    t2 = ShapleyTable(phi2, np.zeros(2), np.zeros(2), np.zeros(2, dtype=int))
    assert aggregate_importance([t2]).per_feature[0] == 1.0


def test_importance_layout_and_group_sums(rng):
    imp = Importance(rng.uniform(size=20))
    grid = imp.layout
    assert list(grid) == ["a", "e", "i", "o", "u"]
    assert list(grid["a"]) == ["density", "aspl", "cc", "q"]
    for m, total in imp.per_metric.items():
        assert total == pytest.approx(sum(grid[v][m] for v in grid))
    assert set(imp.to_dict()["per_feature"]) == set(FEATURE_NAMES)
