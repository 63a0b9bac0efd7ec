"""Tests for the from-scratch random forest."""

import numpy as np
import pytest

from facefuse.errors import CompatibilityError, DataError
from facefuse.forest import (
    ForestParams,
    Node,
    RandomForest,
    best_split,
    feature_importances,
    gini_impurity,
    load_model,
    predict_proba,
    predict_proba_batch,
    save_model,
    train_forest,
)
from facefuse.fusion import FusedVector

from _oracles import best_split_bruteforce, pairwise_auc


def _leaf(n_real, n_fake):
    return Node(-1, 0.0, -1, -1, n_real, n_fake, 0.0)


def _clusters(rng, n=200, d=256, sep=6.0):
    """Two well-separated Gaussian blobs; returns (X, labels)."""
    half = n // 2
    centers = np.zeros((2, d))
    centers[1, : d // 4] = sep
    X = np.vstack(
        [
            rng.normal(centers[0], 1.0, (half, d)),
            rng.normal(centers[1], 1.0, (n - half, d)),
        ]
    )
    y = ["real"] * half + ["fake"] * (n - half)
    return X, y


class TestGini:
    def test_pure_node(self):
        assert gini_impurity((10, 0)) == 0.0
        assert gini_impurity((0, 3)) == 0.0

    def test_balanced_node(self):
        assert gini_impurity((5, 5)) == 0.5

    def test_three_one(self):
        assert gini_impurity((3, 1)) == 0.375

    def test_empty_node_rejected(self):
        with pytest.raises(ValueError):
            gini_impurity((0, 0))


class TestBestSplit:
    def test_perfect_split(self):
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        y = np.array([0, 0, 1, 1])
        feat, thr, dec = best_split(X, y, [0])
        assert (feat, thr, dec) == (0, 2.5, 0.5)

    def test_constant_feature_gives_none(self):
        X = np.full((6, 1), 3.0)
        y = np.array([0, 1, 0, 1, 0, 1])
        assert best_split(X, y, [0]) is None

    def test_pure_node_gives_none(self):
        X = np.arange(8.0).reshape(-1, 1)
        assert best_split(X, np.zeros(8, dtype=int), [0]) is None

    def test_candidate_order_does_not_matter(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(30, 6))
        y = rng.integers(0, 2, 30)
        a = best_split(X, y, [5, 2, 0, 3])
        b = best_split(X, y, [0, 2, 3, 5])
        assert a == b

    @pytest.mark.parametrize("msl", [1, 3])
    def test_matches_exhaustive_oracle(self, msl):
        rng = np.random.default_rng(42)
        for case in range(100):
            n, d = 20, 5
            # mix continuous columns with coarse ones to force duplicate
            # values and tie-prone impurity decreases
            X = np.where(
                rng.random((n, d)) < 0.5,
                rng.integers(0, 4, (n, d)).astype(float),
                rng.normal(size=(n, d)),
            )
            y = rng.integers(0, 2, n)
            if y.min() == y.max():
                y[0] = 1 - y[0]
            k = int(rng.integers(1, d + 1))
            cands = rng.choice(d, size=k, replace=False)
            got = best_split(X, y, cands, min_samples_leaf=msl)
            want = best_split_bruteforce(X, y, cands, min_samples_leaf=msl)
            if want is None:
                assert got is None
            else:
                assert got is not None
                assert got[0] == want[0]
                assert got[1] == want[1]  # bit-exact threshold
                assert got[2] == want[2]  # bit-exact decrease


class TestTrainForest:
    def test_separated_clusters_fit_training_data(self):
        rng = np.random.default_rng(1)
        X, y = _clusters(rng, n=200, d=256)
        model = train_forest(X, y, ForestParams(n_trees=50, seed=9))
        probs = predict_proba_batch(model, X)
        pred = np.where(probs >= 0.5, "fake", "real")
        assert (pred == np.array(y)).mean() == 1.0

    def test_same_seed_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(2)
        X, y = _clusters(rng, n=60, d=16)
        p1, p2 = tmp_path / "a.model", tmp_path / "b.model"
        save_model(str(p1), train_forest(X, y, ForestParams(n_trees=8, seed=5)))
        save_model(str(p2), train_forest(X, y, ForestParams(n_trees=8, seed=5)))
        assert p1.read_bytes() == p2.read_bytes()

    def test_different_seed_differs(self, tmp_path):
        rng = np.random.default_rng(2)
        X, y = _clusters(rng, n=60, d=16)
        p1, p2 = tmp_path / "a.model", tmp_path / "b.model"
        save_model(str(p1), train_forest(X, y, ForestParams(n_trees=8, seed=5)))
        save_model(str(p2), train_forest(X, y, ForestParams(n_trees=8, seed=6)))
        assert p1.read_bytes() != p2.read_bytes()

    def test_prefix_trees_match_smaller_forest(self):
        # per-tree seeding means tree t is the same whatever n_trees is
        rng = np.random.default_rng(3)
        X, y = _clusters(rng, n=50, d=8)
        big = train_forest(X, y, ForestParams(n_trees=6, seed=7))
        small = train_forest(X, y, ForestParams(n_trees=3, seed=7))
        assert big.trees[:3] == small.trees

    def test_random_labels_near_chance_on_holdout(self):
        aucs = []
        for seed in range(10):
            rng = np.random.default_rng(1000 + seed)
            X = rng.normal(size=(200, 24))
            labels = np.where(rng.integers(0, 2, 200), "fake", "real")
            model = train_forest(
                X[:120], labels[:120], ForestParams(n_trees=40, seed=seed)
            )
            probs = predict_proba_batch(model, X[120:])
            aucs.append(pairwise_auc(probs, labels[120:]))
        assert all(0.35 <= a <= 0.65 for a in aucs), aucs

    def test_unbounded_trees_have_pure_leaves(self):
        # continuous features, no duplicate rows -> every bootstrap sample
        # is perfectly separable, so unbounded growth reaches pure leaves
        rng = np.random.default_rng(4)
        X = rng.normal(size=(80, 10))
        y = np.where(rng.integers(0, 2, 80), "fake", "real")
        model = train_forest(X, y, ForestParams(n_trees=10, seed=11))
        for nodes in model.trees:
            for node in nodes:
                if node.is_leaf:
                    assert node.n_real == 0 or node.n_fake == 0

    def test_max_depth_limits_growth(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(100, 6))
        y = np.where(rng.integers(0, 2, 100), "fake", "real")
        model = train_forest(X, y, ForestParams(n_trees=5, max_depth=2, seed=1))

        def depth(nodes, i=0):
            node = nodes[i]
            if node.is_leaf:
                return 0
            return 1 + max(depth(nodes, node.left), depth(nodes, node.right))

        assert all(depth(nodes) <= 2 for nodes in model.trees)

    def test_min_samples_leaf_respected(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(100, 6))
        y = np.where(rng.integers(0, 2, 100), "fake", "real")
        model = train_forest(
            X, y, ForestParams(n_trees=5, min_samples_leaf=7, seed=1)
        )
        for nodes in model.trees:
            for node in nodes:
                if node.is_leaf:
                    assert node.n_samples >= 7

    def test_single_class_rejected(self):
        X = np.random.default_rng(0).normal(size=(10, 4))
        with pytest.raises(DataError):
            train_forest(X, ["real"] * 10, ForestParams(n_trees=2))

    def test_too_few_samples_rejected(self):
        with pytest.raises(DataError):
            train_forest(np.zeros((1, 4)), ["real"], ForestParams(n_trees=2))

    def test_fused_vector_input(self):
        rng = np.random.default_rng(7)
        vecs = [
            FusedVector(rng.normal(size=16), "no_ave", "fast_brief", 2)
            for _ in range(20)
        ]
        labels = ["real", "fake"] * 10
        model = train_forest(vecs, labels, ForestParams(n_trees=3, seed=2))
        assert model.n_features == 16

    def test_ragged_fused_vectors_rejected(self):
        a = FusedVector(np.zeros(16), "no_ave", "fast_brief", 2)
        b = FusedVector(np.zeros(24), "no_ave", "fast_brief", 3)
        with pytest.raises(DataError):
            train_forest([a, b], ["real", "fake"], ForestParams(n_trees=1))


class TestPredict:
    def test_all_fake_stump(self):
        model = RandomForest(
            params=ForestParams(n_trees=1),
            n_features=4,
            detector="fast_brief",
            mode="no_ave",
            pattern_seed=0,
            trees=[[_leaf(0, 5)]],
        )
        assert predict_proba(model, np.zeros(4)) == 1.0

    def test_all_real_stump(self):
        model = RandomForest(
            params=ForestParams(n_trees=1),
            n_features=4,
            detector="fast_brief",
            mode="no_ave",
            pattern_seed=0,
            trees=[[_leaf(5, 0)]],
        )
        assert predict_proba(model, np.zeros(4)) == 0.0

    def test_dimension_mismatch_rejected(self):
        model = RandomForest(
            params=ForestParams(n_trees=1),
            n_features=4,
            detector="fast_brief",
            mode="no_ave",
            pattern_seed=0,
            trees=[[_leaf(1, 1)]],
        )
        with pytest.raises(CompatibilityError):
            predict_proba(model, np.zeros(5))
        with pytest.raises(CompatibilityError):
            predict_proba_batch(model, np.zeros((3, 5)))

    def test_matches_manual_traversal_oracle(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(60, 12))
        y = np.where(rng.integers(0, 2, 60), "fake", "real")
        model = train_forest(X, y, ForestParams(n_trees=12, seed=3))

        def walk(nodes, x):
            i = 0
            while not nodes[i].is_leaf:
                node = nodes[i]
                i = node.left if x[node.feature] < node.threshold else node.right
            return nodes[i].n_fake / nodes[i].n_samples

        for _ in range(50):
            x = rng.normal(size=12)
            want = sum(walk(nodes, x) for nodes in model.trees) / len(model.trees)
            assert predict_proba(model, x) == pytest.approx(want, abs=1e-15)
            assert 0.0 <= predict_proba(model, x) <= 1.0

    def test_strict_less_than_goes_left(self):
        nodes = [
            Node(0, 1.5, 1, 2, 4, 4, 0.5),
            _leaf(4, 0),
            _leaf(0, 4),
        ]
        model = RandomForest(
            params=ForestParams(n_trees=1),
            n_features=1,
            detector="fast_brief",
            mode="no_ave",
            pattern_seed=0,
            trees=[nodes],
        )
        assert predict_proba(model, np.array([1.4])) == 0.0
        assert predict_proba(model, np.array([1.5])) == 1.0  # boundary → right


class TestImportances:
    def _model(self, trees, n_features=8):
        return RandomForest(
            params=ForestParams(n_trees=len(trees)),
            n_features=n_features,
            detector="fast_brief",
            mode="no_ave",
            pattern_seed=0,
            trees=trees,
        )

    def test_single_perfect_split(self):
        # only feature 7 is informative; force every candidate draw to see it
        rng = np.random.default_rng(9)
        X = np.zeros((40, 8))
        y = np.where(rng.integers(0, 2, 40), "fake", "real")
        X[:, 7] = np.where(np.array(y) == "fake", 1.0, 0.0)
        model = train_forest(
            X, y, ForestParams(n_trees=5, max_features=8, seed=4)
        )
        imp = feature_importances(model)
        assert imp[7] == 1.0
        assert not imp[np.arange(8) != 7].any()

    def test_sum_is_one(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(80, 20))
        y = np.where(rng.integers(0, 2, 80), "fake", "real")
        model = train_forest(X, y, ForestParams(n_trees=15, seed=5))
        imp = feature_importances(model)
        assert (imp >= 0.0).all()
        assert abs(imp.sum() - 1.0) <= 1e-9

    def test_no_split_forest_is_all_zero(self):
        model = self._model([[_leaf(3, 2)], [_leaf(2, 3)]])
        assert not feature_importances(model).any()

    def test_hand_computed_two_tree_example(self):
        # tree A: root splits feature 2 (10 samples, decrease 0.3), left
        # child splits feature 5 (4 samples, decrease 0.1)
        tree_a = [
            Node(2, 0.0, 1, 4, 5, 5, 0.3),
            Node(5, 0.0, 2, 3, 2, 2, 0.1),
            _leaf(2, 0),
            _leaf(0, 2),
            _leaf(3, 3),
        ]
        # tree B: single split on feature 5 (10 samples, decrease 0.2)
        tree_b = [Node(5, 0.0, 1, 2, 5, 5, 0.2), _leaf(5, 0), _leaf(0, 5)]
        model = self._model([tree_a, tree_b])
        imp = feature_importances(model)
        # tree A raw: f2 = 10*0.3 = 3.0, f5 = 4*0.1 = 0.4 -> normalized
        # (3/3.4, 0.4/3.4); tree B raw: f5 = 2.0 -> normalized 1.0
        want = np.zeros(8)
        want[2] = (3.0 / 3.4) / 2
        want[5] = (0.4 / 3.4 + 1.0) / 2
        want /= want.sum()
        assert imp == pytest.approx(want, abs=1e-12)


class TestModelIO:
    def _trained(self, tmp_path):
        rng = np.random.default_rng(11)
        X, y = _clusters(rng, n=40, d=12)
        return train_forest(X, y, ForestParams(n_trees=4, seed=8))

    def test_roundtrip_byte_identical(self, tmp_path):
        model = self._trained(tmp_path)
        p1, p2 = tmp_path / "a.model", tmp_path / "b.model"
        save_model(str(p1), model)
        save_model(str(p2), load_model(str(p1)))
        assert p1.read_bytes() == p2.read_bytes()

    def test_roundtrip_preserves_predictions(self, tmp_path):
        model = self._trained(tmp_path)
        path = tmp_path / "m.model"
        save_model(str(path), model)
        loaded = load_model(str(path))
        rng = np.random.default_rng(12)
        for _ in range(20):
            x = rng.normal(size=12)
            assert predict_proba(model, x) == predict_proba(loaded, x)
        assert np.array_equal(
            feature_importances(model), feature_importances(loaded)
        )

    def test_metadata_preserved(self, tmp_path):
        rng = np.random.default_rng(13)
        X, y = _clusters(rng, n=30, d=6)
        model = train_forest(
            X,
            y,
            ForestParams(n_trees=2, max_depth=3, seed=1),
            detector="orb",
            mode="ave",
            pattern_seed=99,
        )
        path = tmp_path / "m.model"
        save_model(str(path), model)
        loaded = load_model(str(path))
        assert loaded.detector == "orb"
        assert loaded.mode == "ave"
        assert loaded.pattern_seed == 99
        assert loaded.params == model.params

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_model(str(tmp_path / "nope.model"))

    def test_version_mismatch(self, tmp_path):
        model = self._trained(tmp_path)
        path = tmp_path / "m.model"
        save_model(str(path), model)
        text = path.read_text().replace("v1", "v2", 1)
        path.write_text(text)
        with pytest.raises(CompatibilityError):
            load_model(str(path))

    def test_wrong_format_rejected(self, tmp_path):
        path = tmp_path / "m.model"
        path.write_text("something-else v1\n")
        with pytest.raises(DataError):
            load_model(str(path))

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda lines: lines[:-2],  # truncate node data
            lambda lines: lines + ["extra garbage"],  # trailing garbage
            lambda lines: [
                line.replace("n_features 12", "n_features twelve")
                for line in lines
            ],
            lambda lines: [
                # corrupt the first node line's field count
                (line + " 9" if i == 11 else line)
                for i, line in enumerate(lines)
            ],
        ],
    )
    def test_corrupted_payload_rejected(self, tmp_path, mutate):
        model = self._trained(tmp_path)
        path = tmp_path / "m.model"
        save_model(str(path), model)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(mutate(lines)) + "\n")
        with pytest.raises(DataError):
            load_model(str(path))
