"""From-scratch random forest for binary real/fake classification.

CART trees with the Gini criterion, bootstrap bagging, soft-vote probability
prediction, and normalized impurity-decrease feature importances. Everything
is deterministic given (data, params, seed): per-tree generators are derived
from the master seed and the tree index, so results do not depend on how the
work is scheduled.
"""

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import CompatibilityError, DataError

MODEL_FORMAT = "facefuse-forest"
MODEL_VERSION = 1

LABEL_TO_CLASS = {"real": 0, "fake": 1}
CLASS_TO_LABEL = ("real", "fake")


def gini_impurity(class_counts) -> float:
    """1 − p_real² − p_fake² for a two-class node; in [0, 0.5]."""
    n_real, n_fake = class_counts
    n = n_real + n_fake
    if n < 1:
        raise ValueError("empty node has no impurity")
    return 1.0 - (n_real / n) ** 2 - (n_fake / n) ** 2


def best_split(X, y, candidate_features, min_samples_leaf: int = 1):
    """Best (feature, threshold, impurity_decrease) over candidate features.

    Thresholds are midpoints of consecutive distinct sorted values; samples
    with value < threshold go left. Ties are broken toward the lowest
    feature index, then the lowest threshold. Returns None when no split
    strictly decreases the weighted Gini impurity.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n = len(y)
    c1 = int(y.sum())
    c0 = n - c1
    if n < 2 or c0 == 0 or c1 == 0:
        return None
    parent = 1.0 - (c0 / n) ** 2 - (c1 / n) ** 2
    best = None
    for f in sorted(int(f) for f in candidate_features):
        order = np.argsort(X[:, f], kind="stable")
        sv = X[order, f]
        sy = y[order]
        mid = (sv[:-1] + sv[1:]) / 2.0
        # a midpoint is usable only if it genuinely separates its neighbors
        # (equal values, or midpoints that round onto an endpoint, are not)
        valid = (sv[:-1] < mid) & (mid <= sv[1:])
        nl = np.arange(1, n)
        nr = n - nl
        if min_samples_leaf > 1:
            valid &= (nl >= min_samples_leaf) & (nr >= min_samples_leaf)
        if not valid.any():
            continue
        l1 = np.cumsum(sy)[:-1]
        l0 = nl - l1
        r1 = c1 - l1
        r0 = c0 - l0
        gl = 1.0 - (l0 / nl) ** 2 - (l1 / nl) ** 2
        gr = 1.0 - (r0 / nr) ** 2 - (r1 / nr) ** 2
        dec = parent - (nl * gl + nr * gr) / n
        dec[~valid] = -np.inf
        pos = int(np.argmax(dec))
        if dec[pos] <= 0.0:
            continue
        if best is None or dec[pos] > best[2]:
            best = (f, float(mid[pos]), float(dec[pos]))
    return best


@dataclass(frozen=True)
class Node:
    """One flattened tree node; leaves have feature == -1."""

    feature: int
    threshold: float
    left: int
    right: int
    n_real: int
    n_fake: int
    decrease: float

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0

    @property
    def n_samples(self) -> int:
        return self.n_real + self.n_fake


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 500
    max_features: int | None = None  # None → floor(sqrt(n_features))
    min_samples_leaf: int = 1
    max_depth: int | None = None  # None → unbounded
    seed: int = 42

    def resolved_max_features(self, n_features: int) -> int:
        mf = self.max_features
        if mf is None:
            mf = int(math.floor(math.sqrt(n_features)))
        return min(max(1, mf), n_features)


@dataclass
class RandomForest:
    params: ForestParams
    n_features: int
    detector: str
    mode: str
    pattern_seed: int
    trees: list = field(default_factory=list)  # list[list[Node]]


def _coerce_training_data(features, labels):
    if hasattr(features, "ndim"):
        X = np.asarray(features, dtype=np.float64)
    else:
        feats = list(features)
        if feats and hasattr(feats[0], "values"):
            dims = {f.values.shape[0] for f in feats}
            if len(dims) > 1:
                raise DataError(f"feature vectors disagree on dimension: {sorted(dims)}")
            X = np.stack([f.values for f in feats]).astype(np.float64)
        else:
            X = np.asarray(feats, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"training features must be 2-D, got shape {X.shape}")
    y = np.asarray(
        [LABEL_TO_CLASS[l] if isinstance(l, str) else int(l) for l in labels],
        dtype=np.int64,
    )
    if len(y) != len(X):
        raise DataError(f"{len(X)} feature rows but {len(y)} labels")
    if not np.isin(y, (0, 1)).all():
        raise DataError("labels must be real/fake")
    return X, y


def _grow_tree(Xb, yb, params: ForestParams, rng, n_features: int) -> list:
    """Grow one tree on a bootstrap sample; returns preorder node list."""
    mf = params.resolved_max_features(n_features)
    msl = params.min_samples_leaf
    nodes: list[Node] = []
    # stack entries: (sample index array, depth, parent slot, is_left_child)
    stack = [(np.arange(len(yb)), 0, -1, False)]
    while stack:
        idx, depth, parent, is_left = stack.pop()
        pos = len(nodes)
        if parent >= 0:
            p = nodes[parent]
            nodes[parent] = replace(
                p, left=pos if is_left else p.left, right=p.right if is_left else pos
            )
        y_node = yb[idx]
        n1 = int(y_node.sum())
        n0 = len(idx) - n1
        split = None
        can_split = (
            n0 > 0
            and n1 > 0
            and len(idx) >= max(2, 2 * msl)
            and (params.max_depth is None or depth < params.max_depth)
        )
        if can_split:
            cands = np.sort(rng.choice(n_features, size=mf, replace=False))
            split = best_split(Xb[idx[:, None], cands[None, :]], y_node, range(mf), msl)
        if split is None:
            nodes.append(Node(-1, 0.0, -1, -1, n0, n1, 0.0))
            continue
        local_f, thr, dec = split
        feat = int(cands[local_f])
        nodes.append(Node(feat, thr, -1, -1, n0, n1, dec))
        go_left = Xb[idx, feat] < thr
        stack.append((idx[~go_left], depth + 1, pos, False))
        stack.append((idx[go_left], depth + 1, pos, True))
    return nodes


def train_forest(
    features,
    labels,
    params: ForestParams | None = None,
    detector: str = "fast_brief",
    mode: str = "no_ave",
    pattern_seed: int = 0,
) -> RandomForest:
    """Train a bagged forest; deterministic for a given (data, params, seed)."""
    params = params or ForestParams()
    X, y = _coerce_training_data(features, labels)
    n, n_features = X.shape
    if n < 2:
        raise DataError(f"need at least 2 training samples, got {n}")
    if len(np.unique(y)) < 2:
        raise DataError("training data must contain both real and fake samples")
    if params.n_trees < 1:
        raise DataError("n_trees must be positive")
    trees = []
    for t in range(params.n_trees):
        rng = np.random.default_rng([params.seed, t])
        bootstrap = rng.integers(0, n, size=n)
        trees.append(_grow_tree(X[bootstrap], y[bootstrap], params, rng, n_features))
    return RandomForest(
        params=params,
        n_features=n_features,
        detector=detector,
        mode=mode,
        pattern_seed=pattern_seed,
        trees=trees,
    )


def _as_feature_array(model: RandomForest, x) -> np.ndarray:
    vals = x.values if hasattr(x, "values") else x
    arr = np.asarray(vals, dtype=np.float64)
    if arr.shape != (model.n_features,):
        raise CompatibilityError(
            f"feature vector has shape {arr.shape}, model expects ({model.n_features},)"
        )
    return arr


def _tree_fake_fraction(nodes: list, x: np.ndarray) -> float:
    i = 0
    while True:
        node = nodes[i]
        if node.is_leaf:
            return node.n_fake / node.n_samples
        i = node.left if x[node.feature] < node.threshold else node.right


def predict_proba(model: RandomForest, x) -> float:
    """Mean over trees of the leaf fake-fraction; in [0, 1]."""
    arr = _as_feature_array(model, x)
    total = 0.0
    for nodes in model.trees:
        total += _tree_fake_fraction(nodes, arr)
    return total / len(model.trees)


def predict_proba_batch(model: RandomForest, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise CompatibilityError(
            f"feature matrix has shape {X.shape}, model expects (*, {model.n_features})"
        )
    return np.array([predict_proba(model, row) for row in X])


def feature_importances(model: RandomForest) -> np.ndarray:
    """Normalized sample-weighted impurity decrease per feature.

    Each tree's vector is normalized to sum 1 (trees with no splits are
    skipped), averaged across trees, and renormalized. All-zero when no tree
    ever split.
    """
    total = np.zeros(model.n_features, dtype=np.float64)
    contributing = 0
    for nodes in model.trees:
        vec = np.zeros(model.n_features, dtype=np.float64)
        for node in nodes:
            if not node.is_leaf:
                vec[node.feature] += node.n_samples * node.decrease
        s = vec.sum()
        if s > 0.0:
            total += vec / s
            contributing += 1
    if contributing == 0:
        return total
    avg = total / contributing
    return avg / avg.sum()


def save_model(path: str, model: RandomForest) -> None:
    lines = [f"{MODEL_FORMAT} v{MODEL_VERSION}"]
    p = model.params
    lines.append(f"detector {model.detector}")
    lines.append(f"mode {model.mode}")
    lines.append(f"pattern_seed {model.pattern_seed}")
    lines.append(f"n_features {model.n_features}")
    lines.append(f"n_trees {p.n_trees}")
    mf = "none" if p.max_features is None else str(p.max_features)
    md = "none" if p.max_depth is None else str(p.max_depth)
    lines.append(f"max_features {mf}")
    lines.append(f"min_samples_leaf {p.min_samples_leaf}")
    lines.append(f"max_depth {md}")
    lines.append(f"seed {p.seed}")
    for t, nodes in enumerate(model.trees):
        lines.append(f"tree {t} {len(nodes)}")
        for node in nodes:
            lines.append(
                f"{node.feature} {node.threshold!r} {node.left} {node.right}"
                f" {node.n_real} {node.n_fake} {node.decrease!r}"
            )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_int(text: str, what: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise DataError(f"model file: bad {what} {text!r}") from None


def load_model(path: str) -> RandomForest:
    if not os.path.isfile(path):
        raise DataError(f"model file not found: {path}")
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"model file is empty: {path}")
    head = lines[0].split()
    if len(head) != 2 or head[0] != MODEL_FORMAT:
        raise DataError(f"not a {MODEL_FORMAT} model file: {path}")
    if head[1] != f"v{MODEL_VERSION}":
        raise CompatibilityError(
            f"unsupported model format version {head[1]} (supported: v{MODEL_VERSION})"
        )
    meta = {}
    i = 1
    expected = (
        "detector",
        "mode",
        "pattern_seed",
        "n_features",
        "n_trees",
        "max_features",
        "min_samples_leaf",
        "max_depth",
        "seed",
    )
    for key in expected:
        if i >= len(lines):
            raise DataError(f"model file truncated in header: {path}")
        parts = lines[i].split()
        if len(parts) != 2 or parts[0] != key:
            raise DataError(f"model file: expected '{key} <value>' on line {i + 1}")
        meta[key] = parts[1]
        i += 1
    params = ForestParams(
        n_trees=_parse_int(meta["n_trees"], "n_trees"),
        max_features=(
            None if meta["max_features"] == "none" else _parse_int(meta["max_features"], "max_features")
        ),
        min_samples_leaf=_parse_int(meta["min_samples_leaf"], "min_samples_leaf"),
        max_depth=(None if meta["max_depth"] == "none" else _parse_int(meta["max_depth"], "max_depth")),
        seed=_parse_int(meta["seed"], "seed"),
    )
    n_features = _parse_int(meta["n_features"], "n_features")
    if params.n_trees < 1 or n_features < 1:
        raise DataError(f"model file: invalid n_trees/n_features: {path}")
    trees = []
    for t in range(params.n_trees):
        if i >= len(lines):
            raise DataError(f"model file truncated before tree {t}: {path}")
        parts = lines[i].split()
        if len(parts) != 3 or parts[0] != "tree" or parts[1] != str(t):
            raise DataError(f"model file: expected 'tree {t} <n>' on line {i + 1}")
        n_nodes = _parse_int(parts[2], "node count")
        if n_nodes < 1:
            raise DataError(f"model file: tree {t} has no nodes")
        i += 1
        nodes = []
        for k in range(n_nodes):
            if i >= len(lines):
                raise DataError(f"model file truncated inside tree {t}: {path}")
            parts = lines[i].split()
            if len(parts) != 7:
                raise DataError(f"model file: bad node on line {i + 1}")
            try:
                node = Node(
                    feature=int(parts[0]),
                    threshold=float(parts[1]),
                    left=int(parts[2]),
                    right=int(parts[3]),
                    n_real=int(parts[4]),
                    n_fake=int(parts[5]),
                    decrease=float(parts[6]),
                )
            except ValueError:
                raise DataError(f"model file: bad node on line {i + 1}") from None
            if node.n_samples < 1:
                raise DataError(f"model file: empty node on line {i + 1}")
            if not node.is_leaf:
                if node.feature >= n_features:
                    raise DataError(f"model file: feature index out of range on line {i + 1}")
                if not (0 <= node.left < n_nodes and 0 <= node.right < n_nodes):
                    raise DataError(f"model file: child index out of range on line {i + 1}")
            nodes.append(node)
            i += 1
        trees.append(nodes)
    if i != len(lines):
        raise DataError(f"model file: trailing garbage after tree data: {path}")
    return RandomForest(
        params=params,
        n_features=n_features,
        detector=meta["detector"],
        mode=meta["mode"],
        pattern_seed=_parse_int(meta["pattern_seed"], "pattern_seed"),
        trees=trees,
    )
