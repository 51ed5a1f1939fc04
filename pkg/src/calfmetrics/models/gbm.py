"""Second-order gradient-boosted regression trees with L1/L2 regularization.

Squared-error objective: per boosting round the gradient is ``pred - y`` and
the hessian is 1, each tree is grown by exact greedy split search over every
distinct feature value, split gain is

    1/2 * (GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam))

and leaf weights are soft-thresholded, ``-sign(G)*max(|G|-alpha, 0)/(H+lam)``.
There is no row or column subsampling, so fits are deterministic.

Trees are grown level-wise over per-feature value bins (bins are the sorted
distinct values, so the search stays exact) which keeps the whole round in
vectorized numpy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError


@dataclass
class GbmHyperParams:
    learning_rate: float = 0.1
    n_estimators: int = 100
    l1_alpha: float = 0.0
    l2_lambda: float = 0.0
    max_depth: int = 6
    min_samples_leaf: int = 1

    def __post_init__(self):
        if not 0 < self.learning_rate:
            raise ValueError("learning_rate must be positive")
        if self.n_estimators < 0:
            raise ValueError("n_estimators must be >= 0")
        if self.l1_alpha < 0 or self.l2_lambda < 0:
            raise ValueError("regularization terms must be >= 0")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")


@dataclass
class GbmSearchSpace:
    """Hyperparameter ranges for randomized search."""

    learning_rate: tuple[float, float] = (0.01, 0.9)
    n_estimators: tuple[int, int] = (50, 10000)
    l1_alpha: tuple[float, float] = (0.0, 1.0)
    l2_lambda: tuple[float, float] = (0.0, 1.0)
    max_depth: int = 6
    min_samples_leaf: int = 1


@dataclass
class _Tree:
    feature: np.ndarray  # split feature per node, -1 at leaves
    threshold: np.ndarray  # split value per node ("go left" iff x <= t)
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # leaf weight per node (0 at internal nodes)

    def predict(self, X: np.ndarray) -> np.ndarray:
        idx = np.zeros(len(X), dtype=np.int64)
        while True:
            feat = self.feature[idx]
            active = feat >= 0
            if not active.any():
                return self.value[idx]
            rows = np.nonzero(active)[0]
            cur = idx[rows]
            go_left = X[rows, feat[rows]] <= self.threshold[cur]
            idx[rows] = np.where(go_left, self.left[cur], self.right[cur])

    def depth(self) -> int:
        depths = np.zeros(len(self.feature), dtype=int)
        out = 0
        for node in range(len(self.feature)):
            if self.feature[node] >= 0:
                child_depth = depths[node] + 1
                depths[self.left[node]] = child_depth
                depths[self.right[node]] = child_depth
                out = max(out, child_depth)
        return out


@dataclass
class GbmModel:
    base_score: float
    trees: list[_Tree] = field(default_factory=list)
    hyper: GbmHyperParams = field(default_factory=GbmHyperParams)
    train_losses: list[float] = field(default_factory=list)  # MSE per round

    @property
    def n_features(self) -> int:
        mx = -1
        for tree in self.trees:
            if len(tree.feature):
                mx = max(mx, int(tree.feature.max()))
        return mx + 1

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ShapeError(f"feature matrix must be 2-D, got shape {X.shape}")
        if self.trees and X.shape[1] < self.n_features:
            raise ShapeError(
                f"model uses feature {self.n_features - 1}, input has {X.shape[1]}"
            )
        out = np.full(len(X), self.base_score, dtype=np.float64)
        lr = self.hyper.learning_rate
        for tree in self.trees:
            out += lr * tree.predict(X)
        return out


def _soft_threshold(g: np.ndarray, alpha: float) -> np.ndarray:
    return np.sign(g) * np.maximum(np.abs(g) - alpha, 0.0)


def _grow_tree(binned, uniques, g, h, hyper: GbmHyperParams) -> _Tree:
    n, d = binned.shape
    lam = hyper.l2_lambda
    min_leaf = hyper.min_samples_leaf

    feature = [-1]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    leaf_g = [0.0]
    leaf_h = [0.0]

    node_of_row = np.zeros(n, dtype=np.int64)
    active = np.array([0], dtype=np.int64)

    for _level in range(hyper.max_depth):
        if len(active) == 0:
            break
        nslots = len(active)
        lookup = np.full(len(feature), -1, dtype=np.int64)
        lookup[active] = np.arange(nslots)
        slot_rows = lookup[node_of_row]
        act = slot_rows >= 0
        rows = np.nonzero(act)[0]
        srows = slot_rows[rows]

        best_gain = np.full(nslots, -np.inf)
        best_feat = np.zeros(nslots, dtype=np.int64)
        best_bin = np.zeros(nslots, dtype=np.int64)
        g_tot = np.zeros(nslots)
        h_tot = np.zeros(nslots)
        np.add.at(g_tot, srows, g[rows])
        np.add.at(h_tot, srows, h[rows])
        parent_term = g_tot**2 / (h_tot + lam)

        for f in range(d):
            nb = len(uniques[f])
            if nb < 2:
                continue
            gh = np.zeros((nslots, nb))
            hh = np.zeros((nslots, nb))
            ch = np.zeros((nslots, nb))
            cols = binned[rows, f]
            np.add.at(gh, (srows, cols), g[rows])
            np.add.at(hh, (srows, cols), h[rows])
            np.add.at(ch, (srows, cols), 1.0)
            gl = np.cumsum(gh, axis=1)[:, :-1]
            hl = np.cumsum(hh, axis=1)[:, :-1]
            cl = np.cumsum(ch, axis=1)[:, :-1]
            gr = g_tot[:, None] - gl
            hr = h_tot[:, None] - hl
            cr = ch.sum(axis=1)[:, None] - cl
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = 0.5 * (
                    gl**2 / (hl + lam) + gr**2 / (hr + lam) - parent_term[:, None]
                )
            gain[(cl < min_leaf) | (cr < min_leaf)] = -np.inf
            gain = np.nan_to_num(gain, nan=-np.inf)
            f_best_bin = np.argmax(gain, axis=1)
            f_best_gain = gain[np.arange(nslots), f_best_bin]
            improved = f_best_gain > best_gain  # strict: ties keep lowest feature
            best_gain[improved] = f_best_gain[improved]
            best_feat[improved] = f
            best_bin[improved] = f_best_bin[improved]

        split = best_gain > 0
        for s in np.nonzero(~split)[0]:
            node = active[s]
            leaf_g[node] = g_tot[s]
            leaf_h[node] = h_tot[s]
        next_active = []
        child_left = np.zeros(nslots, dtype=np.int64)
        child_right = np.zeros(nslots, dtype=np.int64)
        for s in np.nonzero(split)[0]:
            node = active[s]
            f = int(best_feat[s])
            b = int(best_bin[s])
            feature[node] = f
            threshold[node] = float(uniques[f][b])
            for side in (0, 1):
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                leaf_g.append(0.0)
                leaf_h.append(0.0)
            left[node] = len(feature) - 2
            right[node] = len(feature) - 1
            child_left[s] = left[node]
            child_right[s] = right[node]
            next_active.extend([left[node], right[node]])

        if split.any():
            srows_split = srows[split[srows]]
            rows_split = rows[split[srows]]
            f_per_row = best_feat[srows_split]
            go_left = binned[rows_split, f_per_row] <= best_bin[srows_split]
            node_of_row[rows_split] = np.where(
                go_left, child_left[srows_split], child_right[srows_split]
            )
        active = np.array(next_active, dtype=np.int64)

    if len(active):
        lookup = np.full(len(feature), -1, dtype=np.int64)
        lookup[active] = np.arange(len(active))
        slot_rows = lookup[node_of_row]
        act = slot_rows >= 0
        g_tot = np.zeros(len(active))
        h_tot = np.zeros(len(active))
        np.add.at(g_tot, slot_rows[act], g[act])
        np.add.at(h_tot, slot_rows[act], h[act])
        for s, node in enumerate(active):
            leaf_g[node] = g_tot[s]
            leaf_h[node] = h_tot[s]

    feature_arr = np.array(feature, dtype=np.int64)
    value = np.zeros(len(feature))
    leaves = feature_arr < 0
    lg = np.array(leaf_g)[leaves]
    lh = np.array(leaf_h)[leaves]
    value[leaves] = -_soft_threshold(lg, hyper.l1_alpha) / (lh + lam)
    return _Tree(
        feature=feature_arr,
        threshold=np.array(threshold),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=value,
    )


def gbm_fit(X, y, hyper: GbmHyperParams | None = None) -> GbmModel:
    """Boost regression trees on squared error.

    Training loss is recorded per round and asserted non-increasing, which
    the exact leaf formula guarantees for learning rates in (0, 1].
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise ShapeError(f"bad shapes X{X.shape} y{y.shape}")
    if len(y) < 2:
        raise ShapeError("gbm_fit needs at least 2 rows")
    hyper = hyper or GbmHyperParams()

    uniques = []
    binned = np.empty(X.shape, dtype=np.int64)
    for f in range(X.shape[1]):
        uniq, inv = np.unique(X[:, f], return_inverse=True)
        uniques.append(uniq)
        binned[:, f] = inv

    base = float(y.mean())
    pred = np.full(len(y), base)
    model = GbmModel(base_score=base, hyper=hyper)
    loss = float(np.mean((pred - y) ** 2))
    model.train_losses.append(loss)
    check_monotone = hyper.learning_rate <= 1.0
    for _round in range(hyper.n_estimators):
        grad = pred - y
        hess = np.ones_like(y)
        tree = _grow_tree(binned, uniques, grad, hess, hyper)
        pred = pred + hyper.learning_rate * tree.value[_predict_leaf(tree, binned, uniques)]
        model.trees.append(tree)
        new_loss = float(np.mean((pred - y) ** 2))
        if check_monotone:
            assert new_loss <= loss * (1 + 1e-12) + 1e-15, (
                f"training loss increased at round {_round}: {loss} -> {new_loss}"
            )
        model.train_losses.append(new_loss)
        loss = new_loss
    return model


def _predict_leaf(tree: _Tree, binned: np.ndarray, uniques) -> np.ndarray:
    """Leaf index per training row, using the bin representation."""
    idx = np.zeros(len(binned), dtype=np.int64)
    while True:
        feat = tree.feature[idx]
        active = feat >= 0
        if not active.any():
            return idx
        rows = np.nonzero(active)[0]
        cur = idx[rows]
        f = feat[rows]
        # threshold is an exact bin value, so comparing raw values matches
        thresh = tree.threshold[cur]
        vals = np.empty(len(rows))
        for col in np.unique(f):
            sel = f == col
            vals[sel] = uniques[col][binned[rows[sel], col]]
        go_left = vals <= thresh
        idx[rows] = np.where(go_left, tree.left[cur], tree.right[cur])


def gbm_random_search(
    X,
    y,
    groups,
    space: GbmSearchSpace | None = None,
    iterations: int = 50,
    seed: int = 0,
) -> GbmHyperParams:
    """Randomized hyperparameter search scored on a held-out group split.

    Draws are uniform over the space (log-uniform integers for the tree
    count); each candidate is fit on ~80% of the groups and scored by RMSE
    on the rest. Returns the best draw; ties keep the earliest.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    groups = np.asarray(groups)
    space = space or GbmSearchSpace()
    distinct = np.unique(groups)
    if len(distinct) < 2:
        raise ShapeError("gbm_random_search needs at least 2 distinct groups")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(distinct))
    n_test = min(max(1, round(0.2 * len(distinct))), len(distinct) - 1)
    test_groups = set(distinct[order[:n_test]].tolist())
    test_mask = np.array([g in test_groups for g in groups])
    X_tr, y_tr = X[~test_mask], y[~test_mask]
    X_te, y_te = X[test_mask], y[test_mask]

    lo, hi = space.n_estimators
    best_rmse = np.inf
    best = None
    for _ in range(iterations):
        hyper = GbmHyperParams(
            learning_rate=float(rng.uniform(*space.learning_rate)),
            n_estimators=int(
                np.clip(round(np.exp(rng.uniform(np.log(lo), np.log(hi)))), lo, hi)
            ),
            l1_alpha=float(rng.uniform(*space.l1_alpha)),
            l2_lambda=float(rng.uniform(*space.l2_lambda)),
            max_depth=space.max_depth,
            min_samples_leaf=space.min_samples_leaf,
        )
        model = gbm_fit(X_tr, y_tr, hyper)
        rmse = float(np.sqrt(np.mean((model.predict(X_te) - y_te) ** 2)))
        if rmse < best_rmse:
            best_rmse = rmse
            best = hyper
    return best
