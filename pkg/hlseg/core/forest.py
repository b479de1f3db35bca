"""Random forest of binary CART trees for skin-tone grading.

Trees are grown on bootstrap samples with Gini-impurity splits over a random
subset of features per node; thresholds sit midway between adjacent distinct
feature values and samples with ``x[feature] <= threshold`` go left. Every
random draw comes from a per-tree generator spawned from one
``numpy.random.SeedSequence``, so a forest is a pure function of
(data, params, seed) whether its trees are grown sequentially or on a thread
pool.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .. import config
from .errors import DomainError, ParameterError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_names: Tuple[str, ...] = config.SKIN_TONE_CLASSES

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.class_names = tuple(self.class_names)
        if self.features.ndim != 2:
            raise ShapeError(f"features must be (n, d), got {self.features.shape}")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ShapeError(f"{self.features.shape[0]} feature rows vs {self.labels.shape[0]} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ParameterError(f"labels must lie in [0, {self.n_classes})")
        if not np.isfinite(self.features).all():
            raise ParameterError("features contain non-finite values")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, index: np.ndarray) -> "Dataset":
        return Dataset(self.features[index], self.labels[index], self.class_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    counts: Optional[np.ndarray] = None  # set on leaves only

    @property
    def is_leaf(self) -> bool:
        return self.counts is not None


@dataclass
class DecisionTree:
    root: TreeNode
    n_classes: int

    def leaf(self, x: np.ndarray) -> TreeNode:
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        counts = self.leaf(x).counts
        return counts / counts.sum()

    def n_nodes(self) -> int:
        total, stack = 0, [self.root]
        while stack:
            node = stack.pop()
            total += 1
            if not node.is_leaf:
                stack += [node.left, node.right]
        return total


@dataclass
class DecisionForest:
    trees: List[DecisionTree]
    n_classes: int
    n_features: int
    seed: int = config.SEED
    class_names: Tuple[str, ...] = field(default=config.SKIN_TONE_CLASSES)


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = config.N_TREES
    max_depth: Optional[int] = None
    min_samples_split: int = config.MIN_SAMPLES_SPLIT
    features_per_split: Optional[int] = None
    bootstrap: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_trees < 1:
            raise ParameterError(f"n_trees must be >= 1, got {self.n_trees}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ParameterError(f"max_depth must be >= 0, got {self.max_depth}")
        if self.min_samples_split < 2:
            raise ParameterError(f"min_samples_split must be >= 2, got {self.min_samples_split}")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ParameterError("features_per_split must be >= 1")

    def mtry(self, n_features: int) -> int:
        k = self.features_per_split or math.ceil(math.sqrt(n_features))
        return min(k, n_features)


def gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.dot(p, p))


def best_split_on_feature(x: np.ndarray, y: np.ndarray, n_classes: int):
    """Return (weighted child Gini, threshold) of the best cut of one feature, or None."""
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    n = xs.shape[0]
    distinct = xs[1:] > xs[:-1]
    if not distinct.any():
        return None
    left = np.cumsum(np.eye(n_classes, dtype=np.float64)[ys], axis=0)[:-1]
    right = left[-1] + np.eye(n_classes)[ys[-1]] - left
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left
    g_left = 1.0 - ((left / n_left[:, None]) ** 2).sum(axis=1)
    g_right = 1.0 - ((right / n_right[:, None]) ** 2).sum(axis=1)
    weighted = np.where(distinct, (n_left * g_left + n_right * g_right) / n, np.inf)
    i = int(np.argmin(weighted))
    lo, hi = xs[i], xs[i + 1]
    threshold = (lo + hi) / 2.0
    if not lo <= threshold < hi:
        threshold = lo
    return float(weighted[i]), float(threshold)


def best_split(X: np.ndarray, y: np.ndarray, n_classes: int, features: Sequence[int]):
    """Best (feature, threshold, impurity decrease) among ``features``, or None when none can split."""
    parent = gini(np.bincount(y, minlength=n_classes).astype(np.float64))
    best = None
    for f in features:
        found = best_split_on_feature(X[:, f], y, n_classes)
        if found is not None and (best is None or found[0] < best[1]):
            best = (int(f), found[0], found[1])
    if best is None:
        return None
    feature, child, threshold = best
    return feature, threshold, max(parent - child, 0.0)


def grow_tree(X: np.ndarray, y: np.ndarray, n_classes: int, params: ForestParams,
              rng: np.random.Generator) -> DecisionTree:
    n, d = X.shape
    k = params.mtry(d)
    root = TreeNode()
    stack = [(root, np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = np.bincount(y[idx], minlength=n_classes)
        stop = (np.count_nonzero(counts) <= 1
                or idx.shape[0] < params.min_samples_split
                or (params.max_depth is not None and depth >= params.max_depth))
        split = None
        if not stop:
            order = rng.permutation(d)
            split = best_split(X[idx], y[idx], n_classes, order[:k])
            if split is None and k < d:
                # sampled features were all constant here; fall back to the rest
                split = best_split(X[idx], y[idx], n_classes, order[k:])
        if split is None:
            node.counts = counts
            continue
        node.feature, node.threshold, _ = split
        go_left = X[idx, node.feature] <= node.threshold
        node.left, node.right = TreeNode(), TreeNode()
        stack.append((node.right, idx[~go_left], depth + 1))
        stack.append((node.left, idx[go_left], depth + 1))
    return DecisionTree(root=root, n_classes=n_classes)


def fit(train: Dataset, hp: Optional[ForestParams] = None, seed: int = config.SEED) -> DecisionForest:
    """
    Grow a random forest

    Args:
        train: Training dataset
        hp: Forest hyperparameters (defaults: 100 trees, unlimited depth, ceil(sqrt(d)) features)
        seed: Root seed; tree i uses the i-th child of SeedSequence(seed)

    Returns:
        DecisionForest
    """
    hp = hp or ForestParams()
    if len(train) == 0:
        raise DomainError("cannot fit a forest on an empty dataset")
    X, y = train.features, train.labels
    n = X.shape[0]
    children = np.random.SeedSequence(seed).spawn(hp.n_trees)

    def one_tree(child) -> DecisionTree:
        rng = np.random.default_rng(child)
        idx = rng.integers(0, n, n) if hp.bootstrap else np.arange(n)
        return grow_tree(X[idx], y[idx], train.n_classes, hp, rng)

    if hp.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=hp.n_jobs) as pool:
            trees = list(pool.map(one_tree, children))
    else:
        trees = [one_tree(c) for c in children]
    logger.info("grew %d trees on %d samples (%d nodes total)", len(trees), n,
                sum(t.n_nodes() for t in trees))
    return DecisionForest(trees=trees, n_classes=train.n_classes, n_features=train.n_features,
                          seed=seed, class_names=train.class_names)


def predict(forest: DecisionForest, x) -> Tuple[int, np.ndarray]:
    """Majority vote: argmax of the mean leaf class distribution, lowest index on ties."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != forest.n_features:
        raise ShapeError(f"feature vector has {x.shape[0]} entries, forest expects {forest.n_features}")
    votes = np.zeros(forest.n_classes)
    for tree in forest.trees:
        votes += tree.predict_proba(x)
    votes /= len(forest.trees)
    return int(np.argmax(votes)), votes


def predict_batch(forest: DecisionForest, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    return np.array([predict(forest, row)[0] for row in X], dtype=np.int64)


def oversample(data: Dataset, seed: int = config.SEED) -> Dataset:
    """Duplicate rows of minority classes (drawn with replacement) up to the majority count."""
    rng = np.random.default_rng(seed)
    counts = data.class_counts()
    target = counts.max(initial=0)
    extra = []
    for c in range(data.n_classes):
        if 0 < counts[c] < target:
            members = np.flatnonzero(data.labels == c)
            extra.append(rng.choice(members, size=target - counts[c], replace=True))
    if not extra:
        return data.subset(np.arange(len(data)))
    index = np.concatenate([np.arange(len(data))] + extra)
    return data.subset(index)


def _test_counts(counts: np.ndarray, fraction: float) -> np.ndarray:
    """Per-class test sizes summing to round(n * fraction), spread by largest remainder."""
    exact = counts.astype(np.float64) * fraction
    base = np.floor(exact + 1e-9).astype(np.int64)
    total = int(math.floor(counts.sum() * fraction + 0.5))
    extra = max(0, total - int(base.sum()))
    # ties go to the lower class id
    order = np.argsort(-(exact - base), kind="stable")
    base[order[:extra]] += 1
    return base


def train_test_split(data: Dataset, test_fraction: float = config.TEST_FRACTION,
                     seed: int = config.SEED) -> Tuple[Dataset, Dataset]:
    """Stratified, seeded split into disjoint (train, test) partitions."""
    if not 0 <= test_fraction < 1:
        raise ParameterError(f"test_fraction must be in [0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    n_test = _test_counts(data.class_counts(), test_fraction)
    train_idx, test_idx = [], []
    for c in range(data.n_classes):
        members = rng.permutation(np.flatnonzero(data.labels == c))
        n_test_c = int(n_test[c])
        test_idx.append(members[:n_test_c])
        train_idx.append(members[n_test_c:])
    train = rng.permutation(np.concatenate(train_idx)).astype(np.int64)
    test = rng.permutation(np.concatenate(test_idx)).astype(np.int64)
    return data.subset(train), data.subset(test)


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, cols: predicted class
    class_names: Tuple[str, ...] = ()

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        if self.total == 0:
            raise DomainError("accuracy of an empty confusion matrix")
        return float(np.trace(self.counts) / self.total)

    def adjacent_error_share(self) -> float:
        """Fraction of misclassifications that land in a neighbouring grade."""
        off = self.counts.sum() - np.trace(self.counts)
        if off == 0:
            return 0.0
        i, j = np.indices(self.counts.shape)
        return float(self.counts[np.abs(i - j) == 1].sum() / off)


def confusion_matrix(truth, pred, n_classes: Optional[int] = None,
                     class_names: Sequence[str] = ()) -> ConfusionMatrix:
    truth = np.asarray(truth, dtype=np.int64).reshape(-1)
    pred = np.asarray(pred, dtype=np.int64).reshape(-1)
    if truth.shape != pred.shape:
        raise ShapeError(f"{truth.shape[0]} truth labels vs {pred.shape[0]} predictions")
    if n_classes is None:
        n_classes = len(class_names) or int(max(truth.max(initial=-1), pred.max(initial=-1)) + 1)
    counts = np.bincount(truth * n_classes + pred, minlength=n_classes * n_classes)
    return ConfusionMatrix(counts.reshape(n_classes, n_classes), tuple(class_names))


@dataclass
class TrainingReport:
    forest: DecisionForest
    train: Dataset
    test: Dataset
    confusion: Optional[ConfusionMatrix]


def run_training(data: Dataset, hp: Optional[ForestParams] = None,
                 test_fraction: float = config.TEST_FRACTION, seed: int = config.SEED,
                 split_first: bool = False,
                 preprocess: Optional[Callable[[Dataset, Dataset], Tuple[Dataset, Dataset]]] = None,
                 ) -> TrainingReport:
    """
    Oversample, split, fit and evaluate

    By default the whole dataset is oversampled before the split, so duplicated
    minority rows can land on both sides. ``split_first`` balances only the
    training fold and keeps the test fold free of duplicates.
    ``preprocess`` maps (train, test) to transformed folds after the split, e.g. a
    projection fitted on the training fold only.
    """
    if split_first:
        train, test = train_test_split(data, test_fraction, seed)
        train = oversample(train, seed)
    else:
        train, test = train_test_split(oversample(data, seed), test_fraction, seed)
    if preprocess is not None:
        train, test = preprocess(train, test)
    forest = fit(train, hp, seed)
    confusion = None
    if len(test):
        confusion = confusion_matrix(test.labels, predict_batch(forest, test.features),
                                     data.n_classes, data.class_names)
    return TrainingReport(forest, train, test, confusion)
