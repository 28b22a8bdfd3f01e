"""From-scratch seed-deterministic random forest: bagged CART trees, Gini
impurity, midpoint thresholds, per-node feature subsampling.

Determinism: every random draw comes from counter-based SplitMix64 streams
derived from random_state, so (data, config) fully determines the model and
two fits produce byte-identical files.  The hot loops live in cogload._kernels
(numba by default, pure numpy via COGLOAD_NO_NUMBA=1).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import struct
import zlib

import numpy as np

from . import _kernels
from ._kernels.rng import sm64

MAGIC = b"CGLF"
FORMAT_VERSION = 1


class EmptyNode(Exception):
    pass


class DimensionMismatch(Exception):
    pass


class VersionMismatch(Exception):
    pass


class CorruptModel(Exception):
    pass


@dataclasses.dataclass(frozen=True)
class ForestConfig:
    n_estimators: int = 200
    max_features: str | int = "sqrt"
    min_samples_leaf: int = 1
    min_samples_split: int = 2
    bootstrap: bool = True
    random_state: int = 24
    vote: str = "soft"  # "soft": summed leaf proportions; "hard": one vote per tree

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if isinstance(self.max_features, str):
            if self.max_features not in ("sqrt", "all"):
                raise ValueError("max_features must be 'sqrt', 'all', or an int")
        elif self.max_features < 1:
            raise ValueError("integer max_features must be >= 1")
        if self.vote not in ("soft", "hard"):
            raise ValueError("vote must be 'soft' or 'hard'")
        if not 0 <= self.random_state < 2 ** 64:
            raise ValueError("random_state must be an unsigned 64-bit int")

    def mtry(self, d: int) -> int:
        if self.max_features == "sqrt":
            return max(1, int(math.isqrt(d)))
        if self.max_features == "all":
            return d
        return min(int(self.max_features), d)


@dataclasses.dataclass
class Tree:
    feature: np.ndarray    # int32, -1 marks a leaf
    threshold: np.ndarray  # float64; left child takes x < threshold
    left: np.ndarray       # int32
    right: np.ndarray      # int32
    counts: np.ndarray     # int64 (n_nodes, n_classes) training samples per node
    proba: np.ndarray = dataclasses.field(init=False)

    def __post_init__(self):
        totals = self.counts.sum(axis=1, keepdims=True)
        self.proba = self.counts / totals


@dataclasses.dataclass
class ForestModel:
    config: ForestConfig
    n_features: int
    classes: list[int]
    trees: list[Tree]
    fingerprint: str
    degenerate: bool = False  # single-class training data


def gini(class_counts) -> float:
    """CART impurity 1 - sum(p_i^2) of a class-count vector."""
    total = 0
    for v in class_counts:
        if v < 0:
            raise ValueError("class counts must be non-negative")
        total += v
    if total == 0:
        raise EmptyNode("all class counts are zero")
    g = 1.0
    for v in class_counts:
        p = v / total
        g -= p * p
    return g


def _fingerprint(X: np.ndarray, y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(X.tobytes())
    h.update(y.tobytes())
    return h.hexdigest()


def fit(features, labels, config: ForestConfig = ForestConfig()) -> ForestModel:
    """Train n_estimators trees.  Tree t draws its bootstrap rows and per-node
    feature subsets from SplitMix64 stream sm64(random_state, t).

    Single-class input yields a trivial single-leaf forest flagged degenerate
    instead of an error.
    """
    X = np.ascontiguousarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("expected a 2-d feature array")
    n, d = X.shape
    if n == 0:
        raise ValueError("empty training set")
    y_raw = np.asarray([int(v) for v in labels], dtype=np.int64)
    if y_raw.shape[0] != n:
        raise DimensionMismatch(f"{n} feature rows vs {y_raw.shape[0]} labels")

    classes = sorted(set(y_raw.tolist()))
    fp = _fingerprint(X, y_raw)
    if len(classes) < 2:
        leaf_counts = np.array([[n]], dtype=np.int64)
        tree = Tree(np.full(1, -1, np.int32), np.zeros(1), np.full(1, -1, np.int32),
                    np.full(1, -1, np.int32), leaf_counts)
        return ForestModel(config, d, classes, [tree], fp, degenerate=True)

    y = np.searchsorted(np.asarray(classes), y_raw).astype(np.int64)
    base_order = np.empty((d, n), dtype=np.int64)
    for f in range(d):
        base_order[f] = np.argsort(X[:, f], kind="stable")

    mtry = config.mtry(d)
    trees = []
    for t in range(config.n_estimators):
        seed = sm64(config.random_state, t)
        arrays = _kernels.build_tree(X, y, base_order, len(classes),
                                     np.uint64(seed), mtry,
                                     config.min_samples_leaf,
                                     config.min_samples_split,
                                     config.bootstrap)
        trees.append(Tree(*arrays))
    return ForestModel(config, d, classes, trees, fp)


def _as_batch(model: ForestModel, vectors) -> tuple[np.ndarray, bool]:
    X = np.ascontiguousarray(vectors, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X.reshape(1, -1)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise DimensionMismatch(
            f"model expects {model.n_features} features, got shape {X.shape}")
    return X, single


def predict_proba(model: ForestModel, vectors) -> np.ndarray:
    """Class probabilities in model.classes order.  Soft vote sums each
    tree's leaf class proportions; hard vote counts tree majority votes.
    Tree order is fixed, keeping the accumulation bit-reproducible.
    """
    X, single = _as_batch(model, vectors)
    nc = len(model.classes)
    acc = np.zeros((X.shape[0], nc), dtype=np.float64)
    for tree in model.trees:
        leaves = _kernels.tree_apply(tree.feature, tree.threshold,
                                     tree.left, tree.right, X)
        if model.config.vote == "soft":
            acc += tree.proba[leaves]
        else:
            votes = np.argmax(tree.proba[leaves], axis=1)
            acc[np.arange(X.shape[0]), votes] += 1.0
    acc /= len(model.trees)
    return acc[0] if single else acc


def predict(model: ForestModel, vectors) -> np.ndarray | int:
    """argmax of predict_proba; ties break toward the lower class value."""
    proba = predict_proba(model, vectors)
    if proba.ndim == 1:
        return model.classes[int(np.argmax(proba))]
    idx = np.argmax(proba, axis=1)
    return np.asarray(model.classes, dtype=np.int64)[idx]


def oob_accuracy(model: ForestModel, features, labels) -> float:
    """Out-of-bag accuracy on the training data (bootstrap draws are
    recomputed from the seed; the fingerprint guards against other data)."""
    if not model.config.bootstrap:
        raise ValueError("out-of-bag estimate requires bootstrap=True")
    X = np.ascontiguousarray(features, dtype=np.float64)
    y = np.asarray([int(v) for v in labels], dtype=np.int64)
    if _fingerprint(X, y) != model.fingerprint:
        raise ValueError("data does not match the model's training fingerprint")
    n = X.shape[0]
    nc = len(model.classes)
    acc = np.zeros((n, nc), dtype=np.float64)
    seen = np.zeros(n, dtype=np.int64)
    counters = np.arange(n, dtype=np.uint64)
    for t, tree in enumerate(model.trees):
        seed = sm64(model.config.random_state, t)
        rows = (_kernels.sm64_array(seed, counters) % np.uint64(n)).astype(np.int64)
        inbag = np.zeros(n, dtype=bool)
        inbag[rows] = True
        oob = np.nonzero(~inbag)[0]
        if oob.size == 0:
            continue
        leaves = _kernels.tree_apply(tree.feature, tree.threshold,
                                     tree.left, tree.right, X[oob])
        acc[oob] += tree.proba[leaves]
        seen[oob] += 1
    scored = seen > 0
    if not scored.any():
        raise ValueError("no out-of-bag samples")
    pred = np.asarray(model.classes)[np.argmax(acc[scored], axis=1)]
    return float(np.mean(pred == y[scored]))


def save(model: ForestModel, path: str) -> None:
    """magic, version, length-prefixed JSON header, per-tree node arrays
    (little-endian), trailing crc32 of all preceding bytes."""
    cfg = dataclasses.asdict(model.config)
    header = json.dumps({
        "config": cfg,
        "n_features": model.n_features,
        "classes": model.classes,
        "degenerate": model.degenerate,
        "fingerprint": model.fingerprint,
        "n_trees": len(model.trees),
    }, sort_keys=True, separators=(",", ":")).encode()

    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<H", FORMAT_VERSION)
    blob += struct.pack("<I", len(header))
    blob += header
    for tree in model.trees:
        blob += struct.pack("<I", len(tree.feature))
        blob += tree.feature.astype("<i4").tobytes()
        blob += tree.threshold.astype("<f8").tobytes()
        blob += tree.left.astype("<i4").tobytes()
        blob += tree.right.astype("<i4").tobytes()
        blob += tree.counts.astype("<i8").tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)))
    with open(path, "wb") as fh:
        fh.write(bytes(blob))


def load(path: str) -> ForestModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 14 or blob[:4] != MAGIC:
        raise CorruptModel("bad magic bytes")
    version = struct.unpack_from("<H", blob, 4)[0]
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"format version {version}, expected {FORMAT_VERSION}")
    stored_crc = struct.unpack_from("<I", blob, len(blob) - 4)[0]
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise CorruptModel("checksum mismatch")
    try:
        hlen = struct.unpack_from("<I", blob, 6)[0]
        header = json.loads(blob[10:10 + hlen])
        config = ForestConfig(**header["config"])
        nc = len(header["classes"])
        pos = 10 + hlen
        trees = []
        for _ in range(header["n_trees"]):
            n_nodes = struct.unpack_from("<I", blob, pos)[0]
            pos += 4
            feature = np.frombuffer(blob, "<i4", n_nodes, pos).astype(np.int32)
            pos += 4 * n_nodes
            threshold = np.frombuffer(blob, "<f8", n_nodes, pos).astype(np.float64)
            pos += 8 * n_nodes
            left = np.frombuffer(blob, "<i4", n_nodes, pos).astype(np.int32)
            pos += 4 * n_nodes
            right = np.frombuffer(blob, "<i4", n_nodes, pos).astype(np.int32)
            pos += 4 * n_nodes
            counts = np.frombuffer(blob, "<i8", n_nodes * nc, pos).astype(np.int64)
            pos += 8 * n_nodes * nc
            trees.append(Tree(feature, threshold, left, right,
                              counts.reshape(n_nodes, nc)))
        if pos != len(blob) - 4:
            raise CorruptModel("trailing bytes after tree section")
    except (struct.error, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CorruptModel(f"malformed model file: {exc}") from None
    return ForestModel(config, header["n_features"], list(header["classes"]),
                       trees, header["fingerprint"], header["degenerate"])
