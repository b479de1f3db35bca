"""Bit-exact weight (``.hlnw``) and forest (``.hlrf``) file formats.

Both files are little-endian and share one layout convention: a 4-byte magic,
a u32 format version, then counts and length-prefixed records. The loader
checks every declared length against the bytes actually present before
reading, so truncated or mutated files raise ``CorruptionError`` or
``ModelFormatError`` instead of crashing or over-allocating.

.hlnw v1::

    "HLNW" | version u32 | tensor count u32
    per tensor: name length u16 | name (UTF-8) | rank u8 | dims u32 x rank | float32 x prod(dims)
"""
import logging
import math
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Iterator, List

import numpy as np

from .errors import CorruptionError, ModelFormatError, ParameterError
from .forest import DecisionForest, DecisionTree, TreeNode

logger = logging.getLogger(__name__)

WEIGHTS_MAGIC = b"HLNW"
FOREST_MAGIC = b"HLRF"
FORMAT_VERSION = 1
_MAX_NAME = 0xFFFF


class WeightStore:
    """Ordered mapping of tensor name -> float32 array (rank 1 to 4)."""

    def __init__(self, tensors: Dict[str, np.ndarray] = None):
        self._tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for name, value in (tensors or {}).items():
            self[name] = value

    def __setitem__(self, name: str, value) -> None:
        if not isinstance(name, str) or not name:
            raise ParameterError(f"tensor name must be a non-empty string, got {name!r}")
        if len(name.encode("utf-8")) > _MAX_NAME:
            raise ParameterError(f"tensor name too long: {name[:40]}...")
        arr = np.ascontiguousarray(value, dtype=np.float32)
        if not 1 <= arr.ndim <= 4 or arr.size == 0:
            raise ParameterError(f"{name}: rank must be 1..4 with nonzero dims, got shape {arr.shape}")
        arr.setflags(write=False)
        self._tensors[name] = arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self) -> int:
        return len(self._tensors)

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightStore) or list(self) != list(other):
            return False
        return all(self[n].shape == other[n].shape and
                   self[n].tobytes() == other[n].tobytes() for n in self)

    def names(self) -> List[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    def total_size(self) -> int:
        return sum(a.size for a in self._tensors.values())


class _Reader:
    """Bounds-checked cursor over an in-memory file."""

    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise CorruptionError(f"{self.path}: truncated at byte {self.pos} (need {n} more, "
                                  f"{len(self.data) - self.pos} left)")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        fmt = "<" + fmt
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def header(self, magic: bytes) -> int:
        found = self.take(4) if len(self.data) >= 4 else self.data
        if found != magic:
            raise ModelFormatError(f"{self.path}: bad magic {found!r}, expected {magic!r}")
        (version,) = self.unpack("I")
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"{self.path}: unsupported format version {version}")
        return version

    def string(self) -> str:
        (n,) = self.unpack("H")
        raw = self.take(n)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise ModelFormatError(f"{self.path}: name at byte {self.pos - n} is not valid UTF-8")

    def finish(self) -> None:
        if self.pos != len(self.data):
            raise CorruptionError(f"{self.path}: {len(self.data) - self.pos} trailing bytes after declared content")


def _pack_string(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def dumps(store: WeightStore) -> bytes:
    parts = [WEIGHTS_MAGIC, struct.pack("<II", FORMAT_VERSION, len(store))]
    for name, arr in store.items():
        parts.append(_pack_string(name))
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.astype("<f4").tobytes())
    return b"".join(parts)


def loads(data: bytes, path="<bytes>") -> WeightStore:
    r = _Reader(data, path)
    r.header(WEIGHTS_MAGIC)
    (count,) = r.unpack("I")
    store = WeightStore()
    for _ in range(count):
        name = r.string()
        if name in store:
            raise ModelFormatError(f"{path}: duplicate tensor name {name!r}")
        (rank,) = r.unpack("B")
        if not 1 <= rank <= 4:
            raise ModelFormatError(f"{path}: tensor {name!r} has rank {rank}, expected 1..4")
        dims = r.unpack(f"{rank}I")
        if 0 in dims:
            raise ModelFormatError(f"{path}: tensor {name!r} has a zero dimension {dims}")
        n = math.prod(dims)
        payload = r.take(4 * n)
        store[name] = np.frombuffer(payload, dtype="<f4").reshape(dims)
    r.finish()
    return store


def save(store: WeightStore, path) -> None:
    """Write ``store`` as a version-1 .hlnw file."""
    Path(path).write_bytes(dumps(store))
    logger.info("saved %d tensors to %s", len(store), path)


def load(path) -> WeightStore:
    """Read a .hlnw file; raises ModelFormatError / CorruptionError on malformed input."""
    store = loads(Path(path).read_bytes(), path)
    logger.info("loaded %d tensors (%d scalars) from %s", len(store), store.total_size(), path)
    return store


def write_manifest(store: WeightStore, path) -> None:
    """Plain-text listing of name, dims and element count, one tensor per line."""
    lines = [f"{name}\t{'x'.join(str(d) for d in arr.shape)}\t{arr.size}" for name, arr in store.items()]
    lines.append(f"# {len(store)} tensors, {store.total_size()} scalars")
    Path(path).write_text("\n".join(lines) + "\n")


# --- forest files -----------------------------------------------------------
#
# .hlrf v1:
#   "HLRF" | version u32 | n_trees u32 | n_classes u32 | n_features u32 | seed u64
#   class names: n_classes x (u16 length | UTF-8)
#   per tree: node count u32 | preorder nodes
#     split: tag u8 = 1 | feature u32 | threshold f64
#     leaf:  tag u8 = 0 | counts u32 x n_classes

def _preorder(root: TreeNode) -> Iterator[TreeNode]:
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        if not node.is_leaf:
            stack.append(node.right)
            stack.append(node.left)


def dumps_forest(forest: DecisionForest) -> bytes:
    parts = [FOREST_MAGIC, struct.pack("<IIIIQ", FORMAT_VERSION, len(forest.trees),
                                       forest.n_classes, forest.n_features, forest.seed)]
    for name in forest.class_names:
        parts.append(_pack_string(name))
    for tree in forest.trees:
        body = []
        for node in _preorder(tree.root):
            if node.is_leaf:
                body.append(struct.pack("<B", 0) + np.asarray(node.counts, dtype="<u4").tobytes())
            else:
                body.append(struct.pack("<BId", 1, node.feature, node.threshold))
        parts.append(struct.pack("<I", len(body)))
        parts.extend(body)
    return b"".join(parts)


def _read_tree(r: _Reader, count: int, n_classes: int, n_features: int) -> TreeNode:
    records = []
    for _ in range(count):
        (tag,) = r.unpack("B")
        if tag == 0:
            counts = np.frombuffer(r.take(4 * n_classes), dtype="<u4").astype(np.int64)
            if counts.sum() == 0:
                raise ModelFormatError(f"{r.path}: leaf with all-zero class counts")
            records.append(TreeNode(counts=counts))
        elif tag == 1:
            feature, threshold = r.unpack("Id")
            if feature >= n_features:
                raise ModelFormatError(f"{r.path}: split on feature {feature} of {n_features}")
            records.append(TreeNode(feature=feature, threshold=threshold))
        else:
            raise ModelFormatError(f"{r.path}: unknown node tag {tag}")
    # rebuild from the back: a split's left then right subtree roots sit on top of the stack
    stack: List[TreeNode] = []
    for node in reversed(records):
        if node.is_leaf:
            stack.append(node)
            continue
        if len(stack) < 2:
            raise ModelFormatError(f"{r.path}: split node without two subtrees")
        node.left, node.right = stack.pop(), stack.pop()
        stack.append(node)
    if len(stack) != 1:
        raise ModelFormatError(f"{r.path}: node stream does not form a single tree")
    return stack[0]


def loads_forest(data: bytes, path="<bytes>") -> DecisionForest:
    r = _Reader(data, path)
    r.header(FOREST_MAGIC)
    n_trees, n_classes, n_features, seed = r.unpack("IIIQ")
    if n_classes < 1 or n_features < 1:
        raise ModelFormatError(f"{path}: forest declares {n_classes} classes, {n_features} features")
    class_names = tuple(r.string() for _ in range(n_classes))
    trees = []
    for _ in range(n_trees):
        (count,) = r.unpack("I")
        # every node costs at least 5 bytes
        if count == 0 or count * 5 > len(data) - r.pos:
            raise CorruptionError(f"{path}: tree declares {count} nodes, file too short")
        trees.append(DecisionTree(root=_read_tree(r, count, n_classes, n_features), n_classes=n_classes))
    r.finish()
    return DecisionForest(trees=trees, n_classes=n_classes, n_features=n_features,
                          seed=seed, class_names=class_names)


def save_forest(forest: DecisionForest, path) -> None:
    """Write ``forest`` as a version-1 .hlrf file."""
    Path(path).write_bytes(dumps_forest(forest))
    logger.info("saved forest of %d trees to %s", len(forest.trees), path)


def load_forest(path) -> DecisionForest:
    forest = loads_forest(Path(path).read_bytes(), path)
    logger.info("loaded forest of %d trees from %s", len(forest.trees), path)
    return forest
