from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ParameterError, ShapeError

# Rank-3 channel-last float32 array (H, W, C).
Tensor = np.ndarray


class ColorSpace(str, Enum):
    RGB = "rgb"
    HSV = "hsv"
    YCRCB = "ycrcb"


class Padding(str, Enum):
    SAME = "same"
    VALID = "valid"


def as_tensor(x, name: str = "tensor") -> Tensor:
    """Return ``x`` as a contiguous float32 (H, W, C) array, validating the Tensor invariants."""
    arr = np.ascontiguousarray(x, dtype=np.float32)
    if arr.ndim != 3:
        raise ShapeError(f"{name} must be rank 3 (H, W, C), got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise ShapeError(f"{name} has an empty dimension: {arr.shape}")
    if not np.isfinite(arr).all():
        raise ParameterError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class ConvParams:
    kernel: np.ndarray  # (kh, kw, in_ch, out_ch); out_ch == 1 for depthwise
    bias: np.ndarray
    stride: int = 1
    dilation: int = 1
    padding: Padding = Padding.SAME
    depthwise: bool = False

    def __post_init__(self):
        kernel = np.ascontiguousarray(self.kernel, dtype=np.float32)
        if kernel.ndim != 4 or min(kernel.shape) < 1:
            raise ParameterError(f"kernel must be 4-D with positive dims, got {kernel.shape}")
        if self.depthwise and kernel.shape[3] != 1:
            raise ParameterError(f"depthwise kernel must be (kh, kw, C, 1), got {kernel.shape}")
        if self.stride < 1 or self.dilation < 1:
            raise ParameterError(f"stride and dilation must be >= 1, got {self.stride}, {self.dilation}")
        bias = np.ascontiguousarray(self.bias, dtype=np.float32).reshape(-1)
        out_ch = kernel.shape[2] if self.depthwise else kernel.shape[3]
        if bias.shape[0] != out_ch:
            raise ParameterError(f"bias length {bias.shape[0]} != out channels {out_ch}")
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "bias", bias)
        object.__setattr__(self, "padding", Padding(self.padding))

    @property
    def in_channels(self) -> int:
        return self.kernel.shape[2]

    @property
    def out_channels(self) -> int:
        return self.kernel.shape[2] if self.depthwise else self.kernel.shape[3]

    @property
    def size(self) -> int:
        return self.kernel.size + self.bias.size


@dataclass(frozen=True)
class BNParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=np.float64).reshape(-1)
                  for a in (self.gamma, self.beta, self.running_mean, self.running_var)]
        if len({a.shape[0] for a in arrays}) != 1:
            raise ParameterError("BN gamma/beta/mean/var lengths differ")
        if (arrays[3] < 0).any():
            raise ParameterError("BN running_var must be >= 0")
        # eps == 0 is tolerated as long as the denominator stays positive
        if self.epsilon < 0 or ((arrays[3] + self.epsilon) <= 0).any():
            raise ParameterError("BN running_var + epsilon must be > 0")
        for attr, arr in zip(("gamma", "beta", "running_mean", "running_var"), arrays):
            object.__setattr__(self, attr, arr)

    def __len__(self) -> int:
        return self.gamma.shape[0]


@dataclass(frozen=True)
class GFParams:
    """Guided filter settings; eps is on the 8-bit squared intensity scale of the guide."""
    r: int = 4
    eps: float = 50.0
    s: int = 4

    def __post_init__(self):
        if self.r < 1:
            raise ParameterError(f"guided filter radius must be >= 1, got {self.r}")
        if not self.eps > 0:
            raise ParameterError(f"guided filter eps must be > 0, got {self.eps}")
        if self.s < 1:
            raise ParameterError(f"guided filter subsample factor must be >= 1, got {self.s}")


@dataclass(frozen=True)
class Box:
    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ParameterError(f"degenerate box {self}")

    @classmethod
    def parse(cls, text: str) -> "Box":
        try:
            parts = [int(p) for p in text.split(",")]
        except ValueError:
            parts = []
        if len(parts) != 4:
            raise ParameterError(f"box must be x,y,w,h, got {text!r}")
        return cls(*parts)

    def crop(self, image: np.ndarray) -> np.ndarray:
        return image[self.y:self.y + self.h, self.x:self.x + self.w]


@dataclass(frozen=True)
class StructElement:
    matrix: np.ndarray = field(default_factory=lambda: np.ones((3, 3), dtype=bool))

    def __post_init__(self):
        m = np.asarray(self.matrix).astype(bool)
        if m.ndim != 2 or m.shape[0] % 2 == 0 or m.shape[1] % 2 == 0:
            raise ParameterError(f"structuring element needs odd dims, got {m.shape}")
        if not m.any():
            raise ParameterError("structuring element has no nonzero element")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def square(cls, size: int = 3) -> "StructElement":
        return cls(np.ones((size, size), dtype=bool))

    def offsets(self):
        """(dy, dx) offsets of the nonzero elements relative to the centre anchor."""
        cy, cx = self.matrix.shape[0] // 2, self.matrix.shape[1] // 2
        return [(int(y) - cy, int(x) - cx) for y, x in zip(*np.nonzero(self.matrix))]
