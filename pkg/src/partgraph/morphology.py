"""Binary and soft 2D morphological dilation.

Dilation grows a mask by a structuring element: a pixel of the output is set
when any input pixel within the element's neighborhood is set. Square
elements use the Chebyshev ball (max(|dy|, |dx|) <= r), diamond elements the
Manhattan ball (|dy| + |dx| <= r). The image border clips the neighborhood:
nothing outside the image participates, not even as zeros.

``soft_dilate`` extends dilation to real-valued fields in [0, 1] so it can
sit inside a differentiable pipeline. ``hard_max`` takes the windowed
maximum (which reduces to plain dilation on 0/1 fields); ``smooth_max``
takes the log-sum-exp (1/beta) * log(sum exp(beta * x)) over the window,
clamped to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

ELEMENT_SHAPES = ("square", "diamond")
SOFT_MODES = ("hard_max", "smooth_max")


@dataclass(frozen=True)
class StructuringElement:
    shape: str = "square"
    radius: int = 1

    def __post_init__(self):
        if self.shape not in ELEMENT_SHAPES:
            raise DomainError(f"element shape must be one of {ELEMENT_SHAPES}, got {self.shape!r}")
        if int(self.radius) != self.radius or self.radius < 0:
            raise DomainError(f"radius must be a nonnegative integer, got {self.radius}")
        object.__setattr__(self, "radius", int(self.radius))

    def offsets(self) -> list[tuple[int, int]]:
        """(dy, dx) neighborhood offsets in lexicographic order."""
        r = self.radius
        if self.shape == "square":
            return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)]
        return [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r + abs(dy), r - abs(dy) + 1)]


@dataclass(frozen=True)
class BinaryMask:
    """H x W boolean mask, row-major."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DomainError(f"mask must be 2D with positive dims, got shape {arr.shape}")
        arr = arr.astype(bool, copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]


def _shift_slices(shape: tuple[int, int], dy: int, dx: int):
    """Output/input slice pair so that out[sl_out] aligns with in[sl_in] shifted by (dy, dx).

    Offsets at least as large as a dimension yield empty (zero-length) slices.
    """
    h, w = shape

    def _axis(n: int, d: int):
        out_start = max(0, -d)
        out_stop = max(out_start, min(n, n - d))
        in_start = max(0, d)
        in_stop = max(in_start, min(n, n + d))
        return slice(out_start, out_stop), slice(in_start, in_stop)

    ys_out, ys_in = _axis(h, dy)
    xs_out, xs_in = _axis(w, dx)
    return (ys_out, xs_out), (ys_in, xs_in)


def dilate(mask: BinaryMask, elem: StructuringElement) -> BinaryMask:
    """Binary dilation of ``mask`` by ``elem``, border-clipped."""
    bits = mask.bits
    out = np.zeros_like(bits)
    for dy, dx in elem.offsets():
        sl_out, sl_in = _shift_slices(bits.shape, dy, dx)
        out[sl_out] |= bits[sl_in]
    return BinaryMask(out)


def dilate_array(bits: np.ndarray, elem: StructuringElement) -> np.ndarray:
    """Array-in, array-out variant of :func:`dilate` for internal hot paths."""
    bits = np.asarray(bits, dtype=bool)
    out = np.zeros_like(bits)
    for dy, dx in elem.offsets():
        sl_out, sl_in = _shift_slices(bits.shape, dy, dx)
        out[sl_out] |= bits[sl_in]
    return out


def soft_dilate(channel: np.ndarray, elem: StructuringElement,
                mode: str = "hard_max", beta: float = 20.0) -> np.ndarray:
    """Dilate a real-valued field in [0, 1]; see the module docstring for the modes."""
    out, _ = soft_dilate_forward(channel, elem, mode, beta)
    return out


def soft_dilate_forward(channel: np.ndarray, elem: StructuringElement,
                        mode: str = "hard_max", beta: float = 20.0):
    """Forward pass returning (output, cache) where cache feeds :func:`soft_dilate_backward`."""
    x = np.asarray(channel, dtype=np.float64)
    if x.ndim != 2:
        raise DomainError(f"expected a 2D field, got shape {x.shape}")
    if x.min() < 0.0 or x.max() > 1.0 + 1e-6:
        raise DomainError("soft dilation expects values in [0, 1]")
    if mode not in SOFT_MODES:
        raise DomainError(f"mode must be one of {SOFT_MODES}, got {mode!r}")
    offsets = elem.offsets()

    # windowed maximum, shared by both modes (smooth_max uses it for stability)
    peak = np.full_like(x, -np.inf)
    for dy, dx in offsets:
        sl_out, sl_in = _shift_slices(x.shape, dy, dx)
        np.maximum(peak[sl_out], x[sl_in], out=peak[sl_out])

    if mode == "hard_max":
        # the winner is the first offset (lexicographic order) attaining the
        # maximum, i.e. the lowest row-major input index; ties resolve there
        winner = np.full(x.shape, -1, dtype=np.int32)
        for idx, (dy, dx) in enumerate(offsets):
            sl_out, sl_in = _shift_slices(x.shape, dy, dx)
            hit = (x[sl_in] == peak[sl_out]) & (winner[sl_out] < 0)
            winner[sl_out][hit] = idx
        cache = ("hard_max", x.shape, offsets, winner)
        return peak, cache

    if beta <= 0.0:
        raise DomainError(f"smooth_max needs beta > 0, got {beta}")
    expsum = np.zeros_like(x)
    for dy, dx in offsets:
        sl_out, sl_in = _shift_slices(x.shape, dy, dx)
        expsum[sl_out] += np.exp(beta * (x[sl_in] - peak[sl_out]))
    raw = peak + np.log(expsum) / beta
    out = np.minimum(raw, 1.0)
    cache = ("smooth_max", x.shape, offsets, (x, peak, expsum, raw <= 1.0, beta))
    return out, cache


def soft_dilate_backward(grad_out: np.ndarray, cache) -> np.ndarray:
    """Gradient of :func:`soft_dilate_forward` with respect to the input field.

    hard_max routes each output pixel's gradient to its window argmax;
    smooth_max distributes it with softmax weights. Output pixels clamped at
    1 pass no gradient.
    """
    mode, shape, offsets, data = cache
    grad_in = np.zeros(shape, dtype=np.float64)
    if mode == "hard_max":
        winner = data
        for idx, (dy, dx) in enumerate(offsets):
            sl_out, sl_in = _shift_slices(shape, dy, dx)
            grad_in[sl_in] += grad_out[sl_out] * (winner[sl_out] == idx)
        return grad_in
    x, peak, expsum, open_mask, beta = data
    g = grad_out * open_mask
    for dy, dx in offsets:
        sl_out, sl_in = _shift_slices(shape, dy, dx)
        weight = np.exp(beta * (x[sl_in] - peak[sl_out])) / expsum[sl_out]
        grad_in[sl_in] += g[sl_out] * weight
    return grad_in
