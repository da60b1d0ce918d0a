"""Weighted part-adjacency graphs and the graph-matching loss.

A part-adjacency matrix measures, for every pair of part classes, how
strongly the two parts touch in an image. Raw entry (i, j) counts pixels in
the intersection of the two part masks after each is dilated by half the
distance threshold, so parts separated by a thin gap still register. Rows
are then L2-normalized into proximity ratios, and the graph-matching loss is
the Frobenius distance between the reference and predicted normalized
matrices.

Two raw-count constructions are provided:

- ``dilate_intersect`` (the default): entry (i, j) counts pixels lying in
  both dilated masks, with dilation radius ceil(T / 2). Symmetric.
- ``exact_distance``: entry (i, j) counts pixels of part i within distance
  <= T of some pixel of part j, where the metric follows the element shape
  (Chebyshev for square, Manhattan for diamond). Kept as a cross-check; not
  symmetric in general.

The prediction-side path is differentiable: part masks are replaced by
soft-dilated probability channels and the count becomes a sum of products.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from .core import LabelMap, ProbMap, _check_labels_below
from .errors import DomainError
from .morphology import (
    StructuringElement,
    dilate_array,
    soft_dilate_backward,
    soft_dilate_forward,
)

METHODS = ("dilate_intersect", "exact_distance")
WEIGHTINGS = ("weighted", "unweighted")

RAW_COUNTS = "raw_counts"
NORMALIZED = "normalized"
NORM_TOL = 1e-9


@dataclass(frozen=True)
class AdjacencyMatrix:
    """N_p x N_p nonnegative adjacency weights with a zero diagonal.

    ``kind`` is either ``raw_counts`` (dilated-intersection counts, possibly
    binarized) or ``normalized`` (every nonzero row has unit L2 norm).
    """

    entries: np.ndarray
    kind: str = RAW_COUNTS

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
            raise DomainError(f"adjacency matrix must be square, got shape {arr.shape}")
        if self.kind not in (RAW_COUNTS, NORMALIZED):
            raise DomainError(f"unknown adjacency kind {self.kind!r}")
        if not np.isfinite(arr).all():
            raise DomainError("adjacency entries must be finite")
        if arr.min() < 0.0:
            raise DomainError("adjacency entries must be nonnegative")
        if np.abs(np.diag(arr)).max(initial=0.0) != 0.0:
            raise DomainError("adjacency diagonal must be zero (no self-connections)")
        if self.kind == NORMALIZED:
            norms = np.linalg.norm(arr, axis=1)
            bad = norms[norms > 0.0]
            if bad.size and np.abs(bad - 1.0).max() > NORM_TOL:
                raise DomainError("normalized rows must have unit L2 norm or be all zero")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def size(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class AdjacencyConfig:
    """How adjacency graphs are built.

    ``distance_threshold`` is the pixel distance T under which two parts
    count as adjacent; the dilation radius is ceil(T / 2). ``weighting``
    switches between proximity counts and a binarized (unweighted) graph.
    ``soft_mode``/``beta`` select the soft-dilation flavor used on the
    prediction side (smooth_max is the differentiable choice).
    """

    distance_threshold: int = 4
    element_shape: str = "square"
    method: str = "dilate_intersect"
    weighting: str = "weighted"
    include_background: bool = True
    soft_mode: str = "smooth_max"
    beta: float = 20.0

    def __post_init__(self):
        if self.distance_threshold < 0:
            raise DomainError(f"distance threshold must be >= 0, got {self.distance_threshold}")
        if self.method not in METHODS:
            raise DomainError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.weighting not in WEIGHTINGS:
            raise DomainError(f"weighting must be one of {WEIGHTINGS}, got {self.weighting!r}")
        if self.beta <= 0.0:
            raise DomainError(f"beta must be > 0, got {self.beta}")
        # shape and soft mode are validated by their consumers
        StructuringElement(self.element_shape, 0)

    @property
    def dilation_radius(self) -> int:
        return ceil(self.distance_threshold / 2)

    @property
    def element(self) -> StructuringElement:
        return StructuringElement(self.element_shape, self.dilation_radius)


def _apply_weighting(raw: np.ndarray, weighting: str) -> np.ndarray:
    """Weighted graphs keep the counts; unweighted graphs saturate them at 1.

    min(x, 1) equals the positive-count indicator on integer counts and stays
    defined (with subgradient 0 above 1) on the soft path.
    """
    if weighting == "unweighted":
        return np.minimum(raw, 1.0)
    return raw


def adjacency_from_labels(label_map: LabelMap, num_parts: int,
                          cfg: AdjacencyConfig) -> AdjacencyMatrix:
    """Raw-count adjacency matrix of a discrete label map."""
    if num_parts < 1:
        raise DomainError(f"num_parts must be >= 1, got {num_parts}")
    if label_map.num_classes is not None and label_map.num_classes != num_parts:
        raise DomainError(
            f"map declares {label_map.num_classes} classes but num_parts is {num_parts}"
        )
    labels = label_map.labels
    _check_labels_below(labels, num_parts)

    present = [int(p) for p in np.unique(labels)]
    if not cfg.include_background:
        present = [p for p in present if p != 0]

    raw = np.zeros((num_parts, num_parts), dtype=np.float64)
    if cfg.method == "dilate_intersect":
        elem = cfg.element
        dilated = {p: dilate_array(labels == p, elem) for p in present}
        for a_idx, i in enumerate(present):
            for j in present[a_idx + 1:]:
                count = float(np.count_nonzero(dilated[i] & dilated[j]))
                raw[i, j] = count
                raw[j, i] = count
    else:
        reach = StructuringElement(cfg.element_shape, cfg.distance_threshold)
        masks = {p: labels == p for p in present}
        near = {p: dilate_array(masks[p], reach) for p in present}
        for i in present:
            for j in present:
                if i != j:
                    # pixels of part i within distance <= T of some pixel of part j
                    raw[i, j] = float(np.count_nonzero(masks[i] & near[j]))

    return AdjacencyMatrix(_apply_weighting(raw, cfg.weighting), RAW_COUNTS)


def normalize_rows(matrix: AdjacencyMatrix) -> AdjacencyMatrix:
    """Row-wise L2 normalization into proximity ratios. Zero rows stay zero."""
    if matrix.kind != RAW_COUNTS:
        raise DomainError("normalize_rows expects a raw-counts matrix")
    return AdjacencyMatrix(_normalize_rows_array(matrix.entries), NORMALIZED)


def _normalize_rows_array(raw: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(raw, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    return raw / safe[:, None]


def soft_adjacency(pred: ProbMap, cfg: AdjacencyConfig):
    """Adjacency of a probability map via soft dilation and channel products.

    Returns (raw, normalized) matrices. Raw entry (i, j), i != j, is the sum
    over pixels of the product of the soft-dilated channels i and j. On a
    one-hot input with hard_max this reproduces the discrete
    ``dilate_intersect`` counts of the argmax map exactly.
    """
    raw, _ = _soft_adjacency_forward(pred.probs, cfg)
    raw_m = AdjacencyMatrix(raw, RAW_COUNTS)
    return raw_m, normalize_rows(raw_m)


def _soft_adjacency_forward(probs: np.ndarray, cfg: AdjacencyConfig):
    """Raw adjacency of an (H, W, C) array plus the cache for the backward pass."""
    h, w, c = probs.shape
    elem = cfg.element
    dilated = np.empty((c, h * w), dtype=np.float64)
    caches = []
    for ch in range(c):
        if ch == 0 and not cfg.include_background:
            dilated[ch] = 0.0
            caches.append(None)
            continue
        field, cache = soft_dilate_forward(probs[:, :, ch], elem, cfg.soft_mode, cfg.beta)
        dilated[ch] = field.ravel()
        caches.append(cache)
    counts = dilated @ dilated.T
    np.fill_diagonal(counts, 0.0)
    raw = _apply_weighting(counts, cfg.weighting)
    return raw, (dilated, caches, counts)


def gm_loss(reference: AdjacencyMatrix, predicted: AdjacencyMatrix) -> float:
    """Frobenius distance between two normalized adjacency matrices."""
    if reference.kind != NORMALIZED or predicted.kind != NORMALIZED:
        raise DomainError("graph-matching loss expects normalized matrices")
    if reference.size != predicted.size:
        raise DomainError(
            f"size mismatch: reference is {reference.size}, predicted is {predicted.size}"
        )
    return float(np.linalg.norm(reference.entries - predicted.entries))


def gm_loss_grad(pred: ProbMap, reference: AdjacencyMatrix,
                 cfg: AdjacencyConfig) -> np.ndarray:
    """Gradient of the graph-matching loss with respect to every probability entry.

    Differentiates loss -> row normalization -> soft adjacency -> soft
    dilation. With ``smooth_max`` the chain is smooth; with ``hard_max`` the
    window-argmax subgradient is used. At a loss of exactly 0 the gradient is
    defined as the zero field.
    """
    _, grad = gm_value_and_grad(pred.probs, reference, cfg)
    return grad


def gm_value_and_grad(probs: np.ndarray, reference: AdjacencyMatrix,
                      cfg: AdjacencyConfig):
    """(loss, gradient) of the graph-matching loss for an (H, W, C) probability array."""
    if reference.kind != NORMALIZED:
        raise DomainError("reference adjacency matrix must be normalized")
    h, w, c = probs.shape
    if reference.size != c:
        raise DomainError(
            f"reference matrix is {reference.size} x {reference.size} but the "
            f"prediction has {c} channels"
        )
    raw, (dilated, caches, counts) = _soft_adjacency_forward(probs, cfg)
    norms = np.linalg.norm(raw, axis=1)
    normalized = _normalize_rows_array(raw)
    diff = normalized - reference.entries
    loss = float(np.linalg.norm(diff))
    if loss == 0.0:
        return 0.0, np.zeros_like(probs)

    grad_norm = diff / loss
    # through row normalization: for nonzero rows u with n = u / |u|,
    # grad_u = (grad_n - n (n . grad_n)) / |u|; zero rows pass nothing
    grad_raw = np.zeros_like(raw)
    nonzero = norms > 0.0
    if np.any(nonzero):
        n_rows = normalized[nonzero]
        g_rows = grad_norm[nonzero]
        inner = np.sum(n_rows * g_rows, axis=1, keepdims=True)
        grad_raw[nonzero] = (g_rows - n_rows * inner) / norms[nonzero, None]
    if cfg.weighting == "unweighted":
        grad_raw = grad_raw * (counts < 1.0)
    np.fill_diagonal(grad_raw, 0.0)

    # counts = D D^T, so grad_D = (G + G^T) D
    grad_dilated = (grad_raw + grad_raw.T) @ dilated

    grad = np.zeros_like(probs)
    for ch in range(c):
        if caches[ch] is None:
            continue
        grad[:, :, ch] = soft_dilate_backward(grad_dilated[ch].reshape(h, w), caches[ch])
    return loss, grad


def gm_value(probs: np.ndarray, reference: AdjacencyMatrix, cfg: AdjacencyConfig) -> float:
    """Loss-only variant of :func:`gm_value_and_grad` (used by finite-difference checks)."""
    if reference.kind != NORMALIZED:
        raise DomainError("reference adjacency matrix must be normalized")
    raw, _ = _soft_adjacency_forward(probs, cfg)
    return float(np.linalg.norm(_normalize_rows_array(raw) - reference.entries))
