"""Graph construction and edge convolution for point clouds.

Implements the dynamic-graph layers the gesture network is built from:
exact k-NN graphs with an explicit self-loop, edge features
``h(r_i, r_j - r_i)`` through a shared MLP, max aggregation over each
vertex's k+1 edges, and the learned input transform that re-poses the
spatial coordinates.

Graphs are recomputed from the current features wherever a layer is
applied, so stacked layers operate on feature-space neighborhoods. Neighbor
index selection is not differentiated; gradients flow through the gathered
feature values only.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .engine import ParamStore, Tensor, concat, leaky_relu, make_op, matmul, reduce_max, reshape

__all__ = [
    "KnnGraph",
    "EdgeConvSpec",
    "TNetSpec",
    "knn_graph",
    "knn_indices",
    "gather_neighbors",
    "neighbor_max",
    "fused_edge_max_leaky",
    "column_max",
    "edge_features",
    "edge_conv",
    "input_transform",
    "record_graphs",
    "replay_graphs",
]


# ---------------------------------------------------------------------------
# k-NN graphs
# ---------------------------------------------------------------------------


@dataclass
class KnnGraph:
    """Neighbor table for one cloud: slot 0 is the self-loop, slots 1..k are
    the k nearest other vertices in ascending squared distance (ties by
    ascending index)."""

    indices: np.ndarray  # (n, k+1) int64
    sq_distances: np.ndarray  # (n, k+1), 0.0 at slot 0

    @property
    def k(self) -> int:
        return self.indices.shape[1] - 1


# graph tape: lets a caller freeze the data-dependent neighbor structure
# while perturbing parameters (finite-difference checks compare branch
# derivatives, which requires the branch to stay fixed)
_TAPE: list[np.ndarray] | None = None
_TAPE_MODE: str | None = None


@contextmanager
def record_graphs():
    """Record every k-NN index table computed inside the block."""
    global _TAPE, _TAPE_MODE
    prev = (_TAPE, _TAPE_MODE)
    _TAPE, _TAPE_MODE = [], "record"
    try:
        yield _TAPE
    finally:
        _TAPE, _TAPE_MODE = prev


@contextmanager
def replay_graphs(tape):
    """Replay previously recorded k-NN tables instead of recomputing."""
    global _TAPE, _TAPE_MODE
    prev = (_TAPE, _TAPE_MODE)
    _TAPE, _TAPE_MODE = list(tape), "replay"
    try:
        yield
    finally:
        _TAPE, _TAPE_MODE = prev


def _pairwise_sq_dist(pts: np.ndarray) -> np.ndarray:
    sq = np.einsum("bnf,bnf->bn", pts, pts)
    d2 = sq[:, :, None] + sq[:, None, :] - 2.0 * np.matmul(pts, pts.transpose(0, 2, 1))
    return d2


def knn_indices(pts: np.ndarray, k: int, mask_padded: bool = False) -> np.ndarray:
    """Batched neighbor tables (B, n, k+1) on raw feature arrays.

    ``mask_padded`` removes all-zero rows from other vertices' candidate
    sets (they keep self-loops only when nothing else is available).
    """
    global _TAPE
    if _TAPE_MODE == "replay":
        return _TAPE.pop(0)
    pts = np.asarray(pts, dtype=np.float64)
    b, n, _ = pts.shape
    if not 1 <= k < n:
        raise ValueError(f"knn requires 1 <= k < n, got k={k}, n={n}")
    d2 = _pairwise_sq_dist(pts)
    if mask_padded:
        valid = np.any(pts != 0.0, axis=2)
    else:
        valid = np.ones((b, n), dtype=bool)
    out = np.empty((b, n, k + 1), dtype=np.int64)
    _kernels.knn_select(d2, valid, k, out)
    if _TAPE_MODE == "record":
        _TAPE.append(out)
    return out


def knn_graph(points: np.ndarray, k: int, mask_padded: bool = False) -> KnnGraph:
    """Exact brute-force k-NN graph of a single (n, F) cloud."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError(f"knn_graph expects an (n, F) cloud, got shape {points.shape}")
    idx = knn_indices(points[None], k, mask_padded=mask_padded)[0]
    diffs = points[idx] - points[:, None, :]
    d2 = np.einsum("nkf,nkf->nk", diffs, diffs)
    d2[:, 0] = 0.0
    return KnnGraph(indices=idx, sq_distances=d2)


# ---------------------------------------------------------------------------
# differentiable neighbor ops
# ---------------------------------------------------------------------------


def gather_neighbors(values: Tensor, idx: np.ndarray) -> Tensor:
    """Gather neighbor rows: (B, n, F) x (B, n, K) -> (B, n, K, F)."""
    data = values.data
    b, n, f_dim = data.shape
    flat = (np.arange(b)[:, None, None] * n + idx).reshape(-1)
    out = data.reshape(b * n, f_dim)[flat].reshape(b, n, idx.shape[2], f_dim)

    def back(g):
        buf = np.zeros_like(data)
        _kernels.neighbor_gather_bwd(np.ascontiguousarray(g), idx, buf)
        return (buf,)

    return make_op(out, (values,), back)


def neighbor_max(values: Tensor, idx: np.ndarray) -> Tensor:
    """Element-wise max of each vertex's neighbor rows (ties: lowest slot)."""
    data = values.data
    out = np.empty_like(data)
    slot = np.empty(data.shape, dtype=np.uint8)
    _kernels.neighbor_max_fwd(data, idx, out, slot)

    def back(g):
        buf = np.zeros_like(data)
        _kernels.neighbor_max_bwd(np.ascontiguousarray(g), idx, slot, buf)
        return (buf,)

    return make_op(out, (values,), back)


def fused_edge_max_leaky(a: Tensor, b_vals: Tensor, idx: np.ndarray, alpha: float) -> Tensor:
    """leaky_relu(a_i + max over neighbors j of b_vals_j), one fused node."""
    out = np.empty_like(a.data)
    slot = np.empty(a.data.shape, dtype=np.uint8)
    _kernels.edge_fused_fwd(a.data, b_vals.data, idx, alpha, out, slot)

    def back(g):
        ga = np.empty_like(out)
        gbv = np.zeros_like(b_vals.data)
        _kernels.edge_fused_bwd(np.ascontiguousarray(g), out, idx, slot, alpha, ga, gbv)
        return ga, gbv

    return make_op(out, (a, b_vals), back)


def column_max(values: Tensor) -> Tensor:
    """Global max pooling over the vertex axis: (B, n, F) -> (B, F)."""
    data = values.data
    b, n, f_dim = data.shape
    out = np.empty((b, f_dim))
    arg = np.empty((b, f_dim), dtype=np.int64)
    _kernels.column_max_fwd(data, out, arg)

    def back(g):
        buf = np.zeros_like(data)
        _kernels.column_max_bwd(np.ascontiguousarray(g), arg, buf)
        return (buf,)

    return make_op(out, (values,), back)


# ---------------------------------------------------------------------------
# edge convolution
# ---------------------------------------------------------------------------


@dataclass
class EdgeConvSpec:
    """Shared-MLP edge convolution parameters.

    Each layer holds one weight matrix over the concatenated pair
    ``(r_i, r_j - r_i)`` (shape 2F x width) plus a bias; leaky-ReLU follows
    every layer.
    """

    in_dim: int
    widths: tuple[int, ...]
    weights: list[Tensor] = field(default_factory=list)
    biases: list[Tensor] = field(default_factory=list)
    alpha: float = 0.2

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    @classmethod
    def create(
        cls,
        store: ParamStore,
        prefix: str,
        in_dim: int,
        widths: tuple[int, ...],
        rng: np.random.Generator,
        alpha: float = 0.2,
    ) -> "EdgeConvSpec":
        spec = cls(in_dim=in_dim, widths=tuple(widths), alpha=alpha)
        fan_in = 2 * in_dim  # layer 0 consumes the (r_i, r_j - r_i) pair
        for li, width in enumerate(widths):
            bound = np.sqrt(6.0 / (fan_in + width))
            w = rng.uniform(-bound, bound, size=(fan_in, width))
            spec.weights.append(store.add(f"{prefix}.l{li}.w", w))
            spec.biases.append(store.add(f"{prefix}.l{li}.b", np.zeros(width)))
            fan_in = width
        return spec


def _as_batched(points) -> tuple[Tensor, bool]:
    t = points if isinstance(points, Tensor) else Tensor(points)
    if t.ndim == 2:
        return reshape(t, (1,) + t.shape), True
    if t.ndim == 3:
        return t, False
    raise ValueError(f"expected (n, F) or (B, n, F) points, got shape {t.shape}")


def edge_features(points, graph, spec: EdgeConvSpec, activate: bool = True) -> Tensor:
    """Per-edge features through the shared MLP: (B, n, k+1, F').

    ``graph`` is a :class:`KnnGraph` or a batched (B, n, k+1) index array
    built on these points. ``activate=False`` skips the nonlinearities
    (test mode).
    """
    pts, squeeze = _as_batched(points)
    idx = graph.indices[None] if isinstance(graph, KnnGraph) else graph
    if pts.shape[-1] != spec.in_dim:
        raise ValueError(f"edge_features: points have {pts.shape[-1]} features, spec expects {spec.in_dim}")
    b, n, f_dim = pts.shape
    k1 = idx.shape[2]

    gathered = gather_neighbors(pts, idx)  # (B, n, K, F) = r_j
    center = reshape(pts, (b, n, 1, f_dim))
    diff = gathered - center
    tiled = center + Tensor(np.zeros((b, n, k1, f_dim)))
    x = concat([tiled, diff], axis=-1)
    for w, bias in zip(spec.weights, spec.biases):
        x = matmul(x, w) + bias
        if activate:
            x = leaky_relu(x, alpha=spec.alpha)
    if squeeze:
        x = reshape(x, x.shape[1:])
    return x


def _edge_conv_fast(pts: Tensor, idx: np.ndarray, spec: EdgeConvSpec) -> Tensor:
    # single-layer case: max_j sigma(W.[r_i, r_j - r_i] + b) equals
    # sigma(A_i + max_j B_j) with A = pts (Wt - Wb) + b, B = pts Wb, because
    # leaky-ReLU is strictly increasing; avoids materializing edge tensors
    w, bias = spec.weights[0], spec.biases[0]
    f_dim = spec.in_dim
    w_top = w[:f_dim]
    w_bot = w[f_dim:]
    a = matmul(pts, w_top - w_bot) + bias
    b_vals = matmul(pts, w_bot)
    return fused_edge_max_leaky(a, b_vals, idx, spec.alpha)


def edge_conv(points, spec: EdgeConvSpec, k: int, idx: np.ndarray | None = None,
              mask_padded: bool = False, reference: bool = False) -> Tensor:
    """Edge convolution: per-vertex max over its k+1 edge features.

    Builds the k-NN graph on the input features unless ``idx`` is supplied.
    Output has the same number of points with ``spec.out_dim`` features.
    """
    pts, squeeze = _as_batched(points)
    if idx is None:
        idx = knn_indices(pts.data, k, mask_padded=mask_padded)
    if len(spec.widths) == 1 and not reference:
        out = _edge_conv_fast(pts, idx, spec)
    else:
        feats = edge_features(pts, idx, spec)
        out = reduce_max(feats, axis=2)
    if squeeze:
        out = reshape(out, out.shape[1:])
    return out


# ---------------------------------------------------------------------------
# input transform (T-net)
# ---------------------------------------------------------------------------


@dataclass
class TNetSpec:
    """Mini-network predicting a 3x3 transform for the spatial coordinates."""

    edge: EdgeConvSpec
    fc_w: Tensor
    fc_b: Tensor  # identity-initialized, so a zero-weight net is a no-op
    k: int = 3

    @classmethod
    def create(
        cls,
        store: ParamStore,
        prefix: str,
        in_dim: int,
        width: int,
        rng: np.random.Generator,
        k: int = 3,
        alpha: float = 0.2,
    ) -> "TNetSpec":
        edge = EdgeConvSpec.create(store, f"{prefix}.ec", in_dim, (width,), rng, alpha=alpha)
        bound = np.sqrt(6.0 / (width + 9))
        fc_w = store.add(f"{prefix}.fc.w", rng.uniform(-bound, bound, size=(width, 9)) * 1e-2)
        fc_b = store.add(f"{prefix}.fc.b", np.eye(3).reshape(9))
        return cls(edge=edge, fc_w=fc_w, fc_b=fc_b, k=k)


def input_transform(points, tnet: TNetSpec, mask_padded: bool = False) -> Tensor:
    """Apply the learned 3x3 transform to features 0..2; pass 3.. through."""
    pts, squeeze = _as_batched(points)
    b, n, f_dim = pts.shape
    h = edge_conv(pts, tnet.edge, tnet.k, mask_padded=mask_padded)
    pooled = column_max(h)  # (B, width)
    t9 = matmul(pooled, tnet.fc_w) + tnet.fc_b
    t_mat = reshape(t9, (b, 3, 3))
    coords = pts[:, :, :3]
    rest = pts[:, :, 3:]
    transformed = matmul(coords, t_mat)
    out = concat([transformed, rest], axis=-1)
    if squeeze:
        out = reshape(out, (n, f_dim))
    return out
