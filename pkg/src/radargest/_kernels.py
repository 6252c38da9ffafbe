"""Numba kernels for the graph layers.

All kernels are single-threaded on purpose: they interleave with BLAS calls
in the training loop, and parallel regions thrash against the BLAS thread
pool on small machines. Results are bit-identical across runs.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["knn_select", "neighbor_max_fwd", "neighbor_max_bwd", "neighbor_gather_bwd"]

_MAX_K = 16


@njit(cache=True)
def knn_select(d2, valid, k, out):
    """Per-vertex k nearest neighbors plus self-loop at slot 0.

    d2:    (B, n, n) squared feature distances
    valid: (B, n) vertices eligible as neighbors
    out:   (B, n, k+1) int64, slot 0 = self, slots 1..k ascending distance
           (ties broken by ascending index); missing neighbors fall back to
           the self index

    Single pass per vertex with an insertion buffer (requires k <= 16).
    """
    b_count, n, _ = d2.shape
    best_d = np.empty(_MAX_K, dtype=np.float64)
    best_j = np.empty(_MAX_K, dtype=np.int64)
    for b in range(b_count):
        for i in range(n):
            out[b, i, 0] = i
            count = 0
            for j in range(n):
                if j == i or not valid[b, j]:
                    continue
                d = d2[b, i, j]
                if count == k and d >= best_d[k - 1]:
                    continue
                # insertion position: strictly-smaller keeps ties on the
                # earlier index (j ascends)
                pos = count if count < k else k - 1
                while pos > 0 and d < best_d[pos - 1]:
                    pos -= 1
                stop = count if count < k else k - 1
                for m in range(stop, pos, -1):
                    best_d[m] = best_d[m - 1]
                    best_j[m] = best_j[m - 1]
                best_d[pos] = d
                best_j[pos] = j
                if count < k:
                    count += 1
            for s in range(k):
                out[b, i, s + 1] = best_j[s] if s < count else i


@njit(cache=True)
def neighbor_max_fwd(vals, idx, out, slot):
    """Element-wise max over each vertex's neighbor rows of ``vals``.

    vals: (B, n, F); idx: (B, n, K); out: (B, n, F); slot: (B, n, F) uint8
    records the winning neighbor slot (lowest slot on ties).
    """
    b_count, n, f_dim = vals.shape
    k_total = idx.shape[2]
    for b in range(b_count):
        for i in range(n):
            j0 = idx[b, i, 0]
            for f in range(f_dim):
                out[b, i, f] = vals[b, j0, f]
                slot[b, i, f] = 0
            for s in range(1, k_total):
                j = idx[b, i, s]
                for f in range(f_dim):
                    v = vals[b, j, f]
                    if v > out[b, i, f]:
                        out[b, i, f] = v
                        slot[b, i, f] = s


@njit(cache=True)
def neighbor_max_bwd(g, idx, slot, buf):
    """Scatter the max adjoint back to the winning neighbor rows."""
    b_count, n, f_dim = g.shape
    for b in range(b_count):
        for i in range(n):
            for f in range(f_dim):
                buf[b, idx[b, i, slot[b, i, f]], f] += g[b, i, f]


@njit(cache=True)
def neighbor_gather_bwd(g, idx, buf):
    """Adjoint of gathering neighbor rows: buf[b, idx[b,i,s], :] += g[b,i,s,:]."""
    b_count, n, k_total, f_dim = g.shape
    for b in range(b_count):
        for i in range(n):
            for s in range(k_total):
                j = idx[b, i, s]
                for f in range(f_dim):
                    buf[b, j, f] += g[b, i, s, f]


@njit(cache=True)
def edge_fused_fwd(a, bv, idx, alpha, out, slot):
    """out = leaky(a_i + max_s bv[idx[i,s]]), recording the winning slot.

    a, bv, out: (B, n, F); idx: (B, n, K); slot: (B, n, F) uint8.
    """
    b_count, n, f_dim = a.shape
    k_total = idx.shape[2]
    for b in range(b_count):
        for i in range(n):
            j0 = idx[b, i, 0]
            for f in range(f_dim):
                out[b, i, f] = bv[b, j0, f]
                slot[b, i, f] = 0
            for s in range(1, k_total):
                j = idx[b, i, s]
                for f in range(f_dim):
                    v = bv[b, j, f]
                    if v > out[b, i, f]:
                        out[b, i, f] = v
                        slot[b, i, f] = s
            for f in range(f_dim):
                pre = a[b, i, f] + out[b, i, f]
                out[b, i, f] = pre if pre >= 0.0 else alpha * pre


@njit(cache=True)
def edge_fused_bwd(g, out, idx, slot, alpha, ga, gbv):
    """Adjoint of edge_fused_fwd; the leaky slope is recovered from the sign
    of the output (alpha > 0 preserves sign). ga is written, gbv accumulated."""
    b_count, n, f_dim = g.shape
    for b in range(b_count):
        for i in range(n):
            for f in range(f_dim):
                gv = g[b, i, f] if out[b, i, f] >= 0.0 else alpha * g[b, i, f]
                ga[b, i, f] = gv
                gbv[b, idx[b, i, slot[b, i, f]], f] += gv


@njit(cache=True)
def column_max_fwd(vals, out, arg):
    """Max over the vertex axis: vals (B, n, F) -> out (B, F), arg (B, F)."""
    b_count, n, f_dim = vals.shape
    for b in range(b_count):
        for f in range(f_dim):
            out[b, f] = vals[b, 0, f]
            arg[b, f] = 0
        for i in range(1, n):
            for f in range(f_dim):
                v = vals[b, i, f]
                if v > out[b, f]:
                    out[b, f] = v
                    arg[b, f] = i


@njit(cache=True)
def column_max_bwd(g, arg, buf):
    b_count, f_dim = g.shape
    for b in range(b_count):
        for f in range(f_dim):
            buf[b, arg[b, f], f] += g[b, f]
