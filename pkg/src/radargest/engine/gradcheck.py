"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .store import ParamStore
from .tensor import Tensor

__all__ = ["finite_diff_check"]

# gradients below this scale are compared at this scale instead of their own;
# keeps FD roundoff on near-zero coordinates from dominating the report
_REL_FLOOR = 1e-6


def finite_diff_check(
    fn: Callable[[], Tensor],
    params: ParamStore | Iterable[Tensor],
    h: float = 1e-5,
    n_coords: int = 200,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` must rebuild and return the scalar loss from the current parameter
    values and be deterministic (data-dependent branch structure such as
    neighbor graphs must be held fixed by the caller). Checks a random
    subsample of at least ``n_coords`` coordinates across all parameters.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    tensors = params.tensors() if isinstance(params, ParamStore) else list(params)
    if not tensors:
        raise ValueError("finite_diff_check: no parameters given")

    saved = [t.grad for t in tensors]
    for t in tensors:
        t.grad = None
    loss = fn()
    loss.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]
    for t, g in zip(tensors, saved):
        t.grad = g

    total = sum(t.data.size for t in tensors)
    n_sample = min(total, max(n_coords, 200))
    flat_choice = rng.choice(total, size=n_sample, replace=False)

    bounds = np.cumsum([t.data.size for t in tensors])
    max_rel = 0.0
    for flat in np.sort(flat_choice):
        ti = int(np.searchsorted(bounds, flat, side="right"))
        local = int(flat - (bounds[ti - 1] if ti > 0 else 0))
        t = tensors[ti]
        view = t.data.reshape(-1)
        orig = view[local]
        view[local] = orig + h
        f_plus = float(fn().data)
        view[local] = orig - h
        f_minus = float(fn().data)
        view[local] = orig
        fd = (f_plus - f_minus) / (2.0 * h)
        an = float(analytic[ti].reshape(-1)[local])
        rel = abs(fd - an) / max(abs(fd), abs(an), _REL_FLOOR)
        if rel > max_rel:
            max_rel = rel
    return max_rel
