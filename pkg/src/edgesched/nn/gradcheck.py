"""Finite-difference gradient verification for the hand-written backprop."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ParamSet


def finite_difference_grads(
    f: Callable[[ParamSet], float], params: ParamSet, step: float = 1e-5
) -> dict[str, np.ndarray]:
    """Central-difference gradient of scalar ``f`` w.r.t. every parameter entry.

    O(2 * param_count) evaluations of ``f`` — keep the networks tiny.
    """
    grads = {}
    for name in params.names():
        base = params[name]
        g = np.zeros_like(base)
        work = params.copy()
        t = work.tensors[name]
        it = np.nditer(base, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = t[idx]
            t[idx] = orig + step
            hi = f(work)
            t[idx] = orig - step
            lo = f(work)
            t[idx] = orig
            g[idx] = (hi - lo) / (2.0 * step)
        grads[name] = g
    return grads


def gradient_relative_error(
    analytic: dict[str, np.ndarray],
    numeric: dict[str, np.ndarray],
) -> float:
    """Norm-based relative error between two gradient dicts (shared keys)."""
    names = sorted(set(analytic) & set(numeric))
    if not names:
        raise ValueError("gradient dicts share no tensor names")
    a = np.concatenate([np.asarray(analytic[n]).ravel() for n in names])
    b = np.concatenate([np.asarray(numeric[n]).ravel() for n in names])
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)
