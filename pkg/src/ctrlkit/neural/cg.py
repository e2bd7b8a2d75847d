"""Conjugate gradient for symmetric positive-definite linear operators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(slots=True)
class CgResult:
    x: np.ndarray
    iterations: int
    residual_norm: float
    converged: bool


def conjugate_gradient(matvec, b, iters=12, tol=1e-10) -> CgResult:
    """Approximately solve A x = b, A given as matvec.

    Stops when the residual norm drops to tol * ||b|| or after `iters`
    iterations, reporting which. Raises on non-finite intermediates,
    naming the iteration.
    """
    b = np.asarray(b, dtype=np.float64)
    x = np.zeros_like(b)
    r = b.copy()
    p = b.copy()
    rr = float(r @ r)
    bnorm = float(np.sqrt(rr))
    if bnorm == 0.0:
        return CgResult(x, 0, 0.0, True)
    threshold = tol * bnorm
    for it in range(iters):
        ap = matvec(p)
        pap = float(p @ ap)
        if not np.isfinite(pap):
            raise FloatingPointError(f"non-finite curvature at CG iteration {it}")
        if pap <= 0.0:
            # operator not positive definite along p; stop with current x
            return CgResult(x, it, float(np.sqrt(rr)), False)
        alpha = rr / pap
        x += alpha * p
        r -= alpha * ap
        rr_new = float(r @ r)
        if not np.isfinite(rr_new):
            raise FloatingPointError(f"non-finite residual at CG iteration {it}")
        if np.sqrt(rr_new) <= threshold:
            return CgResult(x, it + 1, float(np.sqrt(rr_new)), True)
        p = r + (rr_new / rr) * p
        rr = rr_new
    return CgResult(x, iters, float(np.sqrt(rr)), False)
