"""Numpy reference implementation of the hot accumulation loops.

netcox.backend re-exports either these functions or their compiled
equivalents from netcox._kernels; both must agree to floating-point
round-off (covered by the parity tests).
"""

import numpy as np

# kernel ids shared with the compiled module
EPANECHNIKOV_ID = 0
TRIANGULAR_ID = 1
BOX_ID = 2


def kernel_values(u, kernel_id):
    """Evaluate the localization kernel on the rescaled axis.

    Supported on [-1, 1]; the box kernel takes the closed-interval value
    1/2 at the endpoints.
    """
    u = np.asarray(u, dtype=np.float64)
    out = np.zeros_like(u)
    inside = np.abs(u) <= 1.0
    if kernel_id == EPANECHNIKOV_ID:
        out[inside] = 0.75 * (1.0 - u[inside] ** 2)
    elif kernel_id == TRIANGULAR_ID:
        out[inside] = 1.0 - np.abs(u[inside])
    elif kernel_id == BOX_ID:
        out[inside] = 0.5
    else:
        raise ValueError(f"unknown kernel id {kernel_id}")
    return out


def segment_kernel_mass(lo, hi, t0, h, kernel_id, max_step):
    """Per-segment integral of (1/h) K((t - t0)/h) over [lo_i, hi_i].

    Composite trapezoid with step <= max_step and segment endpoints as
    nodes. Segments are expected pre-clipped to the kernel window, so
    hi - lo <= 2h; empty segments (hi <= lo) yield 0.
    """
    lo = np.ascontiguousarray(lo, dtype=np.float64)
    hi = np.ascontiguousarray(hi, dtype=np.float64)
    m = lo.shape[0]
    if m == 0:
        return np.zeros(0)
    length = hi - lo
    live = length > 0.0
    ncells = np.ones(m, dtype=np.int64)
    ncells[live] = np.maximum(np.ceil(length[live] / max_step), 1.0).astype(np.int64)
    nmax = int(ncells.max())
    k = np.arange(nmax + 1)
    delta = np.where(live, length / ncells, 0.0)
    nodes = lo[:, None] + delta[:, None] * k[None, :]
    vals = kernel_values((nodes - t0) / h, kernel_id)
    wk = (k[None, :] <= ncells[:, None]).astype(np.float64)
    wk[:, 0] = 0.5
    wk[np.arange(m), ncells] = 0.5
    out = (vals * wk).sum(axis=1) * delta / h
    out[~live] = 0.0
    return out


def cox_accumulate(X, w, theta):
    """Exponentially weighted sums over atoms: value, gradient, curvature.

    Returns (sum_i w_i e^{x_i'theta},
             sum_i w_i e^{x_i'theta} x_i,
             sum_i w_i e^{x_i'theta} x_i x_i').
    """
    X = np.asarray(X, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if X.shape[0] == 0:
        q = X.shape[1] if X.ndim == 2 else len(theta)
        return 0.0, np.zeros(q), np.zeros((q, q))
    e = w * np.exp(X @ np.asarray(theta, dtype=np.float64))
    val = float(e.sum())
    g = X.T @ e
    hess = (X * e[:, None]).T @ X
    return val, g, hess
