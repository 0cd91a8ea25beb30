"""Vectorized bounded scalar maximization: coarse grid scan, then golden-section refinement.

Every routine here works on a batch of independent 1-D problems at once.
The objective is called as ``fun(x, *params)`` where ``x`` has shape
``(B, K)`` and every entry of ``params`` has shape ``(B, 1)``; it must
return an array of shape ``(B, K)``. Infeasible points may return ``-inf``.
"""

from __future__ import annotations

import math

import numpy as np

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0

# rows per chunk; keeps the (B, n_grid) scan array around 8M doubles
_CHUNK_ELEMS = 8_000_000


def _golden_iterations(width: float, tol: float) -> int:
    if width <= tol:
        return 0
    return int(math.ceil(math.log(tol / width) / math.log(INV_PHI)))


def _maximize_chunk(fun, lo, hi, params, n_grid, tol):
    b = lo.shape[0]
    t = np.linspace(0.0, 1.0, n_grid)
    cols = [p[:, None] for p in params]
    shared = b > 0 and np.all(lo == lo[0]) and np.all(hi == hi[0])
    if shared:
        # one abscissa row broadcast against every parameter row
        grid = (lo[0] + (hi[0] - lo[0]) * t)[None, :]
    else:
        grid = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    vals = np.broadcast_to(fun(grid, *cols), (b, n_grid))
    vals = np.where(np.isnan(vals), -np.inf, vals)
    top = np.max(vals, axis=1, keepdims=True)
    # near-ties (flat objectives, rounding noise) go to the smallest abscissa
    k = np.argmax(vals >= top - _tie_eps(top), axis=1)
    rows = np.arange(b)
    gx = (lambda idx: grid[0, idx]) if shared else (lambda idx: grid[rows, idx])
    best_x = gx(k)
    best_v = vals[rows, k]

    a = gx(np.maximum(k - 1, 0))
    c = gx(np.minimum(k + 1, n_grid - 1))
    step = (hi - lo) / (n_grid - 1)
    n_iter = _golden_iterations(float(np.max(2.0 * step)) if b else 0.0, tol)

    def f1(x):
        out = fun(x[:, None], *cols)[:, 0]
        return np.where(np.isnan(out), -np.inf, out)

    x1 = c - INV_PHI * (c - a)
    x2 = a + INV_PHI * (c - a)
    v1 = f1(x1)
    v2 = f1(x2)
    for _ in range(n_iter):
        left = v1 >= v2
        # keep [a, x2] where left, else [x1, c]
        c = np.where(left, x2, c)
        a = np.where(left, a, x1)
        x_new = np.where(left, c - INV_PHI * (c - a), a + INV_PHI * (c - a))
        v_new = f1(x_new)
        x2, v2, x1, v1 = (
            np.where(left, x1, x_new),
            np.where(left, v1, v_new),
            np.where(left, x_new, x2),
            np.where(left, v_new, v2),
        )

    xm = _polish(f1, 0.5 * (a + c), lo, hi)
    vm = f1(xm)
    better = vm > best_v
    best_x = np.where(better, xm, best_x)
    best_v = np.where(better, vm, best_v)

    # boundary maximizers are returned exactly at the bound
    v_lo = f1(lo)
    v_hi = f1(hi)
    use_lo = v_lo >= best_v - _tie_eps(best_v)
    best_x = np.where(use_lo, lo, best_x)
    best_v = np.where(use_lo, v_lo, best_v)
    near_hi = best_x >= hi - step
    use_hi = (v_hi > best_v + _tie_eps(best_v)) | (near_hi & (v_hi >= best_v - _tie_eps(best_v)))
    best_x = np.where(use_hi, hi, best_x)
    best_v = np.where(use_hi, v_hi, best_v)
    return best_x, best_v


def _tie_eps(v):
    with np.errstate(invalid="ignore"):
        return np.where(np.isfinite(v), 1e-12 * (1.0 + np.abs(v)), 0.0)


def _polish(f1, x0, lo, hi, n_iter: int = 40):
    """Sharpen interior maxima by bisecting on the sign of a central difference.

    Comparing function values cannot resolve the optimum below about
    sqrt(machine eps); the derivative sign can.
    """
    h = 1e-6 * np.maximum(hi - lo, 1e-300)
    w = 4e-7 * (hi - lo)
    a = np.maximum(x0 - w, lo + h)
    b = np.minimum(x0 + w, hi - h)

    def slope(x):
        with np.errstate(invalid="ignore"):
            return f1(x + h) - f1(x - h)

    da = slope(a)
    db = slope(b)
    ok = (da > 0) & (db < 0) & np.isfinite(da) & np.isfinite(db)
    if not ok.any():
        return x0
    a = np.where(ok, a, x0)
    b = np.where(ok, b, x0)
    for _ in range(n_iter):
        mid = 0.5 * (a + b)
        up = slope(mid) > 0
        a = np.where(up, mid, a)
        b = np.where(up, b, mid)
    return np.where(ok, 0.5 * (a + b), x0)


def maximize_batch(fun, lo, hi, params=(), n_grid: int = 512, tol: float = 1e-10):
    """Maximize ``fun`` over ``[lo, hi]`` for every row of a batch.

    Returns ``(x_star, f_star)`` with the same shape as the broadcast
    inputs. Ties on the coarse grid go to the smaller abscissa.
    """
    lo_arr, hi_arr, *p_arrs = np.broadcast_arrays(
        np.asarray(lo, dtype=float), np.asarray(hi, dtype=float),
        *[np.asarray(p, dtype=float) for p in params]
    )
    shape = lo_arr.shape
    lo_f = lo_arr.reshape(-1)
    hi_f = hi_arr.reshape(-1)
    p_f = [p.reshape(-1) for p in p_arrs]
    n = lo_f.size
    x_out = np.empty(n)
    v_out = np.empty(n)
    chunk = max(1, _CHUNK_ELEMS // n_grid)
    for start in range(0, n, chunk):
        sl = slice(start, min(n, start + chunk))
        x, v = _maximize_chunk(fun, lo_f[sl], hi_f[sl], [p[sl] for p in p_f], n_grid, tol)
        x_out[sl] = x
        v_out[sl] = v
    return x_out.reshape(shape), v_out.reshape(shape)


def maximize_scalar(fun, lo: float, hi: float, n_grid: int = 512, tol: float = 1e-10):
    """Scalar convenience wrapper; ``fun`` maps an array of abscissae to values."""
    x, v = maximize_batch(lambda x: fun(x), np.array([lo]), np.array([hi]), (), n_grid, tol)
    return float(x[0]), float(v[0])


def bisect_decreasing(fun, target: float, lo: float, hi: float, tol: float = 1e-13, max_iter: int = 200) -> float:
    """Root of ``fun(x) = target`` for ``fun`` strictly decreasing on ``[lo, hi]``.

    Raises ValueError when the target is not bracketed.
    """
    f_lo = fun(lo) - target
    f_hi = fun(hi) - target
    if f_lo < 0 or f_hi > 0:
        raise ValueError(f"target {target!r} not bracketed on [{lo}, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol * max(1.0, abs(mid)):
            break
        if fun(mid) - target >= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
