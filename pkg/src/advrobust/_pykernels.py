"""Pure-NumPy versions of the compiled kernels in ``_ckernels.pyx``.

Codes: 0 = mean, 1 = huber(param), 2 = gaussian scale ((x/theta)^2 - 1).
``batch_roots`` vectorizes across rows instead of looping.
"""
import numpy as np

MEAN, HUBER, GAUSS_SCALE = 0, 1, 2


def _psi(code, param, x, theta):
    if code == MEAN:
        return x - theta
    if code == HUBER:
        return np.clip(x - theta, -param, param)
    u = x / theta
    return u * u - 1.0


def estimating_sums(code, param, data, thetas):
    data = np.ascontiguousarray(data, dtype=float)
    thetas = np.ascontiguousarray(thetas, dtype=float)
    out = np.empty(len(thetas))
    step = max(1, 2_000_000 // max(1, len(data)))
    for i in range(0, len(thetas), step):
        t = thetas[i:i + step, None]
        out[i:i + step] = _psi(code, param, data[None, :], t).sum(axis=1)
    return out


def batch_roots(code, param, rows, lo, hi, xtol=1e-12, maxiter=200):
    """Root of sum_n psi(rows[k, n], theta) in [lo[k], hi[k]] for every row k.

    Bisection until the bracket is narrower than ``xtol`` (relative to the
    magnitude for large roots), then one secant step inside the bracket.
    """
    rows = np.ascontiguousarray(rows, dtype=float)
    a = np.array(lo, dtype=float)
    b = np.array(hi, dtype=float)
    fa = _psi(code, param, rows, a[:, None]).sum(axis=1)
    fb = _psi(code, param, rows, b[:, None]).sum(axis=1)
    eps = np.finfo(float).eps
    for _ in range(maxiter):
        m = 0.5 * (a + b)
        active = (b - a) > xtol + 4.0 * eps * np.abs(m)
        if not np.any(active):
            break
        fm = _psi(code, param, rows, m[:, None]).sum(axis=1)
        left = (np.sign(fm) == np.sign(fa)) & active
        right = ~left & active
        a = np.where(left, m, a)
        fa = np.where(left, fm, fa)
        b = np.where(right, m, b)
        fb = np.where(right, fm, fb)
    denom = fb - fa
    with np.errstate(invalid="ignore", divide="ignore"):
        sec = np.where(denom != 0.0, a - fa * (b - a) / denom, 0.5 * (a + b))
    sec = np.where((sec >= a) & (sec <= b), sec, 0.5 * (a + b))
    return np.where(fa == 0.0, a, np.where(fb == 0.0, b, sec))
