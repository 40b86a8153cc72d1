"""Pure numpy versions of the per-pixel kernels (fallback backend)."""
import numpy as np


def project_simplex(y):
    """Project every column of a ``(K, P)`` array onto the unit simplex."""
    y = np.asarray(y, dtype=np.float64)
    k = y.shape[0]
    a = -np.sort(-y, axis=0)
    css = np.cumsum(a, axis=0) - 1.0
    idx = np.arange(1, k + 1, dtype=np.float64)[:, None]
    cond = a - css / idx > 0
    # largest index satisfying cond; index 0 always does
    rho = k - 1 - np.argmax(cond[::-1], axis=0)
    theta = np.take_along_axis(css, rho[None], axis=0) / (rho + 1.0)
    return np.maximum(y - theta, 0.0)


def shrink(x, y, t):
    """Isotropic soft threshold of the vector field ``(x, y)`` by ``t``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    mag = np.sqrt(x * x + y * y)
    scale = np.zeros_like(mag)
    nz = mag > t
    scale[nz] = (mag[nz] - t) / mag[nz]
    return x * scale, y * scale


def unary(g, c, w):
    """``s[i, p] = w[p] * sum_j (g[j, p] - c[i, j])**2`` for ``(N, P)`` g."""
    g = np.asarray(g, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    diff = g[None, :, :] - c[:, :, None]
    return np.einsum("kjp,kjp->kp", diff, diff) * np.asarray(w, dtype=np.float64)[None]
