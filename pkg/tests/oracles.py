"""Slow, obviously-correct reference implementations used as test oracles.

Nothing here imports the package's numerical code; each oracle is written
from the defining formula with explicit loops or dense matrices.
"""
import itertools

import numpy as np


# --- differential operators -------------------------------------------------

def grad_loop(p):
    """Forward differences with periodic wrap, one pixel at a time."""
    h, w = p.shape
    gx = np.zeros((h, w))
    gy = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            gx[i, j] = p[i, (j + 1) % w] - p[i, j]
            gy[i, j] = p[(i + 1) % h, j] - p[i, j]
    return gx, gy


def tv_loop(p):
    gx, gy = grad_loop(p)
    total = 0.0
    for a, b in zip(gx.ravel(), gy.ravel()):
        total += (a * a + b * b) ** 0.5
    return total


def grad_matrix(shape):
    """Dense ``(2P, P)`` forward-difference matrix, horizontal block first."""
    h, w = shape
    n = h * w
    gx = np.zeros((n, n))
    gy = np.zeros((n, n))
    for i in range(h):
        for j in range(w):
            p = i * w + j
            gx[p, p] -= 1
            gx[p, i * w + (j + 1) % w] += 1
            gy[p, p] -= 1
            gy[p, ((i + 1) % h) * w + j] += 1
    return np.vstack([gx, gy])


# --- convolution ------------------------------------------------------------

def conv_loop(x, taps):
    """Circular convolution, kernel anchored at its center tap."""
    h, w = x.shape
    kh, kw = taps.shape
    ch, cw = kh // 2, kw // 2
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for a in range(kh):
                for b in range(kw):
                    acc += taps[a, b] * x[(i - (a - ch)) % h, (j - (b - cw)) % w]
            out[i, j] = acc
    return out


def conv_matrix(taps, shape):
    """Dense matrix of :func:`conv_loop`, built column by column."""
    h, w = shape
    n = h * w
    a = np.zeros((n, n))
    for q in range(n):
        e = np.zeros(n)
        e[q] = 1.0
        a[:, q] = conv_loop(e.reshape(h, w), taps).ravel()
    return a


# --- simplex projection -----------------------------------------------------

def simplex_active_set(y):
    """Project onto the unit simplex by trying every support set.

    On a fixed support S the projection is ``y_S - (sum y_S - 1)/|S|``;
    among supports whose solution is non-negative the closest point wins.
    """
    y = np.asarray(y, dtype=np.float64)
    k = len(y)
    best, best_d = None, np.inf
    for r in range(1, k + 1):
        for support in itertools.combinations(range(k), r):
            s = list(support)
            x = np.zeros(k)
            x[s] = y[s] - (y[s].sum() - 1.0) / r
            if np.any(x[s] < 0):
                continue
            d = np.sum((x - y) ** 2)
            if d < best_d:
                best, best_d = x, d
    return best


# --- data terms -------------------------------------------------------------

def unary_loop(g, c, w):
    """``s[i, y, x] = w[y, x] * sum_j (g[j, y, x] - c[i, j])**2``."""
    n, h, wd = g.shape
    k = c.shape[0]
    s = np.zeros((k, h, wd))
    for i in range(k):
        for y in range(h):
            for x in range(wd):
                acc = 0.0
                for j in range(n):
                    acc += (g[j, y, x] - c[i, j]) ** 2
                s[i, y, x] = w[y, x] * acc
    return s


def phase_means_loop(g, u, w):
    """Weighted means ``sum g w u_i / sum w u_i`` per phase and channel."""
    n, h, wd = g.shape
    k = u.shape[0]
    c = np.zeros((k, n))
    for i in range(k):
        for j in range(n):
            num = den = 0.0
            for y in range(h):
                for x in range(wd):
                    num += g[j, y, x] * w[y, x] * u[i, y, x]
                    den += w[y, x] * u[i, y, x]
            c[i, j] = num / den
    return c


def energy_loop(f, g, u, c, w, mu, lam, taps=None):
    """Relaxed energy with Gaussian fidelity, by straight summation."""
    n, h, wd = f.shape
    k = u.shape[0]
    fid = 0.0
    for j in range(n):
        ag = g[j] if taps is None else conv_loop(g[j], taps)
        for y in range(h):
            for x in range(wd):
                fid += w[y, x] * (f[j, y, x] - ag[y, x]) ** 2
    seg = 0.0
    for i in range(k):
        for j in range(n):
            for y in range(h):
                for x in range(wd):
                    seg += w[y, x] * u[i, y, x] * (g[j, y, x] - c[i, j]) ** 2
    reg = sum(tv_loop(u[i]) for i in range(k))
    return mu * fid + lam * seg + reg


def g_solve_dense(f, u, c, w, mu, lam, taps=None):
    """Minimum-norm minimizer of the g-energy via a dense pseudo-inverse.

    Per channel the normal equations are
    ``(mu A^T W A + lam W) g = mu A^T W f + lam W m``; pixels the data
    never reaches are fixed to the phase mean ``m`` by solving for
    ``g - m`` in the least-norm sense.
    """
    n, h, wd = f.shape
    p = h * wd
    a = np.eye(p) if taps is None else conv_matrix(taps, (h, wd))
    wm = np.diag(w.ravel())
    m = np.einsum("kn,khw->nhw", c, u)
    mat = mu * a.T @ wm @ a + lam * wm
    out = np.zeros_like(f)
    for j in range(n):
        rhs = mu * a.T @ wm @ (f[j].ravel() - a @ m[j].ravel())
        hsol = np.linalg.lstsq(mat, rhs, rcond=1e-12)[0]
        out[j] = (m[j].ravel() + hsol).reshape(h, wd)
    return out


# --- clustering -------------------------------------------------------------

def fcm_loop(x, centers, iters):
    """Textbook fuzzy C-means with fuzzifier 2 on ``(P, N)`` points."""
    x = np.asarray(x, dtype=np.float64)
    v = np.array(centers, dtype=np.float64)
    k = len(v)
    for _ in range(iters):
        u = np.zeros((len(x), k))
        for p, pt in enumerate(x):
            d = np.array([np.sum((pt - v[i]) ** 2) for i in range(k)])
            if np.any(d == 0):
                u[p] = (d == 0) / np.sum(d == 0)
            else:
                for i in range(k):
                    u[p, i] = 1.0 / np.sum(d[i] / d)
        wts = u**2
        v = np.array([(wts[:, i] @ x) / wts[:, i].sum() for i in range(k)])
    return v


# --- labelings --------------------------------------------------------------

def best_permutation_accuracy(pred, truth, k):
    """Percent agreement maximized over relabelings of ``pred``."""
    best = 0
    for perm in itertools.permutations(range(k)):
        mapped = np.asarray(perm)[pred]
        best = max(best, int(np.sum(mapped == truth)))
    return 100.0 * best / pred.size


def binary_labeling_optimum(s, lam):
    """Minimum of ``lam <u, s> + TV`` over all two-phase binary labelings."""
    h, w = s.shape[1:]
    best, best_lab = np.inf, None
    for bits in itertools.product((0, 1), repeat=h * w):
        lab = np.array(bits).reshape(h, w)
        u = np.stack([lab == 0, lab == 1]).astype(np.float64)
        e = lam * np.sum(u * s) + tv_loop(u[0]) + tv_loop(u[1])
        if e < best:
            best, best_lab = e, lab
    return best, best_lab
