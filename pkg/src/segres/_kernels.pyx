# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-pixel kernels. Same contracts as ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

cdef enum:
    MAXK = 64


def project_simplex(y):
    """Project every column of a ``(K, P)`` array onto the unit simplex."""
    cdef const double[:, :] yv = np.asarray(y, dtype=np.float64)
    cdef Py_ssize_t k = yv.shape[0], n = yv.shape[1]
    if k > MAXK:
        raise ValueError(f"at most {MAXK} phases supported, got {k}")
    out = np.empty((k, n), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double a[MAXK]
    cdef double tmp, css, theta, best
    cdef Py_ssize_t p, i, j, rho
    with nogil:
        for p in range(n):
            for i in range(k):
                tmp = yv[i, p]
                j = i
                # insertion sort, descending
                while j > 0 and a[j - 1] < tmp:
                    a[j] = a[j - 1]
                    j -= 1
                a[j] = tmp
            css = 0.0
            theta = a[0] - 1.0
            for i in range(k):
                css += a[i]
                tmp = (css - 1.0) / (i + 1)
                if a[i] - tmp > 0:
                    theta = tmp
            for i in range(k):
                tmp = yv[i, p] - theta
                ov[i, p] = tmp if tmp > 0 else 0.0
    return out


def shrink(x, y, double t):
    """Isotropic soft threshold of the vector field ``(x, y)`` by ``t``."""
    xa = np.ascontiguousarray(x, dtype=np.float64)
    ya = np.ascontiguousarray(y, dtype=np.float64)
    shape = xa.shape
    cdef const double[::1] xv = xa.reshape(-1)
    cdef const double[::1] yv = ya.reshape(-1)
    ox = np.empty(xv.shape[0], dtype=np.float64)
    oy = np.empty(xv.shape[0], dtype=np.float64)
    cdef double[::1] oxv = ox
    cdef double[::1] oyv = oy
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef double mag, s
    with nogil:
        for i in range(n):
            mag = sqrt(xv[i] * xv[i] + yv[i] * yv[i])
            if mag > t:
                s = (mag - t) / mag
                oxv[i] = xv[i] * s
                oyv[i] = yv[i] * s
            else:
                oxv[i] = 0.0
                oyv[i] = 0.0
    return ox.reshape(shape), oy.reshape(shape)


def unary(g, c, w):
    """``s[i, p] = w[p] * sum_j (g[j, p] - c[i, j])**2`` for ``(N, P)`` g."""
    cdef const double[:, :] gv = np.asarray(g, dtype=np.float64)
    cdef const double[:, :] cv = np.asarray(c, dtype=np.float64)
    cdef const double[:] wv = np.asarray(w, dtype=np.float64)
    cdef Py_ssize_t k = cv.shape[0], nch = cv.shape[1], n = gv.shape[1]
    out = np.empty((k, n), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t i, j, p
    cdef double acc, d
    with nogil:
        for i in range(k):
            for p in range(n):
                acc = 0.0
                for j in range(nch):
                    d = gv[j, p] - cv[i, j]
                    acc += d * d
                ov[i, p] = acc * wv[p]
    return out
