"""Discrete gradient/divergence, periodic blur operators and linear solvers.

All operators act on the last two axes ``(H, W)`` of their input and use
periodic boundaries, so every system the solver needs is diagonal in the
2-D DFT basis. A gradient field is an array of shape ``(2, ..., H, W)``
holding the horizontal then the vertical forward difference.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from segres.core import InvalidValueError, Kernel, SegresError, ensure_valid

log = logging.getLogger(__name__)

CHECK_RESIDUALS = os.environ.get("SEGRES_DEBUG", "") not in ("", "0")
LAPLACIAN = "laplacian"


class SingularSystemError(SegresError):
    pass


def _check_plane(p: np.ndarray) -> None:
    if p.ndim < 2 or p.shape[-1] < 2 or p.shape[-2] < 2:
        raise InvalidValueError(f"planes must be at least 2x2, got shape {p.shape}")


def grad(p: np.ndarray) -> np.ndarray:
    """Forward differences with periodic wrap."""
    p = np.asarray(p, dtype=np.float64)
    _check_plane(p)
    return np.stack([np.roll(p, -1, axis=-1) - p, np.roll(p, -1, axis=-2) - p])


def div(q: np.ndarray) -> np.ndarray:
    """Negative adjoint of :func:`grad` (backward differences)."""
    q = np.asarray(q, dtype=np.float64)
    qx, qy = q[0], q[1]
    return (qx - np.roll(qx, 1, axis=-1)) + (qy - np.roll(qy, 1, axis=-2))


def tv(p: np.ndarray) -> float:
    """Isotropic total variation, summed over every plane of ``p``."""
    d = grad(p)
    return float(np.sqrt(d[0] ** 2 + d[1] ** 2).sum())


def laplacian_symbol(shape) -> np.ndarray:
    """Eigenvalues of ``grad^T grad`` on the rfft2 frequency grid."""
    h, w = shape
    ky = 2.0 * np.sin(np.pi * np.arange(h) / h)
    kx = 2.0 * np.sin(np.pi * np.arange(w // 2 + 1) / w)
    return ky[:, None] ** 2 + kx[None, :] ** 2


class LinearOperator:
    """Identity (``kernel=None``) or periodic convolution with a kernel."""

    def __init__(self, kernel: Optional[Kernel] = None):
        if kernel is not None:
            ensure_valid(kernel)
        self.kernel = kernel
        self._transfer = {}

    @property
    def is_identity(self) -> bool:
        return self.kernel is None

    def __repr__(self):
        if self.kernel is None:
            return "LinearOperator(identity)"
        return f"LinearOperator(convolution {self.kernel.shape[0]}x{self.kernel.shape[1]})"

    def transfer(self, shape) -> np.ndarray:
        """rfft2 of the kernel padded to ``shape`` with its center at the origin."""
        shape = tuple(shape)
        if shape not in self._transfer:
            taps = self.kernel.taps
            kh, kw = taps.shape
            if kh > shape[0] or kw > shape[1]:
                raise InvalidValueError(f"kernel {taps.shape} larger than plane {shape}")
            pad = np.zeros(shape)
            pad[:kh, :kw] = taps
            pad = np.roll(pad, (-(kh // 2), -(kw // 2)), axis=(0, 1))
            self._transfer[shape] = np.fft.rfft2(pad)
        return self._transfer[shape]

    def gram_symbol(self, shape) -> np.ndarray:
        """Eigenvalues of ``A^T A`` on the rfft2 frequency grid."""
        if self.kernel is None:
            return np.ones((shape[0], shape[1] // 2 + 1))
        return np.abs(self.transfer(shape)) ** 2

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.kernel is None:
            return x.copy()
        t = self.transfer(x.shape[-2:])
        return np.fft.irfft2(np.fft.rfft2(x) * t, s=x.shape[-2:])

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if self.kernel is None:
            return y.copy()
        t = self.transfer(y.shape[-2:])
        return np.fft.irfft2(np.fft.rfft2(y) * np.conj(t), s=y.shape[-2:])


SpectralOp = Union[None, LinearOperator, str]


def solve_spectral(a0: float, a1: float, op: SpectralOp, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(a0 * O^T O + a1 * I) x = rhs`` exactly in the Fourier domain.

    ``op`` is None (identity), a :class:`LinearOperator`, or ``"laplacian"``
    (``O`` is the forward-difference gradient, so ``O^T O = -Laplacian``).
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    shape = rhs.shape[-2:]
    if op is None:
        symbol = np.ones((shape[0], shape[1] // 2 + 1))
    elif isinstance(op, LinearOperator):
        symbol = op.gram_symbol(shape)
    elif op == LAPLACIAN:
        symbol = laplacian_symbol(shape)
    else:
        raise ValueError(f"unknown spectral operator {op!r}")
    denom = a0 * symbol + a1
    if np.any(denom <= 0):
        raise SingularSystemError(f"system symbol not positive (min {denom.min():.3g})")
    x = np.fft.irfft2(np.fft.rfft2(rhs) / denom, s=shape)
    if CHECK_RESIDUALS:
        back = np.fft.irfft2(np.fft.rfft2(x) * denom, s=shape)
        scale = max(np.abs(rhs).max(), 1e-300)
        res = np.abs(back - rhs).max()
        if res >= 1e-8 * scale:
            raise SingularSystemError(f"spectral solve residual {res:.3g} too large")
    return x


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool


def solve_cg(
    matvec: Callable[[np.ndarray], np.ndarray],
    rhs: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 500,
    x0: Optional[np.ndarray] = None,
) -> CGResult:
    """Plain conjugate gradients for a symmetric positive semi-definite ``matvec``.

    Stops when ``||matvec(x) - rhs|| <= tol * ||rhs||``. Started from zero on a
    consistent singular system, the iterates stay in the range of the
    operator, so the result is the minimum-norm solution.
    ``residual`` is relative to ``||rhs||``; callers decide how to report
    a result with ``converged`` false.
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    bnorm = np.linalg.norm(rhs)
    x = np.zeros_like(rhs) if x0 is None else np.array(x0, dtype=np.float64)
    if bnorm == 0.0:
        return CGResult(np.zeros_like(rhs), 0, 0.0, True)
    r = rhs - matvec(x) if x0 is not None else rhs.copy()
    p = r.copy()
    rr = float(np.vdot(r, r))
    it = 0
    while np.sqrt(rr) > tol * bnorm and it < max_iter:
        ap = matvec(p)
        pap = float(np.vdot(p, ap))
        if pap <= 0:
            break
        alpha = rr / pap
        x += alpha * p
        r -= alpha * ap
        rr_new = float(np.vdot(r, r))
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
    res = np.sqrt(rr) / bnorm
    converged = res <= tol
    if not converged:
        log.debug("CG stopped after %d iterations, relative residual %.3g", it, res)
    return CGResult(x, it, float(res), bool(converged))
