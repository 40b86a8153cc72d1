"""Restoration step: minimize the energy over g with u and c held fixed.

For Gaussian fidelity the g-dependent part of the energy is

    mu * sum_j ||w (f_j - A g_j)||^2 + lam * sum_i sum_j <w u_i, (g_j - c_ij)^2>

and, because the memberships sum to one, its normal equations are

    (mu A^T w A + lam w) g_j = mu A^T (w f_j) + lam w m_j,   m_j = sum_i c_ij u_i.

With a full mask this is diagonal in the Fourier basis. With missing
pixels it is solved as g = m + h, where h is the minimum-norm solution of
the shifted system, so at pixels the data never constrains g equals m.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from segres.core import (
    Codebook,
    Fidelity,
    ImageField,
    Membership,
    ModelParams,
    ObservationMask,
    SegresError,
    ensure_valid,
)
from segres.operators import CGResult, LinearOperator, solve_cg, solve_spectral

log = logging.getLogger(__name__)


class UnsupportedSolveError(SegresError):
    pass


class ConvergenceWarning(UserWarning):
    pass


def phase_mean_image(u: np.ndarray, c: np.ndarray) -> np.ndarray:
    """``m[j] = sum_i c[i, j] * u[i]`` as an ``(N, H, W)`` array."""
    return np.einsum("kn,khw->nhw", c, u)


def _check_inputs(f, u, c, mask, params):
    if params.fidelity is not Fidelity.GAUSSIAN:
        raise UnsupportedSolveError(f"no g-solver for {params.fidelity.value} fidelity")
    ensure_valid(f)
    ensure_valid(u, like=f.shape)
    ensure_valid(mask, like=f.shape)
    ensure_valid(c)
    if c.channels != f.channels or c.phases != u.phases:
        raise ValueError(
            f"codebook shape {c.values.shape} does not match "
            f"{u.phases} phases x {f.channels} channels"
        )


def solve_g(
    f: ImageField,
    u: Membership,
    c: Codebook,
    mask: ObservationMask,
    params: ModelParams,
    op: Optional[LinearOperator] = None,
    method: str = "auto",
    g0: Optional[ImageField] = None,
) -> Tuple[ImageField, List[CGResult]]:
    """Like :func:`update_g`, but returns the per-channel CG reports instead of warning."""
    _check_inputs(f, u, c, mask, params)
    if op is None:
        op = LinearOperator(params.kernel)
    mu, lam = params.mu, params.lam
    w = mask.data
    m = phase_mean_image(u.data, c.values)
    full = mask.is_full
    reports = []

    if method == "auto":
        method = "spectral" if full else ("closed" if op.is_identity else "cg")
    if method == "spectral" and not full:
        raise ValueError("spectral g-solve needs a full observation mask")

    if method == "spectral":
        g = solve_spectral(mu, lam, op, mu * op.adjoint(f.data) + lam * m)
    elif method == "closed":
        g = m + w * (mu / (mu + lam)) * (f.data - m)
    elif method == "cg":
        g = np.empty_like(m)

        def matvec(x):
            return mu * op.adjoint(w * op.apply(x)) + lam * w * x

        for j in range(f.channels):
            rhs = mu * op.adjoint(w * (f.data[j] - op.apply(m[j])))
            x0 = None if g0 is None else g0.data[j] - m[j]
            res = solve_cg(matvec, rhs, tol=params.cg_tol, max_iter=params.cg_max_iter, x0=x0)
            reports.append(res)
            g[j] = m[j] + res.x
    else:
        raise ValueError(f"unknown method {method!r}")
    return ImageField(g), reports


def update_g(
    f: ImageField,
    u: Membership,
    c: Codebook,
    mask: ObservationMask,
    params: ModelParams,
    op: Optional[LinearOperator] = None,
    method: str = "auto",
    g0: Optional[ImageField] = None,
) -> ImageField:
    """Exact minimizer of the energy over g.

    ``method`` is ``"auto"``, ``"spectral"`` (full mask only), ``"closed"``
    (identity operator only) or ``"cg"``. ``g0`` is a starting point for
    CG. Every CG iterate lowers the energy below that of its start, so
    passing the current g keeps the step a descent step even when CG runs
    out of iterations. Without it CG starts from the phase-mean image and
    returns the minimum-norm solution. Unconverged CG solves raise a
    :class:`ConvergenceWarning` carrying the final residual.
    """
    g, reports = solve_g(f, u, c, mask, params, op, method, g0)
    for j, res in enumerate(reports):
        if not res.converged:
            warnings.warn(
                f"g-step CG did not converge on channel {j}: "
                f"relative residual {res.residual:.3g} after {res.iterations} iterations",
                ConvergenceWarning,
                stacklevel=2,
            )
    return g


def g_energy(f, g, u, c, mask, params, op=None) -> float:
    """The g-dependent part of the energy (Gaussian fidelity)."""
    if op is None:
        op = LinearOperator(params.kernel)
    w = mask.data
    r = f.data - op.apply(g.data)
    diff = g.data[None] - c.values[:, :, None, None]
    seg = np.einsum("khw,knhw->", u.data * w, diff * diff)
    return float(params.mu * np.sum(w * r * r) + params.lam * seg)


def g_energy_delta(f, g, u, c, mask, params, h, op=None) -> float:
    """``E(g + h) - E(g)`` expanded so no large terms cancel."""
    if op is None:
        op = LinearOperator(params.kernel)
    w = mask.data
    r = f.data - op.apply(g.data)
    ah = op.apply(h)
    m = phase_mean_image(u.data, c.values)
    fid = np.sum(w * ah * ah) - 2.0 * np.sum(w * r * ah)
    seg = 2.0 * np.sum(w * (g.data - m) * h) + np.sum(w * h * h)
    return float(params.mu * fid + params.lam * seg)


@dataclass
class Counterexample:
    direction: np.ndarray
    delta: float

    def __str__(self):
        return f"energy change {self.delta:.3g} along a perturbation of norm {np.linalg.norm(self.direction):.3g}"


def verify_unique_minimizer(
    g: ImageField,
    f: ImageField,
    u: Membership,
    c: Codebook,
    mask: ObservationMask,
    params: ModelParams,
    trials: int = 100,
    step: float = 1e-3,
    seed: int = 0,
    op: Optional[LinearOperator] = None,
) -> Optional[Counterexample]:
    """Probe g with random perturbations supported on observed pixels.

    Each direction is tried with both signs. Returns the first perturbation
    that fails to increase the energy strictly, or None.
    """
    if op is None:
        op = LinearOperator(params.kernel)
    rng = np.random.default_rng(seed)
    w = mask.data
    for _ in range(trials):
        h = rng.standard_normal(g.data.shape) * w
        n = np.linalg.norm(h)
        if n == 0:
            break
        h *= step / n
        for s in (1.0, -1.0):
            d = g_energy_delta(f, g, u, c, mask, params, s * h, op)
            if not d > 0:
                return Counterexample(s * h, d)
    return None
