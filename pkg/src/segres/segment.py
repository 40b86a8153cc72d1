"""Membership step: ADMM on the relaxed multiphase problem with g and c fixed.

The split problem is

    min  lam <v, s> + ||d||_1 + indicator_S(u)   s.t.  grad v = d,  v = u

with S the unit simplex at each pixel and ||d||_1 the isotropic TV of
each phase. Each sweep updates v (periodic screened-Poisson solve), d
(vector shrinkage), u (simplex projection), then the two scaled duals.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from segres import kernels
from segres.core import (
    Codebook,
    ImageField,
    Membership,
    ModelParams,
    ObservationMask,
    SegresError,
    ensure_valid,
)
from segres.operators import LAPLACIAN, div, grad, solve_spectral

log = logging.getLogger(__name__)


class SolverDivergedError(SegresError):
    pass


@dataclass(frozen=True)
class UnaryCost:
    """Per-pixel cost of each phase, shape ``(K, H, W)``; zero where unobserved."""

    data: np.ndarray

    @property
    def phases(self) -> int:
        return self.data.shape[0]


def build_unary(g: ImageField, c: Codebook, mask: ObservationMask) -> UnaryCost:
    ensure_valid(mask, like=g.shape)
    if c.channels != g.channels:
        raise ValueError(f"codebook has {c.channels} channels, image has {g.channels}")
    h, w = g.shape
    s = kernels.unary(g.data.reshape(g.channels, -1), c.values, mask.data.reshape(-1))
    return UnaryCost(s.reshape(c.phases, h, w))


def project_simplex(y) -> np.ndarray:
    """Euclidean projection of a K-vector onto the unit simplex."""
    y = np.asarray(y, dtype=np.float64)
    return kernels.project_simplex(y[:, None])[:, 0]


def shrink(x, t: float) -> np.ndarray:
    """Vector soft threshold: ``x * max(|x| - t, 0) / |x|``."""
    x = np.asarray(x, dtype=np.float64)
    ox, oy = kernels.shrink(x[0:1], x[1:2], float(t))
    return np.array([ox[0], oy[0]])


@dataclass
class AdmmState:
    """ADMM iterates kept between calls so the duals can be warm-started."""

    v: np.ndarray
    u: np.ndarray
    d: np.ndarray
    b_d: np.ndarray
    b_u: np.ndarray
    iteration: int = 0
    last_sweeps: int = 0
    last_change: float = np.inf
    last_gap: float = np.inf

    @classmethod
    def fresh(cls, u: np.ndarray) -> "AdmmState":
        u = np.array(u, dtype=np.float64)
        zeros_g = np.zeros((2,) + u.shape)
        return cls(v=u.copy(), u=u, d=grad(u), b_d=zeros_g, b_u=np.zeros_like(u))

    def matches(self, u: np.ndarray) -> bool:
        return self.u.shape == u.shape

    def constraint_residuals(self) -> tuple:
        """``(max |grad v - d|, max |v - u|)``."""
        return (
            float(np.abs(grad(self.v) - self.d).max()),
            float(np.abs(self.v - self.u).max()),
        )


def _project_field(y: np.ndarray) -> np.ndarray:
    k = y.shape[0]
    return kernels.project_simplex(y.reshape(k, -1)).reshape(y.shape)


def update_u(
    s: UnaryCost,
    u_init: Membership,
    params: ModelParams,
    state: Optional[AdmmState] = None,
    max_inner: Optional[int] = None,
) -> Membership:
    """Run ADMM sweeps until the membership settles.

    Stops when ``max(|u_new - u_old|, |v - u_new|) < params.inner_tol`` (sup
    norms) or after ``max_inner`` sweeps (default ``params.max_inner``).
    Pass an :class:`AdmmState` to warm-start from, and keep, the previous
    iterates; its ``u`` then overrides ``u_init``.
    """
    sigma = params.sigma
    tol = params.inner_tol
    if max_inner is None:
        max_inner = params.max_inner
    if state is None or not state.matches(u_init.data):
        fresh = AdmmState.fresh(u_init.data)
        if state is None:
            state = fresh
        else:
            state.__dict__.update(fresh.__dict__)

    scaled = (params.lam / (2.0 * sigma)) * s.data
    thresh = 1.0 / (2.0 * sigma)
    v, u, d, b_d, b_u = state.v, state.u, state.d, state.b_d, state.b_u
    sweeps = 0
    change = gap = np.inf
    while sweeps < max_inner:
        rhs = u - b_u - scaled + div(b_d - d)
        v = solve_spectral(1.0, 1.0, LAPLACIAN, rhs)
        gv = grad(v)
        zx, zy = b_d[0] + gv[0], b_d[1] + gv[1]
        dx, dy = kernels.shrink(zx, zy, thresh)
        d = np.stack([dx, dy])
        u_new = _project_field(b_u + v)
        b_d = b_d + gv - d
        b_u = b_u + v - u_new
        sweeps += 1
        change = float(np.abs(u_new - u).max())
        gap = float(np.abs(v - u_new).max())
        u = u_new
        if not (np.isfinite(change) and np.isfinite(gap)):
            raise SolverDivergedError(
                f"non-finite ADMM iterate at sweep {state.iteration + sweeps}"
            )
        if max(change, gap) < tol:
            break

    state.v, state.u, state.d, state.b_d, state.b_u = v, u, d, b_d, b_u
    state.iteration += sweeps
    state.last_sweeps = sweeps
    state.last_change = change
    state.last_gap = gap
    log.debug("ADMM: %d sweeps, change %.3g, gap %.3g", sweeps, change, gap)
    return Membership(u)


def membership_objective(u: np.ndarray, s: np.ndarray, lam: float) -> float:
    """``lam <u, s> + sum_i TV(u_i)``, the u-dependent part of the energy."""
    gu = grad(u)
    return float(lam * np.sum(u * s) + np.sqrt(gu[0] ** 2 + gu[1] ** 2).sum())
