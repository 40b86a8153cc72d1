"""Phase constants: the closed-form c-step and the fuzzy C-means initializer."""
from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from segres.core import (
    Codebook,
    ImageField,
    Membership,
    ObservationMask,
    SegresError,
    ensure_valid,
)

EMPTY_PHASE_MASS = 1e-12


class DegenerateInputError(SegresError, ValueError):
    pass


def update_c(
    g: ImageField,
    u: Membership,
    mask: ObservationMask,
    previous: Optional[Codebook] = None,
) -> Codebook:
    """Weighted phase means of g over observed pixels.

    A phase whose observed mass is below 1e-12 keeps its previous constant
    (or 0 if there is none), so it can pick up pixels again later.
    """
    ensure_valid(u, like=g.shape)
    ensure_valid(mask, like=g.shape)
    wu = u.data * mask.data
    mass = wu.sum(axis=(1, 2))
    num = np.einsum("khw,nhw->kn", wu, g.data)
    c = np.zeros((u.phases, g.channels))
    if previous is not None:
        c[:] = previous.values
    ok = mass >= EMPTY_PHASE_MASS
    c[ok] = num[ok] / mass[ok, None]
    return Codebook(c)


def _fcm_memberships(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """FCM memberships (fuzzifier 2) of ``(P, N)`` points; returns ``(P, K)``."""
    d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    zero = d2 == 0
    with np.errstate(divide="ignore"):
        inv = 1.0 / d2
    hit = zero.any(axis=1)
    inv[hit] = zero[hit].astype(np.float64)
    return inv / inv.sum(axis=1, keepdims=True)


def _initial_centers(x: np.ndarray, k: int, seed: int) -> np.ndarray:
    # order points along their first principal axis and take evenly spaced quantiles
    if x.shape[1] == 1:
        proj = x[:, 0]
    else:
        xc = x - x.mean(axis=0)
        _, _, vt = np.linalg.svd(xc, full_matrices=False)
        axis = vt[0] if vt[0].sum() >= 0 else -vt[0]
        proj = xc @ axis
    order = np.argsort(proj, kind="stable")
    ranks = np.round((np.arange(k) + 0.5) / k * (len(x) - 1)).astype(int)
    centers = x[order[ranks]]
    if len(np.unique(centers, axis=0)) == k:
        return centers
    uniq = np.unique(x, axis=0)
    rng = np.random.default_rng(seed)
    return uniq[np.sort(rng.choice(len(uniq), size=k, replace=False))]


def fcm_init(
    f: ImageField,
    mask: ObservationMask,
    phases: int,
    iters: int = 100,
    seed: int = 0,
) -> Tuple[Codebook, Membership]:
    """Fuzzy C-means (fuzzifier 2) on the observed pixels.

    Centers start at evenly spaced quantiles of the observed pixels along
    their principal axis; ``seed`` only matters when those quantiles
    coincide. Returned centers are sorted by first-channel value, and
    masked pixels get uniform membership.
    """
    ensure_valid(f)
    ensure_valid(mask, like=f.shape)
    obs = mask.data.astype(bool)
    x = f.data[:, obs].T
    if len(x) == 0 or len(np.unique(x, axis=0)) < phases:
        raise DegenerateInputError(f"fewer than {phases} distinct observed pixel values")

    centers = _initial_centers(x, phases, seed)
    for _ in range(iters):
        memb = _fcm_memberships(x, centers)
        wts = memb**2
        new = (wts.T @ x) / wts.sum(axis=0)[:, None]
        if np.array_equal(new, centers):
            break
        centers = new

    order = np.lexsort(centers.T[::-1])
    centers = centers[order]
    memb = _fcm_memberships(x, centers)
    u = np.full((phases,) + f.shape, 1.0 / phases)
    u[:, obs] = memb.T
    return Codebook(centers), Membership(u)
