"""Outer alternating minimization over (g, c, u) and energy bookkeeping."""
from __future__ import annotations

import csv
import dataclasses
import enum
import io
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from segres.cluster import fcm_init, update_c
from segres.core import (
    Codebook,
    Fidelity,
    ImageField,
    LabelMap,
    Membership,
    ModelParams,
    ObservationMask,
    SegresError,
    binarize,
    ensure_valid,
)
from segres.operators import LinearOperator, tv
from segres.restore import ConvergenceWarning, solve_g
from segres.segment import AdmmState, build_unary, membership_objective, update_u

log = logging.getLogger(__name__)

TRACE_COLUMNS = ["iter", "E_total", "E_restoration", "E_segmentation", "E_tv", "dc_norm", "ms_elapsed"]

# extra ADMM rounds allowed when a u-step fails to lower the energy
GUARD_ROUNDS = 4


class DomainError(SegresError, ValueError):
    pass


@dataclass(frozen=True)
class EnergyBreakdown:
    restoration: float
    segmentation: float
    tv: float

    @property
    def total(self) -> float:
        return self.restoration + self.segmentation + self.tv


def energy(
    f: ImageField,
    g: ImageField,
    u: Membership,
    c: Codebook,
    mask: ObservationMask,
    params: ModelParams,
    op: Optional[LinearOperator] = None,
) -> EnergyBreakdown:
    """Evaluate the relaxed energy term by term.

    Poisson and impulsive fidelities are evaluated here but have no solver.
    """
    if op is None:
        op = LinearOperator(params.kernel)
    w = mask.data
    ag = op.apply(g.data)
    if params.fidelity is Fidelity.GAUSSIAN:
        fid = np.sum(w * (f.data - ag) ** 2)
    elif params.fidelity is Fidelity.IMPULSIVE:
        fid = np.sum(w * np.abs(f.data - ag))
    else:
        obs = np.broadcast_to(w > 0, ag.shape)
        if np.any(ag[obs] <= 0):
            raise DomainError("Poisson fidelity needs A g > 0 at observed pixels")
        safe = np.where(obs, ag, 1.0)
        fid = np.sum(w * (ag - f.data * np.log(safe)))
    diff = g.data[None] - c.values[:, :, None, None]
    seg = np.einsum("khw,knhw->", u.data * w, diff * diff)
    return EnergyBreakdown(
        restoration=float(params.mu * fid),
        segmentation=float(params.lam * seg),
        tv=tv(u.data),
    )


class Termination(enum.Enum):
    CONVERGED = "converged"
    MAX_OUTER = "max_outer"


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    energy: EnergyBreakdown
    dc_norm: float
    ms_elapsed: float

    def as_list(self) -> list:
        e = self.energy
        return [self.iteration, e.total, e.restoration, e.segmentation, e.tv, self.dc_norm, self.ms_elapsed]


@dataclass
class RunTrace:
    rows: List[TraceRow] = field(default_factory=list)
    status: Termination = Termination.MAX_OUTER
    rejected_u_steps: int = 0
    # g-steps whose CG solve stopped short of the tolerance, and the worst residual seen
    cg_unconverged: int = 0
    cg_worst_residual: float = 0.0

    @property
    def totals(self) -> np.ndarray:
        return np.array([r.energy.total for r in self.rows])

    def is_monotone(self, rel_slack: float = 1e-9) -> bool:
        t = self.totals
        return bool(np.all(t[1:] <= t[:-1] + rel_slack * np.abs(t[:-1])))

    def to_csv(self, fh=None) -> str:
        """Write the trace as CSV to ``fh`` (if given) and return the text."""
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(TRACE_COLUMNS)
        for row in self.rows:
            wr.writerow([repr(v) if isinstance(v, float) else v for v in row.as_list()])
        text = buf.getvalue()
        if fh is not None:
            fh.write(text)
        return text


@dataclass
class RunResult:
    labels: LabelMap
    g: ImageField
    c: Codebook
    u: Membership
    trace: RunTrace
    f: ImageField
    mask: ObservationMask
    params: ModelParams

    @property
    def status(self) -> Termination:
        return self.trace.status


def _u_step(s, u, params, state):
    """ADMM u-update with a descent guard.

    ADMM stops on a tolerance, so a single call can land above the energy
    of the incoming u. In that case the solve continues with a tighter
    tolerance; if it still has not improved, the incoming u is kept.
    """
    before = membership_objective(u.data, s.data, params.lam)
    cand = update_u(s, u, params, state)
    after = membership_objective(cand.data, s.data, params.lam)
    p = params
    for _ in range(GUARD_ROUNDS):
        if after <= before:
            break
        p = dataclasses.replace(p, inner_tol=p.inner_tol / 10)
        cand = update_u(s, u, p, state)
        after = membership_objective(cand.data, s.data, params.lam)
    if after <= before:
        return cand, True
    return u, False


def run(
    f: ImageField,
    mask: Optional[ObservationMask],
    params: ModelParams,
) -> RunResult:
    """Alternate the g-, c- and u-steps until the codebook settles.

    The loop stops once ``||c_new - c_old||_2 <= params.epsilon`` or after
    ``params.max_outer`` iterations. In baseline mode g is pinned to f.
    Trace row 0 is the initial state (with g = f).
    """
    if params.fidelity is not Fidelity.GAUSSIAN:
        raise DomainError(f"solving needs Gaussian fidelity, got {params.fidelity.value}")
    ensure_valid(params)
    ensure_valid(f)
    if mask is None:
        mask = ObservationMask.full(f.shape)
    ensure_valid(mask, like=f.shape)

    op = LinearOperator(params.kernel)
    t0 = time.perf_counter()
    c, u = fcm_init(f, mask, params.phases, params.fcm_iters, params.seed)
    g = f
    trace = RunTrace()
    trace.rows.append(
        TraceRow(0, energy(f, g, u, c, mask, params, op), math.nan, (time.perf_counter() - t0) * 1e3)
    )
    state = None

    def g_step(g):
        g_new, reports = solve_g(f, u, c, mask, params, op, g0=g)
        bad = [r.residual for r in reports if not r.converged]
        if bad:
            trace.cg_unconverged += 1
            trace.cg_worst_residual = max(trace.cg_worst_residual, max(bad))
        return g_new

    for k in range(1, params.max_outer + 1):
        if not params.baseline_mode:
            g = g_step(g)
        c_new = update_c(g, u, mask, previous=c)
        s = build_unary(g, c_new, mask)
        if state is None:
            state = AdmmState.fresh(u.data)
        u, accepted = _u_step(s, u, params, state)
        if not accepted:
            trace.rejected_u_steps += 1
        dc = float(np.linalg.norm(c_new.values - c.values))
        c = c_new
        trace.rows.append(
            TraceRow(k, energy(f, g, u, c, mask, params, op), dc, (time.perf_counter() - t0) * 1e3)
        )
        if dc <= params.epsilon:
            trace.status = Termination.CONVERGED
            break

    # refresh g and c against the final memberships; can only lower the energy
    if not params.baseline_mode:
        g = g_step(g)
    c = update_c(g, u, mask, previous=c)
    if trace.cg_unconverged:
        warnings.warn(
            f"g-step CG stopped short of tolerance {params.cg_tol:g} in {trace.cg_unconverged} "
            f"g-steps (worst relative residual {trace.cg_worst_residual:.3g}); "
            "each such step still lowers the energy",
            ConvergenceWarning,
            stacklevel=2,
        )
    log.info(
        "run finished: %s after %d outer iterations (E=%.6g)",
        trace.status.value, len(trace.rows) - 1, trace.rows[-1].energy.total,
    )
    return RunResult(binarize(u), g, c, u, trace, f, mask, params)


@dataclass
class PartialMinimizerReport:
    """Smallest relative energy change seen per block, and blocks that failed."""

    worst: dict
    violated: List[str]

    @property
    def ok(self) -> bool:
        return not self.violated

    def __str__(self):
        parts = ", ".join(f"{k}: {v:.3g}" for k, v in self.worst.items())
        head = "ok" if self.ok else "violated: " + ", ".join(self.violated)
        return f"{head} (min relative change {parts})"


def check_partial_minimizer(
    result: RunResult,
    trials: int = 200,
    step: float = 1e-3,
    seed: int = 0,
    rel_tol: float = 1e-7,
    c: Optional[Codebook] = None,
) -> PartialMinimizerReport:
    """Probe each block of a finished run with random feasible moves.

    Moves have Euclidean norm ``step``: free directions for g and c, and for
    u a move toward a random simplex point at every pixel. A block fails if
    any move lowers the energy by more than ``rel_tol`` relative to it.
    ``c`` overrides the run's codebook.
    """
    f, mask, params = result.f, result.mask, result.params
    op = LinearOperator(params.kernel)
    g, u = result.g, result.u
    c = result.c if c is None else c
    base = energy(f, g, u, c, mask, params, op).total
    scale = max(abs(base), 1e-300)
    rng = np.random.default_rng(seed)
    worst = {"g": math.inf, "c": math.inf, "u": math.inf}
    blocks = ["c", "u"] if params.baseline_mode else ["g", "c", "u"]
    for _ in range(trials):
        for block in blocks:
            if block == "g":
                h = rng.standard_normal(g.data.shape)
                e = energy(f, ImageField(g.data + h * (step / np.linalg.norm(h))), u, c, mask, params, op)
            elif block == "c":
                h = rng.standard_normal(c.values.shape)
                e = energy(f, g, u, Codebook(c.values + h * (step / np.linalg.norm(h))), mask, params, op)
            else:
                target = np.moveaxis(rng.dirichlet(np.ones(u.phases), size=u.shape), -1, 0)
                h = target - u.data
                t = min(1.0, step / np.linalg.norm(h))
                e = energy(f, g, Membership(u.data + t * h), c, mask, params, op)
            worst[block] = min(worst[block], (e.total - base) / scale)
    if params.baseline_mode:
        del worst["g"]
    violated = [b for b, v in worst.items() if v < -rel_tol]
    return PartialMinimizerReport(worst, violated)


def fixed_g_energy(result: RunResult) -> float:
    """Energy of the run's labels as exact indicators, with its g and c."""
    onehot = np.eye(result.u.phases)[result.labels.labels].transpose(2, 0, 1)
    return energy(result.f, result.g, Membership(onehot), result.c, result.mask, result.params).total
