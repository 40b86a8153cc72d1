"""INI-style config files: degradation sidecars and experiment matrices.

Experiment config::

    [experiment]
    size = 128            ; scene size in pixels

    [DEFAULT]             ; optional, inherited by every cell
    mu = 1
    lambda = 5

    [cell shapes2-noisy]  ; one section per table row, in file order
    scene = shapes2
    seed = 0
    noise = 0.2
    blur = none           ; none | gaussian:SIZE:STD | motion:LEN:ANGLE
    drop = 0
    baseline = false
    ; optional: phases, sigma, epsilon, max_outer, max_inner, inner_tol
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass
from typing import List, Optional

from segres.corrupt import BlurSpec, DegradeSpec

DEGRADE_SECTION = "degrade"


def _parser() -> configparser.ConfigParser:
    return configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)


def degrade_spec_to_ini(spec: DegradeSpec, extra: Optional[dict] = None) -> str:
    cp = _parser()
    cp[DEGRADE_SECTION] = {
        "noise": repr(float(spec.noise_variance)),
        "blur": str(spec.blur),
        "drop": repr(float(spec.drop_fraction)),
        "seed": str(int(spec.seed)),
        **{k: str(v) for k, v in (extra or {}).items()},
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def degrade_spec_from_ini(text: str) -> DegradeSpec:
    cp = _parser()
    cp.read_string(text)
    if DEGRADE_SECTION not in cp:
        raise ValueError(f"missing [{DEGRADE_SECTION}] section")
    sec = cp[DEGRADE_SECTION]
    return DegradeSpec(
        noise_variance=sec.getfloat("noise", 0.0),
        blur=BlurSpec.parse(sec.get("blur", "none")),
        drop_fraction=sec.getfloat("drop", 0.0),
        seed=sec.getint("seed", 0),
    )


@dataclass(frozen=True)
class Cell:
    name: str
    scene: str
    seed: int
    degrade: DegradeSpec
    mu: float
    lam: float
    baseline: bool
    phases: Optional[int] = None
    sigma: float = 2.0
    epsilon: float = 1e-4
    max_outer: int = 200
    max_inner: int = 100
    inner_tol: float = 1e-3


@dataclass(frozen=True)
class Experiment:
    size: int
    cells: List[Cell]


def load_experiment(path) -> Experiment:
    cp = _parser()
    with open(path) as fh:
        cp.read_file(fh)
    size = cp.getint("experiment", "size", fallback=128)
    cells = []
    for name in cp.sections():
        if not name.startswith("cell"):
            continue
        sec = cp[name]
        seed = sec.getint("seed", 0)
        phases = sec.get("phases")
        cells.append(
            Cell(
                name=name[4:].strip() or name,
                scene=sec["scene"],
                seed=seed,
                degrade=DegradeSpec(
                    noise_variance=sec.getfloat("noise", 0.0),
                    blur=BlurSpec.parse(sec.get("blur", "none")),
                    drop_fraction=sec.getfloat("drop", 0.0),
                    seed=sec.getint("degrade_seed", seed),
                ),
                mu=sec.getfloat("mu"),
                lam=sec.getfloat("lambda"),
                baseline=sec.getboolean("baseline", False),
                phases=int(phases) if phases else None,
                sigma=sec.getfloat("sigma", 2.0),
                epsilon=sec.getfloat("epsilon", 1e-4),
                max_outer=sec.getint("max_outer", 200),
                max_inner=sec.getint("max_inner", 100),
                inner_tol=sec.getfloat("inner_tol", 1e-3),
            )
        )
    return Experiment(size, cells)
