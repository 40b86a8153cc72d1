"""Domain types shared by every stage of the solver.

Arrays are stored channel-planar: an image with N channels is an
``(N, H, W)`` float64 array, a membership field is ``(K, H, W)``.
Constructors normalize shapes and dtypes but do not reject bad values;
use :func:`validate` to get a report or :func:`ensure_valid` to raise.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

SIMPLEX_SUM_TOL = 1e-9
SIMPLEX_NEG_TOL = 1e-12
KERNEL_SUM_TOL = 1e-12


class SegresError(Exception):
    """Base class for errors raised by the package."""


class InvalidValueError(SegresError, ValueError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    # copy, so freezing never locks an array the caller still owns
    a = np.array(a, order="C")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ImageField:
    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim == 2:
            a = a[None]
        if a.ndim != 3:
            raise InvalidValueError(f"image data must be 2-D or 3-D, got shape {a.shape}")
        object.__setattr__(self, "data", _frozen(a))

    @classmethod
    def from_hwc(cls, arr) -> "ImageField":
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim == 3:
            a = np.moveaxis(a, -1, 0)
        return cls(a)

    def to_hwc(self) -> np.ndarray:
        return np.moveaxis(self.data, 0, -1)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return self.data.shape[1:]


@dataclass(frozen=True)
class ObservationMask:
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(np.asarray(self.data, dtype=np.float64)))

    @classmethod
    def full(cls, shape) -> "ObservationMask":
        return cls(np.ones(shape))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def is_full(self) -> bool:
        return bool(np.all(self.data == 1))


@dataclass(frozen=True)
class Membership:
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(np.asarray(self.data, dtype=np.float64)))

    @classmethod
    def uniform(cls, phases: int, shape) -> "Membership":
        return cls(np.full((phases,) + tuple(shape), 1.0 / phases))

    @property
    def phases(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return self.data.shape[1:]


@dataclass(frozen=True)
class LabelMap:
    labels: np.ndarray
    phases: int

    def __post_init__(self):
        object.__setattr__(self, "labels", _frozen(np.asarray(self.labels, dtype=np.int64)))

    @property
    def shape(self) -> tuple:
        return self.labels.shape


@dataclass(frozen=True)
class Codebook:
    """Phase constants, one row per phase and one column per channel."""

    values: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.values, dtype=np.float64)
        if a.ndim == 1:
            a = a[:, None]
        object.__setattr__(self, "values", _frozen(a))

    @property
    def phases(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Kernel:
    """Blur taps, anchored at the center tap; both dimensions odd."""

    taps: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.taps, dtype=np.float64)
        if a.ndim == 1:
            a = a[:, None]
        object.__setattr__(self, "taps", _frozen(a))

    @property
    def shape(self) -> tuple:
        return self.taps.shape


class Fidelity(enum.Enum):
    GAUSSIAN = "gaussian"
    POISSON = "poisson"
    IMPULSIVE = "impulsive"


@dataclass(frozen=True)
class ModelParams:
    """Model weights and solver settings.

    ``kernel=None`` means the identity operator. Defaults for ``sigma``
    and ``epsilon`` are the published settings (2 and 1e-4).
    """

    mu: float
    lam: float
    phases: int
    sigma: float = 2.0
    epsilon: float = 1e-4
    fidelity: Fidelity = Fidelity.GAUSSIAN
    kernel: Optional[Kernel] = None
    max_outer: int = 200
    max_inner: int = 100
    inner_tol: float = 1e-3
    cg_tol: float = 1e-12
    cg_max_iter: int = 500
    fcm_iters: int = 100
    baseline_mode: bool = False
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.fidelity, str):
            object.__setattr__(self, "fidelity", Fidelity(self.fidelity))


@dataclass(frozen=True)
class Violation:
    """First invariant found broken, with the offending index if any."""

    message: str
    index: Optional[tuple] = None

    def __str__(self):
        if self.index is None:
            return self.message
        return f"{self.message} at {self.index}"


def _first_index(bad: np.ndarray) -> tuple:
    return tuple(int(i) for i in np.unravel_index(int(np.argmax(bad)), bad.shape))


def _check_finite(a: np.ndarray, what: str) -> Optional[Violation]:
    bad = ~np.isfinite(a)
    if bad.any():
        return Violation(f"{what} has non-finite values", _first_index(bad))
    return None


CoreValue = Union[ImageField, ObservationMask, Membership, LabelMap, Codebook, Kernel, ModelParams]


def validate(value: CoreValue, like: Optional[tuple] = None) -> Optional[Violation]:
    """Return the first violated invariant of ``value``, or None if it is valid.

    ``like`` optionally gives the ``(H, W)`` the value must match.
    Pixel indices in reports are ``(row, col)`` (prefixed by the channel or
    phase index for planar fields).
    """
    if isinstance(value, ImageField):
        if min(value.shape) < 1 or value.channels < 1:
            return Violation(f"empty image shape {value.data.shape}")
        v = _check_finite(value.data, "image")
        if v:
            return v
    elif isinstance(value, ObservationMask):
        if value.data.ndim != 2:
            return Violation(f"mask must be 2-D, got shape {value.data.shape}")
        bad = (value.data != 0) & (value.data != 1)
        if bad.any():
            return Violation("mask value not in {0, 1}", _first_index(bad))
    elif isinstance(value, Membership):
        d = value.data
        if d.ndim != 3:
            return Violation(f"membership must be 3-D, got shape {d.shape}")
        if d.shape[0] < 2:
            return Violation(f"membership needs at least 2 phases, got {d.shape[0]}")
        v = _check_finite(d, "membership")
        if v:
            return v
        neg = d < -SIMPLEX_NEG_TOL
        if neg.any():
            return Violation("negative membership", _first_index(neg))
        off = np.abs(d.sum(axis=0) - 1.0) > SIMPLEX_SUM_TOL
        if off.any():
            return Violation("membership does not sum to 1", _first_index(off))
    elif isinstance(value, LabelMap):
        if value.phases < 1:
            return Violation("label map needs at least one phase")
        bad = (value.labels < 0) | (value.labels >= value.phases)
        if bad.any():
            return Violation(f"label outside [0, {value.phases})", _first_index(bad))
    elif isinstance(value, Codebook):
        v = _check_finite(value.values, "codebook")
        if v:
            return v
    elif isinstance(value, Kernel):
        t = value.taps
        if t.ndim != 2 or t.shape[0] % 2 == 0 or t.shape[1] % 2 == 0:
            return Violation(f"kernel dimensions must be odd, got {t.shape}")
        neg = t < 0
        if neg.any():
            return Violation("negative kernel tap", _first_index(neg))
        if abs(t.sum() - 1.0) > KERNEL_SUM_TOL:
            return Violation(f"kernel not normalized (taps sum to {t.sum():.12g})")
    elif isinstance(value, ModelParams):
        for name in ("mu", "lam", "sigma", "epsilon"):
            if not getattr(value, name) > 0:
                return Violation(f"{name} must be > 0, got {getattr(value, name)}")
        if value.phases < 2:
            return Violation(f"phases must be >= 2, got {value.phases}")
        if value.kernel is not None:
            return validate(value.kernel)
    else:
        raise TypeError(f"cannot validate {type(value).__name__}")

    if like is not None:
        shape = value.data.shape[-2:] if hasattr(value, "data") else getattr(value, "shape", None)
        if shape is not None and tuple(shape) != tuple(like):
            return Violation(f"dimensions {tuple(shape)} do not match {tuple(like)}")
    return None


def ensure_valid(value: CoreValue, like: Optional[tuple] = None) -> None:
    v = validate(value, like)
    if v is not None:
        raise InvalidValueError(f"{type(value).__name__}: {v}")


def binarize(u: Membership) -> LabelMap:
    # np.argmax returns the first maximal index, so ties go to the lowest phase
    return LabelMap(np.argmax(u.data, axis=0), u.phases)
