"""Kernel functions, grid KDE evaluation and kernel-evaluation accounting.

Instrumentation is opt-in: evaluations are only tallied while a counter is
active in the current context (see :func:`count_kernel_evals`), so the
uninstrumented path pays a single context-variable lookup per vectorised
call.  Counters live in a :class:`contextvars.ContextVar`, which keeps them
private to a thread or task.

Gaussian factors ``exp(t)`` with ``t < -700`` are returned as exact zeros.
Those values (below 1e-304) vanish in any sum at double precision, and
skipping them avoids numpy's slow underflow path.  This is not a truncation
radius: the kernel is still evaluated at every point.
"""

from __future__ import annotations

import enum
import math
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass

import numpy as np

from ._validation import check_bandwidth, check_grid, check_sample

__all__ = [
    "KernelKind",
    "DensityGrid",
    "EvalCounter",
    "count_kernel_evals",
    "reset_counter",
    "read_counter",
    "kernel_value",
    "kernel",
    "kde_on_grid",
    "kernel_matrix",
    "kernel_self_convolution",
]

INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class KernelKind(enum.Enum):
    GAUSSIAN = "gaussian"
    EPANECHNIKOV = "epanechnikov"

    @classmethod
    def parse(cls, value) -> "KernelKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"gauss": "gaussian", "normal": "gaussian", "epan": "epanechnikov"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(
                f"unknown kernel {value!r}; expected 'gaussian' or 'epanechnikov'"
            ) from None

    @property
    def support_radius(self) -> float:
        return math.inf if self is KernelKind.GAUSSIAN else 1.0

    @property
    def effective_width(self) -> float:
        """Multiple of the bandwidth used as the effective kernel width in
        the simultaneous confidence-band correction."""
        return 3.0 if self is KernelKind.GAUSSIAN else 2.0


@dataclass(frozen=True)
class DensityGrid:
    """A density discretised on a strictly increasing grid."""

    x: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        x = check_grid(self.x, "x")
        f = np.asarray(self.f, dtype=float).ravel()
        if f.shape != x.shape:
            raise ValueError(f"x and f lengths differ: {x.size} != {f.size}")
        if np.any(f < 0):
            raise ValueError("density values must be nonnegative")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "f", f)

    def __len__(self):
        return self.x.size


class EvalCounter:
    """Tally of single kernel evaluations."""

    __slots__ = ("kernel_evals",)

    def __init__(self):
        self.kernel_evals = 0

    def add(self, k: int) -> None:
        self.kernel_evals += int(k)

    def reset(self) -> None:
        self.kernel_evals = 0

    def read(self) -> int:
        return self.kernel_evals

    def __repr__(self):
        return f"EvalCounter(kernel_evals={self.kernel_evals})"


_ACTIVE: ContextVar[EvalCounter | None] = ContextVar("topokde_eval_counter", default=None)


@contextmanager
def count_kernel_evals(counter: EvalCounter | None = None):
    """Activate ``counter`` (a fresh one by default) for the enclosed block.

    >>> with count_kernel_evals() as c:
    ...     _ = kde_on_grid([0.0, 1.0], 1.0, [0.0, 0.5, 1.0])
    >>> c.read()
    6
    """
    counter = EvalCounter() if counter is None else counter
    token = _ACTIVE.set(counter)
    try:
        yield counter
    finally:
        _ACTIVE.reset(token)


def _record(k: int) -> None:
    c = _ACTIVE.get()
    if c is not None:
        c.add(k)


def reset_counter() -> None:
    c = _ACTIVE.get()
    if c is not None:
        c.reset()


def read_counter() -> int:
    """Evaluations since the active counter was last reset (0 if none active)."""
    c = _ACTIVE.get()
    return 0 if c is None else c.read()


EXP_FLOOR = -700.0


def exp_neg(t):
    """``exp(t)`` for ``t <= 0``, flushed to 0 below ``EXP_FLOOR``."""
    return np.exp(np.maximum(t, EXP_FLOOR)) * (t > EXP_FLOOR)


def _gaussian(u):
    return INV_SQRT_2PI * exp_neg(-0.5 * u * u)


def _epanechnikov(u):
    return 0.75 * np.maximum(0.0, 1.0 - u * u)


_KERNELS = {KernelKind.GAUSSIAN: _gaussian, KernelKind.EPANECHNIKOV: _epanechnikov}


def kernel(kind, u):
    """Vectorised kernel K(u); counts ``u.size`` evaluations."""
    kind = KernelKind.parse(kind)
    u = np.asarray(u, dtype=float)
    _record(u.size)
    return _KERNELS[kind](u)


def kernel_self_convolution(kind, u):
    """``(K * K)(u)``, the density of the sum of two kernel draws.

    Gaussian: ``exp(-u**2/4) / sqrt(4*pi)``.  Epanechnikov:
    ``(3/160) (2-|u|)**3 (u**2 + 6|u| + 4)`` on ``|u| <= 2``.
    Not tallied by the evaluation counter.
    """
    kind = KernelKind.parse(kind)
    u = np.asarray(u, dtype=float)
    if kind is KernelKind.GAUSSIAN:
        return exp_neg(-0.25 * u * u) / math.sqrt(4 * math.pi)
    a = np.minimum(np.abs(u), 2.0)
    return (3 / 160) * (2 - a) ** 3 * (a * a + 6 * a + 4)


def kernel_value(kind, u: float) -> float:
    u = float(u)
    if not math.isfinite(u):
        raise ValueError("u must be finite")
    return float(kernel(kind, u))


def kernel_matrix(sample, h, grid, kind):
    """Matrix of scaled kernel contributions ``K((x_i - X_j)/h) / h``.

    Rows index the sample, columns the grid, so the KDE is the column mean.
    """
    X = check_sample(sample, "sample")
    h = check_bandwidth(h)
    x = check_grid(grid)
    return kernel(kind, (x[None, :] - X[:, None]) / h) / h


def kde_on_grid(sample, h, grid, kind=KernelKind.GAUSSIAN) -> DensityGrid:
    """Kernel density estimate of ``sample`` at bandwidth ``h`` on ``grid``.

    Every (grid point, sample point) pair is evaluated; the Gaussian kernel is
    not truncated.
    """
    X = check_sample(sample, "sample")
    h = check_bandwidth(h)
    x = check_grid(grid)
    K = kernel(kind, (x[:, None] - X[None, :]) / h)
    f = K.sum(axis=1) / (X.size * h)
    return DensityGrid(x, f)
