"""Bandwidth selectors.

* :func:`tde_select` -- topological density estimation.  Sweep the
  data-adaptive bandwidth set ``{range(X)/j}``, compute the unimodal category
  of the estimate at every bandwidth, take the most prevalent category and
  return the central bandwidth among those that realise it.
* :func:`tde_select_stable_modes` -- same category estimate, but picks the
  bandwidth whose component maxima sit closest to their average positions.
* :func:`cv_select` -- least-squares cross-validation on the same bandwidth set.
* :func:`amise_bandwidth` -- asymptotic plug-in bandwidth for a known truth.

Kernel-evaluation accounting
----------------------------
With a counter active (:func:`topokde.kernels.count_kernel_evals`) the
selectors tally the work of *selection* only:

* ``tde_select``: ``n_h * n_x * n`` (one grid KDE per candidate bandwidth).
  The final estimate is reused from the sweep.
* ``cv_select``: ``2 * n_h * n**2`` (the full ``n x n`` matrices of ``K`` and
  of ``K * K`` per candidate; symmetry is not exploited).

Confidence bands and the CV estimate at the chosen bandwidth are
post-processing and are not tallied.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import erfinv

from . import kernels as _k
from ._validation import check_bandwidth, check_sample, sample_range
from .exceptions import (
    ComponentCountMismatch,
    DegenerateSample,
    GridTooShort,
)
from .kernels import DensityGrid, KernelKind
from .unimodal import sweep_decompose

__all__ = [
    "bandwidth_grid",
    "UcatProfile",
    "ConfidenceBands",
    "AmiseResult",
    "TDEResult",
    "CVResult",
    "select_from_profile",
    "tde_select",
    "tde_select_stable_modes",
    "cv_risk",
    "cv_risk_profile",
    "cv_select",
    "amise_bandwidth",
    "confidence_bands",
    "MAX_BANDWIDTHS",
]

MAX_BANDWIDTHS = 100


@contextmanager
def _uncounted():
    token = _k._ACTIVE.set(None)
    try:
        yield
    finally:
        _k._ACTIVE.reset(token)


def bandwidth_grid(spread: float, n: int, n_h: int | None = None, full: bool = False):
    """Data-adaptive bandwidth set ``spread / j`` for ``j = 1..n_h``.

    ``n_h`` defaults to ``min(n, 100)``, or ``n`` when ``full`` is set.
    """
    if spread <= 0:
        raise DegenerateSample("sample range is zero")
    if n_h is None:
        n_h = n if full else min(n, MAX_BANDWIDTHS)
    n_h = int(n_h)
    if n_h < 1:
        raise ValueError("need at least one bandwidth")
    return spread / np.arange(1, n_h + 1)


@dataclass(frozen=True)
class UcatProfile:
    """Unimodal category as a function of bandwidth, with the TDE choice."""

    bandwidths: np.ndarray
    u: np.ndarray
    m_hat: int
    selected_index: int
    h_hat: float
    degenerate: bool = False

    @property
    def support(self) -> np.ndarray:
        """Indices of the bandwidths whose estimate has category ``m_hat``."""
        return np.flatnonzero(self.u == self.m_hat)


@dataclass(frozen=True)
class ConfidenceBands:
    """Pointwise bands per significance level; rows of ``lower``/``upper``
    follow ``levels``."""

    levels: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


@dataclass(frozen=True)
class AmiseResult:
    h: float
    R: float
    c3: float
    c1: float = field(repr=False, default=float("nan"))
    c2: float = field(repr=False, default=float("nan"))


class TDEResult(NamedTuple):
    profile: UcatProfile
    estimate: DensityGrid
    bands: ConfidenceBands


class CVResult(NamedTuple):
    bandwidth: float
    estimate: DensityGrid
    bands: ConfidenceBands


def _measure_weights(bandwidths, measure):
    if measure == "counting":
        return np.ones(len(bandwidths))
    if measure == "lebesgue":
        h = np.asarray(bandwidths, dtype=float)
        if h.size == 1:
            return np.ones(1)
        # trapezoid cell widths on the (decreasing) bandwidth axis
        w = np.empty_like(h)
        w[1:-1] = (h[:-2] - h[2:]) / 2
        w[0] = (h[0] - h[1]) / 2
        w[-1] = (h[-2] - h[-1]) / 2
        return w
    raise ValueError(f"unknown measure {measure!r}; expected 'counting' or 'lebesgue'")


def select_from_profile(u, bandwidths=None, measure="counting"):
    """Most prevalent category and the index of its median bandwidth.

    Parameters
    ----------
    u : array-like of int
        Category at each candidate bandwidth, in grid order.
    bandwidths : array-like, optional
        Needed only for ``measure='lebesgue'``.
    measure : {'counting', 'lebesgue'}
        ``'counting'`` weighs every candidate equally; ``'lebesgue'`` weighs
        each by its trapezoid cell width in ``h`` (experimental).

    Returns
    -------
    m_hat : int
        Category of largest measure; ties go to the smallest category.
    index : int
        0-based index of the weighted median of ``{j : u[j] == m_hat}`` in
        grid order.  With counting measure and ``k`` members this is member
        ``ceil(k/2)`` (1-based), i.e. left of centre for even ``k``.

    >>> select_from_profile([1, 1, 2, 2, 2, 3])
    (2, 3)
    """
    u = np.asarray(u).astype(int)
    if u.size == 0:
        raise ValueError("empty profile")
    w = _measure_weights(u if bandwidths is None else bandwidths, measure)
    values = np.unique(u)
    mass = np.array([w[u == v].sum() for v in values])
    m_hat = int(values[np.flatnonzero(mass == mass.max())[0]])
    idx = np.flatnonzero(u == m_hat)
    cw = np.cumsum(w[idx])
    pos = int(np.flatnonzero(cw >= cw[-1] / 2 * (1 - 1e-12))[0])
    return m_hat, int(idx[pos])


def _degenerate(X):
    warn_x = float(np.mean(X))
    profile = UcatProfile(
        bandwidths=np.zeros(1), u=np.ones(1, dtype=int), m_hat=1,
        selected_index=0, h_hat=0.0, degenerate=True,
    )
    est = DensityGrid(np.array([warn_x]), np.ones(1))
    bands = ConfidenceBands(np.ones(1), np.ones((1, 1)), np.ones((1, 1)))
    return profile, est, bands


def _sweep(X, kind, n_bandwidths, grid_size, full):
    n = X.size
    h = bandwidth_grid(sample_range(X), n, n_bandwidths, full)
    n_x = h.size if grid_size is None else int(grid_size)
    L = np.linspace(X.min(), X.max(), n_x)
    D = L[:, None] - X[None, :]
    F = np.empty((h.size, n_x))
    u = np.empty(h.size, dtype=int)
    for j, hj in enumerate(h):
        F[j] = _k.kernel(kind, D / hj).sum(axis=1) / (n * hj)
        u[j] = sweep_decompose(F[j]).ucat
    return h, L, F, u


def tde_select(sample, kind=KernelKind.GAUSSIAN, n_bandwidths=None, grid_size=None,
               full_bandwidth_set=False, measure="counting", bands=True) -> TDEResult:
    """Topological density estimation.

    Parameters
    ----------
    sample : array-like
        Univariate data.
    kind : KernelKind or str
    n_bandwidths : int, optional
        Number of candidate bandwidths; default ``min(n, 100)``.
    grid_size : int, optional
        Points in the internal grid spanning ``[min(X), max(X)]``; defaults
        to the number of candidate bandwidths.
    full_bandwidth_set : bool
        Use all ``n`` candidates ``range(X)/j`` instead of capping at 100.
    measure : {'counting', 'lebesgue'}
        See :func:`select_from_profile`.
    bands : bool
        Compute confidence bands (skipped bands are returned empty).

    Returns
    -------
    TDEResult
        ``(profile, estimate, bands)``.  A sample with zero range yields a
        unit point mass at its mean with ``h_hat = 0`` and ``m_hat = 1``.
    """
    kind = KernelKind.parse(kind)
    X = check_sample(sample, "sample")
    if sample_range(X) == 0:
        return TDEResult(*_degenerate(X))

    h, L, F, u = _sweep(X, kind, n_bandwidths, grid_size, full_bandwidth_set)
    m_hat, sel = select_from_profile(u, h, measure)
    profile = UcatProfile(h, u, m_hat, sel, float(h[sel]))
    estimate = DensityGrid(L, F[sel])
    if bands:
        with _uncounted():
            cb = confidence_bands(X, profile.h_hat, estimate, kind)
    else:
        cb = ConfidenceBands(np.empty(0), np.empty((0, L.size)), np.empty((0, L.size)))
    return TDEResult(profile, estimate, cb)


def stable_mode_index(loci, candidates):
    """Index (into ``candidates``) whose mode-locus vector is nearest the
    mean locus vector; ties go to the first.

    ``loci`` has one row per candidate and one column per component.
    """
    loci = np.asarray(loci, dtype=float)
    dist = np.linalg.norm(loci - loci.mean(axis=0), axis=1)
    return int(candidates[int(np.flatnonzero(dist == dist.min())[0])])


def tde_select_stable_modes(sample, kind=KernelKind.GAUSSIAN, n_bandwidths=None,
                            grid_size=None, full_bandwidth_set=False,
                            measure="counting") -> UcatProfile:
    """TDE variant choosing, among bandwidths with the estimated category,
    the one whose component maxima are closest to their average loci.

    Components are matched across bandwidths by their left-to-right order.
    The average over bandwidths is the arithmetic mean over the discrete set.

    Raises
    ------
    ComponentCountMismatch
        If a decomposition in the selected set does not have exactly
        ``m_hat`` components.
    """
    kind = KernelKind.parse(kind)
    X = check_sample(sample, "sample")
    if sample_range(X) == 0:
        return _degenerate(X)[0]
    h, L, F, u = _sweep(X, kind, n_bandwidths, grid_size, full_bandwidth_set)
    m_hat, _ = select_from_profile(u, h, measure)
    cand = np.flatnonzero(u == m_hat)
    loci = []
    for j in cand:
        dec = sweep_decompose(F[j])
        if dec.ucat != m_hat:
            raise ComponentCountMismatch(
                f"bandwidth {h[j]:.6g} gives {dec.ucat} components, expected {m_hat}"
            )
        loci.append(L[dec.mode_locus])
    sel = stable_mode_index(loci, cand)
    return UcatProfile(h, u, m_hat, sel, float(h[sel]))


def _cv_risks(X, bandwidths, kind):
    """Closed-form LSCV risk for each bandwidth.

    Per bandwidth this evaluates ``K`` and ``K*K`` on all ``n**2`` ordered
    pairs of scaled differences ``u = (X_i - X_j)/h`` and returns
    ``sum(K2 - 2/(n-1) * (n*K - K0)) / (h * n**2)``.
    """
    n = X.size
    D = X[:, None] - X[None, :]
    D2 = D * D
    A = np.abs(D)
    buf = np.empty_like(D)
    sq = np.empty_like(D)
    keep = np.empty(D.shape, dtype=bool)
    out = np.empty(len(bandwidths))
    for i, h in enumerate(bandwidths):
        _k._record(2 * D2.size)
        if kind is KernelKind.GAUSSIAN:
            K0 = _k.INV_SQRT_2PI
            # exp(-u^2/2) = exp(-u^2/4)**2; flushing the quarter exponent at
            # -350 keeps the square clear of subnormals
            np.multiply(D2, -0.25 / (h * h), out=buf)
            np.greater(buf, -350.0, out=keep)
            np.maximum(buf, -350.0, out=buf)
            np.exp(buf, out=buf)
            np.multiply(buf, keep, out=buf)
            sK2 = buf.sum() / math.sqrt(4 * math.pi)
            np.multiply(buf, buf, out=sq)
            sK = K0 * sq.sum()
        else:
            K0 = 0.75
            np.multiply(A, 1.0 / h, out=buf)
            np.minimum(buf, 2.0, out=buf)
            np.multiply(buf, buf, out=sq)
            sK = 0.75 * np.maximum(0.0, 1.0 - sq).sum()
            # (2-b)^3 (b^2+6b+4) = 32 - 40 b^2 + 20 b^3 - b^5, zero at b = 2
            poly = 32.0 + sq * (-40.0 + buf * (20.0 - sq))
            sK2 = (3 / 160) * poly.sum()
        out[i] = (sK2 - (2.0 / (n - 1)) * (n * sK - n * n * K0)) / (h * n * n)
    return out


def cv_risk(sample, h, kind=KernelKind.GAUSSIAN) -> float:
    """Least-squares cross-validation risk at bandwidth ``h``.

    Unbiased (up to a constant) estimate of ISE built from pairwise kernel
    and kernel-self-convolution terms.
    """
    kind = KernelKind.parse(kind)
    X = check_sample(sample, "sample")
    h = check_bandwidth(h)
    if X.size < 2:
        raise ValueError("cross-validation needs n >= 2")
    return float(_cv_risks(X, [h], kind)[0])


def cv_risk_profile(sample, kind=KernelKind.GAUSSIAN, bandwidths=None,
                    n_bandwidths=None, full_bandwidth_set=False):
    """Risks over a bandwidth set (default: the data-adaptive set)."""
    kind = KernelKind.parse(kind)
    X = check_sample(sample, "sample")
    if X.size < 2:
        raise ValueError("cross-validation needs n >= 2")
    if bandwidths is None:
        bandwidths = bandwidth_grid(sample_range(X), X.size, n_bandwidths,
                                    full_bandwidth_set)
    bandwidths = np.asarray(bandwidths, dtype=float)
    for hj in bandwidths:
        check_bandwidth(hj)
    return bandwidths, _cv_risks(X, bandwidths, kind)


def cv_select(sample, kind=KernelKind.GAUSSIAN, n_bandwidths=None, grid_size=None,
              full_bandwidth_set=False, bands=True) -> CVResult:
    """Least-squares cross-validation over the data-adaptive bandwidth set.

    Candidates are scanned in grid order (decreasing ``h``) and the first
    strict minimum wins.  The estimate is returned on ``grid_size`` points
    spanning the sample (default: the number of candidates).
    """
    kind = KernelKind.parse(kind)
    X = check_sample(sample, "sample")
    if X.size < 2 or sample_range(X) == 0:
        raise DegenerateSample("cross-validation needs a sample with positive range")
    h, risk = cv_risk_profile(X, kind, None, n_bandwidths, full_bandwidth_set)
    best, best_risk = math.nan, math.inf
    for hj, r in zip(h, risk):
        if r < best_risk:
            best, best_risk = float(hj), r
    n_x = h.size if grid_size is None else int(grid_size)
    L = np.linspace(X.min(), X.max(), n_x)
    with _uncounted():
        estimate = _k.kde_on_grid(X, best, L, kind)
        if bands:
            cb = confidence_bands(X, best, estimate, kind)
        else:
            cb = ConfidenceBands(np.empty(0), np.empty((0, n_x)), np.empty((0, n_x)))
    return CVResult(best, estimate, cb)


_AMISE_CONSTANTS = {
    # Gaussian c2 is sqrt(pi)/2, not the kernel roughness 1/(2 sqrt(pi));
    # kept for comparability, see README
    KernelKind.GAUSSIAN: (1.0, 0.5 * math.sqrt(math.pi)),
    KernelKind.EPANECHNIKOV: (1 / 5, 3 / 5),
}


def amise_constants(kind):
    return _AMISE_CONSTANTS[KernelKind.parse(kind)]


def amise_bandwidth(truth, n, kind=KernelKind.GAUSSIAN) -> AmiseResult:
    """AMISE plug-in bandwidth for a density known on a uniform grid.

    The curvature roughness ``c3 = sum(f'')**2 * dx`` uses the central second
    difference; ``h = c1**-0.4 * c2**0.2 * c3**-0.2 * n**-0.2``.
    """
    kind = KernelKind.parse(kind)
    if isinstance(truth, DensityGrid):
        x, f = truth.x, truth.f
    else:
        x, f = (np.asarray(a, dtype=float).ravel() for a in truth)
    if x.size < 3:
        raise GridTooShort("need at least 3 grid points for a second difference")
    dxs = np.diff(x)
    dx = float(dxs.mean())
    if not np.allclose(dxs, dx, rtol=1e-6, atol=0):
        raise ValueError("truth grid must be uniform")
    if n < 1:
        raise ValueError("n must be positive")
    c1, c2 = _AMISE_CONSTANTS[kind]
    d2 = np.convolve(f, [1.0, -2.0, 1.0], mode="valid") / dx**2
    c3 = float(np.sum(d2**2) * dx)
    h = c1**-0.4 * c2**0.2 * c3**-0.2 * float(n) ** -0.2
    R = 0.25 * h**4 * c3 + c2 / (h * n)
    return AmiseResult(h=h, R=R, c3=c3, c1=c1, c2=c2)


def band_levels(n: int) -> np.ndarray:
    """Significance levels ``10**-1 .. 10**-d`` with ``d = ceil(log10 n)``."""
    d = math.ceil(math.log10(n)) if n > 1 else 0
    return np.logspace(-1, -d, d) if d > 0 else np.empty(0)


def confidence_bands(sample, h, estimate: DensityGrid, kind=KernelKind.GAUSSIAN
                     ) -> ConfidenceBands:
    """Pointwise bands from the spread of individual kernel contributions.

    The standard error at each grid point is ``sqrt(s2 / n)`` with ``s2`` the
    (n-1)-normalised variance of the ``n`` scaled kernel contributions.  The
    level-``a`` half-width is ``q * se`` with
    ``q = erfinv((1 - a)**(1/m)) / sqrt(2)``, where ``m = range(X) / w`` is the
    number of effectively independent kernel widths ``w`` (3h Gaussian, 2h
    Epanechnikov) across the data.
    """
    kind = KernelKind.parse(kind)
    X = check_sample(sample, "sample")
    h = check_bandwidth(h)
    n = X.size
    x, f = estimate.x, estimate.f
    levels = band_levels(n)
    if levels.size == 0:
        return ConfidenceBands(levels, np.empty((0, x.size)), np.empty((0, x.size)))
    Y = _k.kernel_matrix(X, h, x, kind)
    s2 = Y.var(axis=0, ddof=1)
    se = np.sqrt(s2 / n)
    m = sample_range(X) / (kind.effective_width * h)
    q = erfinv((1 - levels) ** (1 / m)) / math.sqrt(2)
    lower = f[None, :] - q[:, None] * se[None, :]
    upper = f[None, :] + q[:, None] * se[None, :]
    return ConfidenceBands(levels, lower, upper)
