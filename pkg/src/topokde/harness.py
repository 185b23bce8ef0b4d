"""Monte-Carlo evaluation of bandwidth selectors against known densities.

Each task is one ``(family, n, replicate)`` triple: draw a sample from a
generator seeded by ``(master seed, family, n, replicate)``, then for every
kernel compute the ISE-optimal bandwidth over ``{range(X)/j : 1 <= j <= n}``
and run every selector.  Tasks share no state, so the record set is the same
for any degree of parallelism; outputs are sorted by key before writing.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import densities
from ._validation import check_bandwidth, check_sample, sample_range
from .bandwidth import cv_select, tde_select, tde_select_stable_modes
from .exceptions import DegenerateSample, EmptyRecords
from .kernels import (
    INV_SQRT_2PI,
    DensityGrid,
    KernelKind,
    count_kernel_evals,
    EXP_FLOOR,
    kde_on_grid,
)
from .unimodal import count_local_maxima, ucat

__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "HistogramMatrix",
    "ise",
    "ise_profile",
    "empirical_h_opt",
    "derive_seed",
    "run_experiment",
    "summarize",
    "histogram_export",
    "SELECTORS",
    "MEASURES",
    "RECORD_SCHEMA_VERSION",
    "SUMMARY_SCHEMA_VERSION",
]

RECORD_SCHEMA_VERSION = 1
SUMMARY_SCHEMA_VERSION = 1

SELECTORS = ("tde", "tde-stable", "cv")
MEASURES = ("h_diff", "ise_hat", "c45", "ucat", "local_max")
C45_RANGE = (-4.0, 0.25)


@dataclass(frozen=True)
class ExperimentConfig:
    N: int = 250
    sizes: tuple = (25, 50, 100, 200, 500)
    kernels: tuple = ("gaussian", "epanechnikov")
    selectors: tuple = ("tde", "cv")
    families: tuple = field(default_factory=lambda: tuple(densities.family_names()))
    seed: int = 0
    dispersion: str = "variance"
    grid_points: int = densities.SUITE_GRID[2]
    threads: int = 1

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be at least 1")
        if not self.sizes or min(self.sizes) < 2:
            raise ValueError("all sample sizes must be at least 2")
        if not self.selectors:
            raise ValueError("at least one selector is required")
        for s in self.selectors:
            if s not in SELECTORS:
                raise ValueError(f"unknown selector {s!r}; expected one of {SELECTORS}")
        for k in self.kernels:
            KernelKind.parse(k)
        if not self.families:
            raise ValueError("at least one family is required")
        for name in self.families:
            densities.family(name, self.dispersion)
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")


@dataclass
class RunRecord:
    """Metrics of one selector on one replicate.

    ``c45`` is ``-inf`` when the two ISE values coincide; it is written as
    JSON ``null``.  Failed runs keep their key fields, set ``failed`` and
    carry the error message.
    """

    family: str
    kernel: str
    selector: str
    n: int
    replicate: int
    seed: int
    h_hat: float = math.nan
    h_opt: float = math.nan
    h_diff: float = math.nan
    ise_hat: float = math.nan
    ise_opt: float = math.nan
    c45: float = math.nan
    ucat: int = -1
    local_max: int = -1
    true_ucat: int = -1
    true_local_max: int = -1
    kernel_evals: int = 0
    failed: bool = False
    error: str | None = None

    def to_json(self) -> str:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = None
        return json.dumps(d, separators=(",", ":"), allow_nan=False)

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        d = json.loads(line)
        known = {f.name for f in fields(cls)}
        d = {k: v for k, v in d.items() if k in known}
        for k in ("h_hat", "h_opt", "h_diff", "ise_hat", "ise_opt"):
            if d.get(k) is None:
                d[k] = math.nan
        if d.get("c45") is None:
            d["c45"] = math.nan if d.get("failed") else -math.inf
        return cls(**d)


def _kde_rows(x, X, bandwidths, kind):
    """KDE at every bandwidth on grid ``x``; one row per bandwidth.

    Works in preallocated buffers; the same arithmetic path serves single
    bandwidths and whole profiles, so both give bit-identical values.
    """
    n = X.size
    D = x[:, None] - X[None, :]
    out = np.empty((len(bandwidths), x.size))
    buf = np.empty_like(D)
    if kind is KernelKind.GAUSSIAN:
        D2 = D * D
        keep = np.empty(D.shape, dtype=bool)
        for j, h in enumerate(bandwidths):
            np.multiply(D2, -0.5 / (h * h), out=buf)
            np.greater(buf, EXP_FLOOR, out=keep)
            np.maximum(buf, EXP_FLOOR, out=buf)
            np.exp(buf, out=buf)
            np.multiply(buf, keep, out=buf)
            out[j] = buf.sum(axis=1) * (INV_SQRT_2PI / (n * h))
    else:
        A2 = D * D
        for j, h in enumerate(bandwidths):
            np.multiply(A2, -1.0 / (h * h), out=buf)
            buf += 1.0
            np.maximum(buf, 0.0, out=buf)
            out[j] = buf.sum(axis=1) * (0.75 / (n * h))
    return out


def _ise_from_rows(x, f, rows):
    # forward-difference Riemann sum that skips the first grid point
    return (((f[1:] - rows[:, 1:]) ** 2) * np.diff(x)).sum(axis=1)


def ise(truth: DensityGrid, sample, h, kind=KernelKind.GAUSSIAN) -> float:
    """Integrated squared error of the KDE at ``h`` against ``truth``,
    as a Riemann sum over forward grid differences (first point skipped)."""
    kind = KernelKind.parse(kind)
    X = check_sample(sample, "sample")
    h = check_bandwidth(h)
    rows = _kde_rows(truth.x, X, [h], kind)
    return float(_ise_from_rows(truth.x, truth.f, rows)[0])


def ise_profile(truth: DensityGrid, sample, bandwidths, kind=KernelKind.GAUSSIAN):
    kind = KernelKind.parse(kind)
    X = check_sample(sample, "sample")
    bandwidths = np.asarray(bandwidths, dtype=float)
    for h in bandwidths:
        check_bandwidth(h)
    return _ise_from_rows(truth.x, truth.f, _kde_rows(truth.x, X, bandwidths, kind))


def empirical_h_opt(truth: DensityGrid, sample, kind=KernelKind.GAUSSIAN):
    """ISE-minimising bandwidth over ``{range(X)/j : 1 <= j <= n}``.

    Returns ``(h_opt, ise_at_h_opt)``; the first minimum in grid order wins.
    """
    X = check_sample(sample, "sample")
    spread = sample_range(X)
    if spread == 0:
        raise DegenerateSample("sample range is zero")
    h = spread / np.arange(1, X.size + 1)
    risks = ise_profile(truth, X, h, kind)
    j = int(np.argmin(risks))
    return float(h[j]), float(risks[j])


def derive_seed(master: int, family: str, n: int, replicate: int) -> int:
    """64-bit seed for one task, independent of scheduling."""
    ss = np.random.SeedSequence(
        entropy=int(master), spawn_key=(zlib.crc32(family.encode()), int(n), int(replicate))
    )
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)


def _c45(ise_hat, ise_opt):
    d = abs(ise_hat - ise_opt)
    return -math.inf if d == 0 else math.log10(d)


def _run_selector(selector, X, kind, x):
    """Returns ``(h_hat, ucat, local_max, kernel_evals)``.

    TDE reports its own category estimate and counts maxima of its estimate
    on its internal grid; CV is assessed on the truth grid.
    """
    with count_kernel_evals() as counter:
        if selector == "tde":
            res = tde_select(X, kind, bands=False)
            h_hat, m_hat, est = res.profile.h_hat, res.profile.m_hat, res.estimate.f
        elif selector == "tde-stable":
            prof = tde_select_stable_modes(X, kind)
            h_hat, m_hat = prof.h_hat, prof.m_hat
            est = None
        else:
            h_hat = cv_select(X, kind, bands=False).bandwidth
            m_hat = est = None
    evals = counter.read()
    if h_hat <= 0:
        raise DegenerateSample("selector returned a zero bandwidth")
    if est is None:
        L = np.linspace(X.min(), X.max(), min(X.size, 100))
        est = kde_on_grid(X, h_hat, x if selector == "cv" else L, kind).f
    if m_hat is None:
        m_hat = ucat(est)
    return h_hat, int(m_hat), count_local_maxima(est), evals


def _run_task(cfg: ExperimentConfig, family_name: str, n: int, replicate: int, truths):
    spec = densities.family(family_name, cfg.dispersion)
    seed = derive_seed(cfg.seed, family_name, n, replicate)
    X = densities.sample(spec, n, np.random.default_rng(seed))
    truth, t_ucat, t_lmax = truths[family_name]
    out = []
    for kname in cfg.kernels:
        kind = KernelKind.parse(kname)
        base = dict(family=family_name, kernel=kind.value, n=n, replicate=replicate,
                    seed=seed, true_ucat=t_ucat, true_local_max=t_lmax)
        try:
            h_opt, ise_opt = empirical_h_opt(truth, X, kind)
        except Exception as exc:  # noqa: BLE001 -- record and continue
            out.extend(RunRecord(selector=s, failed=True, error=repr(exc), **base)
                       for s in cfg.selectors)
            continue
        for sel in cfg.selectors:
            try:
                h_hat, u, lmax, evals = _run_selector(sel, X, kind, truth.x)
                ise_hat = ise(truth, X, h_hat, kind)
                out.append(RunRecord(
                    selector=sel, h_hat=h_hat, h_opt=h_opt, h_diff=h_hat - h_opt,
                    ise_hat=ise_hat, ise_opt=ise_opt, c45=_c45(ise_hat, ise_opt),
                    ucat=u, local_max=lmax, kernel_evals=evals, **base))
            except Exception as exc:  # noqa: BLE001
                out.append(RunRecord(selector=sel, h_opt=h_opt, ise_opt=ise_opt,
                                     failed=True, error=repr(exc), **base))
    return out


def _sort_key(cfg):
    fam = {f: i for i, f in enumerate(cfg.families)}
    ker = {KernelKind.parse(k).value: i for i, k in enumerate(cfg.kernels)}
    sel = {s: i for i, s in enumerate(cfg.selectors)}
    return lambda r: (fam[r.family], r.n, r.replicate, ker[r.kernel], sel[r.selector])


def thread_cap(requested: int | None = None) -> int:
    """Worker count: ``requested`` (default 1) capped by ``TDE_THREADS``."""
    n = 1 if requested is None else int(requested)
    cap = os.environ.get("TDE_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def run_experiment(cfg: ExperimentConfig, sink=None, progress=None) -> list[RunRecord]:
    """Run the full sweep; returns records sorted by
    ``(family, n, replicate, kernel, selector)``.

    ``sink`` is called with each task's records as they complete, in
    completion order.  Selector failures become records with ``failed=True``;
    the sweep never aborts on them.
    """
    grid = densities.suite_grid(cfg.grid_points)
    truths = {}
    for name in dict.fromkeys(cfg.families):
        t = densities.pdf_on_grid(densities.family(name, cfg.dispersion), grid)
        truths[name] = (t, ucat(t.f), count_local_maxima(t.f))

    tasks = [(f, n, r) for n in cfg.sizes for r in range(cfg.N) for f in cfg.families]
    records = []

    def collect(batch):
        records.extend(batch)
        if sink is not None:
            for rec in batch:
                sink(rec)
        if progress is not None:
            progress(len(records))

    threads = thread_cap(cfg.threads)
    if threads == 1:
        for t in tasks:
            collect(_run_task(cfg, *t, truths))
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_task, cfg, *t, truths) for t in tasks]
            for fut in futures:
                collect(fut.result())
    records.sort(key=_sort_key(cfg))
    return records


def write_records(records, fh) -> None:
    for r in records:
        fh.write(r.to_json())
        fh.write("\n")


def read_records(fh) -> list[RunRecord]:
    return [RunRecord.from_json(line) for line in fh if line.strip()]


SUMMARY_FIELDS = [
    "family", "kernel", "selector", "n", "count", "failures",
    "c1", "c2", "c3", "c4", "c5",
    "h_diff_q10", "h_diff_q50", "h_diff_q90",
    "ise_hat_q10", "ise_hat_q50", "ise_hat_q90",
    "c45_q10", "c45_q50", "c45_q90",
    "mean_ucat", "true_ucat", "ucat_correct",
    "mean_local_max", "true_local_max", "local_max_correct",
    "mean_kernel_evals",
]


def summarize(records) -> list[dict]:
    """One row per ``(family, kernel, selector, n)``.

    ``c1 = mean(h_hat - h_opt)``, ``c2``/``c3`` the mean and standard
    deviation of ``ISE(h_hat)``, ``c4 = mean(10**(2*c45))``,
    ``c5 = mean(10**c45)``; ``*_correct`` are empirical probabilities that the
    estimate's category (number of local maxima) equals the truth's.
    Failed records are counted but excluded from the statistics.
    """
    records = list(records)
    if not records:
        raise EmptyRecords("no records to summarize")
    groups: dict[tuple, list[RunRecord]] = {}
    for r in records:
        groups.setdefault((r.family, r.kernel, r.selector, r.n), []).append(r)

    rows = []
    for (fam, ker, sel, n), rs in groups.items():
        ok = [r for r in rs if not r.failed]
        row = dict(family=fam, kernel=ker, selector=sel, n=n, count=len(rs),
                   failures=len(rs) - len(ok))
        if ok:
            hd = np.array([r.h_diff for r in ok])
            ih = np.array([r.ise_hat for r in ok])
            c45 = np.array([r.c45 for r in ok])
            row.update(
                c1=float(hd.mean()),
                c2=float(ih.mean()),
                c3=float(ih.std(ddof=1)) if ih.size > 1 else 0.0,
                c4=float(np.mean(10.0 ** (2 * c45))),
                c5=float(np.mean(10.0 ** c45)),
            )
            for name, arr in (("h_diff", hd), ("ise_hat", ih), ("c45", c45)):
                # interpolating across -inf would give nan
                method = "linear" if np.all(np.isfinite(arr)) else "lower"
                q = np.quantile(arr, [0.1, 0.5, 0.9], method=method)
                row.update({f"{name}_q10": float(q[0]), f"{name}_q50": float(q[1]),
                            f"{name}_q90": float(q[2])})
            row.update(
                mean_ucat=float(np.mean([r.ucat for r in ok])),
                true_ucat=ok[0].true_ucat,
                ucat_correct=float(np.mean([r.ucat == r.true_ucat for r in ok])),
                mean_local_max=float(np.mean([r.local_max for r in ok])),
                true_local_max=ok[0].true_local_max,
                local_max_correct=float(np.mean([r.local_max == r.true_local_max for r in ok])),
                mean_kernel_evals=float(np.mean([r.kernel_evals for r in ok])),
            )
        rows.append(row)
    return rows


def write_summary(rows, fh) -> None:
    w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS, restval="", lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


@dataclass
class HistogramMatrix:
    """Two overlaid histograms with one column per group value.

    ``counts_*`` are raw bin counts (bins x columns).  ``a``/``b`` are the
    display matrices: each column divided by its sum, then the whole matrix
    affinely mapped onto ``[0, 1]``.
    """

    measure: str
    edges: np.ndarray
    columns: list
    labels: tuple
    counts_a: np.ndarray
    counts_b: np.ndarray
    column_normalized_a: np.ndarray
    column_normalized_b: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi"]
                   + [f"{self.labels[0]}:{c}" for c in self.columns]
                   + [f"{self.labels[1]}:{c}" for c in self.columns])
        for i in range(self.edges.size - 1):
            w.writerow([repr(float(self.edges[i])), repr(float(self.edges[i + 1]))]
                       + [repr(float(v)) for v in self.a[i]]
                       + [repr(float(v)) for v in self.b[i]])
        return buf.getvalue()


def _column_normalize(A):
    s = A.sum(axis=0, keepdims=True)
    return np.divide(A, s, out=np.zeros_like(A, dtype=float), where=s > 0)


def affine_unit(A):
    """Map ``A`` affinely onto ``[0, 1]``; a constant matrix maps to zeros."""
    lo, hi = float(A.min()), float(A.max())
    return (A - lo) / (hi - lo + (hi == lo))


def _measure_values(records, measure):
    vals = np.array([getattr(r, measure) for r in records], dtype=float)
    if measure == "c45":
        # exact ties with h_opt land in the lowest bin
        vals = np.where(vals == -np.inf, C45_RANGE[0], vals)
    return vals


def histogram_export(records, measure, bins=50, column="n", selectors=("tde", "cv"),
                     lo=None, hi=None) -> HistogramMatrix:
    """Column-normalised overlaid histograms of ``measure`` for two selectors.

    Parameters
    ----------
    records : iterable of RunRecord
        Typically one family and kernel (column ``'n'``), or one ``k``, kernel
        and ``n`` across ``m`` (column ``'family'``).
    measure : {'h_diff', 'ise_hat', 'c45', 'ucat', 'local_max'}
    bins : int
        Number of equal-width bins.  ``c45`` uses the fixed range
        ``[-4, 0.25]``; ``ise_hat`` starts at 0; ``h_diff`` spans the data.
        ``ucat``/``local_max`` use unit bins centred on the integers 1..20.
    """
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}; expected one of {MEASURES}")
    records = [r for r in records if not r.failed]
    if not records:
        raise EmptyRecords("no successful records to bin")
    sa, sb = selectors
    cols = sorted({getattr(r, column) for r in records},
                  key=(lambda c: c) if column != "family" else _family_order)
    vals = _measure_values(records, measure)
    finite = vals[np.isfinite(vals)]

    if measure in ("ucat", "local_max"):
        top = max(20, int(finite.max()) if finite.size else 20)
        edges = np.arange(0.5, top + 1.0, 1.0)
    else:
        if measure == "c45":
            dlo, dhi = C45_RANGE
        elif measure == "ise_hat":
            dlo, dhi = 0.0, float(finite.max()) if finite.size else 1.0
        else:
            dlo = float(finite.min()) if finite.size else 0.0
            dhi = float(finite.max()) if finite.size else 1.0
        lo = dlo if lo is None else lo
        hi = dhi if hi is None else hi
        if not hi > lo:
            lo, hi = lo - 0.5, lo + 0.5
        edges = np.linspace(lo, hi, bins + 1)

    def counts(sel):
        M = np.zeros((edges.size - 1, len(cols)))
        for j, c in enumerate(cols):
            rs = [r for r in records if r.selector == sel and getattr(r, column) == c]
            v = _measure_values(rs, measure) if rs else np.empty(0)
            M[:, j] = np.histogram(v[np.isfinite(v)], bins=edges)[0]
        return M

    A, B = counts(sa), counts(sb)
    nA, nB = _column_normalize(A), _column_normalize(B)
    return HistogramMatrix(measure, edges, cols, (sa, sb), A, B, nA, nB,
                           affine_unit(nA), affine_unit(nB))


def _family_order(name):
    names = densities.family_names()
    if name in names:
        return (0, names.index(name), 0.0)
    spec = densities.family(name)
    return (1, getattr(spec, "m", 0), getattr(spec, "k", 0.0))
