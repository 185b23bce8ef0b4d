"""Command-line interface: ``topokde {estimate,decompose,bench,report}``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 benchmark finished with failed records.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__, densities, harness
from .bandwidth import confidence_bands, cv_select, tde_select, tde_select_stable_modes
from .exceptions import (
    EmptyInput,
    EmptyRecords,
    InvalidFamily,
    NegativeInput,
    ParseError,
    TopoKDEError,
)
from .kernels import KernelKind, kde_on_grid
from .svg import heat_strip_svg
from .unimodal import sweep_decompose, ucat

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PARTIAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Help(argparse.ArgumentDefaultsHelpFormatter):
    """Append defaults unless the help text already names one or it is None."""

    def _get_help_string(self, action):
        text = action.help or ""
        if "default" in text or action.default in (None, False):
            return text
        return super()._get_help_string(action)


class _Parser(argparse.ArgumentParser):
    """Parser that exits with status 1 on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- parsing


def _is_number(tok: str) -> bool:
    try:
        float(tok)
    except ValueError:
        return False
    return True


def read_columns(path, ncols: int, *, min_cols: int | None = None) -> np.ndarray:
    """Read a numeric table, skipping blank and ``#`` lines.

    Fields may be separated by commas or whitespace.  A first content line
    with no numeric field is taken as a header.  Only the first ``ncols``
    columns are kept; rows need at least ``min_cols`` (default ``ncols``).
    """
    min_cols = ncols if min_cols is None else min_cols
    src = nullcontext(sys.stdin) if str(path) == "-" else open(path, encoding="utf-8")
    rows = []
    seen_content = False
    with src as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            toks = s.replace(",", " ").split()
            if not seen_content:
                seen_content = True
                if not any(_is_number(t) for t in toks):
                    continue
            if len(toks) < min_cols:
                raise ParseError(f"expected {min_cols} column(s), got {len(toks)}", lineno)
            vals = []
            for t in toks[:ncols]:
                try:
                    v = float(t)
                except ValueError:
                    raise ParseError(f"not a number: {t!r}", lineno) from None
                if not np.isfinite(v):
                    raise ParseError(f"non-finite value {t!r}", lineno)
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise EmptyInput(f"{path}: no numeric data")
    return np.array(rows, dtype=float)


def _split_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in _split_list(text)]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from None


def _open_out(path):
    if path is None or str(path) == "-":
        return nullcontext(sys.stdout)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", encoding="utf-8", newline="")


def _r(v) -> str:
    return repr(float(v))


# ---------------------------------------------------------------- estimate


def _estimate(X, kernel, selector, nh, measure):
    """Returns ``(meta, x, f, levels, lower, upper)``."""
    kind = KernelKind.parse(kernel)
    if np.ptp(X) == 0:
        print("warning: sample has zero range; writing a point mass with h_hat = 0",
              file=sys.stderr)
        res = tde_select(X, kind)
        meta = dict(selector=selector, kernel=kind.value, n=int(X.size), n_h=0,
                    h_hat=0.0, m_hat=1, u_profile=[1], degenerate=True)
        return meta, res.estimate.x, res.estimate.f, np.empty(0), None, None

    if selector == "cv":
        res = cv_select(X, kind, n_bandwidths=nh)
        est, bands, h_hat = res.estimate, res.bands, res.bandwidth
        u_profile, m_hat = [], ucat(est.f)
        n_h = est.x.size
    else:
        res = tde_select(X, kind, n_bandwidths=nh, measure=measure)
        prof, est, bands = res.profile, res.estimate, res.bands
        if selector == "tde-stable":
            prof = tde_select_stable_modes(X, kind, n_bandwidths=nh, measure=measure)
            est = kde_on_grid(X, prof.h_hat, est.x, kind)
            bands = confidence_bands(X, prof.h_hat, est, kind)
        h_hat, m_hat = prof.h_hat, prof.m_hat
        u_profile = [int(v) for v in prof.u]
        n_h = prof.bandwidths.size
    meta = dict(selector=selector, kernel=kind.value, n=int(X.size), n_h=int(n_h),
                h_hat=float(h_hat), m_hat=int(m_hat), u_profile=u_profile,
                degenerate=False)
    return meta, est.x, est.f, bands.levels, bands.lower, bands.upper


def _level_name(a: float) -> str:
    return f"{a:g}"


def cmd_estimate(args) -> int:
    data = read_columns(args.input, 1)[:, 0]
    meta, x, f, levels, lower, upper = _estimate(data, args.kernel, args.selector,
                                                 args.nh, args.measure)
    meta["levels"] = [float(a) for a in levels]
    with _open_out(args.out) as fh:
        if args.format == "ndjson":
            fh.write(json.dumps(dict(meta, record="meta"), separators=(",", ":")) + "\n")
            for i in range(x.size):
                row = dict(record="point", x=float(x[i]), f=float(f[i]))
                for j, a in enumerate(levels):
                    row[f"lower_{_level_name(a)}"] = float(lower[j, i])
                    row[f"upper_{_level_name(a)}"] = float(upper[j, i])
                fh.write(json.dumps(row, separators=(",", ":")) + "\n")
        elif args.format == "csv":
            fh.write("# topokde estimate\n")
            for key in ("selector", "kernel", "n", "n_h", "h_hat", "m_hat"):
                fh.write(f"# {key}={meta[key]!r}\n" if isinstance(meta[key], float)
                         else f"# {key}={meta[key]}\n")
            fh.write("# u_profile=" + " ".join(map(str, meta["u_profile"])) + "\n")
            fh.write("# levels=" + " ".join(_level_name(a) for a in levels) + "\n")
            header = ["x", "f"]
            for a in levels:
                header += [f"lower_{_level_name(a)}", f"upper_{_level_name(a)}"]
            fh.write(",".join(header) + "\n")
            for i in range(x.size):
                row = [_r(x[i]), _r(f[i])]
                for j in range(levels.size):
                    row += [_r(lower[j, i]), _r(upper[j, i])]
                fh.write(",".join(row) + "\n")
        else:
            raise UsageError("estimate supports --format csv or ndjson")
    return EXIT_OK


# ---------------------------------------------------------------- decompose


def cmd_decompose(args) -> int:
    table = read_columns(args.input, 2)
    x, f = table[:, 0], table[:, 1]
    if np.any(f < 0):
        raise NegativeInput(f"{args.input}: f column has negative values")
    dec = sweep_decompose(f)
    U = dec.components
    if args.verify:
        err = float(np.max(np.abs(U.sum(axis=0) - f))) if U.size else float(np.max(np.abs(f)))
        scale = float(np.max(np.abs(f)))
        if err > 1e-9 * scale:
            print(f"verify: reconstruction error {err:.3g} exceeds 1e-9 relative",
                  file=sys.stderr)
            return EXIT_DATA
        print(f"verify: ok (max abs error {err:.3g})", file=sys.stderr)
    print(f"ucat={dec.ucat}")
    if args.out is None:
        # stdout carries both; keep the table parseable
        sys.stdout.write(f"# ucat={dec.ucat}\n")
    with _open_out(args.out) as fh:
        fh.write(",".join(["x", "f"] + [f"u{j + 1}" for j in range(dec.ucat)]) + "\n")
        for i in range(x.size):
            fh.write(",".join([_r(x[i]), _r(f[i])] + [_r(U[j, i]) for j in range(dec.ucat)])
                     + "\n")
    return EXIT_OK


# ---------------------------------------------------------------- bench / report


def _hist_selectors(records):
    present = [s for s in harness.SELECTORS if any(r.selector == s for r in records)]
    rest = [s for s in ("tde", "cv", "tde-stable") if s not in present]
    pair = (present + rest)[:2]
    return tuple(pair)


def _safe(name: str) -> str:
    return name.replace(":", "-")


def write_exports(records, out: Path, measures, fmt: str) -> list[str]:
    """Summary CSV plus histogram matrices (and SVGs); returns written paths
    relative to ``out``."""
    written = []
    ok = [r for r in records if not r.failed]
    with open(out / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        harness.write_summary(harness.summarize(records), fh)
    written.append("summary.csv")
    if not ok:
        return written
    hist_dir = out / "hist"
    hist_dir.mkdir(exist_ok=True)
    sels = _hist_selectors(ok)
    groups = {}
    for r in ok:
        groups.setdefault(("family", r.family, r.kernel), []).append(r)
        spec = densities.family(r.family)
        if isinstance(spec, densities.GridFamily):
            groups.setdefault(("k", f"fkm{spec.k:g}", r.kernel, r.n), []).append(r)
    for key, rs in groups.items():
        if key[0] == "family":
            stem, column = f"{_safe(key[1])}__{key[2]}", "n"
        else:
            stem, column = f"{key[1]}__{key[2]}__n{key[3]}", "family"
        for m in measures:
            h = harness.histogram_export(rs, m, column=column, selectors=sels)
            name = f"hist/{m}__{stem}.csv"
            (out / name).write_text(h.to_csv(), encoding="utf-8")
            written.append(name)
            if fmt == "svg":
                name = f"hist/{m}__{stem}.svg"
                (out / name).write_text(heat_strip_svg(h, title=f"{m} {stem}"),
                                        encoding="utf-8")
                written.append(name)
    return written


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("TDE_THREADS")
    return max(1, int(env)) if env and env.isdigit() else 1


def _config(args) -> harness.ExperimentConfig:
    try:
        families = densities.parse_families(args.families)
        sizes = tuple(_int_list(args.n))
        kernels = ("gaussian", "epanechnikov") if args.kernel == "both" else (args.kernel,)
        selectors = tuple(args.selector) if args.selector else ("tde", "cv")
        return harness.ExperimentConfig(
            N=args.N, sizes=sizes, kernels=kernels, selectors=selectors,
            families=tuple(families), seed=args.seed, dispersion=args.dispersion,
            threads=_threads(args),
        )
    except (InvalidFamily, ValueError) as exc:
        raise UsageError(f"invalid benchmark configuration: {exc}") from None


def cmd_bench(args) -> int:
    cfg = _config(args)
    measures = _measures(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    total = len(cfg.families) * len(cfg.sizes) * cfg.N
    done = [0]

    def progress(_):
        done[0] += 1
        if args.progress:
            print(f"\r{done[0]}/{total} replicates", end="", file=sys.stderr, flush=True)

    records = harness.run_experiment(cfg, progress=progress)
    if args.progress:
        print(file=sys.stderr)
    with open(out / "records.ndjson", "w", encoding="utf-8", newline="") as fh:
        harness.write_records(records, fh)
    written = ["records.ndjson"] + write_exports(records, out, measures, args.format)
    failures = sum(r.failed for r in records)
    manifest = dict(
        tool="topokde", version=__version__,
        record_schema=harness.RECORD_SCHEMA_VERSION,
        summary_schema=harness.SUMMARY_SCHEMA_VERSION,
        config=dict(N=cfg.N, sizes=list(cfg.sizes), kernels=list(cfg.kernels),
                    selectors=list(cfg.selectors), families=list(cfg.families),
                    seed=cfg.seed, dispersion=cfg.dispersion),
        records=len(records), failures=failures, files=written,
    )
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"{len(records)} records, {failures} failed -> {out}")
    return EXIT_PARTIAL if failures else EXIT_OK


def _measures(args):
    if not args.measure:
        return list(harness.MEASURES)
    ms = []
    for m in args.measure:
        ms.extend(_split_list(m))
    for m in ms:
        if m not in harness.MEASURES:
            raise UsageError(f"unknown measure {m!r}; expected one of {', '.join(harness.MEASURES)}")
    return ms


def cmd_report(args) -> int:
    with open(args.records, encoding="utf-8") as fh:
        try:
            records = harness.read_records(fh)
        except (ValueError, TypeError) as exc:
            raise ParseError(f"bad record: {exc}") from None
    if not records:
        raise EmptyRecords(f"{args.records}: no records")
    if args.out is None:
        harness.write_summary(harness.summarize(records), sys.stdout)
        return EXIT_OK
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_exports(records, out, _measures(args), args.format)
    return EXIT_OK


# ---------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="topokde", description="Topological bandwidth selection for KDE.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    kernels = [k.value for k in KernelKind]

    e = sub.add_parser("estimate", help="select a bandwidth and write the estimate",
                       formatter_class=_Help)
    e.add_argument("input", help="file with one number per line ('-' for stdin)")
    e.add_argument("--kernel", choices=kernels, default="gaussian", help="kernel")
    e.add_argument("--selector", choices=harness.SELECTORS, default="tde",
                   help="bandwidth selector")
    e.add_argument("--nh", type=int, default=None,
                   help="number of candidate bandwidths (default min(n, 100))")
    e.add_argument("--measure", choices=("counting", "lebesgue"), default="counting",
                   help="measure on the bandwidth axis")
    e.add_argument("--format", choices=("csv", "ndjson"), default="csv", help="output format")
    e.add_argument("--out", default=None, help="output file (default stdout)")
    e.set_defaults(func=cmd_estimate)

    d = sub.add_parser("decompose", help="unimodal decomposition of a sampled curve",
                       formatter_class=_Help)
    d.add_argument("input", help="file with x and f columns ('-' for stdin)")
    d.add_argument("--out", default=None, help="output CSV (default stdout)")
    d.add_argument("--verify", action="store_true",
                   help="check that the components sum to f within 1e-9 relative")
    d.set_defaults(func=cmd_decompose)

    b = sub.add_parser("bench", help="Monte-Carlo comparison of selectors",
                       formatter_class=_Help)
    b.add_argument("--families", default="all",
                   help="comma list of f1..f6, fkm:<k>:<m>, fkm:<k>:* or 'all'")
    b.add_argument("--n", default="25,50,100,200,500", help="comma list of sample sizes")
    b.add_argument("--N", type=int, default=250, help="replicates per (family, n)")
    b.add_argument("--kernel", choices=kernels + ["both"], default="both", help="kernel(s)")
    b.add_argument("--selector", action="append", choices=harness.SELECTORS,
                   help="selector to run; repeat for several (default tde and cv)")
    b.add_argument("--seed", type=int, default=0, help="master seed")
    b.add_argument("--dispersion", choices=("variance", "std"), default="variance",
                   help="reading of the fkm dispersion parameter")
    b.add_argument("--threads", type=int, default=None,
                   help="worker threads (default $TDE_THREADS or 1; capped by $TDE_THREADS)")
    b.add_argument("--measure", action="append",
                   help="histogram measure(s) to export (default all)")
    b.add_argument("--format", choices=("csv", "svg"), default="csv",
                   help="'svg' also writes heat-strip plots")
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--progress", action="store_true", help="report progress on stderr")
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("report", help="summaries and histograms from a records file",
                       formatter_class=_Help)
    r.add_argument("records", help="NDJSON records written by bench")
    r.add_argument("--out", default=None,
                   help="output directory (default: summary CSV on stdout)")
    r.add_argument("--measure", action="append", help="histogram measure(s) to export")
    r.add_argument("--format", choices=("csv", "svg"), default="csv",
                   help="'svg' also writes heat-strip plots")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"topokde: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TopoKDEError, OSError) as exc:
        print(f"topokde: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # e.g. --nh out of range
        print(f"topokde: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
