"""Batch command-line interface.

Subcommands
-----------
``estimate``
    dbICC point estimate of one input data set.
``bootstrap``
    Point estimate plus a bootstrap percentile confidence interval.
``sweep-threshold``
    dbICC across a grid of soft-threshold levels (plot-ready CSV).
``simulate``
    Synthetic-data experiments: point-estimate distribution, bootstrap
    coverage, and SNR-versus-intensity curves.

Input formats (auto-detected from the first line, ``--format`` overrides):

* vector CSV with header ``individual,replicate,f1,...,fp``;
* a raw n-by-n distance matrix (headerless CSV) plus ``--groups``
  pointing at a CSV with header ``row,individual,replicate`` (0-based
  ``row``);
* a time-series manifest with header ``individual,replicate,path``,
  each path a headerless CSV of one series (rows are time points),
  resolved relative to the manifest.

JSON output serializes numbers with 17 significant digits so values
round-trip exactly; all randomized commands record their seed, and
re-running with that seed reproduces the output byte for byte.

Exit codes: 0 success, 2 input parse error, 3 computation error
(message names the error class), 4 configuration error.
"""

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .bootstrap import bootstrap_dbicc
from .core import (
    DistanceMatrix,
    GroupedSample,
    PayloadKind,
    build_grouped_sample,
    compute_distance_matrix,
)
from .distances import (
    DistanceSpec,
    Metric,
    correlation_from_timeseries,
    soft_threshold,
)
from .errors import (
    DbiccError,
    DegenerateDistancesError,
    DegenerateInputError,
    MetricMismatchError,
)
from .estimator import dbicc_point
from .simulation import (
    run_coverage_experiment,
    run_point_experiment,
    run_sb_experiment,
)

__all__ = ["main", "main_entry"]

_METRIC_BY_FLAG = {
    "l2": Metric.L2_VEC,
    "l1": Metric.L1_VEC,
    "corr": Metric.CORR_OF_CORR,
}


class _ParseFailure(Exception):
    """Input file could not be parsed; carries location diagnostics."""

    def __init__(self, path, message, line=None, column=None):
        loc = str(path)
        if line is not None:
            loc += f":{line}"
            if column is not None:
                loc += f":{column}"
        super().__init__(f"{loc}: {message}")


class _ConfigFailure(Exception):
    """Flags or flag combinations are invalid."""


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _format_number(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if not math.isfinite(value):
        raise ValueError("cannot serialize non-finite number")
    return format(value, ".17g")


def _emit_json(obj, level=0) -> str:
    pad = "  " * level
    inner = "  " * (level + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{inner}{json.dumps(str(k))}: {_emit_json(v, level + 1)}"
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not len(obj):
            return "[]"
        items = [f"{inner}{_emit_json(v, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (bool, int, float, np.integer, np.floating)):
        return _format_number(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj) -> str:
    """Deterministic JSON with 17-significant-digit floats."""
    return _emit_json(obj) + "\n"


def _write_output(text: str, out_path):
    if out_path is None:
        sys.stdout.write(text)
    else:
        Path(out_path).write_text(text, encoding="utf-8")


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return _format_number(value)


def _write_csv(header, rows, out_path):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_csv_cell(v) for v in row])
    _write_output(buf.getvalue(), out_path)


# ---------------------------------------------------------------------------
# input loading
# ---------------------------------------------------------------------------


def _read_csv_rows(path):
    try:
        with open(path, "r", encoding="utf-8-sig", newline="") as fh:
            return list(csv.reader(fh))
    except OSError as exc:
        raise _ParseFailure(path, f"cannot read file ({exc.strerror})")


def _sniff_format(path) -> str:
    rows = _read_csv_rows(path)
    if not rows:
        raise _ParseFailure(path, "file is empty")
    first = [f.strip() for f in rows[0]]
    if len(first) >= 3 and first[0] == "individual" and first[1] == "replicate":
        return "timeseries" if first[2] == "path" else "vectors"
    return "distances"


def _replicate_sort_key(label: str):
    # numeric replicate ids sort numerically, anything else lexically
    try:
        return (0, int(label), "")
    except ValueError:
        return (1, 0, label)


def _parse_float(path, line, column, text):
    try:
        return float(text)
    except ValueError:
        raise _ParseFailure(
            path, f"expected a number, got {text!r}", line=line, column=column
        )


def _load_vector_csv(path) -> GroupedSample:
    rows = _read_csv_rows(path)
    header = [f.strip() for f in rows[0]] if rows else []
    if len(header) < 3 or header[0] != "individual" or header[1] != "replicate":
        raise _ParseFailure(
            path,
            "expected header 'individual,replicate,f1,...,fp'",
            line=1,
        )
    width = len(header)
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise _ParseFailure(
                path,
                f"expected {width} fields, got {len(row)}",
                line=lineno,
            )
        values = [
            _parse_float(path, lineno, col + 3, cell)
            for col, cell in enumerate(row[2:])
        ]
        records.append((row[0], _replicate_sort_key(row[1]), np.array(values)))
    if not records:
        raise _ParseFailure(path, "no data rows")
    return build_grouped_sample(records, payload_kind=PayloadKind.VECTOR)


def _load_distance_input(path, groups_path) -> DistanceMatrix:
    rows = _read_csv_rows(path)
    if not rows:
        raise _ParseFailure(path, "file is empty")
    values = np.array(
        [
            [
                _parse_float(path, lineno, col + 1, cell)
                for col, cell in enumerate(row)
            ]
            for lineno, row in enumerate(rows, start=1)
            if row
        ]
    )
    n = values.shape[0]
    grows = _read_csv_rows(groups_path)
    gheader = [f.strip() for f in grows[0]] if grows else []
    if gheader != ["row", "individual", "replicate"]:
        raise _ParseFailure(
            groups_path, "expected header 'row,individual,replicate'", line=1
        )
    entries = []
    for lineno, row in enumerate(grows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise _ParseFailure(
                groups_path, f"expected 3 fields, got {len(row)}", line=lineno
            )
        try:
            row_idx = int(row[0])
        except ValueError:
            raise _ParseFailure(
                groups_path, f"row index must be an integer, got {row[0]!r}",
                line=lineno, column=1,
            )
        entries.append((row_idx, row[1], row[2]))
    if sorted(e[0] for e in entries) != list(range(n)):
        raise _ParseFailure(
            groups_path,
            f"row indices must cover 0..{n - 1} exactly once for a "
            f"{n}x{n} distance matrix",
        )
    # canonical order: individuals by first appearance (by row), replicates
    # sorted by their label within each individual
    entries.sort(key=lambda e: e[0])
    order: dict = {}
    for _, ind, _rep in entries:
        order.setdefault(ind, len(order))
    blocks: dict = {ind: [] for ind in order}
    for row_idx, ind, rep in entries:
        blocks[ind].append((rep, row_idx))
    perm = []
    individual_index = []
    replicate_index = []
    labels = []
    for ind, pos in order.items():
        members = sorted(blocks[ind], key=lambda t: _replicate_sort_key(t[0]))
        labels.append(ind)
        for j, (_rep, row_idx) in enumerate(members):
            perm.append(row_idx)
            individual_index.append(pos)
            replicate_index.append(j)
    perm = np.array(perm)
    return DistanceMatrix(
        values=values[np.ix_(perm, perm)],
        individual_index=np.array(individual_index),
        replicate_index=np.array(replicate_index),
        labels=tuple(labels),
    )


def _load_timeseries_manifest(path) -> GroupedSample:
    rows = _read_csv_rows(path)
    header = [f.strip() for f in rows[0]] if rows else []
    if header != ["individual", "replicate", "path"]:
        raise _ParseFailure(path, "expected header 'individual,replicate,path'", line=1)
    base = Path(path).parent
    records = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 3:
            raise _ParseFailure(path, f"expected 3 fields, got {len(row)}", line=lineno)
        series_path = Path(row[2])
        if not series_path.is_absolute():
            series_path = base / series_path
        try:
            series = np.loadtxt(series_path, delimiter=",", ndmin=2)
        except OSError as exc:
            raise _ParseFailure(series_path, f"cannot read file ({exc})")
        except ValueError as exc:
            raise _ParseFailure(series_path, f"not a numeric CSV ({exc})")
        records.append((row[0], _replicate_sort_key(row[1]), series))
    if not records:
        raise _ParseFailure(path, "no data rows")
    return build_grouped_sample(records, payload_kind=PayloadKind.TIMESERIES)


def _load_input(args):
    fmt = args.format or _sniff_format(args.input)
    if fmt == "vectors":
        return _load_vector_csv(args.input)
    if fmt == "timeseries":
        return _load_timeseries_manifest(args.input)
    if fmt == "distances":
        if not args.groups:
            raise _ConfigFailure(
                "distance-matrix input requires --groups with the row grouping"
            )
        return _load_distance_input(args.input, args.groups)
    raise _ConfigFailure(f"unknown input format {fmt!r}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _distance_spec(args):
    kind = _METRIC_BY_FLAG[args.distance or "l2"]
    return DistanceSpec(kind=kind, threshold=args.threshold)


def _estimate_doc(args, data):
    if isinstance(data, DistanceMatrix):
        if args.threshold is not None:
            raise _ConfigFailure(
                "--threshold needs payload input; a precomputed distance "
                "matrix cannot be re-thresholded"
            )
        dm = data
        distance_name = args.distance or "precomputed"
    else:
        dm = compute_distance_matrix(data, _distance_spec(args))
        distance_name = args.distance or "l2"
    est = dbicc_point(dm)
    return dm, {
        "rho_hat": est.rho_hat,
        "msd_within": est.msd_within,
        "msd_between": est.msd_between,
        "n_within_pairs": est.n_within_pairs,
        "n_between_pairs": est.n_between_pairs,
        "distance": distance_name,
        "threshold": args.threshold,
    }


def _cmd_estimate(args) -> int:
    _, doc = _estimate_doc(args, _load_input(args))
    _write_output(dumps_json(doc), args.out)
    return 0


def _cmd_bootstrap(args) -> int:
    dm, doc = _estimate_doc(args, _load_input(args))
    result = bootstrap_dbicc(
        dm, args.boot, corrected=args.corrected, level=args.level, seed=args.seed
    )
    doc.update(
        {
            "ci_low": result.ci_low,
            "ci_high": result.ci_high,
            "level": result.level,
            "B": result.n_boot,
            "corrected": result.corrected,
            "seed": result.seed,
            "n_degenerate": result.n_degenerate,
        }
    )
    if args.emit_replicates:
        doc["replicate_estimates"] = [float(v) for v in result.replicate_estimates]
    _write_output(dumps_json(doc), args.out)
    return 0


def _parse_grid(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise _ConfigFailure(f"--threshold-grid expects 'start:stop:step', got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise _ConfigFailure(f"--threshold-grid values must be numbers, got {text!r}")
    if step <= 0 or stop < start:
        raise _ConfigFailure("--threshold-grid needs step > 0 and stop >= start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + k * step for k in range(count)]


def _cmd_sweep_threshold(args) -> int:
    data = _load_input(args)
    if isinstance(data, DistanceMatrix):
        raise MetricMismatchError(
            "threshold sweep requires payload input (matrices or time series)"
        )
    if data.payload_kind is PayloadKind.VECTOR:
        raise MetricMismatchError(
            "threshold sweep applies to matrix payloads, not vectors"
        )
    payloads = data.payloads()
    if data.payload_kind is PayloadKind.TIMESERIES:
        payloads = [correlation_from_timeseries(x) for x in payloads]
    grid = [args.threshold] if args.threshold is not None else _parse_grid(
        args.threshold_grid
    )
    distance_name = args.distance or "l2"
    kind = _METRIC_BY_FLAG[distance_name]
    groups = data.groups()
    rows = []
    for level in grid:
        shrunk = []
        fractions = []
        for mat in payloads:
            out, frac = soft_threshold(mat, level)
            shrunk.append(out)
            fractions.append(frac)
        records = [
            (f"i{gi:05d}", rj, mat) for (gi, rj), mat in zip(groups, shrunk)
        ]
        sample = build_grouped_sample(records, payload_kind=PayloadKind.MATRIX)
        try:
            dm = compute_distance_matrix(sample, DistanceSpec(kind=kind))
            rho = dbicc_point(dm).rho_hat
        except (DegenerateInputError, DegenerateDistancesError) as exc:
            print(
                f"threshold {level:g}: {type(exc).__name__}: {exc}", file=sys.stderr
            )
            rho = None
        rows.append((distance_name, level, float(np.mean(fractions)), rho))
    _write_csv(["distance", "threshold", "avg_fraction_zeroed", "rho_hat"], rows, args.out)
    return 0


def _parse_m_grid(text):
    try:
        grid = [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise _ConfigFailure(f"--m-grid expects comma-separated integers, got {text!r}")
    if len(grid) < 3:
        raise _ConfigFailure("--m-grid needs at least 3 values")
    return grid


def _cmd_simulate(args) -> int:
    workers = args.threads or 1
    if args.experiment == "point":
        report = run_point_experiment(
            n_individuals=args.individuals or 40,
            n_replicates=args.replicates or 4,
            icc=args.rho,
            n_runs=args.runs or 500,
            seed=args.seed,
            dim=args.dim or 2,
            workers=workers,
        )
        csv_rows = [(i, v) for i, v in enumerate(report["estimates"])]
        csv_header = ["run", "rho_hat"]
    elif args.experiment == "coverage":
        report = run_coverage_experiment(
            n_individuals=args.individuals or 40,
            n_replicates=args.replicates or 4,
            icc=args.rho,
            n_boot=args.boot,
            n_runs=args.runs or 500,
            level=args.level,
            seed=args.seed,
            dim=args.dim or 2,
            workers=workers,
        )
        csv_rows = [
            (
                i,
                r["point"],
                r["naive"][0],
                r["naive"][1],
                r["corrected"][0],
                r["corrected"][1],
            )
            for i, r in enumerate(report["runs"])
        ]
        csv_header = [
            "run", "rho_hat", "naive_low", "naive_high", "corrected_low",
            "corrected_high",
        ]
    else:
        m_grid = _parse_m_grid(args.m_grid) if args.m_grid else None
        report = run_sb_experiment(
            n_individuals=args.individuals or 25,
            n_replicates=args.replicates or 2,
            dim=args.dim or 40,
            m_grid=m_grid,
            ar_coeff=args.phi,
            n_runs=args.runs or 20,
            seed=args.seed,
            wishart_df=args.wishart_df,
            offset=args.sb_offset,
            workers=workers,
        )
        csv_rows = [
            (kind, p["run"], p["m"], p["rho_hat"], p["x"], p["y"])
            for kind in ("covariance", "correlation")
            for p in report[kind]["points"]
        ]
        csv_header = ["matrix", "run", "m", "rho_hat", "x", "y"]
    if args.csv:
        _write_csv(csv_header, csv_rows, args.csv)
    _write_output(dumps_json(report), args.out)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ConfigFailure(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="dbicc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    io_parent = argparse.ArgumentParser(add_help=False)
    io_parent.add_argument("input", help="input CSV (see --format)")
    io_parent.add_argument(
        "--format",
        choices=["vectors", "distances", "timeseries"],
        help="input format; default: auto-detect from the header",
    )
    io_parent.add_argument(
        "--groups", help="grouping CSV for --format distances (row,individual,replicate)"
    )
    io_parent.add_argument(
        "--distance", choices=["l2", "l1", "corr"], help="distance (default l2)"
    )
    io_parent.add_argument(
        "--threshold",
        type=float,
        help="soft-threshold level applied to matrix payloads before distancing",
    )
    io_parent.add_argument("--out", help="output path (default: stdout)")
    io_parent.add_argument(
        "--threads", type=int, help="cap on worker count; never changes results"
    )

    sub.add_parser(
        "estimate", parents=[io_parent], help="dbICC point estimate of one data set"
    )

    boot = sub.add_parser(
        "bootstrap", parents=[io_parent], help="point estimate plus bootstrap CI"
    )
    boot.add_argument("--boot", type=int, default=1200, help="bootstrap replicates")
    boot.add_argument("--level", type=float, default=0.95, help="confidence level")
    corr_group = boot.add_mutually_exclusive_group()
    corr_group.add_argument(
        "--corrected",
        dest="corrected",
        action="store_true",
        help="drop duplicate-individual block pairs from the between sum (default)",
    )
    corr_group.add_argument(
        "--naive", dest="corrected", action="store_false", help="no bias correction"
    )
    boot.set_defaults(corrected=True)
    boot.add_argument("--seed", type=int, help="64-bit RNG seed")
    boot.add_argument(
        "--emit-replicates",
        action="store_true",
        help="include per-replicate estimates in the JSON output",
    )

    sweep = sub.add_parser(
        "sweep-threshold",
        parents=[io_parent],
        help="dbICC across a soft-threshold grid (CSV output)",
    )
    sweep.add_argument(
        "--threshold-grid",
        default="0:0.9:0.1",
        help="grid as start:stop:step (default 0:0.9:0.1); --threshold overrides",
    )

    sim = sub.add_parser("simulate", help="synthetic-data experiments")
    sim.add_argument(
        "--experiment", choices=["point", "coverage", "sb"], required=True
    )
    sim.add_argument("--individuals", type=int, help="number of individuals")
    sim.add_argument("--replicates", type=int, help="replicates per individual")
    sim.add_argument("--dim", type=int, help="payload dimension")
    sim.add_argument("--rho", type=float, default=0.5, help="population dbICC")
    sim.add_argument(
        "--phi", type=float, default=0.0, help="AR(1) coefficient for sb series"
    )
    sim.add_argument("--boot", type=int, default=1200, help="bootstrap replicates")
    sim.add_argument("--level", type=float, default=0.95, help="confidence level")
    sim.add_argument("--runs", type=int, help="number of simulation runs")
    sim.add_argument("--m-grid", help="comma-separated series lengths for sb")
    sim.add_argument(
        "--sb-offset",
        type=int,
        choices=[0, 1],
        default=1,
        help="abscissa is log(m - offset)",
    )
    sim.add_argument("--wishart-df", type=int, help="population heterogeneity control")
    sim.add_argument("--seed", type=int, help="64-bit RNG seed")
    sim.add_argument("--threads", type=int, help="parallel workers for runs")
    sim.add_argument("--out", help="JSON output path (default: stdout)")
    sim.add_argument("--csv", help="also write plot-ready CSV here")
    return parser


_COMMANDS = {
    "estimate": _cmd_estimate,
    "bootstrap": _cmd_bootstrap,
    "sweep-threshold": _cmd_sweep_threshold,
    "simulate": _cmd_simulate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except _ParseFailure as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except DbiccError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except _ConfigFailure as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 4


def main_entry():
    raise SystemExit(main())


if __name__ == "__main__":
    main_entry()
