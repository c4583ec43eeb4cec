"""Command line front end: file ingestion, analysis commands, study runner.

Commands
--------
test-one     one-sample location test of center 0 (optional sign-change p)
test-groups  c-sample equality-of-centers test (optional permutation p)
estimate     location estimate(s) with large-sample covariances
weights      efficiency-optimal observation weights for the design
are          asymptotic relative efficiency table from a JSON config
simulate     Monte Carlo size/power cells from a JSON config

Data files are CSV with a header: a required ``cluster`` column, an
optional ``group`` column, and two or more numeric response columns (in
coordinate order).  ``are`` and ``simulate`` read a JSON config through
the same ``--input`` flag.

Machine output goes to stdout as either dotted-key TSV (one ``key<TAB>
value`` line per leaf, floats with 17 significant digits) or JSON with
identical numeric content; diagnostics go to stderr.  Output is a pure
function of (input bytes, request flags, seed).  Exit codes: 0 success,
2 malformed data or request, 3 numerical failure.  ``--threads`` is
recorded in the provenance block and passed down as a hint; the current
computational layers run single-threaded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import platform
import sys
from pathlib import Path
from typing import Any

import numpy as np
import scipy

from . import __version__
from .design import (
    DataSet,
    Design,
    build_design,
    estimate_rho,
    normalize_weights,
    optimal_weights_one_sample,
    optimal_weights_two_sample,
)
from .efficiency import DesignSpec, PopulationModel, are_curve, default_rho_grid
from .errors import ClustlocError, DataFormatError, DesignError
from .multisample import c_sample_test, group_differences, permutation_pvalue
from .numerics import RNG_FAMILY, RandomStream
from .onesample import (
    estimate_bc,
    estimate_location,
    one_sample_test,
    sign_change_pvalue,
)
from .scores import centered_scores, spatial_signed_ranks, spatial_signs
from .sim import DEFAULT_EFFECT_SCALE, SimConfig, default_delta0, run_table
from .sim import provenance as sim_provenance

__all__ = ["main", "ingest_csv", "emit_csv", "load_weight_file", "render_report"]

_RESERVED_COLUMNS = ("cluster", "group")
_MIN_RESAMPLE_REPS = 99

# ---------------------------------------------------------------------------
# CSV ingestion / emission
# ---------------------------------------------------------------------------


def ingest_csv(path: str | Path) -> DataSet:
    """Read observations: ``cluster`` column, optional ``group``, numeric rest.

    Response columns keep file order.  Any cell that does not parse as a
    number is reported with its row and column; rows are counted from 1
    including the header.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    rows = [row for row in csv.reader(io.StringIO(text)) if row]
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = [name.strip() for name in rows[0]]
    if len(set(header)) != len(header):
        raise DataFormatError(f"{path}: duplicate column names in header")
    if "cluster" not in header:
        raise DataFormatError(f"{path}: missing required column 'cluster'")
    response = [name for name in header if name not in _RESERVED_COLUMNS]
    if len(response) < 2:
        raise DataFormatError(
            f"{path}: need at least 2 response columns, found {len(response)}"
        )
    if not rows[1:]:
        raise DataFormatError(f"{path}: no data rows")
    col_of = {name: header.index(name) for name in header}
    cluster: list[str] = []
    group: list[str] = []
    values = np.empty((len(rows) - 1, len(response)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataFormatError(
                f"{path}: row {i} has {len(row)} fields, header has {len(header)}"
            )
        cluster.append(row[col_of["cluster"]].strip())
        if "group" in col_of:
            group.append(row[col_of["group"]].strip())
        for j, name in enumerate(response):
            cell = row[col_of[name]].strip()
            try:
                values[i - 2, j] = float(cell)
            except ValueError:
                raise DataFormatError(
                    f"{path}: row {i}, column {name!r}: "
                    f"could not parse {cell!r} as a number"
                ) from None
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise DataFormatError(
            f"{path}: row {int(bad[0]) + 2}, column {response[int(bad[1])]!r}: "
            "non-finite response"
        )
    try:
        return DataSet(
            y=values,
            cluster=np.asarray(cluster, dtype=object),
            group=np.asarray(group, dtype=object) if group else None,
        )
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


def emit_csv(data: DataSet) -> str:
    """Inverse of ingest_csv: header plus one row per observation."""
    p = data.p
    names = ["cluster"] + (["group"] if data.group is not None else [])
    names += [f"y{j + 1}" for j in range(p)]
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(names)
    for i in range(data.n):
        row = [str(data.cluster[i])]
        if data.group is not None:
            row.append(str(data.group[i]))
        row += [repr(float(v)) for v in data.y[i]]
        writer.writerow(row)
    return out.getvalue()


def load_weight_file(path: str | Path, design: Design) -> np.ndarray:
    """Per-observation weights: one number per line, ``#`` comments allowed."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read weight file {path}: {exc}") from exc
    values: list[float] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        try:
            values.append(float(body))
        except ValueError:
            raise DataFormatError(
                f"{path}: line {lineno}: could not parse {body!r} as a number"
            ) from None
    if len(values) != design.n:
        raise DataFormatError(
            f"{path}: {len(values)} weights for {design.n} observations"
        )
    try:
        return normalize_weights(np.asarray(values), design.n)
    except (ValueError, DesignError) as exc:
        raise DataFormatError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Report rendering: one nested dict, two equivalent serializations
# ---------------------------------------------------------------------------


def _pythonize(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _pythonize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_pythonize(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_pythonize(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return value
    return obj


def _flatten(obj: Any, prefix: str, lines: list[str]) -> None:
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(v, f"{prefix}{k}.", lines)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _flatten(v, f"{prefix}{i}.", lines)
    else:
        key = prefix[:-1]
        if obj is None:
            text = ""
        elif isinstance(obj, bool):
            text = "true" if obj else "false"
        elif isinstance(obj, int):
            text = str(obj)
        elif isinstance(obj, float):
            text = format(obj, ".17g")
        else:
            text = str(obj)
        lines.append(f"{key}\t{text}")


def render_report(report: dict[str, Any], fmt: str) -> str:
    """Serialize a report as dotted-key TSV or JSON with equal numbers."""
    clean = _pythonize(report)
    if fmt == "json":
        return json.dumps(clean, indent=2, allow_nan=False) + "\n"
    lines: list[str] = []
    _flatten(clean, "", lines)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Request plumbing
# ---------------------------------------------------------------------------


def _provenance(args: argparse.Namespace) -> dict[str, Any]:
    request = {
        "command": args.command,
        "input": str(args.input),
        "score": args.score,
        "weights": args.weights,
        "rho": args.rho,
        "resample": args.resample,
        "reps": args.reps,
        "alpha": args.alpha,
        "format": args.format,
    }
    block = {
        "seed": args.seed,
        "rng": RNG_FAMILY,
        "threads": args.threads if args.threads else "auto",
        "versions": {
            "clustloc": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "request": request,
    }
    if args.command == "simulate":
        block.update(sim_provenance())
    return block


def _rho_scores(
    y: np.ndarray, design: Design, kind: str, at_null: bool
) -> np.ndarray:
    """Score matrix feeding the two-stage within-cluster correlation."""
    if design.group_index is not None:
        return centered_scores(y, design, None, kind)[0]
    if at_null:
        if kind == "identity":
            return y
        if kind == "sign":
            return spatial_signs(y)
        return spatial_signed_ranks(y)
    if kind == "signed-rank":
        center = estimate_location(y, design, None, kind).mu_hat
        return spatial_signed_ranks(y - center)
    return centered_scores(y, design, None, kind)[0]


def _resolve_weights(
    args: argparse.Namespace,
    data: DataSet,
    design: Design,
    *,
    at_null: bool,
) -> tuple[np.ndarray | None, dict[str, Any]]:
    """Weight vector for the request plus a report block describing it."""
    mode = args.weights
    if mode == "none":
        return None, {"mode": "none"}
    if mode == "optimal":
        if args.rho is not None:
            rho, source = float(args.rho), "flag"
        else:
            scores = _rho_scores(data.y, design, args.score, at_null)
            bc = estimate_bc(scores, design)
            rho, source = estimate_rho(bc.b_hat, bc.c_hat), "estimated"
        if design.group_index is None:
            w = optimal_weights_one_sample(design, rho)
        else:
            w = optimal_weights_two_sample(design, rho)
        block = {"mode": "optimal", "rho": rho, "rho_source": source}
        return w, block
    w = load_weight_file(mode, design)
    return w, {"mode": "file", "path": mode}


def _test_block(result: Any, alpha: float) -> dict[str, Any]:
    return {
        "statistic": result.statistic,
        "df": result.df,
        "p_asymptotic": result.p_asymptotic,
        "reject_asymptotic": bool(result.p_asymptotic < alpha),
        "rank_deficient": result.rank_deficient,
    }


def _resampling_block(res: Any, alpha: float) -> dict[str, Any]:
    return {
        "method": res.method,
        "p_value": res.p_value,
        "reject": bool(res.p_value < alpha),
        "draws": res.draws,
        "exceed_count": res.exceed_count,
        "exhaustive": res.exhaustive,
    }


def _estimate_block(est: Any) -> dict[str, Any]:
    return {
        "center": est.mu_hat,
        "covariance": est.covariance,
        "covariance_scale": "sqrt_n",
        "iterations": est.iterations,
        "converged": est.converged,
        "residual": est.residual,
        "notes": list(est.notes),
    }


def _difference_block(diff: Any) -> dict[str, Any]:
    return {
        "theta": diff.theta,
        "covariance": diff.covariance,
        "covariance_alt": diff.covariance_alt,
        "covariance_scale": "sqrt_n",
        "gamma_b": diff.gamma_b,
        "gamma_c": diff.gamma_c,
        "prefer_alt": diff.prefer_alt,
        "converged": diff.converged,
    }


def _data_summary(data: DataSet, design: Design) -> dict[str, Any]:
    out: dict[str, Any] = {
        "n": design.n,
        "dim": data.p,
        "clusters": design.d,
    }
    if design.group_index is not None:
        out["groups"] = design.c
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _cmd_test_one(args: argparse.Namespace) -> dict[str, Any]:
    if args.score == "rank":
        raise DesignError(
            "rank scores have no one-sample test; use sign or signed-rank"
        )
    if args.resample and args.resample != "sign":
        raise DesignError(
            "permutation resampling compares groups; use test-groups"
        )
    data = ingest_csv(args.input)
    design = build_design(data.cluster)
    weights, weight_block = _resolve_weights(args, data, design, at_null=True)
    result = one_sample_test(data.y, design, weights, args.score)
    report: dict[str, Any] = {
        "command": "test-one",
        "score": args.score,
        "data": _data_summary(data, design),
        "test": _test_block(result, args.alpha),
        "alpha": args.alpha,
        "weights": _weights_with_values(weight_block, result.weights_used),
    }
    if args.resample == "sign":
        res = sign_change_pvalue(
            data.y,
            design,
            weights,
            args.score,
            reps=args.reps,
            stream=RandomStream(args.seed),
        )
        report["resampling"] = _resampling_block(res, args.alpha)
    report["provenance"] = _provenance(args)
    return report


def _cmd_test_groups(args: argparse.Namespace) -> dict[str, Any]:
    if args.score == "signed-rank":
        raise DesignError(
            "signed-rank scores are one-sample; use identity, sign, or rank"
        )
    if args.resample == "sign":
        raise DesignError("sign-change resampling is one-sample; use test-one")
    data = ingest_csv(args.input)
    if data.group is None:
        raise DataFormatError(f"{args.input}: test-groups needs a 'group' column")
    design = build_design(data)
    weights, weight_block = _resolve_weights(args, data, design, at_null=False)
    result = c_sample_test(data.y, design, weights, args.score)
    report: dict[str, Any] = {
        "command": "test-groups",
        "score": args.score,
        "data": _data_summary(data, design),
        "test": _test_block(result, args.alpha),
        "alpha": args.alpha,
        "weights": _weights_with_values(weight_block, result.weights_used),
    }
    if args.resample:
        scheme = args.resample[-1]
        res = permutation_pvalue(
            data.y,
            design,
            weights,
            args.score,
            scheme=scheme,
            reps=args.reps,
            stream=RandomStream(args.seed),
        )
        report["resampling"] = _resampling_block(res, args.alpha)
    report["provenance"] = _provenance(args)
    return report


def _group_names(data: DataSet, design: Design) -> list[str]:
    seen: list[str] = []
    for label in data.group:
        name = str(label)
        if name not in seen:
            seen.append(name)
    return seen


def _cmd_estimate(args: argparse.Namespace) -> dict[str, Any]:
    data = ingest_csv(args.input)
    if data.group is None:
        if args.score == "rank":
            raise DesignError(
                "rank scores estimate group differences only; "
                "one-sample estimation needs identity, sign, or signed-rank"
            )
        design = build_design(data.cluster)
        weights, weight_block = _resolve_weights(args, data, design, at_null=False)
        est = estimate_location(data.y, design, weights, args.score)
        return {
            "command": "estimate",
            "score": args.score,
            "data": _data_summary(data, design),
            "estimate": _estimate_block(est),
            "weights": _weights_with_values(weight_block, est.weights_used),
            "provenance": _provenance(args),
        }
    if args.score == "signed-rank":
        raise DesignError(
            "signed-rank scores are one-sample; grouped estimation uses "
            "identity, sign, or rank"
        )
    design = build_design(data)
    weights, weight_block = _resolve_weights(args, data, design, at_null=False)
    groups = group_differences(data.y, design, weights, args.score)
    names = _group_names(data, design)
    report: dict[str, Any] = {
        "command": "estimate",
        "score": args.score,
        "data": _data_summary(data, design),
    }
    if groups.estimates:
        report["groups"] = {
            names[g]: _estimate_block(est) for g, est in enumerate(groups.estimates)
        }
    report["differences"] = {
        f"{names[j]}-{names[i]}": _difference_block(diff)
        for (i, j), diff in sorted(groups.theta.items())
        if i < j
    }
    report["weights"] = _weights_with_values(
        weight_block, np.ones(design.n) if weights is None else weights
    )
    report["provenance"] = _provenance(args)
    return report


def _weights_with_values(block: dict[str, Any], values: np.ndarray) -> dict[str, Any]:
    out = dict(block)
    if out.get("mode") != "none":
        out["values"] = values
    return out


def _cmd_weights(args: argparse.Namespace) -> dict[str, Any]:
    data = ingest_csv(args.input)
    design = build_design(data) if data.group is not None else build_design(data.cluster)
    if args.rho is not None:
        rho, source = float(args.rho), "flag"
    else:
        scores = _rho_scores(data.y, design, args.score, at_null=False)
        bc = estimate_bc(scores, design)
        rho, source = estimate_rho(bc.b_hat, bc.c_hat), "estimated"
    if design.group_index is None:
        w = optimal_weights_one_sample(design, rho)
        mode = "one-sample"
    else:
        w = optimal_weights_two_sample(design, rho)
        mode = "two-sample"
    return {
        "command": "weights",
        "score": args.score,
        "data": _data_summary(data, design),
        "rho": rho,
        "rho_source": source,
        "problem": mode,
        "values": w,
        "provenance": _provenance(args),
    }


# -- are ---------------------------------------------------------------------


def _load_json_config(path: str | Path) -> dict[str, Any]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise DataFormatError(f"{path}: config must be a JSON object")
    return config


def _parse_nu(value: Any) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "infinity"):
            return math.inf
        raise DataFormatError(f"nu must be a number or 'inf', got {value!r}")
    return float(value)


def _require_keys(config: dict[str, Any], allowed: set[str], where: str) -> None:
    unknown = set(config) - allowed
    if unknown:
        raise DataFormatError(f"{where}: unknown config keys {sorted(unknown)}")


_ARE_KEYS = {
    "design",
    "cluster_size",
    "group_share",
    "p",
    "family",
    "nu",
    "rho",
    "kinds",
    "weightings",
    "mc_draws",
}


def _cmd_are(args: argparse.Namespace) -> dict[str, Any]:
    config = _load_json_config(args.input)
    _require_keys(config, _ARE_KEYS, str(args.input))
    scheme = config.get("design", "B")
    cluster_size = config.get("cluster_size", 4)
    if isinstance(cluster_size, list):
        cluster_size = tuple(int(m) for m in cluster_size)
    else:
        cluster_size = int(cluster_size)
    try:
        design = DesignSpec(
            scheme, cluster_size, group_share=float(config.get("group_share", 0.5))
        )
        p = int(config.get("p", 3))
        family = config.get("family", "spherical-normal")
        nu = _parse_nu(config.get("nu", "inf"))
        rho_values = config.get("rho")
        if rho_values is None:
            models = default_rho_grid(p=p, family=family, nu=nu)
        else:
            models = [
                PopulationModel(p=p, family=family, nu=nu, rho=float(r))
                for r in rho_values
            ]
        kinds = tuple(config.get("kinds", ("identity", "sign", "rank")))
        weightings = tuple(config.get("weightings", ("unweighted", "optimal")))
        rows = are_curve(
            models,
            design,
            kinds=kinds,
            weightings=weightings,
            mc_draws=int(config.get("mc_draws", 200_000)),
            stream=RandomStream(args.seed),
        )
    except ValueError as exc:
        raise DataFormatError(f"{args.input}: {exc}") from exc
    return {
        "command": "are",
        "config": config,
        "rows": rows,
        "provenance": _provenance(args),
    }


# -- simulate ----------------------------------------------------------------

_SIM_KEYS = {
    "d",
    "cluster_size",
    "p",
    "nu",
    "rho",
    "scheme",
    "delta0",
    "reps",
    "alpha",
    "seed",
    "tests",
    "null_phase",
}


def _sim_config(obj: dict[str, Any], args: argparse.Namespace, where: str) -> SimConfig:
    _require_keys(obj, _SIM_KEYS, where)
    fields: dict[str, Any] = dict(obj)
    if "nu" in fields:
        fields["nu"] = _parse_nu(fields["nu"])
    if isinstance(fields.get("cluster_size"), list):
        fields["cluster_size"] = tuple(int(m) for m in fields["cluster_size"])
    if isinstance(fields.get("tests"), list):
        fields["tests"] = tuple(fields["tests"])
    p = int(fields.get("p", 3))
    delta0 = fields.get("delta0")
    if delta0 == "default":
        fields["delta0"] = default_delta0(p)
    elif isinstance(delta0, dict):
        _require_keys(delta0, {"scale"}, f"{where}: delta0")
        fields["delta0"] = default_delta0(p, float(delta0["scale"]))
    elif delta0 is not None:
        fields["delta0"] = np.asarray(delta0, dtype=float)
    fields.setdefault("seed", args.seed)
    fields.setdefault("alpha", args.alpha)
    try:
        return SimConfig(**fields)
    except (TypeError, ValueError) as exc:
        raise DataFormatError(f"{where}: {exc}") from exc


def _cell_report(cell: Any) -> dict[str, Any]:
    cfg = cell.config
    return {
        "design": cfg.scheme,
        "nu": cfg.nu,
        "rho": cfg.rho,
        "d": cfg.d,
        "n": cfg.n,
        "reps": cell.reps,
        "seed": cfg.seed,
        "alpha": cfg.alpha,
        "null_rate": dict(cell.null_rate),
        "alt_rate": dict(cell.alt_rate),
        "null_se": dict(cell.null_se),
        "alt_se": dict(cell.alt_se),
        "failures": dict(cell.failures),
    }


def _cmd_simulate(args: argparse.Namespace) -> dict[str, Any]:
    config = _load_json_config(args.input)
    if "cells" in config:
        extra = set(config) - {"cells", "tsv", "checkpoint"}
        if extra:
            raise DataFormatError(
                f"{args.input}: unknown grid keys {sorted(extra)}"
            )
        raw_cells = config["cells"]
        if not isinstance(raw_cells, list) or not raw_cells:
            raise DataFormatError(f"{args.input}: 'cells' must be a nonempty list")
        cells = [
            _sim_config(obj, args, f"{args.input}: cells[{i}]")
            for i, obj in enumerate(raw_cells)
        ]
        tsv_path = config.get("tsv")
        checkpoint = config.get("checkpoint")
    else:
        cells = [_sim_config(config, args, str(args.input))]
        tsv_path = checkpoint = None
    results = run_table(cells, tsv_path=tsv_path, checkpoint_path=checkpoint)
    return {
        "command": "simulate",
        "cells": [_cell_report(cell) for cell in results],
        "provenance": _provenance(args),
    }


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "test-one": _cmd_test_one,
    "test-groups": _cmd_test_groups,
    "estimate": _cmd_estimate,
    "weights": _cmd_weights,
    "are": _cmd_are,
    "simulate": _cmd_simulate,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clustloc",
        description=(
            "Score-based location tests and estimates for cluster-correlated "
            "multivariate data."
        ),
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("test-one", "one-sample location test of center zero"),
        ("test-groups", "c-sample equality-of-centers test"),
        ("estimate", "location estimates with covariances"),
        ("weights", "efficiency-optimal observation weights"),
        ("are", "asymptotic relative efficiency table (JSON config)"),
        ("simulate", "Monte Carlo size/power study (JSON config)"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--input", required=True, help="CSV data or JSON config")
        cmd.add_argument(
            "--score",
            default="sign",
            choices=("identity", "sign", "rank", "signed-rank"),
            help="score kind (default: sign)",
        )
        cmd.add_argument(
            "--weights",
            default="none",
            help="'none', 'optimal', or a weight file path (default: none)",
        )
        cmd.add_argument(
            "--rho",
            type=float,
            default=None,
            help="within-cluster score correlation for optimal weights "
            "(default: estimated in two stages)",
        )
        cmd.add_argument(
            "--resample",
            default=None,
            choices=("sign", "permA", "permB", "permC"),
            help="resampling reference: cluster sign changes or scheme "
            "A/B/C permutations",
        )
        cmd.add_argument(
            "--reps",
            type=int,
            default=9999,
            help="resampling replications (default: 9999, minimum 99)",
        )
        cmd.add_argument("--alpha", type=float, default=0.05, help="test level")
        cmd.add_argument("--seed", type=int, default=0, help="RNG seed")
        cmd.add_argument(
            "--format", default="tsv", choices=("tsv", "json"), help="output format"
        )
        cmd.add_argument(
            "--threads",
            type=int,
            default=None,
            help="parallelism hint recorded in provenance",
        )
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not (0.0 < args.alpha < 1.0):
        parser.error(f"--alpha must be in (0, 1), got {args.alpha}")
    if args.threads is not None and args.threads < 1:
        parser.error(f"--threads must be positive, got {args.threads}")
    if args.resample and args.reps < _MIN_RESAMPLE_REPS:
        parser.error(
            f"--reps must be at least {_MIN_RESAMPLE_REPS} "
            f"when resampling, got {args.reps}"
        )
    try:
        report = _COMMANDS[args.command](args)
    except DataFormatError as exc:
        print(f"clustloc: data error: {exc}", file=sys.stderr)
        return 2
    except DesignError as exc:
        print(f"clustloc: design error: {exc}", file=sys.stderr)
        return 2
    except (ClustlocError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"clustloc: numerical failure: {exc}", file=sys.stderr)
        return 3
    sys.stdout.write(render_report(report, args.format))
    return 0


if __name__ == "__main__":
    sys.exit(main())
