"""Command-line front end: ``lsfield run | report | validate``."""

from __future__ import annotations

import argparse
import json
import logging
import sys as _sys
import time
from pathlib import Path

import numpy as np

from lsfield import writers
from lsfield.config import ConfigError, RunConfig, parse_config
from lsfield.scenarios import ScenarioResult, run_scenario
from lsfield.tensor import SYM_LABELS

log = logging.getLogger("lsfield")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

FILES = {
    "summary": "summary.json",
    "fields": "fields.csv",
    "trace": "convergence.csv",
    "curve": "curve.csv",
    "vtk": "fields.vtk",
}


def _err(msg):
    print(f"error: {msg}", file=_sys.stderr)


def summary_document(cfg: RunConfig, result: ScenarioResult, solver: dict, files) -> dict:
    return {
        "schema_version": writers.SCHEMA_VERSION,
        "kind": result.kind,
        "partial": result.partial,
        "error": result.error,
        "config": cfg.model_dump(mode="json"),
        "solver": solver,
        "results": result.summary,
        "files": sorted(files),
    }


def write_outputs(out: Path, cfg: RunConfig, result: ScenarioResult, solver: dict):
    files = [FILES["summary"], FILES["trace"]]
    writers.write_trace_csv(out / FILES["trace"], result.trace)
    if result.fields is not None:
        if cfg.output.csv:
            writers.write_fields_csv(out / FILES["fields"], result.system, result.fields)
            files.append(FILES["fields"])
        if cfg.output.vtk:
            writers.write_vtk(out / FILES["vtk"], result.system, result.fields)
            files.append(FILES["vtk"])
    if result.curve is not None:
        writers.write_curve_csv(out / FILES["curve"], result.curve)
        files.append(FILES["curve"])
    writers.write_json(out / FILES["summary"], summary_document(cfg, result, solver, files))


def cmd_run(cfg: RunConfig, out=None, threads=None) -> int:
    """Execute the configured scenario and write its artefacts to ``out``."""
    out = Path(out or cfg.output.directory)
    ctx = cfg.experiment(threads=threads)
    t0 = time.perf_counter()
    try:
        result = run_scenario(cfg.scenario, ctx)
    except Exception as exc:  # noqa: BLE001 - reported and flagged in the summary
        _err(f"{cfg.scenario.kind} run failed: {exc}")
        result = ScenarioResult(cfg.scenario.kind, {}, partial=True, error=str(exc))
    out.mkdir(parents=True, exist_ok=True)
    write_outputs(out, cfg, result, ctx.metadata())
    print(f"{result.kind}: wrote {out} in {time.perf_counter() - t0:.1f} s")
    if result.partial:
        _err(f"partial results: {result.error}")
        return EXIT_FAILURE
    return EXIT_OK


# ---------------------------------------------------------------------- report


def _row(label, values, width=11):
    cells = "".join(f"{v:>{width}.5g}" if v is not None else f"{'-':>{width}}" for v in values)
    return f"{label:<14}{cells}"


def _header(width=11):
    return f"{'':<14}" + "".join(f"{c:>{width}}" for c in SYM_LABELS)


def uniform_table(res: dict) -> list[str]:
    st, sg = res["strain"], res["stress"]
    lines = [_header()]
    lines.append(_row("E^mean", st["mean"]))
    lines.append(_row("E^std", st["std"]))
    lines.append(_row("sigma^ref", sg["ref"]))
    lines.append(_row("sigma^QC", sg["qc"]))
    for tag in ("raw", "avg"):
        blk = sg[tag]
        lines.append(_row(f"sigma^int {tag}", blk["mean"]))
        lines.append(_row(f"Err {tag} (%)", blk["err_pct"]))
        lines.append(_row(f"Err {tag} QC(%)", sg[f"{tag}_vs_qc_pct"]))
        lines.append(_row(f"Std {tag}", blk["std"]))
    return lines


def _slice(fields, axis, value, tol=1e-6):
    key = f"X{axis + 1}"
    return np.abs(fields[key] - value) < tol


def _write_table(path, header, rows):
    writers._write_rows(path, header, rows)


def report_uniform(run_dir: Path, doc: dict):
    for line in uniform_table(doc["results"]):
        print(line)
    sg = doc["results"]["stress"]
    rows = []
    for name, vals in [("sigma_ref", sg["ref"]), ("sigma_qc", sg["qc"]),
                       ("sigma_raw_mean", sg["raw"]["mean"]), ("sigma_raw_err_pct", sg["raw"]["err_pct"]),
                       ("sigma_raw_std", sg["raw"]["std"]), ("sigma_avg_mean", sg["avg"]["mean"]),
                       ("sigma_avg_err_pct", sg["avg"]["err_pct"]), ("sigma_avg_std", sg["avg"]["std"])]:
        rows.append([name] + [float("nan") if v is None else v for v in vals])
    with open(run_dir / "report_table.csv", "w", newline="") as fh:
        fh.write(",".join(["row"] + list(SYM_LABELS)) + "\n")
        for r in rows:
            fh.write(",".join([r[0]] + [writers.fmt(v) for v in r[1:]]) + "\n")
    f = _fields(run_dir)
    if f is not None:
        mid = np.median(np.unique(f["X2"]))
        m = _slice(f, 1, mid) & (f["interior"] > 0)
        cols = ["X1", "X3", "E33", "sigma_raw33", "sigma_avg33"]
        _write_table(run_dir / "report_strain_slice.csv", cols, zip(*(f[c][m] for c in cols)))


def report_tensile(run_dir: Path, doc: dict):
    path = run_dir / FILES["curve"]
    if not path.is_file():
        raise FileNotFoundError(f"missing {path}")
    c = writers.read_csv_columns(path)
    print(f"{'E33':>8}{'recovered':>14}{'ref':>14}{'QC':>14}{'err ref (%)':>14}")
    with np.errstate(divide="ignore", invalid="ignore"):
        err = np.where(c["sigma33_ref"] != 0,
                       (c["sigma33_recovered"] - c["sigma33_ref"]) / np.abs(c["sigma33_ref"]) * 100, np.nan)
    for k in range(len(c["E33"])):
        print(f"{c['E33'][k]:>8.3f}{c['sigma33_recovered'][k]:>14.6g}{c['sigma33_ref'][k]:>14.6g}"
              f"{c['sigma33_qc'][k]:>14.6g}{err[k]:>14.4g}")
    mono = bool(np.all(np.diff(c["sigma33_recovered"]) > 0))
    print(f"monotonicity: sigma33_recovered strictly increasing in E33: {'yes' if mono else 'no'}")
    cols = ["E33", "sigma33_recovered", "sigma33_ref", "sigma33_qc"]
    _write_table(run_dir / "report_curve.csv", cols + ["err_ref_pct"],
                 zip(*(c[k] for k in cols), err))


def report_field(run_dir: Path, doc: dict):
    res = doc["results"]
    for key, val in res.items():
        if key in ("relax_steps", "rings"):
            continue
        print(f"{key:<28}{json.dumps(val)}")
    for ring in res.get("rings", []):
        print(f"ring [{ring['r_min']:g}, {ring['r_max']:g}): above {ring['mean_above']:.5g} "
              f"below {ring['mean_below']:.5g} |mean| {ring['mean_abs']:.5g}")
    f = _fields(run_dir)
    if f is None:
        return
    cols = ["X1", "X2", "X3", "x1", "x2", "x3", "vm_avg", "sigma_avg33"]
    if doc["kind"] == "dislocation":
        core, xi = np.array(res["core"]), np.array(res["line_direction"])
        X = np.column_stack([f["X1"], f["X2"], f["X3"]])
        m = np.abs((X - core) @ xi) < 0.5
    else:
        mid = np.median(np.unique(f["X2"]))
        m = _slice(f, 1, mid)
    _write_table(run_dir / f"report_field_{doc['kind']}.csv", cols, zip(*(f[c][m] for c in cols)))


def _fields(run_dir: Path):
    path = run_dir / FILES["fields"]
    if not path.is_file():
        log.warning("no %s; skipping field slices", path.name)
        return None
    return writers.read_csv_columns(path)


def cmd_report(run_dir) -> int:
    run_dir = Path(run_dir)
    path = run_dir / FILES["summary"]
    if not path.is_file():
        _err(f"no run artefacts in {run_dir} (missing {FILES['summary']})")
        return EXIT_FAILURE
    try:
        doc = writers.read_summary(path)
        if doc.get("partial"):
            print(f"warning: partial run ({doc.get('error')})")
        if not doc.get("results"):
            raise ValueError("summary has no results")
        {"uniform": report_uniform, "tensile": report_tensile}.get(doc["kind"], report_field)(run_dir, doc)
    except (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError) as exc:
        _err(f"corrupt run directory {run_dir}: {exc}")
        return EXIT_FAILURE
    return EXIT_OK


def cmd_validate(cfg: RunConfig) -> int:
    print(json.dumps(cfg.model_dump(mode="json"), indent=2))
    return EXIT_OK


# ------------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lsfield", description="Relax FCC lattices and recover per-atom stress and strain fields.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="execute the configured scenario")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--out", type=Path, help="output directory (default: output.directory)")
    run.add_argument("--threads", type=int, help="worker threads for field recovery")
    rep = sub.add_parser("report", help="summarise a completed run")
    rep.add_argument("run_dir", nargs="?", type=Path)
    rep.add_argument("--out", type=Path, help="run directory (alternative to positional)")
    val = sub.add_parser("validate", help="check a configuration and print it resolved")
    val.add_argument("--config", required=True, type=Path)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "report":
        target = args.run_dir or args.out
        if target is None:
            _err("report needs a run directory")
            return EXIT_USAGE
        return cmd_report(target)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        _err(f"[{exc.kind}] {exc}")
        return EXIT_USAGE
    if args.command == "validate":
        return cmd_validate(cfg)
    if args.threads is not None and args.threads < 1:
        _err("--threads must be at least 1")
        return EXIT_USAGE
    return cmd_run(cfg, args.out, args.threads)


if __name__ == "__main__":
    _sys.exit(main())
