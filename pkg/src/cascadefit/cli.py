"""Command-line front end.

Subcommands wire the library into reproducible batch pipelines:

    build-cascades  JSONL event log -> per-root cascade files
    fit             one cascade file -> FitResult JSON + curve CSV
    compare         directory of cascades -> three-model comparison report
    synth           stochastic ground-truth cascades with truth sidecars
    report          recompute summary/tests/histogram from a rows CSV

Every command writes a manifest.json recording the effective config, its
hash, input digests, per-stage timings, and the output file list.  All
analytic outputs are timestamp-free, so reruns with the same seed are
byte-identical; only the manifest's timing fields vary.

Exit codes: 0 success, 2 input error, 3 strict-parse error, 4 fit
failure, 5 bulk-comparison failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .cascade import (
    binned_series,
    build_cascades,
    cascade_to_obj,
    load_cascade_file,
    parse_events,
    select_cascades,
    write_cascade_file,
)
from .errors import (
    ClockSkewError,
    DegenerateTargetError,
    DuplicateIdError,
    FitFailedError,
    ParseError,
)
from .fitting import FitConfig, FitResult, fit
from .metrics import MODEL_NAMES, CascadeRow, ComparisonReport, read_rows_csv
from .models import CdSeizParams, ModelKind, SeizParams
from .synth import SynthConfig, simulate_one

log = logging.getLogger("cascadefit")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_PARSE = 3
EXIT_FIT = 4
EXIT_BULK = 5

DEFAULT_TRUE_PARAMS = {
    ModelKind.SEIZ: SeizParams(beta=1.0, b=0.6, rho=0.4, epsilon=0.25, p=0.35, l=0.7),
    ModelKind.CDSEIZ: CdSeizParams(beta=1.0, b=0.6, rho=0.4, epsilon=0.25,
                                   p=(0.5, 0.15, 0.08), l=(0.6, 0.7, 0.8)),
}


def _setup_logging():
    level_name = os.environ.get("CASCADEFIT_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Reproducibility record written next to each command's outputs."""

    command: str
    version: str
    seed: int | None
    config: dict
    config_hash: str = ""
    input_digests: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)

    def __post_init__(self):
        canon = json.dumps(self.config, sort_keys=True, default=str)
        self.config_hash = hashlib.sha256(canon.encode()).hexdigest()

    def add_input(self, path):
        self.input_digests[str(path)] = _sha256_file(path)

    def add_output(self, path):
        self.outputs.append(str(path))

    def write(self, path):
        missing = [p for p in self.outputs if not os.path.exists(p)]
        if missing:
            raise RuntimeError(f"manifest names outputs that do not exist: {missing}")
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


class _Timer:
    def __init__(self, manifest: RunManifest, stage: str):
        self.manifest = manifest
        self.stage = stage

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.manifest.timings[self.stage] = round(time.perf_counter() - self.t0, 6)
        return False


def _safe_name(raw: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", raw)[:80]


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_bounds_file(path) -> dict:
    """JSON bounds: either {model: [[lo,hi],...]} or a bare [[lo,hi],...]
    list (keyed '*', applies to whichever model is requested)."""
    with open(path) as fh:
        obj = json.load(fh)
    if isinstance(obj, dict):
        return {k: np.asarray(v, dtype=np.float64) for k, v in obj.items()}
    return {"*": np.asarray(obj, dtype=np.float64)}


def _bounds_for(bounds_by_model: dict | None, name: str):
    if not bounds_by_model:
        return None
    if name in bounds_by_model:
        return bounds_by_model[name]
    return bounds_by_model.get("*")


def _fit_config(kind: ModelKind, args, bounds) -> FitConfig:
    kwargs = {"model_kind": kind, "bounds": bounds, "seed": args.seed}
    if args.starts is not None:
        kwargs["n_starts"] = args.starts
    if args.max_evals is not None:
        kwargs["max_evals"] = args.max_evals
    if args.substeps is not None:
        kwargs["substeps"] = args.substeps
    return FitConfig(**kwargs)


def _config_dict(cfg: FitConfig) -> dict:
    return {
        "model": cfg.model_kind.value,
        "bounds": None if cfg.bounds is None else cfg.bounds.tolist(),
        "n_starts": cfg.n_starts,
        "max_evals": cfg.max_evals,
        "xtol": cfg.xtol,
        "ftol": cfg.ftol,
        "seed": cfg.seed,
        "substeps": cfg.substeps,
    }


# ---------------------------------------------------------------------------
# build-cascades
# ---------------------------------------------------------------------------

def cmd_build_cascades(args) -> int:
    out = _out_dir(args)
    config = {
        "input": str(args.input), "bundle": args.bundle, "strict": args.strict,
        "min_size": args.min_size, "top_k": args.top_k, "horizon": args.horizon,
    }
    manifest = RunManifest("build-cascades", __version__, None, config)
    manifest.add_input(args.input)

    with _Timer(manifest, "parse"):
        parsed = parse_events(Path(args.input), strict=args.strict)
    with _Timer(manifest, "build"):
        built = build_cascades(parsed.events)
        selected = select_cascades(built.trees, min_size=args.min_size, top_k=args.top_k)

    written = []
    truncated_total = 0
    with _Timer(manifest, "write"):
        if args.bundle:
            objs = []
            for tree in selected:
                series = binned_series(tree, args.horizon)
                truncated_total += series.truncated
                objs.append(cascade_to_obj(tree, series))
            path = out / "cascades.json"
            with open(path, "w") as fh:
                json.dump({"cascades": objs}, fh, indent=2)
                fh.write("\n")
            written.append(path)
        else:
            for idx, tree in enumerate(selected):
                series = binned_series(tree, args.horizon)
                truncated_total += series.truncated
                path = out / f"{idx:05d}-{_safe_name(tree.root_id)}.cascade.json"
                write_cascade_file(path, tree, series)
                written.append(path)

        report = {
            "events": len(parsed.events),
            "malformed": parsed.malformed,
            "roots": len(built.trees),
            "orphans": [e.id for e in built.orphans],
            "selected": len(selected),
            "truncated_events": truncated_total,
            "files": [p.name for p in written],
        }
        report_path = out / "build_report.json"
        with open(report_path, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")

    for p in written + [report_path]:
        manifest.add_output(p)
    manifest.write(out / "manifest.json")

    if not parsed.events:
        log.warning("input %s contained no events", args.input)
    print(f"roots={len(built.trees)} events={len(parsed.events)} "
          f"orphans={len(built.orphans)} malformed={len(parsed.malformed)} "
          f"selected={len(selected)} truncated={truncated_total} "
          f"written={len(written)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _write_curve_csv(path, result: FitResult):
    is_cd = result.model_channels is not None
    cols = ["hour", "observed_total", "model_total"]
    if is_cd:
        for name in ("retweet", "quote", "reply"):
            cols += [f"observed_{name}", f"model_{name}"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for h in range(len(result.observed_total)):
            row = [h, int(result.observed_total[h]), repr(float(result.model_total[h]))]
            if is_cd:
                for k in range(3):
                    row += [int(result.observed_channels[k, h]),
                            repr(float(result.model_channels[k, h]))]
            writer.writerow(row)


def cmd_fit(args) -> int:
    out = _out_dir(args)
    kind = ModelKind.parse(args.model)
    bounds_by_model = _load_bounds_file(args.bounds_file) if args.bounds_file else None
    cfg = _fit_config(kind, args, _bounds_for(bounds_by_model, kind.value))

    manifest = RunManifest("fit", __version__, args.seed,
                           {"cascade": str(args.cascade), **_config_dict(cfg)})
    manifest.add_input(args.cascade)

    with _Timer(manifest, "load"):
        tree, series = load_cascade_file(args.cascade)
    with _Timer(manifest, "fit"):
        result = fit(series, cfg)
    with _Timer(manifest, "write"):
        json_path = out / f"fit-{kind.value}.json"
        result.write_json(json_path)
        curve_path = out / f"fit-{kind.value}-curve.csv"
        _write_curve_csv(curve_path, result)

    manifest.add_output(json_path)
    manifest.add_output(curve_path)
    manifest.write(out / "manifest.json")
    print(f"cascade={tree.root_id} model={kind.value} error={result.error:.6g} "
          f"mean_deviation={result.mean_deviation:.6g} n_evals={result.n_evals}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------

def _compare_one(task) -> CascadeRow:
    path, seed, starts, max_evals, substeps, bounds_by_model = task
    tree, series = load_cascade_file(path)
    row = CascadeRow(cascade_id=tree.root_id, size=tree.size)
    for name in MODEL_NAMES:
        kind = ModelKind.parse(name)
        kwargs = {"model_kind": kind, "seed": seed,
                  "bounds": _bounds_for(bounds_by_model, name)}
        if starts is not None:
            kwargs["n_starts"] = starts
        if max_evals is not None:
            kwargs["max_evals"] = max_evals
        if substeps is not None:
            kwargs["substeps"] = substeps
        try:
            res = fit(series, FitConfig(**kwargs))
        except Exception as exc:  # recorded per-row, never fatal
            row.errors[name] = None
            row.mean_devs[name] = None
            row.status[name] = f"failed: {exc}"
        else:
            row.errors[name] = res.error
            row.mean_devs[name] = res.mean_deviation
            row.status[name] = "ok"
    return row


def _cascade_files(dir_path: Path) -> list:
    return sorted(dir_path.glob("*.cascade.json"))


def cmd_compare(args) -> int:
    out = _out_dir(args)
    in_dir = Path(args.cascade_dir)
    if not in_dir.is_dir():
        raise FileNotFoundError(f"cascade directory not found: {in_dir}")
    files = _cascade_files(in_dir)
    if not files:
        raise FileNotFoundError(f"no *.cascade.json files in {in_dir}")

    bounds_by_model = _load_bounds_file(args.bounds_file) if args.bounds_file else None
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    config = {
        "cascade_dir": str(in_dir), "n_cascades": len(files), "jobs": jobs,
        "seed": args.seed, "starts": args.starts, "max_evals": args.max_evals,
        "substeps": args.substeps,
        "bounds": None if bounds_by_model is None
        else {k: v.tolist() for k, v in bounds_by_model.items()},
    }
    manifest = RunManifest("compare", __version__, args.seed, config)
    for p in files:
        manifest.add_input(p)

    tasks = [(str(p), args.seed, args.starts, args.max_evals, args.substeps,
              bounds_by_model) for p in files]
    with _Timer(manifest, "fit_all"):
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                rows = list(pool.map(_compare_one, tasks))
        else:
            rows = [_compare_one(t) for t in tasks]

    metadata = {
        "tool_version": __version__, "seed": args.seed,
        "starts": args.starts, "max_evals": args.max_evals, "substeps": args.substeps,
    }
    report = ComparisonReport.from_rows(rows, metadata=metadata)

    with _Timer(manifest, "write"):
        rows_path = out / "comparison_rows.csv"
        summary_path = out / "comparison_summary.json"
        hist_path = out / "error_histogram.csv"
        report.write_csv(rows_path)
        report.write_json(summary_path)
        report.write_histogram_csv(hist_path)

    for p in (rows_path, summary_path, hist_path):
        manifest.add_output(p)
    manifest.write(out / "manifest.json")

    for name in MODEL_NAMES:
        s = report.summary[name]
        med = s["median_error"]
        print(f"{name}: n_ok={s['n_ok']} n_failed={s['n_failed']} "
              f"median_error={'-' if med is None else f'{med:.6g}'}")
    primary = report.tests["seiz_vs_cdseiz"]
    if primary.get("status") == "ok":
        print(f"seiz_vs_cdseiz: U={primary['u']:.1f} p={primary['p']:.6g} "
              f"({primary['method']})")
    else:
        print(f"seiz_vs_cdseiz: {primary.get('status')}")

    n_failed = sum(1 for r in rows if any(v != "ok" for v in r.status.values()))
    if 2 * n_failed >= len(rows):
        print(f"bulk failure: {n_failed}/{len(rows)} cascades had fit failures",
              file=sys.stderr)
        return EXIT_BULK
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _params_from_obj(kind: ModelKind, obj: dict | None):
    if obj is None:
        return DEFAULT_TRUE_PARAMS[kind]
    common = {k: float(obj[k]) for k in ("beta", "b", "rho", "epsilon")}
    if kind is ModelKind.SEIZ:
        return SeizParams(p=float(obj["p"]), l=float(obj["l"]), **common)
    return CdSeizParams(p=tuple(float(v) for v in obj["p"]),
                        l=tuple(float(v) for v in obj["l"]), **common)


def _parse_i0(raw: str):
    parts = [int(v) for v in raw.split(",")]
    return parts[0] if len(parts) == 1 else tuple(parts)


def _first(*vals):
    for v in vals:
        if v is not None:
            return v
    return None


def cmd_synth(args) -> int:
    out = _out_dir(args)
    file_cfg = {}
    if args.config:
        with open(args.config) as fh:
            file_cfg = json.load(fh)

    # precedence: flags > config file > defaults
    kind = ModelKind.parse(_first(args.model, file_cfg.get("model"), "seiz"))
    config = SynthConfig(
        model_kind=kind,
        true_params=_params_from_obj(kind, file_cfg.get("params")),
        n_agents=int(_first(args.agents, file_cfg.get("n_agents"), 20000)),
        i0=_first(_parse_i0(args.i0) if args.i0 else None, file_cfg.get("i0"), 1),
        horizon_hours=int(_first(args.horizon, file_cfg.get("horizon_hours"), 48)),
        seed=int(_first(args.seed, file_cfg.get("seed"), 0)),
        n_cascades=int(_first(args.n, file_cfg.get("n_cascades"), 1)),
    )

    manifest = RunManifest("synth", __version__, config.seed, config.to_dict())
    if args.config:
        manifest.add_input(args.config)

    n_events = 0
    with _Timer(manifest, "simulate"):
        for idx in range(config.n_cascades):
            sim = simulate_one(config, idx)
            log_path = out / f"cascade-{idx:04d}.jsonl"
            truth_path = out / f"cascade-{idx:04d}.truth.json"
            with open(log_path, "w") as fh:
                fh.write(sim.events_jsonl())
            with open(truth_path, "w") as fh:
                fh.write(sim.truth_json())
            manifest.add_output(log_path)
            manifest.add_output(truth_path)
            n_events += len(sim.events)

    manifest.write(out / "manifest.json")
    print(f"model={kind.value} cascades={config.n_cascades} events={n_events} "
          f"seed={config.seed}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def cmd_report(args) -> int:
    out = _out_dir(args)
    rows = read_rows_csv(args.rows_csv)
    if not rows:
        raise ValueError(f"no cascade rows in {args.rows_csv}")
    manifest = RunManifest("report", __version__, None, {"rows_csv": str(args.rows_csv)})
    manifest.add_input(args.rows_csv)

    report = ComparisonReport.from_rows(
        rows, metadata={"source_rows": os.path.basename(args.rows_csv)}
    )
    with _Timer(manifest, "write"):
        summary_path = out / "comparison_summary.json"
        hist_path = out / "error_histogram.csv"
        report.write_json(summary_path)
        report.write_histogram_csv(hist_path)

    manifest.add_output(summary_path)
    manifest.add_output(hist_path)
    manifest.write(out / "manifest.json")
    for name in MODEL_NAMES:
        med = report.summary[name]["median_error"]
        print(f"{name}: median_error={'-' if med is None else f'{med:.6g}'}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser and entry point
# ---------------------------------------------------------------------------

def _add_fit_flags(sp, with_jobs=False):
    sp.add_argument("--seed", type=int, default=0, help="RNG seed for start sampling")
    sp.add_argument("--starts", type=int, default=None, help="multi-start count")
    sp.add_argument("--max-evals", type=int, default=None,
                    help="objective evaluation budget per start")
    sp.add_argument("--substeps", type=int, default=None,
                    help="integrator substeps per hour")
    sp.add_argument("--bounds-file", default=None,
                    help="JSON bounds box, flat list or keyed by model")
    if with_jobs:
        sp.add_argument("--jobs", type=int, default=None,
                        help="worker processes (default: CPU count)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cascadefit",
        description="Reconstruct tweet cascades and fit compartmental diffusion models.",
    )
    parser.add_argument("--version", action="version",
                        version=f"cascadefit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("build-cascades",
                        help="parse a JSONL event log into cascade files")
    sp.add_argument("input", help="JSONL event log")
    sp.add_argument("--out", required=True, help="output directory")
    sp.add_argument("--bundle", action="store_true",
                    help="write one bundled cascades.json instead of per-root files")
    sp.add_argument("--strict", action="store_true",
                    help="fail on the first malformed line")
    sp.add_argument("--min-size", type=int, default=0,
                    help="drop cascades smaller than this")
    sp.add_argument("--top-k", type=int, default=None,
                    help="keep only the k largest cascades")
    sp.add_argument("--horizon", type=int, default=None,
                    help="fixed binning horizon in hours (default: last reaction)")
    sp.set_defaults(func=cmd_build_cascades)

    sp = sub.add_parser("fit", help="fit one model to one cascade file")
    sp.add_argument("cascade", help="cascade JSON file")
    sp.add_argument("--model", required=True, choices=[k.value for k in ModelKind])
    sp.add_argument("--out", required=True)
    _add_fit_flags(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("compare",
                        help="fit all three models across a cascade directory")
    sp.add_argument("cascade_dir", help="directory of *.cascade.json files")
    sp.add_argument("--out", required=True)
    _add_fit_flags(sp, with_jobs=True)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("synth", help="generate synthetic cascades with known truth")
    sp.add_argument("--out", required=True)
    sp.add_argument("--model", choices=["seiz", "cdseiz"], default=None)
    sp.add_argument("--config", default=None, help="JSON config file")
    sp.add_argument("--n", type=int, default=None, help="number of cascades")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--horizon", type=int, default=None, help="hours simulated")
    sp.add_argument("--agents", type=int, default=None, help="population size")
    sp.add_argument("--i0", default=None,
                    help="initial infected per channel, e.g. '2' or '2,1,1'")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("report",
                        help="recompute summary and histogram from a rows CSV")
    sp.add_argument("rows_csv", help="comparison_rows.csv from an earlier compare")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, DuplicateIdError, ClockSkewError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except FitFailedError as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (OSError, ValueError, KeyError, DegenerateTargetError) as exc:
        log.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
