"""Command-line front end.

    qprop run     --config CFG [--seed N] [--out DIR] [--window W] [--suite NAME]
    qprop ablate  --config CFG [--seed N] [--out DIR] [--window W] [--suite NAME]
    qprop eval    PRED_DIR GT_DIR [--out DIR]
    qprop render  --config CFG [--seed N] [--out DIR] [--suite NAME]

Exit codes: 0 success, 1 runtime error, 2 invalid config or input files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from qprop import __version__
from qprop.config import CustomAxis, RunConfig, effective_window, load_config
from qprop.errors import BadScript, ConfigError, QPropError
from qprop.geometry import read_rle, write_rle
from qprop.metrics import PRECISION_THRESHOLDS, MetricsReport, evaluate_video
from qprop.runner import ablation_suite, default_axes, run
from qprop.scenario import FAMILIES, generate, make_scenario

log = logging.getLogger("qprop")

EXIT_OK, EXIT_RUNTIME, EXIT_INPUT = 0, 1, 2
MASK_PATTERN = "frame_%04d.rle"


class InputMismatch(QPropError):
    """Prediction and ground-truth mask directories do not line up."""


# -- deterministic output ----------------------------------------------------


def round_floats(obj):
    """Recursively round floats to 6 significant digits."""
    if isinstance(obj, float):
        return float(f"{obj:.6g}")
    if isinstance(obj, dict):
        return {str(k): round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(round_floats(obj), sort_keys=True, indent=2) + "\n"


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))


def _fmt(v) -> str:
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def table_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


# -- commands ----------------------------------------------------------------


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.seeds = [args.seed]
    if getattr(args, "out", None) is not None:
        cfg.out = Path(args.out)
    if getattr(args, "window", None) is not None:
        if args.window < 0:
            raise ConfigError("--window must be >= 0", source="--window")
        cfg.window = args.window
    if getattr(args, "suite", None) is not None:
        if args.suite not in FAMILIES:
            raise ConfigError(f"unknown suite {args.suite!r}; have {list(FAMILIES)}", source="--suite")
        cfg.suite, cfg.scenario, cfg.scenario_source = args.suite, None, None
    return cfg


def _run_dir(cfg: RunConfig, name: str, seed: int) -> Path:
    return cfg.out / f"{name}_seed{seed}"


def cmd_run(cfg: RunConfig) -> int:
    snapshot = cfg.snapshot()
    summary = []
    for spec, seed in cfg.scenarios():
        oracle = replace(cfg.oracle, seed=seed)
        trace = run(spec, oracle, cfg.propagation, effective_window(cfg.window))
        report = trace.metrics()
        d = _run_dir(cfg, spec.name, seed)
        body = trace.to_dict()
        # mode and window live in the config snapshot, which canonicalises window 1 to 0
        body.pop("mode"), body.pop("window"), body.pop("config")
        write_json(d / "trace.json", {"config": snapshot, "seed": seed, "scenario": spec.name, "trace": body})
        write_json(d / "metrics.json", {"config": snapshot, "seed": seed, "scenario": spec.name,
                                        "metrics": report.to_dict()})
        if cfg.save_masks:
            (d / "pred").mkdir(parents=True, exist_ok=True)
            (d / "gt").mkdir(parents=True, exist_ok=True)
            for t, (p, g) in enumerate(zip(trace.output_masks(), trace.gt_masks())):
                write_rle(d / "pred" / (MASK_PATTERN % t), p)
                write_rle(d / "gt" / (MASK_PATTERN % t), g)
        summary.append({"scenario": spec.name, "seed": seed, "j": report.j_mean,
                        "f": report.f_mean, "jf": report.jf_mean})
        log.info("%s seed %d: J&F %.4f", spec.name, seed, report.jf_mean)
    write_json(cfg.out / "metrics.json", {"config": snapshot, "runs": summary})
    cols = ["scenario", "seed", "j", "f", "jf"]
    (cfg.out / "metrics.csv").write_text(table_csv(summary, cols))
    return EXIT_OK


def _axis_grids(cfg: RunConfig) -> list[tuple[str, list]]:
    builtin = default_axes(cfg.propagation)
    out = []
    for axis in cfg.ablation.axes:
        if isinstance(axis, CustomAxis):
            out.append((axis.name, axis.variants))
        else:
            out.append((axis, builtin[axis]))
    return out


def ablation_rows(rows) -> list[dict]:
    table = []
    for r in rows:
        rep = r.report
        row = {"variant": r.variant, "runs": r.runs, "j": rep.j_mean, "f": rep.f_mean, "jf": rep.jf_mean,
               "overall_iou": rep.overall_iou, "mean_iou": rep.mean_iou}
        for k in PRECISION_THRESHOLDS:
            row[f"p@{k:.1f}"] = rep.precision_at[k]
        row["config"] = r.config.to_dict()
        table.append(row)
    return table


def cmd_ablate(cfg: RunConfig, workers: int = 1) -> int:
    snapshot = cfg.snapshot()
    snapshot["ablation_suites"] = sorted(cfg.ablation.suites)
    suites = {name: [make_scenario(name, s) for s in cfg.seeds] for name in cfg.ablation.suites}
    window = effective_window(cfg.window)
    cols = ["variant", "runs", "j", "f", "jf", "overall_iou", "mean_iou"] + [
        f"p@{k:.1f}" for k in PRECISION_THRESHOLDS
    ]
    for name, grid in _axis_grids(cfg):
        rows = ablation_rows(ablation_suite(cfg.oracle, suites, grid, window=window, workers=workers))
        write_json(cfg.out / f"ablation_{name}.json", {"axis": name, "config": snapshot,
                                                       "seeds": list(cfg.seeds), "rows": rows})
        (cfg.out / f"ablation_{name}.csv").write_text(table_csv(rows, cols))
        for row in rows:
            log.info("%s | %-24s J&F %.4f", name, row["variant"], row["jf"])
    return EXIT_OK


def _mask_files(d: Path) -> dict[str, Path]:
    if not d.is_dir():
        raise InputMismatch(f"not a directory: {d}")
    return {p.name: p for p in sorted(d.glob("frame_*.rle"))}


def evaluate_dirs(pred_dir: Path, gt_dir: Path, tolerance_px: int | None = None) -> MetricsReport:
    preds, gts = _mask_files(pred_dir), _mask_files(gt_dir)
    if not gts:
        raise InputMismatch(f"no frame_*.rle files in {gt_dir}")
    if set(preds) != set(gts):
        missing = sorted(set(gts) - set(preds))
        extra = sorted(set(preds) - set(gts))
        raise InputMismatch(f"mask file sets differ; missing {missing[:5]}, unexpected {extra[:5]}")
    names = sorted(gts)
    try:
        pm = [read_rle(preds[n]) for n in names]
        gm = [read_rle(gts[n]) for n in names]
    except ValueError as exc:
        raise InputMismatch(str(exc)) from None
    for n, p, g in zip(names, pm, gm):
        if p.shape != g.shape:
            raise InputMismatch(f"{n}: prediction {p.shape} vs ground truth {g.shape}")
    return evaluate_video(pm, gm, tolerance_px)


def cmd_eval(pred_dir: Path, gt_dir: Path, out: Path, tolerance_px: int | None = None) -> int:
    report = evaluate_dirs(pred_dir, gt_dir, tolerance_px)
    write_json(out / "metrics.json", {
        "config": {"pred_dir": str(pred_dir), "gt_dir": str(gt_dir), "tolerance_px": tolerance_px},
        "seed": None,
        "metrics": report.to_dict(),
    })
    log.info("J %.4f  F %.4f  J&F %.4f", report.j_mean, report.f_mean, report.jf_mean)
    return EXIT_OK


def cmd_render(cfg: RunConfig) -> int:
    """Export the referent's ground-truth masks as RLE files, one directory per run."""
    for spec, seed in cfg.scenarios():
        d = _run_dir(cfg, spec.name, seed) / "gt"
        d.mkdir(parents=True, exist_ok=True)
        for f in generate(spec):
            write_rle(d / (MASK_PATTERN % f.frame_index), f.referent.mask)
    return EXIT_OK


# -- entry point -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qprop", description="Query-propagation simulator.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def config_cmd(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", required=True, help="run config (YAML)")
        sp.add_argument("--seed", type=int, help="run this seed only")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--suite", help=f"builtin scenario family {list(FAMILIES)}")
        return sp

    sp = config_cmd("run", "run the pipeline and write traces and metrics")
    sp.add_argument("--window", type=int, help="0 = online, otherwise clip length")
    sp = config_cmd("ablate", "write one ablation table per axis")
    sp.add_argument("--window", type=int, help="0 = online, otherwise clip length")
    sp.add_argument("--workers", type=int, default=1)
    config_cmd("render", "export ground-truth referent masks")

    sp = sub.add_parser("eval", help="score predicted RLE masks against ground truth")
    sp.add_argument("pred_dir", type=Path)
    sp.add_argument("gt_dir", type=Path)
    sp.add_argument("--out", type=Path, default=Path("results"))
    sp.add_argument("--tolerance", type=int, default=None, help="boundary tolerance in pixels")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "eval":
            return cmd_eval(args.pred_dir, args.gt_dir, args.out, args.tolerance)
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "ablate":
            return cmd_ablate(cfg, max(1, args.workers))
        return cmd_render(cfg)
    except (ConfigError, BadScript, InputMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
