"""Batch command-line front end.

Subcommands: synth, segment, metrics, segeval, correlate, cv, longitudinal.
Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical
error; failures print one machine-parsable line on stderr. Reports embed
the seed and a config digest in a leading comment so identical runs produce
byte-identical files at any parallelism level.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import bodymetrics, evalharness, imgcore, segeval, segpipeline, stats, synthgen
from ._reports import (
    LB_PER_KG,
    comparison_columns,
    comparison_rows,
    config_digest,
    write_report,
)
from .errors import (
    CalfMetricsError,
    ConfigError,
    FitDiverged,
    HarnessError,
    InvalidK,
    InvalidParams,
    NumericalError,
)
from .ingest import (
    load_color_png,
    load_depth_frame,
    load_manifest,
    load_mask_labels,
    write_mask_labels,
    MaskLabel,
)
from .models import FEATURE_NAMES, GbmSearchSpace, gbm_random_search
from .runconfig import load_config, write_bundle_config

METRICS_COLUMNS = (
    "calf_id",
    "obs_date",
    "age_days",
    "width_px",
    "length_px",
    "contour_area_px2",
    "avg_height_mm",
    "volume_mm_px2",
    "body_weight_lb",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="calfmetrics", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset bundle")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("segment", help="segment every frame in the manifest")
    p.add_argument("--method", choices=("threshold", "labels"), default="threshold")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("metrics", help="extract per-observation median body metrics")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", choices=("threshold", "labels"), default="threshold")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--kg", action="store_true", help="report weights in kilograms")

    p = sub.add_parser("segeval", help="score predicted masks against ground truth")
    p.add_argument("--config", required=True)
    p.add_argument("--truth", required=True, help="ground-truth labels.jsonl")
    p.add_argument(
        "--pred",
        action="append",
        required=True,
        metavar="NAME=PATH",
        help="predicted masks.jsonl, repeatable for multi-method comparison",
    )
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--alpha", type=float, default=0.05)

    p = sub.add_parser("correlate", help="correlation matrices from metrics.csv")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--quartiles", action="store_true")
    p.add_argument("--mantel", action="store_true")
    p.add_argument("--n-perm", type=int, default=999)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("cv", help="grouped k-fold comparison of OLS and GBM")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--repeats", type=int, default=100)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--per-fold", action="store_true")
    p.add_argument("--search-iterations", type=int, default=50)
    p.add_argument("--paper-scale", action="store_true", help="use the full 1000-draw search")
    p.add_argument("--kg", action="store_true")

    p = sub.add_parser("longitudinal", help="chronological-split comparison of OLS/GBM/LMM")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--ratios", default="90,80,70,60,50")
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--min-points", type=int, default=5)
    p.add_argument("--search-iterations", type=int, default=50)
    p.add_argument("--paper-scale", action="store_true")
    p.add_argument("--ml", action="store_true", help="fit the mixed model by ML instead of REML")
    p.add_argument("--kg", action="store_true")
    return parser


def resolve_seed(args, rc=None) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("CALFMETRICS_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"CALFMETRICS_SEED is not an integer: {env!r}") from None
    if rc is not None and rc.seed is not None:
        return rc.seed
    raise UsageError("a seed is required (--seed, CALFMETRICS_SEED, or [run] seed)")


# --- shared pipeline pieces ---------------------------------------------------

def _segment_frames(rc, method: str, jobs: int):
    """Run segmentation over every manifest frame; returns ordered outcomes."""
    if rc.data_dir is None:
        raise ConfigError("config needs [paths] data_dir")
    observations = load_manifest(rc.data_dir / "manifest.csv")
    frames_dir = rc.data_dir / "frames"
    frame_ids = [fid for obs in observations for fid in obs.frame_ids]

    if method == "threshold":
        if rc.threshold is None:
            raise ConfigError("config needs a [threshold] section for this method")

        def run_one(i):
            frame = load_depth_frame(frames_dir, frame_ids[i], rc.camera_height_mm)
            return segpipeline.segment_threshold(frame, rc.threshold)

    else:
        labels = load_mask_labels(rc.data_dir / "labels.jsonl")
        by_frame: dict[str, list] = {}
        for label in labels:
            by_frame.setdefault(label.frame_id, []).append(label)

        def run_one(i):
            fid = frame_ids[i]
            color = load_color_png(frames_dir / f"{fid}.png")
            h, w = color.shape[:2]
            return segpipeline.segment_from_labels(fid, by_frame.get(fid, []), w, h)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_one, range(len(frame_ids))))
    else:
        outcomes = [run_one(i) for i in range(len(frame_ids))]
    return observations, outcomes


def _write_segmentation_outputs(out_dir: Path, outcomes, meta):
    rows = []
    masks = []
    for o in outcomes:
        bbox = o.bbox or ("", "", "", "")
        rows.append(
            [
                o.frame_id,
                int(o.success),
                o.area,
                bbox[0],
                bbox[1],
                bbox[2],
                bbox[3],
                o.match_distance,
                ";".join(f"{i}:{reason}" for i, reason in o.rejection_log),
            ]
        )
        if o.success:
            masks.append(MaskLabel(o.frame_id, o.contour.astype(np.float64)))
    write_report(
        out_dir / "segmentation.csv",
        meta,
        ["frame_id", "success", "area", "bbox_x", "bbox_y", "bbox_w", "bbox_h", "match_distance", "rejections"],
        rows,
    )
    write_mask_labels(out_dir / "masks.jsonl", masks)


def _metrics_table_rows(rc, observations, outcomes):
    """Median-aggregated metric rows joined with manifest age/weight."""
    frames_dir = rc.data_dir / "frames"
    outcome_by_id = {o.frame_id: o for o in outcomes}
    per_frame = []
    for obs in observations:
        for fid in obs.frame_ids:
            o = outcome_by_id[fid]
            if not o.success:
                continue
            frame = load_depth_frame(frames_dir, fid, rc.camera_height_mm)
            m = bodymetrics.extract_metrics(
                o.mask, frame.depth_mm, rc.camera_height_mm, mode=rc.volume_mode
            )
            per_frame.append((obs.calf_id, obs.obs_date, m))
    aggregated = bodymetrics.aggregate_median(per_frame)
    info = {(obs.calf_id, obs.obs_date): obs for obs in observations}
    rows = []
    for calf_id, obs_date, m in aggregated:
        obs = info[(calf_id, obs_date)]
        rows.append(
            [
                calf_id,
                obs_date.isoformat(),
                obs.age_days,
                m.width_px,
                m.length_px,
                m.contour_area_px2,
                m.avg_height_mm,
                m.volume_mm_px2,
                obs.body_weight_lb,
            ]
        )
    return rows


def load_metrics_csv(path) -> evalharness.MetricsTable:
    """Read a metrics.csv (as written by the metrics subcommand)."""
    import csv
    from datetime import date as _date

    from .errors import InvalidTarget, SchemaError
    from .errors import ParseError as _ParseError

    calf_ids, dates, X, y = [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            fh.seek(0)
        reader = csv.DictReader(fh)
        for col in METRICS_COLUMNS:
            if reader.fieldnames is None or col not in reader.fieldnames:
                raise SchemaError(col, path)
        for lineno, row in enumerate(reader, start=3):
            try:
                calf_ids.append(row["calf_id"])
                dates.append(_date.fromisoformat(row["obs_date"]))
                X.append(
                    [
                        float(row["age_days"]),
                        float(row["length_px"]),
                        float(row["width_px"]),
                        float(row["avg_height_mm"]),
                        float(row["volume_mm_px2"]),
                        float(row["contour_area_px2"]),
                    ]
                )
                weight = row["body_weight_lb"]
                if weight is None or weight.strip() == "":
                    raise InvalidTarget(
                        f"row {lineno}: body weight required for model evaluation"
                    )
                y.append(float(weight))
            except ValueError:
                raise _ParseError("bad numeric field", lineno, path) from None
    return evalharness.MetricsTable(
        np.array(calf_ids, dtype=object),
        np.array(dates, dtype=object),
        np.array(X, dtype=np.float64),
        np.array(y, dtype=np.float64),
    )


def _tuned_gbm(table, iterations: int, seed: int):
    space = GbmSearchSpace()
    return gbm_random_search(
        table.X, table.y, table.calf_ids, space, iterations=iterations, seed=seed
    )


# --- subcommand implementations ----------------------------------------------

def cmd_synth(args) -> int:
    rc = load_config(args.config)
    if rc.synth is None:
        raise ConfigError("config needs a [synth] section")
    seed = resolve_seed(args, rc)
    cfg = rc.synth
    if seed != cfg.seed:
        from dataclasses import replace

        cfg = replace(cfg, seed=seed)
    out = Path(args.out)
    dataset = synthgen.generate(cfg, out)
    write_bundle_config(out, cfg, dataset.params)
    print(f"wrote {len(dataset.frames)} frames to {out}")
    return 0


def cmd_segment(args) -> int:
    rc = load_config(args.config)
    seed = resolve_seed(args, rc)
    observations, outcomes = _segment_frames(rc, args.method, args.jobs)
    meta = {
        "tool": "calfmetrics-segment",
        "method": args.method,
        "seed": seed,
        "config_sha256": config_digest(rc.raw_bytes, args.method),
        "n_frames": len(outcomes),
        "success_rate": repr(segpipeline.success_rate(outcomes)),
    }
    _write_segmentation_outputs(Path(args.out), outcomes, meta)
    print(f"segmented {sum(o.success for o in outcomes)}/{len(outcomes)} frames")
    return 0


def cmd_metrics(args) -> int:
    rc = load_config(args.config)
    seed = resolve_seed(args, rc)
    observations, outcomes = _segment_frames(rc, args.method, args.jobs)
    rows = _metrics_table_rows(rc, observations, outcomes)
    if args.kg:
        for row in rows:
            if row[-1] is not None:
                row[-1] = row[-1] * LB_PER_KG
    meta = {
        "tool": "calfmetrics-metrics",
        "method": args.method,
        "volume_mode": rc.volume_mode,
        "seed": seed,
        "config_sha256": config_digest(rc.raw_bytes, args.method, args.kg),
        "weight_unit": "kg" if args.kg else "lb",
    }
    write_report(Path(args.out) / "metrics.csv", meta, list(METRICS_COLUMNS), rows)
    print(f"wrote {len(rows)} observation rows")
    return 0


def cmd_segeval(args) -> int:
    rc = load_config(args.config)
    seed = resolve_seed(args, rc)
    if rc.data_dir is None:
        raise ConfigError("config needs [paths] data_dir")
    observations = load_manifest(rc.data_dir / "manifest.csv")
    frame_ids = [fid for obs in observations for fid in obs.frame_ids]
    frames_dir = rc.data_dir / "frames"
    sample = load_color_png(frames_dir / f"{frame_ids[0]}.png")
    h, w = sample.shape[:2]

    truth_labels = {l.frame_id: l for l in load_mask_labels(args.truth)}
    methods = {}
    for spec in args.pred:
        if "=" not in spec:
            raise UsageError(f"--pred expects NAME=PATH, got {spec!r}")
        name, _, path = spec.partition("=")
        methods[name] = {l.frame_id: l for l in load_mask_labels(path)}

    scored_ids = [fid for fid in frame_ids if fid in truth_labels]
    scores: dict[str, list] = {name: [] for name in methods}
    success: dict[str, int] = {name: 0 for name in methods}
    for fid in scored_ids:
        truth_mask = imgcore.rasterize_polygon(truth_labels[fid].polygon, w, h)
        for name, preds in methods.items():
            if fid not in preds:
                continue
            success[name] += 1
            pred_mask = imgcore.rasterize_polygon(preds[fid].polygon, w, h)
            scores[name].append(segeval.score_masks(pred_mask, truth_mask))

    meta = {
        "tool": "calfmetrics-segeval",
        "seed": seed,
        "config_sha256": config_digest(rc.raw_bytes, *sorted(methods)),
        "n_truth_frames": len(scored_ids),
    }
    columns = ["metric", "method", "n", "success_pct", "mean", "sd", "p", "p_adjusted", "eta2", "letters"]
    rows = []
    if len(methods) >= 2:
        comparison = segeval.compare_methods(scores, alpha=args.alpha)
        for row in comparison.rows:
            for m_i, name in enumerate(comparison.methods):
                rows.append(
                    [
                        row.metric,
                        name,
                        comparison.n_scores[m_i],
                        100.0 * success[name] / max(len(scored_ids), 1),
                        row.means[m_i],
                        row.sds[m_i],
                        row.p,
                        row.p_adjusted,
                        row.eta2,
                        row.letters[m_i],
                    ]
                )
    else:
        (name,) = methods.keys()
        for metric in segeval.METRIC_NAMES:
            vals = np.array([getattr(s, metric) for s in scores[name]])
            rows.append(
                [
                    metric,
                    name,
                    len(vals),
                    100.0 * success[name] / max(len(scored_ids), 1),
                    float(vals.mean()) if len(vals) else float("nan"),
                    float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
                    None,
                    None,
                    None,
                    "",
                ]
            )
    write_report(Path(args.out) / "segeval_report.csv", meta, columns, rows)
    print(f"scored {len(scored_ids)} frames across {len(methods)} method(s)")
    return 0


CORR_LABELS = ("width_px", "avg_height_mm", "volume_mm_px2", "contour_area_px2", "length_px", "body_weight_lb")


def cmd_correlate(args) -> int:
    seed = resolve_seed(args) if (args.mantel or args.seed is not None) else 0
    table = load_metrics_csv(args.metrics)
    digest = config_digest(Path(args.metrics).read_bytes(), args.n_perm, seed)
    out = Path(args.out)
    columns = {
        "width_px": table.X[:, 2],
        "avg_height_mm": table.X[:, 3],
        "volume_mm_px2": table.X[:, 4],
        "contour_area_px2": table.X[:, 5],
        "length_px": table.X[:, 1],
        "body_weight_lb": table.y,
    }
    meta = {"tool": "calfmetrics-correlate", "seed": seed, "config_sha256": digest}

    def matrix_rows(m):
        return [[lab] + list(vals) for lab, vals in zip(m.labels, m.values)]

    full = stats.corr_matrix(columns)
    write_report(out / "correlation.csv", meta, ["variable"] + full.labels, matrix_rows(full))

    quartile_mats = None
    if args.quartiles or args.mantel:
        ages = table.X[:, 0]
        quartile_mats = stats.age_quartile_matrices(ages, columns)
        if args.quartiles:
            for q, m in enumerate(quartile_mats, start=1):
                write_report(
                    out / f"correlation_q{q}.csv",
                    {**meta, "quartile": q},
                    ["variable"] + m.labels,
                    matrix_rows(m),
                )
    if args.mantel:
        rows = []
        for i in range(4):
            for j in range(i + 1, 4):
                res = stats.mantel(
                    quartile_mats[i], quartile_mats[j], n_perm=args.n_perm, seed=seed
                )
                rows.append([f"q{i + 1}", f"q{j + 1}", res.r, res.p, res.n_perm])
        write_report(
            out / "mantel.csv", meta, ["group_a", "group_b", "r", "p", "n_perm"], rows
        )
    print("wrote correlation reports")
    return 0


def cmd_cv(args) -> int:
    seed = resolve_seed(args)
    table = load_metrics_csv(args.metrics)
    search_iters = 1000 if args.paper_scale else args.search_iterations
    hyper = _tuned_gbm(table, search_iters, seed)
    model_fns = {"ols": evalharness.ols_spec(), "gbm": evalharness.gbm_spec(hyper)}
    result = evalharness.repeated_cv(
        table,
        model_fns,
        k=args.k,
        repeats=args.repeats,
        seed=seed,
        per_fold=args.per_fold,
        jobs=args.jobs,
    )
    meta = {
        "tool": "calfmetrics-cv",
        "seed": seed,
        "config_sha256": config_digest(
            Path(args.metrics).read_bytes(), args.k, args.repeats, args.per_fold, args.kg, search_iters
        ),
        "k": args.k,
        "repeats": args.repeats,
        "gbm": f"lr={hyper.learning_rate!r};n={hyper.n_estimators};a={hyper.l1_alpha!r};l={hyper.l2_lambda!r}",
        "weight_unit": "kg" if args.kg else "lb",
    }
    write_report(
        Path(args.out) / "cv_report.csv",
        meta,
        comparison_columns(result.models),
        comparison_rows(result, to_kg=args.kg),
    )
    print(f"cv complete: {args.repeats} repeats of {args.k}-fold")
    return 0


def cmd_longitudinal(args) -> int:
    seed = resolve_seed(args)
    table = load_metrics_csv(args.metrics)
    try:
        ratios = tuple(int(r) for r in args.ratios.split(","))
    except ValueError:
        raise UsageError(f"bad --ratios {args.ratios!r}") from None
    search_iters = 1000 if args.paper_scale else args.search_iterations
    reduced = evalharness.drop_short_series(table, args.min_points)
    if len(reduced) == 0:
        raise InvalidK(f"no calf has >= {args.min_points} points")
    hyper = _tuned_gbm(reduced, search_iters, seed)
    model_fns = {
        "ols": evalharness.ols_spec(),
        "gbm": evalharness.gbm_spec(hyper),
        "lmm": evalharness.lmm_spec("ml" if args.ml else "reml"),
    }
    result = evalharness.longitudinal_eval(
        table,
        model_fns,
        ratios=ratios,
        iterations=args.iterations,
        seed=seed,
        min_points=args.min_points,
        jobs=args.jobs,
    )
    meta = {
        "tool": "calfmetrics-longitudinal",
        "seed": seed,
        "config_sha256": config_digest(
            Path(args.metrics).read_bytes(), args.ratios, args.iterations,
            args.min_points, args.ml, args.kg, search_iters,
        ),
        "iterations": args.iterations,
        "gbm": f"lr={hyper.learning_rate!r};n={hyper.n_estimators};a={hyper.l1_alpha!r};l={hyper.l2_lambda!r}",
        "lmm_method": "ml" if args.ml else "reml",
        "weight_unit": "kg" if args.kg else "lb",
    }
    write_report(
        Path(args.out) / "longitudinal_report.csv",
        meta,
        comparison_columns(result.models),
        comparison_rows(result, to_kg=args.kg),
    )
    print(f"longitudinal evaluation complete: {args.iterations} iterations")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "segment": cmd_segment,
    "metrics": cmd_metrics,
    "segeval": cmd_segeval,
    "correlate": cmd_correlate,
    "cv": cmd_cv,
    "longitudinal": cmd_longitudinal,
}

_USAGE_ERRORS = (UsageError, ConfigError, InvalidParams, InvalidK, ValueError)
_NUMERICAL_ERRORS = (NumericalError, FitDiverged)


def _classify(exc) -> int:
    if isinstance(exc, HarnessError):
        return _classify(exc.cause)
    if isinstance(exc, _NUMERICAL_ERRORS):
        return 3
    if isinstance(exc, _USAGE_ERRORS):
        return 1
    if isinstance(exc, (CalfMetricsError, OSError)):
        return 2
    raise exc


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - single reporting point
        code = _classify(exc)
        detail = str(exc).replace("\n", " ").replace('"', "'")
        print(f'ERROR code={code} kind={type(exc).__name__} detail="{detail}"', file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
