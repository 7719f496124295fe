"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bezier import fit_fixed_endpoints, shape_errors
from .config import Config
from .errors import CalibrationError, DataError, FbgBezierError, UsageError
from .eval_stats import (compare_models, compute_metrics, error_histogram, format_table,
                         pearson_r, OUTPUT_NAMES)
from .field_synth import generate_dataset, params_dict
from .learn.analysis import feature_importance, learning_curve
from .learn.dataset import (Dataset, load_csv, load_matrix_csv, save_csv, save_matrix_csv,
                            split, FEATURE_COLUMNS, TARGET_COLUMNS)
from .learn.forest import ForestModel, train_forest
from .learn.modelio import load_model, save_model
from .learn.net import train_net
from .sensor_model import FrameMode
from .stream import reconstruct_lines, replay_server, stream_client

log = logging.getLogger("fbgbezier")


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps({"level": record.levelname, "logger": record.name,
                           "message": record.getMessage()})


def _setup_logging(json_logs: bool, verbose: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonFormatter() if json_logs else
                         logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(logging.DEBUG if verbose else logging.INFO)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n",
                    encoding="utf-8")


def _outdir(cfg: Config) -> Path:
    out = Path(cfg["output"])
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _split_dataset(cfg: Config, path) -> Dataset:
    data = load_csv(path)
    return split(data, tuple(cfg["split"]), cfg.seed)


def _dataset_path(cfg: Config, args) -> Path:
    path = Path(args.dataset) if args.dataset else Path(cfg["output"]) / "dataset.csv"
    if not path.exists():
        raise DataError(f"dataset {path} does not exist")
    return path


# ------------------------------------------------------------- commands ----

def cmd_gen_data(cfg: Config, args) -> int:
    seed = cfg.seed
    out = _outdir(cfg)
    frames_dir = out / "frames"
    frames_dir.mkdir(exist_ok=True)
    grid, synth, geom = cfg.grid(), cfg.synth(), cfg.geometry()
    gen = generate_dataset(grid, synth, seed, geom, float(cfg["robot_length_mm"]),
                           FrameMode(cfg["frame_mode"]), frames_dir)
    dataset_path = out / "dataset.csv"
    save_csv(dataset_path, Dataset(gen.features, gen.targets))
    files = [dataset_path] + sorted(frames_dir.glob("scenario_*.ndjson"))
    manifest = {
        "seed": seed,
        "grid": cfg["grid"],
        "synth": params_dict(synth),
        "frame_mode": cfg["frame_mode"],
        "robot_length_mm": cfg["robot_length_mm"],
        "calibration_sha256": _sha256(Path(cfg["calibration"])) if cfg.get("calibration") else None,
        "n_scenarios": len(grid),
        "n_rows": int(len(gen.features)),
        "files": {str(p.relative_to(out)): _sha256(p) for p in files},
    }
    _write_json(out / "manifest.json", manifest)
    log.info("wrote %d rows from %d scenarios to %s", len(gen.features), len(grid), out)
    return 0


def _open_lines(source: str):
    if source == "-":
        return sys.stdin.buffer
    path = Path(source)
    if not path.exists():
        raise DataError(f"frames file {path} does not exist")
    return path.open("rb")


def cmd_reconstruct(cfg: Config, args) -> int:
    geom = cfg.geometry()
    robot_length = float(cfg["robot_length_mm"])
    if robot_length > geom.sensing_length:
        raise CalibrationError(f"robot length {robot_length} mm exceeds the sensing length "
                               f"{geom.sensing_length} mm")
    out = _outdir(cfg)
    fmt = f"%.{args.precision}g"
    bezier_path = out / (args.name or "bezier.csv")
    fh = _open_lines(args.frames)
    try:
        with bezier_path.open("w", encoding="utf-8", newline="") as dst:
            rec = reconstruct_lines(fh, geom, dst, robot_length, fmt, midpoint=args.midpoint,
                                    parameterization=args.parameterization)
    finally:
        if fh is not sys.stdin.buffer:
            fh.close()
    if rec.n_ok == 0 and rec.n_shape_mismatch > 0:
        raise CalibrationError(f"no frame matches the calibration ({geom.n_gratings} gratings x "
                               f"{geom.n_cores} cores); {rec.n_shape_mismatch} frames have "
                               "another layout")
    if args.centerlines:
        with (out / "centerlines.csv").open("w", encoding="utf-8", newline="") as dst:
            dst.write("frame,idx,x_mm,y_mm,z_mm\n")
            for k, r in enumerate(rec.results):
                for i, p in enumerate(r.robot.points):
                    dst.write(f"{k},{i}," + ",".join(fmt % v for v in p) + "\n")
    print(rec.summary(), file=sys.stderr)
    return 0


def _read_point_groups(path: Path):
    """Points from ``frame,idx,x_mm,y_mm,z_mm`` rows or a bare ``x,y,z`` table."""
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader, [])]
            rows = [r for r in reader if r]
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    try:
        arr = np.array(rows, dtype=float)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric entry ({exc})") from exc
    if arr.size == 0:
        raise DataError(f"{path}: no points")
    if header[:1] == ["frame"] and arr.shape[1] == 5:
        frames = arr[:, 0].astype(int)
        return [(int(f), arr[frames == f][:, 2:5]) for f in dict.fromkeys(frames)]
    if arr.shape[1] != 3:
        raise DataError(f"{path}: expected x,y,z columns, got {arr.shape[1]} columns")
    return [(0, arr)]


def cmd_fit_bezier(cfg: Config, args) -> int:
    path = Path(args.points)
    fmt = f"%.{args.precision}g"
    lines = ["frame," + ",".join(f"{c}_mm" for c in TARGET_COLUMNS) + ",fit_rmse_mm"]
    for frame, pts in _read_point_groups(path):
        fit = fit_fixed_endpoints(pts, parameterization=args.parameterization,
                                  target_length=args.target_length)
        lines.append(f"{frame}," + ",".join(fmt % v for v in fit.curve.to_vector())
                     + "," + fmt % fit.rmse)
    text = "\n".join(lines) + "\n"
    if args.output:
        out = _outdir(cfg)
        (out / "bezier_fit.csv").write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_train(cfg: Config, args) -> int:
    seed = cfg.seed
    data = _split_dataset(cfg, _dataset_path(cfg, args))
    out = _outdir(cfg)
    t0 = time.perf_counter()
    if args.kind == "forest":
        fc = cfg["forest"]
        model = train_forest(data.train.features, data.train.targets, n_trees=int(fc["trees"]),
                             min_leaf=int(fc["min_leaf"]), mtry=int(fc["mtry"]), seed=seed,
                             bootstrap=bool(fc.get("bootstrap", True)),
                             n_jobs=int(fc.get("n_jobs", 1)))
        extra = {}
    else:
        nc = cfg["net"]
        model, trace = train_net(data, hidden=tuple(nc["hidden"]), seed=seed, mu0=nc["mu0"],
                                 mu_up=nc["mu_up"], mu_down=nc["mu_down"],
                                 max_epochs=int(nc["max_epochs"]), patience=int(nc["patience"]),
                                 val_fraction=float(nc["val_fraction"]))
        extra = {"trace": {"train_mse": trace.train_mse, "val_mse": trace.val_mse, "mu": trace.mu,
                           "best_epoch": trace.best_epoch, "stop_reason": trace.stop_reason}}
    seconds = time.perf_counter() - t0
    model_path = out / f"{args.kind}.json"
    save_model(model_path, model)
    if extra:
        _write_json(out / f"{args.kind}.trace.json", extra["trace"])
    _write_json(model_path.with_suffix(".timing.json"), {"train_seconds": seconds})
    log.info("trained %s on %d rows in %.2f s -> %s", args.kind, len(data.train), seconds, model_path)
    return 0


def _load_checked(path, n_features: int):
    model = load_model(path)
    n = model.n_features if isinstance(model, ForestModel) else model.layer_sizes[0]
    if n != n_features:
        raise DataError(f"{path}: model expects {n} features, dataset has {n_features}")
    return model


def cmd_predict(cfg: Config, args) -> int:
    data = _split_dataset(cfg, _dataset_path(cfg, args))
    part = data if args.split == "all" else getattr(data, args.split)
    model = _load_checked(args.model, part.features.shape[1])
    pred = model.predict(part.features)
    out = _outdir(cfg)
    name = args.name or f"predictions_{Path(args.model).stem}.csv"
    save_matrix_csv(out / name, pred)
    return 0


def _model_block(pred, truth, n_samples: int) -> dict:
    metrics = compute_metrics(pred, truth)
    d = shape_errors(pred, truth, n_samples)
    block = metrics.to_dict()
    block["pearson_r"] = pearson_r(pred, truth)
    block["shape_error_mm"] = {"mae": float(d.mean()), "p95": float(np.percentile(d, 95)),
                               "max": float(d.max())}
    return block, metrics


def _write_histogram(path: Path, counts, edges) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write("bin_lo_mm,bin_hi_mm," + ",".join(OUTPUT_NAMES) + "\n")
        for b in range(counts.shape[1]):
            fh.write(f"{edges[b]!r},{edges[b + 1]!r}," + ",".join(str(int(c)) for c in counts[:, b])
                     + "\n")


def cmd_evaluate(cfg: Config, args) -> int:
    ec = cfg["evaluate"]
    out = _outdir(cfg)
    n_mc, bins, n_shape = int(ec["n_mc"]), int(ec["histogram_bins"]), int(ec["shape_samples"])
    report, timing, preds = {}, {}, {}
    if args.pred or args.truth:
        if not (args.pred and args.truth):
            raise UsageError("--pred and --truth must be given together")
        truth = load_matrix_csv(args.truth)
        preds["pred"] = load_matrix_csv(args.pred)
    else:
        if not (args.forest or args.net):
            raise UsageError("give --forest and/or --net, or --pred with --truth")
        test = _split_dataset(cfg, _dataset_path(cfg, args)).test
        if len(test) == 0:
            raise DataError("test split is empty")
        truth = test.targets
        for kind, path in (("net", args.net), ("forest", args.forest)):
            if not path:
                continue
            model = _load_checked(path, test.features.shape[1])
            preds[kind] = model.predict(test.features)
            t = {"predict_seconds_per_sample": model.last_predict_seconds_per_sample}
            side = Path(path).with_suffix(".timing.json")
            if side.exists():
                t["train_seconds"] = json.loads(side.read_text(encoding="utf-8"))["train_seconds"]
            timing[kind] = t

    all_err = np.concatenate([(p - truth).ravel() for p in preds.values()])
    m = float(np.max(np.abs(all_err))) if all_err.size else 0.0
    rng = (-m, m) if m > 0 else (-1.0, 1.0)
    metrics = {}
    report["models"] = {}
    for kind, pred in preds.items():
        report["models"][kind], metrics[kind] = _model_block(pred, truth, n_shape)
        counts, edges = error_histogram(pred, truth, bins, rng)
        _write_histogram(out / f"histogram_{kind}.csv", counts, edges)
    if "net" in preds and "forest" in preds:
        comp = compare_models(preds["net"] - truth, preds["forest"] - truth, n_mc, cfg.seed,
                              metrics["net"], metrics["forest"])
        report["comparison"] = {"a": "net", "b": "forest", **comp.to_dict()}
        (out / "report.txt").write_text(format_table(metrics["net"], metrics["forest"]) + "\n",
                                        encoding="utf-8")
    else:
        kind = next(iter(metrics))
        (out / "report.txt").write_text(format_table(metrics[kind], metrics[kind],
                                                     (kind, kind)) + "\n", encoding="utf-8")
    _write_json(out / "report.json", report)
    if timing:
        _write_json(out / "timing.json", timing)
    sys.stdout.write((out / "report.txt").read_text(encoding="utf-8"))
    return 0


def cmd_importance(cfg: Config, args) -> int:
    data = _split_dataset(cfg, _dataset_path(cfg, args))
    model = _load_checked(args.model, data.features.shape[1])
    if not isinstance(model, ForestModel):
        raise DataError("importance needs a forest model")
    perm = feature_importance(model, data.train.features, data.train.targets, cfg.seed)
    out = _outdir(cfg)
    result = {"features": FEATURE_COLUMNS, "outputs": OUTPUT_NAMES,
              "permutation_pct": [[None if np.isnan(v) else float(v) for v in row] for row in perm],
              "impurity_pct": model.impurity_importance.tolist()}
    _write_json(out / "importance.json", result)
    with (out / "importance.csv").open("w", encoding="utf-8", newline="") as fh:
        fh.write("output," + ",".join(FEATURE_COLUMNS) + "\n")
        for name, row in zip(OUTPUT_NAMES, perm):
            fh.write(name + "," + ",".join("nan" if np.isnan(v) else repr(float(v)) for v in row)
                     + "\n")
    return 0


def cmd_learning_curve(cfg: Config, args) -> int:
    data = _split_dataset(cfg, _dataset_path(cfg, args))
    lc = cfg["learning_curve"]
    kind = args.kind or lc["kind"]
    fractions = args.fractions or lc["fractions"]
    if kind == "forest":
        fc = cfg["forest"]
        train_cfg = {"n_trees": int(fc["trees"]), "min_leaf": int(fc["min_leaf"]),
                     "mtry": int(fc["mtry"])}
    else:
        nc = cfg["net"]
        train_cfg = {"hidden": tuple(nc["hidden"]), "max_epochs": int(nc["max_epochs"]),
                     "patience": int(nc["patience"])}
    rows = learning_curve(data, fractions, cfg.seed, kind, **train_cfg)
    out = _outdir(cfg)
    with (out / f"learning_curve_{kind}.csv").open("w", encoding="utf-8", newline="") as fh:
        fh.write("fraction,n_train,test_rmse_mm\n")
        for r in rows:
            fh.write(f"{r['fraction']!r},{r['n_train']},{r['test_rmse']!r}\n")
    return 0


def cmd_replay_server(cfg: Config, args) -> int:
    net = cfg["network"]
    rate = float(args.rate if args.rate is not None else net["rate_hz"])
    if not rate > 0:
        raise UsageError("--rate must be positive")
    path = Path(args.frames)
    if not path.exists():
        raise DataError(f"frames file {path} does not exist")
    try:
        replay_server(path, rate, args.host or net["host"],
                      int(args.port if args.port is not None else net["port"]),
                      max_sessions=args.sessions)
    except KeyboardInterrupt:
        pass
    return 0


def cmd_stream_client(cfg: Config, args) -> int:
    net = cfg["network"]
    geom = cfg.geometry()
    out = _outdir(cfg)
    path = out / (args.name or "stream_bezier.csv")
    with path.open("w", encoding="utf-8", newline="") as dst:
        rec = stream_client(args.host or net["host"],
                            int(args.port if args.port is not None else net["port"]), geom, dst,
                            float(cfg["robot_length_mm"]), f"%.{args.precision}g",
                            retries=int(net["retries"]), retry_delay=float(net["retry_delay_s"]))
    print(rec.summary(), file=sys.stderr)
    return 0


# --------------------------------------------------------------- parser ----

def _global_options(suppress: bool) -> argparse.ArgumentParser:
    # Subcommand copies suppress their defaults so options given before the
    # subcommand name are not reset.
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON configuration file", **kw)
    common.add_argument("--seed", type=int, metavar="N", help="random seed (overrides config)", **kw)
    common.add_argument("--output", metavar="DIR", help="output directory (overrides config)", **kw)
    common.add_argument("--log-json", action="store_true", help="machine-readable JSON logs", **kw)
    common.add_argument("-v", "--verbose", action="store_true", **kw)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _global_options(True)
    p = argparse.ArgumentParser(prog="fbgbezier", parents=[_global_options(False)],
                                description="FBG shape sensing, Bezier fitting and learned "
                                            "field-to-shape mapping.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("gen-data", parents=[common], help="simulate scenarios and build a dataset")
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("reconstruct", parents=[common], help="frames file to Bezier CSV")
    s.add_argument("frames", help="NDJSON frames file, or - for stdin")
    s.add_argument("--precision", type=int, default=6, help="significant digits (default 6)")
    s.add_argument("--centerlines", action="store_true", help="also write centerlines.csv")
    s.add_argument("--midpoint", action="store_true", help="place curvature at segment midpoints")
    s.add_argument("--parameterization", choices=["chord", "uniform"], default="chord")
    s.add_argument("--name", help="output file name (default bezier.csv)")
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("fit-bezier", parents=[common], help="fit cubic Beziers to point CSVs")
    s.add_argument("points", help="CSV with x,y,z or frame,idx,x_mm,y_mm,z_mm columns")
    s.add_argument("--target-length", type=float, help="rescale the curve to this arc length")
    s.add_argument("--parameterization", choices=["chord", "uniform"], default="chord")
    s.add_argument("--precision", type=int, default=6)
    s.set_defaults(func=cmd_fit_bezier)

    s = sub.add_parser("train", parents=[common], help="train a forest or network")
    s.add_argument("kind", choices=["forest", "net"])
    s.add_argument("--dataset", help="dataset CSV (default OUTPUT/dataset.csv)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", parents=[common], help="predict control points")
    s.add_argument("--model", required=True)
    s.add_argument("--dataset")
    s.add_argument("--split", choices=["train", "val", "test", "all"], default="test")
    s.add_argument("--name", help="output file name")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("evaluate", parents=[common], help="metrics, histograms and model comparison")
    s.add_argument("--dataset")
    s.add_argument("--forest", help="forest model file")
    s.add_argument("--net", help="network model file")
    s.add_argument("--pred", help="prediction CSV (with --truth)")
    s.add_argument("--truth", help="truth CSV (with --pred)")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("importance", parents=[common], help="permutation feature importance")
    s.add_argument("--model", required=True)
    s.add_argument("--dataset")
    s.set_defaults(func=cmd_importance)

    s = sub.add_parser("learning-curve", parents=[common], help="test RMSE vs. training size")
    s.add_argument("--dataset")
    s.add_argument("--kind", choices=["forest", "net"])
    s.add_argument("--fractions", type=float, nargs="+")
    s.set_defaults(func=cmd_learning_curve)

    s = sub.add_parser("replay-server", parents=[common], help="replay frames over TCP")
    s.add_argument("frames")
    s.add_argument("--rate", type=float, help="frames per second (default 30)")
    s.add_argument("--host")
    s.add_argument("--port", type=int)
    s.add_argument("--sessions", type=int, help="exit after serving this many clients")
    s.set_defaults(func=cmd_replay_server)

    s = sub.add_parser("stream-client", parents=[common], help="reconstruct frames from a TCP stream")
    s.add_argument("--host")
    s.add_argument("--port", type=int)
    s.add_argument("--precision", type=int, default=6)
    s.add_argument("--name", help="output file name (default stream_bezier.csv)")
    s.set_defaults(func=cmd_stream_client)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.log_json, args.verbose)
    try:
        cfg = Config.load(args.config, seed=args.seed, output=args.output)
        return args.func(cfg, args)
    except FbgBezierError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
