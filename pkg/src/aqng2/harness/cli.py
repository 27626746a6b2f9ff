"""``aqng2`` command-line interface.

Exit codes: 0 on success, including rows flagged as degenerate; 2 for
usage and configuration errors; 1 for other structural failures (missing
files, bad checkpoints, shape mismatches).
"""

import argparse
import csv
import json
import re
import sys
import tempfile
from pathlib import Path

import numpy as np

from ..exceptions import Aqng2Error
from ..homodyne import LoCalibration, calibrate_lo
from ..io import read_calibration, read_qwf, write_calibration
from ..regressors.checkpoint import load_checkpoint, save_checkpoint
from ..regressors.dataset import read_dataset, write_dataset
from ..regressors.pccnn import PCCNNRegressor
from ..simulation import AqnModel, estimate_psd
from . import experiments
from .mapping import SweepGrid


class ConfigError(Exception):
    """A configuration document that cannot be used; the message names the key."""


# -- config handling -------------------------------------------------------------

def _key_before(text, pos):
    keys = re.findall(r'"([^"\\]+)"\s*:', text[:pos])
    return keys[-1] if keys else None


def load_config(path):
    """Parse a JSON config; syntax errors name the nearest preceding key."""
    if path is None:
        return {}
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        key = _key_before(text, exc.pos)
        where = f"after key {key!r}" if key else "before the first key"
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON {where}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def _model_from(doc, where="model"):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: must be a JSON object")
    fields = AqnModel.__dataclass_fields__
    for key, value in doc.items():
        if key not in fields:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key == "superbunch_k" and value is None:
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: key {key!r} must be a number")
    try:
        return AqnModel(**doc)
    except (ValueError, Aqng2Error) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _check_keys(doc, allowed, where="config"):
    for key in doc:
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r}")


def _seed(args, default=0):
    return default if args.seed is None else args.seed


# -- output helpers ----------------------------------------------------------------

def write_csv(path, rows, header=None):
    header = header or (list(rows[0]) if rows else [])
    fh = sys.stdout if path is None or str(path) == "-" else open(path, "w", newline="")
    try:
        writer = csv.DictWriter(fh, fieldnames=header, lineterminator="\r\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})
    finally:
        if fh is not sys.stdout:
            fh.close()


def write_json(path, doc):
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _out_path(args, name):
    """``--output`` if given, else ``name`` inside ``--out``, else stdout."""
    if getattr(args, "output", None):
        return Path(args.output)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        return Path(args.out) / name
    return None


def _out_dir(args, default):
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands ----------------------------------------------------------------------

SIMULATE_KEYS = {"model", "n_samples", "sample_rate_hz", "dtype"}


def cmd_simulate(args):
    cfg = load_config(args.config)
    _check_keys(cfg, SIMULATE_KEYS)
    model = _model_from(cfg.get("model", {}))
    if args.seed is not None:
        model = model.with_seed(args.seed)
    n = args.samples or int(cfg.get("n_samples", 1_000_000))
    rate = float(cfg.get("sample_rate_hz", 1.0))
    dtype = cfg.get("dtype", "f32")
    if dtype not in ("f32", "f64"):
        raise ConfigError(f"config: key 'dtype' must be 'f32' or 'f64', got {dtype!r}")
    out = _out_dir(args, "records")
    manifest = experiments.simulate_batch(model, args.count, n, out, rate, dtype)
    print(f"wrote {len(manifest['records'])} record(s) to {out}", file=sys.stderr)


def cmd_calibrate(args):
    cal = calibrate_lo(read_qwf(args.vacuum), min_samples=args.min_samples)
    path = _out_path(args, "calibration.json")
    if path is None:
        write_json(None, cal.to_dict())
    else:
        write_calibration(path, cal)


def cmd_estimate(args):
    if not Path(args.calibration).is_file():
        raise FileNotFoundError(f"calibration file {args.calibration} not found")
    cal = read_calibration(args.calibration)
    rows = experiments.estimate_rows(args.records, cal)
    write_csv(_out_path(args, "estimates.csv"), rows, ["file", "g2", "std_error", "n_samples", "status"])


def cmd_psd(args):
    record = read_qwf(args.record)
    freqs, power = estimate_psd(record, args.segment)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(power)
    rows = [{"frequency_hz": float(f), "power_db": float(p)} for f, p in zip(freqs, db)]
    write_csv(_out_path(args, "psd.csv"), rows, ["frequency_hz", "power_db"])


def cmd_sweep(args):
    cfg = load_config(args.config)
    _check_keys(cfg, {"axis1", "axis2", "model", "mapping", "n_samples", "sample_rate_hz"})
    if "model" in cfg:
        _model_from(cfg["model"])
    try:
        grid = SweepGrid.from_dict(cfg)
    except KeyError as exc:
        raise ConfigError(f"config: {exc.args[0]}") from None
    n = args.samples or int(cfg.get("n_samples", 1_000_000))
    rows = experiments.sweep_rows(grid, n, _seed(args), sample_rate_hz=float(cfg.get("sample_rate_hz", 1.0)))
    write_csv(_out_path(args, "sweep.csv"), rows)


def cmd_histogram(args):
    cfg = load_config(args.config)
    _check_keys(cfg, {"model", "n_estimates", "window_len"})
    model = _model_from(cfg.get("model", {}))
    n = args.n_estimates or int(cfg.get("n_estimates", 1000))
    wlen = args.window_len or int(cfg.get("window_len", 5000))
    result = experiments.histogram(model, n, wlen, _seed(args))
    write_csv(_out_path(args, "histogram.csv"), result.rows(), ["bin_left", "bin_right", "count"])
    summary = result.summary()
    if args.out:
        write_json(Path(args.out) / "histogram_summary.json", summary)
    print(f"mean {summary['mean']:.6g}  std {summary['std']:.6g}  n {summary['n_estimates']}", file=sys.stderr)


def _benchmark_cfg(args):
    cfg = experiments.default_benchmark()
    user = load_config(args.config)
    _check_keys(user, set(cfg))
    cfg.update(user)
    return cfg


def cmd_dataset(args):
    cfg = _benchmark_cfg(args)
    out = _out_dir(args, "dataset")
    splits = experiments.make_benchmark(cfg, _seed(args))
    for name, ds in splits.items():
        write_dataset(out / name, ds, "field_oracle")
        print(f"{name}: {len(ds)} windows", file=sys.stderr)


def _load_estimator(path):
    if not Path(path).is_file():
        raise FileNotFoundError(f"checkpoint {path} not found")
    return PCCNNRegressor.from_checkpoint(*load_checkpoint(Path(path).read_bytes()))


def _check_window_len(est, ds, where):
    if ds.window_len != est.n_features_in_:
        raise Aqng2Error(f"{where}: window length {ds.window_len} does not match checkpoint input {est.n_features_in_}")


def cmd_train(args):
    cfg = _benchmark_cfg(args)
    data = Path(args.dataset)
    train, val = read_dataset(data / "train"), read_dataset(data / "validation")
    tc = cfg.get("train", {})
    est = PCCNNRegressor(
        learning_rate=tc.get("learning_rate", 1e-3), batch_size=tc.get("batch_size", 64),
        epochs=args.epochs or tc.get("epochs", 200), random_state=_seed(args), verbose=args.verbose,
    )
    est.fit(train.windows, train.labels, val.windows, val.labels)
    ckpt = _out_path(args, "model.qck") if not args.checkpoint else Path(args.checkpoint)
    if ckpt is None:
        ckpt = Path("model.qck")
    ckpt.write_bytes(save_checkpoint(est.model_, est.optimizer_state_, est.train_config(), est.normalization_))
    curve = [{"epoch": i, "train_mse": a, "validation_mse": b}
             for i, (a, b) in enumerate(zip(est.loss_curve_, est.validation_loss_curve_))]
    write_csv(ckpt.with_suffix(".loss.csv"), curve, ["epoch", "train_mse", "validation_mse"])
    print(f"final train {est.loss_curve_[-1]:.5f}  validation {est.validation_loss_curve_[-1]:.5f}", file=sys.stderr)


def evaluate_dataset(est, data, cfg, seed):
    """Predictions of PCCNN, baselines and the window moment estimator on the test split."""
    from ..homodyne import MomentG2Estimator

    train, test = read_dataset(Path(data) / "train"), read_dataset(Path(data) / "test")
    preds = {}
    if est is not None:
        _check_window_len(est, test, "test split")
        preds["pccnn"] = est.predict(test.windows)
    for name, pipe in experiments.baseline_pipelines(cfg, seed).items():
        pipe.fit(train.windows, train.labels)
        preds[name] = pipe.predict(test.windows)
    cal = LoCalibration(float(cfg["n_lo"]), 0.0, 10**12)
    preds["moment_window"] = MomentG2Estimator.from_calibration(cal).predict(test.windows)
    return test.labels, preds


def cmd_eval(args):
    cfg = _benchmark_cfg(args)
    est = _load_estimator(args.checkpoint) if args.checkpoint else None
    labels, preds = evaluate_dataset(est, args.dataset, cfg, _seed(args))
    metrics, scatter, errors = experiments.evaluate(labels, preds)
    out = _out_dir(args, "eval")
    write_json(out / "metrics.json", {"n_test": int(len(labels)), "methods": metrics})
    write_csv(out / "scatter.csv", scatter, ["measured", "predicted", "method"])
    write_csv(out / "errors.csv", errors, ["index", "method", "error"])
    for name, m in metrics.items():
        print(f"{name:14s} mse {m['mse']:.5f}", file=sys.stderr)


def cmd_bench(args):
    est = _load_estimator(args.checkpoint)
    cfg = _benchmark_cfg(args)
    data = Path(args.dataset)
    split = data / "test" if (data / "test").is_dir() else data
    manifest = json.loads((split / "manifest.json").read_text())
    if manifest["window_len"] != est.n_features_in_:
        raise Aqng2Error(f"dataset window length {manifest['window_len']} does not match checkpoint input {est.n_features_in_}")
    mse_by_method = {}
    if args.metrics:
        doc = json.loads(Path(args.metrics).read_text())
        mse_by_method = {k: v["mse"] for k, v in doc["methods"].items()}
    cal = LoCalibration(float(cfg["n_lo"]), 0.0, 10**12)
    n_sets = args.n_sets or manifest["n_windows"]
    with tempfile.TemporaryDirectory() as tmp:
        pool = experiments.write_reference_pool(tmp, cfg, _seed(args), args.pool_size, args.reference_length)
        report = experiments.bench(est, split / manifest["windows_file"], pool, n_sets, cal, mse_by_method)
    write_json(_out_path(args, "bench.json"), report.to_dict())
    print(f"speedup {report.speedup:.1f}x over {report.n_sets} sets", file=sys.stderr)


def cmd_report(args):
    metrics = json.loads(Path(args.metrics).read_text())["methods"]
    rows = [{"method": name, "mse": m["mse"], "mean_abs_diagonal_distance": m["mean_abs_diagonal_distance"],
             "n": m["n"], "n_invalid": m["n_invalid"]} for name, m in sorted(metrics.items())]
    if args.bench:
        bench = json.loads(Path(args.bench).read_text())
        print(f"acceleration: {bench['speedup']:.1f}x over {bench['n_sets']} sets "
              f"({bench['wall_time_inference_s']:.3f} s vs {bench['wall_time_moment_baseline_s']:.3f} s)",
              file=sys.stderr)
    write_csv(_out_path(args, "report.csv"), rows,
              ["method", "mse", "mean_abs_diagonal_distance", "n", "n_invalid"])


# -- parser ------------------------------------------------------------------------------

def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="root seed")
    parser.add_argument("--config", default=default, help="JSON config file")
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument("--threads", type=int, default=default, help="BLAS/OpenMP thread limit")


def build_parser():
    parser = argparse.ArgumentParser(prog="aqng2", description="Simulate, estimate and learn g2(0) from homodyne quadrature records.")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        return p

    p = add("simulate", cmd_simulate, "write simulated QWF1 records")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--samples", type=int)

    p = add("calibrate", cmd_calibrate, "LO calibration from a vacuum record")
    p.add_argument("vacuum")
    p.add_argument("--min-samples", type=int, default=10_000)
    p.add_argument("--output")

    p = add("estimate", cmd_estimate, "moment-based g2 for record files")
    p.add_argument("records", nargs="+")
    p.add_argument("--calibration", required=True)
    p.add_argument("--output")

    p = add("psd", cmd_psd, "Welch power spectral density of a record")
    p.add_argument("record")
    p.add_argument("--segment", type=int, default=4096)
    p.add_argument("--output")

    p = add("sweep", cmd_sweep, "g2 map over a two-knob grid")
    p.add_argument("--samples", type=int)
    p.add_argument("--output")

    p = add("histogram", cmd_histogram, "histogram of finite-window g2 estimates")
    p.add_argument("--n-estimates", type=int)
    p.add_argument("--window-len", type=int)
    p.add_argument("--output")

    add("dataset", cmd_dataset, "generate the synthetic window benchmark")

    p = add("train", cmd_train, "train the PCCNN on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--epochs", type=int)
    p.add_argument("--verbose", type=int, default=0)
    p.add_argument("--output")

    p = add("eval", cmd_eval, "compare PCCNN, baselines and window moments")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint")

    p = add("bench", cmd_bench, "time window inference against 10^6-sample moments")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--n-sets", type=int)
    p.add_argument("--reference-length", type=int, default=experiments.REFERENCE_LENGTH)
    p.add_argument("--pool-size", type=int, default=8)
    p.add_argument("--metrics")
    p.add_argument("--output")

    p = add("report", cmd_report, "MSE and scatter summary from eval (and bench) outputs")
    p.add_argument("--metrics", required=True)
    p.add_argument("--bench")
    p.add_argument("--output")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                args.func(args)
        else:
            args.func(args)
    except ConfigError as exc:
        print(f"aqng2 {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except (Aqng2Error, OSError, ValueError, KeyError) as exc:
        print(f"aqng2 {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
