"""Acceptance suite: one PASS/FAIL verdict per criterion, printed in the terminal summary.

Run alone with ``pytest tests/test_acceptance.py -v``; the full run takes
about 40 minutes on one core, most of it the two 200-epoch training runs
(the second one checks determinism).
"""

import csv
import json
import time
from pathlib import Path

import numpy as np
import pytest

from aqng2.harness import experiments
from aqng2.harness.cli import main, write_csv
from aqng2.homodyne import (
    LoCalibration,
    MomentSet,
    accumulate_moments,
    calibrate_lo,
    g2_block_bootstrap,
    g2_from_moments,
    mean_photon_number,
    normally_ordered_second,
)
from aqng2.io import read_qwf
from aqng2.regressors.checkpoint import save_checkpoint
from aqng2.regressors.dataset import write_dataset
from aqng2.regressors.network import PccnnModel, init_parameters
from aqng2.regressors.pccnn import PCCNNRegressor
from aqng2.seeding import RECORD, derive_seed
from aqng2.simulation import AqnModel, simulate_record, simulate_vacuum
from gradcheck import fd_check, input_gradient_check, layer_coordinates

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

SEED = 20_251_016
CONFIGS = Path(__file__).resolve().parents[1] / "configs"
DISPLACED_THERMAL = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 4.0)]


def displaced_thermal_g2(c, t):
    return (c * c + 4.0 * c * t + 2.0 * t * t) / (c + t) ** 2


def monte_carlo_g2(c, t, n=10**7, seed=0):
    """<I^2>/<I>^2 of a displaced complex Gaussian, with its delta-method error."""
    rng = np.random.default_rng(seed)
    z = np.sqrt(t / 2.0) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    i = np.abs(np.sqrt(c) + z) ** 2
    a, b = np.mean(i * i), np.mean(i)
    grad = np.array([1.0 / b**2, -2.0 * a / b**3])
    cov = np.cov(np.vstack([i * i, i])) / n
    return a / b**2, float(np.sqrt(grad @ cov @ grad))


def calibration_error(m, cal):
    """Spread of g2 from the vacuum-variance uncertainty, Var(n_lo) = 2 n_lo^2 / N."""
    dn = cal.n_lo * np.sqrt(2.0 / cal.n_samples_used)
    lo = LoCalibration(cal.n_lo - dn, cal.mean_offset, cal.n_samples_used)
    hi = LoCalibration(cal.n_lo + dn, cal.mean_offset, cal.n_samples_used)
    return 0.5 * abs(g2_from_moments(m, hi).value - g2_from_moments(m, lo).value)


# -- criterion runners (also used by the determinism check) ---------------------

def run_moment_inversion(out):
    n = 10**6
    vac = simulate_vacuum(1.0, n, derive_seed(SEED, RECORD, 0))
    cal = calibrate_lo(vac)
    rows = []
    for idx, (c, t) in enumerate(DISPLACED_THERMAL, start=1):
        model = AqnModel(c, t, bandwidth_frac=0.25, seed=derive_seed(SEED, RECORD, idx))
        record = simulate_record(model, n)
        est = g2_block_bootstrap(record, cal, n_blocks=100, n_resamples=200, seed=model.seed)
        cal_se = calibration_error(accumulate_moments(record), cal)
        se = float(np.hypot(est.std_error, cal_se))
        mc, mc_se = monte_carlo_g2(c, t, seed=derive_seed(SEED, RECORD, 100 + idx)) if t > 0 else (1.0, 0.0)
        rows.append({
            "coherent_photon": c, "thermal_photon": t, "g2": est.value, "std_error": se,
            "analytic_g2": displaced_thermal_g2(c, t), "monte_carlo_g2": float(mc),
            "monte_carlo_std_error": mc_se,
        })
    write_csv(out / "moment_inversion.csv", rows)
    return rows


def run_training(out):
    cfg = experiments.default_benchmark()
    t0 = time.perf_counter()
    splits = experiments.make_benchmark(cfg, SEED)
    t_data = time.perf_counter() - t0
    tc = cfg["train"]
    est = PCCNNRegressor(learning_rate=tc["learning_rate"], batch_size=tc["batch_size"],
                         epochs=tc["epochs"], random_state=SEED)
    t0 = time.perf_counter()
    est.fit(splits["train"].windows, splits["train"].labels,
            splits["validation"].windows, splits["validation"].labels)
    t_train = time.perf_counter() - t0
    test = splits["test"]
    pred = est.predict(test.windows)
    write_csv(out / "loss.csv", [{"epoch": i, "train_mse": a, "validation_mse": b} for i, (a, b)
                                 in enumerate(zip(est.loss_curve_, est.validation_loss_curve_))])
    write_csv(out / "pccnn_predictions.csv",
              [{"index": i, "measured": float(y), "predicted": float(p)} for i, (y, p) in enumerate(zip(test.labels, pred))])
    return {"estimator": est, "splits": splits, "cfg": cfg, "pred": pred,
            "t_data": t_data, "t_train": t_train}


def run_sweeps(out):
    for name in ("sweep_injection", "sweep_feedback"):
        assert main(["sweep", "--config", str(CONFIGS / f"{name}.json"), "--seed", str(SEED),
                     "--output", str(out / f"{name}.csv")]) == 0
    for name in ("histogram_weak", "histogram_strong"):
        assert main(["histogram", "--config", str(CONFIGS / f"{name}.json"), "--seed", str(SEED),
                     "--out", str(out / name)]) == 0


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- fixtures --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def outdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def trained(outdir):
    out = outdir / "run_a"
    out.mkdir(exist_ok=True)
    return run_training(out)


# -- criteria --------------------------------------------------------------------------

def test_criterion_1_moment_inversion(outdir, criterion):
    out = outdir / "run_a"
    out.mkdir(exist_ok=True)
    t0 = time.perf_counter()
    rows = run_moment_inversion(out)
    elapsed = time.perf_counter() - t0
    z = [abs(r["g2"] - r["analytic_g2"]) / r["std_error"] for r in rows]
    mc_z = [abs(r["monte_carlo_g2"] - r["analytic_g2"]) / r["monte_carlo_std_error"]
            for r in rows if r["monte_carlo_std_error"] > 0]
    ok = max(z) < 3.0 and max(mc_z) < 3.0 and elapsed < 60.0
    detail = ", ".join(f"({r['coherent_photon']:g},{r['thermal_photon']:g}) {r['g2']:.4f}+-{r['std_error']:.4f}"
                       f" vs {r['analytic_g2']:.4f}" for r in rows)
    criterion(1, ok, f"max |z| {max(z):.2f}, oracle MC max |z| {max(mc_z):.2f}, {elapsed:.1f} s; {detail}")
    assert ok


def test_criterion_2_algebraic_identity(criterion):
    rng = np.random.default_rng(SEED)
    cal = LoCalibration(1.0, 0.0, 10**6)
    worst = 0.0
    for _ in range(1000):
        photons = rng.uniform(0.01, 50.0)
        m2 = 1.0 + 2.0 * photons
        m4 = rng.uniform(3.0 * m2**2 - 6.0 * photons**2, 3.0 * m2**2 + 30.0 * photons**2)
        m = MomentSet.from_moments(int(rng.integers(2, 10**7)), rng.normal(), m2, m4)
        value = g2_from_moments(m, cal).value
        ref = normally_ordered_second(m, cal) / mean_photon_number(m, cal) ** 2
        worst = max(worst, abs(value - ref) / abs(ref))
    ok = worst < 1e-12
    criterion(2, ok, f"max relative difference {worst:.2e} over 1000 moment sets")
    assert ok


def test_criterion_3_gradient_check(criterion):
    t0 = time.perf_counter()
    model = PccnnModel()
    theta = init_parameters(model.layer_spec, model.input_len, seed=3)
    theta[-1] = 1.4
    window = np.random.default_rng(7).standard_normal(model.input_len)
    errors = {kind: fd_check(model, theta, window, 0.3, layer_coordinates(model, kind))
              for kind in ("conv1d", "dense")}
    errors["pool"] = input_gradient_check({"kind": "pool", "size": 4})
    errors["activation"] = input_gradient_check({"kind": "activation", "fn": "relu"})
    elapsed = time.perf_counter() - t0
    ok = max(errors.values()) < 1e-4 and elapsed < 60.0
    criterion(3, ok, ", ".join(f"{k} {v:.1e}" for k, v in errors.items()) + f"; {elapsed:.1f} s")
    assert ok


def test_criterion_4_regression_quality(trained, criterion):
    test = trained["splits"]["test"]
    n_train = len(trained["splits"]["train"])
    held_out = experiments.mse(test.labels, trained["pred"])
    lo, hi = float(trained["splits"]["train"].labels.min()), float(trained["splits"]["train"].labels.max())
    ok = (held_out <= 0.01 and n_train >= 8000 and trained["t_train"] <= 1800.0
          and lo <= 1.05 and hi >= 2.4 and len(trained["estimator"].loss_curve_) <= 200)
    criterion(4, ok, f"held-out MSE {held_out:.5f} on {len(test)} windows, {n_train} training windows, "
                     f"labels [{lo:.3f}, {hi:.3f}], training {trained['t_train'] / 60:.1f} min "
                     f"(+{trained['t_data']:.0f} s data)")
    assert ok


def test_criterion_5_baseline_ordering(trained, outdir, criterion):
    splits = trained["splits"]
    preds = {"pccnn": trained["pred"]}
    for name, pipe in experiments.baseline_pipelines(trained["cfg"], SEED).items():
        pipe.fit(splits["train"].windows, splits["train"].labels)
        preds[name] = pipe.predict(splits["test"].windows)
    metrics, scatter, _ = experiments.evaluate(splits["test"].labels, preds)
    out = outdir / "run_a"
    write_csv(out / "scatter.csv", scatter, ["measured", "predicted", "method"])
    (out / "metrics.json").write_text(json.dumps({"methods": metrics}, indent=2))
    mse = {k: v["mse"] for k, v in metrics.items()}
    dist = {k: v["mean_abs_diagonal_distance"] for k, v in metrics.items()}
    ok = (mse["pccnn"] < mse["svr"] and mse["pccnn"] < mse["rf"]
          and dist["rf"] >= 2 * dist["pccnn"] and dist["svr"] >= 2 * dist["pccnn"])
    criterion(5, ok, "MSE " + ", ".join(f"{k} {v:.5f}" for k, v in mse.items())
              + "; diagonal distance " + ", ".join(f"{k} {v:.4f}" for k, v in dist.items()))
    assert ok


def test_criterion_6_acceleration(trained, outdir, criterion):
    est = trained["estimator"]
    data = outdir / "bench_data"
    write_dataset(data / "test", trained["splits"]["test"])
    ckpt = outdir / "model.qck"
    ckpt.write_bytes(save_checkpoint(est.model_, est.optimizer_state_, est.train_config(), est.normalization_))
    report_path = outdir / "bench.json"
    assert main(["bench", "--checkpoint", str(ckpt), "--dataset", str(data), "--n-sets", "2000",
                 "--seed", str(SEED), "--output", str(report_path)]) == 0
    report = json.loads(report_path.read_text())

    t0 = time.perf_counter()
    record = read_qwf(data / "test" / "windows.qwf")
    windows = record.samples.reshape(-1, est.n_features_in_)
    windows = windows[np.arange(6107) % windows.shape[0]]
    est.predict(windows)
    t_6107 = time.perf_counter() - t0

    ok = report["n_sets"] >= 2000 and report["speedup"] >= 100.0 and t_6107 <= 60.0
    criterion(6, ok, f"speedup {report['speedup']:.0f}x over {report['n_sets']} sets "
                     f"({report['wall_time_inference_s']:.2f} s vs {report['wall_time_moment_baseline_s']:.1f} s), "
                     f"6107 windows in {t_6107:.2f} s")
    assert ok


def test_criterion_7_phenomenology(outdir, criterion):
    out = outdir / "run_a"
    out.mkdir(exist_ok=True)
    t0 = time.perf_counter()
    run_sweeps(out)
    elapsed = time.perf_counter() - t0

    rows = read_csv(out / "sweep_injection.csv")
    g = np.array([float(r["g2"]) for r in rows]).reshape(5, 5)
    s = np.array([float(r["std_error"]) for r in rows]).reshape(5, 5)
    steps = np.diff(g, axis=0) / np.hypot(s[1:], s[:-1])
    monotone = bool(np.all(steps > 3.0))

    rows = read_csv(out / "sweep_feedback.csv")
    env = [(float(r["g2"]), float(r["std_error"])) for r in rows if r["superbunch_k"]]
    above = bool(env) and all(v > 2.0 for v, _ in env)

    weak = json.loads((out / "histogram_weak" / "histogram_summary.json").read_text())
    strong = json.loads((out / "histogram_strong" / "histogram_summary.json").read_text())
    broader = strong["std"] > weak["std"]

    ok = monotone and above and broader and elapsed <= 600.0
    criterion(7, ok, f"injection sweep min step {steps.min():.1f} sigma; {len(env)} envelope cells, "
                     f"min g2 {min(v for v, _ in env):.3f}; histogram std {weak['std']:.4f} at "
                     f"g2~{weak['mean']:.2f} vs {strong['std']:.4f} at g2~{strong['mean']:.2f}; {elapsed:.0f} s")
    assert ok


def test_criterion_8_determinism(trained, outdir, criterion):
    a, b = outdir / "run_a", outdir / "run_b"
    b.mkdir(exist_ok=True)
    if not (a / "moment_inversion.csv").exists():
        run_moment_inversion(a)
    if not (a / "sweep_injection.csv").exists():
        run_sweeps(a)
    run_moment_inversion(b)
    run_training(b)
    run_sweeps(b)
    names = ["moment_inversion.csv", "loss.csv", "pccnn_predictions.csv", "sweep_injection.csv",
             "sweep_feedback.csv", "histogram_weak/histogram.csv", "histogram_strong/histogram.csv",
             "histogram_weak/histogram_summary.json", "histogram_strong/histogram_summary.json"]
    differ = [n for n in names if (a / n).read_bytes() != (b / n).read_bytes()]
    ok = not differ
    criterion(8, ok, f"{len(names) - len(differ)}/{len(names)} outputs bit-identical"
                     + (f"; differing: {', '.join(differ)}" if differ else ""))
    assert ok
