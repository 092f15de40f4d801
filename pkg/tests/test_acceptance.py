"""Acceptance suite. Each test records one ``ACCEPTANCE <n> PASS|FAIL`` line,
printed in the terminal summary.

The desk-scale training runs go through the CLI preset and take a few minutes.
"""
import json
import subprocess
import sys
import time

import numpy as np
import pytest

from hqfnn import gradcheck, noiselab, qcore
from hqfnn.cli import main
from hqfnn.fuzzy import FuzzyActivations, rule_forward
from hqfnn.metrics import ConfusionMatrix, binary_metrics, macro_metrics
from hqfnn.qnn import MembershipCircuit, eval_membership, eval_membership_multi

pytestmark = pytest.mark.slow


def report(record_property, number, title, ok, detail=""):
    line = f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {title}"
    if detail:
        line += f" ({detail})"
    record_property("acceptance", line)  # summarised by conftest at session end
    assert ok, line


def _train(out, model):
    start = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "hqfnn", "train", "--preset", "desk-mnist", "--model", model,
         "--threads", "1", "--out", str(out)],
        capture_output=True, text=True)
    return proc, time.perf_counter() - start


@pytest.fixture(scope="module")
def desk_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("desk")
    return {name: (root / name, *_train(root / name, model))
            for name, model in [("hqfnn", "hqfnn"), ("cnn", "cnn"), ("fdnn", "fdnn"),
                                ("cnn_again", "cnn")]}


def _trace(path):
    rows = path.read_text().splitlines()[1:]
    return [float(r.split(",")[1]) for r in rows]


def test_1_gradient_correctness(record_property):
    start = time.perf_counter()
    circ = gradcheck.circuit_check(n_cases=100, seed=0)
    model = gradcheck.model_check(seed=0)
    elapsed = time.perf_counter() - start
    ok = circ.passed and model.passed and circ.cases == 100 and elapsed < 60
    report(record_property, 1, "parameter-shift and model gradients", ok,
           f"circuit {circ.max_error:.2e} < 1e-5, model {model.max_error:.2e} < 1e-4, {elapsed:.1f}s")


def test_2_closed_form_membership(record_property):
    xs = np.linspace(-1, 1, 100)
    worst = 0.0
    for layers in range(1, 7):
        circ = MembershipCircuit(1, layers, np.zeros(3 * layers))
        for x in xs:
            worst = max(worst, abs(eval_membership(circ, x) - (np.cos(layers * x) + 1) / 2))
    report(record_property, 2, "zero-angle membership equals (cos(Lx)+1)/2", worst <= 1e-12, f"max error {worst:.1e}")


def test_3_depolarizing_table(record_property, tmp_path, capsys):
    code = main(["noise-sweep", "--channel", "mix_dp", "--placement", "end", "--out", str(tmp_path / "m")])
    text = capsys.readouterr().out
    rows = [tuple(map(float, line.split(","))) for line in
            (tmp_path / "m" / "sweep_summary.csv").read_text().splitlines()[1:]]
    target = [0.9950, 0.9850, 0.9750, 0.9650, 0.9500]
    mix_err = max(abs(m - t) for (_, m), t in zip(rows, target))

    main(["noise-sweep", "--channel", "dp", "--placement", "end", "--out", str(tmp_path / "d")])
    dp_text = capsys.readouterr().out
    dp_err = 0.0
    for g in noiselab.DEFAULT_GAMMAS:
        circ = MembershipCircuit(1, 2, np.random.default_rng(1).uniform(-np.pi, np.pi, 6))
        for x in np.linspace(-1, 1, 20):
            dp_err = max(dp_err, abs(noiselab.circuit_fidelity(circ, x, "dp", g) - (1 - 2 * g / 3)))
    documented = "note" in text.lower() and "note" in dp_text.lower()
    ok = code == 0 and len(rows) == 5 and mix_err <= 5e-4 and dp_err <= 1e-10 and documented
    report(record_property, 3, "depolarizing fidelity column", ok, f"mix_dp error {mix_err:.1e}, dp vs 1-2g/3 {dp_err:.1e}")


def test_4_amplitude_damping_closed_forms(record_property):
    worst = 0.0
    for g in (0.01, 0.03, 0.05, 0.07, 0.1, 0.5):
        for x in np.linspace(-1, 1, 100):
            c, s = np.cos(x / 2), np.sin(x / 2)
            expected = c**4 + g * c**2 * s**2 + 2 * c**2 * s**2 * np.sqrt(1 - g) + (1 - g) * s**4
            psi = qcore.apply_ry(qcore.PureState.zero(1), 0, x)
            noisy = qcore.apply_channel(qcore.to_mixed(psi), qcore.make_channel("ad", g), 0)
            simulated = qcore.fidelity_pure(psi, noisy)
            worst = max(worst, abs(simulated - expected), abs(noiselab.ad_single_gate_fidelity(x, g) - expected))
    table = noiselab.run_sweep(noiselab.SweepConfig(channel="ad", gammas=(0.0, 0.01, 0.03, 0.05, 0.07, 0.1),
                                                    placement="after_each_gate"))
    means = [m for _, m in table.rows]
    monotone = all(b <= a for a, b in zip(means, means[1:]))
    ok = worst <= 1e-10 and monotone and means[0] == 1.0
    report(record_property, 4, "amplitude-damping closed forms", ok,
           f"max error {worst:.1e}, monotone {monotone}, F(0)={means[0]!r}")


def test_5_desk_training(record_property, desk_runs):
    out, proc, elapsed = desk_runs["hqfnn"]
    assert proc.returncode == 0, proc.stderr
    acc = json.loads((out / "metrics.json").read_text())["accuracy"]
    losses = _trace(out / "trace.csv")
    ok = acc >= 0.85 and elapsed < 1800 and losses[4] < losses[0]
    report(record_property, 5, "desk-mnist HQFNN training", ok,
           f"accuracy {acc:.4f}, {elapsed:.0f}s, loss e1 {losses[0]:.3f} -> e5 {losses[4]:.3f}")


def test_6_baseline_parity(record_property, desk_runs):
    details, ok = [], True
    for name in ("hqfnn", "cnn", "fdnn"):
        out, proc, _ = desk_runs[name]
        ok &= proc.returncode == 0
        metrics = json.loads((out / "metrics.json").read_text())
        ok &= set(metrics) == {"accuracy", "macro_precision", "macro_recall", "macro_f1", "n_samples"}
        ok &= all(0 <= metrics[k] <= 1 for k in metrics if k != "n_samples")
        rows = (out / "confusion.csv").read_text().splitlines()
        ok &= rows[0] == "true\\pred," + ",".join(map(str, range(10))) and len(rows) == 11
        ok &= sum(int(v) for r in rows[1:] for v in r.split(",")[1:]) == metrics["n_samples"]
        if name != "hqfnn":
            ok &= metrics["accuracy"] >= 0.80
        details.append(f"{name} {metrics['accuracy']:.4f}")
    report(record_property, 6, "CNN and FDNN baselines", ok, ", ".join(details))


def test_7_determinism(record_property, desk_runs):
    a, b = desk_runs["cnn"][0], desk_runs["cnn_again"][0]
    same = {name: (a / name).read_bytes() == (b / name).read_bytes()
            for name in ("metrics.json", "trace.csv", "model.ckpt", "confusion.csv")}
    report(record_property, 7, "bitwise-identical reruns", all(same.values()),
           ", ".join(f"{k} {'same' if v else 'differs'}" for k, v in same.items()))


def test_8_property_suites(record_property):
    rng = np.random.default_rng(8)
    checks = {}
    checks["completeness"] = all(
        qcore.make_channel(n, g).completeness_error() < 1e-12
        for n in ("ad", "dp", "mix_dp") for g in (0, 0.01, 0.3, 1.0))
    preserved = True
    for name in ("ad", "dp", "mix_dp"):
        for _ in range(20):
            rho = qcore.random_density(2, rng)
            out = qcore.apply_channel(rho, qcore.make_channel(name, rng.uniform()), int(rng.integers(2)))
            m = out.rho
            preserved &= abs(np.trace(m) - 1) < 1e-12 and np.allclose(m, m.conj().T, atol=1e-12)
    checks["trace/hermiticity"] = bool(preserved)
    rho = qcore.random_density(1, rng)
    zero = qcore.to_mixed(qcore.PureState.basis("0"))
    one = qcore.to_mixed(qcore.PureState.basis("1"))
    checks["fidelity cases"] = qcore.fidelity(rho, rho) == 1.0 and abs(qcore.fidelity(zero, one)) < 1e-10
    log_ok = True
    for d in range(1, 17):
        m = rng.uniform(0.01, 1, (4, d, 3))
        log_ok &= np.allclose(rule_forward(FuzzyActivations(m[:, :, 0], m)).rule, m.prod(axis=1),
                              rtol=0, atol=1e-10)
    checks["log-product"] = bool(log_ok)
    t, p = rng.integers(0, 5, 300), rng.integers(0, 5, 300)
    cm = ConfusionMatrix.from_predictions(t, p, 5)
    checks["confusion conservation"] = cm.total == 300 and np.array_equal(cm.counts.sum(axis=1), np.bincount(t, minlength=5))
    prec = np.mean([np.sum((p == c) & (t == c)) / max(np.sum(p == c), 1) for c in range(5)])
    rec = np.mean([np.sum((p == c) & (t == c)) / max(np.sum(t == c), 1) for c in range(5)])
    mm = macro_metrics(cm)
    checks["macro formulas"] = (abs(mm.macro_precision - prec) < 1e-12 and abs(mm.macro_recall - rec) < 1e-12
                                and abs(mm.macro_f1 - 2 * prec * rec / (prec + rec)) < 1e-12
                                and binary_metrics(cm, 0)[0] == pytest.approx(np.sum((p == 0) & (t == 0)) / np.sum(p == 0)))
    failed = [k for k, v in checks.items() if not v]
    report(record_property, 8, "property suites", not failed, "failed: " + ", ".join(failed) if failed else f"{len(checks)} groups green")


def test_9_multi_qubit(record_property, tmp_path, idx_fixture, capsys):
    worst = max(abs(eval_membership_multi(MembershipCircuit(2, 1, np.zeros(2)), x) - (np.cos(x) + 1) / 2)
                for x in np.linspace(-1, 1, 100))
    img, lab = idx_fixture
    code = main(["train", "--images", str(img), "--labels", str(lab), "--qnn-qubits", "2",
                 "--qnn-layers", "1", "--epochs", "1", "--batch", "4", "--out", str(tmp_path / "r")])
    capsys.readouterr()
    ok = worst <= 1e-12 and code == 0
    report(record_property, 9, "two-qubit membership and training", ok, f"max error {worst:.1e}, train exit {code}")
