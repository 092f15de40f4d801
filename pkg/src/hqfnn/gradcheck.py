"""Finite-difference checks for the shift-rule gradients and the full model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn, qnn
from .model import Model, ModelSpec

CIRCUIT_TOL = 1e-5
MODEL_TOL = 1e-4
# absolute floors: |err| <= 1e-8 always passes at the default tolerances
CIRCUIT_FLOOR = 1e-3
MODEL_FLOOR = 1e-4


@dataclass
class CheckReport:
    name: str
    cases: int
    max_error: float
    worst: str
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def rel_error(a, b, floor):
    return abs(a - b) / max(abs(a), abs(b), floor)


def circuit_check(n_cases=100, seed=0, tolerance=CIRCUIT_TOL, h=1e-6, max_layers=4,
                  max_qubits=1) -> CheckReport:
    rng = np.random.default_rng(seed)
    worst, where = 0.0, ""
    for case in range(n_cases):
        qubits = int(rng.integers(1, max_qubits + 1))
        circ = qnn.MembershipCircuit.random(qubits, int(rng.integers(1, max_layers + 1)), rng)
        x = float(rng.uniform(-1, 1))
        grad = qnn.param_shift_grad(circ, x)
        for i in range(circ.n_params):
            tp, tm = circ.thetas.copy(), circ.thetas.copy()
            tp[i] += h
            tm[i] -= h
            fd = (qnn.evaluate(circ.with_thetas(tp), x) - qnn.evaluate(circ.with_thetas(tm), x)) / (2 * h)
            err = rel_error(grad[i], fd, CIRCUIT_FLOOR)
            if err > worst:
                worst = err
                where = (f"case {case}: qubits={qubits} layers={circ.layers} x={x:.4f} "
                         f"param {i}: shift={grad[i]:.10g} fd={fd:.10g}")
    return CheckReport("circuit", n_cases, worst, where, tolerance)


def model_check(seed=0, tolerance=MODEL_TOL, h=1e-5, kinds=("hqfnn", "fdnn", "dnn")) -> CheckReport:
    """Whole-model gradients at tiny scale (d=4, k=2, L=1, batch=2), dropout off."""
    rng = np.random.default_rng(seed)
    worst, where, cases = 0.0, "", 0
    for kind in kinds:
        spec = ModelSpec(kind=kind, input_kind="feature", input_dim=4, classes=2, hidden=6,
                         qnn_layers=1, dropout_p=0.0)
        model = Model(spec, seed=int(rng.integers(1 << 31)))
        x = rng.uniform(-1, 1, size=(2, 4))
        y = nn.one_hot(rng.integers(0, 2, size=2), 2)
        _, grads, _ = model.loss_and_grads(x, y)
        for name, arr in model.params.items():
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + h
                lp = model.loss_and_grads(x, y)[0]
                arr[idx] = old - h
                lm = model.loss_and_grads(x, y)[0]
                arr[idx] = old
                fd = (lp - lm) / (2 * h)
                err = rel_error(grads[name][idx], fd, MODEL_FLOOR)
                cases += 1
                if err > worst:
                    worst = err
                    where = f"{kind} {name}{list(idx)}: analytic={grads[name][idx]:.10g} fd={fd:.10g}"
    return CheckReport("model", cases, worst, where, tolerance)
