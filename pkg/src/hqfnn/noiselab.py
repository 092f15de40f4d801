"""Noisy simulation of membership circuits and fidelity sweeps.

Two noise placements are supported: ``after_each_gate`` applies the channel after
every single-qubit gate (encoding gates included), ``end_of_circuit`` applies it
once to the final state.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import qcore, qnn
from .errors import InvalidArgument

DEFAULT_GAMMAS = (0.01, 0.03, 0.05, 0.07, 0.1)
PLACEMENTS = ("after_each_gate", "end_of_circuit")
PLACEMENT_ALIASES = {"end": "end_of_circuit", "each": "after_each_gate",
                     "gate": "after_each_gate"}

# published reference fidelities, printed next to sweep results
REFERENCE_FIDELITY = {
    "AD": (0.9964, 0.9894, 0.9823, 0.9751, 0.9644),
    "DP": (0.9950, 0.9850, 0.9750, 0.9650, 0.9500),
}


def normalize_placement(placement: str) -> str:
    placement = PLACEMENT_ALIASES.get(placement, placement)
    if placement not in PLACEMENTS:
        raise InvalidArgument(f"unknown placement {placement!r}; expected one of {PLACEMENTS}")
    return placement


def gate_sequence(circ: qnn.MembershipCircuit, x: float):
    """(kind, qubits, matrix) for every gate of the circuit, in application order."""
    n = circ.qubits
    if n == 1:
        for t1, t2, t3 in circ.thetas.reshape(circ.layers, 3):
            yield "1q", (0,), qcore.ry_matrix(x)
            yield "1q", (0,), qcore.rz_matrix(t1)
            yield "1q", (0,), qcore.ry_matrix(t2)
            yield "1q", (0,), qcore.rz_matrix(t3)
        return
    for layer in circ.thetas.reshape(circ.layers, n):
        for q in range(n):
            yield "1q", (q,), qcore.ry_matrix(x)
        for q in range(n):
            yield "1q", (q,), qcore.ry_matrix(layer[q])
        for q in range(n - 1):
            yield "cnot", (q, q + 1), None


def _cnot_matrix(n, c, t):
    dim = 2**n
    m = np.zeros((dim, dim))
    for i in range(dim):
        j = i ^ (1 << (n - 1 - t)) if (i >> (n - 1 - c)) & 1 else i
        m[j, i] = 1
    return m


def simulate_noisy(circ: qnn.MembershipCircuit, x: float, channel: qcore.KrausChannel,
                   placement: str = "after_each_gate") -> qcore.MixedState:
    placement = normalize_placement(placement)
    n = circ.qubits
    rho = qcore.to_mixed(qcore.PureState.zero(n))
    for kind, qubits, mat in gate_sequence(circ, x):
        if kind == "1q":
            rho = qcore.apply_unitary(rho, mat, qubits[0])
            if placement == "after_each_gate":
                rho = qcore.apply_channel(rho, channel, qubits[0])
        else:
            U = _cnot_matrix(n, *qubits)
            rho = qcore.MixedState(n, U @ rho.rho @ U.T)
    if placement == "end_of_circuit":
        for q in range(n):
            rho = qcore.apply_channel(rho, channel, q)
    return rho


def circuit_fidelity(circ, x, channel_name, gamma, placement="end_of_circuit") -> float:
    channel = qcore.make_channel(channel_name, gamma)
    if gamma == 0:
        return 1.0  # identity channel; skip eigen round-off
    ideal = qcore.to_mixed(qnn.final_state(circ, x))
    return qcore.fidelity(ideal, simulate_noisy(circ, x, channel, placement))


@dataclass
class SweepConfig:
    channel: str = "MIX_DP"
    gammas: tuple = DEFAULT_GAMMAS
    x_samples: int = 100
    circuit: qnn.MembershipCircuit = field(default_factory=lambda: qnn.MembershipCircuit(1, 2))
    placement: str = "end_of_circuit"

    def __post_init__(self):
        self.channel = self.channel.upper()
        if self.channel not in qcore.CHANNELS:
            raise InvalidArgument(f"unknown channel {self.channel!r}")
        self.placement = normalize_placement(self.placement)
        if self.x_samples < 1:
            raise InvalidArgument("x_samples must be >= 1")
        if any(not 0 <= g <= 1 for g in self.gammas):
            raise InvalidArgument("every gamma must lie in [0, 1]")

    @property
    def xs(self) -> np.ndarray:
        return np.linspace(-1.0, 1.0, self.x_samples)


@dataclass
class FidelityTable:
    gammas: np.ndarray
    xs: np.ndarray
    grid: np.ndarray  # (len(gammas), len(xs))

    @property
    def rows(self) -> list[tuple[float, float]]:
        return [(float(g), float(m)) for g, m in zip(self.gammas, self.grid.mean(axis=1))]

    def grid_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gamma", "x", "fidelity"])
        for g, row in zip(self.gammas, self.grid):
            for x, f in zip(self.xs, row):
                w.writerow([f"{g:.6f}", f"{x:.6f}", f"{f:.6f}"])
        return buf.getvalue()

    def summary_csv(self) -> str:
        lines = ["gamma,mean_fidelity"] + [f"{g:.6f},{m:.6f}" for g, m in self.rows]
        return "\n".join(lines) + "\n"


def run_sweep(cfg: SweepConfig) -> FidelityTable:
    xs = cfg.xs
    gammas = np.asarray(cfg.gammas, dtype=float)
    grid = np.array([[circuit_fidelity(cfg.circuit, x, cfg.channel, g, cfg.placement)
                      for x in xs] for g in gammas])
    return FidelityTable(gammas, xs, grid)


def ad_single_gate_fidelity(x, gamma):
    """Fidelity of Ry(x)|0> against the same state after one amplitude-damping step."""
    c, s = np.cos(x / 2), np.sin(x / 2)
    return c**4 + gamma * c**2 * s**2 + 2 * c**2 * s**2 * np.sqrt(1 - gamma) + (1 - gamma) * s**4
