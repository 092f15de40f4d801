"""Fuzzy membership layers and the product (AND) rule layer.

One membership function per fuzzy set is shared by every input node, so a layer
with ``k`` sets holds ``k`` circuits (or ``k`` Gaussians) regardless of the input
width. Rules are products over the input nodes, computed in the log domain with
memberships clamped to ``[EPS, 1]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import qnn
from .errors import InvalidArgument, InvalidInput, StateError

EPS = 1e-7
INPUT_SLACK = 1e-9


@dataclass
class FuzzyActivations:
    inputs: np.ndarray                 # (batch, d)
    memberships: np.ndarray            # (batch, d, k)
    rule_log: np.ndarray | None = None  # (batch, k)
    rule: np.ndarray | None = None      # (batch, k)
    layer: object = field(default=None, repr=False)


def _check_inputs(batch) -> np.ndarray:
    x = np.asarray(batch, dtype=float)
    if x.ndim != 2:
        raise InvalidArgument(f"expected a (batch, d) grid, got shape {x.shape}")
    if x.size and (not np.all(np.isfinite(x)) or np.max(np.abs(x)) > 1 + INPUT_SLACK):
        raise InvalidInput("fuzzy layer inputs must lie in [-1, 1]")
    return x


class QuantumFuzzyLayer:
    """k data re-uploading circuits, one per fuzzy set."""

    kind = "quantum"

    def __init__(self, num_sets, input_dim, layers=2, qubits=1, rng=None, thetas=None,
                 observable_qubit=0):
        self.num_sets = num_sets
        self.input_dim = input_dim
        self.layers = layers
        self.qubits = qubits
        self.observable_qubit = observable_qubit
        n_params = 3 * layers if qubits == 1 else qubits * layers
        if thetas is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            thetas = rng.uniform(-np.pi, np.pi, size=(num_sets, n_params))
        self.thetas = np.asarray(thetas, dtype=float).reshape(num_sets, n_params)
        # validates shapes and finiteness
        self.circuits

    @property
    def circuits(self) -> list[qnn.MembershipCircuit]:
        return [qnn.MembershipCircuit(self.qubits, self.layers, t.copy(), self.observable_qubit)
                for t in self.thetas]

    def params(self) -> dict[str, np.ndarray]:
        return {"thetas": self.thetas}

    def memberships(self, x: np.ndarray) -> np.ndarray:
        if self.qubits == 1:
            return qnn.stacked_eval(self.thetas, self.layers, x)
        return np.stack([qnn.batch_eval(c, x) for c in self.circuits], axis=-1)

    def param_grads(self, x: np.ndarray, coef: np.ndarray) -> dict[str, np.ndarray]:
        if self.qubits == 1:
            return {"thetas": qnn.stacked_param_shift(self.thetas, self.layers, x, coef)}
        g = np.empty_like(self.thetas)
        for i, circ in enumerate(self.circuits):
            d = qnn.batch_param_shift(circ, x)
            g[i] = np.tensordot(coef[..., i], d, axes=(tuple(range(x.ndim)),) * 2)
        return {"thetas": g}


class GaussianFuzzyLayer:
    """Bell-shaped memberships exp(-(x - mu)^2 / (2 sigma^2)), as used by FDNN."""

    kind = "gaussian"

    def __init__(self, num_sets, input_dim, rng=None, means=None, sigmas=None):
        self.num_sets = num_sets
        self.input_dim = input_dim
        rng = rng if rng is not None else np.random.default_rng(0)
        if means is None:
            means = rng.uniform(-1, 1, size=num_sets)
        if sigmas is None:
            sigmas = np.ones(num_sets)
        self.means = np.asarray(means, dtype=float).reshape(num_sets)
        self.sigmas = np.asarray(sigmas, dtype=float).reshape(num_sets)
        if np.any(self.sigmas <= 0):
            raise InvalidArgument("Gaussian widths must be positive")

    def params(self) -> dict[str, np.ndarray]:
        return {"means": self.means, "sigmas": self.sigmas}

    def memberships(self, x: np.ndarray) -> np.ndarray:
        diff = x[..., None] - self.means
        return np.exp(-diff**2 / (2 * self.sigmas**2))

    def param_grads(self, x: np.ndarray, coef: np.ndarray) -> dict[str, np.ndarray]:
        diff = x[..., None] - self.means
        h = np.exp(-diff**2 / (2 * self.sigmas**2))
        axes = tuple(range(x.ndim))
        return {
            "means": np.sum(coef * h * diff / self.sigmas**2, axis=axes),
            "sigmas": np.sum(coef * h * diff**2 / self.sigmas**3, axis=axes),
        }


def membership_forward(layer, batch) -> FuzzyActivations:
    x = _check_inputs(batch)
    if x.shape[1] != layer.input_dim:
        raise InvalidArgument(f"expected {layer.input_dim} input nodes, got {x.shape[1]}")
    return FuzzyActivations(inputs=x, memberships=layer.memberships(x), layer=layer)


def rule_forward(acts: FuzzyActivations) -> FuzzyActivations:
    clamped = np.clip(acts.memberships, EPS, 1.0)
    acts.rule_log = np.sum(np.log(clamped), axis=1)
    acts.rule = np.exp(acts.rule_log)
    return acts


def fuzzy_forward(layer, batch) -> FuzzyActivations:
    return rule_forward(membership_forward(layer, batch))


def fuzzy_backward(acts: FuzzyActivations, upstream) -> dict[str, np.ndarray]:
    """Parameter gradients of sum(upstream * rule) for the layer that produced ``acts``."""
    if acts is None or acts.rule is None or acts.layer is None:
        raise StateError("fuzzy_backward needs a completed forward pass")
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != acts.rule.shape:
        raise InvalidArgument(f"upstream shape {upstream.shape} != rule shape {acts.rule.shape}")
    h = acts.memberships
    # d rule / d h_j = rule / h_j where the clamp is inactive, zero where it binds
    live = h >= EPS
    coef = np.where(live, (upstream * acts.rule)[:, None, :] / np.where(live, h, 1.0), 0.0)
    return acts.layer.param_grads(acts.inputs, coef)
