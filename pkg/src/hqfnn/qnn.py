"""Data re-uploading membership circuits.

A single-qubit circuit repeats ``L`` blocks of ``Rz(t3) Ry(t2) Rz(t1) Ry(x)`` (the
encoding gate acts first) and reads out ``(<Z> + 1) / 2``, a value in [0, 1] that
serves as a fuzzy membership degree. The multi-qubit variant encodes ``x`` on every
qubit, applies one trainable ``Ry`` per qubit and a CNOT ladder per block.

Two evaluation paths exist: a per-gate reference built on :mod:`hqfnn.qcore`
(``eval_membership`` / ``eval_membership_multi``) and a vectorised batch path
(``batch_eval`` and friends) used during training. Tests pin them together.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qcore
from .errors import InvalidArgument, WrongCircuitKind

SHIFT = np.pi / 2


@dataclass
class MembershipCircuit:
    qubits: int = 1
    layers: int = 2
    thetas: np.ndarray | None = None
    observable_qubit: int = 0

    def __post_init__(self):
        if self.qubits < 1 or self.qubits > qcore.MAX_QUBITS:
            raise InvalidArgument(f"qubits must be in 1..{qcore.MAX_QUBITS}")
        if self.layers < 1:
            raise InvalidArgument("layers must be >= 1")
        if not 0 <= self.observable_qubit < self.qubits:
            raise InvalidArgument("observable_qubit out of range")
        if self.thetas is None:
            self.thetas = np.zeros(self.n_params)
        self.thetas = np.asarray(self.thetas, dtype=float).reshape(-1)
        if self.thetas.size != self.n_params:
            raise InvalidArgument(
                f"expected {self.n_params} angles for qubits={self.qubits}, "
                f"layers={self.layers}; got {self.thetas.size}"
            )
        if not np.all(np.isfinite(self.thetas)):
            raise InvalidArgument("circuit angles must be finite")

    @property
    def n_params(self) -> int:
        return 3 * self.layers if self.qubits == 1 else self.qubits * self.layers

    def with_thetas(self, thetas) -> "MembershipCircuit":
        return MembershipCircuit(self.qubits, self.layers, np.array(thetas, dtype=float),
                                 self.observable_qubit)

    @classmethod
    def random(cls, qubits: int, layers: int, rng: np.random.Generator, scale=np.pi):
        n = 3 * layers if qubits == 1 else qubits * layers
        return cls(qubits, layers, rng.uniform(-scale, scale, size=n))


# ---------------------------------------------------------------- reference path

def eval_membership(circ: MembershipCircuit, x: float) -> float:
    if circ.qubits != 1:
        raise WrongCircuitKind("eval_membership needs a single-qubit circuit")
    state = qcore.PureState.zero(1)
    for t1, t2, t3 in circ.thetas.reshape(circ.layers, 3):
        state = qcore.apply_ry(state, 0, x)
        state = qcore.apply_rz(state, 0, t1)
        state = qcore.apply_ry(state, 0, t2)
        state = qcore.apply_rz(state, 0, t3)
    return (qcore.expectation_z(state, 0) + 1) / 2


def final_state(circ: MembershipCircuit, x: float) -> qcore.PureState:
    n = circ.qubits
    state = qcore.PureState.zero(n)
    if n == 1:
        for t1, t2, t3 in circ.thetas.reshape(circ.layers, 3):
            for op, a in ((qcore.apply_ry, x), (qcore.apply_rz, t1),
                          (qcore.apply_ry, t2), (qcore.apply_rz, t3)):
                state = op(state, 0, a)
        return state
    for layer in circ.thetas.reshape(circ.layers, n):
        for q in range(n):
            state = qcore.apply_ry(state, q, x)
        for q in range(n):
            state = qcore.apply_ry(state, q, layer[q])
        for q in range(n - 1):
            state = qcore.apply_cnot(state, q, q + 1)
    return state


def eval_membership_multi(circ: MembershipCircuit, x: float) -> float:
    if circ.qubits < 2:
        raise WrongCircuitKind("eval_membership_multi needs at least two qubits")
    state = final_state(circ, x)
    return (qcore.expectation_z(state, circ.observable_qubit) + 1) / 2


def evaluate(circ: MembershipCircuit, x: float) -> float:
    if circ.qubits == 1:
        return eval_membership(circ, x)
    return eval_membership_multi(circ, x)


def param_shift_grad(circ: MembershipCircuit, x: float) -> np.ndarray:
    """Gradient of the membership value w.r.t. every angle via the +-pi/2 shift rule.

    The input x is not differentiated.
    """
    grad = np.empty(circ.n_params)
    for i in range(circ.n_params):
        plus = circ.thetas.copy()
        plus[i] += SHIFT
        minus = circ.thetas.copy()
        minus[i] -= SHIFT
        grad[i] = 0.5 * (evaluate(circ.with_thetas(plus), x)
                         - evaluate(circ.with_thetas(minus), x))
    return grad


# ---------------------------------------------------------------- batched path

def _rot_y(r, c, s):
    x, y, z = r
    return (c * x + s * z, y, c * z - s * x)


def _rot_z(r, c, s):
    x, y, z = r
    return (c * x - s * y, s * x + c * y, z)


def _single_qubit_batch(thetas: np.ndarray, layers: int, xs: np.ndarray) -> np.ndarray:
    """Membership of (stacks of) single-qubit circuits, tracked as Bloch vectors.

    ``thetas`` has shape (..., 3L) and broadcasts against ``xs``.
    """
    cx, sx = np.cos(xs), np.sin(xs)
    shape = np.broadcast_shapes(thetas.shape[:-1], xs.shape)
    r = (np.zeros(shape), np.zeros(shape), np.ones(shape))
    for l in range(layers):
        r = _rot_y(r, cx, sx)
        t1, t2, t3 = (thetas[..., 3 * l + j] for j in range(3))
        r = _rot_z(r, np.cos(t1), np.sin(t1))
        r = _rot_y(r, np.cos(t2), np.sin(t2))
        r = _rot_z(r, np.cos(t3), np.sin(t3))
    return np.clip((r[2] + 1) / 2, 0.0, 1.0)


def _multi_qubit_batch(circ: MembershipCircuit, thetas: np.ndarray, xs: np.ndarray) -> np.ndarray:
    n = circ.qubits
    xs = np.asarray(xs, dtype=float).reshape(-1)
    psi = np.zeros((xs.size,) + (2,) * n, dtype=complex)
    psi[(slice(None),) + (0,) * n] = 1.0
    cx, sx = np.cos(xs / 2), np.sin(xs / 2)
    enc = np.stack([np.stack([cx, -sx], -1), np.stack([sx, cx], -1)], -2)  # (N,2,2)

    def apply(psi, mat, q, batched):
        ax = q + 1
        psi = np.moveaxis(psi, ax, -1)
        if batched:
            shape = psi.shape
            psi = np.einsum("nij,nkj->nki", mat, psi.reshape(shape[0], -1, 2)).reshape(shape)
        else:
            psi = psi @ mat.T
        return np.moveaxis(psi, -1, ax)

    for layer in thetas.reshape(circ.layers, n):
        for q in range(n):
            psi = apply(psi, enc, q, True)
        for q in range(n):
            psi = apply(psi, qcore.ry_matrix(layer[q]), q, False)
        for q in range(n - 1):
            sel = [slice(None)] * (n + 1)
            sel[q + 1] = 1
            sel = tuple(sel)
            psi[sel] = np.flip(psi[sel], axis=q + 1).copy()
    probs = np.abs(psi.reshape(xs.size, -1)) ** 2
    z = probs @ qcore.z_signs(n, circ.observable_qubit)
    return np.clip((z + 1) / 2, 0.0, 1.0)


def batch_eval(circ: MembershipCircuit, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if not np.all(np.isfinite(xs)):
        raise InvalidArgument("inputs must be finite")
    if xs.size == 0:
        return np.zeros(xs.shape)
    if circ.qubits == 1:
        return _single_qubit_batch(circ.thetas, circ.layers, xs)
    return _multi_qubit_batch(circ, circ.thetas, xs).reshape(xs.shape)


def batch_param_shift(circ: MembershipCircuit, xs) -> np.ndarray:
    """Shift-rule gradients for many inputs; shape ``xs.shape + (n_params,)``."""
    xs = np.asarray(xs, dtype=float)
    out = np.empty(xs.shape + (circ.n_params,))
    for i in range(circ.n_params):
        shifted = np.tile(circ.thetas, (2, 1))
        shifted[0, i] += SHIFT
        shifted[1, i] -= SHIFT
        if circ.qubits == 1:
            fp = _single_qubit_batch(shifted[0], circ.layers, xs)
            fm = _single_qubit_batch(shifted[1], circ.layers, xs)
        else:
            fp = _multi_qubit_batch(circ, shifted[0], xs).reshape(xs.shape)
            fm = _multi_qubit_batch(circ, shifted[1], xs).reshape(xs.shape)
        out[..., i] = 0.5 * (fp - fm)
    return out


def stacked_eval(thetas: np.ndarray, layers: int, xs: np.ndarray) -> np.ndarray:
    """Evaluate k single-qubit circuits (``thetas`` of shape (k, 3L)) on every x.

    Returns shape ``xs.shape + (k,)``.
    """
    xs = np.asarray(xs, dtype=float)[..., None]
    return _single_qubit_batch(thetas, layers, xs)


def stacked_param_shift(thetas: np.ndarray, layers: int, xs: np.ndarray, weights: np.ndarray,
                        chunk: int = 16) -> np.ndarray:
    """Weighted shift-rule gradient for k stacked single-qubit circuits.

    Returns ``g[i, p] = sum over xs of weights[..., i] * d f_i(x) / d theta_{i,p}``
    with ``weights`` of shape ``xs.shape + (k,)``. Each shifted circuit is
    evaluated as <Z_heis| R(theta +- pi/2) |r>, reusing the Bloch vector r
    entering the shifted gate and Z propagated back through the gates after it.
    Inputs are processed ``chunk`` rows at a time to bound memory.
    """
    xs = np.asarray(xs, dtype=float)
    weights = np.asarray(weights, dtype=float)
    k, n_params = thetas.shape
    if xs.ndim == 1:
        xs, weights = xs[None], weights[None]
    grad = np.zeros((k, n_params))
    cos_t, sin_t = np.cos(thetas), np.sin(thetas)
    for lo in range(0, xs.shape[0], chunk):
        x = xs[lo:lo + chunk][..., None]
        w = weights[lo:lo + chunk]
        w = w.reshape(-1, k)
        cx, sx = np.cos(x), np.sin(x)
        shape = np.broadcast_shapes(x.shape, (k,))
        r = (np.zeros(shape), np.zeros(shape), np.ones(shape))
        before = []
        for l in range(layers):
            r = _rot_y(r, cx, sx)
            for j, rot in enumerate((_rot_z, _rot_y, _rot_z)):
                p = 3 * l + j
                before.append(r)
                r = rot(r, cos_t[:, p], sin_t[:, p])
        # Heisenberg picture: o^T r_final = <Z>; pull o back through each gate
        o = (np.zeros(shape), np.zeros(shape), np.ones(shape))
        for l in reversed(range(layers)):
            for j, rot in reversed(list(enumerate((_rot_z, _rot_y, _rot_z)))):
                p = 3 * l + j
                rb = before[p]
                total = 0.0
                for sign in (1.0, -1.0):
                    t = thetas[:, p] + sign * SHIFT
                    rs = rot(rb, np.cos(t), np.sin(t))
                    z = o[0] * rs[0] + o[1] * rs[1] + o[2] * rs[2]
                    total = total + sign * (z + 1) / 2
                grad[:, p] += 0.5 * np.sum(w * total.reshape(-1, k), axis=0)
                # transpose of a rotation is the rotation by -theta
                o = rot(o, cos_t[:, p], -sin_t[:, p])
            o = _rot_y(o, cx, -sx)
    return grad
