"""Exact simulation of small qubit registers.

Pure states are amplitude vectors, mixed states are density matrices. Qubit 0 is
the most significant bit of the basis index, so ``|10>`` is index 2 and a CNOT
with control 0 maps it to ``|11>`` (index 3).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgument

MAX_QUBITS = 8
EIGEN_CLAMP = 1e-10

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)


def ry_matrix(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz_matrix(theta: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


@dataclass(frozen=True)
class PureState:
    n: int
    amps: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n <= MAX_QUBITS:
            raise InvalidArgument(f"qubit count must be in 1..{MAX_QUBITS}, got {self.n}")
        amps = np.asarray(self.amps, dtype=complex).reshape(-1)
        if amps.size != 2**self.n:
            raise InvalidArgument(f"expected {2**self.n} amplitudes, got {amps.size}")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > 1e-10:
            raise InvalidArgument(f"state is not normalised (norm^2 = {norm!r})")
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def zero(cls, n: int = 1) -> "PureState":
        amps = np.zeros(2**n, dtype=complex)
        amps[0] = 1.0
        return cls(n, amps)

    @classmethod
    def basis(cls, bits: str) -> "PureState":
        """Computational basis state from a bit string, qubit 0 first (``"10"``)."""
        amps = np.zeros(2 ** len(bits), dtype=complex)
        amps[int(bits, 2)] = 1.0
        return cls(len(bits), amps)


@dataclass(frozen=True)
class MixedState:
    n: int
    rho: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        dim = 2**self.n
        if rho.shape != (dim, dim):
            raise InvalidArgument(f"density matrix must be {dim}x{dim}, got {rho.shape}")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    def check(self, tol: float = 1e-12) -> None:
        """Raise InvalidArgument unless rho is Hermitian, unit-trace and PSD."""
        rho = self.rho
        if np.max(np.abs(rho - rho.conj().T)) > tol:
            raise InvalidArgument("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > tol:
            raise InvalidArgument(f"density matrix trace is {np.trace(rho)}")
        if np.linalg.eigvalsh(rho).min() < -EIGEN_CLAMP:
            raise InvalidArgument("density matrix has negative eigenvalues")


@dataclass(frozen=True)
class KrausChannel:
    name: str
    gamma: float
    operators: tuple = field(repr=False)

    def completeness_error(self) -> float:
        total = sum(E.conj().T @ E for E in self.operators)
        return float(np.max(np.abs(total - I2)))


def _check_qubit(n: int, qubit: int) -> None:
    if not 0 <= qubit < n:
        raise InvalidArgument(f"qubit index {qubit} out of range for {n} qubit(s)")


def apply_1q(state: PureState, matrix: np.ndarray, qubit: int) -> PureState:
    _check_qubit(state.n, qubit)
    psi = state.amps.reshape((2,) * state.n)
    psi = np.tensordot(matrix, psi, axes=([1], [qubit]))
    psi = np.moveaxis(psi, 0, qubit)
    return PureState(state.n, psi.reshape(-1))


def apply_ry(state: PureState, qubit: int, theta: float) -> PureState:
    if not np.isfinite(theta):
        raise InvalidArgument(f"rotation angle must be finite, got {theta}")
    return apply_1q(state, ry_matrix(theta), qubit)


def apply_rz(state: PureState, qubit: int, theta: float) -> PureState:
    if not np.isfinite(theta):
        raise InvalidArgument(f"rotation angle must be finite, got {theta}")
    return apply_1q(state, rz_matrix(theta), qubit)


def apply_cnot(state: PureState, control: int, target: int) -> PureState:
    _check_qubit(state.n, control)
    _check_qubit(state.n, target)
    if control == target:
        raise InvalidArgument("CNOT control and target must differ")
    psi = np.array(state.amps).reshape((2,) * state.n)
    sel = [slice(None)] * state.n
    sel[control] = 1
    sel = tuple(sel)
    # target axis inside the control=1 slice shifts down by one if it came after control
    axis = target - 1 if target > control else target
    psi[sel] = np.flip(psi[sel], axis=axis).copy()
    return PureState(state.n, psi.reshape(-1))


def z_signs(n: int, qubit: int) -> np.ndarray:
    """+1/-1 per basis index according to the bit of ``qubit`` (qubit 0 = MSB)."""
    bits = (np.arange(2**n) >> (n - 1 - qubit)) & 1
    return 1.0 - 2.0 * bits


def expectation_z(state: PureState, qubit: int) -> float:
    _check_qubit(state.n, qubit)
    probs = np.abs(state.amps) ** 2
    return float(np.clip(probs @ z_signs(state.n, qubit), -1.0, 1.0))


def to_mixed(state: PureState) -> MixedState:
    return MixedState(state.n, np.outer(state.amps, state.amps.conj()))


CHANNELS = ("AD", "DP", "MIX_DP")


def make_channel(name: str, gamma: float) -> KrausChannel:
    """Kraus set for amplitude damping (AD), the Pauli depolarising set (DP) or the
    mixing depolariser (MIX_DP, rho -> (1-g) rho + g I/2)."""
    name = name.upper()
    if name not in CHANNELS:
        raise InvalidArgument(f"unknown channel {name!r}; expected one of {CHANNELS}")
    if not (0.0 <= gamma <= 1.0):
        raise InvalidArgument(f"gamma must lie in [0, 1], got {gamma}")
    if name == "AD":
        ops = (
            np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=complex),
            np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=complex),
        )
    elif name == "DP":
        p = np.sqrt(gamma / 3)
        ops = (np.sqrt(1 - gamma) * I2, p * X, p * Z, p * Y)
    else:
        p = np.sqrt(gamma / 4)
        ops = (np.sqrt(1 - 3 * gamma / 4) * I2, p * X, p * Y, p * Z)
    for op in ops:
        op.setflags(write=False)
    return KrausChannel(name, float(gamma), ops)


def embed(op: np.ndarray, qubit: int, n: int) -> np.ndarray:
    """Lift a 2x2 operator to the full 2^n space acting on ``qubit``."""
    return np.kron(np.kron(np.eye(2**qubit), op), np.eye(2 ** (n - qubit - 1)))


def apply_unitary(rho: MixedState, matrix: np.ndarray, qubit: int) -> MixedState:
    _check_qubit(rho.n, qubit)
    U = embed(matrix, qubit, rho.n)
    return MixedState(rho.n, U @ rho.rho @ U.conj().T)


def apply_channel(rho: MixedState, channel: KrausChannel, qubit: int) -> MixedState:
    _check_qubit(rho.n, qubit)
    out = np.zeros_like(rho.rho)
    for E in channel.operators:
        F = embed(E, qubit, rho.n)
        out += F @ rho.rho @ F.conj().T
    return MixedState(rho.n, out)


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    w = np.where(w < EIGEN_CLAMP, 0.0, w)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho: MixedState, sigma: MixedState) -> float:
    """Uhlmann fidelity Tr(sqrt(sqrt(rho) sigma sqrt(rho)))^2."""
    if rho.rho.shape != sigma.rho.shape:
        raise InvalidArgument(
            f"dimension mismatch: {rho.rho.shape} vs {sigma.rho.shape}"
        )
    if np.array_equal(rho.rho, sigma.rho):
        return 1.0
    r = _psd_sqrt(rho.rho)
    m = r @ sigma.rho @ r
    w = np.linalg.eigvalsh((m + m.conj().T) / 2)
    w = np.where(w < EIGEN_CLAMP, 0.0, w)
    return float(np.clip(np.sum(np.sqrt(w)) ** 2, 0.0, 1.0))


def fidelity_pure(psi: PureState, sigma: MixedState) -> float:
    """Fidelity against a pure reference, <psi|sigma|psi>."""
    if 2**psi.n != sigma.rho.shape[0]:
        raise InvalidArgument("dimension mismatch between state and density matrix")
    val = np.vdot(psi.amps, sigma.rho @ psi.amps).real
    return float(np.clip(val, 0.0, 1.0))


def random_state(n: int, rng: np.random.Generator) -> PureState:
    amps = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return PureState(n, amps / np.linalg.norm(amps))


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> MixedState:
    dim = 2**n
    rank = rank or dim
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return MixedState(n, rho / np.trace(rho).real)


def bloch_vector(rho: MixedState) -> np.ndarray:
    if rho.n != 1:
        raise InvalidArgument("Bloch vector is defined for one qubit only")
    return np.array([np.trace(rho.rho @ P).real for P in (X, Y, Z)])


__all__ = [
    "PureState", "MixedState", "KrausChannel", "CHANNELS",
    "apply_ry", "apply_rz", "apply_cnot", "apply_1q", "expectation_z",
    "to_mixed", "make_channel", "apply_channel", "apply_unitary",
    "fidelity", "fidelity_pure", "ry_matrix", "rz_matrix", "embed",
    "random_state", "random_density", "bloch_vector", "z_signs",
]
