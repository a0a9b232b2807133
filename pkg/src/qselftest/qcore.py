"""Dense linear-algebra and state primitives for small bipartite systems.

Conventions
-----------
- Matrices and kets are plain complex ``numpy`` arrays.
- Joint basis index of a bipartite system is ``a * d_B + b`` (Alice-major).
- Validated density matrices are returned read-only so they can be shared.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
EIGEN_TOL = -1e-10
MAX_DIM = 16

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


class StateError(ValueError):
    """Raised when an operator violates a density-matrix or state invariant."""


def kron(*ops: np.ndarray) -> np.ndarray:
    """Tensor product of any number of matrices or kets, left to right."""
    out = np.array([[1.0 + 0j]])
    for op in ops:
        op = np.asarray(op, dtype=complex)
        if op.ndim == 1:
            op = op.reshape(-1, 1)
        out = np.kron(out, op)
    if all(np.asarray(op).ndim == 1 for op in ops):
        return out.ravel()
    return out


def ket(index: int, dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def projector(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).ravel()
    return np.outer(psi, psi.conj())


def dagger(a: np.ndarray) -> np.ndarray:
    return np.asarray(a).conj().T


def density_matrix(rho: np.ndarray, *, check_psd: bool = True) -> np.ndarray:
    """Validate ``rho`` as a density matrix and return a read-only copy.

    Raises ``StateError`` if the matrix is not square, not Hermitian to
    1e-12, not unit trace to 1e-12, or has an eigenvalue below -1e-10.
    """
    rho = np.array(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise StateError(f"density matrix must be square, got shape {rho.shape}")
    if rho.shape[0] > MAX_DIM:
        raise StateError(f"dimension {rho.shape[0]} exceeds supported maximum {MAX_DIM}")
    if not np.all(np.isfinite(rho)):
        raise StateError("density matrix has non-finite entries")
    if np.max(np.abs(rho - dagger(rho))) > HERMITIAN_TOL:
        raise StateError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > TRACE_TOL:
        raise StateError(f"density matrix trace is {np.trace(rho).real!r}, expected 1")
    if check_psd and np.linalg.eigvalsh(rho).min() < EIGEN_TOL:
        raise StateError("density matrix has a negative eigenvalue")
    rho.setflags(write=False)
    return rho


def is_density_matrix(rho: np.ndarray) -> bool:
    try:
        density_matrix(rho)
    except StateError:
        return False
    return True


def partial_trace(rho: np.ndarray, dims: Sequence[int], keep: int | str = 0) -> np.ndarray:
    """Reduced state of one party of a bipartite operator.

    ``keep`` selects the surviving party: ``0``/``"A"`` or ``1``/``"B"``.
    """
    d_a, d_b = (int(d) for d in dims)
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (d_a * d_b, d_a * d_b):
        raise StateError(f"operator shape {rho.shape} does not match dims {(d_a, d_b)}")
    keep_idx = {"A": 0, "B": 1, 0: 0, 1: 1}.get(keep)
    if keep_idx is None:
        raise ValueError(f"keep must be 0/'A' or 1/'B', got {keep!r}")
    t = rho.reshape(d_a, d_b, d_a, d_b)
    if keep_idx == 0:
        return np.einsum("ijkj->ik", t)
    return np.einsum("ijil->jl", t)


def fidelity_to_pure(rho: np.ndarray, psi: np.ndarray) -> float:
    """Overlap <psi|rho|psi> of a state with a normalized ket."""
    rho = np.asarray(rho, dtype=complex)
    psi = np.asarray(psi, dtype=complex).ravel()
    if rho.shape != (psi.size, psi.size):
        raise StateError(f"state of shape {rho.shape} and ket of length {psi.size} differ")
    return float(np.real(psi.conj() @ rho @ psi))


def purity(rho: np.ndarray) -> float:
    rho = np.asarray(rho, dtype=complex)
    return float(np.real(np.trace(rho @ rho)))


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    diff = np.asarray(rho) - np.asarray(sigma)
    diff = (diff + dagger(diff)) / 2
    return float(0.5 * np.abs(np.linalg.eigvalsh(diff)).sum())


def hermitian_sign(op: np.ndarray) -> np.ndarray:
    """Unitary Hermitian polar factor of a Hermitian operator.

    Null eigenvalues are sent to +1, so the result is always a valid
    +/-1-valued observable.
    """
    op = np.asarray(op, dtype=complex)
    op = (op + dagger(op)) / 2
    w, v = np.linalg.eigh(op)
    s = np.where(w < 0, -1.0, 1.0)
    return (v * s) @ dagger(v)


def maximally_mixed(dim: int) -> np.ndarray:
    return np.eye(dim, dtype=complex) / dim


@dataclass(frozen=True)
class TargetQubitState:
    """cos(theta)|00> + sin(theta)|11> with theta in [0, pi/4]."""

    theta: float

    def __post_init__(self) -> None:
        if not (-1e-12 <= self.theta <= np.pi / 4 + 1e-12):
            raise StateError(f"theta={self.theta} outside [0, pi/4]")

    @property
    def ket(self) -> np.ndarray:
        return np.array([np.cos(self.theta), 0, 0, np.sin(self.theta)], dtype=complex)

    @property
    def rho(self) -> np.ndarray:
        return projector(self.ket)


def target_ket(theta: float) -> np.ndarray:
    """cos(theta)|00> + sin(theta)|11> for any real theta (no range check)."""
    return np.array([np.cos(theta), 0, 0, np.sin(theta)], dtype=complex)


@dataclass(frozen=True)
class SchmidtState:
    """Pure state sum_i c_i |ii> with real nonnegative coefficients."""

    coeffs: tuple[float, ...]

    def __init__(self, coeffs: Sequence[float]) -> None:
        c = tuple(float(x) for x in coeffs)
        if any(x < 0 for x in c):
            raise StateError("Schmidt coefficients must be nonnegative")
        if abs(sum(x * x for x in c) - 1.0) > 1e-12:
            raise StateError("Schmidt coefficients must have unit 2-norm")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def normalized(cls, coeffs: Sequence[float]) -> SchmidtState:
        c = np.abs(np.asarray(coeffs, dtype=float))
        return cls(c / np.linalg.norm(c))

    @property
    def d(self) -> int:
        return len(self.coeffs)

    @property
    def ket(self) -> np.ndarray:
        d = self.d
        psi = np.zeros(d * d, dtype=complex)
        for i, c in enumerate(self.coeffs):
            psi[i * d + i] = c
        return psi

    @property
    def rho(self) -> np.ndarray:
        return projector(self.ket)
