"""Tomography oracle: reconstruct rho from product projector statistics.

Each party measures d^2 rank-1 projectors onto

    |i>,  (|i> + |j>)/sqrt(2),  (|i> + i|j>)/sqrt(2)    (i < j),

which fixes every diagonal entry and the real and imaginary part of every
coherence, so the set is informationally complete. The joint experiment
uses all d^4 products.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .noise import make_rng
from .qcore import projector

SUPPORTED_DIMS = (2, 3, 4)


@dataclass(frozen=True)
class TomographyBasis:
    d: int
    projectors: tuple[np.ndarray, ...]
    design: np.ndarray  # design[k, m] = tr(P_k G_m)
    condition_number: float

    @property
    def joint_count(self) -> int:
        return len(self.projectors) ** 2


def hermitian_basis(d: int) -> list[np.ndarray]:
    """Orthonormal (Hilbert-Schmidt) basis of d x d Hermitian matrices."""
    out = []
    for i in range(d):
        e = np.zeros((d, d), dtype=complex)
        e[i, i] = 1
        out.append(e)
    for i in range(d):
        for j in range(i + 1, d):
            s = np.zeros((d, d), dtype=complex)
            s[i, j] = s[j, i] = 1 / math.sqrt(2)
            a = np.zeros((d, d), dtype=complex)
            a[i, j] = 1j / math.sqrt(2)
            a[j, i] = -1j / math.sqrt(2)
            out.extend([s, a])
    return out


def tomo_projectors(d: int) -> TomographyBasis:
    if d not in SUPPORTED_DIMS:
        raise ValueError(f"unsupported local dimension {d}; expected one of {SUPPORTED_DIMS}")
    kets = [np.eye(d, dtype=complex)[i] for i in range(d)]
    eye = np.eye(d, dtype=complex)
    for i in range(d):
        for j in range(i + 1, d):
            kets.append((eye[i] + eye[j]) / math.sqrt(2))
            kets.append((eye[i] + 1j * eye[j]) / math.sqrt(2))
    projs = tuple(projector(k) for k in kets)
    basis = hermitian_basis(d)
    design = np.array([[np.real(np.trace(p @ g)) for g in basis] for p in projs])
    cond = float(np.linalg.cond(design.T @ design))
    return TomographyBasis(d, projs, design, cond)


def tomography_probabilities(rho: np.ndarray, basis: TomographyBasis) -> np.ndarray:
    """p[k, l] = tr[rho (P_k (x) P_l)] for every product projector."""
    d = basis.d
    r = np.asarray(rho, dtype=complex).reshape(d, d, d, d)
    p = np.array(basis.projectors)
    return np.einsum("klij,xik,yjl->xy", r, p, p, optimize=True).real


def sample_tomography(probs: np.ndarray, N: int, seed: int) -> np.ndarray:
    """Click frequencies: each joint projector is recorded N times, hit or miss."""
    rng = make_rng(seed, 0xD1A)
    p = np.clip(np.asarray(probs, dtype=float), 0.0, 1.0)
    return rng.binomial(N, p) / N


def linear_inversion(probs: np.ndarray, basis: TomographyBasis) -> np.ndarray:
    """Hermitian matrix reproducing ``probs`` exactly (may be non-physical)."""
    d = basis.d
    design = np.kron(basis.design, basis.design)
    coeffs = np.linalg.solve(design, np.asarray(probs, dtype=float).ravel())
    g = hermitian_basis(d)
    rho = np.zeros((d * d, d * d), dtype=complex)
    for idx, c in enumerate(coeffs):
        m, n = divmod(idx, len(g))
        rho += c * np.kron(g[m], g[n])
    return (rho + rho.conj().T) / 2


def _project_simplex(w: np.ndarray) -> np.ndarray:
    """Euclidean projection of a vector onto the probability simplex."""
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, len(w) + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    shift = css[rho] / (rho + 1.0)
    return np.maximum(w - shift, 0.0)


def project_to_density(mat: np.ndarray) -> np.ndarray:
    """Nearest (Frobenius) positive semidefinite unit-trace matrix."""
    mat = (np.asarray(mat) + np.asarray(mat).conj().T) / 2
    w, v = np.linalg.eigh(mat)
    return (v * _project_simplex(w)) @ v.conj().T


@dataclass(frozen=True)
class TomographyFit:
    rho: np.ndarray
    linear: np.ndarray
    projection_distance: float


def fit_density(probs: np.ndarray, d: int) -> TomographyFit:
    basis = tomo_projectors(d)
    probs = np.asarray(probs, dtype=float)
    if probs.shape != (d * d, d * d):
        raise ValueError(f"expected a {(d * d, d * d)} probability array, got {probs.shape}")
    lin = linear_inversion(probs, basis)
    rho = project_to_density(lin)
    return TomographyFit(rho, lin, float(np.linalg.norm(rho - lin)))


def reconstruct_density(probs: np.ndarray, d: int) -> np.ndarray:
    """Linear inversion followed by projection onto density matrices."""
    return fit_density(probs, d).rho


@dataclass(frozen=True)
class SchmidtReadout:
    coeffs: tuple[float, ...]
    raw: tuple[float, ...]
    theta: float | None = None
    theta_out_of_range: bool = False

    def to_dict(self) -> dict:
        return {
            "coeffs": list(self.coeffs),
            "raw": list(self.raw),
            "theta": self.theta,
            "theta_out_of_range": self.theta_out_of_range,
        }


def schmidt_readout(rho: np.ndarray, d: int) -> SchmidtReadout:
    """|c_i| = sqrt(<ii|rho|ii>) and, for qubits, theta = arctan sqrt(rho_11 / rho_00).

    ``coeffs`` are renormalized over the |ii> sector; ``raw`` are not. A
    theta above pi/4 is reported as is and flagged, not folded back.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (d * d, d * d):
        raise ValueError(f"state shape {rho.shape} does not match d={d}")
    diag = np.array([max(float(np.real(rho[i * d + i, i * d + i])), 0.0) for i in range(d)])
    raw = np.sqrt(diag)
    total = diag.sum()
    coeffs = np.sqrt(diag / total) if total > 0 else raw
    theta = None
    flag = False
    if d == 2:
        if diag[0] == 0:
            theta, flag = math.pi / 2, True
        else:
            theta = math.atan(math.sqrt(diag[1] / diag[0]))
            flag = theta > math.pi / 4 + 1e-12
    return SchmidtReadout(tuple(coeffs.tolist()), tuple(raw.tolist()), theta, flag)


def density_to_dict(rho: np.ndarray) -> dict:
    rho = np.asarray(rho, dtype=complex)
    return {"dim": rho.shape[0], "real": rho.real.ravel().tolist(), "imag": rho.imag.ravel().tolist()}


def density_from_dict(data: dict) -> np.ndarray:
    dim = data["dim"]
    return (np.array(data["real"]) + 1j * np.array(data["imag"])).reshape(dim, dim)


def density_to_json(rho: np.ndarray) -> str:
    return json.dumps(density_to_dict(rho), sort_keys=True)


def density_from_json(text: str) -> np.ndarray:
    return density_from_dict(json.loads(text))
