"""Noise channels, finite-count sampling and purity calibration.

Random draws use numpy's Philox counter-based generator. Each setting pair
(x, y) gets its own stream keyed by ``SeedSequence([seed, x, y])`` so results
do not depend on iteration order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bell import CorrelationTable
from .qcore import purity


@dataclass(frozen=True)
class NoiseSpec:
    white_noise_v: float | None = None
    dephasing_lambda: float | None = None
    samples_per_setting: int | str = "exact"
    target_purity: float | None = None

    def __post_init__(self) -> None:
        if self.white_noise_v is not None and not 0 <= self.white_noise_v <= 1:
            raise ValueError(f"white_noise_v={self.white_noise_v} outside [0, 1]")
        if self.dephasing_lambda is not None and not 0 <= self.dephasing_lambda <= 1:
            raise ValueError(f"dephasing_lambda={self.dephasing_lambda} outside [0, 1]")
        if self.white_noise_v is not None and self.target_purity is not None:
            raise ValueError("give either white_noise_v or target_purity, not both")
        n = self.samples_per_setting
        if n != "exact" and not (isinstance(n, int) and n >= 1):
            raise ValueError(f"samples_per_setting must be 'exact' or a positive integer, got {n!r}")

    @property
    def exact(self) -> bool:
        return self.samples_per_setting == "exact"

    @classmethod
    def from_dict(cls, data: dict | None) -> NoiseSpec:
        return cls(**(data or {}))

    def to_dict(self) -> dict:
        return {
            k: v
            for k, v in (
                ("white_noise_v", self.white_noise_v),
                ("dephasing_lambda", self.dephasing_lambda),
                ("samples_per_setting", self.samples_per_setting),
                ("target_purity", self.target_purity),
            )
            if v is not None
        }


def mix_white(rho: np.ndarray, v: float) -> np.ndarray:
    """v rho + (1 - v) I / dim."""
    if not 0 <= v <= 1:
        raise ValueError(f"visibility {v} outside [0, 1]")
    rho = np.asarray(rho, dtype=complex)
    dim = rho.shape[0]
    return v * rho + (1 - v) * np.eye(dim) / dim


def dephase(rho: np.ndarray, lam: float, dims: tuple[int, int] | None = None) -> np.ndarray:
    """Phase damping on Alice's computational basis.

    Element <a b|rho|a' b'> is multiplied by (1 - lam) when a != a', so the
    coherences |ii><jj| of a Schmidt-form state shrink by (1 - lam) and the
    diagonal is untouched.
    """
    if not 0 <= lam <= 1:
        raise ValueError(f"dephasing strength {lam} outside [0, 1]")
    rho = np.asarray(rho, dtype=complex)
    if dims is None:
        d = int(round(math.sqrt(rho.shape[0])))
        dims = (d, d)
    d_a, d_b = dims
    a = np.repeat(np.arange(d_a), d_b)
    mask = np.where(a[:, None] == a[None, :], 1.0, 1.0 - lam)
    return rho * mask


def apply_noise(rho: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Dephasing first, then white noise (fixed or calibrated to a purity)."""
    out = np.asarray(rho, dtype=complex)
    if spec.dephasing_lambda is not None:
        out = dephase(out, spec.dephasing_lambda)
    if spec.target_purity is not None:
        out = mix_white(out, visibility_for_purity(spec.target_purity, out.shape[0], out))
    elif spec.white_noise_v is not None:
        out = mix_white(out, spec.white_noise_v)
    return out


def visibility_for_purity(target_P: float, dim: int, base: np.ndarray | None = None) -> float:
    """Visibility v with purity(mix_white(base, v)) == target_P.

    Since tr(rho) = 1, purity(v rho + (1-v) I/dim) = v^2 (P0 - 1/dim) + 1/dim
    with P0 the base purity (1 for a pure base).
    """
    p0 = 1.0 if base is None else purity(base)
    floor = 1.0 / dim
    if not floor <= target_P <= p0 + 1e-12:
        raise ValueError(f"target purity {target_P} outside [{floor}, {p0}]")
    if p0 - floor <= 0:
        raise ValueError("base state is maximally mixed; purity cannot be tuned")
    return min(1.0, math.sqrt(max(target_P - floor, 0.0) / (p0 - floor)))


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


def sample_counts(table: CorrelationTable, N: int, seed: int) -> CorrelationTable:
    """Draw N outcome pairs per setting pair from an exact table."""
    if N < 1:
        raise ValueError("N must be positive")
    s = table.scenario
    counts = np.zeros(table.probs.shape, dtype=np.int64)
    for x in range(s.settings_A):
        for y in range(s.settings_B):
            p = table.probs[x, y].ravel()
            p = p / p.sum()
            counts[x, y] = make_rng(seed, x, y).multinomial(N, p).reshape(s.outcomes, s.outcomes)
    return CorrelationTable(s, counts / N, source="sampled", shots=N, counts=counts)
