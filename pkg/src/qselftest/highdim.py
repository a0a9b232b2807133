"""[{3,d},{4,d}] self-testing of sum_i c_i|ii> through 2x2 blocks.

Two pairings of the levels cover every coefficient. Pairing P1 is read from
Alice settings (0, 1) and Bob settings (0, 1); pairing P2 from Alice (0, 2)
and Bob (2, 3). Within a block (i, j), level i plays the role of qubit
state |0> and j of |1>: the +1 eigenvector of every block observable is
labeled with outcome i, the -1 eigenvector with j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .bell import CHSH_SCENARIO, BellScenario, CorrelationTable, ObservableSet, ProjectiveMeasurement
from .qcore import SchmidtState, X, fidelity_to_pure
from .tiltedchsh import ExtractionResult, extract_theta, tilt_angle, tilted_observables

EMPTY_BLOCK = 1e-9

Block = tuple[int, ...]


@dataclass(frozen=True)
class BlockPairing:
    pairing_id: str
    blocks: tuple[Block, ...]
    alice_settings: tuple[int, int]
    bob_settings: tuple[int, int]

    def __post_init__(self) -> None:
        flat = sorted(i for b in self.blocks for i in b)
        if flat != list(range(len(flat))):
            raise ValueError(f"blocks {self.blocks} do not partition 0..{len(flat) - 1}")
        if any(len(b) not in (1, 2) for b in self.blocks):
            raise ValueError("blocks must have one or two levels")

    @property
    def d(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def pairs(self) -> list[Block]:
        return [b for b in self.blocks if len(b) == 2]


def default_pairings(d: int) -> tuple[BlockPairing, BlockPairing]:
    if d == 4:
        p1, p2 = ((0, 1), (2, 3)), ((1, 2), (0, 3))
    elif d == 3:
        p1, p2 = ((0, 1), (2,)), ((1, 2), (0,))
    else:
        raise ValueError(f"no default pairing for d={d}; pass pairings explicitly")
    return (
        BlockPairing("P1", p1, (0, 1), (0, 1)),
        BlockPairing("P2", p2, (0, 2), (2, 3)),
    )


def _embed(op2: np.ndarray, block: Block, d: int) -> np.ndarray:
    out = np.zeros((d, d), dtype=complex)
    i, j = block
    out[np.ix_([i, j], [i, j])] = op2
    return out


def _block_measurement(d: int, pairing: BlockPairing, observables: dict[Block, np.ndarray]) -> ProjectiveMeasurement:
    projs = [None] * d
    eye2 = np.eye(2)
    for b in pairing.blocks:
        if len(b) == 1:
            k = b[0]
            p = np.zeros((d, d), dtype=complex)
            p[k, k] = 1
            projs[k] = p
        else:
            o = observables[b]
            projs[b[0]] = _embed((eye2 + o) / 2, b, d)
            projs[b[1]] = _embed((eye2 - o) / 2, b, d)
    return ProjectiveMeasurement(projs)


@dataclass(frozen=True)
class QuditSettings:
    alice: ObservableSet
    bob: ObservableSet
    pairings: tuple[BlockPairing, BlockPairing]
    tilts: dict = field(default_factory=dict)  # block -> mu
    degenerate_blocks: tuple[Block, ...] = ()

    @property
    def projector_counts(self) -> tuple[int, int]:
        return sum(m.outcomes for m in self.alice), sum(m.outcomes for m in self.bob)


def block_theta(c_i: float, c_j: float) -> float:
    return math.atan2(c_j, c_i)


def build_qudit_settings(
    state: SchmidtState | Sequence[float],
    pairings: tuple[BlockPairing, BlockPairing] | None = None,
) -> QuditSettings:
    """Three Alice and four Bob d-outcome measurements for a Schmidt state.

    Alice: computational basis, then X within each P1 block, then X within
    each P2 block. Bob: cos(mu) Z +/- sin(mu) X within each P1 block, then
    the same for P2, with tan(mu) = sin(2 theta_B) and
    theta_B = arctan(c_j / c_i). Blocks with c_i = c_j = 0 get mu = pi/4 and
    blocks with one vanishing coefficient get mu = 0; both are flagged.
    """
    coeffs = state.coeffs if isinstance(state, SchmidtState) else tuple(float(c) for c in state)
    d = len(coeffs)
    if pairings is None:
        pairings = default_pairings(d)
    for p in pairings:
        if p.d != d:
            raise ValueError(f"pairing {p.pairing_id} covers {p.d} levels, state has {d}")

    tilts = {}
    degenerate = []
    for p in pairings:
        for b in p.pairs:
            ci, cj = coeffs[b[0]], coeffs[b[1]]
            if ci == 0 and cj == 0:
                tilts[b] = math.pi / 4
                degenerate.append(b)
            else:
                tilts[b] = tilt_angle(block_theta(ci, cj))
                if ci == 0 or cj == 0:
                    degenerate.append(b)

    comp = ProjectiveMeasurement([np.diag(np.eye(d)[k]).astype(complex) for k in range(d)])
    alice = [comp] + [_block_measurement(d, p, {b: X for b in p.pairs}) for p in pairings]
    bob = []
    for p in pairings:
        plus = {b: tilted_observables(tilts[b])[0] for b in p.pairs}
        minus = {b: tilted_observables(tilts[b])[1] for b in p.pairs}
        bob.extend([_block_measurement(d, p, plus), _block_measurement(d, p, minus)])
    return QuditSettings(alice, bob, tuple(pairings), tilts, tuple(degenerate))


@dataclass(frozen=True)
class BlockTable:
    table: CorrelationTable | None
    weight: float
    weight_spread: float
    weights: tuple[float, ...]


def block_reduce(
    table: CorrelationTable,
    block: Block,
    settings_pair: tuple[tuple[int, int], tuple[int, int]],
) -> BlockTable:
    """Condition a qudit table on both outcomes falling inside ``block``.

    The weight is the in-block probability averaged over the four setting
    pairs (pooled counts for sampled tables). Each setting pair of the 2x2
    table is normalized by its own in-block mass. Empty blocks return the
    weight with ``table=None``.
    """
    (x0, x1), (y0, y1) = settings_pair
    idx = list(block)
    sub = table.probs[np.ix_([x0, x1], [y0, y1], idx, idx)]
    w_xy = sub.sum(axis=(2, 3))
    weights = tuple(float(w) for w in w_xy.ravel())
    weight = float(w_xy.mean())
    spread = float(w_xy.max() - w_xy.min())
    if len(block) == 1 or w_xy.min() < EMPTY_BLOCK:
        return BlockTable(None, weight, spread, weights)
    cond = sub / w_xy[:, :, None, None]
    if table.source == "sampled":
        shots = int(round(weight * table.shots))
        two = CorrelationTable(CHSH_SCENARIO, cond, source="sampled", shots=max(shots, 1))
    else:
        two = CorrelationTable(CHSH_SCENARIO, cond)
    return BlockTable(two, weight, spread, weights)


@dataclass(frozen=True)
class BlockResult:
    block: Block
    pairing_id: str
    weight: float  # normalized within the pairing
    raw_weight: float
    weight_spread: float
    extraction: ExtractionResult | None
    ratio: float | None  # c_j / c_i

    def to_dict(self) -> dict:
        return {
            "block": list(self.block),
            "pairing": self.pairing_id,
            "weight": self.weight,
            "raw_weight": self.raw_weight,
            "weight_spread": self.weight_spread,
            "extraction": None if self.extraction is None else self.extraction.to_dict(),
            "ratio": _finite_or_none(self.ratio),
        }


def _finite_or_none(x: float | None) -> float | None:
    if x is None or not math.isfinite(x):
        return None
    return x


def analyze_pairing(table: CorrelationTable, pairing: BlockPairing) -> list[BlockResult]:
    reduced = [
        block_reduce(table, b, (pairing.alice_settings, pairing.bob_settings)) for b in pairing.blocks
    ]
    total = sum(r.weight for r in reduced)
    out = []
    for b, r in zip(pairing.blocks, reduced):
        ext = ratio = None
        if r.table is not None:
            ext = extract_theta(r.table, signed=True)
            ratio = math.tan(ext.theta) if ext.theta < math.pi / 2 else math.inf
        w = r.weight / total if total > 0 else 0.0
        out.append(BlockResult(b, pairing.pairing_id, w, r.weight, r.weight_spread, ext, ratio))
    return out


@dataclass(frozen=True)
class ReconstructedState:
    d: int
    coeffs: tuple[float, ...]
    consistency_residual: float
    blocks: tuple[BlockResult, ...] = ()
    degenerate_blocks: tuple[Block, ...] = ()
    mode: str = "primary"
    fidelity_vs_reference: float | None = None

    @property
    def ket(self) -> np.ndarray:
        return SchmidtState.normalized(self.coeffs).ket

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "coeffs": list(self.coeffs),
            "consistency_residual": _finite_or_none(self.consistency_residual),
            "blocks": [b.to_dict() for b in self.blocks],
            "degenerate_blocks": [list(b) for b in self.degenerate_blocks],
            "mode": self.mode,
            "fidelity_vs_reference": self.fidelity_vs_reference,
        }


def _primary_coeffs(results: list[BlockResult], d: int) -> np.ndarray:
    c = np.zeros(d)
    for r in results:
        if len(r.block) == 1:
            c[r.block[0]] = math.sqrt(r.weight)
        elif r.extraction is not None:
            th = r.extraction.theta
            c[r.block[0]] = math.sqrt(r.weight) * math.cos(th)
            c[r.block[1]] = math.sqrt(r.weight) * math.sin(th)
    return c


def _least_squares_coeffs(results: list[BlockResult], d: int) -> np.ndarray | None:
    """Weighted least squares on log c_j - log c_i = log tan(theta_B).

    Returns None when the usable blocks do not connect all levels.
    """
    rows, rhs, wts = [], [], []
    for r in results:
        if r.extraction is None or r.ratio is None or not (0 < r.ratio < math.inf):
            continue
        i, j = r.block
        row = np.zeros(d)
        row[i], row[j] = -1.0, 1.0
        rows.append(row)
        rhs.append(math.log(r.ratio))
        wts.append(math.sqrt(r.weight))
    if not rows:
        return None
    a = np.array(rows)
    # gauge: log c_0 = 0
    a = np.vstack([a, np.eye(d)[0]])
    b = np.array(rhs + [0.0])
    w = np.array(wts + [1.0])
    if np.linalg.matrix_rank(a) < d:
        return None
    sol, *_ = np.linalg.lstsq(a * w[:, None], b * w, rcond=None)
    c = np.exp(sol)
    return c / np.linalg.norm(c)


def _residual(results: list[BlockResult], c: np.ndarray) -> float:
    worst = 0.0
    for r in results:
        if r.ratio is None:
            continue
        ci, cj = c[r.block[0]], c[r.block[1]]
        if ci <= 1e-15:
            err = 0.0 if (cj <= 1e-15 or math.isinf(r.ratio)) else math.inf
        else:
            err = 0.0 if math.isinf(r.ratio) and cj <= 1e-15 else abs(r.ratio - cj / ci)
        worst = max(worst, err)
    return worst


def reconstruct_coefficients(
    table: CorrelationTable,
    d: int,
    *,
    pairings: tuple[BlockPairing, BlockPairing] | None = None,
    mode: str = "primary",
    reference: SchmidtState | np.ndarray | None = None,
) -> ReconstructedState:
    """Infer c_0..c_{d-1} from a full [{3,d},{4,d}] table.

    ``mode="primary"`` builds coefficients from the P1 blocks (ratio from
    the block tilt, scale from the block weight) and uses P2 only for the
    consistency residual. ``mode="least_squares"`` fits all block ratios of
    both pairings at once, falling back to primary if the blocks do not
    connect every level.
    """
    if table.scenario != BellScenario(3, 4, d):
        raise ValueError(f"expected a [{{3,{d}}},{{4,{d}}}] table, got {table.scenario}")
    if mode not in ("primary", "least_squares"):
        raise ValueError(f"unknown mode {mode!r}")
    if pairings is None:
        pairings = default_pairings(d)
    p1, p2 = pairings
    r1 = analyze_pairing(table, p1)
    r2 = analyze_pairing(table, p2)

    c = None
    if mode == "least_squares":
        c = _least_squares_coeffs(r1 + r2, d)
    if c is None:
        mode = "primary"
        c = _primary_coeffs(r1, d)
        norm = np.linalg.norm(c)
        if norm > 0:
            c = c / norm
    c = np.abs(c)
    degenerate = tuple(
        r.block for r in r1 + r2 if len(r.block) == 2 and (r.extraction is None or r.extraction.degenerate)
    )
    est = ReconstructedState(d, tuple(c.tolist()), _residual(r2, c), tuple(r1 + r2), degenerate, mode)
    if reference is not None:
        est = ReconstructedState(
            est.d, est.coeffs, est.consistency_residual, est.blocks, est.degenerate_blocks, est.mode,
            reconstruction_fidelity(est, reference),
        )
    return est


def reconstruction_fidelity(est: ReconstructedState | Sequence[float], reference: SchmidtState | np.ndarray) -> float:
    """<psi_est|rho_ref|psi_est> with psi_est = sum_i c_i |ii>."""
    coeffs = est.coeffs if isinstance(est, ReconstructedState) else tuple(est)
    psi = SchmidtState.normalized(coeffs).ket
    rho = reference.rho if isinstance(reference, SchmidtState) else np.asarray(reference)
    return fidelity_to_pure(rho, psi)
