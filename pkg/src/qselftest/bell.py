"""Bell scenarios, Born-rule correlation tables and no-signalling checks.

Outcome 0 carries eigenvalue +1 and outcome 1 carries -1 whenever a binary
table is read as +/-1 observables.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .qcore import StateError, dagger

PROJ_TOL = 1e-10
SUM_TOL = 1e-9


@dataclass(frozen=True)
class BellScenario:
    settings_A: int
    settings_B: int
    outcomes: int

    def __post_init__(self) -> None:
        if min(self.settings_A, self.settings_B, self.outcomes) < 1:
            raise ValueError(f"invalid scenario {self}")

    @property
    def size(self) -> int:
        """Number of probabilities P(a,b|x,y) in a full table."""
        return self.settings_A * self.settings_B * self.outcomes**2

    def to_dict(self) -> dict:
        return {"settings_A": self.settings_A, "settings_B": self.settings_B, "outcomes": self.outcomes}


CHSH_SCENARIO = BellScenario(2, 2, 2)


def qudit_scenario(d: int) -> BellScenario:
    return BellScenario(3, 4, d)


@dataclass(frozen=True)
class ProjectiveMeasurement:
    """Complete set of orthogonal projectors; index in the tuple is the outcome label."""

    projectors: tuple[np.ndarray, ...]

    def __init__(self, projectors: Sequence[np.ndarray], *, check: bool = True) -> None:
        ps = []
        for p in projectors:
            p = np.array(p, dtype=complex)
            p.setflags(write=False)
            ps.append(p)
        object.__setattr__(self, "projectors", tuple(ps))
        if check:
            self.validate()

    def validate(self) -> None:
        dim = self.dim
        for k, p in enumerate(self.projectors):
            if p.shape != (dim, dim):
                raise StateError(f"projector {k} has shape {p.shape}")
            if np.max(np.abs(p - dagger(p))) > PROJ_TOL:
                raise StateError(f"projector {k} is not Hermitian")
            if np.max(np.abs(p @ p - p)) > PROJ_TOL:
                raise StateError(f"projector {k} is not idempotent")
        for j in range(len(self.projectors)):
            for k in range(j + 1, len(self.projectors)):
                if np.max(np.abs(self.projectors[j] @ self.projectors[k])) > PROJ_TOL:
                    raise StateError(f"projectors {j} and {k} are not orthogonal")
        if np.max(np.abs(sum(self.projectors) - np.eye(dim))) > PROJ_TOL:
            raise StateError("projectors do not sum to identity")

    @property
    def dim(self) -> int:
        return self.projectors[0].shape[0]

    @property
    def outcomes(self) -> int:
        return len(self.projectors)

    def observable(self) -> np.ndarray:
        """Binary +/-1 observable P_0 - P_1 (only meaningful for two outcomes)."""
        if self.outcomes != 2:
            raise ValueError("observable() needs a two-outcome measurement")
        return self.projectors[0] - self.projectors[1]

    def conjugated(self, u: np.ndarray) -> ProjectiveMeasurement:
        """Measurement U P U^dagger for every projector."""
        return ProjectiveMeasurement([u @ p @ dagger(u) for p in self.projectors], check=False)

    @classmethod
    def from_observable(cls, obs: np.ndarray) -> ProjectiveMeasurement:
        """Two-outcome measurement from a Hermitian unitary (outcome 0 <-> +1)."""
        obs = np.asarray(obs, dtype=complex)
        eye = np.eye(obs.shape[0])
        return cls([(eye + obs) / 2, (eye - obs) / 2])

    @classmethod
    def from_basis(cls, vectors: Sequence[np.ndarray]) -> ProjectiveMeasurement:
        """Rank-1 projectors onto an orthonormal basis, labeled in order."""
        return cls([np.outer(v, np.conj(v)) for v in vectors])


ObservableSet = list[ProjectiveMeasurement]


@dataclass(frozen=True)
class CorrelationTable:
    """P(a,b|x,y) stored as ``probs[x, y, a, b]``.

    Sampled tables also keep the raw ``counts`` and the number of draws per
    setting pair, ``shots``.
    """

    scenario: BellScenario
    probs: np.ndarray
    source: str = "exact"
    shots: int | None = None
    counts: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        p = np.array(self.probs, dtype=float)
        s = self.scenario
        expected = (s.settings_A, s.settings_B, s.outcomes, s.outcomes)
        if p.shape != expected:
            raise ValueError(f"probs shape {p.shape} does not match scenario {expected}")
        if not np.all(np.isfinite(p)) or p.min() < 0:
            raise ValueError("probabilities must be finite and nonnegative")
        if np.max(np.abs(p.sum(axis=(2, 3)) - 1.0)) > SUM_TOL:
            raise ValueError("probabilities do not sum to 1 for every setting pair")
        if self.source not in ("exact", "sampled"):
            raise ValueError(f"unknown source {self.source!r}")
        if self.source == "sampled" and self.shots is None:
            raise ValueError("sampled tables need a shot count")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        if self.counts is not None:
            c = np.array(self.counts, dtype=np.int64)
            c.setflags(write=False)
            object.__setattr__(self, "counts", c)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CorrelationTable):
            return NotImplemented
        return (
            self.scenario == other.scenario
            and self.source == other.source
            and self.shots == other.shots
            and np.array_equal(self.probs, other.probs)
        )

    def __hash__(self) -> int:
        return hash((self.scenario, self.source, self.shots, self.probs.tobytes()))

    @property
    def source_label(self) -> str:
        return "exact" if self.source == "exact" else f"sampled({self.shots})"

    def to_dict(self) -> dict:
        out = {
            "scenario": self.scenario.to_dict(),
            "source": self.source,
            "probs": self.probs.tolist(),
        }
        if self.shots is not None:
            out["shots"] = self.shots
        if self.counts is not None:
            out["counts"] = self.counts.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> CorrelationTable:
        counts = data.get("counts")
        return cls(
            scenario=BellScenario(**data["scenario"]),
            probs=np.array(data["probs"], dtype=float),
            source=data["source"],
            shots=data.get("shots"),
            counts=None if counts is None else np.array(counts, dtype=np.int64),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> CorrelationTable:
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        """Flat ``x,y,a,b,p`` rows; floats use ``repr`` so the round trip is exact."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "a", "b", "p"])
        for idx in np.ndindex(self.probs.shape):
            w.writerow([*idx, repr(float(self.probs[idx]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, *, source: str = "exact", shots: int | None = None) -> CorrelationTable:
        rows = list(csv.DictReader(io.StringIO(text)))
        xs, ys, as_ = (max(int(r[k]) for r in rows) + 1 for k in ("x", "y", "a"))
        probs = np.zeros((xs, ys, as_, as_))
        for r in rows:
            probs[int(r["x"]), int(r["y"]), int(r["a"]), int(r["b"])] = float(r["p"])
        return cls(BellScenario(xs, ys, as_), probs, source=source, shots=shots)


def born_table(rho: np.ndarray, meas_A: ObservableSet, meas_B: ObservableSet) -> CorrelationTable:
    """Exact table P(a,b|x,y) = tr[rho (P_a^x (x) P_b^y)]."""
    rho = np.asarray(rho, dtype=complex)
    if not meas_A or not meas_B:
        raise ValueError("both parties need at least one measurement")
    d_a, d_b = meas_A[0].dim, meas_B[0].dim
    n_out = meas_A[0].outcomes
    if any(m.dim != d_a for m in meas_A) or any(m.dim != d_b for m in meas_B):
        raise StateError("measurements of one party act on different dimensions")
    if any(m.outcomes != n_out for m in [*meas_A, *meas_B]):
        raise StateError("all measurements must share the same outcome count")
    if rho.shape != (d_a * d_b, d_a * d_b):
        raise StateError(f"state of shape {rho.shape} does not match local dims {(d_a, d_b)}")

    pa = np.array([m.projectors for m in meas_A])  # (x, a, i, k)
    pb = np.array([m.projectors for m in meas_B])  # (y, b, j, l)
    r = rho.reshape(d_a, d_b, d_a, d_b)  # (k, l, i, j): rho[(k,l),(i,j)]
    # tr[rho (Pa (x) Pb)] = sum rho[(k,l),(i,j)] Pa[i,k] Pb[j,l]
    probs = np.einsum("klij,xaik,ybjl->xyab", r, pa, pb, optimize=True).real
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum(axis=(2, 3), keepdims=True)
    scenario = BellScenario(len(meas_A), len(meas_B), n_out)
    return CorrelationTable(scenario, probs)


@dataclass(frozen=True)
class Statistics:
    correlators: np.ndarray  # E[x, y]
    marginals_A: np.ndarray  # <A_x>, averaged over y
    marginals_B: np.ndarray  # <B_y>, averaged over x


def statistics(table: CorrelationTable) -> Statistics:
    """Correlators and marginals of a binary-outcome table.

    Marginals are averaged over the other party's settings; for exact
    quantum tables this average is redundant, for sampled tables it pools
    the available data.
    """
    if table.scenario.outcomes != 2:
        raise ValueError("statistics needs a two-outcome table")
    sign = np.array([1.0, -1.0])
    p = table.probs
    corr = np.einsum("xyab,a,b->xy", p, sign, sign)
    ma = np.einsum("xyab,a->x", p, sign) / p.shape[1]
    mb = np.einsum("xyab,b->y", p, sign) / p.shape[0]
    return Statistics(corr, ma, mb)


def relabel_outcomes(table: CorrelationTable, party: str, setting: int, perm: Sequence[int]) -> CorrelationTable:
    """Table with outcome ``a`` of one setting renamed to ``perm[a]``."""
    p = np.array(table.probs)
    perm = list(perm)
    if party == "A":
        block = p[setting].copy()
        p[setting][:, perm, :] = block
    elif party == "B":
        block = p[:, setting].copy()
        p[:, setting][:, :, perm] = block
    else:
        raise ValueError(f"party must be 'A' or 'B', got {party!r}")
    return CorrelationTable(table.scenario, p, table.source, table.shots)


@dataclass(frozen=True)
class NoSignallingReport:
    max_deviation_A: float
    max_deviation_B: float
    tol: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "max_deviation_A": self.max_deviation_A,
            "max_deviation_B": self.max_deviation_B,
            "tol": self.tol,
            "pass": self.passed,
        }


def default_ns_tolerance(table: CorrelationTable, n_sigma: float = 5.0) -> float:
    """1e-12 for exact tables, ``n_sigma / sqrt(N)`` for sampled ones."""
    if table.source == "exact":
        return 1e-12
    return n_sigma / np.sqrt(table.shots)


def check_no_signalling(table: CorrelationTable, tol: float | None = None) -> NoSignallingReport:
    """Largest dependence of one party's marginals on the other party's setting."""
    if tol is None:
        tol = default_ns_tolerance(table)
    alice = table.probs.sum(axis=3)  # (x, y, a)
    bob = table.probs.sum(axis=2)  # (x, y, b)
    dev_a = float(np.max(alice.max(axis=1) - alice.min(axis=1)))
    dev_b = float(np.max(bob.max(axis=0) - bob.min(axis=0)))
    tol = float(tol)
    return NoSignallingReport(dev_a, dev_b, tol, bool(dev_a <= tol and dev_b <= tol))
