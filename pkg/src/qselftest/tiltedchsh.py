"""Two-qubit self-testing with the tilted CHSH family.

The Bell functional is

    beta(alpha) = alpha*A0 + A0*(B0 + B1) + A1*(B0 - B1),   0 <= alpha <= 2,

with quantum maximum ``sqrt(8 + 2 alpha^2)`` and deterministic maximum
``2 + alpha``. Reaching the quantum maximum at ``alpha0`` identifies the
state cos(theta)|00> + sin(theta)|11> with
``tan(2 theta) = sqrt((4 - alpha0^2) / (2 alpha0^2))``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .bell import CHSH_SCENARIO, CorrelationTable, ObservableSet, ProjectiveMeasurement, statistics
from .qcore import H, X, Z, dagger, hermitian_sign, kron, target_ket


def quantum_bound(alpha: float) -> float:
    return math.sqrt(8.0 + 2.0 * alpha * alpha)


def classical_bound(alpha: float) -> float:
    return 2.0 + abs(alpha)


def deterministic_maximum(alpha: float) -> float:
    """Best value over all 16 deterministic +/-1 assignments (brute force)."""
    return max(
        alpha * a0 + a0 * (b0 + b1) + a1 * (b0 - b1)
        for a0, a1, b0, b1 in itertools.product((1, -1), repeat=4)
    )


def alpha_for_theta(theta: float) -> float:
    """Tilt at which cos(theta)|00> + sin(theta)|11> reaches the quantum bound."""
    t2 = math.tan(2 * theta) if theta < math.pi / 4 else math.inf
    if math.isinf(t2):
        return 0.0
    return 2.0 / math.sqrt(1.0 + 2.0 * t2 * t2)


def theta_for_alpha(alpha: float) -> float:
    """Inverse of :func:`alpha_for_theta`; theta in [0, pi/4] for alpha in [0, 2]."""
    a = min(abs(alpha), 2.0)
    return 0.5 * math.atan2(math.sqrt(4.0 - a * a), math.sqrt(2.0) * a)


def beta_value(table: CorrelationTable, alpha: float) -> float:
    """Expected value of beta(alpha) on a [{2,2},{2,2}] table."""
    _require_chsh(table)
    s = statistics(table)
    e = s.correlators
    return float(alpha * s.marginals_A[0] + e[0, 0] + e[0, 1] + e[1, 0] - e[1, 1])


def _require_chsh(table: CorrelationTable) -> None:
    if table.scenario != CHSH_SCENARIO:
        raise ValueError(f"expected a [{{2,2}},{{2,2}}] table, got {table.scenario}")


@dataclass(frozen=True)
class ExtractionResult:
    alpha0: float
    gap: float
    theta: float
    mean_A0: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "alpha0": self.alpha0,
            "gap": self.gap,
            "theta": self.theta,
            "mean_A0": self.mean_A0,
            "degenerate": self.degenerate,
        }


def extract_theta(table: CorrelationTable, *, signed: bool = False) -> ExtractionResult:
    """Find the tilt minimizing ``b(alpha) - <beta(alpha)>`` and map it to theta.

    ``<beta>`` is affine in alpha with slope ``m = <A0>`` and the bound is
    strictly convex, so the minimizer is the stationary point
    ``2m / sqrt(2 - m^2)`` clamped to the allowed range.

    With ``signed=True`` the tilt may be negative (the functional with A0's
    outcomes swapped) and theta is returned in [0, pi/2]; block extraction
    needs this to tell which of the two levels carries more weight.
    """
    _require_chsh(table)
    m = float(statistics(table).marginals_A[0])
    if abs(m) > 1.0 + 1e-9:
        raise ValueError(f"<A0> = {m} outside [-1, 1]")
    m = min(max(m, -1.0), 1.0)
    alpha0 = 2.0 * m / math.sqrt(2.0 - m * m)
    lo = -2.0 if signed else 0.0
    alpha0 = min(max(alpha0, lo), 2.0)
    gap = quantum_bound(alpha0) - beta_value(table, alpha0)
    theta = theta_for_alpha(alpha0)
    if alpha0 < 0:
        theta = math.pi / 2 - theta
    degenerate = abs(abs(alpha0) - 2.0) < 1e-12
    return ExtractionResult(alpha0, gap, theta, m, degenerate)


def gap_curve(table: CorrelationTable, alphas: np.ndarray) -> np.ndarray:
    """``b(alpha) - <beta(alpha)>`` on a grid (used as an extraction oracle)."""
    s = statistics(table)
    e = s.correlators
    corr = e[0, 0] + e[0, 1] + e[1, 0] - e[1, 1]
    alphas = np.asarray(alphas, dtype=float)
    return np.sqrt(8 + 2 * alphas**2) - (alphas * s.marginals_A[0] + corr)


@dataclass(frozen=True)
class QubitSettings:
    """Measurement settings for one tilted-CHSH experiment."""

    alice: ObservableSet
    bob: ObservableSet
    alpha: float
    mu: float
    degenerate: bool = False

    def conjugated(self, u_a: np.ndarray, u_b: np.ndarray) -> QubitSettings:
        return QubitSettings(
            [m.conjugated(u_a) for m in self.alice],
            [m.conjugated(u_b) for m in self.bob],
            self.alpha,
            self.mu,
            self.degenerate,
        )


def tilted_observables(mu: float) -> tuple[np.ndarray, np.ndarray]:
    """cos(mu) Z +/- sin(mu) X."""
    return math.cos(mu) * Z + math.sin(mu) * X, math.cos(mu) * Z - math.sin(mu) * X


def tilt_angle(theta: float) -> float:
    """Bob's tilt mu with tan(mu) = sin(2 theta)."""
    return math.atan(math.sin(2 * theta))


def optimal_settings(theta: float) -> QubitSettings:
    """Settings reaching ``b(alpha)`` on cos(theta)|00> + sin(theta)|11>.

    theta = 0 has no defined tilt; the computational basis is returned for
    every setting and the result is flagged degenerate.
    """
    if not (0.0 <= theta <= math.pi / 4 + 1e-12):
        raise ValueError(f"theta={theta} outside [0, pi/4]")
    if theta == 0.0:
        zm = ProjectiveMeasurement.from_observable(Z)
        return QubitSettings([zm, zm], [zm, zm], 2.0, 0.0, degenerate=True)
    mu = tilt_angle(theta)
    b0, b1 = tilted_observables(mu)
    alice = [ProjectiveMeasurement.from_observable(Z), ProjectiveMeasurement.from_observable(X)]
    bob = [ProjectiveMeasurement.from_observable(b0), ProjectiveMeasurement.from_observable(b1)]
    return QubitSettings(alice, bob, alpha_for_theta(theta), mu)


def bell_operator(a_obs: list[np.ndarray], b_obs: list[np.ndarray], alpha: float) -> np.ndarray:
    a0, a1 = a_obs
    b0, b1 = b_obs
    eye = np.eye(b0.shape[0])
    return alpha * kron(a0, eye) + kron(a0, b0 + b1) + kron(a1, b0 - b1)


@dataclass
class SeesawResult:
    settings: QubitSettings
    value: float
    history: list[float] = field(default_factory=list)
    restart_values: list[float] = field(default_factory=list)


def _traceless_sign(m: np.ndarray) -> np.ndarray:
    """Best traceless +/-1 qubit observable against ``m``: sign of its traceless part.

    A vanishing traceless part leaves every traceless observable optimal; Z
    is returned so the result never degenerates to the identity.
    """
    t = m - np.trace(m) / m.shape[0] * np.eye(m.shape[0])
    if np.max(np.abs(t)) < 1e-14:
        return Z.astype(complex)
    return hermitian_sign(t)


def _random_observable(rng: np.random.Generator, dim: int, sign=hermitian_sign) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return sign(g + dagger(g))


def _seesaw_once(rho, dim, alpha, a_obs, b_obs, tol, max_iter, sign=hermitian_sign):
    r = rho.reshape(dim, dim, dim, dim)  # rho[(i,j),(k,l)] -> r[i,j,k,l]
    eye = np.eye(dim)

    def alice_op(m):
        # <A (x) M> = tr[A C], C = tr_B[rho (I (x) M)]
        return np.einsum("ijkl,lj->ik", r, m)

    def bob_op(m):
        return np.einsum("ijkl,ki->jl", r, m)

    def value_of(a_obs, b_obs):
        a0, a1 = a_obs
        b0, b1 = b_obs
        v = np.trace(a0 @ alice_op(alpha * eye + b0 + b1)) + np.trace(a1 @ alice_op(b0 - b1))
        return float(np.real(v))

    value = value_of(a_obs, b_obs)
    history = [value]
    for _ in range(max_iter):
        b0, b1 = b_obs
        a_obs = [sign(alice_op(alpha * eye + b0 + b1)), sign(alice_op(b0 - b1))]
        a0, a1 = a_obs
        b_obs = [sign(bob_op(a0 + a1)), sign(bob_op(a0 - a1))]
        new = value_of(a_obs, b_obs)
        history.append(new)
        done = abs(new - value) < tol
        value = new
        if done:
            break
    return a_obs, b_obs, value, history


def seesaw_maximize(
    rho: np.ndarray,
    alpha: float,
    restarts: int = 20,
    seed: int = 0,
    *,
    tol: float = 1e-12,
    max_iter: int = 10_000,
    traceless: bool = False,
) -> SeesawResult:
    """Maximize <beta(alpha)> over dichotomic observables by alternating updates.

    With Bob fixed, each Alice observable is replaced by the sign of the
    operator it is paired with in the expectation value, which is the
    optimal +/-1 observable; then Bob is updated the same way. The value
    never decreases. Each restart starts from random observables drawn from
    its own derived seed.

    ``traceless=True`` (qubits only) excludes the deterministic observables
    +/-I, i.e. every setting is a genuine basis measurement.
    """
    rho = np.asarray(rho, dtype=complex)
    dim = int(round(math.sqrt(rho.shape[0])))
    if traceless and dim != 2:
        raise ValueError("traceless see-saw is only defined for qubits")
    sign = _traceless_sign if traceless else hermitian_sign
    best = None
    restart_values = []
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.Generator(np.random.Philox(child))
        a_obs = [_random_observable(rng, dim, sign) for _ in range(2)]
        b_obs = [_random_observable(rng, dim, sign) for _ in range(2)]
        a_obs, b_obs, value, history = _seesaw_once(rho, dim, alpha, a_obs, b_obs, tol, max_iter, sign)
        restart_values.append(value)
        if best is None or value > best[2]:
            best = (a_obs, b_obs, value, history)
    a_obs, b_obs, value, history = best
    settings = QubitSettings(
        [ProjectiveMeasurement.from_observable(o) for o in a_obs],
        [ProjectiveMeasurement.from_observable(o) for o in b_obs],
        alpha,
        float("nan"),
    )
    return SeesawResult(settings, value, history, restart_values)


# -- SWAP isometry ---------------------------------------------------------

def _controlled(op: np.ndarray) -> np.ndarray:
    """|0><0| (x) I + |1><1| (x) op with the control first."""
    dim = op.shape[0]
    out = np.zeros((2 * dim, 2 * dim), dtype=complex)
    out[:dim, :dim] = np.eye(dim)
    out[dim:, dim:] = op
    return out


def swap_gadget(z_op: np.ndarray, x_op: np.ndarray) -> np.ndarray:
    """Isometry |psi> -> sum of ancilla (x) system terms, ancilla first.

    Ancilla starts in |0>; then H, controlled-Z, H, controlled-X. Returned
    as a (2 dim) x dim matrix.
    """
    dim = z_op.shape[0]
    h_anc = kron(H, np.eye(dim))
    circuit = _controlled(x_op) @ h_anc @ _controlled(z_op) @ h_anc
    embed = kron(np.array([[1.0], [0.0]]), np.eye(dim))
    return circuit @ embed


def swap_fidelity(
    rho: np.ndarray,
    settings: QubitSettings,
    theta: float,
    mu: float | None = None,
) -> float:
    """Fidelity of the ancilla pair extracted by the SWAP gadget with the target.

    Alice uses Z = A0 and X = A1; Bob uses (B0 + B1)/(2 cos mu) and
    (B0 - B1)/(2 sin mu), each replaced by its unitary polar factor.
    """
    if mu is None:
        mu = settings.mu if not math.isnan(settings.mu) else tilt_angle(theta)
    if abs(math.sin(mu)) < 1e-12 or abs(math.cos(mu)) < 1e-12:
        raise ValueError(f"degenerate tilt mu={mu}: Bob's operators are undefined")
    rho = np.asarray(rho, dtype=complex)
    a0, a1 = (m.observable() for m in settings.alice)
    b0, b1 = (m.observable() for m in settings.bob)
    z_a, x_a = hermitian_sign(a0), hermitian_sign(a1)
    z_b = hermitian_sign((b0 + b1) / (2 * math.cos(mu)))
    x_b = hermitian_sign((b0 - b1) / (2 * math.sin(mu)))
    d_a, d_b = a0.shape[0], b0.shape[0]

    v_a = swap_gadget(z_a, x_a)  # (2 d_a) x d_a, ancilla A first
    v_b = swap_gadget(z_b, x_b)
    v = kron(v_a, v_b)  # order: ancA, sysA, ancB, sysB
    out = v @ rho @ dagger(v)
    t = out.reshape(2, d_a, 2, d_b, 2, d_a, 2, d_b)
    anc = np.einsum("iajbkalb->ijkl", t).reshape(4, 4)
    psi = target_ket(theta)
    return float(np.real(psi.conj() @ anc @ psi))


def theta_standard_error(table: CorrelationTable) -> float:
    """Delta-method standard error of the extracted theta on a sampled table.

    theta = arccos(<A0>)/2 on the extraction branch, and <A0> pools both of
    Bob's settings, i.e. 2N draws.
    """
    if table.source != "sampled":
        return 0.0
    m = float(statistics(table).marginals_A[0])
    var_m = max(1.0 - m * m, 0.0) / (2 * table.shots)
    if m * m >= 1.0:
        return 0.0
    return math.sqrt(var_m) / (2.0 * math.sqrt(1.0 - m * m))


@dataclass
class ReoptimizedExtraction:
    settings: QubitSettings
    table: CorrelationTable
    extraction: ExtractionResult
    alpha_star: float
    min_gap: float


def reoptimized_extraction(
    rho: np.ndarray,
    restarts: int = 5,
    seed: int = 0,
    xatol: float = 1e-9,
) -> ReoptimizedExtraction:
    """Self-test without knowing the settings.

    Scans alpha for the smallest gap between ``b(alpha)`` and the best
    value the see-saw reaches on ``rho``, takes the see-saw settings at that
    alpha, and runs the usual extraction on the resulting table.

    The search is over traceless observables. With A0 = B0 = B1 = I every
    state reaches 2 + alpha, which equals b(alpha) at alpha = 2, so allowing
    +/-I makes alpha = 2 a spurious zero-gap minimum for any mixed state.
    """
    from scipy.optimize import minimize_scalar

    from .bell import born_table

    def gap(alpha: float) -> float:
        return quantum_bound(alpha) - seesaw_maximize(rho, alpha, restarts, seed, traceless=True).value

    res = minimize_scalar(gap, bounds=(0.0, 2.0), method="bounded", options={"xatol": xatol})
    alpha_star = float(res.x)
    found = seesaw_maximize(rho, alpha_star, restarts, seed, traceless=True)
    table = born_table(rho, found.settings.alice, found.settings.bob)
    ext = extract_theta(table)
    settings = QubitSettings(found.settings.alice, found.settings.bob, alpha_star, tilt_angle(ext.theta))
    return ReoptimizedExtraction(settings, table, ext, alpha_star, float(res.fun))
