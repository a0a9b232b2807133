import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qselftest.bell import CHSH_SCENARIO, CorrelationTable, born_table
from qselftest.noise import mix_white, sample_counts
from qselftest.qcore import kron, projector, target_ket
from qselftest.tiltedchsh import (
    alpha_for_theta,
    bell_operator,
    beta_value,
    classical_bound,
    deterministic_maximum,
    extract_theta,
    gap_curve,
    optimal_settings,
    quantum_bound,
    reoptimized_extraction,
    seesaw_maximize,
    swap_fidelity,
    theta_for_alpha,
    theta_standard_error,
)

from conftest import random_density, random_unitary

thetas = st.floats(min_value=1e-3, max_value=math.pi / 4)


def ideal_table(theta):
    s = optimal_settings(theta)
    return born_table(projector(target_ket(theta)), s.alice, s.bob), s


class TestBounds:
    @pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0, 1.5, 2.0])
    def test_deterministic_matches_closed_form(self, alpha):
        assert deterministic_maximum(alpha) == pytest.approx(classical_bound(alpha))

    def test_known_values(self):
        assert quantum_bound(0.0) == pytest.approx(2 * math.sqrt(2))
        assert quantum_bound(2.0) == pytest.approx(4.0)
        assert alpha_for_theta(math.pi / 4) == 0.0
        assert alpha_for_theta(math.pi / 8) == pytest.approx(2 / math.sqrt(3))

    @given(thetas)
    def test_alpha_theta_inverse(self, theta):
        assert theta_for_alpha(alpha_for_theta(theta)) == pytest.approx(theta, abs=1e-9)

    @pytest.mark.parametrize("theta", [math.pi / 4, math.pi / 6, math.pi / 8, math.pi / 12])
    def test_operator_norm_is_quantum_bound(self, theta):
        s = optimal_settings(theta)
        op = bell_operator([m.observable() for m in s.alice], [m.observable() for m in s.bob], s.alpha)
        w, v = np.linalg.eigh(op)
        assert w[-1] == pytest.approx(quantum_bound(s.alpha), abs=1e-12)
        assert abs(np.vdot(v[:, -1], target_ket(theta))) ** 2 == pytest.approx(1.0, abs=1e-12)


class TestBetaValue:
    def test_pi_8_value(self):
        t, s = ideal_table(math.pi / 8)
        assert beta_value(t, s.alpha) == pytest.approx(math.sqrt(32 / 3), abs=1e-12)

    def test_uniform_table_is_zero(self):
        t = CorrelationTable(CHSH_SCENARIO, np.full((2, 2, 2, 2), 0.25))
        assert beta_value(t, 1.3) == 0.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0, 2), st.floats(0, 2))
    def test_affine_in_alpha(self, seed, a1, a2):
        rng = np.random.default_rng(seed)
        rho = random_density(4, rng)
        s = optimal_settings(math.pi / 7)
        t = born_table(rho, s.alice, s.bob)
        lam = 0.3
        mixed = beta_value(t, lam * a1 + (1 - lam) * a2)
        assert mixed == pytest.approx(lam * beta_value(t, a1) + (1 - lam) * beta_value(t, a2), abs=1e-12)

    def test_matches_operator_expectation(self, rng):
        rho = random_density(4, rng)
        s = optimal_settings(0.5)
        op = bell_operator([m.observable() for m in s.alice], [m.observable() for m in s.bob], 0.7)
        t = born_table(rho, s.alice, s.bob)
        assert beta_value(t, 0.7) == pytest.approx(np.trace(rho @ op).real, abs=1e-12)


class TestExtraction:
    @settings(max_examples=50, deadline=None)
    @given(thetas)
    def test_ideal_recovery(self, theta):
        t, _ = ideal_table(theta)
        ext = extract_theta(t)
        assert ext.theta == pytest.approx(theta, abs=1e-9)
        assert abs(ext.gap) < 1e-9

    @pytest.mark.parametrize("v", [1.0, 0.98, 0.9])
    @pytest.mark.parametrize("theta", [math.pi / 5, math.pi / 10])
    def test_matches_grid_minimum(self, theta, v):
        s = optimal_settings(theta)
        t = born_table(mix_white(projector(target_ket(theta)), v), s.alice, s.bob)
        grid = np.linspace(0, 2, 200_001)
        g = gap_curve(t, grid)
        ext = extract_theta(t)
        assert ext.alpha0 == pytest.approx(grid[np.argmin(g)], abs=2e-5)
        assert ext.gap == pytest.approx(g.min(), abs=1e-9)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), thetas)
    def test_local_unitary_invariance(self, seed, theta):
        rng = np.random.default_rng(seed)
        ua, ub = random_unitary(2, rng), random_unitary(2, rng)
        t, s = ideal_table(theta)
        rho = kron(ua, ub) @ projector(target_ket(theta)) @ kron(ua, ub).conj().T
        rotated = born_table(rho, s.conjugated(ua, ub).alice, s.conjugated(ua, ub).bob)
        assert np.max(np.abs(rotated.probs - t.probs)) < 1e-12
        assert extract_theta(rotated).theta == pytest.approx(extract_theta(t).theta, abs=1e-10)

    def test_product_state_degenerate(self):
        t, s = ideal_table(0.0)
        assert s.degenerate
        ext = extract_theta(t)
        assert ext.degenerate and ext.alpha0 == 2.0 and ext.theta == 0.0

    def test_signed_branch(self):
        # swap the roles of |00> and |11>
        rho = projector(target_ket(math.pi / 2 - math.pi / 7))
        s = optimal_settings(math.pi / 7)
        t = born_table(rho, s.alice, s.bob)
        assert extract_theta(t).alpha0 == 0.0
        assert extract_theta(t, signed=True).theta == pytest.approx(math.pi / 2 - math.pi / 7, abs=1e-12)

    def test_standard_error_matches_spread(self):
        theta = math.pi / 8
        t, _ = ideal_table(theta)
        n = 10**5
        est = [extract_theta(sample_counts(t, n, seed)).theta for seed in range(200)]
        se = theta_standard_error(sample_counts(t, n, 0))
        assert np.std(est) == pytest.approx(se, rel=0.2)
        assert abs(np.mean(est) - theta) < 4 * se / math.sqrt(200)


class TestSeesaw:
    @pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0, 1.5, 2.0])
    def test_reaches_quantum_bound(self, alpha):
        theta = theta_for_alpha(alpha)
        res = seesaw_maximize(projector(target_ket(theta)), alpha, restarts=20, seed=0)
        assert res.value == pytest.approx(quantum_bound(alpha), abs=1e-8)
        assert all(b >= a - 1e-12 for a, b in zip(res.history, res.history[1:]))

    def test_never_exceeds_bound(self, rng):
        for _ in range(5):
            rho = random_density(4, rng)
            alpha = float(rng.uniform(0, 2))
            assert seesaw_maximize(rho, alpha, restarts=5, seed=1).value <= quantum_bound(alpha) + 1e-9

    def test_maximally_mixed(self):
        res = seesaw_maximize(np.eye(4) / 4, 1.0, restarts=5)
        assert res.value == pytest.approx(3.0, abs=1e-9)

    def test_seed_determinism(self, rng):
        rho = random_density(4, rng)
        a = seesaw_maximize(rho, 0.8, restarts=4, seed=9)
        b = seesaw_maximize(rho, 0.8, restarts=4, seed=9)
        assert a.restart_values == b.restart_values

    def test_reoptimized_extraction(self):
        theta = math.pi / 9
        rng = np.random.default_rng(4)
        u = kron(random_unitary(2, rng), random_unitary(2, rng))
        rho = u @ projector(target_ket(theta)) @ u.conj().T
        res = reoptimized_extraction(rho, restarts=5, seed=0)
        assert res.extraction.theta == pytest.approx(theta, abs=1e-6)

    @pytest.mark.parametrize("theta,p", [(math.pi / 4, 0.9994), (math.pi / 12, 0.9656)])
    def test_reoptimized_extraction_noisy(self, theta, p):
        # deterministic observables would reach b(2) on any state
        from qselftest.noise import visibility_for_purity

        rho = mix_white(projector(target_ket(theta)), visibility_for_purity(p, 4))
        known = optimal_settings(theta)
        expected = extract_theta(born_table(rho, known.alice, known.bob)).theta
        res = reoptimized_extraction(rho, restarts=5, seed=0)
        assert res.min_gap > 0
        assert res.extraction.theta == pytest.approx(expected, abs=1e-4)

    def test_traceless_restricted_to_qubits(self):
        with pytest.raises(ValueError):
            seesaw_maximize(np.eye(9) / 9, 1.0, restarts=1, traceless=True)

    def test_traceless_excludes_deterministic(self):
        # the maximally mixed state gets 2 + alpha only from +/-I observables
        res = seesaw_maximize(np.eye(4) / 4, 2.0, restarts=3, traceless=True)
        assert abs(res.value) < 1e-9


class TestSwapFidelity:
    @pytest.mark.parametrize("theta", [math.pi / 4, math.pi / 6, math.pi / 8, 0.1])
    def test_ideal_is_one(self, theta):
        _, s = ideal_table(theta)
        assert swap_fidelity(projector(target_ket(theta)), s, theta) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), thetas)
    def test_equals_overlap_for_pauli_settings(self, seed, theta):
        # with Z/X on both sides the gadget is an exact swap
        rho = random_density(4, np.random.default_rng(seed))
        _, s = ideal_table(theta)
        f = swap_fidelity(rho, s, theta)
        psi = target_ket(theta)
        assert f == pytest.approx(np.real(psi.conj() @ rho @ psi), abs=1e-12)

    def test_linear_in_state(self, rng):
        _, s = ideal_table(0.4)
        r1, r2 = random_density(4, rng), random_density(4, rng)
        mix = swap_fidelity(0.3 * r1 + 0.7 * r2, s, 0.4)
        assert mix == pytest.approx(0.3 * swap_fidelity(r1, s, 0.4) + 0.7 * swap_fidelity(r2, s, 0.4), abs=1e-12)

    def test_white_noise_value(self):
        theta, v = math.pi / 8, 0.9
        _, s = ideal_table(theta)
        f = swap_fidelity(mix_white(projector(target_ket(theta)), v), s, theta)
        assert f == pytest.approx(v + (1 - v) / 4, abs=1e-12)

    def test_degenerate_tilt_rejected(self):
        _, s = ideal_table(0.0)
        with pytest.raises(ValueError):
            swap_fidelity(projector(target_ket(0.0)), s, 0.0)

    def test_rejects_non_chsh_table(self):
        from qselftest.bell import BellScenario

        t = CorrelationTable(BellScenario(3, 4, 2), np.full((3, 4, 2, 2), 0.25))
        with pytest.raises(ValueError):
            extract_theta(t)
