import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qselftest.noise import mix_white
from qselftest.qcore import SchmidtState, kron, projector, purity, target_ket, trace_distance
from qselftest.tomo import (
    density_from_json,
    density_to_json,
    fit_density,
    linear_inversion,
    project_to_density,
    reconstruct_density,
    sample_tomography,
    schmidt_readout,
    tomo_projectors,
    tomography_probabilities,
)

from conftest import random_density

EQ6 = SchmidtState.normalized([0.8, 0.4, 0.4, 0.2])


class TestBasis:
    @pytest.mark.parametrize("d,per_party,joint", [(2, 4, 16), (3, 9, 81), (4, 16, 256)])
    def test_counts(self, d, per_party, joint):
        b = tomo_projectors(d)
        assert len(b.projectors) == per_party
        assert b.joint_count == joint

    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_informationally_complete(self, d):
        b = tomo_projectors(d)
        assert np.linalg.matrix_rank(b.design) == d * d
        assert math.isfinite(b.condition_number) and b.condition_number < 1e3
        for p in b.projectors:
            assert np.trace(p).real == pytest.approx(1.0)
            assert np.allclose(p @ p, p)

    def test_unsupported(self):
        with pytest.raises(ValueError):
            tomo_projectors(5)


class TestReconstruction:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3, 4]))
    def test_exact_recovery(self, seed, d):
        rho = random_density(d * d, np.random.default_rng(seed))
        out = reconstruct_density(tomography_probabilities(rho, tomo_projectors(d)), d)
        assert np.max(np.abs(out - rho)) < 1e-10

    def test_pure_state_purity(self):
        rho = projector(target_ket(math.pi / 8))
        out = reconstruct_density(tomography_probabilities(rho, tomo_projectors(2)), 2)
        assert purity(out) == pytest.approx(1.0, abs=1e-9)

    def test_sampled_trace_distance(self):
        rho = mix_white(projector(target_ket(math.pi / 8)), 0.98)
        basis = tomo_projectors(2)
        exact = tomography_probabilities(rho, basis)
        dists = [trace_distance(reconstruct_density(sample_tomography(exact, 10**6, s), 2), rho) for s in range(10)]
        assert 1e-4 < np.mean(dists) < 5e-3

    def test_projection_never_increases_distance(self):
        rho = projector(SchmidtState.normalized([1, 1, 0.3]).ket)
        basis = tomo_projectors(3)
        exact = tomography_probabilities(rho, basis)
        for s in range(20):
            fit = fit_density(sample_tomography(exact, 10**4, s), 3)
            assert trace_distance(fit.rho, rho) <= trace_distance(fit.linear, rho) + 1e-12
            assert np.min(np.linalg.eigvalsh(fit.rho)) > -1e-12
            assert np.trace(fit.rho).real == pytest.approx(1.0)

    def test_projection_of_valid_state_is_identity(self, rng):
        rho = random_density(4, rng)
        np.testing.assert_allclose(project_to_density(rho), rho, atol=1e-13)

    def test_linear_inversion_reproduces_data(self, rng):
        basis = tomo_projectors(2)
        probs = tomography_probabilities(random_density(4, rng), basis)
        lin = linear_inversion(probs, basis)
        np.testing.assert_allclose(tomography_probabilities(lin, basis), probs, atol=1e-12)

    def test_bad_shape(self):
        with pytest.raises(ValueError):
            fit_density(np.zeros((4, 4)), 3)


class TestReadout:
    @pytest.mark.parametrize("theta", [0.1, math.pi / 8, math.pi / 4])
    def test_qubit_theta(self, theta):
        r = schmidt_readout(projector(target_ket(theta)), 2)
        assert r.theta == pytest.approx(theta, abs=1e-12)
        assert not r.theta_out_of_range

    def test_qudit_coeffs(self):
        r = schmidt_readout(EQ6.rho, 4)
        np.testing.assert_allclose(r.coeffs, EQ6.coeffs, atol=1e-12)

    def test_white_noise_diagonal(self):
        v = 0.96
        r = schmidt_readout(mix_white(EQ6.rho, v), 4)
        sq = v * np.array(EQ6.coeffs) ** 2 + (1 - v) / 16
        np.testing.assert_allclose(np.square(r.raw), sq, atol=1e-14)
        np.testing.assert_allclose(r.coeffs, np.sqrt(sq / sq.sum()), atol=1e-14)

    def test_out_of_range_flag(self):
        r = schmidt_readout(projector(target_ket(1.2)), 2)
        assert r.theta == pytest.approx(1.2) and r.theta_out_of_range
        r = schmidt_readout(projector(target_ket(math.pi / 2)), 2)
        assert r.theta == pytest.approx(math.pi / 2) and r.theta_out_of_range

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(0, 2 * math.pi), min_size=4, max_size=4))
    def test_phase_invariance(self, phases):
        ph = np.exp(1j * np.array(phases))
        u = kron(np.diag(ph), np.diag(ph.conj()))
        rho = mix_white(EQ6.rho, 0.9)
        a = schmidt_readout(rho, 4)
        b = schmidt_readout(u @ rho @ u.conj().T, 4)
        np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-14)


def test_density_json_roundtrip(rng):
    rho = random_density(9, rng)
    assert np.array_equal(density_from_json(density_to_json(rho)), rho)
