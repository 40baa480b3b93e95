import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from etbell.errors import ConfigError
from etbell.quantum import DensityOperator, bell_phi_plus, fidelity, random_density
from etbell.tomography import (
    ProfileLikelihood,
    ReconstructionResult,
    expected_tomography_counts,
    factor_to_params,
    fidelity_error_bar,
    informational_completeness,
    linear_reconstruction,
    ml_reconstruction,
    params_to_factor,
    project_psd,
    reconstruct_with_accidental_subtraction,
    simulate_tomography_counts,
    table2_settings,
    with_counts,
)

TABLE2_COUNTS = [3058, 31, 3416, 35, 1737, 1799, 1708, 1797, 1795, 3304, 1727, 1762, 1801, 1713, 1744, 97]


def exact_settings(rho, n_ref=1e6):
    return with_counts(table2_settings(), np.rint(expected_tomography_counts(rho, n_ref)).astype(np.int64))


def assert_physical(rho: DensityOperator):
    m = rho.matrix
    assert np.max(np.abs(m - m.conj().T)) <= 1e-12
    assert abs(np.trace(m) - 1) <= 1e-12
    assert np.linalg.eigvalsh(m).min() >= -1e-10


class TestSettings:
    def test_transcription(self):
        s = table2_settings()
        assert [x.count for x in s] == TABLE2_COUNTS
        assert all(x.duration == 2.0 for x in s)
        assert (s[0].proj_a, s[0].proj_b, s[0].count) == ("L", "L", 3058)
        assert (s[9].proj_a, s[9].proj_b, s[9].count) == ("P0", "P0", 3304)
        assert (s[15].proj_a, s[15].proj_b, s[15].count) == ("P90", "P90", 97)
        assert [x.index for x in s] == list(range(1, 17))

    def test_completeness(self):
        rank, cond = informational_completeness(table2_settings())
        assert rank == 16
        assert 1 < cond < 100


class TestSimulation:
    def test_expected_counts(self):
        e = expected_tomography_counts(bell_phi_plus(), 1000.0)
        assert e[15] == pytest.approx(0.0, abs=1e-9)
        assert e[9] / e[0] == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(expected_tomography_counts(np.eye(4) / 4, 1000.0), 250.0)

    def test_deterministic(self):
        a = simulate_tomography_counts(bell_phi_plus(), 1e4, seed=3)
        assert np.array_equal(a, simulate_tomography_counts(bell_phi_plus(), 1e4, seed=3))


class TestLinear:
    def test_exact_round_trip(self):
        s = exact_settings(bell_phi_plus(), 1e12)
        assert np.allclose(linear_reconstruction(s), bell_phi_plus().matrix, atol=1e-9)
        s = exact_settings(np.eye(4) / 4, 4e6)
        assert np.allclose(linear_reconstruction(s), np.eye(4) / 4, atol=1e-9)

    def test_table2_structure(self):
        m = linear_reconstruction(table2_settings())
        assert np.allclose(m, m.conj().T)
        d = np.diag(m).real
        assert set(np.argsort(d)[-2:]) == {0, 3}

    def test_incomplete(self):
        with pytest.raises(ConfigError):
            linear_reconstruction(table2_settings()[:15])

    def test_project_psd(self, rng):
        for _ in range(20):
            h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            p = project_psd(h + h.conj().T)
            assert np.linalg.eigvalsh(p).min() >= -1e-12
            assert np.trace(p).real == pytest.approx(1.0, abs=1e-12)
        rho = random_density(rng).matrix
        assert np.allclose(project_psd(rho), rho, atol=1e-12)


class TestLikelihood:
    def test_params_round_trip(self, rng):
        theta = rng.normal(size=16)
        assert np.allclose(factor_to_params(params_to_factor(theta)), theta)

    def test_gradient_finite_differences(self, rng):
        lik = ProfileLikelihood(table2_settings())
        for _ in range(10):
            theta = rng.normal(size=16)
            g = lik.gradient(theta)
            h = 1e-6
            fd = np.array([(lik.value(theta + h * e) - lik.value(theta - h * e)) / (2 * h) for e in np.eye(16)])
            assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(g)

    def test_scale_invariant(self, rng):
        lik = ProfileLikelihood(table2_settings())
        theta = rng.normal(size=16)
        assert lik.value(3.7 * theta) == pytest.approx(lik.value(theta), abs=1e-8)


class TestMl:
    def test_table2_physical(self, table2_ml):
        assert_physical(table2_ml.rho)
        assert table2_ml.converged
        assert 0 <= table2_ml.fidelity_with_phi_plus <= 1
        assert table2_ml.n_ref == pytest.approx(6700, rel=0.1)

    def test_monotone_likelihood(self):
        hist = []
        ml_reconstruction(table2_settings(), history=hist)
        assert len(hist) > 10
        assert np.all(np.diff(hist) >= 0)

    def test_beats_linear_start(self, table2_ml):
        lik = ProfileLikelihood(table2_settings())
        start = project_psd(linear_reconstruction(table2_settings()))
        assert table2_ml.log_likelihood >= lik.full_log_likelihood(start)[0]

    def test_phi_plus_round_trip(self):
        c = simulate_tomography_counts(bell_phi_plus(), 1e6, seed=1)
        r = ml_reconstruction(with_counts(table2_settings(), c))
        assert r.fidelity_with_phi_plus >= 0.999
        assert r.predicted_s == pytest.approx(2 * np.sqrt(2), abs=0.01)

    def test_random_round_trip(self, rng):
        for k in range(10):
            rho = random_density(rng)
            c = simulate_tomography_counts(rho, 1e7, seed=k)
            r = ml_reconstruction(with_counts(table2_settings(), c))
            assert fidelity(r.rho, rho) >= 0.999

    def test_pure_state_boundary(self):
        # Near the PSD boundary count noise is rectified into first-order
        # infidelity; the estimate still sits at the likelihood optimum.
        from scipy.optimize import minimize
        rho = random_density(np.random.default_rng(24), rank=1)
        s = with_counts(table2_settings(), simulate_tomography_counts(rho, 1e7, seed=0))
        r = ml_reconstruction(s)
        lik = ProfileLikelihood(s)
        opt = minimize(lambda t: -lik.value(t), r.params, jac=lambda t: -lik.gradient(t), method="BFGS",
                       options={"gtol": 1e-12, "maxiter": 20000})
        t = params_to_factor(opt.x)
        best = t @ t.conj().T / np.trace(t @ t.conj().T).real
        assert fidelity(r.rho, rho) > 0.995
        assert abs(fidelity(r.rho, rho) - fidelity(best, rho)) < 1e-3

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.integers(0, 5000), min_size=16, max_size=16).filter(lambda c: sum(c) > 0))
    def test_always_physical(self, counts):
        r = ml_reconstruction(with_counts(table2_settings(), counts), max_iter=300)
        assert_physical(r.rho)

    def test_max_iter_flag(self):
        r = ml_reconstruction(table2_settings(), max_iter=3)
        assert not r.converged and r.iterations == 3
        assert_physical(r.rho)

    def test_json_round_trip(self, table2_ml):
        back = ReconstructionResult.from_dict(table2_ml.to_dict())
        assert np.allclose(back.rho.matrix, table2_ml.rho.matrix, atol=0)
        assert back.fidelity_with_phi_plus == table2_ml.fidelity_with_phi_plus


class TestAccidentals:
    def test_zero_rates(self, table2_ml):
        r = reconstruct_with_accidental_subtraction(table2_settings(), 0.0)
        assert np.array_equal(r.rho.matrix, table2_ml.rho.matrix)

    def test_zeroing_rows_2_and_4(self, table2_ml):
        rates = np.zeros(16)
        rates[[1, 3]] = [31 / 2, 35 / 2]
        r = reconstruct_with_accidental_subtraction(table2_settings(), rates)
        assert r.fidelity_with_phi_plus > table2_ml.fidelity_with_phi_plus

    def test_uniform_rate(self):
        r = reconstruct_with_accidental_subtraction(table2_settings(), 15.0)
        assert_physical(r.rho)

    def test_noisy_input_directional(self):
        # white accidentals added to simulated counts, then removed again
        rho = DensityOperator.from_matrix(0.95 * bell_phi_plus().matrix + 0.05 * np.eye(4) / 4)
        clean = expected_tomography_counts(rho, 6500.0)
        noisy = np.random.default_rng(5).poisson(clean + 60.0)
        s = with_counts(table2_settings(), noisy)
        raw = ml_reconstruction(s)
        sub = reconstruct_with_accidental_subtraction(s, 30.0)
        assert sub.fidelity_with_phi_plus > raw.fidelity_with_phi_plus


class TestBootstrap:
    def test_needs_resamples(self):
        with pytest.raises(ConfigError):
            fidelity_error_bar(table2_settings(), 50, seed=0)

    def test_shrinks_with_counts_and_is_deterministic(self):
        s = exact_settings(bell_phi_plus(), 1e6)
        a = fidelity_error_bar(s, 100, seed=1)
        assert a < 1e-3
        assert fidelity_error_bar(s, 100, seed=1) == a

    @pytest.mark.slow
    def test_table2_error_bar(self):
        d = fidelity_error_bar(table2_settings(), 200, seed=0)
        assert 0.005 <= d <= 0.04
