import warnings

import numpy as np
import pytest

from slowfast_spde.measure import (
    averaged_drift,
    averaged_drift_gradient,
    ergodic_measure,
    export_measure_csv,
    field_hash,
    measure_moment_growth,
    fit_moment_growth_constant,
    mixing_rate,
    pcn_measure,
    reference_stddev,
)
from slowfast_spde.functionals import make_functional
from slowfast_spde.noise import NoiseStream
from slowfast_spde.reaction import make_reaction
from slowfast_spde.spectral import (
    analysis_matrix,
    basis_vector,
    build_basis,
    field,
    norm_h,
    quadrature_nodes,
    quadrature_weights,
    synthesize,
    zero_field,
)
from slowfast_spde.tables import read_csv

BASIS = build_basis(np.pi, "dirichlet", 8)
LINEAR = make_reaction("fast_value()", "linear_damped(a=0.5)", BASIS)
AFFINE = make_reaction("fast_value()", "affine_damped(a=0.5, c=1.0)", BASIS)
TANH = make_reaction("fast_value()", "tanh_coupled(a=0.5, b=0.2)", BASIS)
SATURATED = make_reaction("fast_value()", "saturated_product(a=0.5, b=0.2)", BASIS)


def discrete_constant_projection():
    """Independent oracle for <1, e_k> on the default simulation grid."""
    m = 2 * BASIS.n_modes + 1
    j = np.arange(1, m + 1)
    return np.array(
        [
            (np.pi / (m + 1)) * np.sqrt(2 / np.pi) * np.sin(k * np.pi * j / (m + 1)).sum()
            for k in range(1, BASIS.n_modes + 1)
        ]
    )


AFFINE_MEAN = discrete_constant_projection() / (BASIS.eigenvalues + 0.5)
AFFINE_VAR = 1.0 / (2 * (BASIS.eigenvalues + 0.5))


def var_stderr(est):
    return est.mode_variances() * np.sqrt(2.0 / max(est.ess, 1.0))


class TestErgodicMeasure:
    def test_centered_linear_mode_means_vanish(self):
        est = ergodic_measure(
            zero_field(BASIS), zero_field(BASIS), LINEAR, BASIS,
            t_sample=2000.0, dt=0.02, thin=5, ns=NoiseStream(seed=101),
        )
        np.testing.assert_array_less(
            np.abs(est.mode_means()), 4 * est.mode_mean_stderr()
        )

    def test_affine_means_and_variances_match_closed_form(self):
        est = ergodic_measure(
            zero_field(BASIS), zero_field(BASIS), AFFINE, BASIS,
            t_sample=3000.0, dt=0.02, thin=5, ns=NoiseStream(seed=102),
        )
        np.testing.assert_array_less(
            np.abs(est.mode_means() - AFFINE_MEAN), 4 * est.mode_mean_stderr()
        )
        bias = 0.25 * 0.02 * AFFINE_VAR  # exponential-Euler variance bias
        np.testing.assert_array_less(
            np.abs(est.mode_variances() - AFFINE_VAR), 4 * var_stderr(est) + bias
        )

    def test_burn_in_floor_enforced(self):
        with pytest.raises(ValueError, match="mixing floor"):
            ergodic_measure(
                zero_field(BASIS), zero_field(BASIS), LINEAR, BASIS,
                t_sample=10.0, dt=0.02, thin=5, ns=NoiseStream(seed=103), t_burn=1.0,
            )

    def test_small_sample_warns_on_ess(self):
        with pytest.warns(UserWarning, match="ESS"):
            ergodic_measure(
                zero_field(BASIS), zero_field(BASIS), LINEAR, BASIS,
                t_sample=30.0, dt=0.02, thin=5, ns=NoiseStream(seed=104),
            )


class TestPcnMeasure:
    def test_gaussian_reference_mode_variances(self):
        # U == 0: the chain must sample N(0, (-B)^{-1}/2) exactly
        free = make_reaction("fast_value()", "linear_damped(a=0.0)", BASIS)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # acceptance rails at 1 when U == 0
            est = pcn_measure(
                zero_field(BASIS), free, BASIS, n_samples=100_000, beta=0.5,
                burn_in=2000, ns=NoiseStream(seed=111),
            )
        assert est.acceptance_rate == 1.0
        target = reference_stddev(BASIS) ** 2
        np.testing.assert_array_less(
            np.abs(est.mode_variances() - target), 4 * var_stderr(est)
        )
        np.testing.assert_array_less(np.abs(est.mode_means()), 4 * est.mode_mean_stderr())

    def test_affine_matches_closed_form_and_ergodic(self):
        pcn = pcn_measure(
            zero_field(BASIS), AFFINE, BASIS, n_samples=60_000, beta=0.5,
            burn_in=2000, ns=NoiseStream(seed=112),
        )
        np.testing.assert_array_less(
            np.abs(pcn.mode_means() - AFFINE_MEAN), 4 * pcn.mode_mean_stderr()
        )
        np.testing.assert_array_less(
            np.abs(pcn.mode_variances() - AFFINE_VAR), 4 * var_stderr(pcn)
        )
        erg = ergodic_measure(
            zero_field(BASIS), zero_field(BASIS), AFFINE, BASIS,
            t_sample=3000.0, dt=0.02, thin=5, ns=NoiseStream(seed=113),
        )
        joint = 3 * np.hypot(pcn.mode_mean_stderr(), erg.mode_mean_stderr())
        np.testing.assert_array_less(np.abs(pcn.mode_means() - erg.mode_means()), joint)
        joint_var = 3 * np.hypot(var_stderr(pcn), var_stderr(erg)) + 0.25 * 0.02 * AFFINE_VAR
        np.testing.assert_array_less(
            np.abs(pcn.mode_variances() - erg.mode_variances()), joint_var
        )

    def test_nonlinear_estimators_agree(self):
        x = field([0.5, 0.2], BASIS)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            pcn = pcn_measure(
                x, SATURATED, BASIS, n_samples=80_000, beta=0.5, burn_in=2000,
                ns=NoiseStream(seed=114),
            )
        erg = ergodic_measure(
            x, zero_field(BASIS), SATURATED, BASIS,
            t_sample=4000.0, dt=0.01, thin=10, ns=NoiseStream(seed=115),
        )
        joint = 3 * np.hypot(pcn.mode_mean_stderr(), erg.mode_mean_stderr())
        np.testing.assert_array_less(np.abs(pcn.mode_means() - erg.mode_means()), joint)
        joint_var = (
            3 * np.hypot(var_stderr(pcn), var_stderr(erg))
            + 0.35 * 0.01 * pcn.mode_variances()
        )
        np.testing.assert_array_less(
            np.abs(pcn.mode_variances() - erg.mode_variances()), joint_var
        )

    def test_beta_validation(self):
        with pytest.raises(ValueError, match="beta"):
            pcn_measure(
                zero_field(BASIS), AFFINE, BASIS, 100, beta=1.5, burn_in=10,
                ns=NoiseStream(seed=116),
            )


class TestAveragedDrift:
    def test_identity_f_returns_x_exactly(self):
        system = make_reaction("identity_slow()", "linear_damped(a=0.5)", BASIS)
        x = field([0.4, -0.3, 0.2], BASIS)
        est = pcn_measure(
            x, system, BASIS, n_samples=500, beta=0.5, burn_in=200,
            ns=NoiseStream(seed=121),
        )
        drift = averaged_drift(system, est)
        np.testing.assert_allclose(drift.value.coeffs, x.coeffs, atol=1e-12)
        np.testing.assert_allclose(drift.std_error, 0.0, atol=1e-12)

    def test_centered_linear_drift_vanishes(self):
        est = pcn_measure(
            zero_field(BASIS), LINEAR, BASIS, n_samples=40_000, beta=0.5,
            burn_in=2000, ns=NoiseStream(seed=122),
        )
        drift = averaged_drift(LINEAR, est)
        np.testing.assert_array_less(np.abs(drift.value.coeffs), 4 * drift.std_error)

    def test_affine_drift_matches_mean_field(self):
        est = pcn_measure(
            zero_field(BASIS), AFFINE, BASIS, n_samples=60_000, beta=0.5,
            burn_in=2000, ns=NoiseStream(seed=123),
        )
        drift = averaged_drift(AFFINE, est)
        np.testing.assert_array_less(
            np.abs(drift.value.coeffs - AFFINE_MEAN), 4 * drift.std_error
        )

    def test_symmetric_tilt_gives_zero_drift(self):
        # saturated_product's potential is even in y, so mu^x is symmetric
        # and the f = sigma2 average vanishes identically
        x = field([0.5, 0.2], BASIS)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = pcn_measure(
                x, SATURATED, BASIS, n_samples=60_000, beta=0.5, burn_in=2000,
                ns=NoiseStream(seed=124),
            )
        drift = averaged_drift(SATURATED, est)
        np.testing.assert_array_less(np.abs(drift.value.coeffs), 4 * drift.std_error)


class TestAveragedDriftGradient:
    def test_uncoupled_g_reduces_to_fx_term(self):
        system = make_reaction("linear_combo(a=0.3, b=1.0, c=0.0)", "affine_damped(a=0.5, c=1.0)", BASIS)
        est = pcn_measure(
            zero_field(BASIS), system, BASIS, n_samples=5000, beta=0.5,
            burn_in=500, ns=NoiseStream(seed=131),
        )
        k = basis_vector(BASIS, 1)
        h = field([0.8, 0.6], BASIS)
        value, se = averaged_drift_gradient(system, est, k, h)
        assert value == pytest.approx(0.3 * 0.8, abs=1e-12)
        assert se == pytest.approx(0.0, abs=1e-12)

    def test_identity_f_uncoupled_g_gives_inner_product(self):
        system = make_reaction("identity_slow()", "linear_damped(a=0.5)", BASIS)
        est = pcn_measure(
            zero_field(BASIS), system, BASIS, n_samples=2000, beta=0.5,
            burn_in=200, ns=NoiseStream(seed=132),
        )
        k = field([0.5, 0.1], BASIS)
        h = field([0.2, -0.4], BASIS)
        value, _ = averaged_drift_gradient(system, est, k, h)
        assert value == pytest.approx(float(np.dot(k.coeffs, h.coeffs)), abs=1e-12)

    def test_coupled_matches_analytic_gaussian_gradient(self):
        # g linear in sigma2 with tanh coupling: mu^x Gaussian, so
        # <DFbar(x)k, h> = b <sech^2(x) k, e_j>_grid h_j / (alpha_j + a)
        x = field([0.5, 0.2], BASIS)
        k = basis_vector(BASIS, 1)
        h = basis_vector(BASIS, 1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = pcn_measure(
                x, TANH, BASIS, n_samples=120_000, beta=0.5, burn_in=3000,
                ns=NoiseStream(seed=133),
            )
        value, se = averaged_drift_gradient(TANH, est, k, h)
        nodes = quadrature_nodes(BASIS)
        xg = synthesize(x, nodes)
        kg = synthesize(k, nodes)
        proj = analysis_matrix(BASIS) @ (0.2 / np.cosh(xg) ** 2 * kg)
        analytic = float(proj[0] / (BASIS.eigenvalues[0] + 0.5))
        assert value == pytest.approx(analytic, abs=4 * se)
        assert abs(value - analytic) / abs(analytic) < 0.03

    def test_coupled_matches_crn_finite_difference(self):
        x = field([0.5, 0.2], BASIS)
        k = basis_vector(BASIS, 1)
        h = basis_vector(BASIS, 1)
        system = make_reaction("linear_combo(a=0.3, b=1.0, c=0.0)", "tanh_coupled(a=0.5, b=0.2)", BASIS)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = pcn_measure(
                x, system, BASIS, n_samples=120_000, beta=0.5, burn_in=3000,
                ns=NoiseStream(seed=134),
            )
            value, _ = averaged_drift_gradient(system, est, k, h)
            tau = 1e-2
            paired = {}
            for sgn in (+1, -1):
                xp = field(x.coeffs + sgn * tau * k.coeffs, BASIS)
                m = pcn_measure(  # common random numbers: same stream both sides
                    xp, system, BASIS, n_samples=120_000, beta=0.5, burn_in=3000,
                    ns=NoiseStream(seed=135),
                )
                drift = averaged_drift(system, m)
                paired[sgn] = float(np.dot(drift.value.coeffs, h.coeffs))
        fd = (paired[1] - paired[-1]) / (2 * tau)
        assert abs(value - fd) / abs(fd) < 0.03

    def test_symmetric_tilt_gradient_vanishes(self):
        x = field([0.5, 0.2], BASIS)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = pcn_measure(
                x, SATURATED, BASIS, n_samples=60_000, beta=0.5, burn_in=2000,
                ns=NoiseStream(seed=136),
            )
        value, se = averaged_drift_gradient(
            SATURATED, est, basis_vector(BASIS, 1), basis_vector(BASIS, 1)
        )
        assert abs(value) < 4 * se


class TestMixingRate:
    def test_linear_rate_matches_ou_decay(self):
        y = field([2.0], BASIS)
        phi = make_functional("inner", basis_vector(BASIS, 1))
        fit = mixing_rate(
            zero_field(BASIS), y, phi, LINEAR, BASIS, t_max=2.5, n_points=25,
            replicas=3000, seed=141, dt=0.01, mu_phi=0.0,
        )
        assert not fit.noise_floor
        assert fit.rate == pytest.approx(1.5, rel=0.1)
        assert fit.rate >= LINEAR.gap

    def test_time_zero_gap_is_exact(self):
        y = field([2.0], BASIS)
        phi = make_functional("inner", basis_vector(BASIS, 1))
        fit = mixing_rate(
            zero_field(BASIS), y, phi, LINEAR, BASIS, t_max=1.0, n_points=10,
            replicas=50, seed=142, dt=0.01, mu_phi=0.3,
        )
        assert fit.gaps[0] == pytest.approx(abs(2.0 - 0.3), rel=1e-12)

    def test_nonlinear_rate_above_09_delta(self):
        x = field([0.5, 0.2], BASIS)
        y = field([2.0, -1.0], BASIS)
        phi = make_functional("inner", basis_vector(BASIS, 1))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est = pcn_measure(
                x, SATURATED, BASIS, n_samples=60_000, beta=0.5, burn_in=2000,
                ns=NoiseStream(seed=143),
            )
        mu_phi = float(phi(est.samples).mean())
        fit = mixing_rate(
            x, y, phi, SATURATED, BASIS, t_max=3.0, n_points=30,
            replicas=4000, seed=144, dt=0.01, mu_phi=mu_phi,
        )
        assert not fit.noise_floor
        assert fit.rate >= 0.9 * SATURATED.gap


class TestMomentGrowth:
    def test_uncoupled_g_moments_constant_in_x(self):
        # mu^x does not depend on x at all here: with a common stream the
        # chains coincide, and with independent streams the moments agree
        # within joint Monte Carlo error
        xs = [zero_field(BASIS), field([1.0], BASIS), field([0.0, 3.0], BASIS)]
        exact = [
            pcn_measure(
                x, AFFINE, BASIS, n_samples=2000, beta=0.5, burn_in=500,
                ns=NoiseStream(seed=150),
            ).samples
            for x in xs
        ]
        np.testing.assert_array_equal(exact[0], exact[1])
        np.testing.assert_array_equal(exact[0], exact[2])
        table = measure_moment_growth(
            AFFINE, BASIS, xs, p=2, n_samples=30_000, seed=151
        )
        spread = table["moment"].max() - table["moment"].min()
        assert spread < 3 * np.hypot(table["moment_se"].max(), table["moment_se"].max())

    def test_linear_coupled_envelope_transfers(self):
        system = make_reaction("fast_value()", "linear_coupled(a=0.5, b=0.3)", BASIS)
        fit_xs = [field([s], BASIS) for s in (0.0, 1.0, 2.0, 4.0)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            table = measure_moment_growth(
                system, BASIS, fit_xs, p=2, n_samples=30_000, seed=152
            )
            c = fit_moment_growth_constant(table, p=2)
            held = measure_moment_growth(
                system, BASIS, [field([8.0], BASIS)], p=2, n_samples=30_000, seed=153
            )
        assert held["moment"][0] <= 1.05 * c * (1 + held["x_norm"][0] ** 2)

    def test_linear_coupled_mean_field_linear_in_x(self):
        system = make_reaction("fast_value()", "linear_coupled(a=0.5, b=0.3)", BASIS)
        scale = {}
        for s in (1.0, 2.0):
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                est = pcn_measure(
                    field([s], BASIS), system, BASIS, n_samples=40_000, beta=0.5,
                    burn_in=2000, ns=NoiseStream(seed=154),
                )
            scale[s] = est.mode_means()[0]
        target = 0.3 / (BASIS.eigenvalues[0] + 0.5)
        assert scale[1.0] == pytest.approx(target, abs=0.01)
        assert scale[2.0] == pytest.approx(2 * target, abs=0.02)


class TestExport:
    def test_csv_schema_and_determinism(self, tmp_path):
        est = pcn_measure(
            zero_field(BASIS), AFFINE, BASIS, n_samples=50, beta=0.5, burn_in=100,
            ns=NoiseStream(seed=161),
        )
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        export_measure_csv(est, p1)
        export_measure_csv(est, p2)
        assert p1.read_bytes() == p2.read_bytes()
        comments, columns = read_csv(p1)
        assert any(c.startswith("provenance=pcn") for c in comments)
        assert any(c.startswith(f"x_hash={field_hash(est.x_frozen)}") for c in comments)
        assert list(columns) == [f"mode_{k}" for k in range(1, 9)]
        assert len(columns["mode_1"]) == 50
