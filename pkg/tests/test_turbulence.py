import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from uwocdma import turbulence as tb

PARAMS = tb.TurbulenceParams(chi_t=1e-7, epsilon=5e-5, w_ratio=-3.5)
WAVELENGTH = 532e-9


def spectrum_reference(kappa, params):
    """Second, independently written evaluation of the seawater spectrum
    (scalar math, different algebraic grouping)."""
    w = params.w_ratio
    ke = kappa * params.kolmogorov_scale
    delta = 8.284 * ke ** (4.0 / 3.0) + 12.978 * ke * ke
    bracket = (w * math.exp(-1.863e-2 * delta) - 2.0 * math.exp(-9.41e-3 * delta)
               + math.exp(-1.9e-4 * delta) / w)
    return (0.388e-8 * params.chi_t * bracket / w
            * (1.0 + 2.35 * ke ** (2.0 / 3.0))
            / (params.epsilon ** (1.0 / 3.0) * kappa ** (11.0 / 3.0)))


class TestSpectrum:
    def test_cutoff_at_high_frequency(self):
        peak = tb.nikishov_spectrum(10.0, PARAMS)
        tail = tb.nikishov_spectrum(3e5, PARAMS)
        assert tail < 1e-12 * peak

    def test_linear_in_temperature_dissipation(self):
        doubled = tb.TurbulenceParams(chi_t=2e-7, epsilon=5e-5, w_ratio=-3.5)
        k = np.array([1.0, 50.0, 1000.0])
        assert np.allclose(tb.nikishov_spectrum(k, doubled),
                           2 * tb.nikishov_spectrum(k, PARAMS), rtol=1e-12)

    def test_positive_and_matches_independent_implementation(self):
        for kappa in (0.5, 10.0, 100.0, 2000.0, 5e4):
            ours = tb.nikishov_spectrum(kappa, PARAMS)
            ref = spectrum_reference(kappa, PARAMS)
            assert ours > 0
            assert ours == pytest.approx(ref, rel=1e-12)

    def test_domain_error(self):
        with pytest.raises(ValueError):
            tb.nikishov_spectrum(0.0, PARAMS)
        with pytest.raises(ValueError):
            tb.nikishov_spectrum(np.array([1.0, -2.0]), PARAMS)


class TestScintillationIndex:
    def test_vanishes_at_short_range(self):
        tiny = tb.scintillation_index(PARAMS, 0.01, WAVELENGTH)
        assert 0 < tiny < 1e-6

    def test_monotone_in_distance(self):
        vals = [tb.scintillation_index(PARAMS, d, WAVELENGTH) for d in (18, 45, 90)]
        assert vals[0] < vals[1] < vals[2]

    def test_monotone_in_temperature_dissipation(self):
        vals = []
        for chi in (5e-8, 1e-7, 2e-7):
            p = tb.TurbulenceParams(chi_t=chi, epsilon=5e-5, w_ratio=-3.5)
            vals.append(tb.scintillation_index(p, 45, WAVELENGTH))
        assert vals[0] < vals[1] < vals[2]

    def test_decreasing_in_kinetic_dissipation(self):
        vals = []
        for eps in (1e-5, 5e-5, 2e-4):
            p = tb.TurbulenceParams(chi_t=1e-7, epsilon=eps, w_ratio=-3.5)
            vals.append(tb.scintillation_index(p, 45, WAVELENGTH))
        assert vals[0] > vals[1] > vals[2]

    def test_brute_force_double_integral(self):
        # raw 2-D midpoint quadrature over (path fraction, log kappa)
        d0 = 30.0
        k0 = 2 * np.pi / WAVELENGTH
        xi = (np.arange(400) + 0.5) / 400
        s = np.linspace(np.log(1e-2), np.log(3e5), 6000)
        ds = s[1] - s[0]
        kap = np.exp(s)
        phi = tb.nikishov_spectrum(kap, PARAMS)
        arg = np.outer(d0 * kap**2 / k0, xi)
        inner = (kap * kap * phi) @ (1 - np.cos(arg)).mean(axis=1) * ds
        brute = 8 * np.pi**2 * k0**2 * d0 * inner
        ours = tb.scintillation_index(PARAMS, d0, WAVELENGTH)
        assert ours == pytest.approx(brute, rel=0.02)

    def test_spherical_wave_smaller_than_plane(self):
        sph = tb.TurbulenceParams(chi_t=1e-7, epsilon=5e-5, w_ratio=-3.5,
                                  wave_kind="spherical")
        v_sph = tb.scintillation_index(sph, 45, WAVELENGTH)
        v_pl = tb.scintillation_index(PARAMS, 45, WAVELENGTH)
        assert 0 < v_sph < v_pl

    def test_bad_distance(self):
        with pytest.raises(ValueError):
            tb.scintillation_index(PARAMS, 0.0, WAVELENGTH)


class TestFadingConversions:
    def test_reference_points(self):
        assert round(tb.fading_from_scintillation(0.9738).sigma2_x, 2) == 0.17
        assert tb.fading_from_scintillation(0.0).sigma2_x == 0.0
        assert round(tb.fading_from_scintillation(0.1248).sigma2_x, 3) == 0.029

    def test_round_trip_exact(self):
        for s2i in (0.9738, 0.616, 0.271, 0.1248, 0.071, 0.0452):
            model = tb.fading_from_scintillation(s2i)
            assert model.sigma2_i == pytest.approx(s2i, abs=1e-12)
            assert math.expm1(4 * model.sigma2_x) == pytest.approx(s2i, abs=1e-12)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            tb.fading_from_scintillation(-0.1)

    def test_inconsistent_model_rejected(self):
        with pytest.raises(ValueError):
            tb.FadingModel(sigma2_x=0.1, mu_x=0.0)
        with pytest.raises(ValueError):
            tb.FadingModel(sigma2_x=0.1, sigma2_i=0.3)

    def test_strong_turbulence_warns(self):
        with pytest.warns(tb.WeakTurbulenceWarning):
            tb.fading_from_scintillation(1.5)


class TestSampling:
    def test_no_fading_degenerate(self):
        samples = tb.sample_fading(tb.FadingModel(0.0), 100, seed=1)
        assert (samples == 1.0).all()

    def test_unit_mean(self):
        model = tb.FadingModel(sigma2_x=0.17)
        h = tb.sample_fading(model, 1_000_000, seed=5)
        se = h.std() / math.sqrt(len(h))
        assert abs(h.mean() - 1.0) <= 3 * se

    def test_sampled_scintillation_index(self):
        model = tb.FadingModel(sigma2_x=0.17)
        h = tb.sample_fading(model, 1_000_000, seed=6)
        s2i_emp = h.var() / h.mean() ** 2
        assert s2i_emp == pytest.approx(model.sigma2_i, rel=0.05)

    def test_log_amplitude_moments(self):
        model = tb.FadingModel(sigma2_x=0.06)
        h = tb.sample_fading(model, 500_000, seed=7)
        x = 0.5 * np.log(h)
        n = len(x)
        assert abs(x.mean() - model.mu_x) <= 3 * x.std() / math.sqrt(n)
        # variance of the sample variance of a normal: 2 sigma^4 / (n-1)
        var_se = math.sqrt(2.0 / (n - 1)) * model.sigma2_x
        assert abs(x.var() - model.sigma2_x) <= 3 * var_se

    def test_seed_determinism(self):
        model = tb.FadingModel(sigma2_x=0.12)
        a = tb.sample_fading(model, 1000, seed=3)
        b = tb.sample_fading(model, 1000, seed=3)
        assert np.array_equal(a, b)


class TestLognormalSum:
    def test_single_term_recovery(self):
        approx = tb.approx_lognormal_sum([0.3], [0.06])
        assert approx.sigma2_z == pytest.approx(0.06, abs=1e-15)
        assert approx.mu_z == pytest.approx(0.5 * math.log(0.3) - 0.06, abs=1e-15)

    def test_two_equal_terms_hand_value(self):
        approx = tb.approx_lognormal_sum([1.0, 1.0], [0.06, 0.06])
        expected = 0.25 * math.log(1 + (math.exp(0.24) - 1) / 2)
        assert approx.sigma2_z == pytest.approx(expected, rel=1e-12)
        assert approx.mu_z == pytest.approx(0.5 * math.log(2) - expected, rel=1e-12)

    def test_mean_preserved(self):
        approx = tb.approx_lognormal_sum([0.2, 0.5, 1.3], [0.02, 0.06, 0.17])
        assert approx.mean == pytest.approx(2.0, abs=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty interference set"):
            tb.approx_lognormal_sum([], [])

    def test_ks_distance_three_terms(self):
        n = 200_000
        rng = np.random.default_rng(11)
        model = tb.FadingModel(sigma2_x=0.06)
        direct = sum(tb.sample_fading(model, n, seed=rng) for _ in range(3))
        approx = tb.approx_lognormal_sum([1.0] * 3, [0.06] * 3)
        surrogate = approx.sample(n, seed=rng)
        stat = ks_2samp(direct, surrogate).statistic
        assert stat <= 0.05
