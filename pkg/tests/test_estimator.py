import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cavity_biphoton import ExperimentConfig, Histogram, MeasurementConfig, PeakSums
from cavity_biphoton.errors import FitDegenerateError, NoInterferenceError, ParameterDomainError
from cavity_biphoton.estimator import (MIN_HV_COUNTS, analyze_backward_pump, background_correct,
                                       fit_phase, grid_search_phase, integrate_peaks,
                                       profile_chi2, ratio_curve, ratio_curve_from_histograms,
                                       visibility_report)
from cavity_biphoton.model import ratio_law
from cavity_biphoton.rates import (JitterKernel, backward_pump_ratio, expected_histogram_for,
                                   expected_ratio_curve)
from cavity_biphoton.records import HistogramGeometry, RatioCurve

HV = MeasurementConfig.for_basis("hv")
PM = MeasurementConfig.for_basis("pm45")


def _flat(value, n=101, duration=960.0):
    return Histogram(38.3, -50 * 38.3, np.full(n, value, dtype=float), duration)


def _law_curve(phi, ms=range(-20, 21), A=1.0, B=0.0):
    ms = np.asarray(list(ms))
    return RatioCurve.from_arrays(ms, A * np.sin(ms * phi / 2) ** 2 + B, np.full(len(ms), 0.01))


def test_background_zero_is_identity():
    h = _flat(3.0)
    assert background_correct(h, 0.0) is h


def test_background_removes_uniform_level():
    out = background_correct(_flat(13.44), 0.014)
    np.testing.assert_allclose(out.counts, 0.0, atol=1e-12)
    assert out.background_subtracted == pytest.approx(13.44)


def test_background_keeps_negative_bins():
    out = background_correct(_flat(10.0), 0.014)
    assert np.all(out.counts < 0)


def test_background_negative_rate_rejected():
    with pytest.raises(ParameterDomainError):
        background_correct(_flat(1.0), -0.1)


def test_background_correction_shift_is_recoverable(config):
    """Subtracting rate*duration per bin shifts each peak sum by exactly bins*rate*duration."""
    hv = expected_histogram_for(config, HV)
    raw = integrate_peaks(hv, 826.0)
    cor = integrate_peaks(background_correct(hv, 0.014), 826.0)
    ones = dataclasses.replace(hv, counts=np.ones_like(hv.counts))
    bins = integrate_peaks(ones, 826.0).sums
    np.testing.assert_allclose(raw.sums - cor.sums, bins * 0.014 * 960.0, rtol=1e-12)
    np.testing.assert_allclose(cor.variances, raw.sums, rtol=1e-12)


def test_unit_count_at_zero():
    g = HistogramGeometry.centered(38.3, 25.5 * 826.0)
    counts = np.zeros(g.n_bins, dtype=np.int64)
    counts[g.n_bins // 2] = 1
    sums = integrate_peaks(Histogram(38.3, g.origin_ps, counts, 1.0), 826.0)
    assert sums.sums[sums.m == 0][0] == 1
    assert sums.sums.sum() == 1


def test_overlapping_windows_rejected():
    with pytest.raises(ParameterDomainError):
        integrate_peaks(_flat(1.0), 826.0, window_ps=900.0)


def test_hv_peak_sums_decay_like_survival(config):
    c = config.replace(detector__background_rate_hz_per_bin_hv=0.0)
    sums = integrate_peaks(expected_histogram_for(c, HV), 826.0, m_window=range(0, 10)).sums
    np.testing.assert_allclose(sums[1:] / sums[:-1], 0.89, rtol=0.03)


def test_singlet_even_peaks_are_spillover(singlet_config):
    c = singlet_config.replace(detector__background_rate_hz_per_bin_pm45=0.0)
    sums = integrate_peaks(expected_histogram_for(c, PM), 826.0, m_window=range(0, 6)).sums
    even, odd = sums[0::2], sums[1::2]
    assert np.all(even < 0.1 * odd)
    # leak into m=0 comes from both m=+-1 neighbours
    leak = sums[0] / (2 * sums[1])
    assert 0 < leak < 0.05


def test_ratio_error_propagation():
    hv = PeakSums(np.array([0, 1]), np.array([100.0, 400.0]), np.array([100.0, 400.0]))
    pm = PeakSums(np.array([0, 1]), np.array([25.0, 0.0]), np.array([25.0, 0.0]))
    curve = ratio_curve(hv, pm)
    np.testing.assert_allclose(curve.ratio, [0.25, 0.0])
    expected = math.sqrt(25 / 100**2 + 25**2 * 100 / 100**4)
    assert curve.sigma[0] == pytest.approx(expected)
    # zero variance is floored at one count
    assert curve.sigma[1] == pytest.approx(1 / 400)


def test_ratio_zero_hv_gets_infinite_sigma():
    hv = PeakSums(np.array([0]), np.array([0.0]), np.array([0.0]))
    curve = ratio_curve(hv, hv)
    assert math.isinf(curve.sigma[0])


@pytest.mark.parametrize("phi", [0.2, 0.5, 0.74, 1.5, math.pi])
def test_noiseless_identifiability(config, phi):
    c = config.replace(cavity__birefringence_phase_rad=phi)
    fit = fit_phase(expected_ratio_curve(c, JitterKernel(0.0)))
    assert fit.phase_rad == pytest.approx(phi, abs=1e-6)
    assert fit.amplitude == pytest.approx(1.0, abs=1e-6)
    assert fit.offset == pytest.approx(0.0, abs=1e-6)


def test_singlet_fit_reports_period_two():
    fit = fit_phase(_law_curve(math.pi))
    assert fit.phase_rad == pytest.approx(math.pi, abs=1e-9)
    assert fit.period_roundtrips == pytest.approx(2.0, abs=1e-8)
    assert fit.alias_phase_rad == pytest.approx(math.pi)


def test_fig3_period():
    fit = fit_phase(_law_curve(2 * math.pi / 8.90, A=0.9, B=0.05))
    assert fit.phase_rad == pytest.approx(0.706, abs=5e-4)
    assert fit.period_roundtrips == pytest.approx(8.90, abs=1e-6)
    assert fit.temperature_equivalent_C == pytest.approx(4.5 / 8.90, rel=1e-6)


def test_fit_reports_chi2_and_covariance():
    rng = np.random.default_rng(3)
    curve = _law_curve(0.74)
    noisy = RatioCurve.from_arrays(curve.m, curve.ratio + 0.01 * rng.standard_normal(len(curve)),
                                   curve.sigma)
    fit = fit_phase(noisy)
    assert fit.dof == len(curve) - 3
    assert 0.3 < fit.chi2_per_dof < 2.5
    assert fit.covariance.shape == (3, 3)
    assert np.allclose(fit.covariance, fit.covariance.T)
    assert abs(fit.phase_rad - 0.74) < 5 * fit.phase_error_rad
    assert set(fit.to_dict()) >= {"phase_rad", "amplitude", "offset", "covariance",
                                  "chi2_per_dof", "period_roundtrips",
                                  "temperature_equivalent_C"}


def test_flat_curve_is_degenerate():
    curve = RatioCurve.from_arrays(range(-5, 6), np.full(11, 0.3), np.full(11, 0.01))
    with pytest.raises(FitDegenerateError) as info:
        fit_phase(curve)
    assert info.value.diagnostics["offset"] == pytest.approx(0.3)


def test_too_few_distinct_m():
    with pytest.raises(ParameterDomainError):
        fit_phase(_law_curve(1.0, ms=[-3, -2, -1, 0, 1, 2, 3]))


def test_low_count_entries_excluded():
    ms = np.arange(-20, 21)
    r = np.sin(ms * 0.74 / 2) ** 2
    hv = np.where(np.abs(ms) > 10, MIN_HV_COUNTS - 1, 1000.0)
    r_bad = np.where(np.abs(ms) > 10, 0.9, r)
    fit = fit_phase(RatioCurve.from_arrays(ms, r_bad, np.full(41, 0.01), hv))
    assert fit.phase_rad == pytest.approx(0.74, abs=1e-6)
    assert fit.dof == 21 - 3


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, math.pi), st.floats(0.2, 1.0), st.floats(0.0, 0.3))
def test_phase_always_in_range(phi, A, B):
    fit = fit_phase(_law_curve(phi, A=A, B=B))
    assert 0.0 <= fit.phase_rad <= math.pi
    assert fit.phase_rad == pytest.approx(phi, abs=1e-6)


@pytest.mark.parametrize("phi", [math.pi - 0.3, math.pi + 0.3, 2 * math.pi - 0.74])
def test_alias_folds_into_range(phi):
    folded = min(phi % (2 * math.pi), 2 * math.pi - phi % (2 * math.pi))
    fit = fit_phase(_law_curve(phi))
    assert fit.phase_rad == pytest.approx(folded, abs=1e-6)


def _poisson_pair(hv, pm, seed):
    rng = np.random.default_rng(seed)
    return (dataclasses.replace(hv, counts=rng.poisson(hv.counts)),
            dataclasses.replace(pm, counts=rng.poisson(pm.counts)))


def test_bias_over_100_seeds(config):
    c = config.replace(cavity__birefringence_phase_rad=0.74)
    hv, pm = expected_histogram_for(c, HV), expected_histogram_for(c, PM)
    est = []
    for seed in range(100):
        h, p = _poisson_pair(hv, pm, seed)
        est.append(fit_phase(ratio_curve_from_histograms(h, p, 826.0, 0.014, 0.009)).phase_rad)
    est = np.array(est)
    assert np.all(np.abs(est - 0.74) <= 0.02)
    assert abs(est.mean() - 0.74) <= 2 * est.std()


@pytest.mark.parametrize("phi", [0.3, 0.706, 2.5])
def test_refined_fit_matches_exhaustive_grid(config, phi):
    c = config.replace(cavity__birefringence_phase_rad=phi)
    h, p = _poisson_pair(expected_histogram_for(c, HV), expected_histogram_for(c, PM), 17)
    curve = ratio_curve_from_histograms(h, p, 826.0, 0.014, 0.009)
    fit = fit_phase(curve)
    brute = grid_search_phase(curve)
    assert abs(fit.phase_rad - brute) <= math.pi / 1e4
    assert profile_chi2(fit.phase_rad, curve) <= profile_chi2(brute, curve) + 1e-9


def test_backward_pump_example_fraction():
    res = analyze_backward_pump(0.12, 0.43)
    assert res.interference_fraction == pytest.approx(0.90, abs=1e-12)
    assert res.residual_ratio == pytest.approx(0.05, abs=1e-12)
    assert res.backward_pair_fraction == pytest.approx(0.07 / 0.45, abs=1e-12)


def test_backward_pump_perfect_forward():
    res = analyze_backward_pump(0.0, 0.5)
    assert res.interference_fraction == 1.0
    assert res.backward_pair_fraction == 0.0
    assert res.pump_reflection == 0.0


def test_backward_pump_no_interference():
    with pytest.raises(NoInterferenceError):
        analyze_backward_pump(0.5, 0.5)


def test_backward_pump_domain():
    with pytest.raises(ParameterDomainError):
        analyze_backward_pump(0.6, 0.1)
    with pytest.raises(ParameterDomainError):
        analyze_backward_pump(0.1, 0.2)


@settings(max_examples=200)
@given(st.floats(0.0, 0.5), st.floats(0.0, 0.5))
def test_backward_pump_outputs_bounded_and_swap(r_n, r_r):
    if r_n + r_r < 0.5 or r_n + r_r == 1.0:
        return
    a = analyze_backward_pump(r_n, r_r)
    b = analyze_backward_pump(r_r, r_n)
    for v in (a.interference_fraction, a.backward_pair_fraction, a.residual_ratio):
        assert 0.0 <= v <= 1.0
    assert b.interference_fraction == pytest.approx(a.interference_fraction, abs=1e-15)
    assert b.backward_pair_fraction == pytest.approx(1 - a.backward_pair_fraction, abs=1e-12)


@settings(max_examples=300)
@given(st.floats(0.0, 0.49), st.floats(0.0, 0.99))
def test_backward_pump_inverts_forward_model(r_int, beta):
    r_n = backward_pump_ratio(r_int, beta, "Normal")
    r_r = backward_pump_ratio(r_int, beta, "Rotated")
    res = analyze_backward_pump(r_n, r_r)
    assert res.backward_pair_fraction == pytest.approx(beta, abs=1e-12)
    assert res.residual_ratio == pytest.approx(r_int, abs=1e-12)


def _sums(values):
    values = np.asarray(values, dtype=float)
    return PeakSums(np.arange(len(values)), values, values.copy())


def test_visibility_from_total_ratio():
    rep = visibility_report(_sums([1000.0]), _sums([131.0]))
    assert rep.ratio_total == pytest.approx(0.131)
    assert rep.visibility == pytest.approx(0.768, abs=1e-3)
    assert rep.visibility_error > 0


def test_visibility_zero_pm_is_one():
    rep = visibility_report(_sums([10.0, 20.0]), _sums([0.0, 0.0]))
    assert rep.visibility == 1.0


def test_visibility_zero_hv_raises():
    with pytest.raises(ZeroDivisionError):
        visibility_report(_sums([0.0, 0.0]), _sums([1.0, 1.0]))


def test_visibility_window_selection():
    rep = visibility_report(_sums([100.0, 100.0, 100.0]), _sums([10.0, 50.0, 90.0]),
                            m_window=[0, 1])
    assert rep.ratio_total == pytest.approx(0.3)


def test_triplet_simulated_visibility_band(config):
    from cavity_biphoton.sim import SimRun, run_simulation
    h = run_simulation(SimRun(config, 4, 960.0), HV)
    p = run_simulation(SimRun(config, 4, 960.0), PM)
    hv = integrate_peaks(background_correct(h, 0.014), 826.0)
    pm = integrate_peaks(background_correct(p, 0.009), 826.0)
    rep = visibility_report(hv, pm)
    assert 0.7 <= rep.visibility <= 1.0
    assert 0 < rep.visibility_error < 0.05
