import math

import numpy as np
import pytest
from scipy.stats import poisson

from wvamp import (CM, DetectorCalib, InfeasiblePf, MeterParams, UndefinedGamma,
                   expected_counts, fi_p_exact, fi_q_exact, gamma,
                   ideal_fi_ratio_scan, meter_pdf_p, meter_pdf_q, outcome_pmf,
                   pixel_fisher, qfi_cm, qubit_from_degrees, response_pmf,
                   rwva_scheme, scheme_pf, total_fisher)
from wvamp.fisher import PmfCache
from wvamp.qmeter import FIGURE_METER, MeasurementScheme
from wvamp.detector import PixelModel


def _pixel(nbar, dnbar=1e4):
    return PixelModel(0, 0.0, nbar, dnbar)


class TestOutcomePmf:
    @pytest.mark.parametrize("nbar", [0.5, 40.0, 2e3, 5e5])
    def test_normalized(self, calib, nbar):
        probs, dprobs = outcome_pmf(_pixel(nbar), calib).toarray()
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert abs(dprobs.sum()) < 1e-9 * max(1.0, np.abs(dprobs).max())

    def test_derivative_oracle(self, calib):
        # independent pmf: P(k) = sum_N Pois(N; eta*nbar) R(k|N), with the
        # classical-noise width frozen at the working point (model convention)
        nbar0, dnbar = 60.0, 1e4
        pmf = outcome_pmf(_pixel(nbar0, dnbar), calib)

        def direct(lam):
            nmax = int(lam + 12 * math.sqrt(lam) + 20)
            w = poisson.pmf(np.arange(nmax + 1), lam)
            out = np.zeros(calib.k_s + 1)
            for N, wN in enumerate(w):
                out += wN * response_pmf(N, nbar0, calib)
            return out

        lam = calib.eta * nbar0
        h = 1e-4 * lam
        fd = (direct(lam + h) - direct(lam - h)) / (2 * h) * (calib.eta * dnbar)
        probs, dprobs = pmf.toarray()
        assert probs == pytest.approx(direct(lam), abs=1e-10)
        scale = np.abs(dprobs).max()
        assert np.abs(fd - dprobs).max() < 1e-5 * scale

    def test_cache_consistency(self, calib):
        cache = PmfCache()
        a = outcome_pmf(_pixel(123.0), calib, cache=cache)
        b = outcome_pmf(_pixel(123.0), calib)
        assert np.array_equal(a.probs, b.probs)
        assert pixel_fisher(a) == pytest.approx(pixel_fisher(b), rel=1e-14)


class TestGamma:
    def test_ideal_is_one(self):
        ideal = DetectorCalib.ideal()
        for nbar in (1.0, 100.0, 1e5):
            assert gamma(_pixel(nbar), ideal) == pytest.approx(1.0, abs=1e-6)

    def test_noise_degrades(self, calib):
        # dark-noise floor: tiny signals carry almost no information
        assert gamma(_pixel(0.5), calib) < 0.1
        # mid-range approaches shot-limited readout
        assert 0.5 < gamma(_pixel(2e4), calib) <= 1.0

    def test_undefined(self, calib):
        with pytest.raises(UndefinedGamma):
            gamma(PixelModel(0, 0.0, 100.0, 0.0), calib)
        with pytest.raises(UndefinedGamma):
            gamma(PixelModel(0, 0.0, 0.0, 1.0), calib)


class TestTotalFisher:
    def test_matches_per_pixel_sum(self, meter, calib, rwva76):
        report = total_fisher(rwva76, 1e-3, 1e6, meter, calib)
        pixels = expected_counts(rwva76, 1e-3, 1e6, meter, calib)
        brute = math.fsum(pixel_fisher(outcome_pmf(p, calib)) for p in pixels
                          if p.nbar > 0.0)
        assert report.total == pytest.approx(brute, rel=1e-12)

    def test_ideal_cm_analytic(self, meter):
        # fine ideal strip: F -> eta * nbar_t / sigma^2
        cal = DetectorCalib.ideal(pixel_pitch=meter.sigma / 20.0, n_pixels=240)
        report = total_fisher(CM, 0.0, 1e5, meter, cal)
        assert report.total == pytest.approx(cal.eta * 1e5 / meter.sigma**2,
                                             rel=5e-3)

    def test_csv_shape(self, meter, calib):
        report = total_fisher(CM, 0.0, 1e5, meter, calib)
        rows = list(report.csv_rows())
        assert rows[0].startswith("j,")
        assert len(rows) == 1 + calib.n_pixels


class TestIdealFi:
    def test_cm_limit(self, meter):
        assert fi_q_exact(1.0, 0.0, 0.01, meter) == pytest.approx(
            qfi_cm(meter), rel=1e-9)

    def test_fi_q_quadrature_oracle(self, meter, rwva76):
        # F = P_f(g) * int (dp/dg)^2/p dq with p the normalized pdf, dp by FD
        g, h = 0.01, 1e-6
        q = np.linspace(-10 * meter.sigma, 10 * meter.sigma, 120001)
        p0 = meter_pdf_q(rwva76, g, meter, q)
        dp = (meter_pdf_q(rwva76, g + h, meter, q)
              - meter_pdf_q(rwva76, g - h, meter, q)) / (2 * h)
        mask = p0 > 1e-300
        brute = scheme_pf(rwva76, g, meter) * np.trapezoid(
            dp[mask] ** 2 / p0[mask], q[mask])
        amps = rwva76.amplitudes
        assert fi_q_exact(amps.alpha, amps.beta, g, meter) == pytest.approx(
            brute, rel=1e-6)

    def test_fi_p_quadrature_oracle(self, meter):
        pre = qubit_from_degrees(40.0, 0.0)
        post = qubit_from_degrees(140.0, 120.0)
        scheme = MeasurementScheme("IWVA", pre, post)
        g, h = 0.01, 1e-6
        sp = 1.0 / (2.0 * meter.sigma)
        p = np.linspace(-10 * sp, 10 * sp, 120001)
        p0 = meter_pdf_p(scheme, g, meter, p)
        dp = (meter_pdf_p(scheme, g + h, meter, p)
              - meter_pdf_p(scheme, g - h, meter, p)) / (2 * h)
        mask = p0 > 1e-300
        brute = scheme_pf(scheme, g, meter) * np.trapezoid(
            dp[mask] ** 2 / p0[mask], p[mask])
        amps = scheme.amplitudes
        assert fi_p_exact(amps.alpha, amps.beta, g, meter) == pytest.approx(
            brute, rel=1e-6)


class TestRatioScan:
    def test_rwva_bounded_and_high(self):
        pts = ideal_fi_ratio_scan("RWVA", 0.01, FIGURE_METER, [0.01, 0.2, 1.0])
        for p in pts:
            assert 0.98 < p.ratio <= 1.0 + 1e-9

    def test_iwva_values(self):
        pts = ideal_fi_ratio_scan("IWVA", 0.01, FIGURE_METER, [0.005, 0.5])
        assert pts[0].ratio > pts[1].ratio  # small P_f side carries the gain
        assert all(0.0 < p.ratio <= 1.0 + 1e-9 for p in pts)

    def test_infeasible(self):
        with pytest.raises(InfeasiblePf):
            ideal_fi_ratio_scan("RWVA", 0.01, FIGURE_METER, [0.0])
        with pytest.raises(InfeasiblePf):
            ideal_fi_ratio_scan("IWVA", 0.01, FIGURE_METER, [1.2])

    def test_unknown_kind(self):
        with pytest.raises((ValueError, KeyError)):
            ideal_fi_ratio_scan("XWVA", 0.01, FIGURE_METER, [0.5])
