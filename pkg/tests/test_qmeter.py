import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wvamp import (CM, MeasurementScheme, MeterParams, OrthogonalSelection,
                   meter_pdf_p, meter_pdf_q, postselection_probability,
                   qubit_from_degrees, rwva_scheme, scheme_pf, selection_pair,
                   weak_value)
from wvamp.qmeter import (mean_shift_p_first_order, mean_shift_q_first_order,
                          superposition_amplitudes)

SETTINGS_TABLE = [  # (theta_i_deg, nominal P_f)
    (84.0, 0.0109),
    (76.0, 0.0585),
    (63.0, 0.206),
    (45.0, 0.5),
]


def _round_sig(x, n=3):
    if x == 0.0:
        return 0.0
    return round(x, n - 1 - int(math.floor(math.log10(abs(x)))))


class TestSelectionAlgebra:
    @pytest.mark.parametrize("theta,pf", SETTINGS_TABLE)
    def test_pf_table(self, theta, pf):
        assert _round_sig(rwva_scheme(theta).pf0) == pf

    def test_cm_limit(self):
        assert CM.pf0 == 1.0
        assert CM.weak_value == 1.0

    def test_weak_value_76(self):
        assert _round_sig(rwva_scheme(76.0).weak_value.real) == 4.13

    def test_weak_value_closed_form(self):
        # theta_i = -theta_f gives A_w = 1/cos(theta_i)
        for theta, _ in SETTINGS_TABLE:
            aw = rwva_scheme(theta).weak_value
            assert aw.imag == pytest.approx(0.0, abs=1e-14)
            assert aw.real == pytest.approx(1.0 / math.cos(math.radians(theta)),
                                            rel=1e-12)

    def test_weak_value_matrix_oracle(self):
        # A_w = <f|sigma_z|i> / <f|i> with explicit 2-spinors
        pre = qubit_from_degrees(40.0, 25.0)
        post = qubit_from_degrees(110.0, -70.0)
        vi = np.array(pre.amplitudes)
        vf = np.array(post.amplitudes)
        sz = np.diag([1.0, -1.0])
        expect = (vf.conj() @ sz @ vi) / (vf.conj() @ vi)
        assert weak_value(pre, post) == pytest.approx(complex(expect), rel=1e-12)

    def test_selection_pair_convention(self):
        pre, post = selection_pair(76.0)
        amps = superposition_amplitudes(pre, post)
        assert abs(amps.overlap) ** 2 == pytest.approx(math.cos(math.radians(76.0)) ** 2,
                                                       rel=1e-12)


class TestMeterDensities:
    def _quad(self, y, x):
        return float(np.trapezoid(y, x))

    def test_pdf_q_normalized(self, meter):
        q = np.linspace(-8 * meter.sigma, 8 * meter.sigma, 40001)
        for scheme in (CM, rwva_scheme(76.0), rwva_scheme(84.0)):
            pdf = meter_pdf_q(scheme, 0.02, meter, q)
            assert np.all(pdf >= 0.0)
            assert self._quad(pdf, q) == pytest.approx(1.0, abs=1e-9)

    def test_pdf_p_normalized(self, meter):
        sp = 1.0 / (2.0 * meter.sigma)
        p = np.linspace(-8 * sp, 8 * sp, 40001)
        for scheme in (CM, rwva_scheme(63.0)):
            pdf = meter_pdf_p(scheme, 0.02, meter, p)
            assert np.all(pdf >= 0.0)
            assert self._quad(pdf, p) == pytest.approx(1.0, abs=1e-9)

    def test_pf_quadrature_oracle(self, meter):
        # P_f(g) equals the norm of the unnormalized post-selected wave packet
        scheme = rwva_scheme(76.0)
        g = 0.05
        q = np.linspace(-8 * meter.sigma, 8 * meter.sigma, 40001)
        a, b = scheme.amplitudes.alpha, scheme.amplitudes.beta
        s = meter.sigma
        phi = lambda x: (2 * math.pi * s * s) ** (-0.25) * np.exp(-x * x / (4 * s * s))
        amp = a * phi(q - g) + b * phi(q + g)
        norm = self._quad(np.abs(amp) ** 2, q)
        assert scheme_pf(scheme, g, meter) == pytest.approx(norm, rel=1e-10)
        assert postselection_probability(scheme.pre, scheme.post, g, meter) == \
            pytest.approx(norm, rel=1e-10)

    def test_mean_shift_amplification(self, meter):
        scheme = rwva_scheme(76.0)
        g = 1e-4
        q = np.linspace(-8 * meter.sigma, 8 * meter.sigma, 80001)
        pdf = meter_pdf_q(scheme, g, meter, q)
        mean = self._quad(q * pdf, q)
        assert mean == pytest.approx(mean_shift_q_first_order(scheme, g), rel=1e-3)

    def test_mean_shift_p_imaginary(self, meter):
        # phi = 90 deg on the post-selection puts phase in the overlap
        pre = qubit_from_degrees(30.0, 0.0)
        post = qubit_from_degrees(150.0, 90.0)
        scheme = MeasurementScheme("IWVA", pre, post)
        assert abs(scheme.weak_value.real) < 1e-12
        g = 1e-4
        sp = 1.0 / (2.0 * meter.sigma)
        p = np.linspace(-8 * sp, 8 * sp, 80001)
        pdf = meter_pdf_p(scheme, g, meter, p)
        mean = self._quad(p * pdf, p)
        assert mean == pytest.approx(mean_shift_p_first_order(scheme, g, meter),
                                     rel=1e-3)

    def test_orthogonal_selection_raises(self, meter):
        with pytest.raises(OrthogonalSelection):
            meter_pdf_q(rwva_scheme(90.0), 0.0, meter, np.array([0.0]))


@settings(max_examples=40, deadline=None)
@given(theta=st.floats(1.0, 85.0), g=st.floats(-0.1, 0.1))
def test_pdf_properties(theta, g):
    meter = MeterParams()
    scheme = rwva_scheme(theta)
    q = np.linspace(-9 * meter.sigma, 9 * meter.sigma, 8001)
    pdf = meter_pdf_q(scheme, g, meter, q)
    assert np.all(pdf >= 0.0)
    assert float(np.trapezoid(pdf, q)) == pytest.approx(1.0, abs=1e-6)
    pf = scheme_pf(scheme, g, meter)
    assert 0.0 < pf <= 1.0
