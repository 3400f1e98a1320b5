import math

import numpy as np
import pytest
from scipy.special import ndtr

from wvamp import (CM, ConfigError, DetectorCalib, classical_noise_sigma,
                   expected_arrays, frames_to_csv, load_frames, meter_pdf_q,
                   pixel_centers, response_pmf, rwva_scheme, sample_frame,
                   sample_frames, save_frames, scheme_pf)


class TestExpectedArrays:
    def test_total_flux_conserved_cm(self, meter, calib):
        _, nbar, _ = expected_arrays(CM, 1e-3, 1e6, meter, calib)
        # the strip covers +-2.1 mm ~ 4.5 sigma; compare to the covered mass
        x = pixel_centers(calib, meter)
        half = calib.pixel_pitch / 2.0
        lo, hi = x[0] - half, x[-1] + half
        s = meter.sigma
        mass = ndtr((hi - 1e-3) / s) - ndtr((lo - 1e-3) / s)
        assert nbar.sum() == pytest.approx(1e6 * mass, rel=1e-12)

    def test_wva_flux_is_postselected(self, meter, calib, rwva76):
        g = 1e-3
        _, nbar, _ = expected_arrays(rwva76, g, 1e7, meter, calib)
        assert nbar.sum() == pytest.approx(1e7 * scheme_pf(rwva76, g, meter),
                                           rel=1e-4)  # finite strip coverage

    def test_bin_quadrature_oracle(self, meter, calib, rwva76):
        # nbar_j is nbar_t * P_f * integral of the normalized pdf over the bin
        g = 0.02
        x, nbar, _ = expected_arrays(rwva76, g, 1e5, meter, calib)
        pf = scheme_pf(rwva76, g, meter)
        half = calib.pixel_pitch / 2.0
        for j in (100, 164, 165, 220):
            q = np.linspace(x[j] - half, x[j] + half, 2001)
            mass = np.trapezoid(meter_pdf_q(rwva76, g, meter, q), q)
            assert nbar[j] == pytest.approx(1e5 * pf * mass, rel=1e-8)

    def test_dnbar_finite_difference(self, meter, calib, rwva76):
        g, h = 1e-3, 1e-7
        _, _, dn = expected_arrays(rwva76, g, 1e7, meter, calib)
        _, np_, _ = expected_arrays(rwva76, g + h, 1e7, meter, calib)
        _, nm_, _ = expected_arrays(rwva76, g - h, 1e7, meter, calib)
        fd = (np_ - nm_) / (2 * h)
        scale = np.max(np.abs(dn))
        assert np.max(np.abs(fd - dn)) / scale < 1e-5

    def test_negative_flux_rejected(self, meter, calib):
        with pytest.raises(ValueError):
            expected_arrays(CM, 0.0, -1.0, meter, calib)


class TestNoiseModel:
    def test_classical_noise_formula(self, calib):
        for nbar in (10.0, 1e3, 1e6):
            assert classical_noise_sigma(nbar, calib) == pytest.approx(
                math.exp(0.5 * (calib.a * math.log(nbar) + calib.b)), rel=1e-12)
        assert classical_noise_sigma(0.0, calib) == 0.0

    def test_response_pmf_normalized(self, calib):
        for N in (0, 50, 5000):
            pmf = response_pmf(N, 1e4, calib)
            assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
            assert np.all(pmf >= 0.0)

    def test_response_pmf_saturates(self, calib):
        pmf = response_pmf(10 * calib.k_s, 1e4, calib)
        assert pmf[calib.k_s] == pytest.approx(1.0, abs=1e-9)


class TestSampling:
    def test_moments_match_model(self, meter, small_calib, rwva76):
        nbar_t, g = 1e7, 1e-3
        frames = sample_frames(rwva76, g, nbar_t, meter, small_calib, seed=99,
                               n_frames=4000)
        _, nbar, _ = expected_arrays(rwva76, g, nbar_t, meter, small_calib)
        c = small_calib
        mean_model = c.gain * c.eta * nbar + c.mu_d
        var_model = (c.gain**2 * c.eta * nbar + c.sigma_d**2
                     + classical_noise_sigma(nbar, c) ** 2)
        mean = frames.readouts.mean(axis=0)
        var = frames.readouts.var(axis=0, ddof=1)
        n = frames.n_frames
        # 5-sigma z-test per pixel (rounding adds ~1/12 to the variance)
        z_mean = (mean - mean_model) / np.sqrt((var_model + 1 / 12) / n)
        assert np.max(np.abs(z_mean)) < 5.0
        z_var = (var - var_model - 1 / 12) / (var_model * math.sqrt(2.0 / (n - 1)))
        assert np.max(np.abs(z_var)) < 6.0

    def test_dark_frames(self, meter, small_calib):
        frames = sample_frames(CM, 0.0, 0.0, meter, small_calib, seed=5, n_frames=500)
        mean = frames.readouts.mean()
        se = small_calib.sigma_d / math.sqrt(frames.readouts.size)
        assert abs(mean - small_calib.mu_d) < 6 * se

    def test_saturation_clips(self, meter, small_calib):
        frames = sample_frames(CM, 0.0, 1e12, meter, small_calib, seed=5, n_frames=3)
        center = small_calib.n_pixels // 2
        assert np.all(frames.readouts[:, center] == small_calib.k_s)
        assert frames.readouts.max() == small_calib.k_s

    def test_reproducible_and_frame_indexed(self, meter, small_calib):
        a = sample_frames(CM, 0.0, 1e5, meter, small_calib, seed=11, n_frames=4)
        b = sample_frames(CM, 0.0, 1e5, meter, small_calib, seed=11, n_frames=4)
        assert np.array_equal(a.readouts, b.readouts)
        one = sample_frame(CM, 0.0, 1e5, meter, small_calib, seed=11, frame_index=2)
        assert np.array_equal(one.readouts, a.readouts[2])
        c = sample_frames(CM, 0.0, 1e5, meter, small_calib, seed=12, n_frames=4)
        assert not np.array_equal(a.readouts, c.readouts)


class TestContainer:
    def test_roundtrip(self, tmp_path, meter, small_calib, rwva76):
        frames = sample_frames(rwva76, 1e-3, 1e6, meter, small_calib, seed=3,
                               n_frames=17)
        path = tmp_path / "pool.wvaf"
        save_frames(path, frames)
        back = load_frames(path)
        assert np.array_equal(back.readouts, frames.readouts)
        assert back.scheme.kind == "RWVA"
        assert back.scheme.pf0 == pytest.approx(frames.scheme.pf0, rel=1e-12)
        assert back.g == frames.g
        assert back.nbar_t == frames.nbar_t
        assert back.seed == frames.seed
        assert back.calib == frames.calib
        assert back.meter == frames.meter

    def test_corrupt_magic(self, tmp_path):
        path = tmp_path / "bad.wvaf"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ConfigError):
            load_frames(path)

    def test_truncated_payload(self, tmp_path, meter, small_calib):
        frames = sample_frames(CM, 0.0, 1e5, meter, small_calib, seed=3, n_frames=5)
        path = tmp_path / "pool.wvaf"
        save_frames(path, frames)
        data = path.read_bytes()
        path.write_bytes(data[:-10])
        with pytest.raises(ConfigError):
            load_frames(path)

    def test_subset(self, meter, small_calib):
        frames = sample_frames(CM, 0.0, 1e5, meter, small_calib, seed=3, n_frames=10)
        sub = frames.subset([2, 5, 5])
        assert sub.n_frames == 3
        assert np.array_equal(sub.readouts[1], frames.readouts[5])

    def test_csv_export(self, tmp_path, meter, small_calib):
        frames = sample_frames(CM, 0.0, 1e5, meter, small_calib, seed=3, n_frames=4)
        path = tmp_path / "frames.csv"
        frames_to_csv(path, frames)
        lines = path.read_text().strip().splitlines()
        data = [ln for ln in lines if not ln.startswith("#")]
        assert len(data) == 1 + 4  # header row + one row per frame
        assert len(data[1].split(",")) == small_calib.n_pixels


class TestCalib:
    def test_fingerprint_sensitivity(self, calib):
        assert calib.fingerprint != calib.with_overrides(eta=0.25).fingerprint
        assert calib.fingerprint == DetectorCalib().fingerprint

    def test_dict_roundtrip(self, calib):
        assert DetectorCalib.from_dict(calib.to_dict()) == calib
        ideal = DetectorCalib.ideal()
        assert DetectorCalib.from_dict(ideal.to_dict()) == ideal

    def test_validation(self):
        with pytest.raises(ValueError):
            DetectorCalib(eta=0.0)
        with pytest.raises(ValueError):
            DetectorCalib(pixel_pitch=-1.0)
