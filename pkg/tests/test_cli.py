import json

import numpy as np
import pytest

from wvamp import load_frames
from wvamp.cli import main


@pytest.fixture(autouse=True)
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv("WVAMP_OUTDIR", str(tmp_path))
    return tmp_path


def _data_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# manifest ")
    return lines[1:]


class TestFisherScan:
    def test_ratio_scan_csv(self, outdir):
        assert main(["fisher-scan", "--kind", "rwva", "--g", "0.01",
                     "--pf", "0.2:0.8:3"]) == 0
        rows = _data_rows(outdir / "fisher_ratio_rwva.csv")
        assert rows[0] == "kind,g,pf,ratio,theta_i_deg,param2_deg"
        assert len(rows) == 1 + 3
        assert all(0.9 < float(r.split(",")[3]) <= 1.0 + 1e-9 for r in rows[1:])

    def test_detector_report(self, outdir):
        assert main(["fisher-scan", "--nbar-t", "1e6", "--schemes", "cm",
                     "--tau", "41"]) == 0
        rows = _data_rows(outdir / "fisher_report.csv")
        assert len(rows) == 1 + 41

    def test_ideal_detector_gamma_one(self, outdir):
        assert main(["fisher-scan", "--nbar-t", "1e6", "--schemes", "cm",
                     "--tau", "41", "--ideal-detector"]) == 0
        rows = _data_rows(outdir / "fisher_report.csv")
        gammas = [float(r.split(",")[-1]) for r in rows[1:]]
        finite = [g for g in gammas if not np.isnan(g)]
        assert finite and all(abs(g - 1.0) < 1e-6 for g in finite)

    def test_needs_mode(self):
        assert main(["fisher-scan"]) == 2

    def test_bad_kind(self):
        assert main(["fisher-scan", "--kind", "xwva"]) == 2


class TestSimulateEstimate:
    def test_pipeline(self, outdir):
        pool = outdir / "pool.wvaf"
        assert main(["simulate", "--scheme", "rwva", "--theta", "76",
                     "--g", "1e-3", "--nbar-t", "1e7", "--frames", "200",
                     "--tau", "101", "--seed", "5", "--out", str(pool)]) == 0
        frames = load_frames(pool)
        assert frames.n_frames == 200
        assert frames.scheme.kind == "RWVA"
        assert main(["estimate", "--frames", str(pool), "--estimator", "sd,com",
                     "--nu", "80", "--resamples", "25"]) == 0
        rows = _data_rows(outdir / "precision.csv")
        assert rows[0] == "scheme,estimator,nbar_t,pf,delta_g,delta_g_err,seed,calib"
        assert len(rows) == 3
        assert rows[1].startswith("RWVA(76),SD,")
        assert float(rows[1].split(",")[4]) > 0.0

    def test_simulate_reproducible(self, outdir):
        args = ["simulate", "--scheme", "cm", "--nbar-t", "1e5", "--frames", "6",
                "--tau", "41", "--seed", "9", "--out", str(outdir / "p.wvaf")]
        assert main(args) == 0
        first = (outdir / "p.wvaf").read_bytes()
        assert main(args) == 0
        assert (outdir / "p.wvaf").read_bytes() == first

    def test_dark_pool(self, outdir):
        pool = outdir / "dark.wvaf"
        assert main(["simulate", "--nbar-t", "0", "--frames", "5",
                     "--tau", "41", "--out", str(pool)]) == 0
        frames = load_frames(pool)
        assert frames.nbar_t == 0.0
        assert abs(frames.readouts.mean() - frames.calib.mu_d) < 5.0

    def test_corrupt_container(self, outdir):
        bad = outdir / "bad.wvaf"
        bad.write_bytes(b"JUNKJUNKJUNK")
        assert main(["estimate", "--frames", str(bad)]) == 2

    def test_missing_frames_flag(self):
        assert main(["estimate"]) == 2


class TestSweep:
    ARGS = ["sweep", "--nbar-t", "1e6,1e7", "--schemes", "cm",
            "--estimators", "com", "--tau", "101", "--pool-size", "150",
            "--nu", "50", "--resamples", "10"]

    def test_runs_and_reruns_identically(self, outdir):
        out = str(outdir / "sweep.csv")
        assert main(self.ARGS + ["--out", out]) == 0
        first = (outdir / "sweep.csv").read_bytes()
        manifest = (outdir / "sweep.csv.manifest.json").read_bytes()
        assert main(self.ARGS + ["--out", out]) == 0
        assert (outdir / "sweep.csv").read_bytes() == first
        assert (outdir / "sweep.csv.manifest.json").read_bytes() == manifest

    def test_empty_nbar_list(self):
        assert main(["sweep", "--nbar-t", ""]) == 2

    def test_decreasing_nbar_list(self):
        assert main(["sweep", "--nbar-t", "1e7,1e6"]) == 2

    def test_bad_scheme_name(self):
        assert main(["sweep", "--nbar-t", "1e6", "--schemes", "qm"]) == 2

    def test_threads_flag_accepted(self, outdir):
        assert main(self.ARGS[:5] + ["--estimators", "com", "--tau", "101",
                                     "--pool-size", "150", "--nu", "50",
                                     "--resamples", "10", "--threads", "1"]) == 0


class TestConfigFile:
    def test_missing_config_names_path(self, capsys):
        assert main(["sweep", "--config", "/no/such/file.toml"]) == 2
        assert "/no/such/file.toml" in capsys.readouterr().err

    def test_unknown_field_names_key(self, outdir, capsys):
        cfg = outdir / "bad.toml"
        cfg.write_text("[calib]\nquantum_eff = 0.5\n")
        assert main(["sweep", "--config", str(cfg)]) == 2
        assert "calib.quantum_eff" in capsys.readouterr().err

    def test_invalid_toml(self, outdir):
        cfg = outdir / "broken.toml"
        cfg.write_text("[calib\neta = ")
        assert main(["sweep", "--config", str(cfg)]) == 2

    def test_flag_overrides_config(self, outdir):
        cfg = outdir / "cfg.toml"
        cfg.write_text(
            "[calib]\neta = 0.25\n"
            "[scenario]\nnbar_t = \"1e6\"\nschemes = \"cm\"\n"
            "estimators = \"com\"\nnu = 50\npool_size = 120\nresamples = 8\n")
        out = str(outdir / "s.csv")
        assert main(["sweep", "--config", str(cfg), "--eta", "0.5",
                     "--tau", "101", "--out", out]) == 0
        manifest = json.loads((outdir / "s.csv.manifest.json").read_text())
        params = manifest["params"]
        assert params["config"]["calib"]["eta"] == 0.25
        assert params["flags"]["eta"] == 0.5
        assert params["resolved"]["calib"]["eta"] == 0.5


class TestGammaMap:
    def test_writes_both_schemes(self, outdir):
        assert main(["gamma-map", "--nbar-t", "1e6", "--tau", "61"]) == 0
        rows = _data_rows(outdir / "gamma_map.csv")
        assert len(rows) == 1 + 2 * 61
        labels = {r.split(",")[0] for r in rows[1:]}
        assert labels == {"CM", "RWVA(76)"}

    def test_requires_nbar(self):
        assert main(["gamma-map"]) == 2


class TestOptimizePf:
    def test_multi_flux_curve(self, outdir):
        assert main(["optimize-pf", "--nbar-t", "1e6,1e8",
                     "--thetas", "0,76,84"]) == 0
        rows = _data_rows(outdir / "optimize_pf.csv")
        assert rows[0] == "nbar_t,pf,theta_deg,delta_g,snl_ratio,is_best,calib"
        assert len(rows) == 1 + 2 * 3
        best = [r for r in rows[1:] if r.split(",")[5] == "1"]
        assert len(best) == 2

    def test_requires_nbar(self):
        assert main(["optimize-pf"]) == 2
