"""Scenario orchestration: figure-scale datasets built from the lower modules.

Four dataset builders, each returned as an in-memory result object that knows
how to render itself to CSV rows:

* run_precision_sweep   -- bootstrap delta_g vs nbar_t for CM and WVA, with
  CRB and shot-noise-limit reference columns.
* optimize_postselection -- CRB-based delta_g across a candidate P_f set at
  one nbar_t, returning the minimizer and its SNL ratio.
* fisher_ratio_figure   -- ideal-detection max-FI/QFI ratio scans.
* gamma_map_figure      -- per-pixel (x_j, nbar_j, F_j, Gamma_j) maps for two
  schemes side by side.

CSV files carry a manifest hash comment on the first line; the manifest JSON
(inputs, seeds, calib hash, versions) is written next to the CSV so any file
can be traced back to the exact run that produced it.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .detector import DetectorCalib, sample_frames
from .errors import ConfigError
from .estimate import (ComEstimator, MleEstimator, PrecisionPoint, SdEstimator,
                       bootstrap_precision)
from .fisher import FisherReport, FiScanPoint, ideal_fi_ratio_scan, total_fisher
from .qmeter import CM, FIGURE_METER, MeasurementScheme, MeterParams, rwva_scheme

DEFAULT_G_TRUE = 1e-3  # mm; weak (~2.1e-3 sigma) yet resolvable at nu = 300

# theta_i = -theta_f candidates for P_f optimization: the five reference settings
# (84, 76, 63, 45, 0 degrees) plus steeper selections that extend the
# dynamic range past the 100x span target
DEFAULT_PF_THETAS_DEG = (89.0, 88.0, 86.0, 84.0, 76.0, 63.0, 45.0, 0.0)

_ESTIMATOR_KINDS = ("MLE", "SD", "COM")

# default sweep: half-decade steps spanning the dark-noise-limited low
# end (WVA totals still safely above the dark floor) through deep CM saturation
DEFAULT_SWEEP_NBAR_TS = (10**5.5, 1e6, 10**6.5, 1e7, 10**7.5, 1e8)


def snl(nbar_t: float, nu: int, meter: MeterParams, calib: DetectorCalib) -> float:
    """Shot-noise limit sigma / sqrt(nu eta nbar_t)."""
    return meter.sigma / math.sqrt(nu * calib.eta * nbar_t)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def _scheme_label(scheme: MeasurementScheme) -> str:
    if scheme.is_cm:
        return "CM"
    theta_deg = math.degrees(scheme.pre.theta)
    return "%s(%g)" % (scheme.kind, round(theta_deg, 6))


def _job_seed(seed: int, *indices: int) -> int:
    """Deterministic per-job seed derived from the scenario seed."""
    return int(np.random.SeedSequence(entropy=(int(seed),) + tuple(int(i) for i in indices))
               .generate_state(1)[0])


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    """One experiment design: what to simulate, with which protocol sizes."""

    schemes: tuple[MeasurementScheme, ...]
    nbar_ts: tuple[float, ...]
    estimators: tuple[str, ...] = _ESTIMATOR_KINDS
    g_true: float = DEFAULT_G_TRUE
    calib: DetectorCalib = field(default_factory=DetectorCalib)
    meter: MeterParams = field(default_factory=MeterParams)
    nu: int = 300
    pool_size: int = 6000
    resamples: int = 200
    seed: int = 20200828

    def __post_init__(self):
        if not self.schemes:
            raise ConfigError("scenario.schemes: need at least one scheme")
        if not self.nbar_ts:
            raise ConfigError("scenario.nbar_t: need at least one value")
        if any(b <= a for a, b in zip(self.nbar_ts, self.nbar_ts[1:])):
            raise ConfigError("scenario.nbar_t: values must be strictly increasing")
        for e in self.estimators:
            if e not in _ESTIMATOR_KINDS:
                raise ConfigError(f"scenario.estimators: unknown estimator {e!r}")
        if self.pool_size < self.nu:
            raise ConfigError("scenario.pool_size: must be >= scenario.nu")
        if self.resamples < 2:
            raise ConfigError("scenario.resamples: must be >= 2")

    def describe(self) -> dict:
        return {
            "schemes": [s.describe() for s in self.schemes],
            "nbar_ts": list(self.nbar_ts),
            "estimators": list(self.estimators),
            "g_true": self.g_true,
            "calib": self.calib.to_dict(),
            "calib_fingerprint": self.calib.fingerprint,
            "meter": {"sigma": self.meter.sigma, "x0": self.meter.x0},
            "nu": self.nu,
            "pool_size": self.pool_size,
            "resamples": self.resamples,
            "seed": self.seed,
        }


def _make_estimator(kind: str, scheme: MeasurementScheme, nbar_t: float,
                    meter: MeterParams, calib: DetectorCalib):
    if kind == "MLE":
        return MleEstimator(scheme, nbar_t, meter, calib)
    if kind == "SD":
        return SdEstimator(calib=calib, meter=meter)
    return ComEstimator(calib=calib, meter=meter)


# ---------------------------------------------------------------------------
# Precision sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    point: PrecisionPoint
    pf: float         # nominal post-selection probability of the scheme
    crb: float        # mm, 1/sqrt(nu F(g_true))
    snl: float        # mm, sigma/sqrt(nu eta nbar_t)
    seed: int         # pool seed for this (nbar_t, scheme) job


@dataclass(frozen=True)
class SweepResult:
    scenario: Scenario
    rows: tuple[SweepRow, ...]
    reports: dict  # (nbar_t, scheme label) -> FisherReport at g_true

    COLUMNS = ("scheme,estimator,nbar_t,pf,delta_g,delta_g_err,g_mean,"
               "crb,snl,seed,calib")

    def csv_rows(self):
        yield self.COLUMNS
        fp = self.scenario.calib.fingerprint
        for r in self.rows:
            p = r.point
            yield ",".join([
                _scheme_label(p.scheme), p.estimator, _fmt(p.nbar_t), _fmt(r.pf),
                _fmt(p.delta_g), _fmt(p.delta_g_err), _fmt(p.g_mean),
                _fmt(r.crb), _fmt(r.snl), str(r.seed), fp,
            ])


def run_precision_sweep(scenario: Scenario) -> SweepResult:
    """Bootstrap precision of every (nbar_t, scheme, estimator) job."""
    rows = []
    reports = {}
    for i_n, nbar_t in enumerate(scenario.nbar_ts):
        for i_s, scheme in enumerate(scenario.schemes):
            seed = _job_seed(scenario.seed, i_n, i_s)
            pool = sample_frames(scheme, scenario.g_true, nbar_t, scenario.meter,
                                 scenario.calib, seed, scenario.pool_size)
            report = total_fisher(scheme, scenario.g_true, nbar_t,
                                  scenario.meter, scenario.calib)
            reports[(nbar_t, _scheme_label(scheme))] = report
            crb = (1.0 / math.sqrt(scenario.nu * report.total)
                   if report.total > 0.0 else math.inf)
            ref = snl(nbar_t, scenario.nu, scenario.meter, scenario.calib)
            pf = scheme.pf0
            for kind in scenario.estimators:
                est = _make_estimator(kind, scheme, nbar_t, scenario.meter,
                                      scenario.calib)
                point = bootstrap_precision(pool, est, scenario.nu,
                                            scenario.resamples, seed)
                rows.append(SweepRow(point, pf, crb, ref, seed))
    return SweepResult(scenario, tuple(rows), reports)


# ---------------------------------------------------------------------------
# P_f optimization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PfPoint:
    pf: float
    theta_deg: float
    delta_g: float     # mm, CRB at this selection
    snl_ratio: float   # delta_g / SNL


@dataclass(frozen=True)
class PfOptimum:
    nbar_t: float
    best: PfPoint
    curve: tuple[PfPoint, ...]
    calib_fingerprint: str

    COLUMNS = "nbar_t,pf,theta_deg,delta_g,snl_ratio,is_best,calib"

    def csv_rows(self):
        yield self.COLUMNS
        for p in self.curve:
            yield ",".join([
                _fmt(self.nbar_t), _fmt(p.pf), _fmt(p.theta_deg), _fmt(p.delta_g),
                _fmt(p.snl_ratio), str(int(p is self.best)), self.calib_fingerprint,
            ])


def scheme_for_theta(theta_deg: float) -> MeasurementScheme:
    """theta_i = -theta_f selection; theta = 0 degenerates to CM."""
    return CM if theta_deg == 0.0 else rwva_scheme(theta_deg)


def optimize_postselection(nbar_t: float,
                           candidate_thetas_deg=DEFAULT_PF_THETAS_DEG,
                           g_true: float = DEFAULT_G_TRUE,
                           meter: MeterParams | None = None,
                           calib: DetectorCalib | None = None,
                           nu: int = 300) -> PfOptimum:
    """CRB-based delta_g across theta_i = -theta_f selections at one nbar_t.

    Returns the best selection (minimum delta_g) and the whole ratio curve;
    delta_g/SNL per point is the dynamic-range figure of merit for this calibration.
    """
    meter = meter or MeterParams()
    calib = calib or DetectorCalib()
    ref = snl(nbar_t, nu, meter, calib)
    curve = []
    for theta in candidate_thetas_deg:
        scheme = scheme_for_theta(theta)
        report = total_fisher(scheme, g_true, nbar_t, meter, calib)
        dg = 1.0 / math.sqrt(nu * report.total) if report.total > 0.0 else math.inf
        curve.append(PfPoint(scheme.pf0, float(theta), dg, dg / ref))
    best = min(curve, key=lambda p: p.delta_g)
    return PfOptimum(nbar_t, best, tuple(curve), calib.fingerprint)


# ---------------------------------------------------------------------------
# FI-ratio figure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiRatioFigure:
    kind: str
    gs: tuple[float, ...]
    meter: MeterParams
    scans: dict  # g -> tuple[FiScanPoint, ...]

    COLUMNS = "kind,g,pf,ratio,theta_i_deg,param2_deg"

    def csv_rows(self):
        yield self.COLUMNS
        for g in self.gs:
            for p in self.scans[g]:
                yield ",".join([
                    self.kind, _fmt(float(g)), _fmt(p.pf), _fmt(p.ratio),
                    _fmt(math.degrees(p.theta_i)), _fmt(math.degrees(p.param2)),
                ])


def default_pf_grid(kind: str) -> np.ndarray:
    """RWVA: the conventional 1%..100% range; IWVA: log-spaced to cover the peak."""
    if kind == "RWVA":
        return np.linspace(0.01, 1.0, 50)
    return np.geomspace(0.001, 0.99, 50)


def fisher_ratio_figure(kind: str, gs=(0.01,), pf_grid=None,
                        meter: MeterParams = FIGURE_METER) -> FiRatioFigure:
    """Ideal-detection max-FI/QFI ratio scan dataset for one panel."""
    grid = default_pf_grid(kind) if pf_grid is None else np.asarray(pf_grid, dtype=float)
    scans = {g: tuple(ideal_fi_ratio_scan(kind, float(g), meter, grid)) for g in gs}
    return FiRatioFigure(kind, tuple(float(g) for g in gs), meter, scans)


# ---------------------------------------------------------------------------
# Gamma / FI pixel maps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GammaMapFigure:
    reports: tuple[FisherReport, ...]
    schemes: tuple[MeasurementScheme, ...]

    COLUMNS = "scheme,j,x_j,nbar_j,F_j,Gamma_j"

    def csv_rows(self):
        yield self.COLUMNS
        for scheme, rep in zip(self.schemes, self.reports):
            label = _scheme_label(scheme)
            for j in range(len(rep.x)):
                yield "%s,%d,%s,%s,%s,%s" % (
                    label, j, _fmt(float(rep.x[j])), _fmt(float(rep.nbar[j])),
                    _fmt(float(rep.fisher_j[j])), _fmt(float(rep.gamma_j[j])))


def gamma_map_figure(nbar_t: float, schemes=None, g: float = DEFAULT_G_TRUE,
                     meter: MeterParams | None = None,
                     calib: DetectorCalib | None = None) -> GammaMapFigure:
    """Per-pixel FI and Gamma maps for CM and WVA side by side."""
    meter = meter or MeterParams()
    calib = calib or DetectorCalib()
    if schemes is None:
        schemes = (CM, rwva_scheme(76.0))
    reports = tuple(total_fisher(s, g, nbar_t, meter, calib) for s in schemes)
    return GammaMapFigure(reports, tuple(schemes))


# ---------------------------------------------------------------------------
# Manifest + CSV writing
# ---------------------------------------------------------------------------

def make_manifest(operation: str, params: dict) -> dict:
    """Canonical description of a run; its hash is embedded in every output."""
    manifest = {
        "operation": operation,
        "params": params,
        "versions": {"wvamp": __version__},
    }
    manifest["hash"] = manifest_hash(manifest)
    return manifest


def manifest_hash(manifest: dict) -> str:
    body = {k: v for k, v in manifest.items() if k != "hash"}
    blob = json.dumps(body, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_dataset(csv_path, rows, manifest: dict) -> None:
    """Write CSV rows with the manifest hash comment, plus the manifest JSON."""
    csv_path = str(csv_path)
    lines = ["# manifest %s" % manifest["hash"]]
    lines.extend(rows)
    with open(csv_path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(csv_path + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
