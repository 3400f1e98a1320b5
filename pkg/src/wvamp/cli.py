"""Command-line front end.

Subcommands: fisher-scan, simulate, estimate, sweep, optimize-pf, gamma-map.
Exit codes: 0 success, 1 numeric failure, 2 configuration/validation failure.

Every option has a config-file equivalent (TOML, sections [calib], [meter],
[scenario]); a flag overrides the config value and both are recorded in the
output manifest.  The default output directory is $WVAMP_OUTDIR (else the
current directory).  The default seed is the fixed constant 20200828 so runs
are reproducible out of the box.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - version-dependent import
    import tomli as tomllib

from .detector import DetectorCalib, load_frames, sample_frames, save_frames
from .errors import ConfigError, WvampError
from .estimate import bootstrap_precision
from .experiments import (DEFAULT_G_TRUE, DEFAULT_PF_THETAS_DEG,
                          DEFAULT_SWEEP_NBAR_TS, Scenario, _make_estimator,
                          fisher_ratio_figure, gamma_map_figure, make_manifest,
                          optimize_postselection, run_precision_sweep,
                          scheme_for_theta, write_dataset, _fmt, _scheme_label)
from .fisher import total_fisher
from .qmeter import CM, FIGURE_METER, MeterParams, rwva_scheme

DEFAULT_SEED = 20200828

_CALIB_FLAGS = {  # flag dest -> DetectorCalib field
    "eta": "eta", "mu_d": "mu_d", "sigma_d": "sigma_d",
    "noise_a": "a", "noise_b": "b", "k_s": "k_s",
    "gain": "gain", "pitch": "pixel_pitch", "tau": "n_pixels",
}
_CALIB_FIELDS = ("eta", "mu_d", "sigma_d", "a", "b", "k_s", "gain",
                 "pixel_pitch", "n_pixels")
_SCENARIO_KEYS = ("nbar_t", "schemes", "estimators", "g_true", "theta",
                  "nu", "pool_size", "resamples", "seed")


# ---------------------------------------------------------------------------
# config loading / merging
# ---------------------------------------------------------------------------

def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        try:
            cfg = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from exc
    for section in cfg:
        if section not in ("calib", "meter", "scenario"):
            raise ConfigError(f"{section}: unknown config section")
    return cfg


def _build_calib(cfg: dict, args) -> DetectorCalib:
    fields = {}
    for key, val in cfg.get("calib", {}).items():
        if key not in _CALIB_FIELDS:
            raise ConfigError(f"calib.{key}: unknown field")
        fields[key] = val
    for dest, field in _CALIB_FLAGS.items():
        val = getattr(args, dest, None)
        if val is not None:
            fields[field] = val
    if "b" in fields and fields["b"] == "-inf":
        fields["b"] = -math.inf
    if getattr(args, "ideal_detector", False):
        return DetectorCalib.ideal(**{k: v for k, v in fields.items()
                                      if k in ("eta", "pixel_pitch", "n_pixels", "k_s")})
    try:
        return DetectorCalib(**fields)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"calib: {exc}") from exc


def _build_meter(cfg: dict, args) -> MeterParams:
    fields = {}
    for key, val in cfg.get("meter", {}).items():
        if key not in ("sigma", "x0"):
            raise ConfigError(f"meter.{key}: unknown field")
        fields[key] = val
    if getattr(args, "sigma", None) is not None:
        fields["sigma"] = args.sigma
    if getattr(args, "x0", None) is not None:
        fields["x0"] = args.x0
    try:
        return MeterParams(**fields)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"meter: {exc}") from exc


def _scenario_value(cfg: dict, args, key, default):
    val = getattr(args, key, None)
    if val is not None:
        return val
    sec = cfg.get("scenario", {})
    for k in sec:
        if k not in _SCENARIO_KEYS:
            raise ConfigError(f"scenario.{k}: unknown field")
    return sec.get(key, default)


def _parse_values(spec, key: str) -> tuple[float, ...]:
    """Comma list ('1e5,1e6') or range 'start:stop:count[:lin|:log]'."""
    if isinstance(spec, (list, tuple)):
        return tuple(float(v) for v in spec)
    text = str(spec)
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) not in (3, 4):
                raise ValueError("range needs start:stop:count[:lin|:log]")
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
            mode = parts[3] if len(parts) == 4 else "lin"
            if mode == "lin":
                return tuple(np.linspace(start, stop, count))
            if mode == "log":
                return tuple(np.geomspace(start, stop, count))
            raise ValueError(f"unknown range mode {mode!r}")
        return tuple(float(v) for v in text.split(",") if v != "")
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _parse_schemes(spec, theta: float) -> tuple:
    names = [s.strip().lower() for s in
             (spec if isinstance(spec, (list, tuple)) else str(spec).split(","))]
    schemes = []
    for name in names:
        if name == "cm":
            schemes.append(CM)
        elif name == "rwva":
            schemes.append(rwva_scheme(theta))
        else:
            raise ConfigError(f"schemes: unknown scheme {name!r} (use cm, rwva)")
    if not schemes:
        raise ConfigError("schemes: empty list")
    return tuple(schemes)


def _parse_estimators(spec) -> tuple[str, ...]:
    names = [s.strip().upper() for s in
             (spec if isinstance(spec, (list, tuple)) else str(spec).split(","))]
    for n in names:
        if n not in ("MLE", "SD", "COM"):
            raise ConfigError(f"estimators: unknown estimator {n!r}")
    if not names:
        raise ConfigError("estimators: empty list")
    return tuple(names)


def _outpath(args, default_name: str) -> str:
    if getattr(args, "out", None):
        return args.out
    outdir = os.environ.get("WVAMP_OUTDIR", ".")
    return os.path.join(outdir, default_name)


def _flags_dict(args) -> dict:
    skip = {"func", "config"}
    return {k: v for k, v in vars(args).items()
            if v is not None and v is not False and k not in skip}


def _manifest(operation: str, args, cfg: dict, resolved: dict) -> dict:
    return make_manifest(operation, {
        "config": cfg, "flags": _flags_dict(args), "resolved": resolved,
    })


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_fisher_scan(args) -> int:
    cfg = _load_config(args.config)
    meter = _build_meter(cfg, args)
    calib = _build_calib(cfg, args)
    if args.kind is not None:
        # the ratio scan is an ideal-detection panel; unless a meter is given
        # explicitly, use its conventional normalization 2 sigma = 1
        if "meter" not in cfg and args.sigma is None and args.x0 is None:
            meter = FIGURE_METER
        kind = args.kind.upper()
        if kind not in ("RWVA", "IWVA"):
            raise ConfigError(f"kind: must be rwva or iwva, got {args.kind!r}")
        pf_grid = _parse_values(args.pf, "pf") if args.pf else None
        g = args.g if args.g is not None else 0.01
        fig = fisher_ratio_figure(kind, gs=(g,), pf_grid=pf_grid, meter=meter)
        path = _outpath(args, f"fisher_ratio_{kind.lower()}.csv")
        manifest = _manifest("fisher-scan", args, cfg, {
            "mode": "ratio-scan", "kind": kind, "g": g,
            "pf_grid": [float(q.pf) for q in fig.scans[g]],
            "meter": {"sigma": meter.sigma, "x0": meter.x0},
        })
        write_dataset(path, fig.csv_rows(), manifest)
        print(path)
        return 0
    if args.nbar_t is None:
        raise ConfigError("fisher-scan: need either --kind (ratio scan) or "
                          "--nbar-t (detector FI report)")
    nbar_t = float(_parse_values(args.nbar_t, "nbar_t")[0])
    scheme = _parse_schemes(args.schemes or "cm", args.theta or 76.0)[0]
    g = args.g if args.g is not None else DEFAULT_G_TRUE
    report = total_fisher(scheme, g, nbar_t, meter, calib)
    path = _outpath(args, "fisher_report.csv")
    manifest = _manifest("fisher-scan", args, cfg, {
        "mode": "detector-report", "scheme": scheme.describe(), "g": g,
        "nbar_t": nbar_t, "calib": calib.to_dict(),
        "calib_fingerprint": calib.fingerprint,
        "meter": {"sigma": meter.sigma, "x0": meter.x0},
    })
    write_dataset(path, report.csv_rows(), manifest)
    print(path)
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    meter = _build_meter(cfg, args)
    calib = _build_calib(cfg, args)
    theta = args.theta if args.theta is not None else 76.0
    scheme = _parse_schemes(args.scheme or "rwva", theta)[0]
    g = args.g if args.g is not None else DEFAULT_G_TRUE
    nbar_t = float(_parse_values(args.nbar_t if args.nbar_t is not None else 1e7,
                                 "nbar_t")[0])
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    n_frames = args.frames if args.frames is not None else 6000
    frames = sample_frames(scheme, g, nbar_t, meter, calib, seed, n_frames)
    path = _outpath(args, "frames.wvaf")
    save_frames(path, frames)
    manifest = _manifest("simulate", args, cfg, {
        "scheme": scheme.describe(), "g": g, "nbar_t": nbar_t, "seed": seed,
        "n_frames": n_frames, "calib": calib.to_dict(),
        "calib_fingerprint": calib.fingerprint,
        "meter": {"sigma": meter.sigma, "x0": meter.x0},
    })
    import json
    with open(path + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(path)
    return 0


def cmd_estimate(args) -> int:
    cfg = _load_config(args.config)
    if args.frames is None:
        raise ConfigError("estimate: --frames <container> is required")
    pool = load_frames(args.frames)
    estimators = _parse_estimators(args.estimator or "mle,sd,com")
    nu = args.nu if args.nu is not None else 300
    resamples = args.resamples if args.resamples is not None else 200
    seed = args.seed if args.seed is not None else DEFAULT_SEED
    rows = ["scheme,estimator,nbar_t,pf,delta_g,delta_g_err,seed,calib"]
    for kind in estimators:
        est = _make_estimator(kind, pool.scheme, pool.nbar_t, pool.meter, pool.calib)
        point = bootstrap_precision(pool, est, nu, resamples, seed)
        rows.append(",".join([
            _scheme_label(pool.scheme), kind, _fmt(pool.nbar_t),
            _fmt(pool.scheme.pf0), _fmt(point.delta_g), _fmt(point.delta_g_err),
            str(seed), pool.calib.fingerprint,
        ]))
    path = _outpath(args, "precision.csv")
    manifest = _manifest("estimate", args, cfg, {
        "frames": os.path.basename(args.frames), "estimators": list(estimators),
        "nu": nu, "resamples": resamples, "seed": seed,
        "scheme": pool.scheme.describe(), "nbar_t": pool.nbar_t,
        "calib_fingerprint": pool.calib.fingerprint,
    })
    write_dataset(path, rows, manifest)
    print(path)
    return 0


def _scenario_from(cfg: dict, args) -> Scenario:
    theta = _scenario_value(cfg, args, "theta", 76.0)
    nbar_spec = _scenario_value(cfg, args, "nbar_t", None)
    nbar_ts = (DEFAULT_SWEEP_NBAR_TS if nbar_spec is None
               else _parse_values(nbar_spec, "nbar_t"))
    if not nbar_ts:
        raise ConfigError("nbar_t: empty list")
    return Scenario(
        schemes=_parse_schemes(_scenario_value(cfg, args, "schemes", "cm,rwva"), theta),
        nbar_ts=tuple(nbar_ts),
        estimators=_parse_estimators(_scenario_value(cfg, args, "estimators",
                                                     "mle,sd,com")),
        g_true=float(_scenario_value(cfg, args, "g_true", DEFAULT_G_TRUE)),
        calib=_build_calib(cfg, args),
        meter=_build_meter(cfg, args),
        nu=int(_scenario_value(cfg, args, "nu", 300)),
        pool_size=int(_scenario_value(cfg, args, "pool_size", 6000)),
        resamples=int(_scenario_value(cfg, args, "resamples", 200)),
        seed=int(_scenario_value(cfg, args, "seed", DEFAULT_SEED)),
    )


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    scenario = _scenario_from(cfg, args)
    result = run_precision_sweep(scenario)
    path = _outpath(args, "sweep.csv")
    manifest = _manifest("sweep", args, cfg, scenario.describe())
    write_dataset(path, result.csv_rows(), manifest)
    print(path)
    return 0


def cmd_optimize_pf(args) -> int:
    cfg = _load_config(args.config)
    meter = _build_meter(cfg, args)
    calib = _build_calib(cfg, args)
    nbar_spec = _scenario_value(cfg, args, "nbar_t", None)
    if nbar_spec is None:
        raise ConfigError("optimize-pf: --nbar-t is required")
    nbar_ts = _parse_values(nbar_spec, "nbar_t")
    if not nbar_ts:
        raise ConfigError("nbar_t: empty list")
    thetas = (tuple(_parse_values(args.thetas, "thetas")) if args.thetas
              else DEFAULT_PF_THETAS_DEG)
    g = args.g if args.g is not None else DEFAULT_G_TRUE
    nu = args.nu if args.nu is not None else 300
    rows = None
    out_rows = []
    for nt in nbar_ts:
        opt = optimize_postselection(float(nt), thetas, g, meter, calib, nu)
        gen = opt.csv_rows()
        header = next(gen)
        if rows is None:
            rows = [header]
        out_rows.extend(gen)
    rows.extend(out_rows)
    path = _outpath(args, "optimize_pf.csv")
    manifest = _manifest("optimize-pf", args, cfg, {
        "nbar_ts": [float(v) for v in nbar_ts], "thetas_deg": list(thetas),
        "g_true": g, "nu": nu, "calib": calib.to_dict(),
        "calib_fingerprint": calib.fingerprint,
        "meter": {"sigma": meter.sigma, "x0": meter.x0},
    })
    write_dataset(path, rows, manifest)
    print(path)
    return 0


def cmd_gamma_map(args) -> int:
    cfg = _load_config(args.config)
    meter = _build_meter(cfg, args)
    calib = _build_calib(cfg, args)
    if args.nbar_t is None:
        raise ConfigError("gamma-map: --nbar-t is required")
    nbar_t = float(_parse_values(args.nbar_t, "nbar_t")[0])
    theta = args.theta if args.theta is not None else 76.0
    g = args.g if args.g is not None else DEFAULT_G_TRUE
    schemes = (CM, scheme_for_theta(theta))
    fig = gamma_map_figure(nbar_t, schemes, g, meter, calib)
    path = _outpath(args, "gamma_map.csv")
    manifest = _manifest("gamma-map", args, cfg, {
        "nbar_t": nbar_t, "theta_deg": theta, "g": g,
        "schemes": [s.describe() for s in schemes], "calib": calib.to_dict(),
        "calib_fingerprint": calib.fingerprint,
        "meter": {"sigma": meter.sigma, "x0": meter.x0},
    })
    write_dataset(path, fig.csv_rows(), manifest)
    print(path)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--out", help="output file path")
    p.add_argument("--seed", type=int, help=f"RNG seed (default {DEFAULT_SEED})")
    p.add_argument("--threads", type=int, default=None,
                   help="worker cap (runs are single-threaded; recorded only)")
    p.add_argument("--sigma", type=float, help="meter width sigma (mm)")
    p.add_argument("--x0", type=float, help="beam/grid center (mm)")
    p.add_argument("--ideal-detector", action="store_true",
                   help="noise-free, non-saturating detector")
    p.add_argument("--eta", type=float, help="quantum efficiency")
    p.add_argument("--mu-d", dest="mu_d", type=float, help="dark mean (ADU)")
    p.add_argument("--sigma-d", dest="sigma_d", type=float, help="dark std (ADU)")
    p.add_argument("--noise-a", dest="noise_a", type=float,
                   help="classical-noise exponent a")
    p.add_argument("--noise-b", dest="noise_b", type=float,
                   help="classical-noise offset b")
    p.add_argument("--k-s", dest="k_s", type=int, help="saturation level (ADU)")
    p.add_argument("--gain", type=float, help="ADU per photoelectron")
    p.add_argument("--pitch", type=float, help="pixel pitch (mm)")
    p.add_argument("--tau", type=int, help="number of pixels")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wvamp",
                                 description="Weak-value amplification vs conventional "
                                             "measurement: simulation and analysis datasets.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fisher-scan", help="FI-ratio scan or per-pixel FI report")
    p.add_argument("--kind", help="ratio scan panel: rwva or iwva")
    p.add_argument("--g", type=float, help="displacement g (mm)")
    p.add_argument("--pf", help="P_f grid: list or start:stop:count[:lin|:log]")
    p.add_argument("--nbar-t", dest="nbar_t", help="input photons (detector report mode)")
    p.add_argument("--schemes", help="scheme for the detector report (cm or rwva)")
    p.add_argument("--theta", type=float, help="RWVA selection angle (deg)")
    _add_common(p)
    p.set_defaults(func=cmd_fisher_scan)

    p = sub.add_parser("simulate", help="synthesize a frame pool container")
    p.add_argument("--scheme", help="cm or rwva")
    p.add_argument("--theta", type=float, help="RWVA selection angle (deg)")
    p.add_argument("--g", type=float, help="true displacement (mm)")
    p.add_argument("--nbar-t", dest="nbar_t", help="input photons per exposure")
    p.add_argument("--frames", type=int, help="number of frames (default 6000)")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="bootstrap precision from a frame container")
    p.add_argument("--frames", help="frame container file")
    p.add_argument("--estimator", help="comma list: mle,sd,com")
    p.add_argument("--nu", type=int, help="frames per resample (default 300)")
    p.add_argument("--resamples", type=int, help="bootstrap repetitions (default 200)")
    _add_common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="precision vs nbar_t sweep dataset")
    p.add_argument("--nbar-t", dest="nbar_t",
                   help="list or start:stop:count[:log]; default half-decade sweep")
    p.add_argument("--schemes", help="comma list: cm,rwva")
    p.add_argument("--estimators", help="comma list: mle,sd,com")
    p.add_argument("--theta", type=float, help="RWVA selection angle (deg)")
    p.add_argument("--g-true", dest="g_true", type=float, help="true displacement (mm)")
    p.add_argument("--nu", type=int, help="frames per resample")
    p.add_argument("--pool-size", dest="pool_size", type=int, help="frames per pool")
    p.add_argument("--resamples", type=int, help="bootstrap repetitions")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize-pf", help="P_f optimization curve per nbar_t")
    p.add_argument("--nbar-t", dest="nbar_t", help="list or start:stop:count[:log]")
    p.add_argument("--thetas", help="candidate theta_i=-theta_f angles (deg)")
    p.add_argument("--g", type=float, help="true displacement (mm)")
    p.add_argument("--nu", type=int, help="frames per resample (CRB scaling)")
    _add_common(p)
    p.set_defaults(func=cmd_optimize_pf)

    p = sub.add_parser("gamma-map", help="per-pixel FI / Gamma maps, CM vs WVA")
    p.add_argument("--nbar-t", dest="nbar_t", help="input photons per exposure")
    p.add_argument("--theta", type=float, help="WVA selection angle (deg)")
    p.add_argument("--g", type=float, help="displacement (mm)")
    _add_common(p)
    p.set_defaults(func=cmd_gamma_map)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"wvamp: config error: {exc}", file=sys.stderr)
        return 2
    except WvampError as exc:
        print(f"wvamp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
