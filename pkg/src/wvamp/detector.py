"""Saturable pixel-array detector model and Monte Carlo frame synthesis.

The chain per pixel j: expected photons nbar_j(g) from the meter density,
photoelectrons N_j ~ Poisson(eta * nbar_j), readout

    k_j = clip(round(gain * N_j + K_d + K_a), 0, k_s)

with dark noise K_d ~ N(mu_d, sigma_d^2) and intensity-dependent classical
noise K_a ~ N(0, sigma_a^2(nbar_j)), ln(sigma_a^2) = a*ln(nbar_j) + b.
sigma_a is driven by the pixel's *expected* photon number, matching the way
the noise was calibrated, not by the realized N_j.

Only eta, a, b and the pixel pitch are published for the reference CCD;
mu_d, sigma_d, k_s and gain are free parameters of the study and every
quantitative output should be reported with the calibration fingerprint.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field, asdict, replace

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError
from .qmeter import MeasurementScheme, MeterParams, density_components, CM

CONTAINER_MAGIC = b"WVAF"
CONTAINER_VERSION = 1

# Largest k_s for which dense (k_s+1)-length pmf arrays are reasonable.
MAX_DENSE_KS = 1 << 20


@dataclass(frozen=True)
class DetectorCalib:
    """Detector calibration; defaults follow the reference CCD where published."""

    eta: float = 0.125           # detection efficiency
    mu_d: float = 100.0          # dark-noise mean (ADU)
    sigma_d: float = 10.0        # dark-noise std (ADU)
    a: float = 1.19              # classical-noise exponent
    b: float = -4.39             # classical-noise offset
    k_s: int = 65535             # saturation threshold (ADU)
    gain: float = 1.0            # ADU per photoelectron
    pixel_pitch: float = 0.013   # mm
    n_pixels: int = 330          # tau

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must be in (0, 1]")
        if self.sigma_d < 0.0:
            raise ValueError("sigma_d must be >= 0")
        if self.k_s < 1:
            raise ValueError("k_s must be >= 1")
        if not self.gain > 0.0:
            raise ValueError("gain must be positive")
        if self.n_pixels < 2:
            raise ValueError("need at least two pixels")
        if not self.pixel_pitch > 0.0:
            raise ValueError("pixel_pitch must be positive")

    @classmethod
    def ideal(cls, eta: float = 0.125, k_s: int = MAX_DENSE_KS - 1,
              pixel_pitch: float = 0.013, n_pixels: int = 330) -> "DetectorCalib":
        """Noiseless, effectively unsaturable detector (point-mass response)."""
        return cls(eta=eta, mu_d=0.0, sigma_d=0.0, a=0.0, b=-math.inf,
                   k_s=k_s, gain=1.0, pixel_pitch=pixel_pitch, n_pixels=n_pixels)

    @property
    def is_ideal_response(self) -> bool:
        return self.sigma_d == 0.0 and self.b == -math.inf

    def to_dict(self) -> dict:
        d = asdict(self)
        # JSON has no -inf literal.
        if d["b"] == -math.inf:
            d["b"] = "-inf"
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorCalib":
        d = dict(d)
        if d.get("b") == "-inf":
            d["b"] = -math.inf
        return cls(**d)

    @property
    def fingerprint(self) -> str:
        """Short stable hash of the calibration, for tagging outputs."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def with_overrides(self, **kwargs) -> "DetectorCalib":
        return replace(self, **kwargs)


def classical_noise_sigma(nbar_j, calib: DetectorCalib):
    """sigma_a = exp((a*ln(nbar) + b)/2); 0 at nbar = 0 (limiting convention)."""
    nbar = np.asarray(nbar_j, dtype=float)
    scalar = nbar.ndim == 0
    nbar = np.atleast_1d(nbar)
    if np.any(nbar < 0.0):
        raise ValueError("nbar_j must be >= 0")
    out = np.zeros_like(nbar)
    if calib.b != -math.inf:
        pos = nbar > 0.0
        out[pos] = np.exp(0.5 * (calib.a * np.log(nbar[pos]) + calib.b))
    return float(out[0]) if scalar else out


def pixel_centers(calib: DetectorCalib, meter: MeterParams) -> np.ndarray:
    """tau pixel centres, pitch-spaced and centred on the beam axis x0."""
    tau = calib.n_pixels
    j = np.arange(tau)
    return meter.x0 + (j - (tau - 1) / 2.0) * calib.pixel_pitch


@dataclass(frozen=True)
class PixelModel:
    """One pixel's expected photons and its g-derivative."""

    index: int
    x: float
    nbar: float
    dnbar_dg: float


def expected_arrays(
    scheme: MeasurementScheme, g: float, nbar_t: float,
    meter: MeterParams, calib: DetectorCalib,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(x_j, nbar_j, dnbar_j/dg) for the whole grid, via analytic Gaussian CDFs.

    For WVA, nbar_j = nbar_t * integral_j of the *unnormalized* two-Gaussian
    density, which equals P_f * nbar_t * integral of the normalized density.
    """
    if nbar_t < 0.0:
        raise ValueError("nbar_t must be >= 0")
    centers = pixel_centers(calib, meter)
    half = calib.pixel_pitch / 2.0
    lo = centers - half
    hi = centers + half
    comp = density_components(scheme, g, meter)
    s = comp.sigma
    nbar = np.zeros_like(centers)
    dnbar = np.zeros_like(centers)
    for w, m, dw, dm in zip(comp.weights, comp.means, comp.dweights_dg, comp.dmeans_dg):
        zlo = (lo - m) / s
        zhi = (hi - m) / s
        cdf_diff = ndtr(zhi) - ndtr(zlo)
        pdf_lo = np.exp(-0.5 * zlo * zlo) / (s * math.sqrt(2.0 * math.pi))
        pdf_hi = np.exp(-0.5 * zhi * zhi) / (s * math.sqrt(2.0 * math.pi))
        nbar += w * cdf_diff
        # d/dg of w(g) * [CDF(hi; m(g)) - CDF(lo; m(g))]
        dnbar += dw * cdf_diff - w * dm * (pdf_hi - pdf_lo)
    np.clip(nbar, 0.0, None, out=nbar)  # guard fp negatives from the cross term
    return centers, nbar_t * nbar, nbar_t * dnbar


def expected_counts(
    scheme: MeasurementScheme, g: float, nbar_t: float,
    meter: MeterParams, calib: DetectorCalib,
) -> list[PixelModel]:
    x, nbar, dnbar = expected_arrays(scheme, g, nbar_t, meter, calib)
    return [PixelModel(j, float(x[j]), float(nbar[j]), float(dnbar[j]))
            for j in range(len(x))]


def response_pmf(N: int, nbar_j: float, calib: DetectorCalib) -> np.ndarray:
    """R(k|N) over k in {0..k_s}: binned Gaussian with both tails lumped.

    Mean gain*N + mu_d, variance sigma_d^2 + sigma_a^2(nbar_j).  Mass below
    -1/2 is lumped into k = 0, mass at or above k_s - 1/2 into k = k_s.
    Zero total noise degenerates to a point mass at the rounded, clipped mean.
    """
    if N < 0:
        raise ValueError("N must be >= 0")
    if calib.k_s > MAX_DENSE_KS:
        raise ValueError("k_s too large for a dense response pmf")
    mu = calib.gain * N + calib.mu_d
    var = calib.sigma_d**2 + float(classical_noise_sigma(nbar_j, calib)) ** 2
    pmf = np.zeros(calib.k_s + 1)
    if var == 0.0:
        k = int(min(max(round(mu), 0), calib.k_s))
        pmf[k] = 1.0
        return pmf
    s = math.sqrt(var)
    edges = np.arange(calib.k_s) + 0.5  # 0.5 .. k_s - 0.5
    cdf = ndtr((edges - mu) / s)
    pmf[0] = cdf[0]
    pmf[1:-1] = np.diff(cdf)
    pmf[-1] = 1.0 - cdf[-1]
    return pmf


@dataclass(frozen=True)
class Frame:
    """One exposure: integer ADU per pixel plus provenance."""

    readouts: np.ndarray
    scheme: MeasurementScheme
    g: float
    nbar_t: float
    seed: int
    frame_index: int = 0


@dataclass(frozen=True)
class FrameSet:
    """A stack of frames sharing one (scheme, g, nbar_t, calib) context."""

    readouts: np.ndarray  # (n_frames, tau)
    scheme: MeasurementScheme
    g: float
    nbar_t: float
    seed: int
    calib: DetectorCalib
    meter: MeterParams

    @property
    def n_frames(self) -> int:
        return self.readouts.shape[0]

    def frame(self, i: int) -> Frame:
        return Frame(self.readouts[i], self.scheme, self.g, self.nbar_t, self.seed, i)

    def subset(self, indices) -> "FrameSet":
        return FrameSet(self.readouts[np.asarray(indices)], self.scheme, self.g,
                        self.nbar_t, self.seed, self.calib, self.meter)


def _frame_rng(seed: int, frame_index: int) -> np.random.Generator:
    # Per-frame derived stream: synthesis order cannot matter.
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), int(frame_index))))


def _sample_readouts(rng, nbar, sigma_a, calib: DetectorCalib) -> np.ndarray:
    n_el = rng.poisson(calib.eta * nbar)
    vals = calib.gain * n_el + rng.normal(calib.mu_d, calib.sigma_d, size=nbar.shape)
    vals += rng.normal(0.0, 1.0, size=nbar.shape) * sigma_a
    return np.clip(np.rint(vals), 0, calib.k_s).astype(np.int64)


def sample_frame(
    scheme: MeasurementScheme, g: float, nbar_t: float, meter: MeterParams,
    calib: DetectorCalib, seed: int, frame_index: int = 0,
) -> Frame:
    _, nbar, _ = expected_arrays(scheme, g, nbar_t, meter, calib)
    sigma_a = np.asarray(classical_noise_sigma(nbar, calib))
    rng = _frame_rng(seed, frame_index)
    k = _sample_readouts(rng, nbar, sigma_a, calib)
    return Frame(k, scheme, g, nbar_t, seed, frame_index)


def sample_frames(
    scheme: MeasurementScheme, g: float, nbar_t: float, meter: MeterParams,
    calib: DetectorCalib, seed: int, n_frames: int,
) -> FrameSet:
    """Synthesize a pool of frames with per-frame derived seeds."""
    _, nbar, _ = expected_arrays(scheme, g, nbar_t, meter, calib)
    sigma_a = np.asarray(classical_noise_sigma(nbar, calib))
    out = np.empty((n_frames, calib.n_pixels), dtype=np.int64)
    for i in range(n_frames):
        out[i] = _sample_readouts(_frame_rng(seed, i), nbar, sigma_a, calib)
    return FrameSet(out, scheme, g, nbar_t, seed, calib, meter)


# ---------------------------------------------------------------------------
# Frame container: little-endian binary, u16 payload.  See FORMATS.md.
# ---------------------------------------------------------------------------

def save_frames(path, frames: FrameSet) -> None:
    if frames.calib.k_s > 0xFFFF:
        raise ValueError("container payload is u16; k_s must be <= 65535")
    header = {
        "calib": frames.calib.to_dict(),
        "calib_hash": frames.calib.fingerprint,
        "scheme": frames.scheme.describe(),
        "g": frames.g,
        "nbar_t": frames.nbar_t,
        "tau": int(frames.readouts.shape[1]),
        "n_frames": int(frames.readouts.shape[0]),
        "seed": int(frames.seed),
        "meter": {"sigma": frames.meter.sigma, "x0": frames.meter.x0},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    payload = frames.readouts.astype("<u2").tobytes()
    with open(path, "wb") as fh:
        fh.write(CONTAINER_MAGIC)
        fh.write(struct.pack("<HI", CONTAINER_VERSION, len(blob)))
        fh.write(blob)
        fh.write(payload)


def _scheme_from_header(d: dict) -> MeasurementScheme:
    from .qmeter import QubitState
    if d["kind"] == "CM":
        return CM
    return MeasurementScheme(
        d["kind"],
        QubitState(d["pre_theta"], d["pre_phi"]),
        QubitState(d["post_theta"], d["post_phi"]),
    )


def load_frames(path) -> FrameSet:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CONTAINER_MAGIC:
            raise ConfigError(f"{path}: bad container magic {magic!r}")
        version, hlen = struct.unpack("<HI", fh.read(6))
        if version != CONTAINER_VERSION:
            raise ConfigError(f"{path}: unsupported container version {version}")
        header = json.loads(fh.read(hlen).decode())
        payload = fh.read()
    n, tau = header["n_frames"], header["tau"]
    if len(payload) < 2 * n * tau:
        raise ConfigError(f"{path}: truncated payload "
                          f"({len(payload)} bytes for {n}x{tau} u16 frames)")
    data = np.frombuffer(payload, dtype="<u2", count=n * tau).reshape(n, tau)
    calib = DetectorCalib.from_dict(header["calib"])
    if calib.fingerprint != header["calib_hash"]:
        raise ConfigError(f"{path}: calibration hash mismatch")
    meter = MeterParams(**header["meter"])
    return FrameSet(data.astype(np.int64), _scheme_from_header(header["scheme"]),
                    header["g"], header["nbar_t"], header["seed"], calib, meter)


def frames_to_csv(path, frames: FrameSet) -> None:
    """CSV export: one row per frame, one column per pixel."""
    with open(path, "w") as fh:
        fh.write("# calib_hash=%s scheme=%s g=%.17g nbar_t=%.17g seed=%d\n" % (
            frames.calib.fingerprint, frames.scheme.kind, frames.g,
            frames.nbar_t, frames.seed))
        fh.write(",".join("k%d" % j for j in range(frames.readouts.shape[1])) + "\n")
        for row in frames.readouts:
            fh.write(",".join(str(int(v)) for v in row) + "\n")
