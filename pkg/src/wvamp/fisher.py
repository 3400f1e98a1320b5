"""Information calculus for the full measurement chain.

Per pixel: the readout distribution P(k|g) (Poisson photoelectrons pushed
through the noisy, saturable response), its g-derivative, the Fisher
information F_j = sum_k (dP/dg)^2 / P, and the SNR coefficient

    Gamma_j = F_j / [(eta/nbar_j) (dnbar_j/dg)^2],

which is 1 for an ideal detector and collapses to 0 under saturation.  The
total F(g) sums pixels with compensated summation.

Also here: the ideal-detection Fisher-information-to-QFI ratio scans over the
post-selection probability, computed by quadrature on the exact meter
densities (never the first-order mean-shift approximation).
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from ._kernel import PmfWindow, readout_pmf_window
from .detector import DetectorCalib, PixelModel, expected_arrays
from .errors import InfeasiblePf, UndefinedGamma
from .qmeter import MeasurementScheme, MeterParams

_TINY = 1e-300


class PmfCache:
    """FIFO cache of readout pmf windows keyed by (nbar, calib).

    The window depends on g only through nbar, so repeated likelihood or FI
    evaluations at the same g hit the cache.  Reads are safe to share;
    writes happen under the GIL.
    """

    def __init__(self, maxsize: int = 4096):
        self.maxsize = maxsize
        self._data: OrderedDict = OrderedDict()

    def window(self, nbar: float, calib: DetectorCalib) -> PmfWindow:
        key = (nbar, calib)
        win = self._data.get(key)
        if win is None:
            win = readout_pmf_window(nbar, calib)
            self._data[key] = win
            if len(self._data) > self.maxsize:
                self._data.popitem(last=False)
        return win

    def fisher_sum(self, nbar: float, calib: DetectorCalib) -> float:
        """sum_k (dP/dlambda)^2 / P; F_j = (eta * dnbar_j/dg)^2 times this."""
        key = ("S", nbar, calib)
        s = self._data.get(key)
        if s is None:
            win = self.window(nbar, calib)
            mask = win.probs > _TINY
            s = float(np.sum(win.uprobs[mask] ** 2 / win.probs[mask]))
            self._data[key] = s
        return s


@dataclass(frozen=True)
class OutcomePmf:
    """P(k|g) and dP(k|g)/dg for one pixel, on its active k-window."""

    index: int
    k0: int
    probs: np.ndarray
    dprobs: np.ndarray
    k_s: int
    nbar: float
    dnbar_dg: float

    def prob(self, k):
        k = np.asarray(k, dtype=np.int64)
        idx = np.clip(k - self.k0, 0, len(self.probs) - 1)
        inside = (k >= self.k0) & (k < self.k0 + len(self.probs))
        return np.where(inside, self.probs[idx], 0.0)

    def dprob(self, k):
        k = np.asarray(k, dtype=np.int64)
        idx = np.clip(k - self.k0, 0, len(self.dprobs) - 1)
        inside = (k >= self.k0) & (k < self.k0 + len(self.dprobs))
        return np.where(inside, self.dprobs[idx], 0.0)

    def toarray(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense (P, dP) over k = 0..k_s; only for small k_s."""
        if self.k_s > (1 << 20):
            raise ValueError("k_s too large for dense output")
        p = np.zeros(self.k_s + 1)
        d = np.zeros(self.k_s + 1)
        p[self.k0:self.k0 + len(self.probs)] = self.probs
        d[self.k0:self.k0 + len(self.dprobs)] = self.dprobs
        return p, d


def outcome_pmf(
    pixel: PixelModel, calib: DetectorCalib, g: float = 0.0,
    cache: PmfCache | None = None,
) -> OutcomePmf:
    """Readout distribution of one pixel; derivative taken through the Poisson rate."""
    win = cache.window(pixel.nbar, calib) if cache else readout_pmf_window(pixel.nbar, calib)
    dlam = calib.eta * pixel.dnbar_dg
    return OutcomePmf(pixel.index, win.k0, win.probs, dlam * win.uprobs,
                      calib.k_s, pixel.nbar, pixel.dnbar_dg)


def pixel_fisher(pmf: OutcomePmf) -> float:
    """F_j = sum_k (dP/dg)^2 / P, skipping vanishing outcomes."""
    mask = pmf.probs > _TINY
    return float(np.sum(pmf.dprobs[mask] ** 2 / pmf.probs[mask]))


def gamma(pixel: PixelModel, calib: DetectorCalib, g: float = 0.0,
          cache: PmfCache | None = None) -> float:
    """Gamma_j = F_j / [(eta/nbar)(dnbar/dg)^2]; 1 for an ideal detector."""
    if pixel.dnbar_dg == 0.0:
        raise UndefinedGamma(f"pixel {pixel.index}: dnbar/dg = 0")
    if pixel.nbar == 0.0:
        raise UndefinedGamma(f"pixel {pixel.index}: nbar = 0")
    if cache is not None:
        return calib.eta * pixel.nbar * cache.fisher_sum(pixel.nbar, calib)
    f = pixel_fisher(outcome_pmf(pixel, calib, g))
    return f / ((calib.eta / pixel.nbar) * pixel.dnbar_dg**2)


@dataclass(frozen=True)
class FisherReport:
    """Per-pixel and total Fisher information at one working point."""

    scheme: dict
    g: float
    nbar_t: float
    calib_fingerprint: str
    x: np.ndarray
    nbar: np.ndarray
    dnbar_dg: np.ndarray
    fisher_j: np.ndarray
    gamma_j: np.ndarray  # NaN where undefined (dnbar/dg = 0 or nbar = 0)

    @property
    def total(self) -> float:
        return math.fsum(self.fisher_j)

    def csv_rows(self):
        yield "j,x_j,nbar_j,dnbar_dg_j,F_j,Gamma_j"
        for j in range(len(self.x)):
            yield "%d,%.17g,%.17g,%.17g,%.17g,%.17g" % (
                j, self.x[j], self.nbar[j], self.dnbar_dg[j],
                self.fisher_j[j], self.gamma_j[j])

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "g": self.g,
            "nbar_t": self.nbar_t,
            "calib_fingerprint": self.calib_fingerprint,
            "total_fisher": self.total,
            "pixels": [
                {"j": j, "x": float(self.x[j]), "nbar": float(self.nbar[j]),
                 "fisher": float(self.fisher_j[j]), "gamma": float(self.gamma_j[j])}
                for j in range(len(self.x))
            ],
        }


def total_fisher(
    scheme: MeasurementScheme, g: float, nbar_t: float,
    meter: MeterParams, calib: DetectorCalib,
    cache: PmfCache | None = None,
) -> FisherReport:
    """Whole-array Fisher information F(g) = sum_j F_j with the Gamma map."""
    cache = cache or PmfCache()
    x, nbar, dnbar = expected_arrays(scheme, g, nbar_t, meter, calib)
    fj = np.zeros_like(nbar)
    gj = np.full_like(nbar, np.nan)
    for j in range(len(x)):
        if nbar[j] <= 0.0:
            continue  # no signal: F_j = 0, Gamma undefined
        s = cache.fisher_sum(nbar[j], calib)
        fj[j] = (calib.eta * dnbar[j]) ** 2 * s
        if dnbar[j] != 0.0:
            gj[j] = calib.eta * nbar[j] * s
    return FisherReport(scheme.describe(), g, nbar_t, calib.fingerprint,
                        x, nbar, dnbar, fj, gj)


def qfi_cm(meter: MeterParams) -> float:
    """Quantum Fisher information of the conventional scheme: 1/sigma^2."""
    return 1.0 / meter.sigma**2


# ---------------------------------------------------------------------------
# Ideal-detection FI of the exact meter densities, and the P_f ratio scans.
# ---------------------------------------------------------------------------

_QUAD_POINTS = 8001


def _pf_and_dpf(alpha: complex, beta: complex, g: float, sigma: float):
    cross = 2.0 * (alpha * np.conj(beta)).real
    env = math.exp(-(g * g) / (2.0 * sigma * sigma))
    pf = abs(alpha) ** 2 + abs(beta) ** 2 + cross * env
    dpf = -cross * env * g / (sigma * sigma)
    return pf, dpf


def fi_q_exact(alpha: complex, beta: complex, g: float, meter: MeterParams) -> float:
    """Position-readout FI per input photon: P_f(g) * FI of the normalized pdf.

    Computed as integral of (u' - u P_f'/P_f)^2 / u with u the unnormalized
    two-Gaussian intensity (a 3-component normal mixture).
    """
    s = meter.sigma
    w1, w2 = abs(alpha) ** 2, abs(beta) ** 2
    cross = 2.0 * (alpha * np.conj(beta)).real
    env = math.exp(-(g * g) / (2.0 * s * s))
    w3 = cross * env
    dw3 = -cross * env * g / (s * s)
    pf = w1 + w2 + w3
    dpf = dw3
    lim = 8.0 * s + abs(g)
    q = np.linspace(-lim, lim, _QUAD_POINTS)
    norm = 1.0 / (s * math.sqrt(2.0 * math.pi))
    n_plus = norm * np.exp(-0.5 * ((q - g) / s) ** 2)
    n_minus = norm * np.exp(-0.5 * ((q + g) / s) ** 2)
    n_zero = norm * np.exp(-0.5 * (q / s) ** 2)
    u = w1 * n_plus + w2 * n_minus + w3 * n_zero
    du = (w1 * (q - g) / s**2 * n_plus
          - w2 * (q + g) / s**2 * n_minus
          + dw3 * n_zero)
    resid = du - u * (dpf / pf)
    integrand = np.where(u > _TINY, resid**2 / np.maximum(u, _TINY), 0.0)
    return float(np.trapezoid(integrand, q))


def fi_p_exact(alpha: complex, beta: complex, g: float, meter: MeterParams) -> float:
    """Momentum-readout FI per input photon (the IWVA observable)."""
    s = meter.sigma
    ab = np.conj(alpha) * beta
    r, chi = abs(ab), math.atan2(ab.imag, ab.real)
    w0 = abs(alpha) ** 2 + abs(beta) ** 2
    pf, dpf = _pf_and_dpf(alpha, beta, g, s)
    sp = 1.0 / (2.0 * s)
    lim = 8.0 * sp
    p = np.linspace(-lim, lim, _QUAD_POINTS)
    base = np.exp(-0.5 * (p / sp) ** 2) / (sp * math.sqrt(2.0 * math.pi))
    u = (w0 + 2.0 * r * np.cos(chi + 2.0 * g * p)) * base
    du = -4.0 * r * p * np.sin(chi + 2.0 * g * p) * base
    resid = du - u * (dpf / pf)
    integrand = np.where(u > _TINY, resid**2 / np.maximum(u, _TINY), 0.0)
    return float(np.trapezoid(integrand, p))


def _real_amplitudes(theta_i: float, theta_f: float) -> tuple[float, float]:
    # theta_f may be signed; the sign rides on beta (phi = 0 / pi convention)
    return (math.cos(theta_f / 2.0) * math.cos(theta_i / 2.0),
            math.sin(theta_f / 2.0) * math.sin(theta_i / 2.0))


@dataclass(frozen=True)
class FiScanPoint:
    pf: float
    ratio: float       # max FI / Q_CM
    theta_i: float     # radians
    param2: float      # theta_f (RWVA) or relative phase chi (IWVA), radians


def _rwva_best_at_pf(pf_target: float, g: float, meter: MeterParams) -> FiScanPoint:
    """Max position-space FI over real-weak-value selections at fixed P_f.

    P_f here is the nominal post-selection probability |<f|i>|^2 = (alpha+beta)^2,
    the g -> 0 value quoted with a scheme; the FI itself is exact in g.
    """
    q = qfi_cm(meter)
    if not 0.0 < pf_target <= 1.0:
        raise InfeasiblePf(f"P_f = {pf_target} is outside (0, 1]")

    if pf_target >= 1.0 - 1e-12:
        # only the trivial selection reaches P_f = 1 exactly (WVA -> CM)
        return FiScanPoint(1.0, fi_q_exact(1.0, 0.0, g, meter) / q, 0.0, 0.0)

    def eval_theta(theta_i: float) -> tuple[float, float]:
        def pf_of(tf: float) -> float:
            a, b = _real_amplitudes(theta_i, tf)
            return (a + b) ** 2

        tf_grid = np.linspace(-math.pi + 1e-9, math.pi - 1e-9, 241)
        vals = np.array([pf_of(t) for t in tf_grid]) - pf_target
        best_f, best_tf = -1.0, math.nan
        for i in range(len(tf_grid) - 1):
            if vals[i] == 0.0 or vals[i] * vals[i + 1] < 0.0:
                root = brentq(lambda t: pf_of(t) - pf_target, tf_grid[i], tf_grid[i + 1],
                              xtol=1e-14)
                a, b = _real_amplitudes(theta_i, root)
                f = fi_q_exact(a, b, g, meter)
                if f > best_f:
                    best_f, best_tf = f, root
        return best_f, best_tf

    grid = np.linspace(1e-3, math.pi - 1e-3, 121)
    scores = np.array([eval_theta(t)[0] for t in grid])
    if np.max(scores) < 0.0:
        raise InfeasiblePf(f"no RWVA selection attains P_f = {pf_target}")

    # candidate basins: best few grid points plus the symmetric theta_i = -theta_f
    # selection (the small-g optimum), where (alpha+beta)^2 = cos^2(theta_i)
    candidates = [float(grid[i]) for i in np.argsort(scores)[-3:]]
    candidates.append(math.acos(math.sqrt(pf_target)))

    step = float(grid[1] - grid[0])
    best = (-1.0, math.nan, math.nan)  # (F, theta_i, theta_f)
    for t0 in candidates:
        f0, tf0 = eval_theta(t0)
        if f0 > best[0]:
            best = (f0, t0, tf0)
        lo = max(1e-9, t0 - step)
        hi = min(math.pi - 1e-9, t0 + step)
        res = minimize_scalar(lambda t: -eval_theta(t)[0], bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-7})
        f1, tf1 = eval_theta(float(res.x))
        if f1 > best[0]:
            best = (f1, float(res.x), tf1)
    return FiScanPoint(pf_target, best[0] / q, best[1], best[2])


def _iwva_best_at_pf(pf_target: float, g: float, meter: MeterParams) -> FiScanPoint:
    """Max momentum-space FI over imaginary-weak-value selections at fixed P_f.

    Im A_w != 0 with Re A_w = 0 forces |beta| = alpha, i.e. theta_f = pi - theta_i
    with a free relative phase chi; chi is solved from the nominal-P_f constraint
    |<f|i>|^2 = 2 alpha^2 (1 + cos chi) = target.
    """
    q = qfi_cm(meter)
    if not 0.0 < pf_target <= 1.0:
        raise InfeasiblePf(f"P_f = {pf_target} is outside (0, 1]")

    def eval_theta(theta_i: float) -> tuple[float, float]:
        a = 0.5 * math.sin(theta_i)  # alpha = |beta| = sin(theta_i)/2
        if a <= 0.0:
            return -1.0, math.nan
        c = pf_target / (2.0 * a * a) - 1.0
        if not -1.0 <= c <= 1.0:
            return -1.0, math.nan
        chi = math.acos(c)
        beta = a * complex(math.cos(chi), math.sin(chi))
        return fi_p_exact(a, beta, g, meter), chi

    grid = np.linspace(1e-3, math.pi / 2.0, 121)  # alpha symmetric about pi/2
    scores = [eval_theta(t)[0] for t in grid]
    i_best = int(np.argmax(scores))
    if scores[i_best] < 0.0:
        raise InfeasiblePf(f"no IWVA selection attains P_f = {pf_target}")
    lo = grid[max(0, i_best - 1)]
    hi = grid[min(len(grid) - 1, i_best + 1)]
    res = minimize_scalar(lambda t: -eval_theta(t)[0], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-6})
    theta_i = float(res.x)
    f, chi = eval_theta(theta_i)
    if f < scores[i_best]:
        theta_i, f = float(grid[i_best]), scores[i_best]
        chi = eval_theta(theta_i)[1]
    return FiScanPoint(pf_target, f / q, theta_i, chi)


def ideal_fi_ratio_scan(kind: str, g: float, meter: MeterParams, pf_grid) -> list[FiScanPoint]:
    """Max-FI-to-QFI ratio versus nominal post-selection probability |<f|i>|^2.

    Ideal detection; kind selects the readout: RWVA is read in position,
    IWVA in momentum.
    """
    if kind not in ("RWVA", "IWVA"):
        raise ValueError("kind must be RWVA or IWVA")
    best = _rwva_best_at_pf if kind == "RWVA" else _iwva_best_at_pf
    return [best(float(pf), g, meter) for pf in pf_grid]
