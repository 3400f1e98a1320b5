"""Displacement estimators and bootstrap precision analysis.

Three estimators act on a FrameSet:

* MLE  -- maximizes the exact readout log-likelihood sum_{l,j} ln P(k_lj | g)
  over g in a bracket, locating the optimum on a shared coarse grid and then
  solving the score equation d/dg log L = 0 inside the winning cell.
* SD   -- split detection: dark-subtracted left/right section weights,
  g_hat = (W_l - W_r) / xi with xi the model-derived response slope at g = 0
  (sqrt(2/pi)/sigma in the CM no-saturation limit).
* COM  -- dark-subtracted center of mass, deamplified by Re(A_w) for WVA
  schemes so every estimator reports on the same g scale.

bootstrap_precision resamples a frame pool with replacement and reports the
spread of the estimates plus a large-sample error bar on that spread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from ._kernel import readout_pmf_window
from .detector import DetectorCalib, FrameSet, expected_arrays, pixel_centers
from .errors import BracketFailure, EmptySignal
from .qmeter import MeasurementScheme, MeterParams

_LOG_TINY = math.log(5e-324)  # floor for readouts outside the pmf window


@dataclass(frozen=True)
class EstimatorResult:
    """One point estimate of the displacement g from a frame set."""

    g_hat: float       # mm
    kind: str          # "MLE" | "SD" | "COM"
    nu: int            # frames used
    iterations: int = 0
    loglik: float = math.nan  # log-likelihood at the optimum (MLE only)

    def __post_init__(self):
        if not math.isfinite(self.g_hat):
            raise ValueError("g_hat must be finite")


@dataclass(frozen=True)
class PrecisionPoint:
    """Bootstrap precision of one estimator at one operating point."""

    nbar_t: float
    scheme: MeasurementScheme
    estimator: str
    delta_g: float      # mm, std of the resampled estimates
    delta_g_err: float  # mm, standard error of delta_g (fourth-moment formula)
    resamples: int
    g_mean: float = math.nan  # mean of the resampled estimates (bias checks)

    def __post_init__(self):
        if self.delta_g < 0.0 or self.delta_g_err < 0.0:
            raise ValueError("delta_g and its error bar must be >= 0")


def _context(frames: FrameSet, calib, meter):
    return (calib if calib is not None else frames.calib,
            meter if meter is not None else frames.meter)


def _deamplification(scheme: MeasurementScheme) -> float:
    """Linear response factor mapping g to the detector-plane mean shift."""
    if scheme.kind == "CM":
        return 1.0
    return float(scheme.weak_value.real)


# ---------------------------------------------------------------------------
# Maximum likelihood
# ---------------------------------------------------------------------------

class MleEstimator:
    """Shared-table MLE for one (scheme, nbar_t, meter, calib) scenario.

    The per-pixel outcome pmfs depend on g only through the scenario, never
    through the data, so the coarse-grid log-probability tables (evaluated at
    the readout values present in the pool) are computed once and shared
    across bootstrap resamples.  Each estimate then refines the grid optimum
    by bracketed root-finding on the score d/dg log L inside the winning cell.
    """

    kind = "MLE"

    def __init__(self, scheme: MeasurementScheme, nbar_t: float,
                 meter: MeterParams, calib: DetectorCalib,
                 bracket: float | None = None, tol: float | None = None,
                 grid_points: int = 41, refine: str = "interp"):
        if refine not in ("interp", "exact"):
            raise ValueError("refine must be 'interp' or 'exact'")
        self.scheme = scheme
        self.nbar_t = float(nbar_t)
        self.meter = meter
        self.calib = calib
        self.bracket = 0.2 * meter.sigma if bracket is None else float(bracket)
        self.tol = 1e-6 * meter.sigma if tol is None else float(tol)
        self.grid_points = int(grid_points)
        self.refine = refine
        self._pool_id = None
        self._uks: list[np.ndarray] = []
        self._uinv: np.ndarray | None = None
        self._grids: dict = {}

    # -- pool binding and tables ------------------------------------------

    def _bind(self, pool: FrameSet) -> None:
        if self._pool_id == id(pool.readouts):
            return
        tau = pool.readouts.shape[1]
        self._uks = []
        self._uinv = np.empty_like(pool.readouts, dtype=np.int64)
        for j in range(tau):
            uks, inv = np.unique(pool.readouts[:, j], return_inverse=True)
            self._uks.append(uks.astype(np.int64))
            self._uinv[:, j] = inv
        self._grids.clear()
        self._pool_id = id(pool.readouts)

    def _tables_at(self, g: float) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Per-pixel ln P(k|g) and d/dg ln P(k|g) at the pool's unique readouts."""
        _, nbar, dnbar = expected_arrays(self.scheme, g, self.nbar_t, self.meter, self.calib)
        logps, ratios = [], []
        for j, uks in enumerate(self._uks):
            win = readout_pmf_window(float(nbar[j]), self.calib)
            idx = uks - win.k0
            inside = (idx >= 0) & (idx < len(win.probs))
            idxc = np.clip(idx, 0, len(win.probs) - 1)
            p = np.where(inside, win.probs[idxc], 0.0)
            u = np.where(inside, win.uprobs[idxc], 0.0)
            lp = np.full(p.shape, _LOG_TINY)
            r = np.zeros_like(p)
            pos = p > 0.0
            lp[pos] = np.log(p[pos])
            r[pos] = self.calib.eta * dnbar[j] * u[pos] / p[pos]
            logps.append(lp)
            ratios.append(r)
        return logps, ratios

    def _loglik_and_score(self, g: float, counts: list[np.ndarray]) -> tuple[float, float]:
        _, nbar, dnbar = expected_arrays(self.scheme, g, self.nbar_t, self.meter, self.calib)
        ll = 0.0
        sc = 0.0
        for j, (uks, c) in enumerate(zip(self._uks, counts)):
            win = readout_pmf_window(float(nbar[j]), self.calib)
            idx = uks - win.k0
            inside = (idx >= 0) & (idx < len(win.probs))
            idxc = np.clip(idx, 0, len(win.probs) - 1)
            p = np.where(inside, win.probs[idxc], 0.0)
            u = np.where(inside, win.uprobs[idxc], 0.0)
            pos = p > 0.0
            ll += float(np.dot(c[pos], np.log(p[pos]))) + _LOG_TINY * float(c[~pos].sum())
            sc += self.calib.eta * dnbar[j] * float(np.dot(c[pos], u[pos] / p[pos]))
        return ll, sc

    def _grid(self, half_width: float):
        cached = self._grids.get(half_width)
        if cached is None:
            n = self.grid_points if half_width == self.bracket else 4 * self.grid_points
            gs = np.linspace(-half_width, half_width, n)
            tables = [self._tables_at(float(g)) for g in gs]
            cached = (gs, tables)
            self._grids[half_width] = cached
        return cached

    # -- estimation ---------------------------------------------------------

    def _counts(self, indices) -> list[np.ndarray]:
        return [np.bincount(self._uinv[indices, j], minlength=len(uks)).astype(float)
                for j, uks in enumerate(self._uks)]

    def estimate_indices(self, pool: FrameSet, indices) -> float:
        return self._fit(pool, np.asarray(indices), want_loglik=False).g_hat

    def _fit(self, pool: FrameSet, indices, want_loglik: bool = True) -> EstimatorResult:
        self._bind(pool)
        counts = self._counts(indices)
        nu = len(indices)

        half = self.bracket
        for attempt in range(2):
            gs, tables = self._grid(half)
            ll = np.array([sum(float(np.dot(c, lp)) for c, lp in zip(counts, tabs[0]))
                           for tabs in tables])
            i = int(np.argmax(ll))
            if 0 < i < len(gs) - 1:
                break
            half *= 4.0  # bracket-edge optimum: widen once, then give up
        else:
            raise BracketFailure(
                f"log-likelihood maximal at bracket edge g = {gs[i]:g} even after widening")

        evals = 0
        root = None

        if self.refine == "interp":
            # grid score values are free; the score is essentially linear over a
            # grid cell, so a local cubic through four points pins the root well
            # inside the 1e-6 sigma tolerance without fresh pmf evaluations
            lo_i = max(0, i - 2)
            hi_i = min(len(gs) - 1, i + 2)
            sl = np.array([sum(float(np.dot(c, r)) for c, r in zip(counts, tables[k][1]))
                           for k in range(lo_i, hi_i + 1)])
            sg = gs[lo_i:hi_i + 1]
            signs = np.sign(sl)
            for k in range(len(sl) - 1):
                if signs[k] == 0.0:
                    root = float(sg[k])
                    break
                if signs[k] * signs[k + 1] < 0.0:
                    # interpolating cubic through the 4 nodes around the bracket
                    a = max(0, min(k - 1, len(sl) - 4))
                    xs, ys = sg[a:a + 4] - sg[k], sl[a:a + 4]
                    poly = np.poly1d(np.polyfit(xs, ys, len(xs) - 1))
                    lo, hi = 0.0, float(sg[k + 1] - sg[k])
                    if poly(lo) * poly(hi) < 0.0:
                        root = float(brentq(poly, lo, hi, xtol=self.tol) + sg[k])
                    else:  # degenerate fit: linear root between the bracket pair
                        root = float(sg[k] - sl[k] * (sg[k + 1] - sg[k])
                                     / (sl[k + 1] - sl[k]))
                    break

        if root is None:
            def score(g: float) -> float:
                nonlocal evals
                evals += 1
                return self._loglik_and_score(g, counts)[1]

            # exact path: the score should change sign inside the winning cell;
            # scan outward a couple of cells in case the peak sits next door
            s_cache: dict[float, float] = {}
            for lo_i, hi_i in ((i - 1, i + 1), (max(0, i - 2), min(len(gs) - 1, i + 2))):
                lo, hi = float(gs[lo_i]), float(gs[hi_i])
                s_lo = s_cache.setdefault(lo, score(lo))
                s_hi = s_cache.setdefault(hi, score(hi))
                if s_lo == 0.0:
                    root = lo
                    break
                if s_lo * s_hi < 0.0:
                    root = float(brentq(score, lo, hi, xtol=self.tol))
                    break

        if root is None:
            # flat or non-monotone score (very low information): fall back to
            # direct likelihood maximization in the neighborhood
            lo, hi = float(gs[max(0, i - 2)]), float(gs[min(len(gs) - 1, i + 2)])
            res = minimize_scalar(lambda g: -self._loglik_and_score(g, counts)[0],
                                  bounds=(lo, hi), method="bounded",
                                  options={"xatol": self.tol})
            root = float(res.x)
            evals += int(res.nfev)

        # grid maximum stands in for the exact optimum value when the caller
        # only needs the estimate (bootstrap fast path)
        ll_opt = self._loglik_and_score(root, counts)[0] if want_loglik else float(ll[i])
        return EstimatorResult(root, "MLE", nu, iterations=evals, loglik=ll_opt)

    def __call__(self, frames: FrameSet) -> EstimatorResult:
        return self._fit(frames, np.arange(frames.n_frames))


def mle_estimate(frames: FrameSet, scheme: MeasurementScheme | None = None,
                 nbar_t: float | None = None, meter: MeterParams | None = None,
                 calib: DetectorCalib | None = None, *,
                 bracket: float | None = None, tol: float | None = None) -> EstimatorResult:
    """Maximum-likelihood estimate of g from a frame set."""
    if frames.n_frames < 1:
        raise ValueError("need at least one frame")
    est = MleEstimator(scheme or frames.scheme,
                       frames.nbar_t if nbar_t is None else nbar_t,
                       meter or frames.meter, calib or frames.calib,
                       bracket=bracket, tol=tol)
    return est(frames)


# ---------------------------------------------------------------------------
# Center of mass
# ---------------------------------------------------------------------------

class ComEstimator:
    """Dark-subtracted centroid, averaged over frames.

    Per frame g_hat = (sum_j w_j x_j - X0) / Re(A_w) with
    w_j = (k_j - mu_d) / sum_j (k_j - mu_d); Re(A_w) = 1 for CM.
    """

    kind = "COM"

    def __init__(self, calib: DetectorCalib | None = None,
                 meter: MeterParams | None = None):
        self.calib = calib
        self.meter = meter
        self._pool_id = None
        self._per_frame: np.ndarray | None = None

    def per_frame(self, frames: FrameSet) -> np.ndarray:
        calib, meter = _context(frames, self.calib, self.meter)
        x = pixel_centers(calib, meter)
        d = frames.readouts.astype(float) - calib.mu_d
        tot = d.sum(axis=1)
        if np.any(tot <= 0.0):
            raise EmptySignal("dark-subtracted frame total <= 0; centroid undefined")
        return ((d @ x) / tot - meter.x0) / _deamplification(frames.scheme)

    def _bind(self, pool: FrameSet) -> None:
        if self._pool_id != id(pool.readouts):
            self._per_frame = self.per_frame(pool)
            self._pool_id = id(pool.readouts)

    def estimate_indices(self, pool: FrameSet, indices) -> float:
        self._bind(pool)
        return float(self._per_frame[np.asarray(indices)].mean())

    def __call__(self, frames: FrameSet) -> EstimatorResult:
        vals = self.per_frame(frames)
        return EstimatorResult(float(vals.mean()), "COM", frames.n_frames)


def com_estimate(frames: FrameSet, calib: DetectorCalib | None = None,
                 meter: MeterParams | None = None) -> EstimatorResult:
    """Center-of-mass estimate of g, mean over frames."""
    return ComEstimator(calib, meter)(frames)


# ---------------------------------------------------------------------------
# Split detection
# ---------------------------------------------------------------------------

def _sd_sections(x: np.ndarray, x0: float) -> tuple[np.ndarray, np.ndarray]:
    """Split the grid at X0.  Section 'l' is the side a positive displacement
    moves the beam into (x > X0), so that xi > 0 matches the convention
    xi = sqrt(2/pi)/sigma; a center pixel exactly at X0 joins neither side."""
    return x > x0, x < x0


def sd_xi_no_saturation(meter: MeterParams) -> float:
    """Analytic CM split-detection sensitivity before saturation: sqrt(2/pi)/sigma."""
    return math.sqrt(2.0 / math.pi) / meter.sigma


def sd_sensitivity(scheme: MeasurementScheme, nbar_t: float,
                   meter: MeterParams, calib: DetectorCalib) -> float:
    """Model-derived SD sensitivity xi = d E[W_l - W_r] / dg at g = 0.

    Uses the exact readout means E[k_j] (including saturation lumping), so xi
    shrinks when the beam center saturates; in the ideal no-saturation limit
    it reduces to sqrt(2/pi)/sigma for CM and sqrt(2/pi) A_w/sigma for RWVA.
    """
    x, nbar, dnbar = expected_arrays(scheme, 0.0, nbar_t, meter, calib)
    tau = len(x)
    ek = np.empty(tau)
    dek = np.empty(tau)
    for j in range(tau):
        win = readout_pmf_window(float(nbar[j]), calib)
        ks = win.k0 + np.arange(len(win.probs), dtype=float)
        ek[j] = float(np.dot(ks, win.probs))
        dek[j] = calib.eta * dnbar[j] * float(np.dot(ks, win.uprobs))
    left, right = _sd_sections(x, meter.x0)
    s_l, s_r = (ek[left] - calib.mu_d).sum(), (ek[right] - calib.mu_d).sum()
    tot = s_l + s_r
    if tot <= 0.0:
        raise EmptySignal("expected dark-subtracted total <= 0; xi undefined")
    d_l, d_r = dek[left].sum(), dek[right].sum()
    # quotient rule on (S_l - S_r)/(S_l + S_r)
    return ((d_l - d_r) * tot - (s_l - s_r) * (d_l + d_r)) / tot**2


class SdEstimator:
    """Split detection about X0: g_hat = (W_l - W_r)/xi, mean over frames."""

    kind = "SD"

    def __init__(self, xi: float | None = None, calib: DetectorCalib | None = None,
                 meter: MeterParams | None = None):
        self.xi = xi
        self.calib = calib
        self.meter = meter
        self._pool_id = None
        self._per_frame: np.ndarray | None = None

    def per_frame(self, frames: FrameSet) -> np.ndarray:
        calib, meter = _context(frames, self.calib, self.meter)
        x = pixel_centers(calib, meter)
        left, right = _sd_sections(x, meter.x0)
        d = frames.readouts.astype(float) - calib.mu_d
        s_l = d[:, left].sum(axis=1)
        s_r = d[:, right].sum(axis=1)
        tot = s_l + s_r
        if np.any(tot <= 0.0):
            raise EmptySignal("dark-subtracted section total <= 0; weights undefined")
        xi = self.xi
        if xi is None:
            xi = sd_sensitivity(frames.scheme, frames.nbar_t, meter, calib)
        return (s_l - s_r) / tot / xi

    def _bind(self, pool: FrameSet) -> None:
        if self._pool_id != id(pool.readouts):
            self._per_frame = self.per_frame(pool)
            self._pool_id = id(pool.readouts)

    def estimate_indices(self, pool: FrameSet, indices) -> float:
        self._bind(pool)
        return float(self._per_frame[np.asarray(indices)].mean())

    def __call__(self, frames: FrameSet) -> EstimatorResult:
        vals = self.per_frame(frames)
        return EstimatorResult(float(vals.mean()), "SD", frames.n_frames)


def sd_estimate(frames: FrameSet, calib: DetectorCalib | None = None,
                meter: MeterParams | None = None,
                xi: float | None = None) -> EstimatorResult:
    """Split-detection estimate of g, mean over frames."""
    return SdEstimator(xi, calib, meter)(frames)


# ---------------------------------------------------------------------------
# Bootstrap
# ---------------------------------------------------------------------------

def bootstrap_precision(frame_pool: FrameSet, estimator, nu: int = 300,
                        resamples: int = 200, seed: int = 0) -> PrecisionPoint:
    """delta_g from bootstrap resampling of a frame pool.

    Draws nu frames with replacement per resample, runs the estimator, and
    returns the sample standard deviation of the estimates together with its
    large-sample standard error  se = sqrt((m4 - m2^2)/R) / (2 delta_g)
    built from the second and fourth central moments of the estimates.

    estimator is either a callable FrameSet -> EstimatorResult or an object
    with an estimate_indices(pool, indices) -> float fast path (MleEstimator,
    ComEstimator, SdEstimator), which shares pool-level precomputation across
    resamples.
    """
    if frame_pool.n_frames < nu:
        raise ValueError(f"pool has {frame_pool.n_frames} frames; need >= nu = {nu}")
    if resamples < 2:
        raise ValueError("need at least 2 resamples")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), 0xB007)))
    idx = rng.integers(0, frame_pool.n_frames, size=(resamples, nu))

    fast = getattr(estimator, "estimate_indices", None)
    est = np.empty(resamples)
    for r in range(resamples):
        if fast is not None:
            est[r] = fast(frame_pool, idx[r])
        else:
            est[r] = estimator(frame_pool.subset(idx[r])).g_hat

    kind = getattr(estimator, "kind", getattr(estimator, "__name__", "custom"))
    mean = float(est.mean())
    dev = est - mean
    m2 = float(np.mean(dev**2))
    m4 = float(np.mean(dev**4))
    delta_g = float(np.std(est, ddof=1))
    if delta_g > 0.0:
        err = math.sqrt(max(m4 - m2 * m2, 0.0) / resamples) / (2.0 * delta_g)
    else:
        err = 0.0
    return PrecisionPoint(frame_pool.nbar_t, frame_pool.scheme, str(kind),
                          delta_g, err, resamples, g_mean=mean)
