"""Poisson x Gaussian readout-distribution kernel.

Computes, for one pixel with expected photons nbar, the readout pmf

    P(k) = sum_N Poisson(N; eta*nbar) * R(k|N)

together with its derivative with respect to the Poisson rate
(d/dlambda; the caller scales by dlambda/dg).  R(k|N) is the binned
Gaussian response: mean gain*N + mu_d, std s = sqrt(sigma_d^2 + sigma_a^2),
integrated over unit bins, negative tail lumped into k = 0 and everything
at or above k_s - 1/2 lumped into k = k_s.

The edge CDF  C(e) = sum_N w_N Phi((e - mu_N)/s)  is the cost driver.  When
the gain is an integer the means mu_N sit on the same unit lattice as the bin
edges, so C over all edges is a single discrete convolution of the Poisson
weights with a shared normal-CDF sweep (FFT for large windows).  Non-integer
gains fall back to a chunked band accumulation, truncating each Gaussian at
Z_SIGMA standard deviations.  Both paths are O(window + k-range), never
O(k_s * window).

Probabilities are assembled as CDF differences, so they telescope to exactly 1
regardless of truncation; the rate-derivative is projected to sum exactly to 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve
from scipy.special import ndtr
from scipy.stats import poisson

from .errors import TruncationFailure

Z_SIGMA = 8.0
_POISSON_TAIL = 1e-12
# below this size product, exact np.convolve beats FFT and avoids ringing
_DIRECT_CONV_LIMIT = 1 << 20


def poisson_window(lam: float) -> tuple[int, int]:
    """N in [floor(lam - 12 sqrt(lam) - 30), ceil(lam + 12 sqrt(lam) + 50)], clipped at 0."""
    if lam < 0.0:
        raise ValueError("Poisson rate must be >= 0")
    if lam == 0.0:
        return 0, 1
    r = math.sqrt(lam)
    n0 = max(0, math.floor(lam - 12.0 * r - 30.0))
    n1 = math.ceil(lam + 12.0 * r + 50.0)
    return n0, n1


@dataclass(frozen=True)
class PmfWindow:
    """Readout pmf on the active k-range [k0, k0 + len(probs) - 1].

    Entries outside the window are exactly zero by construction; the first and
    last entries absorb any sub-truncation tail so that probs sums to 1.
    uprobs is dP/dlambda on the same support and sums to 0.
    """

    k0: int
    probs: np.ndarray
    uprobs: np.ndarray


def _conv(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if len(a) * len(b) <= _DIRECT_CONV_LIMIT:
        return np.convolve(a, b)
    return fftconvolve(a, b)


def _edge_sums_lattice(w, uw, mu0, gain_int, edges0, n_edges, s):
    """C(e) and U(e) at edges edges0 + i, i < n_edges, via lattice convolution."""
    W = len(w)
    delta = edges0 - mu0
    d = np.arange(-gain_int * (W - 1), n_edges)
    kern = ndtr((delta + d) / s)
    if gain_int == 1:
        wu, uwu = w, uw
    else:
        wu = np.zeros(gain_int * (W - 1) + 1)
        uwu = np.zeros_like(wu)
        wu[::gain_int] = w
        uwu[::gain_int] = uw
    off = gain_int * (W - 1)
    c = _conv(wu, kern)[off:off + n_edges]
    u = _conv(uwu, kern)[off:off + n_edges]
    return c, u


def _edge_sums_banded(w, uw, mu, edges, s):
    """General-gain path: per-mean Gaussian band plus cumulative full mass."""
    m = len(edges)
    c = np.zeros(m)
    u = np.zeros(m)
    cfull = np.zeros(m + 1)
    ufull = np.zeros(m + 1)
    band = int(math.ceil(2.0 * Z_SIGMA * s)) + 3
    chunk = max(1, int(4e6 / band))
    offs = np.arange(band)
    for i0 in range(0, len(mu), chunk):
        mus = mu[i0:i0 + chunk]
        ws = w[i0:i0 + chunk]
        uws = uw[i0:i0 + chunk]
        start = np.searchsorted(edges, mus - Z_SIGMA * s)
        idx = start[:, None] + offs[None, :]
        valid = idx < m
        idxc = np.minimum(idx, m - 1)
        phi = ndtr((edges[idxc] - mus[:, None]) / s)
        np.add.at(c, idxc[valid], (ws[:, None] * phi)[valid])
        np.add.at(u, idxc[valid], (uws[:, None] * phi)[valid])
        # edges beyond the band see the full weight
        stop = np.minimum(start + band, m)
        np.add.at(cfull, stop, ws)
        np.add.at(ufull, stop, uws)
    c += np.cumsum(cfull)[:m]
    u += np.cumsum(ufull)[:m]
    return c, u


def readout_pmf_window(nbar: float, calib) -> PmfWindow:
    """P(k) and dP/dlambda for a pixel expecting nbar photons."""
    if nbar < 0.0:
        raise ValueError("nbar must be >= 0")
    from .detector import classical_noise_sigma

    lam = calib.eta * nbar
    n0, n1 = poisson_window(lam)
    if poisson.cdf(n0 - 1, lam) + poisson.sf(n1, lam) > _POISSON_TAIL:
        raise TruncationFailure(
            f"Poisson window [{n0}, {n1}] misses more than {_POISSON_TAIL} mass at rate {lam}"
        )
    n = np.arange(n0, n1 + 1)
    w = poisson.pmf(n, lam)
    if lam > 0.0:
        uw = w * (n / lam - 1.0)
    else:
        # d/dlambda Poisson(N; 0) is -1 at N=0 and +1 at N=1
        uw = np.zeros_like(w)
        uw[0] = -1.0
        if len(uw) > 1:
            uw[1] = 1.0

    sa = float(classical_noise_sigma(nbar, calib))
    s = math.sqrt(calib.sigma_d**2 + sa * sa)
    mu = calib.gain * n + calib.mu_d
    k_s = calib.k_s

    if s == 0.0:
        # point-mass response (ideal / degenerate-noise convention)
        targets = np.clip(np.rint(mu), 0, k_s).astype(np.int64)
        k0, k1 = int(targets[0]), int(targets[-1])
        probs = np.zeros(k1 - k0 + 1)
        uprobs = np.zeros_like(probs)
        np.add.at(probs, targets - k0, w)
        np.add.at(uprobs, targets - k0, uw)
        # fold the truncated Poisson tails into the boundary bins
        probs[0] += poisson.cdf(n0 - 1, lam)
        probs[-1] += poisson.sf(n1, lam)
        return PmfWindow(k0, probs, uprobs - uprobs.sum() * probs)

    if mu[0] - Z_SIGMA * s > k_s - 0.5:  # everything lumps at saturation
        return PmfWindow(k_s, np.array([1.0]), np.array([0.0]))
    if mu[-1] + Z_SIGMA * s < 0.5:  # everything lumps at zero
        return PmfWindow(0, np.array([1.0]), np.array([0.0]))

    k0 = max(0, int(math.floor(mu[0] - Z_SIGMA * s - 1.0)))
    k1 = min(k_s, int(math.ceil(mu[-1] + Z_SIGMA * s + 1.0)))
    n_edges = k1 - k0  # edges at k0+1/2 .. k1-1/2
    if n_edges <= 0:
        return PmfWindow(k0, np.array([1.0]), np.array([0.0]))

    gain_int = int(round(calib.gain))
    if abs(calib.gain - gain_int) < 1e-12 and gain_int >= 1:
        c, u = _edge_sums_lattice(w, uw, mu[0], gain_int, k0 + 0.5, n_edges, s)
    else:
        edges = k0 + 0.5 + np.arange(n_edges)
        c, u = _edge_sums_banded(w, uw, mu, edges, s)

    probs = np.empty(k1 - k0 + 1)
    probs[0] = c[0]
    probs[1:-1] = np.diff(c)
    probs[-1] = 1.0 - c[-1]
    np.clip(probs, 0.0, None, out=probs)

    uprobs = np.empty_like(probs)
    uprobs[0] = u[0]
    uprobs[1:-1] = np.diff(u)
    uprobs[-1] = uw.sum() - u[-1]
    # truncation leaves a ~1e-12 residual; project it out so sum is exactly 0
    uprobs -= uprobs.sum() * probs
    return PmfWindow(k0, probs, uprobs)
