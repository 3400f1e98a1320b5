"""Quantum-state algebra for the displacement measurement.

A Gaussian meter state of width ``sigma`` (so the intensity profile
|Phi0(q)|^2 is a normal density with std ``sigma``) is displaced by ``g``.
In the conventional scheme (CM) the meter is read out directly.  In the
ancilla-assisted scheme a two-level system is pre-selected in
|psi_i> = cos(theta_i/2)|0> + sin(theta_i/2) e^{i phi_i}|1>, coupled through
g*A*P with A = |0><0| - |1><1|, and post-selected on |psi_f>.  The exact
post-selected meter state is the two-Gaussian superposition

    alpha * Phi0(q - g) + beta * Phi0(q + g),

with alpha = cos(theta_f/2) cos(theta_i/2) and
beta = sin(theta_f/2) sin(theta_i/2) e^{i(phi_i - phi_f)}.

Angle convention: a "negative" post-selection angle -theta is encoded as
QubitState(theta, phi=pi), which flips the sign of beta.  This convention
reproduces the published (A_w, P_f) = (4.13, 0.0585) pair for the 76-degree
setting; see ``selection_pair``.

All lengths are millimetres.  Everything here is a pure function of its
(immutable) inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OrthogonalSelection

# |<psi_f|psi_i>| below this is treated as an orthogonal selection.
OVERLAP_CUTOFF = 1e-12

# Beam width of the reference experiment (mm).
DEFAULT_SIGMA_MM = 0.472


@dataclass(frozen=True)
class QubitState:
    """Point on the Bloch sphere; amplitudes (cos(t/2), sin(t/2) e^{i phi})."""

    theta: float
    phi: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.theta <= math.pi + 1e-12:
            raise ValueError(f"theta must lie in [0, pi], got {self.theta}")

    @property
    def amplitudes(self) -> tuple[complex, complex]:
        return (
            complex(math.cos(self.theta / 2.0)),
            math.sin(self.theta / 2.0) * complex(math.cos(self.phi), math.sin(self.phi)),
        )


def qubit_from_degrees(theta_deg: float, phi_deg: float = 0.0) -> QubitState:
    """Build a QubitState from degrees; negative theta maps to (|theta|, phi+180)."""
    theta = math.radians(theta_deg)
    phi = math.radians(phi_deg)
    if theta < 0.0:
        theta = -theta
        phi += math.pi
    return QubitState(theta, phi % (2.0 * math.pi))


def selection_pair(theta_i_deg: float) -> tuple[QubitState, QubitState]:
    """The theta_i = -theta_f selection family used throughout the experiment.

    Returns (pre, post) with pre at +theta_i and post at -theta_i (sign carried
    by phi = pi).  For this family A_w = 1/cos(theta_i) and P_f -> cos^2(theta_i)
    as g -> 0.
    """
    return qubit_from_degrees(theta_i_deg), qubit_from_degrees(-theta_i_deg)


@dataclass(frozen=True)
class MeterParams:
    """Gaussian meter: width sigma (mm) and beam/grid centre x0 (mm)."""

    sigma: float = DEFAULT_SIGMA_MM
    x0: float = 0.0

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")


# Dimensionless mode of the theory figures: 2*sigma = 1.
FIGURE_METER = MeterParams(sigma=0.5, x0=0.0)


@dataclass(frozen=True)
class SuperpositionAmplitudes:
    """Weights of Phi0(q-g) and Phi0(q+g) in the exact post-selected meter."""

    alpha: complex
    beta: complex

    @property
    def overlap(self) -> complex:
        """<psi_f|psi_i> = alpha + beta."""
        return self.alpha + self.beta


def superposition_amplitudes(pre: QubitState, post: QubitState) -> SuperpositionAmplitudes:
    ci, si = pre.amplitudes
    cf, sf = post.amplitudes
    # alpha/beta are cos(tf/2)cos(ti/2) and sin(tf/2)sin(ti/2) e^{i(phi_i-phi_f)}.
    return SuperpositionAmplitudes(alpha=cf.conjugate() * ci, beta=sf.conjugate() * si)


def weak_value(pre: QubitState, post: QubitState) -> complex:
    """A_w = <psi_f|A|psi_i>/<psi_f|psi_i> for A = |0><0| - |1><1|."""
    amps = superposition_amplitudes(pre, post)
    denom = amps.overlap
    if abs(denom) <= OVERLAP_CUTOFF:
        raise OrthogonalSelection(
            f"|<psi_f|psi_i>| = {abs(denom):.3e} <= {OVERLAP_CUTOFF:.0e}"
        )
    return (amps.alpha - amps.beta) / denom


@dataclass(frozen=True)
class MeasurementScheme:
    """CM, or WVA with a real (RWVA) / imaginary (IWVA) weak value."""

    kind: str  # "CM" | "RWVA" | "IWVA"
    pre: QubitState | None = None
    post: QubitState | None = None

    def __post_init__(self):
        if self.kind not in ("CM", "RWVA", "IWVA"):
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        if self.kind == "CM":
            if self.pre is not None or self.post is not None:
                raise ValueError("CM carries no selection states")
            return
        if self.pre is None or self.post is None:
            raise ValueError(f"{self.kind} needs pre and post selection states")
        aw = self.weak_value
        scale = max(1.0, abs(aw))
        if self.kind == "RWVA" and abs(aw.imag) > 1e-12 * scale:
            raise ValueError(f"RWVA requires a real weak value, got {aw}")
        if self.kind == "IWVA" and abs(aw.real) > 1e-12 * scale:
            raise ValueError(f"IWVA requires an imaginary weak value, got {aw}")

    @property
    def is_cm(self) -> bool:
        return self.kind == "CM"

    @property
    def amplitudes(self) -> SuperpositionAmplitudes:
        if self.is_cm:
            return SuperpositionAmplitudes(alpha=1.0 + 0.0j, beta=0.0j)
        return superposition_amplitudes(self.pre, self.post)

    @property
    def weak_value(self) -> complex:
        if self.is_cm:
            return 1.0 + 0.0j
        return weak_value(self.pre, self.post)

    @property
    def pf0(self) -> float:
        """Post-selection probability in the g -> 0 limit."""
        if self.is_cm:
            return 1.0
        return abs(self.amplitudes.overlap) ** 2

    def describe(self) -> dict:
        d = {"kind": self.kind}
        if not self.is_cm:
            d.update(
                pre_theta=self.pre.theta,
                pre_phi=self.pre.phi,
                post_theta=self.post.theta,
                post_phi=self.post.phi,
                weak_value=[self.weak_value.real, self.weak_value.imag],
                pf0=self.pf0,
            )
        return d


CM = MeasurementScheme("CM")


def rwva_scheme(theta_i_deg: float) -> MeasurementScheme:
    """RWVA with the theta_i = -theta_f convention (phi = 0)."""
    pre, post = selection_pair(theta_i_deg)
    return MeasurementScheme("RWVA", pre, post)


def postselection_probability(
    pre: QubitState, post: QubitState, g: float, meter: MeterParams
) -> float:
    """Exact P_f(g) = |alpha|^2 + |beta|^2 + 2 Re(alpha beta*) exp(-g^2/(2 sigma^2))."""
    amps = superposition_amplitudes(pre, post)
    a, b = amps.alpha, amps.beta
    cross = 2.0 * (a * b.conjugate()).real
    return abs(a) ** 2 + abs(b) ** 2 + cross * math.exp(-(g * g) / (2.0 * meter.sigma**2))


def scheme_pf(scheme: MeasurementScheme, g: float, meter: MeterParams) -> float:
    if scheme.is_cm:
        return 1.0
    return postselection_probability(scheme.pre, scheme.post, g, meter)


def _gauss_amp(x, sigma):
    """Phi0 amplitude: (2 pi sigma^2)^{-1/4} exp(-x^2/(4 sigma^2))."""
    return (2.0 * math.pi * sigma**2) ** (-0.25) * np.exp(-(x * x) / (4.0 * sigma**2))


def meter_pdf_q(scheme: MeasurementScheme, g: float, meter: MeterParams, q) -> np.ndarray:
    """Normalized position density of the final meter state (per mm)."""
    q = np.asarray(q, dtype=float)
    s = meter.sigma
    if scheme.is_cm:
        x = q - meter.x0 - g
        return np.exp(-(x * x) / (2.0 * s * s)) / (s * math.sqrt(2.0 * math.pi))
    amps = scheme.amplitudes
    pf = scheme_pf(scheme, g, meter)
    if pf <= OVERLAP_CUTOFF**2:
        raise OrthogonalSelection(f"P_f(g) = {pf:.3e} is numerically zero")
    amp = amps.alpha * _gauss_amp(q - meter.x0 - g, s) + amps.beta * _gauss_amp(
        q - meter.x0 + g, s
    )
    return (amp.real**2 + amp.imag**2) / pf


def meter_pdf_p(scheme: MeasurementScheme, g: float, meter: MeterParams, p) -> np.ndarray:
    """Normalized momentum density of the final meter state (per mm^-1)."""
    p = np.asarray(p, dtype=float)
    s = meter.sigma
    # |Phi0~(p)|^2 is a normal density with std 1/(2 sigma).
    base = math.sqrt(2.0 / math.pi) * s * np.exp(-2.0 * s * s * p * p)
    if scheme.is_cm:
        return base
    amps = scheme.amplitudes
    pf = scheme_pf(scheme, g, meter)
    if pf <= OVERLAP_CUTOFF**2:
        raise OrthogonalSelection(f"P_f(g) = {pf:.3e} is numerically zero")
    phase = np.exp(-1j * g * p)
    amp = amps.alpha * phase + amps.beta * np.conj(phase)
    return (amp.real**2 + amp.imag**2) * base / pf


def mean_shift_q_first_order(scheme: MeasurementScheme, g: float) -> float:
    """Weak-regime diagnostic: <q> - x0 ~ g Re(A_w)."""
    return g * scheme.weak_value.real


def mean_shift_p_first_order(scheme: MeasurementScheme, g: float, meter: MeterParams) -> float:
    """Weak-regime diagnostic: <p> ~ g Im(A_w)/(2 sigma^2)."""
    return g * scheme.weak_value.imag / (2.0 * meter.sigma**2)


@dataclass(frozen=True)
class DensityComponents:
    """Unnormalized position density as a 3-Gaussian mixture.

    u(q) = sum_i w[i] * N(q; mean[i], sigma) with
    w = (|alpha|^2, |beta|^2, 2 Re(alpha beta*) exp(-g^2/(2 sigma^2))),
    means = (x0 + g, x0 - g, x0).  Integrates to P_f(g); dividing by P_f gives
    the normalized meter pdf.  dweights_dg / dmeans_dg carry the exact
    g-derivative of each piece.
    """

    weights: tuple[float, float, float]
    means: tuple[float, float, float]
    sigma: float
    dweights_dg: tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))
    dmeans_dg: tuple[float, float, float] = field(default=(1.0, -1.0, 0.0))

    @property
    def total(self) -> float:
        return sum(self.weights)


def density_components(scheme: MeasurementScheme, g: float, meter: MeterParams) -> DensityComponents:
    """Exact mixture decomposition of the unnormalized |<q|Phi_f>|^2 (or |<q|Phi_c>|^2)."""
    s = meter.sigma
    if scheme.is_cm:
        return DensityComponents(
            weights=(1.0, 0.0, 0.0), means=(meter.x0 + g, meter.x0 - g, meter.x0), sigma=s
        )
    amps = scheme.amplitudes
    a, b = amps.alpha, amps.beta
    cross0 = 2.0 * (a * b.conjugate()).real
    env = math.exp(-(g * g) / (2.0 * s * s))
    w = (abs(a) ** 2, abs(b) ** 2, cross0 * env)
    dw = (0.0, 0.0, -cross0 * env * g / (s * s))
    return DensityComponents(
        weights=w,
        means=(meter.x0 + g, meter.x0 - g, meter.x0),
        sigma=s,
        dweights_dg=dw,
    )
