"""Exception types shared across the package."""


class WvampError(Exception):
    """Base class for all package-specific errors."""


class OrthogonalSelection(WvampError):
    """Pre- and post-selection are (numerically) orthogonal; the weak value diverges."""


class DegenerateNoise(WvampError):
    """Detector response has zero total noise variance.

    Not normally raised: the zero-noise case is handled by returning a point
    mass. Kept as a named type so callers can opt into strict behaviour.
    """


class TruncationFailure(WvampError):
    """Poisson window cap reached before the requested tail mass was covered."""


class UndefinedGamma(WvampError):
    """Per-pixel SNR coefficient is undefined because the signal derivative vanishes."""


class InfeasiblePf(WvampError):
    """No pre/post-selection pair attains the requested post-selection probability."""


class BracketFailure(WvampError):
    """Likelihood maximum sits on the search-bracket edge even after widening."""


class EmptySignal(WvampError):
    """Dark-subtracted frame total is non-positive; centroid weights are undefined."""


class ConfigError(WvampError):
    """Scenario/config file failed validation; message carries the offending key."""
