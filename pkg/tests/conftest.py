import numpy as np
import pytest

from wvamp import DetectorCalib, MeterParams, rwva_scheme, sample_frames, CM


@pytest.fixture(scope="session")
def meter():
    return MeterParams()


@pytest.fixture(scope="session")
def calib():
    return DetectorCalib()


@pytest.fixture(scope="session")
def small_calib():
    """Default noise model on a narrower strip (+-3 sigma), for faster tests."""
    return DetectorCalib(n_pixels=221)


@pytest.fixture(scope="session")
def rwva76():
    return rwva_scheme(76.0)


@pytest.fixture(scope="session")
def small_pool(rwva76, meter, small_calib):
    """Shared RWVA pool at the protocol flux on the narrow strip."""
    return sample_frames(rwva76, 1e-3, 1e7, meter, small_calib, seed=314, n_frames=400)


@pytest.fixture(scope="session")
def cm_pool(meter, small_calib):
    return sample_frames(CM, 1e-3, 1e6, meter, small_calib, seed=2718, n_frames=400)
