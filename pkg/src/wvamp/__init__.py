"""wvamp: weak-value amplification vs conventional measurement of a beam
displacement, read out through a noisy, saturable pixel detector.

Submodules: qmeter (states, schemes, meter densities), detector (CCD model,
frame synthesis, container IO), fisher (outcome pmfs, Fisher information,
ideal FI-ratio scans), estimate (MLE/SD/COM + bootstrap), experiments
(figure-scale datasets), cli (command-line front end).
"""

__version__ = "1.0.0"

from .errors import (BracketFailure, ConfigError, DegenerateNoise, EmptySignal,
                     InfeasiblePf, OrthogonalSelection, TruncationFailure,
                     UndefinedGamma, WvampError)
from .qmeter import (CM, FIGURE_METER, MeasurementScheme, MeterParams, QubitState,
                     meter_pdf_p, meter_pdf_q, postselection_probability,
                     qubit_from_degrees, rwva_scheme, scheme_pf, selection_pair,
                     weak_value)
from .detector import (DetectorCalib, Frame, FrameSet, classical_noise_sigma,
                       expected_arrays, expected_counts, frames_to_csv,
                       load_frames, pixel_centers, response_pmf, sample_frame,
                       sample_frames, save_frames)
from .fisher import (FisherReport, OutcomePmf, PmfCache, fi_p_exact, fi_q_exact,
                     gamma, ideal_fi_ratio_scan, outcome_pmf, pixel_fisher,
                     qfi_cm, total_fisher)
from .estimate import (ComEstimator, EstimatorResult, MleEstimator,
                       PrecisionPoint, SdEstimator, bootstrap_precision,
                       com_estimate, mle_estimate, sd_estimate, sd_sensitivity,
                       sd_xi_no_saturation)
from .experiments import (Scenario, SweepResult, fisher_ratio_figure,
                          gamma_map_figure, optimize_postselection,
                          run_precision_sweep, snl, write_dataset)

__all__ = [name for name in dir() if not name.startswith("_")]
