"""cibeam: interference-exploiting symbol-level precoding for MIMO-radar
and MU-MISO downlink spectrum sharing.

Transmit beamformers push multi-user interference into the constructive
region of each user's PSK decision sector while capping (or minimizing)
the power leaked into a co-channel MIMO radar, and the radar side is
scored with GLRT detection probability and DoA Cramer-Rao bounds.
"""

from .ci import (BeamformingSolution, CiProblem, InfeasibleError,
                 build_ci_problem, db_to_lin, dbm_to_mw, evaluate,
                 lin_to_db, recover_solution, solve_interf_min,
                 solve_p5_ipm)
from .estimators import (CiInterferenceMinBeamformer, CiPowerMinBeamformer,
                         RobustCiBeamformer)
from .gp import DualState, GpOptions, dual_value_and_gradient, fast_path, \
    solve_gp
from .qcqp import (LinearIneq, NumericalFailureError, QcqpInfeasibleError,
                   QcqpOptions, QcqpResult, QcqpSpec, QuadIneq, SocIneq,
                   solve as solve_qcqp)
from .radar import (CrbReport, DegenerateGeometryError, DetectionReport,
                    crb, crb_schur, detection_probability,
                    detection_threshold, glrt_statistic,
                    interference_covariance, marcum_q1, matched_filter,
                    monte_carlo_detection, noncentrality, wilson_interval)
from .robust import (RobustCiProblem, build_robust_problem, solve_robust,
                     worst_case_gamma)
from .scene import (ChannelSet, RadarScene, SymbolFrame, gen_channels,
                    perturb_channels, psk_frame, radar_waveform,
                    steering_derivative, steering_vector, ula_positions)

__version__ = "0.1.0"

__all__ = [
    "BeamformingSolution", "ChannelSet", "CiInterferenceMinBeamformer",
    "CiPowerMinBeamformer", "CiProblem", "CrbReport", "DegenerateGeometryError",
    "DetectionReport", "DualState", "GpOptions", "InfeasibleError",
    "LinearIneq", "NumericalFailureError", "QcqpInfeasibleError",
    "QcqpOptions", "QcqpResult", "QcqpSpec", "QuadIneq", "RadarScene",
    "RobustCiBeamformer", "RobustCiProblem", "SocIneq", "SymbolFrame",
    "build_ci_problem", "build_robust_problem", "crb", "crb_schur",
    "db_to_lin", "dbm_to_mw", "detection_probability", "detection_threshold",
    "dual_value_and_gradient", "evaluate", "fast_path", "gen_channels",
    "glrt_statistic", "interference_covariance", "lin_to_db", "marcum_q1",
    "matched_filter", "monte_carlo_detection", "noncentrality",
    "perturb_channels", "psk_frame", "radar_waveform", "recover_solution",
    "solve_gp", "solve_interf_min", "solve_p5_ipm", "solve_qcqp",
    "solve_robust", "steering_derivative", "steering_vector", "ula_positions",
    "wilson_interval", "worst_case_gamma",
]
