"""Linear macromodel toolkit for a four-stage single-Miller-compensated OTA.

Builds and calibrates the stage-level small-signal model, analyzes it both
through closed-form stability expressions and an exact descriptor-system
engine, solves the drivable load-capacitance window, simulates linear and
slew-limited step responses, and benchmarks power-efficiency figures of
merit against the published state-of-the-art survey.
"""

from .analysis import (ApproxCoeffs, CrossValidation, LoadRangeResult,
                       PhaseMarginApprox, SecondOrderParams, StabilityReport,
                       approx_coeffs, cl_max_approx, cl_min_approx,
                       cross_validate, exact_pair_damping, load_range_exact,
                       phase_margin_approx, second_order_params,
                       stability_metrics_approx, stability_metrics_exact,
                       unity_crossover_hz)
from .benchmark import (BenchEntry, BenchmarkReport, FomInputs,
                        benchmark_report, fom_large, fom_small, load_dataset)
from .engine import (DescriptorSystem, Doublet, FrequencyResponse, PoleZeroSet,
                     ac_response, assemble_descriptor, default_grid,
                     detect_doublets, poles_zeros)
from .errors import (CalibrationInfeasible, EigensolverFailure,
                     InconsistentEntry, IntegratorStall, InvalidParameter,
                     NoCrossover, NoSolution, NoValidRange, OtaError,
                     ParseError, SingularAtFrequency, ValidityViolated)
from .macromodel import (CalibrationTargets, CompensationParams, LoadCondition,
                         OtaMacromodel, StageParams, ValidityReport,
                         build_model, calibrate_reference, check_validity,
                         model_from_dict, model_to_dict, paper_targets,
                         parse_model_file, reference_model, write_model_file)
from .montecarlo import (McReport, MetricStats, SigmaSpec, mc_statistics,
                         sample_model, sample_models)
from .transient import (SlewEstimate, StageCurrents, StepResponse,
                        calibrate_currents, compute_step_metrics, linear_step,
                        mid_ramp_slope, slew_limited_step, slew_rate_full,
                        slew_rate_simplified)
from .units import format_si, parse_value

__version__ = "0.1.0"
