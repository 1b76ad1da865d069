"""Defect production in slowly ramped dissipative quantum chains.

The package follows one momentum mode of a quadratic open chain whose
environmental coupling is switched on linearly over a ramp time tau, in
two variants: the trace-preserving evolution of the full dissipator and
the trace-decaying conditioned (no-recycling) evolution.  Layers:

``params``/``core``
    mode parameters, the 4x4 supermatrices, closed-form eigensystems
    with their exceptional points, spectral projections.
``integrators``
    embedded Runge-Kutta, batched matrix exponentials, commutator-free
    exponential stepping.
``series``
    exact-rational inverse-ramp-time expansion of the late-time defect,
    its convergence diagnostics and closed leading order.
``propagate``
    trajectory sampling and batched end-of-ramp defect evaluation for
    both variants, with selectable stationary references.
``nojump``
    the reduced conditioned system, its slow-expansion coefficients on a
    spectral grid, and the universal rescaling near the exceptional
    point that the ramp endpoint touches.
``sweep``
    momentum quadrature of the defect density, ramp-time sweeps and
    power-law exponent fits.
``cli``
    the ``lindblad-ramp`` command line front end.
"""

from .errors import (DegenerateMode, EPDegenerate, GridTooCoarse,
                     LindbladRampError, NonFiniteState, OrderOverflow,
                     QuadratureNonConvergent, RadiusExceeded, SignChange,
                     SingularPoint, StepSizeUnderflow)
from .params import CoherenceVector, ModeParams, RampProtocol
from .core import (EigenSystem, build_supermatrix, eigensystem, find_ep,
                   initial_ground_state, project_onto_eigenbasis,
                   reconstruct, steady_state)
from .integrators import expm_batch, exponential, rk4, rk45
from .series import (ConvergenceReport, PMState, SeriesCoefficient,
                     coefficients_gapless, coefficients_gapped,
                     convergence_report, defect_from_pm, pm_rhs_gapless,
                     pm_rhs_gapped, predict_defect_gapped)
from .propagate import (DefectRecord, IntegrationControls, Trajectory,
                        defect_at_end, defect_full_batch,
                        defect_nojump_batch, evolve,
                        nojump_closed_reference, residual_check,
                        supermatrix_parts)
from .nojump import (GridCoefficient, NoJumpState, ScalingCollapse,
                     integrated_kz_exponent, nojump_coefficients,
                     nojump_evolve, nojump_rhs, scaling_collapse,
                     series_defect)
from .sweep import (DensityRecord, ExponentFit, QuadratureSpec, SweepPlan,
                    default_quadrature, fit_exponent, momentum_integral,
                    tau_sweep)

__version__ = "0.1.0"

__all__ = [
    "CoherenceVector", "ModeParams", "RampProtocol",
    "EigenSystem", "build_supermatrix", "eigensystem", "find_ep",
    "initial_ground_state", "project_onto_eigenbasis", "reconstruct",
    "steady_state",
    "expm_batch", "exponential", "rk4", "rk45",
    "ConvergenceReport", "PMState", "SeriesCoefficient",
    "coefficients_gapless", "coefficients_gapped", "convergence_report",
    "defect_from_pm", "pm_rhs_gapless", "pm_rhs_gapped",
    "predict_defect_gapped",
    "DefectRecord", "IntegrationControls", "Trajectory", "defect_at_end",
    "defect_full_batch", "defect_nojump_batch", "evolve",
    "nojump_closed_reference", "residual_check", "supermatrix_parts",
    "GridCoefficient", "NoJumpState", "ScalingCollapse",
    "integrated_kz_exponent", "nojump_coefficients", "nojump_evolve",
    "nojump_rhs", "scaling_collapse", "series_defect",
    "DensityRecord", "ExponentFit", "QuadratureSpec", "SweepPlan",
    "default_quadrature", "fit_exponent", "momentum_integral", "tau_sweep",
    "LindbladRampError", "DegenerateMode", "EPDegenerate",
    "StepSizeUnderflow", "NonFiniteState", "OrderOverflow",
    "RadiusExceeded", "SingularPoint", "GridTooCoarse",
    "QuadratureNonConvergent", "SignChange",
    "__version__",
]
