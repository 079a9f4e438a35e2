"""Preconditioned plug-and-play reconstruction for multi-coil MRI."""

__version__ = "0.1.0"

from ._validation import ContractError
from .denoisers import (ConvDenoiser, Denoiser, IdentityDenoiser, SoftThresholdDenoiser,
                        WienerDenoiser, check_norm_equivariance, estimate_lipschitz,
                        scaled_denoise)
from .diagnostics import (StabilityBoundInputs, empirical_rate, fixed_point_residual,
                          lemma1_monitor, psnr, rate_bound, read_trace_csv, stability_bound,
                          trace_to_csv)
from .estimators import P2nPDynamic, P2nPFixed, PnPADMM, PnPISTA
from .mri import (CoilSet, ForwardModel, Trajectory, add_noise, density_compensated_adjoint,
                  make_cartesian_mask, make_radial_trajectory, make_spiral_trajectory,
                  synth_sensitivity_maps)
from .operators import LinearOperator, power_method
from .phantom import make_phantom
from .preconditioners import (DynamicPreconditioner, PolynomialPreconditioner,
                              binomial_coeffs, cheb2_coeffs, zmshr1_update)
from .solvers import (SolveConfig, SolveTrace, p2np_dynamic, p2np_fixed, pnp_admm, pnp_ista,
                      step_size)

__all__ = [
    "ContractError", "ConvDenoiser", "Denoiser", "IdentityDenoiser", "SoftThresholdDenoiser",
    "WienerDenoiser", "check_norm_equivariance", "estimate_lipschitz", "scaled_denoise",
    "StabilityBoundInputs", "empirical_rate", "fixed_point_residual", "lemma1_monitor", "psnr",
    "rate_bound", "read_trace_csv", "stability_bound", "trace_to_csv", "CoilSet", "ForwardModel",
    "Trajectory", "add_noise", "density_compensated_adjoint", "make_cartesian_mask",
    "make_radial_trajectory", "make_spiral_trajectory", "synth_sensitivity_maps",
    "LinearOperator", "power_method", "make_phantom", "DynamicPreconditioner",
    "PolynomialPreconditioner", "binomial_coeffs", "cheb2_coeffs", "zmshr1_update",
    "SolveConfig", "SolveTrace", "p2np_dynamic", "p2np_fixed", "pnp_admm", "pnp_ista",
    "step_size", "PnPISTA", "PnPADMM", "P2nPFixed", "P2nPDynamic",
]
