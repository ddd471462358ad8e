"""Spectral solver and verification harness for time-harmonic elastic wave
scattering above unbounded rough rigid surfaces."""

from .errors import (ConfigError, ConstraintError, DiagnosticError,
                     ElastripError, NonConvergenceError, SingularTransformError)
from .params import (BoundReport, ElasticParams, StabilityConstants,
                     StripGeometry, bound_constants, stability_constants,
                     total_bound_stochastic, vertical_wavenumber)
from .dtn import (BoundaryTrace, DtnSymbol, SpectralGrid, decompose_trace,
                  dtn_symbol, energy_flux, extend_field, mode_traction,
                  verify_symbol_properties, verify_symbol_suite)
from .geometry import (CoefficientLaw, CutoffFn, HarmonicTerm, SurfaceProfile,
                       invert_vertical, make_profile, sample_ensemble,
                       transform_map)
from .sources import BumpSource
from .mesh import StripMesh
from .solver import (DiscreteField, LinearSystem, ModeFieldSmooth,
                     StripOperator, TransformCoefficients,
                     assemble_flat_blocks, assemble_rhs, assemble_system,
                     coercivity_probe, energy_balance, flat_mode_oracle,
                     poincare_slack, rellich_identity_residual,
                     rellich_residual, solve_field, solve_flat, solve_system,
                     vh_norm)
from .config import RunConfig, from_dict, load_config
from .harness import (McReport, RunReport, deterministic_run, monte_carlo,
                      parameter_sweep, pushforward_check)

__version__ = "0.1.0"
