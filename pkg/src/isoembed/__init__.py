"""Isometric embeddings of flat tori by a contraction-mapping iteration."""

__version__ = "0.1.0"

from .spectral import (GridSpec, ScalarField, SymTensorField, VecField, dot, inv_helmholtz,
                       laplacian, make_grid, norm_C, partial)
from .geometry import (Frame, FreenessFailure, Immersion, PerturbationSpec, Scenario,
                       build_frame, freeness_margin, make_perturbation, pullback_metric,
                       scenario_circle, scenario_flat_torus_r6)
from .operators import (LoweredQ, apply_L0, apply_M0, apply_Q0, composite_residual, q_lower,
                        splitting_residual)
from .solver import (Diverged, NotConverged, SolveConfig, SolveError, SolveReport, basin_probe,
                     isometry_residual, phi_step, solve)

__all__ = [name for name in dir() if not name.startswith("_")]
