"""Numerical direct/inverse scattering for focusing NLS with step-like
elliptic (genus-one) boundary conditions.

Pipeline: elliptic backgrounds and their spectral curves -> Jost solutions
and scattering data for two-sided step data -> Cauchy factorization of the
scattering coefficients -> reflection coefficients -> inverse Riemann-Hilbert
reconstruction of u(x,t), cross-checked against a split-step PDE integrator.
"""

from .special import elliptic_K, elliptic_E, theta, theta_prime, jacobi_elliptic, landen_ascend
from .contours import Arc, Contour
from .curve import (
    EllipticParams,
    CurveData,
    R_eval,
    differentials,
    curve_constants,
    quasi_momentum,
    quasi_energy,
    abel_map,
    trace_spectrum,
    classify_crossing,
)
from .background import (
    Background,
    make_background,
    u0_theta,
    u0_closed,
    u0_mean_square,
    W0_matrix,
    O_matrix,
    legacy_roots_form,
)
from .cauchy import (
    DensityOnContour,
    panel_quadrature,
    sample_density,
    cauchy_transform,
    plemelj_boundary,
    boundary_values_matrix,
    endpoint_log_coefficient,
)

__version__ = "0.1.0"
