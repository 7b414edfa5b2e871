"""Numerical tolerances shared by every module.

All thresholds live here so that a change of policy happens in one place.
"""

# Two roots closer than this are treated as a shared root (coprimality,
# pole-zero cancellation).
ROOT_TOL = 1e-7

# Routh array pivots below this (relative to the largest coefficient) are
# reported as degenerate instead of being perturbed.
ROUTH_ZERO_PIVOT_TOL = 1e-10

# Relative residual allowed for a root returned by ``roots``.
ROOT_RESIDUAL_TOL = 1e-8

# Smallest relative singular value of the normalized Sylvester matrix for
# two polynomials to be called coprime.
SYLVESTER_SV_TOL = 1e-12

# Remainder norm under which a polynomial division is considered exact.
EXACT_DIVISION_TOL = 1e-10

# Largest condition number accepted for a similarity transformation.
SIMILARITY_COND_MAX = 1e12

# Largest pivot ratio accepted when solving (sI - A) x = B.
POLE_PIVOT_TOL = 1e-13

# Residual bound on the Monopoli matching identity.
MATCHING_RESIDUAL_TOL = 1e-8

# Stand-in for the accuracy of fixed-step RK4 at the default step on
# unit-scale dynamics; used for trajectory comparisons.
INTEGRATOR_TOL = 1e-9

# Frequency grid: 20 points per decade over [1e-2, 1e2] rad/s.
FREQ_GRID_DECADES = (-2.0, 2.0)
FREQ_GRID_POINTS_PER_DECADE = 20

# Simulation defaults.
DEFAULT_STEP = 1e-3
DEFAULT_HORIZON = 50.0
DEFAULT_DIVERGENCE_BOUND = 1e6
CONVERGENCE_THRESHOLD = 1e-3
