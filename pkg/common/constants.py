# Lie algebra
RANK_RELATIVE_THRESHOLD = 1e-9
REGULARITY_SAMPLES = 8
REGULARITY_RADIUS = 1e-4
DEFAULT_MAX_DEPTH = 6

# Non-holonomic derivatives dead-zone: below ZERO is zero, above NONZERO is non-zero, in between is ambiguous
DERIVATIVE_ZERO = 1e-8
DERIVATIVE_NONZERO = 1e-6

# Finite differences
FD_RELATIVE_STEP = 1e-6

# Privileged coordinates and homogeneous approximation
SINGULAR_FRAME_CONDITION = 1e12
RICHARDSON_EPSILONS = (1e-2, 5e-3, 2.5e-3)
COEFFICIENT_ZERO = 1e-8
DIVERGENCE_RESIDUAL = 1e-6
HOMOGENEITY_SAMPLES = 200

# OCP
RK4_SUBSTEPS = 4
SOLVER_MAX_ITER = 2000
SOLVER_TOLERANCE = 1e-8
NONMONOTONE_WINDOW = 5
ARMIJO_SLOPE = 1e-4
RANDOM_RESTARTS = 8

# Newton polish: iteration cap, eigenvalue floor relative to the largest curvature, and the band within which a step
# that lowers the projected gradient is accepted although the objective does not decrease measurably
NEWTON_MAX_ITER = 30
NEWTON_EIGENVALUE_FLOOR = 1e-10
ROUNDOFF_BAND = 1e-13

# Smallest homogeneous norm used to dilate an OCP
DILATION_FLOOR = 1e-12

# MPC
INSUFFICIENCY_TOLERANCE = 1e-12
ROOT_FINDING_RESTARTS = 100
CONVERGENCE_FLOOR = 1e-12
