"""Numeric constants for the laboratory"""

# Return-time sampling
DEFAULT_RETURN_CAP = 10**7            # censoring cap for first-return times
RETURN_BLOCK_START = 64               # first block of letters drawn per excursion
RETURN_BLOCK_MAX = 1 << 16            # block size stops doubling here
RETURN_BLOCK_ELEMENTS = 1 << 22       # letters drawn at once across walkers
WALKERS_PER_STREAM = 1024             # walkers sharing one replica RNG stream

# Linear algebra tolerances
GAP_TOLERANCE = 1e-9                  # kappa[r-1] - kappa[r] must exceed this
FLAG_TOLERANCE = 1e-10                # orthonormality / lookahead convergence
GROWTH_RELATIVE_SLACK = 1e-9
GROWTH_ABSOLUTE_FLOOR = 64 * 2.220446049250313e-16

# Flag lookahead
DEFAULT_LOOKAHEAD = 200
LOOKAHEAD_CHUNK = 25

# Equidistribution
BURN_IN = 1000
WEYL_KMAX = 3
BUMP_CENTERS = (-2.0, -1.0, 0.0, 1.0, 2.0)

# Lattice dynamic programming
DP_SUPPORT_LIMIT = 10**7
RATIONAL_RETURN_KMAX = 1000

# Joint local limit theorem
JOINT_LLT_N_CAP = 400
LYAPUNOV_CENTERING_N = 10**4
LYAPUNOV_CENTERING_REPLICAS = 100

# Drift certificate
MAX_CENSORED_FRACTION = 0.01
CERTIFY_RETURN_CAP = 10**6

# Fiber sampling
FIBER_BATCH = 4096
WRAP_AROUND_LIMIT = 0.25
NORM_CONTROL_QUANTILE = 0.95

# Batched products
RENORMALIZE_EVERY = 8
