# Global variables that are constant after the programs arguments have been
# parsed.

from pathlib import Path

# Experiment defaults.
DEFAULT_ALPHA = 6.0
DEFAULT_NU = 1e-4
DEFAULT_NEUMANN_FACE = 'x=0'
DEFAULT_LEVELS = [2, 4, 8]
# Appended to the default levels by --fine.
FINE_LEVEL = 16
DEFAULT_COND_LEVELS = [2, 4]
DEFAULT_ALPHAS = [2.0, 4.0, 6.0, 8.0, 12.0, 16.0]
DEFAULT_SEED = 7
DEFAULT_SAMPLES = 100

# h in the penalty and stabilization terms: the element size |det J|^(1/3), the facet
# and element diameters, or the largest diameter.
H_MODES = ['element', 'per_facet', 'global']
DEFAULT_H_MODE = 'element'
METHODS = ['hdg', 'mcs', 'both']

# Axis aligned faces of the unit cube, as (axis, coordinate).
CUBE_FACES = {
    'x=0': (0, 0.0),
    'x=1': (0, 1.0),
    'y=0': (1, 0.0),
    'y=1': (1, 1.0),
    'z=0': (2, 0.0),
    'z=1': (2, 1.0),
}

# Quadrature rules are tabulated up to this total degree.
MAX_QUADRATURE_DEGREE = 12

# Systems below this dimension are solved with a dense LU.
DENSE_SOLVE_THRESHOLD = 2000
# Relative pivot size below which a factorization counts as singular.
PIVOT_TOLERANCE = 1e-14

RESIDUAL_TOLERANCE = 1e-10
DIV_FREE_TOLERANCE = 1e-10
ROBUSTNESS_TOLERANCE = 1e-8
IDENTITY_TOLERANCE = 1e-12
WEAK_SYMMETRY_TOLERANCE = 1e-8

# Eigenvalue estimation.
EIGEN_TOLERANCE = 1e-8
EIGEN_MAXITER = 5000

# Acceptance brackets.
EOC_ENERGY_RANGE = (0.8, 1.2)
EOC_L2_RANGE = (1.7, 2.2)
COND_GROWTH_RANGE = (2.5, 6.0)
# Rates and condition growth are checked on pairs of levels whose coarser n is at least this.
ASYMPTOTIC_LEVEL = 4
# The MCS condition number is compared with the HDG ones from this n on.
COND_ORDER_LEVEL = 2
BRACKET_STABILITY = 0.5

# 6 significant digits in scientific notation.
CSV_FLOAT_FORMAT = '%.5e'

SETTINGS_FILE = 'stokes.yaml'

# The root directory of the repository.
tools_root = Path(__file__).resolve().parent.parent

# Below here is some global state that will be filled in main().

args = None

# The number of warnings and errors encountered.
# The program will return non-zero when the number of errors is nonzero.
n_error = 0
n_warn = 0

# Set to true when running as a test.
RUNNING_TEST = False
