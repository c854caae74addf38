"""Hybrid propagation constants."""

DOMAIN = "hybridprop"
INTEGRATION_NAME = "Hybrid Propagation"

KIND_DISCRETE = "discrete"
KIND_CONTINUOUS = "continuous"

CPD_TABLE = "table"
CPD_CLG = "clg"
CPD_SOFTMAX = "softmax"
CPD_UNIFORM = "uniform"
CPD_KINDS = (CPD_TABLE, CPD_CLG, CPD_SOFTMAX, CPD_UNIFORM)

# Numerical tolerances
ROW_SUM_TOLERANCE = 1e-12
DISCRETIZED_ROW_TOLERANCE = 1e-9
MIN_VARIANCE = 1e-12
EDGE_PROBABILITY_FLOOR = 1e-9
KL_FLOOR = 1e-12
COMPONENT_DEATH_WEIGHT = 1e-8

# Clique trees
DEFAULT_MAX_CONTINUOUS_PER_CLIQUE = 4

# Exact inference limits
BRUTE_FORCE_MAX_STATES = 2**22
REFERENCE_MAX_ENTRIES = 20_000_000

# Gaussian mixture EM
DEFAULT_LAMBDA = 10.0
DEFAULT_COMPONENTS = 10
DEFAULT_EM_ITERATIONS = 100
DEFAULT_EM_TOLERANCE = 1e-6

# Density trees
DEFAULT_MIN_LEAF_SAMPLES = 25
DEFAULT_PSEUDOCOUNT = 1.0

# Importance sampling
CLIP_FACTOR = 1e6
ESS_WARNING_THRESHOLD = 10.0

# Approximate propagation
DEFAULT_SAMPLES = 1000
DEFAULT_PASSES = 6
CONVERGENCE_THRESHOLD = 1e-3

# Evaluation
DEFAULT_BINS = 100
DEFAULT_SEED = 0
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
DEFAULT_SAMPLE_SWEEP = (100, 1000, 3000)
DEFAULT_LAMBDA_SWEEP = (0.001, 0.1, 10.0, 1000.0)
DENSITY_FIT_LAMBDAS = (0.001, 10.0, 1000.0)
LW_PILOT_SAMPLES = 1000

EXPERIMENT_ITERATIONS = "iterations"
EXPERIMENT_SAMPLES = "samples"
EXPERIMENT_LAMBDA = "lambda"
EXPERIMENT_LW = "lw-comparison"
EXPERIMENT_DENSITY_FIT = "density-fit"
EXPERIMENT_KINDS = (
    EXPERIMENT_ITERATIONS,
    EXPERIMENT_SAMPLES,
    EXPERIMENT_LAMBDA,
    EXPERIMENT_LW,
    EXPERIMENT_DENSITY_FIT,
)

# Configuration keys
CONF_SAMPLES = "samples"
CONF_PASSES = "passes"
CONF_LAMBDA = "lam"
CONF_COMPONENTS = "components"
CONF_MIN_LEAF = "min_leaf"
CONF_PSEUDOCOUNT = "pseudocount"
CONF_EM_ITERATIONS = "em_iterations"
CONF_EM_TOLERANCE = "em_tolerance"
CONF_SCHEDULE = "schedule"
CONF_SEED = "seed"
CONF_SEEDS = "seeds"
CONF_BINS = "bins"
CONF_MAX_CONTINUOUS = "max_continuous"
CONF_KIND = "kind"
CONF_NETWORK = "network"
CONF_SCENARIO = "scenario"
CONF_SAMPLE_SWEEP = "sample_sweep"
CONF_LAMBDA_SWEEP = "lambda_sweep"
CONF_LW_SAMPLES = "lw_samples"

CSV_PRECISION = 6
EXPERIMENT_HEADER = ("experiment", "parameter", "seed", "kl_error", "seconds")
MARGINAL_HEADER = ("variable", "value", "probability")
TRACE_HEADER = (
    "pass",
    "direction",
    "clique",
    "kind",
    "target",
    "ess",
    "clipped",
    "seconds",
    "kl_error",
)

STARTUP_MESSAGE = f"""
===================================================================
        o---o
       /     \\          {INTEGRATION_NAME}
      o   o---o         clique-tree propagation for hybrid
       \\ /     \\        Bayesian networks
        o       o
{DOMAIN}
When reporting a problem, include the network file and the command line.
===================================================================
"""
