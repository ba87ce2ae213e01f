"""
Configuration settings for copula boosting runs.

Values can be overridden through environment variables or a .env file.
"""
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Logging
LOG_LEVEL = os.getenv("COPULA_BOOST_LOG_LEVEL", "INFO")

# Parallelism
DEFAULT_THREADS = int(os.getenv("COPULA_BOOST_THREADS", "1"))

# Boosting settings
DEFAULT_STEP = 0.1
DEFAULT_MSTOP = int(os.getenv("COPULA_BOOST_MSTOP", "1000"))
DEFAULT_STABILIZATION = "L2"
DEFAULT_OFFSET_MODE = "mle"

# Base-learner settings
DEFAULT_DF = 4.0
DEFAULT_LINEAR_DF = 2.0
DEFAULT_INNER_KNOTS = 20
DEFAULT_DEGREE = 3
DEFAULT_DIFF_ORDER = 2
LAMBDA_LOG_BRACKET = (-20.0, 20.0)
DF_TOLERANCE = 1e-4
RIDGE_JITTER = 1e-10

# Numerical guards
TRIM_EPS = 1e-12
MASS_FLOOR = 1e-300
GRADIENT_PROB_CLAMP = 1e-12
OFFSET_CLAMP = 1e-6
FRANK_INDEPENDENCE_EPS = 1e-8
COUNT_QUANTILE_CAP = 10_000_000
LOGSER_TAIL_TOL = 1e-17
GRADIENT_REL_STEP = 1e-6
BISECTION_TOL = 1e-12

# Scoring settings
DEFAULT_ENERGY_SAMPLES = int(os.getenv("COPULA_BOOST_ENERGY_SAMPLES", "1000"))

# Simulation settings
DEFAULT_PARTITION = (1000, 1500, 1000)
SIMULATION_BLOCK_SIZE = 1024
TOEPLITZ_RHO = 0.5

# Model file settings
MODEL_FILE_VERSION = "1.0"
