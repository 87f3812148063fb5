# Optimizer defaults (Adam on the prior's latent code)
DEFAULT_LEARNING_RATE = 0.005
DEFAULT_STEPS = 100
DEFAULT_FAST_MAX_LEARNING_RATE = 0.05
DEFAULT_RESTARTS = 1
DEFAULT_RELAX_INTERVAL = 10
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

DEFAULT_OPTIM_CONFIG = {
    "lr": DEFAULT_LEARNING_RATE,
    "steps": DEFAULT_STEPS,
    "max_lr": DEFAULT_FAST_MAX_LEARNING_RATE,
    "fast": False,
    "restarts": DEFAULT_RESTARTS,
    "relax_interval": DEFAULT_RELAX_INTERVAL,
    "beta1": ADAM_BETA1,
    "beta2": ADAM_BETA2,
    "eps": ADAM_EPSILON,
    "seed": 0,
    "workers": 1,
}

# IK+Reg regularization weight
DEFAULT_IK_REG_WEIGHT = 1.0

# Motion sampling
DEFAULT_FPS = 20.0
DEFAULT_FRAMES = 60
DEFAULT_DCT_COEFFICIENTS = 8
STANDING_ROOT_HEIGHT = 0.95

# Metrics
FOOT_HEIGHT_THRESHOLD = 0.05  # meters
FOOT_SPEED_THRESHOLD = 0.50  # meters / second
SUCCESS_THRESHOLD = 0.05  # meters
BONE_LENGTH_TOLERANCE = 0.025  # meters
DEFAULT_BONE = "head"  # neck bone, identified by its child joint

# Atoms
SUPPORT_DISC_RADIUS = 0.10  # meters
SUPPORT_DISC_SAMPLES = 16
DEFAULT_FAR_BOUND = 1.0  # meters

# Environment variables
CORPUS_ENV_VAR = "MOPROC_CORPUS"
LOG_LEVEL_ENV_VAR = "MOPROC_LOG_LEVEL"
