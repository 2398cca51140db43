"""Constants for the ISAQN simulator."""

from logging import Logger, getLogger

LOGGER: Logger = getLogger(__package__)

DOMAIN = "isaqn_sim"
REPORT_SCHEMA_VERSION = 1

# Fused-silica defaults
DEFAULT_WAVELENGTH_M = 1550e-9
DEFAULT_REFRACTIVE_INDEX = 1.468
DEFAULT_POISSON_RATIO = 0.17
DEFAULT_P11 = 0.121
DEFAULT_P12 = 0.270
DEFAULT_ATTENUATION_DB_PER_KM = 0.2
DEFAULT_FIBER_LIGHT_SPEED_MPS = 2.0e8

# Ring PZT with 2.5 m of wound fiber, d chosen so 10 V gives ~891 rad
DEFAULT_PZT_D_COEFF = 2.1094e-7
DEFAULT_PZT_OUTER_RADIUS_M = 27.5e-3
DEFAULT_PZT_THICKNESS_M = 0.95e-3
DEFAULT_PZT_WOUND_FIBER_M = 2.5

# Framing
DEFAULT_PILOT_PERIOD = 10
DEFAULT_PILOT_AMPLITUDE_SNU = 10.0
DEFAULT_SYNC_LENGTH = 64
DEFAULT_SYMBOLS_PER_FRAME = 100_000
SYNC_WORD_SEED = 0x5EED

# Pulse shaping
RRC_ROLLOFF = 0.3

# Detection and protocol
DEFAULT_QUANTUM_EFFICIENCY = 0.42
DEFAULT_ELECTRONIC_NOISE_SNU = 0.18
DEFAULT_BETA = 0.98
DEFAULT_REP_RATE_HZ = 50e6
DEFAULT_MODULATION_VARIANCE_SNU = 12.0
MIN_PILOT_SNR = 3.0
MIN_SYNC_PSR = 3.0
MIN_ALIGNMENT_CORRELATION = 0.1
MIN_ESTIMATION_SYMBOLS = 10_000

# Channel
DEFAULT_CASTDOWN_DB = 6.0
DEFAULT_ACTIVITY_THRESHOLD_RAD_S = 6.283185307179586

# Spectrum monitoring
CASTDOWN_THRESHOLD_DB = 3.0
SPLITTING_THRESHOLD_DB = 6.0
MONITOR_SEGMENT = 2**18
MONITOR_GUARD_BINS = 8

# Sensing
SUSPEND_PHASE_STEP_RAD = 0.7853981633974483
PSD_SEGMENT = 2**12
PSD_TONE_GUARD_BINS = 3
MIN_PRECISION_TRIALS = 1000
CALIBRATION_PILOT_PERIOD = 2

# Localization
DEFAULT_WAVE_SPEED_MPS = 6000.0
DEFAULT_ATTENUATION_REF_M = 1000.0
MAX_LOCATE_RESIDUAL_M = 10.0
AMBIGUITY_TOLERANCE_M = 1.0
MIN_TDOA_CORRELATION = 0.5

# Profiles
PROFILE_PAPER = "paper-scale"
PROFILE_DESK = "desk-scale"
DESK_FREQUENCY_SCALE = 1e-3

# CLI exit codes
EXIT_OK = 0
EXIT_NODE_FAILURE = 1
EXIT_CONFIG_ERROR = 2
