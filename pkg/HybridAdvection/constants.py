"""
Constants and numerical settings for the hybrid advection system.

This module centralizes the numbers the solvers, the data pipeline and the
network share, so that a threshold is defined once and imported everywhere
it is needed.
"""

import math
from typing import Dict, List, Tuple

# =============================================================================
# GRID CONSTANTS
# =============================================================================

# Lipschitz constant used in the refinement criterion
DEFAULT_LIP = 1.2

# Deepest level whose lattice coordinates stay exact in double precision
MAX_LEVEL = 26

# Largest lattice extent per axis (vertex keys must stay exact integers)
MAX_LATTICE_EXTENT = 2**26

# Offsets of the 3x3 neighborhood around a node, center excluded
STENCIL_OFFSETS: List[Tuple[int, int]] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
]

# Cell corner slots in (i, j) order: 00, 01, 10, 11
CORNER_SLOTS: List[Tuple[int, int]] = [(0, 0), (0, 1), (1, 0), (1, 1)]

# =============================================================================
# FIELD OPERATOR CONSTANTS
# =============================================================================

# Gradient norms below this are treated as degenerate
GRADIENT_EPS = 1e-10

# Default number of reinitialization iterations per time step
DEFAULT_NU = 10

# Pseudo-time step as a fraction of h_min
PSEUDO_TIME_FACTOR = 0.5

# Maximum angle between -sign(phi) n and u for a node to be lagging the flow
THETA_W = 19.0 * math.pi / 36.0

# Band half-width (in units of h_min) for the negative-flow selection
NEGATIVE_FLOW_BAND = 2.0 * math.sqrt(2.0)

# =============================================================================
# DATA PACKET LAYOUT
# =============================================================================

# Zero-velocity threshold for the packet validity test
VELOCITY_EPS = 1e-10

PACKET_COLUMNS: List[str] = [
    "phi_a",
    "u_hat_a_x",
    "u_hat_a_y",
    "d",
    "xd_rel_x",
    "xd_rel_y",
    "phi_00",
    "phi_01",
    "phi_10",
    "phi_11",
    "u_00_x",
    "u_00_y",
    "u_01_x",
    "u_01_y",
    "u_10_x",
    "u_10_y",
    "u_11_x",
    "u_11_y",
    "phixx_d",
    "phiyy_d",
    "kappa_a",
    "phi_d",
]
PACKET_SIZE = len(PACKET_COLUMNS)
TARGET_COLUMN = "target"

COL: Dict[str, int] = {name: i for i, name in enumerate(PACKET_COLUMNS)}

# Feature groups sharing one mean/deviation pair
FEATURE_GROUPS: Dict[str, List[str]] = {
    "phi": ["phi_a", "phi_00", "phi_01", "phi_10", "phi_11", "phi_d"],
    "u": [
        "u_hat_a_x",
        "u_hat_a_y",
        "u_00_x",
        "u_00_y",
        "u_01_x",
        "u_01_y",
        "u_10_x",
        "u_10_y",
        "u_11_x",
        "u_11_y",
    ],
    "d": ["d"],
    "coords": ["xd_rel_x", "xd_rel_y"],
    "xxyy": ["phixx_d", "phiyy_d"],
    "kappa": ["kappa_a"],
}

# =============================================================================
# HYBRID STEP CONSTANTS
# =============================================================================

# Revert when |phi* - phi_d| / h exceeds this
GUARD_RELATIVE = 0.15

# Revert when |phi* - phi_a| reaches this many h
GUARD_ABSOLUTE = 1.0

# Warn when more than this share of corrected nodes reverts in one step
REVERSION_WARNING_SHARE = 0.5

# =============================================================================
# LEARNING DEFAULTS
# =============================================================================

DEFAULT_N_COMPONENTS = 17
DEFAULT_HIDDEN_UNITS = 130
N_HIDDEN_LAYERS = 4
WHITENING_FLOOR = 1e-12
MODEL_FORMAT_VERSION = 1

# =============================================================================
# DATASET GENERATION DEFAULTS
# =============================================================================

STREAM_MODES = 5
STREAM_WAVENUMBERS = (1, 2, 3)
SPEED_LATTICE_RESOLUTION = 512
MAX_FIELD_REDRAWS = 10
MIN_BIN_MEMBERS = 4
SPLIT_FOLDS = 10

# =============================================================================
# BENCHMARKS
# =============================================================================

AREA_SUBCELLS = 16
ROTATION_RADIUS = 0.15
ROTATION_CENTER = (0.0, 0.75)
ROTATION_PERIOD = 2.0 * math.pi * math.sqrt(2.0)
VORTEX_RADIUS = 0.15
VORTEX_CENTER = (0.5, 0.75)
VORTEX_T_MID = 0.625
