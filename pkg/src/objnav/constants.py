"""Embodiment, sensor, and dataset-filter constants shared across modules.

These are the canonical defaults for the supported agent profile (a LoCoBot-like
differential-drive base) and the episode filters the dataset generator applies.
Every value is overridable through the corresponding config dataclass.
"""

# Agent embodiment.
AGENT_RADIUS = 0.18
AGENT_HEIGHT = 0.88
STEP_SIZE = 0.25
TURN_DEG = 30.0
TILT_DEG = 30.0
PITCH_LIMIT_DEG = 30.0

# Camera / depth sensor.
HFOV_DEG = 79.0
IMAGE_WIDTH = 640
IMAGE_HEIGHT = 480
DEPTH_MIN = 0.5
DEPTH_MAX = 6.0

# Success geometry.
SUCCESS_RADIUS = 1.0
VIEWPOINT_GEODESIC_TOLERANCE = 0.1

# Episode dataset filters.
MAX_SHORTEST_ACTIONS = 750
MIN_GEODESIC_RATIO = 1.05

# Evaluation budget.
DEFAULT_MAX_STEPS = 500
