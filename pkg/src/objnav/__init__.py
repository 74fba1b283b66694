"""Object-goal navigation evaluation engine.

Procedurally generates indoor scenes, compiles filtered episode datasets,
simulates a discrete-action embodied agent with no-sliding collisions, and
scores trajectories with the standard success criterion and SPL, either
in-process or over a newline-delimited JSON wire protocol.
"""

__version__ = "0.1.0"

from .scene import (  # noqa: F401
    CategoryVocabulary,
    DEFAULT_VOCABULARY,
    MP3D_CATEGORIES,
    ObjectInstance,
    OrientedBox,
    Scene,
    SceneGenParams,
    distance_to_obb,
    generate_scene,
    is_navigable,
    load_scene,
    raycast,
    save_scene,
)
from .nav import (  # noqa: F401
    GeodesicField,
    NavGrid,
    action_path_length,
    build_navgrid,
    geodesic_distance,
    geodesic_field,
    shortest_path,
)
from .goalzone import (  # noqa: F401
    Viewpoint,
    VisibilityConfig,
    compute_viewpoints,
    in_view,
    oracle_visible,
)
from .sim import Action, AgentConfig, AgentState, Observation, Simulator, reset  # noqa: F401
from .episodes import (  # noqa: F401
    Episode,
    GenerationProfile,
    HABITAT_PROFILE,
    PROFILES,
    ROBOTHOR_PROFILE,
    dataset_stats,
    difficulty_bin,
    generate_episodes,
    read_dataset,
    write_dataset,
)
from .metrics import (  # noqa: F401
    EpisodeResult,
    EvalConfig,
    MetricsReport,
    SuccessMode,
    VisibilityMode,
    aggregate,
    evaluate_success,
    spl,
    turning_invariance_check,
    variance_diagnostic,
)
from .evalserver import (  # noqa: F401
    OracleAgent,
    RandomAgent,
    StopAgent,
    oracle_agent,
    run_local,
)
from .server import EvalServer, SessionConfig, SessionRecord, serve  # noqa: F401
