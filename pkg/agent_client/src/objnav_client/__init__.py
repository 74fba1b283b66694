"""Remote-agent SDK for the objnav evaluation wire protocol."""

__version__ = "0.1.0"

from .client import (  # noqa: F401
    ACTION_NAMES,
    PROTOCOL_VERSION,
    ClientError,
    ClientObservation,
    EpisodeSummary,
    ProtocolMismatch,
    ServerRefused,
    Session,
    connect,
    run,
)
from .agents import BumpAndTurnPolicy, RandomPolicy, StopPolicy  # noqa: F401
