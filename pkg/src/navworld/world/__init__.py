from .backend import backend_name, default_fov, get_backend, render_frame
from .env import (
    ACTION_REPEAT,
    ENV_STEPS_PER_SECOND,
    N_ACTIONS,
    MazeEnv,
    Observation,
    Pose,
    random_policy_score,
)
from .layout import (
    APPLE,
    KINDS,
    STRAWBERRY,
    MazeLayout,
    generate_layout,
    layout_from_text,
    layout_to_text,
    sample_episode_placements,
)

__all__ = [
    "ACTION_REPEAT",
    "APPLE",
    "ENV_STEPS_PER_SECOND",
    "KINDS",
    "MazeEnv",
    "MazeLayout",
    "N_ACTIONS",
    "Observation",
    "Pose",
    "STRAWBERRY",
    "backend_name",
    "default_fov",
    "generate_layout",
    "get_backend",
    "layout_from_text",
    "layout_to_text",
    "random_policy_score",
    "render_frame",
    "sample_episode_placements",
]
