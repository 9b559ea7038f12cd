"""Global-rotation skeletal motion toolkit."""

__version__ = "0.1.0"

from .skeleton import GLOBAL, LOCAL, Pose, Skeleton  # noqa: F401
