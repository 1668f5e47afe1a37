"""Reconstruction of complete textured 3D avatars from sparse RGBD frames."""

__version__ = "0.1.0"

from . import errors  # noqa: F401
