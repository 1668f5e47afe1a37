"""Seam-free texture atlas construction for reconstructed avatars."""

from .atlas import (TextureAtlas, empty_atlas, pose_model_to_view,
                    project_reference, save_atlas, select_views,
                    texture_model, texture_view, view_scores)
from .render import SENTINEL, render_model_view, visible_faces
from .warp import WarpField, solve_warp, warp_energy, warp_image

__all__ = [
    "SENTINEL",
    "TextureAtlas",
    "WarpField",
    "empty_atlas",
    "pose_model_to_view",
    "project_reference",
    "render_model_view",
    "save_atlas",
    "select_views",
    "solve_warp",
    "texture_model",
    "texture_view",
    "view_scores",
    "visible_faces",
    "warp_energy",
    "warp_image",
]
