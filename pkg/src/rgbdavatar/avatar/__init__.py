"""Personalized reposable avatars built from fused reconstructions."""

from .arap import deform_with_pins
from .avatar import (PersonalizedAvatar, load_avatar, local_frames,
                     personalize, repose, reshape, save_avatar,
                     skinning_repose, transfer_detail)

__all__ = [
    "PersonalizedAvatar",
    "deform_with_pins",
    "load_avatar",
    "local_frames",
    "personalize",
    "repose",
    "reshape",
    "save_avatar",
    "skinning_repose",
    "transfer_detail",
]
