"""Atlas label transfer by jointly optimizing forward and backward displacement fields.

Volumes are numpy arrays indexed ``[z, y, x]``; displacement fields are ``[z, y, x, 3]``
with components ordered (dx, dy, dz) in voxel units. Run configurations are JSON strings
using the same keys as the command-line tool.
"""

from ._cyclereg import (
    ConfigError,
    FormatError,
    NumericsError,
    ShapeError,
    charbonnier,
    default_config,
    dice_score,
    foreground_dice,
    gen_phantom,
    gen_smooth_field,
    gradient_suite,
    inverse_consistency_error,
    make_pair,
    optimize_pair,
    transfer_labels,
    warp_scalar,
)

__all__ = [
    "ConfigError",
    "FormatError",
    "NumericsError",
    "ShapeError",
    "charbonnier",
    "default_config",
    "dice_score",
    "foreground_dice",
    "gen_phantom",
    "gen_smooth_field",
    "gradient_suite",
    "inverse_consistency_error",
    "make_pair",
    "optimize_pair",
    "transfer_labels",
    "warp_scalar",
]
