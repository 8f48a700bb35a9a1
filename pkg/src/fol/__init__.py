"""Two-stage visual place recognition engine.

Stage one retrieves candidates by global descriptor similarity; stage two
re-ranks them with mutual-NN local feature matching restricted to each
image's discriminative region mask.
"""

from .core import (
    AssignmentMatrix,
    AttentionStack,
    ClusterParams,
    DegenerateInputError,
    DiscriminativeMask,
    FeatureMap,
    FolError,
    FoltFormatError,
    GlobalDescriptor,
    LocalFeatureMap,
    LossConfig,
    cosine_sim,
)
from .folt import read_tensor, write_tensor

__version__ = "0.1.0"

__all__ = [
    "AssignmentMatrix",
    "AttentionStack",
    "ClusterParams",
    "DegenerateInputError",
    "DiscriminativeMask",
    "FeatureMap",
    "FolError",
    "FoltFormatError",
    "GlobalDescriptor",
    "LocalFeatureMap",
    "LossConfig",
    "cosine_sim",
    "read_tensor",
    "write_tensor",
    "__version__",
]
