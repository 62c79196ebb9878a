"""Enantiosensitive exceptional points: two-level non-Hermitian models of chiral systems."""

__version__ = "0.1.0"

from .core import (AmbiguousTrackingWarning, EigenSystem2, EPCandidate, IntegrationFailure,
                   InvalidArgument, StepControl, Trajectory, eig2, ep_locate, propagate,
                   track_branches)

__all__ = [
    "AmbiguousTrackingWarning", "EigenSystem2", "EPCandidate", "IntegrationFailure",
    "InvalidArgument", "StepControl", "Trajectory", "eig2", "ep_locate", "propagate",
    "track_branches", "__version__",
]
