"""Spatial-mode-multiplexed free-space link model: LG beam coupling into a
few-mode fiber, misalignment statistics and ZFBF capacity."""

__version__ = "0.1.0"

from .beam_math import ModeIndex, FiberSpec, BeamGeometry, propagate_geometry  # noqa: F401
from .quadrature import QuadratureSpec, integrate_2d  # noqa: F401
from .coupling import ApertureSpec, OverlapEngine, coupling_efficiency, far_field_smf_efficiency  # noqa: F401
from .channel import MisalignmentStats, Misalignment, ChannelMatrix, build_channel_matrix  # noqa: F401
from .capacity import DetectorConfig, PowerBudget, capacity_no_zfbf, capacity_zfbf  # noqa: F401
