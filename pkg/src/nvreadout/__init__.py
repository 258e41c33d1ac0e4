"""Simulation of dispersive microwave readout of a spin ensemble in a cavity.

Submodules: :mod:`model` (parameters and Maxwell-Bloch equations),
:mod:`integrate` (adaptive Dormand-Prince), :mod:`dispersive` (adiabatic
solver), :mod:`noise`, :mod:`readout`, :mod:`sweep`, :mod:`config` and
:mod:`cli`.
"""
__version__ = "0.1.0"

from .model import DriveParams, FullState, SystemParams  # noqa: E402
from .integrate import IntegratorConfig, integrate  # noqa: E402
from .noise import PhaseNoiseTable, noise_total  # noqa: E402
from .readout import ProtocolParams, evaluate, inverse_fidelity, optimize_drive  # noqa: E402

__all__ = [
    "DriveParams", "FullState", "SystemParams", "IntegratorConfig", "integrate",
    "PhaseNoiseTable", "noise_total", "ProtocolParams", "evaluate", "inverse_fidelity",
    "optimize_drive", "__version__",
]
