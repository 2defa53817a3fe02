"""Pseudospectral solvers, norm diagnostics and Fourier-side blow-up certificates
for parabolic-elliptic drift-diffusion systems with Poisson coupling."""

from .spectral import SpectralField, TorusGrid, forward_transform, inverse_transform
from .models import SystemSpec, build_preset
from .solver import SolverConfig, Trajectory, run

__all__ = [
    "SpectralField", "TorusGrid", "forward_transform", "inverse_transform",
    "SystemSpec", "build_preset", "SolverConfig", "Trajectory", "run",
]
__version__ = "0.1.0"
