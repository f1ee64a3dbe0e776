"""Particle/fluid simulator for kinetic Cucker-Smale flocking coupled to incompressible Navier-Stokes on the torus."""

__version__ = "0.1.0"

from .config import ConfigError, SimConfig, load_config, preset
from .diagnostics import DiagnosticsRecord, lyapunov, snapshot, v_infinity
from .fitting import ExponentialDecayRegressor, fit_decay_rate
from .fluid import BlowUpError, FluidState, fluid_step, taylor_green
from .heat_kernel import HeatKernelQuery, bound_check, gamma
from .kinetic import CommunicationWeight, ParticleEnsemble, Toggles, step_coupled
from .simulate import RunResult, run
from .torus import GridField, SpectralField, forward_transform, inverse_transform
from .transport import Atoms, wasserstein_exact

__all__ = [
    "Atoms",
    "BlowUpError",
    "CommunicationWeight",
    "ConfigError",
    "DiagnosticsRecord",
    "ExponentialDecayRegressor",
    "FluidState",
    "GridField",
    "HeatKernelQuery",
    "ParticleEnsemble",
    "RunResult",
    "SimConfig",
    "SpectralField",
    "Toggles",
    "bound_check",
    "fit_decay_rate",
    "fluid_step",
    "forward_transform",
    "gamma",
    "inverse_transform",
    "load_config",
    "lyapunov",
    "preset",
    "run",
    "snapshot",
    "step_coupled",
    "taylor_green",
    "v_infinity",
    "wasserstein_exact",
]
