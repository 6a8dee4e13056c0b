"""Stochastic particle simulation of a diffusively heated granular gas.

Subpackages by concern: collision kinematics (:mod:`gkin.kinematics`),
angular scattering law (:mod:`gkin.cross_section`), the particle engine
(:mod:`gkin.engine`), ensemble diagnostics (:mod:`gkin.observables`),
inequality/identity verification suites (:mod:`gkin.theory_checks`),
steady-state and tail analysis (:mod:`gkin.tail_analysis`), binary
checkpoints (:mod:`gkin.checkpoint`), and configuration plus command-line
entry points (:mod:`gkin.config`, :mod:`gkin.cli`).
"""

__version__ = "0.1.0"

from .checkpoint import load_checkpoint, save_checkpoint
from .config import parse_config
from .cross_section import AngularKernel
from .engine import (Ensemble, InitSpec, KernelSpec, SimConfig, Simulator,
                     init_ensemble, run)
from .kinematics import CollisionParams
from .observables import ObservableSeries
from .tail_analysis import SpeedHistogram, detect_steady, fit_tail
from .theory_checks import ConvexTestFunction, run_all_suites

__all__ = [
    "AngularKernel", "ConvexTestFunction", "Ensemble", "InitSpec",
    "KernelSpec", "ObservableSeries", "SimConfig", "Simulator",
    "SpeedHistogram", "CollisionParams", "detect_steady", "fit_tail",
    "init_ensemble", "load_checkpoint", "parse_config", "run",
    "run_all_suites", "save_checkpoint", "__version__",
]
