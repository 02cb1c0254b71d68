"""Simultaneous phase retrieval and tomographic reconstruction for X-ray
phase contrast imaging by a regularized Gauss-Newton method."""

from .grids import GridSpec, IntensityData, ObjectVolume, inner_product, norm, read_array, write_array
from .forward import ForwardModel, make_model, forward, intensity, linearize
from .radon import build_projector
from .regularization import Constraint, DataGramian, ObjectGramian
from .solver import CGPolicy, SolverConfig, StopRule, run

__version__ = "0.1.0"
