"""Backward Euler finite elements for the heat equation with duality and
energy based L-infinity(L2) a posteriori error estimators."""

from .accumulation import (DualityCoefficients, EnergyAccumulator, duality_coeffs,
                           energy_coeff, energy_coeffs, lambda_fn)
from .bench import BenchmarkProblem, StudyConfig, eoc, run_study
from .estimators import (EstimatorState, duality_max_total, duality_total,
                         effectivity_indices, energy_total)
from .fespace import DiffusionMatrix, DofVector, FeSpace
from .indicators import EstimatorConstants, StepIndicators, compute_indicators
from .mesh import TriangleMesh, interior_edge_sets, mesh_size_max, uniform_square_mesh
from .timestepper import HeatProblem, SchemeConfig, TimePartition, run

__version__ = "0.1.0"
