from .model import BuildConfig, Column, IlpModel, Row, build_model, extract_allocation
from .solver import IlpSolution, SolveConfig, solve

__all__ = [
    "BuildConfig",
    "Column",
    "IlpModel",
    "IlpSolution",
    "Row",
    "SolveConfig",
    "build_model",
    "extract_allocation",
    "solve",
]
