"""Finite range decompositions of lattice Green kernels and their verification."""

from .lattice import TorusGeometry
from .elliptic import Generator, MultiIndexSet, laplacian, random_generator
from .base import Decomposition, base_decomposition
from .improved import estimate_K, final_decomposition, improved_decomposition

__all__ = [
    "TorusGeometry", "Generator", "MultiIndexSet", "laplacian", "random_generator",
    "Decomposition", "base_decomposition", "improved_decomposition", "final_decomposition",
    "estimate_K",
]
