"""Generalized Swanson Hamiltonians, their Hermitian equivalents and second-derivative (pseudo-)supersymmetry on a grid."""

__version__ = "0.1.0"
