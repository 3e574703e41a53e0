"""Monotone finite-difference solver and verification harness for nonlocal
Hamilton-Jacobi Dirichlet problems with possible loss of boundary conditions."""

__version__ = "0.1.0"
