"""Stochastic proximal splitting: forward-backward and primal-dual solvers
with inexact gradients and proximity operators, and an online image
restoration pipeline driven by a randomly subsampled blur."""

__version__ = "0.1.0"
