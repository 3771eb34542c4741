"""Stochastic implicit proximal point solver for linearly constrained finite-sum minimax problems."""
__version__ = "0.1.0"
