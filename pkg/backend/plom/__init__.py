"""Probabilistic learning on manifolds with diffusion-maps and transient-kernel bases"""

__version__ = "0.1.0"
