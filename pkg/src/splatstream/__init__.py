"""splatstream: streaming multi-scale anchored Gaussian splatting.

A deterministic CPU implementation of a scale-hierarchical streaming
Gaussian-splatting trainer: anchored neural Gaussians, a software rasterizer
with analytic gradients, hybrid deformation/spawning updates, redundancy
pruning, and bidirectional adaptive masking, plus a synthetic-scene oracle
pipeline and CLI.
"""

from ._accel import BACKEND, USE_NUMBA

__version__ = "0.1.0"
__all__ = ["BACKEND", "USE_NUMBA", "__version__"]
