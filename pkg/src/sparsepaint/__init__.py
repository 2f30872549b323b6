"""Spatial optimisation of sparse inpainting data.

Classical homogeneous diffusion inpainting with probabilistic sparsification
and non-local pixel exchange, and a Wasserstein GAN that learns binary masks
jointly with a deep inpainting operator.
"""

__version__ = "0.1.0"
