"""Tomographic reconstruction from projections at unknown, random angles.

Modules
-------
core      shared types (images, sinograms, Fourier series) and seeding
io        on-disk formats
qbl       1D quasi-bandlimited reconstruction from ordered samples
ordering  projection orderings: nearest-neighbour recovery, perturbation, goodness
tomo      forward model and the ring-by-ring reconstruction pipeline
phantom   procedural test images
harness   experiment sweeps over the four settings
"""
from .core import FormatError, FourierSeries, Image2D, Sinogram, derive_seed, make_rng
from .ordering import Permutation, measure_goodness, nn_order
from .tomo import ReconstructionConfig, radon, reconstruct_known_angles, reconstruct_unknown_angles, relative_error

__all__ = [
    "FormatError",
    "FourierSeries",
    "Image2D",
    "Permutation",
    "ReconstructionConfig",
    "Sinogram",
    "derive_seed",
    "make_rng",
    "measure_goodness",
    "nn_order",
    "radon",
    "reconstruct_known_angles",
    "reconstruct_unknown_angles",
    "relative_error",
]
