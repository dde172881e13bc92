"""Compressed-sensing MRI reconstruction with multilevel-reweighted l1 ADMM
and shearlet, wavelet or total-variation sparsity."""

from .numerics import ComplexVolume, Grid3, fft_centered, inner_product

__version__ = "0.1.0"

__all__ = ["ComplexVolume", "Grid3", "fft_centered", "inner_product", "__version__"]
