"""Sparsifying transforms: shearlets, an orthogonal 3D wavelet and finite differences."""

from .base import CoefficientStack, TransformSystem, export_subbands
from .gradient import Gradient3D
from .shearlet import ShearletSystem, build_shearlet
from .wavelet import Wavelet3D

KINDS = ("shearlet3d", "shearlet2d-slicewise", "wavelet3d", "grad3d")


def default_scales(n):
    """Scale count used when none is configured: 3 for 64, 2 for 32, 1 for 16."""
    return max(1, int(n).bit_length() - 4)


def build_transform(kind, grid, n_scales=None, slice_axis=2):
    """Construct any of the supported transforms by name."""
    if kind == "grad3d":
        return Gradient3D(grid)
    if kind == "wavelet3d":
        return Wavelet3D(grid, n_scales or default_scales(min(grid.shape)))
    if kind in ("shearlet3d", "3d"):
        return build_shearlet(grid, n_scales or default_scales(min(grid.shape)), "3d")
    if kind in ("shearlet2d-slicewise", "2d-slicewise"):
        plane = [n for a, n in enumerate(grid.shape) if a != slice_axis % 3]
        return build_shearlet(
            grid, n_scales or default_scales(min(plane)), "2d-slicewise", slice_axis
        )
    raise ValueError(f"unknown transform kind {kind!r}; expected one of {KINDS}")


__all__ = [
    "KINDS",
    "CoefficientStack",
    "Gradient3D",
    "ShearletSystem",
    "TransformSystem",
    "Wavelet3D",
    "build_shearlet",
    "build_transform",
    "default_scales",
    "export_subbands",
]
