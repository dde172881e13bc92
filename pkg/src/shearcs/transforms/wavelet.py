"""Decimated orthogonal 3D wavelet transform (Daubechies 4-tap, periodic)."""

import math

import numpy as np

from .base import TransformSystem

SQRT3 = math.sqrt(3.0)
# Daubechies D4 scaling filter, unit l2 norm
DB2_LOW = np.array([1 + SQRT3, 3 + SQRT3, 3 - SQRT3, 1 - SQRT3]) / (4 * math.sqrt(2.0))
DB2_HIGH = np.array([(-1) ** k * DB2_LOW[3 - k] for k in range(4)])


def _analyze_axis(x, axis):
    """One periodic two-channel split along ``axis``; returns (low, high)."""
    x = np.moveaxis(x, axis, 0)
    n = x.shape[0]
    idx = np.arange(0, n, 2)
    lo = sum(DB2_LOW[k] * x[(idx + k) % n] for k in range(4))
    hi = sum(DB2_HIGH[k] * x[(idx + k) % n] for k in range(4))
    return np.moveaxis(lo, 0, axis), np.moveaxis(hi, 0, axis)


def _synthesize_axis(lo, hi, axis):
    lo = np.moveaxis(lo, axis, 0)
    hi = np.moveaxis(hi, axis, 0)
    half = lo.shape[0]
    n = 2 * half
    out = np.zeros((n,) + lo.shape[1:], dtype=np.result_type(lo, hi, np.float64))
    idx = np.arange(0, n, 2)
    for k in range(4):
        np.add.at(out, (idx + k) % n, DB2_LOW[k] * lo + DB2_HIGH[k] * hi)
    return np.moveaxis(out, 0, axis)


class Wavelet3D(TransformSystem):
    """``J``-level separable D4 transform with periodic extension.

    Coefficients are ordered coarsest first: the approximation band
    (level 0), then the seven detail bands of level 1 (coarsest) up to
    level ``J`` (finest). Orthogonal, so the adjoint is the inverse.
    """

    kind = "wavelet3d"
    parseval = True

    def __init__(self, grid, n_scales):
        self.grid = grid
        self.n_scales = int(n_scales)
        if self.n_scales < 1:
            raise ValueError("n_scales must be >= 1")
        for n in grid.shape:
            if n % (2**self.n_scales) or n // 2**self.n_scales < 2:
                raise ValueError(
                    f"every dim must be divisible by 2^J = {2 ** self.n_scales} "
                    f"with at least 2 samples left, got {grid.shape}"
                )
        coarse = tuple(n // 2**self.n_scales for n in grid.shape)
        self.shapes = [coarse]
        self.levels = [0]
        for level in range(1, self.n_scales + 1):
            shape = tuple(n // 2 ** (self.n_scales - level + 1) for n in grid.shape)
            self.shapes += [shape] * 7
            self.levels += [level] * 7

    def _analyze(self, x, dtype):
        approx = np.asarray(x, dtype=np.complex128)
        details = []
        for _ in range(self.n_scales):
            bands = [approx]
            for axis in range(3):
                bands = [half for b in bands for half in _analyze_axis(b, axis)]
            # bands are ordered by (x, y, z) filter bits, LLL first
            approx = bands[0]
            details.append(bands[1:])
        pieces = [approx.ravel()]
        for level in reversed(details):
            pieces += [b.ravel() for b in level]
        return np.concatenate(pieces).astype(dtype, copy=False)

    def _synthesize(self, data):
        blocks = []
        pos = 0
        for shape in self.shapes:
            size = int(np.prod(shape))
            blocks.append(np.asarray(data[pos : pos + size], dtype=np.complex128).reshape(shape))
            pos += size
        approx = blocks[0]
        for level in range(self.n_scales):
            bands = [approx] + blocks[1 + 7 * level : 8 + 7 * level]
            for axis in reversed(range(3)):
                bands = [
                    _synthesize_axis(bands[i], bands[i + 1], axis) for i in range(0, len(bands), 2)
                ]
            approx = bands[0]
        return approx
