"""Forward-difference gradient for total-variation regularisation."""

import numpy as np

from .base import TransformSystem


def _diff(x, axis):
    out = np.zeros_like(x)
    n = x.shape[axis]
    lead = [slice(None)] * x.ndim
    lead[axis] = slice(0, n - 1)
    hi = [slice(None)] * x.ndim
    hi[axis] = slice(1, n)
    out[tuple(lead)] = x[tuple(hi)] - x[tuple(lead)]
    return out


def _diff_adjoint(g, axis):
    # transpose of _diff: out[i] = g[i-1] - g[i], with g[-1] = g[n-1] = 0
    out = np.zeros_like(g)
    n = g.shape[axis]
    first = [slice(None)] * g.ndim
    first[axis] = slice(0, n - 1)
    second = [slice(None)] * g.ndim
    second[axis] = slice(1, n)
    out[tuple(first)] -= g[tuple(first)]
    out[tuple(second)] += g[tuple(first)]
    return out


class Gradient3D(TransformSystem):
    """Forward differences along x, y, z; the last difference on each axis
    is zero (replicate boundary). Synthesis is the exact transpose, i.e.
    the negative divergence."""

    kind = "grad3d"
    parseval = False

    def __init__(self, grid):
        self.grid = grid
        self.n_scales = 1
        self.shapes = [grid.shape] * 3
        self.levels = [0, 0, 0]

    def _analyze(self, x, dtype):
        x = np.asarray(x, dtype=np.complex128)
        return np.concatenate([_diff(x, a).ravel() for a in range(3)]).astype(dtype, copy=False)

    def _synthesize(self, data):
        g = np.asarray(data, dtype=np.complex128).reshape((3,) + self.grid.shape)
        return sum(_diff_adjoint(g[a], a) for a in range(3))
