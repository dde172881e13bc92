"""Band-limited digital shearlets (2D cone-adapted, 3D pyramid-adapted).

The filters tile the DFT grid. A smooth dyadic partition of the cube norm
``max_i |xi_i|`` gives the scales. Each scale is split into cones (2D) or
pyramids (3D) by the dominant frequency axis, and each of those is divided
into sheared wedges. At scale ``j`` the wedges are
``V(2^(j/2) * slope - k)`` for ``|k| <= ceil(2^(j/2))``, with one slope per
non-dominant axis. The squared filters are then renormalised to sum to one
at every frequency, so analysis is an isometry (a Parseval frame) and
synthesis is its exact left inverse.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from ..numerics import fft_workers
from .base import TransformSystem


def meyer_poly(t):
    """Smooth 0 -> 1 transition on ``[0, 1]`` with four vanishing derivatives."""
    t = np.clip(t, 0.0, 1.0)
    return t**4 * (35 - 84 * t + 70 * t**2 - 20 * t**3)


def bump(r):
    """1 on ``[0, 1/2]``, smooth fall to 0 on ``[1/2, 1]``."""
    r = np.asarray(r, dtype=np.float64)
    return np.cos(0.5 * np.pi * meyer_poly(2.0 * r - 1.0))


def shear_window(t):
    """``V(t)`` with ``sum_k V(t - k)^2 = 1`` for every real ``t``."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    return np.where(t < 1.0, np.cos(0.5 * np.pi * meyer_poly(t)), 0.0)


def shear_limit(j):
    """Largest shear magnitude ``ceil(2^(j/2))`` at scale ``j``."""
    return int(math.ceil(2.0 ** (j / 2.0) - 1e-12))


def radial_windows(r, n_scales):
    """Low-pass and ``n_scales`` band-pass windows of the normalised cube norm.

    Squares sum to one. Returns a list ``[low, band_0, ..., band_{J-1}]``;
    the last band extends to the corners of the frequency box.
    """
    sq = [bump(2.0**n_scales * r) ** 2]
    for j in range(n_scales):
        outer = bump(2.0 ** (n_scales - j - 1) * r) ** 2 if j < n_scales - 1 else 1.0
        inner = bump(2.0 ** (n_scales - j) * r) ** 2
        sq.append(np.maximum(outer - inner, 0.0))
    return [np.sqrt(s) for s in sq]


@dataclass(frozen=True)
class Subband:
    level: int
    scale: int  # -1 for the low-pass
    cone: int  # dominant axis index within the frequency plane/volume, -1 for low-pass
    shear: tuple


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


def shearlet_filters(shape, n_scales):
    """Frequency responses (FFT order) for a 2D or 3D band-limited system.

    Returns ``(filters, subbands)`` where ``filters`` has shape
    ``(n_subbands,) + shape``.
    """
    ndim = len(shape)
    freqs = np.meshgrid(*[2.0 * np.fft.fftfreq(n) for n in shape], indexing="ij")
    absf = [np.abs(f) for f in freqs]
    r = np.max(np.stack(absf), axis=0)
    radial = radial_windows(r, n_scales)

    n_sub = 1 + sum(ndim * (2 * shear_limit(j) + 1) ** (ndim - 1) for j in range(n_scales))
    filters = np.empty((n_sub,) + tuple(shape))
    filters[0] = radial[0]
    subbands = [Subband(0, -1, -1, ())]
    for j in range(n_scales):
        kmax = shear_limit(j)
        ks = range(-kmax, kmax + 1)
        for cone in range(ndim):
            others = [a for a in range(ndim) if a != cone]
            dominant = absf[cone]
            inside = np.ones(shape, dtype=bool)
            for a in others:
                inside &= absf[a] <= dominant
            inside &= dominant > 0
            safe = np.where(dominant > 0, freqs[cone], 1.0)
            slopes = [np.where(inside, freqs[a] / safe, 0.0) for a in others]
            base = np.where(inside, radial[j + 1], 0.0)
            scale = 2.0 ** (j / 2.0)
            for shear in itertools.product(ks, repeat=ndim - 1):
                w = filters[len(subbands)]
                w[...] = base
                for s, k in zip(slopes, shear):
                    w *= shear_window(scale * s - k)
                subbands.append(Subband(j + 1, j, cone, tuple(shear)))

    total = np.zeros(shape)
    for f in filters:
        total += f * f
    if np.any(total <= 0):
        raise RuntimeError("shearlet windows leave part of the spectrum uncovered")
    norm = np.sqrt(total)
    for f in filters:
        f /= norm
    return filters, subbands


class ShearletSystem(TransformSystem):
    """Undecimated band-limited shearlet frame.

    ``kind`` is ``"shearlet3d"`` (pyramid-adapted, full 3D) or
    ``"shearlet2d-slicewise"`` (cone-adapted 2D system applied to every
    slice perpendicular to ``slice_axis``).
    """

    parseval = True

    def __init__(self, grid, n_scales, kind="3d", slice_axis=2):
        kind = {"3d": "shearlet3d", "2d-slicewise": "shearlet2d-slicewise"}.get(kind, kind)
        if kind not in ("shearlet3d", "shearlet2d-slicewise"):
            raise ValueError(f"unknown shearlet kind {kind!r}")
        self.kind = kind
        self.grid = grid
        self.n_scales = int(n_scales)
        self.slice_axis = int(slice_axis) % 3
        shape = grid.shape
        if kind == "shearlet3d":
            if not (shape[0] == shape[1] == shape[2]):
                raise ValueError(f"shearlet3d needs a cubic grid, got {shape}")
            if not _is_pow2(shape[0]) or shape[0] < 32:
                raise ValueError(f"shearlet3d needs a power-of-two edge >= 32, got {shape[0]}")
            self.axes = (0, 1, 2)
        else:
            self.axes = tuple(a for a in range(3) if a != self.slice_axis)
            plane = [shape[a] for a in self.axes]
            if not all(_is_pow2(n) for n in plane):
                raise ValueError(f"in-plane dims must be powers of two, got {plane}")
        plane = [shape[a] for a in self.axes]
        if self.n_scales < 1:
            raise ValueError("n_scales must be >= 1")
        if 2 ** (self.n_scales + 1) > min(plane):
            raise ValueError(
                f"2^(J+1) = {2 ** (self.n_scales + 1)} exceeds the smallest dim {min(plane)}"
            )

        filters, self.subbands = shearlet_filters(tuple(plane), self.n_scales)
        if kind == "shearlet2d-slicewise":
            # broadcast the in-plane filters along the slice axis
            filters = np.expand_dims(filters, axis=1 + self.slice_axis)
        self.filters = filters
        self.shapes = [shape] * len(self.subbands)
        self.levels = [sb.level for sb in self.subbands]
        self._check_shear_counts()

    def shear_counts(self):
        """``{(scale, cone): number of shears}``."""
        counts = {}
        for sb in self.subbands:
            if sb.scale >= 0:
                counts[(sb.scale, sb.cone)] = counts.get((sb.scale, sb.cone), 0) + 1
        return counts

    def _check_shear_counts(self):
        per_axis = len(self.axes) - 1
        for (j, cone), count in self.shear_counts().items():
            expected = (2 * shear_limit(j) + 1) ** per_axis
            assert count == expected, (j, cone, count, expected)

    @property
    def n_subbands(self):
        return len(self.subbands)

    def _fft(self, x):
        return scipy.fft.fftn(x, axes=self.axes, norm="ortho", workers=fft_workers())

    def _ifft(self, x):
        return scipy.fft.ifftn(x, axes=self.axes, norm="ortho", workers=fft_workers())

    def _analyze(self, x, dtype):
        spectrum = self._fft(np.asarray(x, dtype=np.complex128))
        out = np.empty((self.n_subbands,) + self.grid.shape, dtype=dtype)
        for s, f in enumerate(self.filters):
            out[s] = self._ifft(spectrum * f)
        return out.reshape(-1)

    def _synthesize(self, data):
        coeffs = data.reshape((self.n_subbands,) + self.grid.shape)
        acc = np.zeros(self.grid.shape, dtype=np.complex128)
        for s, f in enumerate(self.filters):
            acc += self._fft(coeffs[s]) * f
        return self._ifft(acc)


def build_shearlet(grid, n_scales, kind="3d", slice_axis=2):
    return ShearletSystem(grid, n_scales, kind=kind, slice_axis=slice_axis)
