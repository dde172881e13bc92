"""Multi-coil non-Cartesian encoding operator ``E = G F S`` and its adjoint.

``S`` multiplies by coil sensitivities, ``F`` is the centered unitary DFT and
``G`` interpolates from an oversampled Cartesian grid to the sample
positions with a Kaiser-Bessel kernel. Image-domain apodization correction
is applied before zero padding, so forward and adjoint are exact transposes
of each other.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.sparse
from scipy.special import i0


from .numerics import ComplexVolume, Grid3, fft_workers
from .sampling import Trajectory, density_weights, load_trajectory
from .textio import FormatError, atomic_write_bytes, read_header, write_header

KSPACE_MAGIC = "CSKSP1"


# -- Kaiser-Bessel kernel --------------------------------------------------


def kb_beta(width, oversampling):
    """Shape parameter from Beatty et al. for a kernel of full ``width``."""
    return math.pi * math.sqrt((width / oversampling) ** 2 * (oversampling - 0.5) ** 2 - 0.8)


def kb_kernel(u, width, beta):
    """Kaiser-Bessel kernel ``I0(beta*sqrt(1-(2u/width)^2))`` on ``|u| <= width/2``."""
    u = np.asarray(u, dtype=np.float64)
    arg = 1.0 - (2.0 * u / width) ** 2
    out = np.zeros_like(u)
    inside = arg >= 0
    out[inside] = i0(beta * np.sqrt(arg[inside]))
    return out


def kb_transform(nu, width, beta):
    """Continuous Fourier transform of :func:`kb_kernel` at frequency ``nu``."""
    nu = np.asarray(nu, dtype=np.float64)
    z = np.sqrt((beta**2 - (np.pi * width * nu) ** 2).astype(np.complex128))
    small = np.abs(z) < 1e-8
    zs = np.where(small, 1.0, z)
    val = np.where(small, 1.0, np.sinh(zs) / zs)
    return width * val.real


@dataclass(frozen=True)
class GriddingKernel:
    halfwidth: float = 3.0
    oversampling: float = 1.5
    beta: float = None

    def __post_init__(self):
        if self.halfwidth < 1:
            raise ValueError("kernel half-width must be >= 1")
        if self.oversampling < 1:
            raise ValueError("oversampling must be >= 1")
        if self.beta is None:
            object.__setattr__(self, "beta", kb_beta(2 * self.halfwidth, self.oversampling))

    @property
    def width(self):
        return 2.0 * self.halfwidth

    def oversampled(self, n):
        return int(math.ceil(n * self.oversampling - 1e-9))

    def weights_1d(self, kappa, m_size):
        """Neighbour indices and weights for positions ``kappa`` (oversampled units).

        Returns ``(idx, w)`` of shape ``(len(kappa), taps)``. Indices are in
        FFT order: frequency ``m`` lives at ``m mod m_size``.
        """
        kappa = np.asarray(kappa, dtype=np.float64)
        taps = int(math.floor(self.width)) + 1
        start = np.ceil(kappa - self.halfwidth).astype(np.int64)
        m = start[:, None] + np.arange(taps)[None, :]
        w = kb_kernel(kappa[:, None] - m, self.width, self.beta)
        idx = np.mod(m, m_size)
        return idx, w

    def apodization(self, n, m_size):
        """Image-domain correction for an ``n``-point axis embedded in ``m_size``."""
        t = np.arange(n) - n // 2
        return kb_transform(t / m_size, self.width, self.beta)


# -- sensitivities ---------------------------------------------------------


@dataclass(frozen=True)
class SensitivityMaps:
    """Coil sensitivities, shape ``(n_coils, nx, ny, nz)``.

    ``support`` marks voxels where ``sum_c |S_c|^2`` must equal 1; by default
    it is every voxel above ``floor_fraction`` of the maximum.
    """

    grid: Grid3
    maps: np.ndarray
    floor_fraction: float = 0.05
    support: np.ndarray = None

    def __post_init__(self):
        maps = np.asarray(self.maps, dtype=np.complex128)
        if maps.ndim != 4 or maps.shape[1:] != self.grid.shape:
            raise ValueError(f"maps shape {maps.shape} incompatible with grid {self.grid.shape}")
        object.__setattr__(self, "maps", maps)
        ss = self.sum_of_squares()
        support = self.support
        if support is None:
            support = ss > self.floor_fraction * ss.max()
        support = np.asarray(support, dtype=bool)
        if support.shape != self.grid.shape:
            raise ValueError("support mask shape does not match the grid")
        object.__setattr__(self, "support", support)
        if np.any(np.abs(ss[support] - 1.0) > 1e-6):
            raise ValueError("sum of squared sensitivities must be 1 inside the support")

    @classmethod
    def normalized(cls, grid, raw, floor_fraction=0.05):
        """Scale ``raw`` so ``sum_c |S_c|^2 = 1`` wherever it exceeds the floor.

        Voxels below ``floor_fraction * max`` are divided by the floor value
        instead, keeping them small rather than amplified.
        """
        raw = np.asarray(raw, dtype=np.complex128)
        ss = np.sum(np.abs(raw) ** 2, axis=0)
        floor = floor_fraction * ss.max()
        if not floor > 0:
            raise ValueError("sensitivities are identically zero")
        maps = raw / np.sqrt(np.maximum(ss, floor))[None]
        return cls(grid, maps, floor_fraction, support=ss >= floor)

    @property
    def n_coils(self):
        return self.maps.shape[0]

    def sum_of_squares(self):
        return np.sum(np.abs(self.maps) ** 2, axis=0)

    def support_mask(self):
        return self.support


# -- interpolation ---------------------------------------------------------


class _SeparableInterp:
    """Readout x phase-plane interpolation for RPE trajectories."""

    def __init__(self, traj, kernel, m_shape):
        mx, my, mz = m_shape
        os = kernel.oversampling
        ix, wx = kernel.weights_1d(traj.readout() * os, mx)
        gx = np.zeros((traj.n_read, mx))
        np.add.at(gx, (np.repeat(np.arange(traj.n_read), ix.shape[1]), ix.ravel()), wx.ravel())
        self.gx = gx

        pp = traj.phase_points() * os
        iy, wy = kernel.weights_1d(pp[:, 0], my)
        iz, wz = kernel.weights_1d(pp[:, 1], mz)
        n = pp.shape[0]
        cols = (iy[:, :, None] * mz + iz[:, None, :]).reshape(n, -1)
        vals = (wy[:, :, None] * wz[:, None, :]).reshape(n, -1)
        rows = np.repeat(np.arange(n), cols.shape[1])
        g = scipy.sparse.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(n, my * mz))
        g.sum_duplicates()
        self.gyz = g
        self.gyz_t = g.T.tocsr()
        self.n_phase = n
        self.n_read = traj.n_read
        self.m_shape = m_shape

    def forward(self, k):
        c = k.shape[0]
        mx, my, mz = self.m_shape
        t = self.gyz @ k.reshape(c * mx, my * mz).T  # (P, C*Mx)
        t = t.reshape(self.n_phase, c, mx)
        out = np.einsum("ix,pcx->cpi", self.gx, t, optimize=True)
        return out.reshape(c, -1)

    def adjoint(self, y):
        c = y.shape[0]
        mx, my, mz = self.m_shape
        y = y.reshape(c, self.n_phase, self.n_read)
        t = np.einsum("ix,cpi->pcx", self.gx, y, optimize=True)
        k = self.gyz_t @ t.reshape(self.n_phase, c * mx)  # (My*Mz, C*Mx)
        return np.ascontiguousarray(k.T).reshape(c, mx, my, mz)


class _GeneralInterp:
    """Sparse interpolation for an arbitrary ``(M, 3)`` coordinate list."""

    def __init__(self, coords, kernel, m_shape):
        coords = np.asarray(coords, dtype=np.float64) * kernel.oversampling
        mx, my, mz = m_shape
        ix, wx = kernel.weights_1d(coords[:, 0], mx)
        iy, wy = kernel.weights_1d(coords[:, 1], my)
        iz, wz = kernel.weights_1d(coords[:, 2], mz)
        n = coords.shape[0]
        cols = (
            (ix[:, :, None, None] * my + iy[:, None, :, None]) * mz + iz[:, None, None, :]
        ).reshape(n, -1)
        vals = (wx[:, :, None, None] * wy[:, None, :, None] * wz[:, None, None, :]).reshape(n, -1)
        rows = np.repeat(np.arange(n), cols.shape[1])
        g = scipy.sparse.csr_matrix((vals.ravel(), (rows, cols.ravel())), shape=(n, mx * my * mz))
        g.sum_duplicates()
        self.g = g
        self.g_t = g.T.tocsr()
        self.m_shape = m_shape

    def forward(self, k):
        c = k.shape[0]
        return np.ascontiguousarray((self.g @ k.reshape(c, -1).T).T)

    def adjoint(self, y):
        c = y.shape[0]
        k = self.g_t @ y.T
        return np.ascontiguousarray(k.T).reshape((c,) + self.m_shape)


# -- operator --------------------------------------------------------------


class EncodingOperator:
    """``E = G F S`` for a fixed set of coils and sample positions.

    Parameters
    ----------
    maps : SensitivityMaps
    trajectory : Trajectory or ndarray
        An RPE :class:`Trajectory` (uses the separable interpolator) or an
        ``(M, 3)`` array of ``(kx, ky, kz)`` positions in cycles/FOV.
    kernel : GriddingKernel, optional
        Defaults to half-width 3 and oversampling 1.5.
    density : ndarray, optional
        Per-sample density compensation; computed from the trajectory when
        omitted and the trajectory is an RPE pattern.
    """

    def __init__(self, maps, trajectory, kernel=None, density=None):
        self.maps = maps
        self.grid = maps.grid
        self.kernel = kernel or GriddingKernel()
        self.trajectory = trajectory
        shape = self.grid.shape
        self.m_shape = tuple(self.kernel.oversampled(n) for n in shape)
        if isinstance(trajectory, Trajectory):
            if trajectory.n_read != shape[0] or trajectory.phase_dims != shape[1:]:
                raise ValueError(
                    f"trajectory (n_read={trajectory.n_read}, phase={trajectory.phase_dims}) "
                    f"does not fit grid {shape}"
                )
            self._interp = _SeparableInterp(trajectory, self.kernel, self.m_shape)
            self.n_samples = trajectory.n_samples
            if density is None:
                density = density_weights(trajectory)
        else:
            coords = np.asarray(trajectory, dtype=np.float64)
            if coords.ndim != 2 or coords.shape[1] != 3:
                raise ValueError("coordinates must have shape (M, 3)")
            for axis, n in enumerate(shape):
                if np.any(np.abs(coords[:, axis]) > n / 2):
                    raise ValueError(f"coordinates exceed the Nyquist box on axis {axis}")
            self._interp = _GeneralInterp(coords, self.kernel, self.m_shape)
            self.n_samples = coords.shape[0]
        if density is not None:
            density = np.asarray(density, dtype=np.float64)
            if density.shape != (self.n_samples,) or np.any(density < 0):
                raise ValueError("density weights must be non-negative, one per sample")
        self.density = density

        apod = [self.kernel.apodization(n, m) for n, m in zip(shape, self.m_shape)]
        scale = math.sqrt(np.prod(np.array(self.m_shape, float) / np.array(shape, float)))
        self._deapod = scale / (apod[0][:, None, None] * apod[1][None, :, None] * apod[2][None, None, :])
        # image voxel n (offset t = n - N//2 from the centre) sits at t mod M
        # in the oversampled grid, which lets the FFTs skip all shifts
        self._embed = np.ix_(
            *[np.mod(np.arange(n) - n // 2, m) for n, m in zip(shape, self.m_shape)]
        )

    @property
    def n_coils(self):
        return self.maps.n_coils

    @property
    def data_shape(self):
        return (self.n_coils, self.n_samples)

    def _check_image(self, x):
        if x.shape != self.grid.shape:
            raise ValueError(f"image shape {x.shape} does not match grid {self.grid.shape}")

    def _check_data(self, y):
        if y.shape != self.data_shape:
            raise ValueError(f"k-space shape {y.shape} does not match {self.data_shape}")

    def _to_kspace(self, xs):
        out = np.zeros((xs.shape[0],) + self.m_shape, dtype=np.complex128)
        out[(slice(None),) + self._embed] = xs
        return scipy.fft.fftn(out, axes=(1, 2, 3), norm="ortho", overwrite_x=True, workers=fft_workers())

    def _from_kspace(self, k):
        img = scipy.fft.ifftn(k, axes=(1, 2, 3), norm="ortho", overwrite_x=True, workers=fft_workers())
        return img[(slice(None),) + self._embed]

    def forward(self, x):
        """Image ``(nx, ny, nz)`` -> samples ``(n_coils, n_samples)``."""
        x = np.asarray(x)
        self._check_image(x)
        xs = self.maps.maps * (x * self._deapod)[None]
        return self._interp.forward(self._to_kspace(xs))

    def adjoint(self, y, use_density=False):
        """Samples -> image. With ``use_density`` the samples are first
        multiplied by the density weights, which no longer gives the strict
        adjoint but a gridding reconstruction."""
        y = np.asarray(y)
        self._check_data(y)
        if use_density:
            if self.density is None:
                raise ValueError("no density weights available for this operator")
            y = y * self.density[None]
        k = self._interp.adjoint(y)
        xs = self._from_kspace(k)
        return np.sum(np.conj(self.maps.maps) * xs, axis=0) * self._deapod

    def gram(self, x):
        return self.adjoint(self.forward(x))

    def normal(self, x, beta, mu, transform_gram=None):
        """``beta E*E x + mu Psi*Psi x``; ``transform_gram=None`` means identity."""
        out = beta * self.gram(x) if beta != 0 else np.zeros_like(x, dtype=np.complex128)
        if mu != 0:
            out = out + mu * (x if transform_gram is None else transform_gram(x))
        return out


# -- spec-shaped wrappers --------------------------------------------------


@dataclass(frozen=True)
class KSpaceSamples:
    """Per-coil samples ``(n_coils, n_samples)`` tied to a trajectory."""

    trajectory: object
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError("k-space data must be (n_coils, n_samples)")
        n = (
            self.trajectory.n_samples
            if isinstance(self.trajectory, Trajectory)
            else np.asarray(self.trajectory).shape[0]
        )
        if data.shape[1] != n:
            raise ValueError(f"{data.shape[1]} samples given, trajectory has {n}")
        if not np.all(np.isfinite(data)):
            raise ValueError("k-space contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def n_coils(self):
        return self.data.shape[0]


def forward(E, x):
    if isinstance(x, ComplexVolume):
        if x.grid.shape != E.grid.shape:
            raise ValueError("volume grid does not match the operator grid")
        x = x.data
    return KSpaceSamples(E.trajectory, E.forward(x))


def adjoint(E, y, use_density=False):
    """Adjoint as a :class:`ComplexVolume`; ``meta['strict_adjoint']`` is False
    when density weighting was applied."""
    data = y.data if isinstance(y, KSpaceSamples) else y
    if isinstance(y, KSpaceSamples) and y.n_coils != E.n_coils:
        raise ValueError("coil count does not match the operator")
    return ComplexVolume(
        E.grid, E.adjoint(data, use_density=use_density), meta={"strict_adjoint": not use_density}
    )


def normal(E, x, beta, mu, transform_gram=None):
    return E.normal(x, beta, mu, transform_gram)


# -- CSKSP1 ----------------------------------------------------------------


def save_kspace(path, ksp, trajectory_ref):
    """Write samples as little-endian complex64, coil-major.

    ``trajectory_ref`` is stored verbatim and resolved relative to the
    k-space file on load.
    """
    header = write_header(
        KSPACE_MAGIC,
        {
            "n_coils": ksp.n_coils,
            "n_samples": ksp.data.shape[1],
            "trajectory": str(trajectory_ref),
        },
    )
    atomic_write_bytes(path, header + np.asarray(ksp.data, dtype="<c8").tobytes())


def load_kspace(path):
    path = Path(path)
    with open(path, "rb") as fh:
        fields = read_header(fh, KSPACE_MAGIC)
        payload = fh.read()
    try:
        n_coils = int(fields["n_coils"][0])
        n_samples = int(fields["n_samples"][0])
        ref = " ".join(fields["trajectory"])
    except (KeyError, IndexError, ValueError) as exc:
        raise FormatError(f"{path}: malformed CSKSP1 header") from exc
    traj = load_trajectory(path.parent / ref)
    data = np.frombuffer(payload, dtype="<c8")
    if data.size != n_coils * n_samples:
        raise FormatError(f"{path}: expected {n_coils * n_samples} samples, found {data.size}")
    return KSpaceSamples(traj, data.reshape(n_coils, n_samples).astype(np.complex64))
