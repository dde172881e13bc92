"""Volume container, centered unitary FFTs and inner products."""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft

from .textio import FormatError, atomic_write_bytes, read_header, write_header

VOLUME_MAGIC = "CSVOL1"

_FFT_WORKERS = 1


def set_fft_workers(n):
    """Set the thread count used by every FFT in the package."""
    global _FFT_WORKERS
    _FFT_WORKERS = max(1, int(n))


def fft_workers():
    return _FFT_WORKERS


@dataclass(frozen=True)
class Grid3:
    """Voxel counts and spacing (mm) of a 3D image grid."""

    nx: int
    ny: int
    nz: int
    spacing: tuple = (1.0, 1.0, 1.0)

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            n = getattr(self, name)
            if int(n) != n or n < 4:
                raise ValueError(f"{name} must be an integer >= 4, got {n}")
        spacing = tuple(float(s) for s in np.broadcast_to(self.spacing, (3,)))
        if any(not s > 0 or not math.isfinite(s) for s in spacing):
            raise ValueError(f"spacing must be positive, got {spacing}")
        object.__setattr__(self, "spacing", spacing)

    @classmethod
    def cube(cls, n, spacing=1.0):
        return cls(n, n, n, (spacing,) * 3)

    @property
    def shape(self):
        return (self.nx, self.ny, self.nz)

    @property
    def size(self):
        return self.nx * self.ny * self.nz


@dataclass(frozen=True)
class ComplexVolume:
    """Complex samples on a :class:`Grid3`; ``data`` is indexed ``[x, y, z]``."""

    grid: Grid3
    data: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.complex128)
        if data.shape != self.grid.shape:
            raise ValueError(f"data shape {data.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("volume contains non-finite values")
        object.__setattr__(self, "data", data)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape, np.complex128))

    def magnitude(self):
        return np.abs(self.data)


def _axes(x, ndim):
    return tuple(range(x.ndim - ndim, x.ndim))


def fft_centered(x, inverse=False, ndim=3):
    """Unitary DFT over the trailing ``ndim`` axes with DC at index ``n // 2``.

    Leading axes (e.g. coils) are batched. Accepts an ndarray or a
    :class:`ComplexVolume` and returns the same kind.
    """
    if isinstance(x, ComplexVolume):
        return ComplexVolume(x.grid, fft_centered(x.data, inverse=inverse, ndim=3))
    axes = _axes(x, ndim)
    fn = scipy.fft.ifftn if inverse else scipy.fft.fftn
    out = scipy.fft.ifftshift(x, axes=axes)
    out = fn(out, axes=axes, norm="ortho", workers=_FFT_WORKERS)
    return scipy.fft.fftshift(out, axes=axes)


def _as_array(a):
    if isinstance(a, np.ndarray):
        return a
    # ComplexVolume, CoefficientStack and friends keep their samples in .data
    return np.asarray(getattr(a, "data", a))


def inner_product(a, b):
    """Return ``sum(conj(a) * b)``; conjugate-linear in ``a``."""
    fa, fb = _as_array(a), _as_array(b)
    if fa.shape != fb.shape:
        raise ValueError(f"shape mismatch: {fa.shape} vs {fb.shape}")
    return complex(np.vdot(fa, fb))


def norm2(a):
    return float(np.linalg.norm(_as_array(a).ravel()))


# -- CSVOL1 ----------------------------------------------------------------


def volume_to_bytes(vol):
    header = write_header(
        VOLUME_MAGIC,
        {
            "dims": list(vol.grid.shape),
            "spacing": [repr(s) for s in vol.grid.spacing],
            "dtype": "c64",
        },
    )
    # x-fastest ordering is Fortran order for [x, y, z] indexing
    flat = np.asarray(vol.data, dtype="<c16").ravel(order="F")
    return header + flat.tobytes()


def save_volume(path, vol):
    atomic_write_bytes(path, volume_to_bytes(vol))


def load_volume(path):
    path = Path(path)
    with open(path, "rb") as fh:
        fields = read_header(fh, VOLUME_MAGIC)
        try:
            dims = [int(v) for v in fields["dims"]]
            spacing = tuple(float(v) for v in fields["spacing"])
            dtype = fields["dtype"][0]
        except (KeyError, IndexError, ValueError) as exc:
            raise FormatError(f"{path}: incomplete CSVOL1 header") from exc
        if dtype != "c64":
            raise FormatError(f"{path}: unsupported dtype tag {dtype!r}")
        payload = fh.read()
    count = dims[0] * dims[1] * dims[2]
    if len(payload) != count * 16:
        raise FormatError(
            f"{path}: expected {count * 16} payload bytes, found {len(payload)}"
        )
    data = np.frombuffer(payload, dtype="<c16").reshape(dims, order="F")
    return ComplexVolume(Grid3(*dims, spacing=spacing), data.astype(np.complex128))
