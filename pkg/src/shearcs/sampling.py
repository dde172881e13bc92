"""Radial phase encoding (RPE) trajectories, retrospective undersampling and
density compensation.

An RPE trajectory keeps a fully sampled Cartesian readout along ``kx`` and
places the phase encodes on radial lines through the centre of the
``(ky, kz)`` plane. Coordinates are in cycles per field of view, so the
Nyquist box of an ``n``-point axis is ``[-n/2, n/2)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .textio import FormatError, atomic_write_bytes, read_header, write_header

TRAJECTORY_MAGIC = "CSTRAJ1"
SCHEMES = ("uniform", "golden-angle")
MODES = ("stride", "prefix")
GOLDEN_FRACTION = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class Trajectory:
    """RPE sampling pattern.

    Samples are ordered phase-point major with the readout running fastest,
    i.e. sample ``p * n_read + i`` sits at ``(kx[i], ky[p], kz[p])``.
    Phase points are ordered line by line.
    """

    n_read: int
    phase_dims: tuple
    angles: np.ndarray
    radii: np.ndarray
    scheme: str = "uniform"
    line_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=np.float64).reshape(-1)
        radii = np.asarray(self.radii, dtype=np.float64).reshape(-1)
        ids = (
            np.arange(angles.size)
            if self.line_ids is None
            else np.asarray(self.line_ids, dtype=np.int64).reshape(-1)
        )
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "line_ids", ids)
        object.__setattr__(self, "phase_dims", tuple(int(n) for n in self.phase_dims))
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if ids.size != angles.size:
            raise ValueError("line_ids and angles differ in length")
        if angles.size < 1 or radii.size < 1:
            raise ValueError("trajectory needs at least one line and one radial sample")
        if np.any(angles < 0) or np.any(angles >= np.pi):
            raise ValueError("angles must lie in [0, pi)")
        if np.unique(angles).size != angles.size:
            raise ValueError("angles must be distinct")
        ny, nz = self.phase_dims
        ky, kz = self.phase_points().T
        if np.any(np.abs(ky) > ny / 2 + 1e-9) or np.any(np.abs(kz) > nz / 2 + 1e-9):
            raise ValueError("phase encodes exceed the Nyquist box")

    @property
    def n_lines(self):
        return self.angles.size

    @property
    def n_radial(self):
        return self.radii.size

    @property
    def n_phase(self):
        return self.n_lines * self.n_radial

    @property
    def n_samples(self):
        return self.n_read * self.n_phase

    def readout(self):
        """Cartesian readout positions ``-n/2 .. n/2 - 1``."""
        return np.arange(self.n_read, dtype=np.float64) - self.n_read // 2

    def phase_points(self):
        """``(n_lines * n_radial, 2)`` array of ``(ky, kz)`` positions."""
        r = self.radii[None, :]
        ky = r * np.cos(self.angles)[:, None]
        kz = r * np.sin(self.angles)[:, None]
        return np.stack([ky.ravel(), kz.ravel()], axis=1)

    def coordinates(self):
        """Flat ``(n_samples, 3)`` list of ``(kx, ky, kz)``."""
        kx = self.readout()
        pp = self.phase_points()
        out = np.empty((pp.shape[0], kx.size, 3))
        out[:, :, 0] = kx[None, :]
        out[:, :, 1] = pp[:, 0:1]
        out[:, :, 2] = pp[:, 1:2]
        return out.reshape(-1, 3)

    def nominal_undersampling(self):
        """Fully sampled Cartesian phase encodes over acquired phase encodes."""
        ny, nz = self.phase_dims
        return ny * nz / self.n_phase


def _angles(n_lines, scheme):
    idx = np.arange(n_lines, dtype=np.float64)
    if scheme == "uniform":
        return idx * np.pi / n_lines
    if scheme == "golden-angle":
        return np.mod(idx * np.pi * GOLDEN_FRACTION, np.pi)
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def radial_positions(n_radial, n_phase):
    """Equispaced signed radii on ``[-n/2, n/2)`` that always contain 0."""
    step = n_phase / n_radial
    return (np.arange(n_radial) - n_radial // 2) * step


def generate_rpe(n_read, n_lines, n_radial, scheme="uniform", phase_dims=None):
    """Build an RPE trajectory.

    Parameters
    ----------
    n_read : int
        Readout samples (Cartesian ``kx`` axis).
    n_lines : int
        Number of radial lines in the ``(ky, kz)`` plane.
    n_radial : int
        Samples per line, spread over the full diameter.
    scheme : {"uniform", "golden-angle"}
        Angular ordering; uniform uses ``l*pi/n_lines``, golden-angle steps
        by ``pi*(sqrt(5)-1)/2`` modulo ``pi``.
    phase_dims : tuple of int, optional
        ``(ny, nz)`` of the phase plane; defaults to ``(n_read, n_read)``.
    """
    if n_lines < 1:
        raise ValueError("n_lines must be >= 1")
    if n_radial < 2:
        raise ValueError("n_radial must be >= 2")
    phase_dims = (n_read, n_read) if phase_dims is None else tuple(phase_dims)
    n_phase = min(phase_dims)
    if n_radial > n_phase:
        raise ValueError(
            f"n_radial={n_radial} exceeds the Nyquist limit of the {n_phase}-point phase plane"
        )
    return Trajectory(
        n_read=n_read,
        phase_dims=phase_dims,
        angles=_angles(n_lines, scheme),
        radii=radial_positions(n_radial, n_phase),
        scheme=scheme,
    )


def retro_undersample(t, factor, mode="stride"):
    """Drop RPE lines to mimic a shorter scan.

    ``stride`` keeps every ``factor``-th line in acquisition order,
    ``prefix`` keeps the first ``ceil(n_lines / factor)`` lines.
    """
    if int(factor) != factor or factor <= 0:
        raise ValueError(f"factor must be a positive integer, got {factor}")
    if factor > t.n_lines:
        raise ValueError(f"factor {factor} exceeds the {t.n_lines} available lines")
    factor = int(factor)
    if mode == "stride":
        keep = np.arange(0, t.n_lines, factor)
    elif mode == "prefix":
        keep = np.arange(math.ceil(t.n_lines / factor))
    else:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    return Trajectory(
        n_read=t.n_read,
        phase_dims=t.phase_dims,
        angles=t.angles[keep],
        radii=t.radii,
        scheme=t.scheme,
        line_ids=t.line_ids[keep],
    )


def total_undersampling(base_r, factor):
    return base_r * factor


def nominal_scan_time(base_minutes, factor):
    """Scan time after keeping ``1/factor`` of the lines."""
    return base_minutes / factor


def radial_ramp(radii, r_min):
    """Mean-normalised ramp ``max(|r|, r_min)``."""
    w = np.maximum(np.abs(np.asarray(radii, dtype=np.float64)), r_min)
    return w / w.mean()


def density_weights(t):
    """Per-sample density compensation for ``t`` (mean weight 1).

    The ramp uses ``r_min`` = half the radial step so the DC sample keeps
    a small positive weight.
    """
    step = np.min(np.diff(np.sort(t.radii))) if t.n_radial > 1 else 1.0
    per_line = radial_ramp(t.radii, 0.5 * step)
    per_phase = np.tile(per_line, t.n_lines)
    return np.repeat(per_phase, t.n_read)


# -- CSTRAJ1 ---------------------------------------------------------------


def trajectory_to_bytes(t):
    header = write_header(
        TRAJECTORY_MAGIC,
        {
            "n_read": t.n_read,
            "n_lines": t.n_lines,
            "scheme": t.scheme,
            "n_radial": t.n_radial,
            "phase_dims": list(t.phase_dims),
            "angles": [repr(float(a)) for a in t.angles],
            "radii": [repr(float(r)) for r in t.radii],
            "line_ids": [int(i) for i in t.line_ids],
        },
    )
    return header + np.asarray(t.coordinates(), dtype="<f8").tobytes()


def save_trajectory(path, t):
    atomic_write_bytes(path, trajectory_to_bytes(t))


def load_trajectory(path):
    with open(path, "rb") as fh:
        fields = read_header(fh, TRAJECTORY_MAGIC)
        payload = fh.read()
    try:
        t = Trajectory(
            n_read=int(fields["n_read"][0]),
            phase_dims=tuple(int(v) for v in fields["phase_dims"]),
            angles=np.array([float(v) for v in fields["angles"]]),
            radii=np.array([float(v) for v in fields["radii"]]),
            scheme=fields["scheme"][0],
            line_ids=np.array([int(v) for v in fields["line_ids"]]),
        )
    except (KeyError, IndexError, ValueError) as exc:
        raise FormatError(f"{path}: malformed CSTRAJ1 header ({exc})") from exc
    if int(fields["n_lines"][0]) != t.n_lines or int(fields["n_radial"][0]) != t.n_radial:
        raise FormatError(f"{path}: line/radial counts disagree with header lists")
    coords = np.frombuffer(payload, dtype="<f8")
    if coords.size != 3 * t.n_samples or not np.array_equal(
        coords.reshape(-1, 3), t.coordinates()
    ):
        raise FormatError(f"{path}: sample coordinates do not match the header")
    return t
