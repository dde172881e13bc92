"""Synthetic ground truth: anatomical phantom with vessel-like tubes, coil
sensitivities and noisy k-space.

Geometry is given in millimetres with voxel ``i`` centred at ``i * spacing``.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoding import KSpaceSamples, SensitivityMaps
from .numerics import ComplexVolume, Grid3
from .textio import FormatError, atomic_write_text, parse_key_values, split_numbers


@dataclass(frozen=True)
class Ellipsoid:
    center: tuple
    semi_axes: tuple
    rotation: tuple = (0.0, 0.0, 0.0)  # z-y-x Euler angles, radians
    intensity: float = 1.0


@dataclass(frozen=True)
class Tube:
    points: tuple  # ((x, y, z), ...) in mm
    radius: float
    intensity: float = 1.0


@dataclass(frozen=True)
class PhantomSpec:
    ellipsoids: tuple = ()
    tubes: tuple = ()
    background: float = 0.0
    texture: float = 0.0  # amplitude of seeded smooth multiplicative texture

    def __post_init__(self):
        object.__setattr__(self, "ellipsoids", tuple(self.ellipsoids))
        object.__setattr__(self, "tubes", tuple(self.tubes))
        values = [self.background] + [e.intensity for e in self.ellipsoids]
        values += [t.intensity for t in self.tubes]
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise ValueError("intensities must lie in [0, 1]")
        for e in self.ellipsoids:
            if len(e.center) != 3 or len(e.semi_axes) != 3 or min(e.semi_axes) <= 0:
                raise ValueError(f"bad ellipsoid {e}")
        for t in self.tubes:
            if t.radius <= 0:
                raise ValueError("tube radius must be positive")
            if len(t.points) < 2 or any(len(p) != 3 for p in t.points):
                raise ValueError("a tube needs at least two 3D points")
        if not 0.0 <= self.texture < 1.0:
            raise ValueError("texture must lie in [0, 1)")


def rotation_matrix(angles):
    a, b, c = angles
    rz = np.array([[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1]])
    ry = np.array([[math.cos(b), 0, math.sin(b)], [0, 1, 0], [-math.sin(b), 0, math.cos(b)]])
    rx = np.array([[1, 0, 0], [0, math.cos(c), -math.sin(c)], [0, math.sin(c), math.cos(c)]])
    return rz @ ry @ rx


def smooth_membership(dist_vox):
    """Smoothstep from 1 (inside) to 0 (outside) across a two-voxel band
    centred on the boundary (signed distance 0)."""
    t = np.clip((1.0 - dist_vox) / 2.0, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _coords(grid):
    axes = [np.arange(n) * s for n, s in zip(grid.shape, grid.spacing)]
    return np.meshgrid(*axes, indexing="ij")


def _check_inside(grid, lo, hi, what):
    extent = np.array([(n - 1) * s for n, s in zip(grid.shape, grid.spacing)])
    if np.any(np.asarray(lo) < 0) or np.any(np.asarray(hi) > extent):
        raise ValueError(f"{what} extends outside the field of view")


def _ellipsoid_distance(X, e):
    rel = np.stack([X[k] - e.center[k] for k in range(3)])
    R = rotation_matrix(e.rotation)
    local = np.tensordot(R.T, rel, axes=1)
    rho = np.sqrt(sum((local[k] / e.semi_axes[k]) ** 2 for k in range(3)))
    dist = np.sqrt(np.sum(rel**2, axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(rho > 0, dist * (rho - 1.0) / rho, -min(e.semi_axes))
    return d


def _polyline_distance(X, points):
    P = np.stack([X[k].ravel() for k in range(3)], axis=1)
    best = np.full(P.shape[0], np.inf)
    pts = np.asarray(points, dtype=np.float64)
    for a, b in zip(pts[:-1], pts[1:]):
        ab = b - a
        t = np.clip(((P - a) @ ab) / max(ab @ ab, 1e-12), 0.0, 1.0)
        np.minimum(best, np.linalg.norm(P - (a + t[:, None] * ab), axis=1), out=best)
    return best.reshape(X[0].shape)


def _smooth_texture(grid, seed):
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(grid.shape)
    k = [np.fft.fftfreq(n) for n in grid.shape]
    K2 = k[0][:, None, None] ** 2 + k[1][None, :, None] ** 2 + k[2][None, None, :] ** 2
    smooth = np.fft.ifftn(np.fft.fftn(noise) * np.exp(-K2 / (2 * 0.03**2))).real
    return smooth / (np.max(np.abs(smooth)) or 1.0)


def make_phantom(grid, spec, seed=0):
    """Rasterise ``spec`` on ``grid``.

    Shapes are composited in order (later shapes replace earlier ones within
    their smooth membership). Returns ``(volume, centerlines)`` where
    ``centerlines`` is a list of ``(points_mm, radius_mm)``.
    """
    voxel = min(grid.spacing)
    X = _coords(grid)
    vol = np.full(grid.shape, float(spec.background))
    for e in spec.ellipsoids:
        # axis-aligned half extents of the rotated ellipsoid
        reach = np.sqrt(((rotation_matrix(e.rotation) * np.array(e.semi_axes)) ** 2).sum(axis=1))
        _check_inside(grid, np.array(e.center) - reach, np.array(e.center) + reach, "ellipsoid")
        m = smooth_membership(_ellipsoid_distance(X, e) / voxel)
        vol += m * (e.intensity - vol)
    centerlines = []
    for t in spec.tubes:
        pts = np.asarray(t.points, dtype=np.float64)
        _check_inside(grid, pts.min(0) - t.radius, pts.max(0) + t.radius, "tube")
        m = smooth_membership((_polyline_distance(X, pts) - t.radius) / voxel)
        vol += m * (t.intensity - vol)
        centerlines.append((pts, float(t.radius)))
    if spec.texture > 0:
        vol *= 1.0 + spec.texture * _smooth_texture(grid, seed)
    np.clip(vol, 0.0, None, out=vol)
    return ComplexVolume(grid, vol.astype(np.complex128)), centerlines


def default_grid():
    return Grid3.cube(64, 1.5)


def default_phantom_spec(grid=None):
    """Thorax-like phantom scaled to the field of view, with three
    coronary-like tubes of 2.25 mm radius wrapped around a heart."""
    grid = grid or default_grid()
    fov = np.array([(n - 1) * s for n, s in zip(grid.shape, grid.spacing)])
    c = fov / 2.0

    def at(u, v, w):
        return tuple(float(x) for x in c + fov * np.array([u, v, w]))

    def size(u, v, w):
        return tuple(float(x) for x in fov * np.array([u, v, w]))

    ellipsoids = (
        Ellipsoid(at(0, 0, 0), size(0.44, 0.36, 0.44), (0.0, 0.0, 0.0), 0.25),
        Ellipsoid(at(0.12, -0.1, 0.05), size(0.14, 0.12, 0.2), (0.3, 0.0, 0.1), 0.45),
        Ellipsoid(at(-0.02, 0.02, 0.0), size(0.2, 0.16, 0.19), (0.5, 0.2, 0.0), 0.5),
        Ellipsoid(at(-0.06, 0.04, 0.02), size(0.09, 0.07, 0.1), (0.5, 0.2, 0.0), 0.8),
        Ellipsoid(at(0.06, -0.02, -0.02), size(0.08, 0.06, 0.09), (0.5, 0.2, 0.0), 0.75),
        Ellipsoid(at(-0.26, 0.0, 0.0), size(0.1, 0.22, 0.3), (0.0, 0.0, 0.0), 0.12),
    )
    radius = 2.25
    tubes = (
        Tube((at(-0.18, -0.14, -0.2), at(-0.2, -0.04, -0.06), at(-0.16, 0.08, 0.06),
              at(-0.06, 0.18, 0.14), at(0.06, 0.2, 0.22)), radius, 1.0),
        Tube((at(0.2, -0.16, -0.18), at(0.22, -0.04, -0.04), at(0.18, 0.06, 0.1),
              at(0.12, 0.14, 0.24)), radius, 0.95),
        Tube((at(-0.1, -0.2, 0.2), at(0.0, -0.16, 0.1), at(0.1, -0.18, 0.0),
              at(0.2, -0.2, -0.1)), radius, 0.9),
    )
    return PhantomSpec(ellipsoids=ellipsoids, tubes=tubes, background=0.0)


# -- coils -----------------------------------------------------------------


def coil_centres(grid, n_coils):
    """Points on a cylinder around the field of view: four azimuths per ring,
    rings stacked along z."""
    fov = np.array([(n - 1) * s for n, s in zip(grid.shape, grid.spacing)])
    mid = fov / 2.0
    per_ring = min(4, n_coils)
    n_rings = math.ceil(n_coils / per_ring)
    out = []
    for i in range(n_coils):
        ring, slot = divmod(i, per_ring)
        phi = 2 * math.pi * slot / per_ring + (math.pi / per_ring) * (ring % 2)
        z = (ring + 0.5) / n_rings
        out.append(
            (
                mid[0] + 0.75 * fov[0] * math.cos(phi),
                mid[1] + 0.75 * fov[1] * math.sin(phi),
                fov[2] * (0.25 + 0.5 * z),
            )
        )
    return np.array(out)


def make_coils(grid, n_coils, seed=0):
    """Smooth complex sensitivities normalised to unit sum of squares at
    every voxel.

    Magnitudes are Gaussians centred outside the field of view; phases are
    seeded linear ramps of at most half a cycle across the volume.
    """
    if n_coils < 1:
        raise ValueError("n_coils must be >= 1")
    rng = np.random.default_rng(seed)
    X = _coords(grid)
    fov = np.array([(n - 1) * s for n, s in zip(grid.shape, grid.spacing)])
    width = 0.6 * float(fov.max())
    raw = np.empty((n_coils,) + grid.shape, dtype=np.complex128)
    for i, centre in enumerate(coil_centres(grid, n_coils)):
        r2 = sum((X[k] - centre[k]) ** 2 for k in range(3))
        slope = rng.uniform(-0.5, 0.5, size=3) * math.pi / fov
        phase = rng.uniform(0, 2 * math.pi) + sum(slope[k] * X[k] for k in range(3))
        raw[i] = np.exp(-r2 / (2 * width**2)) * np.exp(1j * phase)
    # the Gaussians are wide enough that no voxel is amplified by much
    return SensitivityMaps.normalized(grid, raw, floor_fraction=1e-12)


# -- acquisition -----------------------------------------------------------


def noise_sigma_for_snr(samples, snr_db):
    """Per-component sigma giving ``snr_db`` relative to the rms sample magnitude."""
    rms = float(np.sqrt(np.mean(np.abs(samples) ** 2)))
    return rms * 10.0 ** (-snr_db / 20.0) / math.sqrt(2.0)


def simulate_acquisition(x, E, noise_sigma, seed=0):
    """``E x`` plus complex white Gaussian noise of per-component ``noise_sigma``."""
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    data = E.forward(np.asarray(getattr(x, "data", x)))
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal((2,) + data.shape)
        data = data + noise_sigma * (noise[0] + 1j * noise[1])
    return KSpaceSamples(E.trajectory, data)


# -- files -----------------------------------------------------------------


def _fmt(values):
    return " ".join(repr(float(v)) for v in values)


def phantom_spec_to_text(spec):
    lines = [f"background = {spec.background!r}", f"texture = {spec.texture!r}"]
    for e in spec.ellipsoids:
        lines.append(
            "ellipsoid = "
            + " ; ".join(
                [_fmt(e.center), _fmt(e.semi_axes), _fmt(e.rotation), repr(float(e.intensity))]
            )
        )
    for t in spec.tubes:
        pts = " , ".join(_fmt(p) for p in t.points)
        lines.append(f"tube = {t.radius!r} ; {float(t.intensity)!r} ; {pts}")
    return "\n".join(lines) + "\n"


def phantom_spec_from_text(text):
    kv = parse_key_values(text, repeatable=("ellipsoid", "tube"))
    try:
        ellipsoids = []
        for raw in kv.get("ellipsoid", []):
            parts = [p.strip() for p in raw.split(";")]
            if len(parts) != 4:
                raise FormatError(f"ellipsoid needs 4 ';'-separated fields: {raw!r}")
            ellipsoids.append(
                Ellipsoid(
                    tuple(split_numbers(parts[0])),
                    tuple(split_numbers(parts[1])),
                    tuple(split_numbers(parts[2])),
                    float(parts[3]),
                )
            )
        tubes = []
        for raw in kv.get("tube", []):
            parts = [p.strip() for p in raw.split(";")]
            if len(parts) != 3:
                raise FormatError(f"tube needs 'radius ; intensity ; points': {raw!r}")
            pts = tuple(tuple(float(v) for v in p.split()) for p in parts[2].split(","))
            tubes.append(Tube(pts, float(parts[0]), float(parts[1])))
        return PhantomSpec(
            ellipsoids=tuple(ellipsoids),
            tubes=tuple(tubes),
            background=float(kv.get("background", 0.0)),
            texture=float(kv.get("texture", 0.0)),
        )
    except ValueError as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed phantom spec: {exc}") from exc


def load_phantom_spec(path):
    with open(path) as fh:
        return phantom_spec_from_text(fh.read())


def save_phantom_spec(path, spec):
    atomic_write_text(path, phantom_spec_to_text(spec))


def save_centerlines(path, centerlines):
    """Text file: ``tube <radius_mm>`` followed by one ``x y z`` line per point."""
    lines = []
    for pts, radius in centerlines:
        lines.append(f"tube {radius!r}")
        lines += [_fmt(p) for p in pts]
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def load_centerlines(path):
    out = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            tokens = raw.split()
            if not tokens:
                continue
            if tokens[0] == "tube":
                out.append(([], float(tokens[1])))
            elif out and len(tokens) == 3:
                out[-1][0].append([float(v) for v in tokens])
            else:
                raise FormatError(f"{path}:{lineno}: unexpected line {raw.strip()!r}")
    return [(np.array(p), r) for p, r in out]
