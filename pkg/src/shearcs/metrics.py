"""Image-quality measures: relative error, slice-averaged HaarPSI and a
profile-based vessel sharpness score."""

import csv
import io
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.signal import convolve2d

from .textio import atomic_write_text

# HaarPSI constants of the reference construction (natural images)
HAARPSI_C = 30.0
HAARPSI_ALPHA = 4.2
GRAY_MAX = 255.0
# profiles whose centre is below this fraction of the volume maximum are skipped
VS_NOISE_FLOOR = 0.05


def _data(v):
    return np.asarray(getattr(v, "data", v))


def relative_error(rec, ref):
    """``|| |ref| - |rec| ||_2 / || ref ||_2`` over the whole volume."""
    a, b = np.abs(_data(rec)), np.abs(_data(ref))
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    denom = np.linalg.norm(b.ravel())
    if denom == 0:
        raise ValueError("reference volume is zero")
    return float(np.linalg.norm((b - a).ravel()) / denom)


# -- HaarPSI ---------------------------------------------------------------


def _haar_filter(scale):
    n = 2**scale
    f = np.full((n, n), 2.0**-scale)
    f[: n // 2] *= -1.0
    return f


def _conv(img, kernel):
    return convolve2d(img, kernel, mode="same")


def _sigmoid(x, a):
    return 1.0 / (1.0 + np.exp(-a * x))


def _logit(x, a):
    return np.log(x / (1.0 - x)) / a


def _haar_magnitudes(img):
    """``|coefficient|`` per scale (1..3) and orientation (0 horizontal, 1 vertical)."""
    out = np.empty((3, 2) + img.shape)
    for s in range(1, 4):
        f = _haar_filter(s)
        out[s - 1, 0] = np.abs(_conv(img, f))
        out[s - 1, 1] = np.abs(_conv(img, f.T))
    return out


def haarpsi_2d(a, b, c=HAARPSI_C, alpha=HAARPSI_ALPHA):
    """HaarPSI of two grayscale images in the 0..255 range.

    Returns ``None`` when both images carry no structure (all weights zero).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    box = np.ones((2, 2)) / 4.0
    a = _conv(a, box)[::2, ::2]
    b = _conv(b, box)[::2, ::2]
    ca, cb = _haar_magnitudes(a), _haar_magnitudes(b)
    lsim = np.empty((2,) + a.shape)
    weights = np.empty((2,) + a.shape)
    for o in range(2):
        weights[o] = np.maximum(ca[2, o], cb[2, o])
        sims = [
            (2 * ca[s, o] * cb[s, o] + c) / (ca[s, o] ** 2 + cb[s, o] ** 2 + c) for s in range(2)
        ]
        lsim[o] = 0.5 * (sims[0] + sims[1])
    total = weights.sum()
    if total <= 0:
        return None
    score = np.sum(_sigmoid(lsim, alpha) * weights) / total
    return float(_logit(score, alpha) ** 2)


def _gray_pair(rec, ref):
    a, b = np.abs(_data(rec)), np.abs(_data(ref))
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    top = max(a.max(), b.max())
    if top <= 0:
        raise ValueError("both volumes are zero; HaarPSI is undefined")
    return a * (GRAY_MAX / top), b * (GRAY_MAX / top)


def haarpsi(rec, ref, slice_axis=2):
    """Mean HaarPSI over all 2D slices perpendicular to ``slice_axis``.

    Magnitudes are rescaled jointly to 0..255. Slices where neither image
    has any structure contribute nothing.
    """
    a, b = _gray_pair(rec, ref)
    a = np.moveaxis(a, slice_axis, 0)
    b = np.moveaxis(b, slice_axis, 0)
    scores = [s for s in (haarpsi_2d(sa, sb) for sa, sb in zip(a, b)) if s is not None]
    if not scores:
        raise ValueError("every slice is constant; HaarPSI is undefined")
    return float(np.mean(scores))


# -- vessel sharpness ------------------------------------------------------


def _normals(tangent):
    t = tangent / np.linalg.norm(tangent)
    helper = np.eye(3)[np.argmin(np.abs(t))]
    n1 = np.cross(t, helper)
    n1 /= np.linalg.norm(n1)
    n2 = np.cross(t, n1)
    return n1, n2


def _resample_polyline(points, n):
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    if arc[-1] <= 0:
        raise ValueError("centerline has zero length")
    s = (np.arange(n) + 0.5) / n * arc[-1]
    pts = np.stack([np.interp(s, arc, points[:, k]) for k in range(3)], axis=1)
    idx = np.clip(np.searchsorted(arc, s) - 1, 0, len(seg) - 1)
    tangents = points[idx + 1] - points[idx]
    return pts, tangents


@dataclass
class SharpnessResult:
    score: float
    n_used: int
    n_skipped: int


def vessel_sharpness_details(
    vol, centerline, radius_hint, n_profiles=32, spacing=None, step=0.25
):
    """Profile-based sharpness with bookkeeping of skipped profiles.

    ``centerline`` is an ``(n, 3)`` polyline in mm (voxel index times
    spacing). Each sample point yields two profiles along orthogonal
    normals, each spanning ``+-2.5 * radius_hint``. A profile scores the
    mean of the steepest rise left of the centre and the steepest fall right
    of it, expressed per voxel and divided by the centre value. An ideal
    one-voxel step edge therefore scores 1.
    """
    arr = np.abs(_data(vol)).astype(np.float64)
    if spacing is None:
        spacing = getattr(getattr(vol, "grid", None), "spacing", (1.0, 1.0, 1.0))
    spacing = np.asarray(spacing, dtype=np.float64)
    pts = np.asarray(centerline, dtype=np.float64).reshape(-1, 3)
    if radius_hint <= 0:
        raise ValueError("radius_hint must be positive")
    if pts.shape[0] < 2:
        raise ValueError("centerline needs at least two points")
    vox = pts / spacing
    upper = np.array(arr.shape) - 1
    if np.any(vox < 0) or np.any(vox > upper):
        raise ValueError("centerline leaves the volume")

    centers, tangents = _resample_polyline(vox, n_profiles)
    voxel = float(np.min(spacing))
    half = 2.5 * radius_hint / voxel  # in voxels
    offsets = np.arange(-half, half + step / 2, step)
    floor = VS_NOISE_FLOOR * arr.max()
    scores = []
    skipped = 0
    for p, t in zip(centers, tangents):
        for n in _normals(t * spacing):
            direction = n / spacing * voxel  # one-voxel steps in mm-isotropic sense
            coords = p[:, None] + direction[:, None] * offsets[None, :]
            prof = map_coordinates(arr, coords, order=1, mode="nearest")
            mid = len(offsets) // 2
            center = prof[mid - 1 : mid + 2].max()
            if center <= floor:
                skipped += 1
                continue
            grad = np.diff(prof) / step
            rise = np.max(grad[:mid]) if mid > 0 else 0.0
            fall = -np.min(grad[mid:])
            scores.append(0.5 * (max(rise, 0.0) + max(fall, 0.0)) / center)
    score = float(np.clip(np.mean(scores), 0.0, 1.0)) if scores else 0.0
    return SharpnessResult(score, len(scores), skipped)


def vessel_sharpness(vol, centerline, radius_hint, n_profiles=32, spacing=None):
    """Mean edge sharpness of a tubular structure in ``[0, 1]``."""
    return vessel_sharpness_details(vol, centerline, radius_hint, n_profiles, spacing).score


# -- reports ---------------------------------------------------------------


@dataclass
class MetricReport:
    variant: str
    factor: int
    r_total: float
    seed: int
    relative_error: float
    haarpsi: float
    vessel_sharpness: float = float("nan")
    truth_relative_error: float = float("nan")
    truth_haarpsi: float = float("nan")
    truth_vessel_sharpness: float = float("nan")
    extra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.relative_error < 0:
            raise ValueError("relative_error must be >= 0")
        if not 0 < self.haarpsi <= 1 + 1e-12:
            raise ValueError(f"haarpsi out of range: {self.haarpsi}")


def _fmt(v):
    if isinstance(v, float):
        return "" if np.isnan(v) else f"{v:.10g}"
    return str(v)


def report_columns(include_truth=True):
    cols = [
        "variant",
        "factor",
        "r_total",
        "seed",
        "relative_error",
        "haarpsi",
        "vessel_sharpness",
    ]
    if include_truth:
        cols += ["truth_relative_error", "truth_haarpsi", "truth_vessel_sharpness"]
    return cols


def reports_to_csv(reports, include_truth=True):
    cols = report_columns(include_truth)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for r in reports:
        row = asdict(r)
        writer.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def write_reports(path, reports, include_truth=True):
    atomic_write_text(Path(path), reports_to_csv(reports, include_truth))


def read_reports(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
