"""Reweighted l1 reconstruction by ADMM, plus the itSENSE baseline.

The penalized problem is

    min_x  sum_i sigma_i |(Psi x)_i| + beta/2 ||y - E x||^2

split as ``d = Psi x`` with scaled dual ``b``. Each outer iteration solves
``(beta E*E + mu Psi*Psi) x = beta E*y + mu Psi*(d - b)`` by a few warm
started CG steps, soft-thresholds ``Psi x + b`` with ``sigma / mu`` and
updates ``b``. Weights are recomputed from the current coefficients as
``lambda_j / (|c| + nu)`` within each scale level ``j`` and frozen after
``freeze_after`` iterations.

All solver arithmetic happens on data scaled so the initial image has unit
peak magnitude. Reported images are scaled back; objective values stay in
the normalised units.
"""

import csv
import io
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .metrics import relative_error
from .numerics import ComplexVolume
from .textio import FormatError, atomic_write_text, parse_key_values, split_numbers
from .transforms import build_transform
from .transforms.base import CoefficientStack

VARIANTS = ("3DShearCS", "2DShearCS", "WaveCS", "TV", "itSENSE")
VARIANT_TRANSFORMS = {
    "3DShearCS": ("shearlet3d", True),
    "2DShearCS": ("shearlet2d-slicewise", True),
    "WaveCS": ("wavelet3d", False),
    "TV": ("grad3d", False),
}
DIAGNOSTIC_COLUMNS = ("iteration", "objective", "residual", "weight_change", "rel_err")


class SolverDivergence(RuntimeError):
    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class ADMMConfig:
    """Solver parameters.

    ``lambdas`` holds one scale per transform level (level 0 is the
    low-pass band); when empty, ``default_lambdas`` is used with
    ``lambda_scale`` as a common factor. ``nu`` overrides the relative
    stabiliser ``nu_rel * max|Psi x0|`` when given.
    """

    beta: float = 100.0
    mu: float = 3.0
    nu_rel: float = 1e-3
    nu: float = None
    lambdas: tuple = ()
    # shearlet coefficients of a unit-peak image are small, so the level
    # scales need a small common factor to leave real structure untouched
    lambda_scale: float = 1e-4
    max_outer: int = 12
    freeze_after: int = 3
    reweight: bool = True
    inner_iters: int = 6
    inner_tol: float = 1e-6
    sense_iters: int = 10
    coeff_dtype: str = "complex64"
    n_scales: int = None
    slice_axis: int = 2
    divergence_factor: float = 10.0
    variant: str = "3DShearCS"

    def __post_init__(self):
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))
        if not (self.beta > 0 and self.mu > 0):
            raise ValueError("beta and mu must be positive")
        if not self.nu_rel > 0 or (self.nu is not None and not self.nu > 0):
            raise ValueError("nu must be positive")
        if any(not v > 0 for v in self.lambdas) or not self.lambda_scale > 0:
            raise ValueError("every lambda must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be >= 1")
        if self.freeze_after < 0:
            raise ValueError("freeze_after must be >= 0")
        if self.divergence_factor < 1:
            raise ValueError("divergence_factor must be >= 1")
        if self.inner_iters < 1 or self.sense_iters < 1:
            raise ValueError("iteration budgets must be >= 1")
        if self.coeff_dtype not in ("complex64", "complex128"):
            raise ValueError("coeff_dtype must be complex64 or complex128")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")

    def level_scales(self, n_levels):
        if not self.lambdas:
            return tuple(self.lambda_scale * v for v in default_lambdas(n_levels))
        if len(self.lambdas) != n_levels:
            raise ValueError(f"{len(self.lambdas)} lambdas given for {n_levels} levels")
        return tuple(self.lambda_scale * v for v in self.lambdas)


def default_lambdas(n_levels):
    """``2^(-j/2)`` for scale level ``j >= 1`` and a tenth of level 1 for the low-pass."""
    lam = [2.0 ** (-j / 2.0) for j in range(n_levels)]
    if n_levels > 1:
        lam[0] = 0.1 * lam[1]
    return tuple(lam)


# -- config files ----------------------------------------------------------

_CONFIG_KEYS = {
    "beta": float,
    "mu": float,
    "nu_rel": float,
    "nu": float,
    "lambda_scale": float,
    "max_outer": int,
    "freeze_after": int,
    "inner_iters": int,
    "inner_tol": float,
    "sense_iters": int,
    "coeff_dtype": str,
    "n_scales": int,
    "slice_axis": int,
    "divergence_factor": float,
    "variant": str,
}


def _parse_bool(value):
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def config_from_text(text):
    kv = parse_key_values(text)
    kwargs = {}
    for key, raw in kv.items():
        try:
            if key == "lambda_per_level":
                kwargs["lambdas"] = tuple(split_numbers(raw))
            elif key == "reweight":
                kwargs[key] = _parse_bool(raw)
            elif key in _CONFIG_KEYS:
                kwargs[key] = _CONFIG_KEYS[key](raw)
            else:
                raise FormatError(f"unknown solver key {key!r}")
        except ValueError as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"bad value for {key!r}: {raw!r}") from exc
    return ADMMConfig(**kwargs)


def load_config(path):
    with open(path) as fh:
        return config_from_text(fh.read())


def config_to_text(cfg):
    lines = []
    for key, value in asdict(cfg).items():
        if key == "lambdas":
            if value:
                lines.append("lambda_per_level = " + " ".join(repr(v) for v in value))
        elif value is not None:
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def save_config(path, cfg):
    atomic_write_text(path, config_to_text(cfg))


# -- building blocks -------------------------------------------------------


@dataclass(frozen=True)
class WeightState:
    """Diagonal of the weighting matrix, laid out like the coefficient stack."""

    sigma: np.ndarray
    iteration: int = 0


def _flat(c):
    return c.data if isinstance(c, CoefficientStack) else np.asarray(c).reshape(-1)


def update_weights(c, partition, lambdas, nu, prev=None):
    """``sigma = lambda_j / (|c| + nu)`` within each level range of ``partition``."""
    data = _flat(c)
    if len(lambdas) != 1 + max(level for level, _, _ in partition):
        raise ValueError("one lambda per partition level is required")
    if partition[-1][2] != data.size:
        raise ValueError("partition does not match the coefficient layout")
    if not nu > 0:
        raise ValueError("nu must be positive")
    if prev is not None and prev.sigma.shape != data.shape:
        raise ValueError("previous weights have a different layout")
    real = np.float32 if data.dtype == np.complex64 else np.float64
    sigma = np.abs(data).astype(real, copy=False)
    sigma += real(nu)
    for level, start, stop in partition:
        np.divide(real(lambdas[level]), sigma[start:stop], out=sigma[start:stop])
    return WeightState(sigma, 0 if prev is None else prev.iteration + 1)


def shrink(z, tau):
    """Complex soft thresholding ``max(|z| - tau, 0) z / |z|``."""
    is_stack = isinstance(z, CoefficientStack)
    data = _flat(z)
    tau = np.asarray(tau)
    if np.any(tau < 0):
        raise ValueError("thresholds must be non-negative")
    mag = np.abs(data)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = 1.0 - tau / mag
    np.maximum(scale, 0.0, out=scale)
    scale[mag == 0] = 0.0
    out = data * scale.astype(mag.dtype, copy=False)
    return z.with_data(out) if is_stack else out.reshape(np.shape(z))


def _shrink_into(z, tau):
    """In-place variant of :func:`shrink` for large coefficient vectors."""
    mag = np.abs(z)
    np.maximum(mag, np.finfo(mag.dtype).tiny, out=mag)
    np.divide(tau, mag, out=mag)
    np.subtract(1.0, mag, out=mag)
    np.maximum(mag, 0.0, out=mag)
    z *= mag
    return z


@dataclass
class CGResult:
    x: np.ndarray
    residual: float
    iterations: int


def cg_solve(A, rhs, x0=None, iters=6, tol=1e-6, callback=None, precond=None):
    """Conjugate gradients for a self-adjoint PSD operator ``A``.

    Stops after ``iters`` steps or once ``||rhs - A x|| <= tol ||rhs||``.
    ``precond`` applies an approximate inverse of ``A`` (self-adjoint,
    positive definite). ``callback(x, k)`` runs after every step.
    """
    rhs = np.asarray(rhs)
    x = np.zeros_like(rhs, dtype=np.complex128) if x0 is None else np.array(x0, dtype=np.complex128)
    r = rhs - A(x) if x0 is not None else rhs.astype(np.complex128, copy=True)
    bnorm = np.linalg.norm(rhs.ravel())
    if bnorm == 0:
        return CGResult(np.zeros_like(x), 0.0, 0)
    rnorm = np.linalg.norm(r.ravel())
    if rnorm <= tol * bnorm:
        return CGResult(x, rnorm / bnorm, 0)
    z = r if precond is None else precond(r)
    rz = np.vdot(r, z).real
    p = z.copy()
    k = 0
    for k in range(1, iters + 1):
        ap = A(p)
        pap = np.vdot(p, ap).real
        if pap <= 0:
            k -= 1
            break
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        rnorm = np.linalg.norm(r.ravel())
        if callback is not None:
            callback(x, k)
        if rnorm <= tol * bnorm:
            break
        z = r if precond is None else precond(r)
        rz_new = np.vdot(r, z).real
        p *= rz_new / rz
        p += z
        rz = rz_new
    return CGResult(x, rnorm / bnorm, k)


# -- results ---------------------------------------------------------------


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    residual: float
    weight_change: float
    rel_err: float = float("nan")


@dataclass(frozen=True)
class ReconResult:
    volume: ComplexVolume
    diagnostics: tuple
    metadata: dict = field(default_factory=dict, compare=False)

    def column(self, name):
        return np.array([getattr(d, name) for d in self.diagnostics])


def diagnostics_to_csv(diagnostics):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DIAGNOSTIC_COLUMNS)
    for d in diagnostics:
        row = [d.iteration]
        for name in DIAGNOSTIC_COLUMNS[1:]:
            v = getattr(d, name)
            row.append("" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.10g}")
        writer.writerow(row)
    return buf.getvalue()


def save_diagnostics(path, diagnostics):
    atomic_write_text(Path(path), diagnostics_to_csv(diagnostics))


def load_diagnostics(path):
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            vals = {k: float(row[k]) if row[k] else float("nan") for k in DIAGNOSTIC_COLUMNS[1:]}
            out.append(IterationRecord(int(row["iteration"]), **vals))
    return out


# -- solvers ---------------------------------------------------------------


def _samples(y):
    return np.asarray(getattr(y, "data", y))


def _reference(reference):
    return None if reference is None else np.asarray(getattr(reference, "data", reference))


def initial_image(y, E):
    """Density-compensated adjoint, scaled by the least-squares factor that
    best matches its own forward projection to ``y``."""
    x0 = E.adjoint(y, use_density=E.density is not None)
    ex = E.forward(x0)
    denom = np.vdot(ex, ex).real
    if denom == 0:
        return x0
    return x0 * (np.vdot(ex, y) / denom)


def _rel_change(new, old):
    denom = float(np.sum(old, dtype=np.float64))
    return float(np.sum(np.abs(new - old), dtype=np.float64) / denom) if denom > 0 else 0.0


def admm_solve(y, E, T, cfg, reference=None, weights=None, callback=None):
    """Run the (re)weighted ADMM.

    ``weights`` forces a fixed weight vector; with ``cfg.reweight`` false
    and no ``weights`` every sigma is 1 and no weights are ever computed.
    ``callback(k, x, sigma)`` sees every iterate (``x`` in normalised units,
    ``sigma`` the weights used in iteration ``k``).
    """
    y = _samples(y)
    ref = _reference(reference)
    dtype = np.dtype(cfg.coeff_dtype)
    real = np.float32 if dtype == np.complex64 else np.float64

    x = initial_image(y, E)
    scale = float(np.max(np.abs(x)))
    if scale == 0:
        zero = ComplexVolume(E.grid, np.zeros(E.grid.shape, np.complex128))
        return ReconResult(zero, (), {"variant": cfg.variant, "scale": 0.0})
    ys = y / scale
    x = x / scale
    ehy = E.adjoint(ys)
    beta, mu = cfg.beta, cfg.mu

    if T.parseval:
        def A(v):
            return beta * E.gram(v) + mu * v
    else:
        def A(v):
            return beta * E.gram(v) + mu * T.gram(v)

    partition = T.partition
    lambdas = cfg.level_scales(T.n_levels)
    c = T.analyze(x, dtype=dtype).data
    nu = cfg.nu if cfg.nu is not None else cfg.nu_rel * float(np.max(np.abs(c)))
    if nu <= 0:
        nu = cfg.nu_rel
    tracking = cfg.reweight and weights is None
    candidate = update_weights(c, partition, lambdas, nu).sigma if tracking else None
    if weights is not None:
        sigma = np.asarray(weights, dtype=real).reshape(-1)
        if sigma.size != c.size:
            raise ValueError("weights do not match the coefficient layout")
    elif tracking:
        sigma = candidate.copy()
    else:
        sigma = np.ones(c.size, dtype=real)
    d = c.copy()
    b = np.zeros_like(c)

    records = []
    # residuals far below the data norm are never treated as a baseline
    min_res = math.inf
    res_floor = 1e-3 * float(np.linalg.norm(ys.ravel()))
    for k in range(cfg.max_outer):
        tmp = np.subtract(d, b)
        rhs = beta * ehy + mu * T.synthesize(tmp)
        del tmp
        x = cg_solve(A, rhs, x, cfg.inner_iters, cfg.inner_tol).x
        c = T.analyze(x, dtype=dtype).data
        # d <- shrink(c + b, sigma / mu)
        np.add(c, b, out=d)
        _shrink_into(d, sigma / real(mu))
        # b <- b + c - d
        b += c
        b -= d

        if callback is not None:
            callback(k, x, sigma)
        change = 0.0
        if tracking:
            # candidates keep being computed after the freeze so the
            # weight-change diagnostic stays informative
            new_candidate = update_weights(c, partition, lambdas, nu).sigma
            change = _rel_change(new_candidate, candidate)
            candidate = new_candidate
            if k < cfg.freeze_after:
                sigma = candidate.copy()

        ex = E.forward(x)
        res = float(np.linalg.norm((ys - ex).ravel()))
        objective = float(np.sum(sigma * np.abs(c), dtype=np.float64)) + 0.5 * beta * res**2
        err = relative_error(x * scale, ref) if ref is not None else float("nan")
        records.append(IterationRecord(k + 1, objective, res * scale, change, err))
        min_res = min(min_res, max(res, res_floor))
        if res > cfg.divergence_factor * min_res:
            raise SolverDivergence(
                f"data residual {res:.3g} exceeds {cfg.divergence_factor}x its minimum {min_res:.3g}",
                tuple(records),
            )

    meta = {
        "variant": cfg.variant,
        "transform": T.kind,
        "beta": beta,
        "mu": mu,
        "nu": nu,
        "lambdas": lambdas,
        "scale": scale,
        "final_sigma": sigma,
    }
    return ReconResult(ComplexVolume(E.grid, x * scale), tuple(records), meta)


def itsense(y, E, iters=10, tol=1e-6, reference=None):
    """CG on ``E*E x = E*y`` started from the density-compensated adjoint."""
    y = _samples(y)
    ref = _reference(reference)
    x0 = initial_image(y, E)
    records = []

    def record(x, k):
        res = float(np.linalg.norm((y - E.forward(x)).ravel()))
        err = relative_error(x, ref) if ref is not None else float("nan")
        records.append(IterationRecord(k, 0.5 * res**2, res, 0.0, err))

    out = cg_solve(E.gram, E.adjoint(y), x0, iters, tol, callback=record)
    meta = {"variant": "itSENSE", "cg_residual": out.residual, "cg_iterations": out.iterations}
    return ReconResult(ComplexVolume(E.grid, out.x), tuple(records), meta)


def build_variant_transform(variant, grid, cfg):
    kind, _ = VARIANT_TRANSFORMS[variant]
    return build_transform(kind, grid, cfg.n_scales, cfg.slice_axis)


def reconstruct_variant(variant, y, E, cfg=None, reference=None, transform=None):
    """Dispatch one of the named reconstruction methods."""
    cfg = cfg or ADMMConfig()
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")
    if variant == "itSENSE":
        return itsense(y, E, cfg.sense_iters, cfg.inner_tol, reference=reference)
    _, reweight = VARIANT_TRANSFORMS[variant]
    T = transform or build_variant_transform(variant, E.grid, cfg)
    return admm_solve(y, E, T, replace(cfg, reweight=reweight, variant=variant), reference)
