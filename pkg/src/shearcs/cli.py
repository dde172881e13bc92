"""Batch driver: ``simulate | reconstruct | evaluate | sweep | export-slice``.

Every subcommand reads a run manifest (``key = value`` text). Relative
paths inside the manifest are resolved against the manifest's directory.
On failure one line ``error <category>: <message>`` goes to stderr and the
exit code identifies the category.
"""

import argparse
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import metrics, simulation
from .encoding import (
    EncodingOperator,
    KSpaceSamples,
    SensitivityMaps,
    load_kspace,
    save_kspace,
)
from .numerics import ComplexVolume, Grid3, load_volume, save_volume, set_fft_workers
from .sampling import (
    MODES,
    SCHEMES,
    generate_rpe,
    retro_undersample,
    save_trajectory,
    total_undersampling,
)
from .solver import (
    VARIANTS,
    ADMMConfig,
    SolverDivergence,
    load_config,
    reconstruct_variant,
    save_diagnostics,
)
from .textio import FormatError, atomic_write_bytes, parse_key_values, split_numbers

EXIT_CODES = {"usage": 2, "manifest": 3, "input": 4, "io": 5, "solver": 6, "internal": 1}


class CLIError(Exception):
    def __init__(self, category, message):
        super().__init__(message)
        self.category = category


@dataclass(frozen=True)
class RunManifest:
    out_dir: Path
    grid: Grid3
    n_coils: int = 8
    seed: int = 1
    snr_db: float = 30.0
    phantom: Path = None  # None selects the built-in phantom
    n_lines: int = 16
    n_radial: int = 64
    scheme: str = "uniform"
    mode: str = "stride"
    factors: tuple = (1, 2, 4, 6)
    variants: tuple = VARIANTS
    solver: Path = None
    threads: int = 1

    def __post_init__(self):
        if not self.variants:
            raise ValueError("variants must not be empty")
        bad = [v for v in self.variants if v not in VARIANTS]
        if bad:
            raise ValueError(f"unknown variants {bad}; valid: {', '.join(VARIANTS)}")
        if not self.factors or any(f < 1 for f in self.factors):
            raise ValueError("factors must be integers >= 1")
        if self.scheme not in SCHEMES or self.mode not in MODES:
            raise ValueError(f"scheme must be one of {SCHEMES}, mode one of {MODES}")
        if self.n_coils < 1:
            raise ValueError("coils must be >= 1")
        for p in (self.phantom, self.solver):
            if p is not None and not Path(p).is_file():
                raise ValueError(f"referenced file does not exist: {p}")

    @property
    def base_r(self):
        return self.grid.ny * self.grid.nz / (self.n_lines * self.n_radial)

    def solver_config(self):
        return load_config(self.solver) if self.solver else ADMMConfig()

    # output layout
    def path(self, *parts):
        return self.out_dir.joinpath(*parts)

    def trajectory_path(self, factor):
        return self.path("data", f"trajectory_f{factor}.cstraj")

    def kspace_path(self, factor):
        return self.path("data", f"kspace_f{factor}.csksp")

    def recon_path(self, variant, factor):
        return self.path("recon", f"{variant}_f{factor}.csvol")

    def diagnostics_path(self, variant, factor):
        return self.path("recon", f"{variant}_f{factor}_diagnostics.csv")


_INT_KEYS = ("coils", "seed", "n_lines", "n_radial", "threads")


def load_manifest(path, overrides=None):
    path = Path(path)
    try:
        kv = parse_key_values(path.read_text())
    except OSError as exc:
        raise CLIError("io", f"cannot read manifest {path}: {exc}") from exc
    except FormatError as exc:
        raise CLIError("manifest", f"{path}: {exc}") from exc
    kv.update({k: str(v) for k, v in (overrides or {}).items() if v is not None})
    base = path.parent
    known = {"out", "grid", "spacing", "phantom", "solver", "snr_db", "scheme", "mode",
             "factors", "variants"} | set(_INT_KEYS)
    unknown = sorted(set(kv) - known)
    if unknown:
        raise CLIError("manifest", f"{path}: unknown keys {unknown}")
    try:
        dims = split_numbers(kv.get("grid", "64 64 64"), int)
        if len(dims) == 1:
            dims = dims * 3
        spacing = split_numbers(kv.get("spacing", "1.5"))
        grid = Grid3(*dims, spacing=tuple(spacing) if len(spacing) == 3 else spacing[0])

        def resolve(key):
            value = kv.get(key, "default")
            return None if value == "default" else (base / value)

        return RunManifest(
            out_dir=base / kv.get("out", "run"),
            grid=grid,
            n_coils=int(kv.get("coils", 8)),
            seed=int(kv.get("seed", 1)),
            snr_db=float(kv.get("snr_db", 30.0)),
            phantom=resolve("phantom"),
            n_lines=int(kv.get("n_lines", 16)),
            n_radial=int(kv.get("n_radial", dims[1])),
            scheme=kv.get("scheme", "uniform"),
            mode=kv.get("mode", "stride"),
            factors=tuple(split_numbers(kv.get("factors", "1 2 4 6"), int)),
            variants=tuple(kv.get("variants", " ".join(VARIANTS)).replace(",", " ").split()),
            solver=resolve("solver"),
            threads=int(kv.get("threads", 1)),
        )
    except (ValueError, TypeError) as exc:
        raise CLIError("manifest", f"{path}: {exc}") from exc


# -- pipeline stages -------------------------------------------------------


def _require(path, what):
    if not Path(path).is_file():
        raise CLIError("input", f"missing {what}: {path} (run the earlier stage first)")
    return path


def _base_trajectory(m):
    return generate_rpe(m.grid.nx, m.n_lines, m.n_radial, m.scheme, (m.grid.ny, m.grid.nz))


def _maps(m):
    return simulation.make_coils(m.grid, m.n_coils, seed=m.seed)


def cmd_simulate(m, log=print):
    spec = (
        simulation.load_phantom_spec(m.phantom)
        if m.phantom
        else simulation.default_phantom_spec(m.grid)
    )
    truth, centerlines = simulation.make_phantom(m.grid, spec, seed=m.seed)
    maps = _maps(m)
    base = _base_trajectory(m)
    E = EncodingOperator(maps, base)
    clean = E.forward(truth.data)
    sigma = simulation.noise_sigma_for_snr(clean, m.snr_db)
    y = simulation.simulate_acquisition(truth, E, sigma, seed=m.seed).data

    save_volume(m.path("truth.csvol"), truth)
    simulation.save_centerlines(m.path("centerlines.txt"), centerlines)
    simulation.save_phantom_spec(m.path("phantom.txt"), spec)
    for c in range(maps.n_coils):
        save_volume(m.path("data", f"coil_{c:02d}.csvol"), ComplexVolume(m.grid, maps.maps[c]))
    per_line = base.n_read * base.n_radial
    log(f"noise_sigma {sigma:.6g}")
    for f in m.factors:
        t = retro_undersample(base, f, m.mode)
        keep = (t.line_ids[:, None] * per_line + np.arange(per_line)[None]).ravel()
        save_trajectory(m.trajectory_path(f), t)
        save_kspace(
            m.kspace_path(f), KSpaceSamples(t, y[:, keep]), m.trajectory_path(f).name
        )
        log(
            f"factor {f} lines {t.n_lines} R {total_undersampling(m.base_r, f):g} "
            f"nominal_R {t.nominal_undersampling():g}"
        )


def _load_maps(m):
    maps = []
    for c in range(m.n_coils):
        maps.append(load_volume(_require(m.path("data", f"coil_{c:02d}.csvol"), "coil map")).data)
    return SensitivityMaps(m.grid, np.stack(maps), floor_fraction=0.05)


def cmd_reconstruct(m, variant, factor, log=print, transform=None):
    if variant not in VARIANTS:
        raise CLIError("usage", f"unknown variant {variant!r}; valid: {', '.join(VARIANTS)}")
    ksp = load_kspace(_require(m.kspace_path(factor), "k-space"))
    maps = _load_maps(m)
    E = EncodingOperator(maps, ksp.trajectory)
    truth_path = m.path("truth.csvol")
    truth = load_volume(truth_path) if truth_path.is_file() else None
    cfg = m.solver_config()
    start = time.perf_counter()
    try:
        result = reconstruct_variant(
            variant, ksp.data.astype(np.complex128), E, cfg, reference=truth, transform=transform
        )
    except SolverDivergence as exc:
        save_diagnostics(m.diagnostics_path(variant, factor), exc.diagnostics)
        raise CLIError("solver", f"{variant} factor {factor}: {exc}") from exc
    save_volume(m.recon_path(variant, factor), result.volume)
    save_diagnostics(m.diagnostics_path(variant, factor), result.diagnostics)
    log(f"{variant} factor {factor} done in {time.perf_counter() - start:.1f}s")
    return result


def write_pgm(path, image, vmax=None):
    """8-bit binary portable graymap of ``|image|`` scaled so ``vmax`` maps to 255."""
    mag = np.abs(np.asarray(image, dtype=np.complex128))
    vmax = float(mag.max()) if vmax is None else float(vmax)
    scaled = np.zeros(mag.shape) if vmax <= 0 else np.clip(mag / vmax, 0.0, 1.0) * 255.0
    pix = np.round(scaled).astype(np.uint8)
    # rows = second axis so the slice displays with x running left to right
    rows = pix.T
    header = f"P5\n{rows.shape[1]} {rows.shape[0]}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + rows.tobytes())


def read_pgm(path):
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM supported")
    pix = np.frombuffer(parts[4][: w * h], dtype=np.uint8)
    return pix.reshape(h, w).T


def centre_slice(data, axis):
    return np.take(data, data.shape[axis] // 2, axis=axis)


def cmd_export_slice(m, variant, factor, axis=2, vmax=None, target=None):
    src = m.path("truth.csvol") if variant == "truth" else m.recon_path(variant, factor)
    vol = load_volume(_require(src, "volume"))
    name = "truth" if variant == "truth" else f"{variant}_f{factor}"
    target = target or m.path("slices", f"{name}_axis{axis}.pgm")
    write_pgm(target, centre_slice(vol.data, axis), vmax)
    return target


def cmd_evaluate(m, slice_axis=2, log=print):
    low = min(m.factors)
    if "itSENSE" not in m.variants:
        raise CLIError("manifest", "evaluation needs itSENSE in variants for the reference image")
    reference = load_volume(_require(m.recon_path("itSENSE", low), "reference reconstruction"))
    truth_path = m.path("truth.csvol")
    truth = load_volume(truth_path) if truth_path.is_file() else None
    cl_path = m.path("centerlines.txt")
    centerlines = simulation.load_centerlines(cl_path) if cl_path.is_file() else []

    def sharpness(vol):
        if not centerlines:
            return float("nan")
        vals = [metrics.vessel_sharpness(vol, pts, r) for pts, r in centerlines]
        return float(np.mean(vals))

    vmax = float(np.abs(reference.data).max())
    # the truth's own score, repeated on every row for comparison
    truth_vs = sharpness(truth) if truth is not None else float("nan")
    reports = []
    for variant in m.variants:
        for f in m.factors:
            rec = load_volume(_require(m.recon_path(variant, f), "reconstruction"))
            rep = metrics.MetricReport(
                variant=variant,
                factor=f,
                r_total=total_undersampling(m.base_r, f),
                seed=m.seed,
                relative_error=metrics.relative_error(rec, reference),
                haarpsi=metrics.haarpsi(rec, reference, slice_axis),
                vessel_sharpness=sharpness(rec),
            )
            if truth is not None:
                rep.truth_relative_error = metrics.relative_error(rec, truth)
                rep.truth_haarpsi = metrics.haarpsi(rec, truth, slice_axis)
                rep.truth_vessel_sharpness = truth_vs
            reports.append(rep)
            cmd_export_slice(m, variant, f, slice_axis, vmax)
    if truth is not None:
        cmd_export_slice(m, "truth", low, slice_axis, vmax)
    target = m.path("results.csv")
    metrics.write_reports(target, reports, include_truth=truth is not None)
    log(f"wrote {len(reports)} rows to {target}")
    return reports


def cmd_sweep(m, slice_axis=2, log=print):
    from .solver import build_variant_transform

    cmd_simulate(m, log)
    cfg = m.solver_config()
    for variant in m.variants:
        transform = None
        if variant != "itSENSE":
            transform = build_variant_transform(variant, m.grid, cfg)
        for f in m.factors:
            cmd_reconstruct(m, variant, f, log, transform=transform)
        del transform
    return cmd_evaluate(m, slice_axis, log)


# -- entry point -----------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="shearcs", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--manifest", required=True, type=Path)
        sp.add_argument("--out", type=Path, help="override the manifest's output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int)

    common(sub.add_parser("simulate", help="write phantom, coils, trajectories and k-space"))
    r = sub.add_parser("reconstruct", help="reconstruct one variant at one factor")
    common(r)
    r.add_argument("--variant", required=True)
    r.add_argument("--factor", type=int, required=True)
    e = sub.add_parser("evaluate", help="metrics table and slice images")
    common(e)
    e.add_argument("--slice-axis", type=int, default=2)
    s = sub.add_parser("sweep", help="simulate, reconstruct all variants x factors, evaluate")
    common(s)
    s.add_argument("--slice-axis", type=int, default=2)
    x = sub.add_parser("export-slice", help="write the centre slice of a volume as PGM")
    common(x)
    x.add_argument("--variant", required=True, help="variant name or 'truth'")
    x.add_argument("--factor", type=int, default=1)
    x.add_argument("--slice-axis", type=int, default=2)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CODES["usage"]
    try:
        m = load_manifest(args.manifest, {"seed": args.seed, "threads": args.threads})
        if args.out is not None:
            m = replace(m, out_dir=args.out)
        set_fft_workers(m.threads)
        if args.command == "simulate":
            cmd_simulate(m)
        elif args.command == "reconstruct":
            cmd_reconstruct(m, args.variant, args.factor)
        elif args.command == "evaluate":
            cmd_evaluate(m, args.slice_axis)
        elif args.command == "sweep":
            cmd_sweep(m, args.slice_axis)
        elif args.command == "export-slice":
            print(cmd_export_slice(m, args.variant, args.factor, args.slice_axis))
    except CLIError as exc:
        print(f"error {exc.category}: {exc}", file=sys.stderr)
        return EXIT_CODES[exc.category]
    except FormatError as exc:
        print(f"error input: {exc}", file=sys.stderr)
        return EXIT_CODES["input"]
    except OSError as exc:
        print(f"error io: {exc}", file=sys.stderr)
        return EXIT_CODES["io"]
    except ValueError as exc:
        print(f"error input: {exc}", file=sys.stderr)
        return EXIT_CODES["input"]
    except Exception as exc:  # noqa: BLE001 - last-resort one-line report
        print(f"error internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CODES["internal"]
    return 0


if __name__ == "__main__":
    sys.exit(main())
