"""Command-line experiment harness: presets, single runs, sweeps and Marmousi runs."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import platform
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .assemble import assemble_forms
from .coeffs import (
    MARMOUSI_RECT,
    CellField,
    CoefficientError,
    layered_velocity,
    marmousi_problem,
    plane_wave_problem,
    read_velocity_grid,
    scattering_problem,
    write_velocity_file,
)
from .decomp import DecompositionError
from .gfem import galerkin_residual, msgfem_pipeline, solve_fine, write_solution_csv
from .grid import GridError, build_grid
from .local import LocalProblemError, write_eigen_csv
from .metrics import DecayBound, exact_energy_error, relative_errors, write_bound_csv

PROBLEMS = ("plane-wave", "scattering", "marmousi")
SWEEP_AXES = ("n_loc", "ell", "m", "k-scaling")


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


@dataclass
class RunConfig:
    problem: str = "plane-wave"
    nx: int = 128
    ny: int = 128
    x0: float = 0.0
    y0: float = 0.0
    x1: float = 1.0
    y1: float = 1.0
    k: float = 25.0
    mx: int = 4
    my: int = 4
    overlap: int = 2
    ell: int = 8
    nloc: int = 20
    eigtol: float = 1e-8
    seed: int = 0
    outdir: str = "out"
    velocity_file: Optional[str] = None
    freq_hz: Optional[float] = None
    heavy: bool = False

    KEYS = ("problem", "nx", "ny", "x0", "y0", "x1", "y1", "k", "mx", "my", "overlap",
            "ell", "nloc", "eigtol", "seed", "outdir", "velocity_file", "freq_hz")

    @classmethod
    def from_mapping(cls, values: dict, base: "RunConfig | None" = None) -> "RunConfig":
        cfg = dataclasses.replace(base) if base else cls()
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        for key, raw in values.items():
            if key not in cls.KEYS:
                raise ConfigError(f"unknown config key '{key}'")
            if raw is None or (isinstance(raw, str) and raw.strip().lower() in ("", "none")):
                if key in ("velocity_file", "freq_hz"):
                    setattr(cfg, key, None)
                    continue
                raise ConfigError(f"{key}: a value is required")
            kind = types[key]
            try:
                if "int" in kind:
                    val = int(raw)
                    if isinstance(raw, float) and raw != val:
                        raise ValueError
                elif "float" in kind:
                    val = float(raw)
                else:
                    val = str(raw).strip()
            except (TypeError, ValueError):
                raise ConfigError(f"{key}: cannot parse {raw!r}") from None
            setattr(cfg, key, val)
        return cfg

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.KEYS}

    @property
    def rect(self) -> tuple:
        return (self.x0, self.y0, self.x1, self.y1)

    def validate(self) -> None:
        """Check every field before any solve."""
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem: expected one of {PROBLEMS}, got '{self.problem}'")
        for key in ("nx", "ny", "mx", "my", "overlap", "nloc"):
            if getattr(self, key) < 1:
                raise ConfigError(f"{key}: must be a positive integer, got {getattr(self, key)}")
        if self.ell < 0:
            raise ConfigError(f"ell: must be non-negative, got {self.ell}")
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise ConfigError("x0/x1/y0/y1: rectangle is empty")
        hx = (self.x1 - self.x0) / self.nx
        hy = (self.y1 - self.y0) / self.ny
        if abs(hx - hy) > 1e-12 * max(hx, hy):
            raise ConfigError(f"nx/ny: cells must be square (hx={hx:g}, hy={hy:g})")
        if self.nx % self.mx:
            raise ConfigError(f"mx: {self.mx} does not divide nx={self.nx}")
        if self.ny % self.my:
            raise ConfigError(f"my: {self.my} does not divide ny={self.ny}")
        if min(self.nx // self.mx, self.ny // self.my) < self.overlap:
            raise ConfigError(f"overlap: {self.overlap} layers exceed the core size")
        if not self.eigtol > 0:
            raise ConfigError(f"eigtol: must be positive, got {self.eigtol}")
        if self.problem == "marmousi":
            if self.freq_hz is None or not self.freq_hz > 0:
                raise ConfigError("freq_hz: a positive frequency is required for marmousi")
        elif not self.k > 0:
            raise ConfigError(f"k: must be positive, got {self.k}")

    @property
    def wavenumber(self) -> float:
        return 2 * math.pi * self.freq_hz if self.problem == "marmousi" else self.k


def read_config_file(path) -> dict:
    """Flat ``key=value`` text; ``#`` starts a comment."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    out = {}
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{p}:{lineno}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


PRESETS = {
    "plane-wave-desk": dict(problem="plane-wave", nx=128, ny=128, k=25.0, mx=4, my=4,
                            overlap=2, ell=8, nloc=20),
    "scattering-desk": dict(problem="scattering", nx=256, ny=256, k=32.0, mx=8, my=8,
                            overlap=2, ell=8, nloc=20),
    "scattering": dict(problem="scattering", nx=1400, ny=1400, k=130.0, mx=20, my=20,
                       overlap=2, ell=10, nloc=30, heavy=True),
    "marmousi-desk": dict(problem="marmousi", nx=300, ny=100, x0=MARMOUSI_RECT[0],
                          y0=MARMOUSI_RECT[1], x1=MARMOUSI_RECT[2], y1=MARMOUSI_RECT[3],
                          freq_hz=5.0, mx=12, my=4, overlap=2, ell=5, nloc=20),
    "marmousi": dict(problem="marmousi", nx=1200, ny=400, x0=MARMOUSI_RECT[0],
                     y0=MARMOUSI_RECT[1], x1=MARMOUSI_RECT[2], y1=MARMOUSI_RECT[3],
                     freq_hz=20.0, mx=30, my=10, overlap=2, ell=8, nloc=30, heavy=True),
}


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown '{name}', expected one of {sorted(PRESETS)}")
    values = dict(PRESETS[name])
    heavy = values.pop("heavy", False)
    cfg = RunConfig.from_mapping(values)
    cfg.heavy = heavy
    return cfg


# -- problem construction ------------------------------------------------------------


def build_problem(cfg: RunConfig, outdir: Optional[Path] = None):
    """``(ProblemSpec, exact)``; ``exact`` is a ``(u, grad)`` pair or ``None``."""
    cfg.validate()
    if cfg.problem == "plane-wave":
        if cfg.rect != (0.0, 0.0, 1.0, 1.0) or cfg.nx != cfg.ny:
            raise ConfigError("problem: plane-wave is defined on the unit square with nx == ny")
        spec, pw = plane_wave_problem(cfg.nx, cfg.k)
        return spec, (pw.u, pw.grad)
    if cfg.problem == "scattering":
        if cfg.rect != (0.0, 0.0, 1.0, 1.0) or cfg.nx != cfg.ny:
            raise ConfigError("problem: scattering is defined on the unit square with nx == ny")
        return scattering_problem(cfg.nx, cfg.k), None
    grid = build_grid(cfg.nx, cfg.ny, cfg.rect)
    if cfg.velocity_file:
        slowness = read_velocity_grid(cfg.velocity_file, grid)
    else:
        vel = layered_velocity(cfg.nx, cfg.ny, cfg.rect, seed=cfg.seed)
        if outdir is not None:
            write_velocity_file(outdir / "velocity.txt", vel)
        slowness = CellField(grid, (1.0 / vel).ravel())
    return marmousi_problem(grid, slowness, cfg.freq_hz), None


# -- artifacts ---------------------------------------------------------------------


def _versions() -> dict:
    return {"msgfem": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(outdir: Path, cfg: RunConfig, extra: dict) -> None:
    manifest = {
        "config": cfg.to_dict(),
        "heavy": cfg.heavy,
        "seeds": {"global": cfg.seed, "per_subdomain": "seed + subdomain index"},
        "tolerances": {"eigtol": cfg.eigtol, "fine_residual": 1e-10, "coarse_rcond_floor": 1e-12},
        "versions": _versions(),
        "command": sys.argv,
    }
    manifest.update(extra)
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_jsonable))


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def write_errors_csv(path, rows, extra_cols=()) -> None:
    """Rows are dicts with ``axis_value, err_fine, err_exact`` and optional extras."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["axis_value", "err_fine", "err_exact", *extra_cols])
        for r in rows:
            w.writerow([r["axis_value"], _fmt(r.get("err_fine")), _fmt(r.get("err_exact")),
                        *[_fmt(r.get(c)) if c != "error" else r.get(c, "") for c in extra_cols]])


def _bound_summary(diag, spec, C: float) -> list:
    out = []
    for s in diag.subdomains:
        if not s.is_interior:
            continue
        db = DecayBound(spec.k, s.delta_star, s.H_star, spec.a.min, spec.a.max, spec.v.max, C)
        out.append({"subdomain": s.index, "sigma": db.sigma, "Theta": db.theta, "b": db.b,
                    "n0": db.n0, "prefactor_continuous": db.prefactor(False),
                    "prefactor_discrete": db.prefactor(True), "H_over_Hstar": s.H / s.H_star})
    return out


# -- runners ---------------------------------------------------------------------------


def _solve_point(cfg: RunConfig, spec, exact, forms, u_fine, workers: int = 1, bases=None):
    sol, diag = msgfem_pipeline(spec, cfg.mx, cfg.my, cfg.overlap, cfg.ell, cfg.nloc,
                                tol=cfg.eigtol, seed=cfg.seed, workers=workers, forms=forms,
                                bases=bases)
    rep = relative_errors(sol.u, u_fine, None, forms.K, forms.M, spec.k)
    err_exact = None
    if exact is not None:
        num, den = exact_energy_error(sol.u, spec.grid, spec.a.values, spec.v.values, spec.k,
                                      *exact)
        err_exact = num / den
    gres = galerkin_residual(diag.coarse, forms, u_fine, sol.u)
    return sol, diag, rep.err_fine, err_exact, gres


def run_single(cfg: RunConfig, workers: int = 1, bound_C: float = 1.0) -> dict:
    """One MS-GFEM solve with fine reference; writes all artifacts to ``cfg.outdir``."""
    cfg.validate()
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    spec, exact = build_problem(cfg, outdir)
    forms = assemble_forms(spec)
    t_fine = time.perf_counter()
    fine = solve_fine(forms)
    t_fine = time.perf_counter() - t_fine
    sol, diag, err_fine, err_exact, gres = _solve_point(cfg, spec, exact, forms, fine.u, workers)
    fine_exact = None
    if exact is not None:
        num, den = exact_energy_error(fine.u, spec.grid, spec.a.values, spec.v.values, spec.k,
                                      *exact)
        fine_exact = num / den
    write_solution_csv(outdir / "solution.csv", spec.grid, sol.u)
    write_errors_csv(outdir / "errors.csv",
                     [{"axis_value": cfg.nloc, "err_fine": err_fine, "err_exact": err_exact}])
    write_eigen_csv(outdir / "eigen.csv", diag.bases)
    write_bound_csv(outdir / "bounds.csv", diag.bases, diag.subdomains, spec, C=bound_C)
    result = {"err_fine": err_fine, "err_exact": err_exact, "fine_err_exact": fine_exact,
              "galerkin_residual": gres, "coarse_dim": sol.meta["dim"],
              "coarse_dropped": sol.meta["dropped"], "coarse_rcond": sol.meta["rcond"]}
    write_manifest(outdir, cfg, {
        "kind": "run", "result": result, "bound_C": bound_C,
        "decay_bound": _bound_summary(diag, spec, bound_C),
        "timings": {"fine": t_fine, **diag.timings, "total": time.perf_counter() - t0},
    })
    return result


def k_scaled_config(cfg: RunConfig, k: float) -> RunConfig:
    """Config at wavenumber ``k`` keeping ``k^3 h^2``, the core size in cells
    (hence ``H/h``) and ``ell`` (hence ``H/H*``) fixed."""
    if cfg.problem == "marmousi":
        raise ConfigError("problem: k-scaling is defined for unit-square problems only")
    if cfg.nx != cfg.ny or cfg.mx != cfg.my:
        raise ConfigError("nx/mx: k-scaling needs a square grid and decomposition")
    core = cfg.nx // cfg.mx
    length = cfg.x1 - cfg.x0
    h0 = length / cfg.nx
    h = h0 * (cfg.k / k) ** 1.5
    m = max(1, round(length / (h * core)))
    new = dataclasses.replace(cfg, k=float(k), nx=m * core, ny=m * core, mx=m, my=m)
    new.validate()
    return new


def run_sweep(cfg: RunConfig, axis: str, values, workers: int = 1, parallel: int = 1) -> list:
    """One row per value; failures are recorded in an ``error`` column."""
    axis = "n_loc" if axis == "nloc" else axis
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis: expected one of {SWEEP_AXES}, got '{axis}'")
    values = list(values)
    if not values:
        raise ConfigError("values: at least one value is required")
    cfg.validate()
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    shared = {}

    def point_config(v):
        if axis == "n_loc":
            return dataclasses.replace(cfg, nloc=int(v))
        if axis == "ell":
            return dataclasses.replace(cfg, ell=int(v))
        if axis == "m":
            return dataclasses.replace(cfg, mx=int(v), my=int(v))
        return k_scaled_config(cfg, float(v))

    def reference(pc):
        key = (pc.k, pc.nx, pc.ny)
        if key not in shared:
            spec, exact = build_problem(pc, outdir)
            forms = assemble_forms(spec)
            shared[key] = (spec, exact, forms, solve_fine(forms).u)
        return shared[key]

    cached_bases = {}

    def point(v):
        row = {"axis_value": v}
        try:
            pc = point_config(v)
            pc.validate()
            spec, exact, forms, u_fine = reference(pc)
            bases = None
            if axis == "n_loc":
                # one eigensolve at the largest n_loc, truncated per point
                if "b" not in cached_bases:
                    top = dataclasses.replace(pc, nloc=int(max(values)))
                    _, diag, *_ = _solve_point(top, spec, exact, forms, u_fine, workers)
                    cached_bases["b"] = diag.bases
                bases = cached_bases["b"]
            sol, diag, ef, ee, gres = _solve_point(pc, spec, exact, forms, u_fine, workers, bases)
            row.update(err_fine=ef, err_exact=ee, galerkin_residual=gres, h=spec.grid.h,
                       nx=pc.nx, m=pc.mx)
            ratio = diag.subdomains.interior_ratio()
            row["H_over_Hstar"] = ratio if ratio is not None else float("nan")
        except (ConfigError, DecompositionError, GridError, CoefficientError,
                LocalProblemError, np.linalg.LinAlgError, ArithmeticError, RuntimeError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        return row

    if parallel > 1 and axis != "n_loc":
        # fine references are computed up front so threads only read the cache
        for v in values:
            try:
                reference(point_config(v))
            except Exception:  # recorded per point below
                pass
        with ThreadPoolExecutor(max_workers=parallel) as ex:
            rows = list(ex.map(point, values))
    else:
        rows = [point(v) for v in values]

    extra = ["H_over_Hstar"] if axis == "ell" else []
    if axis == "k-scaling":
        extra = ["h", "nx", "m"]
    write_errors_csv(outdir / "errors.csv", rows, extra + ["error"])
    write_manifest(outdir, cfg, {"kind": "sweep", "axis": axis, "values": values, "rows": rows,
                                 "timings": {"total": time.perf_counter() - t0}})
    return rows


def run_marmousi(cfg: RunConfig, workers: int = 1, bound_C: float = 1.0) -> dict:
    """Marmousi-type run: velocity ingestion (or the synthetic model), pipeline, artifacts."""
    if cfg.problem != "marmousi":
        raise ConfigError(f"problem: run_marmousi needs problem=marmousi, got '{cfg.problem}'")
    if cfg.velocity_file and not Path(cfg.velocity_file).is_file():
        raise ConfigError(f"velocity_file: not found: {cfg.velocity_file}")
    return run_single(cfg, workers=workers, bound_C=bound_C)


# -- argument parsing ------------------------------------------------------------------


def _parse_values(text: str) -> list:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            continue
        v = float(tok)
        out.append(int(v) if v.is_integer() else v)
    return out


def _config_from_args(args) -> RunConfig:
    cfg = preset(args.preset) if args.preset else RunConfig()
    if args.config:
        cfg = RunConfig.from_mapping(read_config_file(args.config), cfg)
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set: expected key=value, got '{item}'")
        key, val = item.split("=", 1)
        overrides[key.strip()] = val.strip()
    if args.outdir:
        overrides["outdir"] = args.outdir
    cfg = RunConfig.from_mapping(overrides, cfg)
    if cfg.heavy and not args.allow_heavy:
        raise ConfigError(f"preset: '{args.preset}' is heavy; pass --allow-heavy to run it")
    cfg.validate()
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msgfem", description="MS-GFEM Helmholtz experiments")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp_):
        sp_.add_argument("--preset", choices=sorted(PRESETS))
        sp_.add_argument("--config", help="flat key=value config file")
        sp_.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a key")
        sp_.add_argument("--outdir")
        sp_.add_argument("--workers", type=int, default=1, help="threads for local solves")
        sp_.add_argument("--allow-heavy", action="store_true")

    r = sub.add_parser("run", help="single MS-GFEM solve")
    common(r)
    r.add_argument("--bound-C", type=float, default=1.0, help="constant in the decay bound")

    s = sub.add_parser("sweep", help="error sweep along one axis")
    common(s)
    s.add_argument("--axis", required=True, choices=list(SWEEP_AXES) + ["nloc"])
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--parallel", type=int, default=1, help="threads over sweep points")

    m = sub.add_parser("marmousi", help="Marmousi-type run")
    common(m)
    m.add_argument("--bound-C", type=float, default=1.0)

    v = sub.add_parser("make-velocity", help="write a synthetic layered velocity file")
    v.add_argument("path")
    v.add_argument("--nvx", type=int, default=300)
    v.add_argument("--nvy", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)

    sub.add_parser("presets", help="list presets")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            for name, vals in PRESETS.items():
                tag = " [heavy]" if vals.get("heavy") else ""
                print(f"{name}{tag}: " + " ".join(f"{k}={v}" for k, v in vals.items()
                                                  if k != "heavy"))
            return 0
        if args.command == "make-velocity":
            write_velocity_file(args.path, layered_velocity(args.nvx, args.nvy, MARMOUSI_RECT,
                                                            seed=args.seed))
            return 0
        cfg = _config_from_args(args)
        if args.command == "run":
            res = run_single(cfg, workers=args.workers, bound_C=args.bound_C)
            print(f"err_fine={res['err_fine']:.6e} err_exact="
                  f"{'n/a' if res['err_exact'] is None else format(res['err_exact'], '.6e')} "
                  f"galerkin_residual={res['galerkin_residual']:.2e} -> {cfg.outdir}")
        elif args.command == "marmousi":
            if cfg.problem != "marmousi":
                cfg = RunConfig.from_mapping({"problem": "marmousi"}, cfg)
            res = run_marmousi(cfg, workers=args.workers, bound_C=args.bound_C)
            print(f"err_fine={res['err_fine']:.6e} -> {cfg.outdir}")
        else:
            rows = run_sweep(cfg, args.axis, _parse_values(args.values), workers=args.workers,
                             parallel=args.parallel)
            for r in rows:
                msg = r.get("error") or f"err_fine={r['err_fine']:.6e}"
                print(f"{args.axis}={r['axis_value']}: {msg}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LocalProblemError as exc:
        print(f"local solve failed: {exc}", file=sys.stderr)
        return 3
    except (DecompositionError, GridError, CoefficientError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (np.linalg.LinAlgError, ArithmeticError, RuntimeError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
