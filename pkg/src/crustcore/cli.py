"""Command-line front end: ``crustcore <command> [options]``.

Exit codes: 0 success, 1 validation error, 2 numerical failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .harmonics import CapRegion
from .inverse import (CoeffProblemConfig, CoeffSystem, FieldProblemConfig, SolverError,
                      estimated_spectrum, power_spectrum, relative_error, solve_field_problem)
from .kernels import KernelSystem
from .quadrature import read_grid_csv, uniform_centers
from .synth import DatasetConfig, generate_dataset, load_dataset, paper_model
from .operators import PotentialField

log = logging.getLogger("crustcore")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
FULL_SCALE_CENTERS = {"spectrum": 8499, "field": 10235}


class ConfigError(ValueError):
    pass


def _float(v, name):
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: expected a number, got {v!r}") from None


def _int(v, name):
    f = _float(v, name)
    if f != int(f):
        raise ConfigError(f"{name}: expected an integer, got {v!r}")
    return int(f)


@dataclass
class SpectrumSettings:
    gamma: float = 0.95
    centers: int = 2000
    lambda_grid: tuple = tuple(np.logspace(2, 14, 12))
    p_min: int = 0
    p_max: int = 15
    cap_band: int = 160
    gamma_integration: str = "complement"
    discrepancy_eps: float | None = None


@dataclass
class FieldSettings:
    gamma: float = 0.9
    centers: int = 2000
    alpha: float = 1e-13
    beta: float = 1.0
    cap_band: int = 90
    model_band: int = 120


@dataclass
class RunConfig:
    R1: float = 0.5
    R0: float = 1.0
    R2: float = 1.06
    region_axis: tuple = (0.0, 0.0, -1.0)
    region_half_angle: float = float(np.pi / 2)
    output_dir: str = "run"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    spectrum: SpectrumSettings = field(default_factory=SpectrumSettings)
    field: FieldSettings = field(default_factory=FieldSettings)
    paper_scale: bool = False

    @property
    def region(self) -> CapRegion:
        return CapRegion(self.region_axis, self.region_half_angle)

    def snapshot(self) -> dict:
        d = asdict(self)
        d["spectrum"]["lambda_grid"] = [float(v) for v in self.spectrum.lambda_grid]
        d["region_axis"] = list(self.region_axis)
        return d


def _lambda_grid(spec) -> tuple:
    if isinstance(spec, dict):
        lo = _float(spec.get("lo", 1e2), "lambda_grid.lo")
        hi = _float(spec.get("hi", 1e14), "lambda_grid.hi")
        num = _int(spec.get("num", 12), "lambda_grid.num")
        if lo <= 0 or hi <= lo or num < 1:
            raise ConfigError("lambda_grid needs 0 < lo < hi and num >= 1")
        return tuple(np.logspace(np.log10(lo), np.log10(hi), num))
    grid = tuple(_float(v, "lambda_grid") for v in spec)
    if not grid or any(v <= 0 for v in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("lambda_grid must be positive and strictly increasing")
    return grid


def parse_config(raw: dict) -> RunConfig:
    """Validate a parsed YAML mapping and fill defaults."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    known = {"radii", "region", "output_dir", "dataset", "spectrum", "field", "paper_scale"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    cfg = RunConfig()
    radii = raw.get("radii", {})
    cfg.R1 = _float(radii.get("R1", cfg.R1), "radii.R1")
    cfg.R0 = _float(radii.get("R0", cfg.R0), "radii.R0")
    cfg.R2 = _float(radii.get("R2", cfg.R2), "radii.R2")
    if not 0 < cfg.R1 < cfg.R0 < cfg.R2:
        raise ConfigError(f"radii must satisfy 0 < R1 < R0 < R2, got {cfg.R1}, {cfg.R0}, {cfg.R2}")
    region = raw.get("region", {})
    if region:
        axis = region.get("axis", cfg.region_axis)
        if len(axis) != 3:
            raise ConfigError("region.axis must have three components")
        axis = np.array([_float(a, "region.axis") for a in axis])
        if not np.linalg.norm(axis) > 0:
            raise ConfigError("region.axis must be nonzero")
        cfg.region_axis = tuple(axis / np.linalg.norm(axis))
        ha = _float(region.get("half_angle_deg", 90.0), "region.half_angle_deg")
        if not 0 < ha <= 180:
            raise ConfigError("region.half_angle_deg must lie in (0, 180]")
        cfg.region_half_angle = float(np.deg2rad(ha))
    cfg.output_dir = str(raw.get("output_dir", cfg.output_dir))
    cfg.paper_scale = bool(raw.get("paper_scale", False))

    ds = raw.get("dataset", {}) or {}
    variant = _int(ds.get("variant", 1), "dataset.variant")
    if variant not in (1, 2):
        raise ConfigError("dataset.variant must be 1 or 2")
    try:
        cfg.dataset = DatasetConfig(cfg.R1, cfg.R0, cfg.R2,
                                    _int(ds.get("data_band", 120), "dataset.data_band"),
                                    _int(ds.get("crust_band", 200), "dataset.crust_band"),
                                    _int(ds.get("core_band", 24), "dataset.core_band"), variant)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    sp = raw.get("spectrum", {}) or {}
    s = SpectrumSettings()
    s.gamma = _float(sp.get("gamma", s.gamma), "spectrum.gamma")
    s.centers = _int(sp.get("centers", s.centers), "spectrum.centers")
    if "lambda_grid" in sp:
        s.lambda_grid = _lambda_grid(sp["lambda_grid"])
    s.p_min = _int(sp.get("p_min", s.p_min), "spectrum.p_min")
    s.p_max = _int(sp.get("p_max", s.p_max), "spectrum.p_max")
    s.cap_band = _int(sp.get("cap_band", s.cap_band), "spectrum.cap_band")
    s.gamma_integration = str(sp.get("gamma_integration", s.gamma_integration))
    if sp.get("discrepancy_eps") is not None:
        s.discrepancy_eps = _float(sp["discrepancy_eps"], "spectrum.discrepancy_eps")
    if not 0 < s.gamma < 1:
        raise ConfigError("spectrum.gamma must lie in (0, 1)")
    if s.centers < 1 or not 0 <= s.p_min <= s.p_max:
        raise ConfigError("spectrum needs centers >= 1 and 0 <= p_min <= p_max")
    if s.gamma_integration not in ("complement", "direct"):
        raise ConfigError("spectrum.gamma_integration must be 'complement' or 'direct'")
    cfg.spectrum = s

    fp = raw.get("field", {}) or {}
    f = FieldSettings()
    f.gamma = _float(fp.get("gamma", f.gamma), "field.gamma")
    f.centers = _int(fp.get("centers", f.centers), "field.centers")
    f.alpha = _float(fp.get("alpha", f.alpha), "field.alpha")
    f.beta = _float(fp.get("beta", f.beta), "field.beta")
    f.cap_band = _int(fp.get("cap_band", f.cap_band), "field.cap_band")
    f.model_band = _int(fp.get("model_band", f.model_band), "field.model_band")
    if not 0 < f.gamma < 1:
        raise ConfigError("field.gamma must lie in (0, 1)")
    if not f.alpha > 0:
        raise ConfigError("field.alpha must be strictly positive")
    if f.beta < 0:
        raise ConfigError("field.beta must be nonnegative")
    if f.centers < 1:
        raise ConfigError("field.centers must be positive")
    cfg.field = f
    if cfg.paper_scale:
        cfg.spectrum.centers = FULL_SCALE_CENTERS["spectrum"]
        cfg.field.centers = FULL_SCALE_CENTERS["field"]
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return parse_config(raw)


def _dataset_dir(cfg: RunConfig, override) -> Path:
    return Path(override) if override else Path(cfg.output_dir) / "dataset"


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- commands ------------------------------------------------------------------

def cmd_synth(cfg: RunConfig, args) -> int:
    out = _dataset_dir(cfg, args.dataset)
    t = time.time()
    generate_dataset(paper_model(cfg.dataset.variant), cfg.dataset, out)
    log.info("dataset written to %s in %.1f s", out, time.time() - t)
    return EXIT_OK


def cmd_separate_spectrum(cfg: RunConfig, args) -> int:
    ds = load_dataset(_dataset_dir(cfg, args.dataset))
    s = cfg.spectrum
    out = Path(cfg.output_dir) / "spectrum"
    out.mkdir(parents=True, exist_ok=True)
    sys_ = KernelSystem(s.gamma, uniform_centers(s.centers), cfg.R2)
    pcfg = CoeffProblemConfig(cfg.R1, cfg.R0, cfg.R2, cfg.region, sys_, s.lambda_grid,
                              cap_band=s.cap_band, gamma_integration=s.gamma_integration)
    t = time.time()
    system = CoeffSystem(pcfg)
    log.info("assembled %d x %d system in %.1f s", s.centers, s.centers, time.time() - t)
    truth = power_spectrum(ds.phi0, s.p_max) if ds.phi0 is not None else None
    est = estimated_spectrum(pcfg, ds.phi, s.p_max, truth, p_min=s.p_min, system=system)
    meta = {"gamma": s.gamma, "centers": s.centers, "radii": [cfg.R1, cfg.R0, cfg.R2]}

    total = power_spectrum(ds.phi, s.p_max)
    with open(out / "spectra.csv", "w", newline="") as fh:
        fh.write("# " + json.dumps(meta) + "\n")
        w = csv.writer(fh)
        head = ["degree", "R_total"] + (["R_crust_true"] if truth is not None else [])
        head += [f"R_est_lambda_{lam:.3e}" for lam in est.lambdas]
        head += ["R_est_best"] if truth is not None else []
        w.writerow(head)
        best = est.best().values if truth is not None else None
        for j, p in enumerate(est.degrees):
            row = [int(p), repr(float(total.values[p]))]
            if truth is not None:
                row.append(repr(float(truth.values[p])))
            row += [repr(float(v)) for v in est.per_lambda[:, p]]
            if truth is not None:
                row.append(repr(float(best[j])))
            w.writerow(row)
    sol = est.solution
    with open(out / "residuals.csv", "w", newline="") as fh:
        fh.write("# " + json.dumps(meta) + "\n")
        w = csv.writer(fh)
        w.writerow(["p", "q", "lambda", "residual", "target_norm", "norm_W12", "estimate", "jitter"])
        for j, tg in enumerate(sol.targets):
            for i, lam in enumerate(sol.lambdas):
                w.writerow([tg.n, tg.k, repr(float(lam)), repr(float(sol.residuals[i, j])),
                            repr(float(sol.target_norms[j])), repr(float(sol.norms[i, j])),
                            repr(float(sol.estimates[i, j])), repr(float(sol.jitter[i]))])
    if truth is not None:
        chosen = est.best_index[[tg.n for tg in sol.targets]]
        label = "best"
    elif s.discrepancy_eps is not None:
        _, chosen = est.discrepancy(s.discrepancy_eps)
        label = "discrepancy"
    else:
        chosen = np.full(len(sol.targets), len(sol.lambdas) - 1)
        label = "largest_lambda"
    if s.discrepancy_eps is not None:
        disc, _ = est.discrepancy(s.discrepancy_eps)
        disc.to_csv(out / "spectrum_discrepancy.csv", {**meta, "eps": s.discrepancy_eps})
    with open(out / "coefficients.csv", "w", newline="") as fh:
        fh.write("# " + json.dumps({**meta, "selection": label,
                                   "lambda": [float(sol.lambdas[c]) for c in chosen]}) + "\n")
        w = csv.writer(fh)
        w.writerow(["x", "y", "z"] + [f"f_{tg.n}_{tg.k}" for tg in sol.targets])
        A = sol.alphas[chosen, np.arange(len(sol.targets))]
        for m, c in enumerate(sys_.centers):
            w.writerow([repr(float(v)) for v in c] + [repr(float(a)) for a in A[:, m]])
    _write_json(out / "report.json", {"config": cfg.snapshot(), "has_truth": truth is not None,
                                      "seconds": round(time.time() - t, 1)})
    log.info("spectrum outputs in %s", out)
    return EXIT_OK


def cmd_separate_field(cfg: RunConfig, args) -> int:
    ds = load_dataset(_dataset_dir(cfg, args.dataset))
    f = cfg.field
    out = Path(cfg.output_dir) / "field"
    out.mkdir(parents=True, exist_ok=True)
    fcfg = FieldProblemConfig(cfg.R1, cfg.R0, cfg.R2, cfg.region, f.gamma, uniform_centers(f.centers),
                              f.alpha, f.beta, f.cap_band, f.model_band)
    t = time.time()
    sol = solve_field_problem(fcfg, ds.phi)
    sol.export_coefficients(out / "coefficients.csv")
    sol.phi0.samples.to_csv(out / "phi0_rec.csv")
    sol.phi1.samples.to_csv(out / "phi1_rec.csv")
    report = {"config": cfg.snapshot(), "seconds": round(time.time() - t, 1),
              "outside_norm": sol.outside_norm, "jitter": sol.jitter,
              "unconstrained": f.beta == 0}
    if ds.phi0 is not None:
        report["rel_error_phi0"] = relative_error(sol.phi0, ds.phi0)
        report["rel_error_phi1"] = relative_error(sol.phi1, ds.phi1)
    if f.beta == 0:
        log.warning("beta = 0: localization constraint disabled, separation is unconstrained")
    _write_json(out / "report.json", report)
    log.info("field outputs in %s", out)
    return EXIT_OK


def cmd_spectrum(args) -> int:
    grid = read_grid_csv(args.grid)
    res = power_spectrum(PotentialField(grid), args.p_max)
    res.to_csv(args.output, {"source": str(args.grid), "p_max": args.p_max})
    return EXIT_OK


def cmd_centers(args) -> int:
    c = uniform_centers(args.count)
    with open(args.output, "w", newline="") as fh:
        fh.write("# " + json.dumps({"count": args.count, "lattice": "fibonacci"}) + "\n")
        w = csv.writer(fh)
        w.writerow(["x", "y", "z"])
        for row in c:
            w.writerow([repr(float(v)) for v in row])
    return EXIT_OK


def cmd_verify(args) -> int:
    from .checks import run_checks

    results = run_checks(stop_on_failure=not args.keep_going)
    width = max(len(r.name) for r in results)
    print(f"{'check':<{width}}  {'value':>10}  {'tol':>8}  status")
    for r in results:
        print(f"{r.name:<{width}}  {r.value:>10.2e}  {r.tol:>8.0e}  {'PASS' if r.ok else 'FAIL'}")
    return EXIT_OK if all(r.ok for r in results) else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crustcore", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("synth", "generate a synthetic dataset"),
                           ("separate-spectrum", "estimate the crustal power spectrum"),
                           ("separate-field", "reconstruct crustal and core potentials")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config", help="YAML run configuration")
        sp.add_argument("--dataset", help="dataset directory (default: <output_dir>/dataset)")
    sp = sub.add_parser("spectrum", help="power spectrum of a grid CSV")
    sp.add_argument("grid")
    sp.add_argument("--p-max", type=int, default=15)
    sp.add_argument("-o", "--output", default="spectrum.csv")
    sp = sub.add_parser("verify", help="run the invariant suite")
    sp.add_argument("--keep-going", action="store_true", help="do not stop at the first failure")
    sp = sub.add_parser("centers", help="write a uniform center set")
    sp.add_argument("count", type=int)
    sp.add_argument("-o", "--output", default="centers.csv")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command in ("synth", "separate-spectrum", "separate-field"):
            cfg = load_config(args.config)
            fn = {"synth": cmd_synth, "separate-spectrum": cmd_separate_spectrum,
                  "separate-field": cmd_separate_field}[args.command]
            return fn(cfg, args)
        if args.command == "spectrum":
            return cmd_spectrum(args)
        if args.command == "centers":
            if args.count < 1:
                raise ConfigError("count must be positive")
            return cmd_centers(args)
        return cmd_verify(args)
    except (SolverError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, yaml.YAMLError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
