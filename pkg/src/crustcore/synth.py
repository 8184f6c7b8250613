"""Synthetic ground truth: cap-profile magnetizations and a low-degree core density."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .harmonics import CapRegion, HarmonicCoeffs, SphIndex, southern_hemisphere, sph_index
from .kernels import cap_profile_L
from .operators import CoreDensity, Magnetization, PotentialField, phi0_forward, phi1_forward
from .quadrature import (GridScalarField, GridVectorField, cap_rule, full_sphere_rule,
                         read_grid_csv)

REFERENCE_CORE = {(0, 1): 32.0, (1, 1): 32.0, (2, 5): 16.0, (3, 5): 16.0, (4, 5): 16.0, (5, 5): 8.0}


@dataclass(frozen=True)
class TrueModel:
    b1: float
    b2: float
    y1: tuple
    y2: tuple
    gamma1: float
    gamma2: float
    k_exp: int
    a_coeffs: dict

    def __post_init__(self):
        for y in (self.y1, self.y2):
            if abs(np.linalg.norm(y) - 1.0) > 1e-12:
                raise ValueError("cap centers must be unit vectors")
        for g in (self.gamma1, self.gamma2):
            if not -1.0 < g < 1.0:
                raise ValueError("cap parameters must lie in (-1, 1)")
        if self.k_exp < 0:
            raise ValueError("profile exponent must be nonnegative")
        a = {sph_index(*k): float(v) for k, v in self.a_coeffs.items()}
        object.__setattr__(self, "a_coeffs", a)
        object.__setattr__(self, "y1", tuple(float(v) for v in self.y1))
        object.__setattr__(self, "y2", tuple(float(v) for v in self.y2))

    @property
    def caps(self) -> tuple:
        return (CapRegion(self.y1, float(np.arccos(self.gamma1))),
                CapRegion(self.y2, float(np.arccos(self.gamma2))))

    @property
    def amplitudes(self) -> tuple:
        return (self.b1, self.b2)

    @property
    def gammas(self) -> tuple:
        return (self.gamma1, self.gamma2)

    def core_coeffs(self) -> HarmonicCoeffs:
        n_max = max((k.n for k in self.a_coeffs), default=0)
        return HarmonicCoeffs.from_dict(n_max, self.a_coeffs)

    def m_values(self, dirs) -> np.ndarray:
        """Radial magnetization at unit directions, (N, 3)."""
        d = np.asarray(dirs, dtype=float)
        s = np.zeros(d.shape[0])
        for b, y, g in zip(self.amplitudes, (self.y1, self.y2), self.gammas):
            s += b * cap_profile_L(g, self.k_exp, d @ np.asarray(y))
        return s[:, None] * d

    def h_values(self, dirs) -> np.ndarray:
        return self.core_coeffs().evaluate(dirs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["a_coeffs"] = [[k.n, k.k, v] for k, v in self.a_coeffs.items()]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrueModel":
        d = dict(d)
        d["a_coeffs"] = {(int(n), int(k)): float(v) for n, k, v in d["a_coeffs"]}
        return cls(**d)


def paper_model(variant: int) -> TrueModel:
    """The two synthetic setups: broad caps (1) or narrower caps (2)."""
    gammas = {1: (1 / 20, 1 / 2), 2: (3 / 5, 3 / 5)}
    if variant not in gammas:
        raise ValueError(f"unknown model variant {variant!r}")
    g1, g2 = gammas[variant]
    y2 = (0.0, 0.5, -np.sqrt(3.0) / 2.0)
    return TrueModel(15.0, 10.0, (0.0, 0.0, -1.0), y2, g1, g2, 3, dict(REFERENCE_CORE))


def sample_model(model: TrueModel, R0: float, R1: float, crust_band: int = 200, core_band: int = 24,
                 support: CapRegion | None = None):
    """Sample ``m`` on one cap rule per cap and ``h`` on a full-sphere rule."""
    if not 0 < R1 < R0:
        raise ValueError("need 0 < R1 < R0")
    pieces = []
    for b, cap, g, y in zip(model.amplitudes, model.caps, model.gammas, (model.y1, model.y2)):
        rule = cap_rule(R0, cap, crust_band)
        d = rule.dirs
        vals = b * cap_profile_L(g, model.k_exp, d @ np.asarray(y))[:, None] * d
        pieces.append(GridVectorField(rule, vals))
    m = Magnetization(tuple(pieces), support)
    rule1 = full_sphere_rule(R1, core_band)
    h = CoreDensity(GridScalarField(rule1, model.h_values(rule1.dirs)))
    return m, h


@dataclass(frozen=True)
class DatasetConfig:
    R1: float = 0.5
    R0: float = 1.0
    R2: float = 1.06
    data_band: int = 120
    crust_band: int = 200
    core_band: int = 24
    variant: int = 1

    def __post_init__(self):
        if not 0 < self.R1 < self.R0 < self.R2:
            raise ValueError("radii must satisfy 0 < R1 < R0 < R2")
        for name in ("data_band", "crust_band", "core_band"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


@dataclass
class Dataset:
    phi: PotentialField
    phi0: PotentialField | None
    phi1: PotentialField | None
    model: TrueModel | None = None
    config: dict = field(default_factory=dict)

    @property
    def has_truth(self) -> bool:
        return self.phi0 is not None and self.phi1 is not None


def synthesize(model: TrueModel, cfg: DatasetConfig) -> Dataset:
    """Evaluate ``Phi0``, ``Phi1`` and their sum on a full-sphere rule of ``S_R2``."""
    m, h = sample_model(model, cfg.R0, cfg.R1, cfg.crust_band, cfg.core_band, southern_hemisphere())
    rule = full_sphere_rule(cfg.R2, cfg.data_band)
    p0 = phi0_forward(m, rule.nodes)
    p1 = phi1_forward(h, rule.nodes)
    mk = lambda v: PotentialField(GridScalarField(rule, v))
    return Dataset(mk(p0 + p1), mk(p0), mk(p1), model, {"dataset": asdict(cfg), "model": model.to_dict()})


FILES = {"phi": "phi.csv", "phi0": "phi0.csv", "phi1": "phi1.csv"}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_dataset(ds: Dataset, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.yaml", "w") as fh:
        yaml.safe_dump(ds.config, fh, sort_keys=True)
    names = ["config.yaml"]
    for key, fname in FILES.items():
        f = getattr(ds, key)
        if f is not None:
            f.samples.to_csv(out / fname)
            names.append(fname)
    manifest = {n: _sha256(out / n) for n in names}
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def generate_dataset(model: TrueModel, cfg: DatasetConfig, out_dir) -> Dataset:
    """Synthesize and write a dataset directory (config, three grids, checksums)."""
    ds = synthesize(model, cfg)
    write_dataset(ds, out_dir)
    return ds


def verify_manifest(path) -> dict:
    """Recompute checksums; returns ``{file: ok}``."""
    p = Path(path)
    manifest = json.loads((p / "manifest.json").read_text())
    return {n: (p / n).exists() and _sha256(p / n) == h for n, h in manifest.items()}


def load_dataset(path) -> Dataset:
    p = Path(path)
    if not (p / FILES["phi"]).exists():
        raise FileNotFoundError(f"no {FILES['phi']} in {p}")
    cfg = {}
    if (p / "config.yaml").exists():
        cfg = yaml.safe_load((p / "config.yaml").read_text()) or {}
    fields = {}
    for key, fname in FILES.items():
        if (p / fname).exists():
            fields[key] = PotentialField(read_grid_csv(p / fname))
    model = TrueModel.from_dict(cfg["model"]) if "model" in cfg else None
    return Dataset(fields["phi"], fields.get("phi0"), fields.get("phi1"), model, cfg)
