"""
Quadrature on spheres and spherical caps, center sets, and sampled grid fields.

Full-sphere rules are Gauss-Legendre in ``z`` times equispaced azimuths and
integrate spherical polynomials of degree ``<= 2*band - 1`` exactly. Cap rules
use Gauss-Legendre in the cosine of the polar angle about the cap axis, over
``[cos(half_angle), 1]``, again with ``2*band`` azimuths.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .harmonics import CapRegion

__all__ = [
    "gauss_legendre",
    "SphereRule",
    "CapRule",
    "full_sphere_rule",
    "cap_rule",
    "rule_from_spec",
    "integrate",
    "integrate_dot",
    "uniform_centers",
    "GridScalarField",
    "GridVectorField",
    "read_grid_csv",
]


def _legendre_pair(n: int, x):
    p0, p1 = np.ones_like(x), x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    return p0, p1


def gauss_legendre(n: int, a: float = -1.0, b: float = 1.0, extended: bool = False):
    """Gauss-Legendre nodes and weights on ``[a, b]``.

    Nodes are polished by Newton steps and weights evaluated in extended
    precision; numpy's eigenvalue-based weights carry relative errors up to
    ~1e-11 at a few hundred nodes, which shows up in strongly damped integrals.
    ``extended=True`` returns the long double values without rounding.
    """
    if n < 1:
        raise ValueError("need at least one node")
    x = np.polynomial.legendre.leggauss(n)[0].astype(np.longdouble)
    if n > 1:
        for _ in range(3):
            p0, p1 = _legendre_pair(n, x)
            x = x - p1 * (x * x - 1) / (n * (x * p1 - p0))
        p0, p1 = _legendre_pair(n, x)
        dp = n * (x * p1 - p0) / (x * x - 1)
        w = 2 / ((1 - x * x) * dp * dp)
    else:
        w = np.full(1, 2, dtype=np.longdouble)
    half = (np.longdouble(b) - np.longdouble(a)) / 2
    mid = (np.longdouble(b) + np.longdouble(a)) / 2
    x, w = half * x + mid, half * w
    if extended:
        return x, w
    return x.astype(float), w.astype(float)


def _frame(axis) -> np.ndarray:
    """Orthonormal columns ``(e1, e2, axis)`` with a fixed, reproducible choice."""
    a = np.asarray(axis, dtype=float)
    helper = np.array([1.0, 0.0, 0.0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = helper - (helper @ a) * a
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(a, e1)
    return np.stack([e1, e2, a], axis=1)


@dataclass(frozen=True)
class SphereRule:
    """Nodes and positive weights on the sphere of radius ``radius``.

    Rules built here also keep long double copies of nodes and weights
    (``nodes_ext``, ``weights_ext``) for extended-precision evaluations.
    """

    radius: float
    nodes: np.ndarray
    weights: np.ndarray
    spec: dict = field(default_factory=dict, compare=False)
    nodes_ext: np.ndarray | None = field(default=None, compare=False, repr=False)
    weights_ext: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        weights = np.ascontiguousarray(self.weights, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] != 3 or weights.shape != (nodes.shape[0],):
            raise ValueError("rule needs (N, 3) nodes and N weights")
        nodes.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def dirs(self) -> np.ndarray:
        return self.nodes / self.radius

    @property
    def radius_ext(self):
        return np.longdouble(self.radius)

    @property
    def dirs_ext(self) -> np.ndarray:
        if self.nodes_ext is None:
            raise ValueError("rule carries no extended-precision nodes")
        return self.nodes_ext / self.radius_ext

    @property
    def band(self) -> int | None:
        return self.spec.get("band")

    @property
    def exact_degree(self) -> int | None:
        b = self.band
        return None if b is None else 2 * b - 1

    def to_csv(self, path) -> None:
        """Dump ``x, y, z, w`` rows for inspection."""
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps({"radius": self.radius, "rule": self.spec}) + "\n")
            w = csv.writer(fh)
            w.writerow(["x", "y", "z", "w"])
            for p, wt in zip(self.nodes, self.weights):
                w.writerow([repr(float(v)) for v in (*p, wt)])


@dataclass(frozen=True)
class CapRule(SphereRule):
    cap: CapRegion | None = None


def _gl_azimuth(band: int, lo: float):
    """Unit-sphere nodes about the z-axis and weights, in long double."""
    t, w = gauss_legendre(band, lo, 1.0, extended=True)
    nphi = 2 * band
    two_pi = 8 * np.arctan(np.longdouble(1))
    phi = two_pi * np.arange(nphi) / nphi
    T, P = np.meshgrid(t, phi, indexing="ij")
    W = np.repeat(w[:, None] * (two_pi / nphi), nphi, axis=1)
    s = np.sqrt(np.clip((1 - T) * (1 + T), 0, None))
    local = np.stack([s * np.cos(P), s * np.sin(P), T], axis=-1).reshape(-1, 3)
    return local, W.ravel()


def _make(cls, radius, local, w, spec, **extra):
    r = np.longdouble(radius)
    nodes_ext, weights_ext = r * local, r * r * w
    return cls(float(radius), nodes_ext.astype(float), weights_ext.astype(float), spec,
               nodes_ext, weights_ext, **extra)


def full_sphere_rule(radius: float, band: int) -> SphereRule:
    """Gauss-Legendre x equiangular rule, exact to degree ``2*band - 1``."""
    if band < 1:
        raise ValueError("band must be >= 1")
    if radius <= 0:
        raise ValueError("radius must be positive")
    local, w = _gl_azimuth(int(band), -1.0)
    return _make(SphereRule, radius, local, w, {"kind": "sphere", "band": int(band)})


def cap_rule(radius: float, cap: CapRegion, band: int) -> CapRule:
    """Rule over the cap, exact for degree ``<= 2*band - 1`` in the cap variables."""
    if band < 1:
        raise ValueError("band must be >= 1")
    if radius <= 0:
        raise ValueError("radius must be positive")
    local, w = _gl_azimuth(int(band), cap.cos_half_angle)
    local = local @ _frame(cap.axis).T.astype(np.longdouble)
    spec = {"kind": "cap", "band": int(band), "axis": list(cap.axis),
            "half_angle": cap.half_angle}
    return _make(CapRule, radius, local, w, spec, cap=cap)


def rule_from_spec(radius: float, spec: dict) -> SphereRule:
    kind = spec.get("kind")
    if kind == "sphere":
        return full_sphere_rule(radius, spec["band"])
    if kind == "cap":
        return cap_rule(radius, CapRegion(tuple(spec["axis"]), spec["half_angle"]), spec["band"])
    raise ValueError(f"unknown rule kind {kind!r}")


def integrate(values, rule: SphereRule) -> float:
    """Weighted sum of scalar samples; extra trailing axes are integrated separately."""
    v = np.asarray(values, dtype=float)
    if v.shape[0] != rule.size:
        raise ValueError(f"{v.shape[0]} samples for a rule with {rule.size} nodes")
    return np.tensordot(rule.weights, v, axes=(0, 0))


def integrate_dot(u, v, rule: SphereRule) -> float:
    """Integral of the pointwise dot product of two vector sample arrays."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.shape[0] != rule.size:
        raise ValueError("vector samples do not match the rule")
    return float(rule.weights @ np.einsum("ij,ij->i", u, v))


def uniform_centers(M: int) -> np.ndarray:
    """Spherical Fibonacci lattice of ``M`` unit vectors."""
    if M < 1:
        raise ValueError("M must be >= 1")
    i = np.arange(M)
    z = 1.0 - (2.0 * i + 1.0) / M
    phi = i * np.pi * (3.0 - np.sqrt(5.0))
    s = np.sqrt(1.0 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def _latlon(dirs):
    theta = np.arcsin(np.clip(dirs[:, 2], -1.0, 1.0))
    phi = np.arctan2(dirs[:, 1], dirs[:, 0])
    return theta, phi


@dataclass(frozen=True)
class GridScalarField:
    """Scalar samples on the nodes of a rule."""

    rule: SphereRule
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.rule.size,):
            raise ValueError("sample count does not match the rule")
        object.__setattr__(self, "values", v)

    @property
    def radius(self) -> float:
        return self.rule.radius

    def integral(self) -> float:
        return float(integrate(self.values, self.rule))

    def l2_norm(self) -> float:
        return float(np.sqrt(integrate(self.values**2, self.rule)))

    def __add__(self, other):
        _same_rule(self, other)
        return type(self)(self.rule, self.values + other.values)

    def __sub__(self, other):
        _same_rule(self, other)
        return type(self)(self.rule, self.values - other.values)

    def scaled(self, c: float):
        return type(self)(self.rule, c * self.values)

    def to_csv(self, path) -> None:
        _write_grid(path, self.rule, self.values[:, None], ["value"])


@dataclass(frozen=True)
class GridVectorField:
    """Cartesian vector samples on the nodes of a rule."""

    rule: SphereRule
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.rule.size, 3):
            raise ValueError("vector samples must have shape (N, 3)")
        object.__setattr__(self, "values", v)

    @property
    def radius(self) -> float:
        return self.rule.radius

    def l2_norm(self) -> float:
        return float(np.sqrt(integrate_dot(self.values, self.values, self.rule)))

    def normal_part(self) -> GridScalarField:
        return GridScalarField(self.rule, np.einsum("ij,ij->i", self.values, self.rule.dirs))

    def tangential_part(self) -> "GridVectorField":
        d = self.rule.dirs
        return GridVectorField(self.rule, self.values - self.normal_part().values[:, None] * d)

    def __add__(self, other):
        _same_rule(self, other)
        return type(self)(self.rule, self.values + other.values)

    def __sub__(self, other):
        _same_rule(self, other)
        return type(self)(self.rule, self.values - other.values)

    def scaled(self, c: float):
        return type(self)(self.rule, c * self.values)

    def to_csv(self, path) -> None:
        _write_grid(path, self.rule, self.values, ["vx", "vy", "vz"])


def _same_rule(a, b):
    if a.rule.size != b.rule.size or not np.array_equal(a.rule.nodes, b.rule.nodes):
        raise ValueError("fields live on different grids")


def _write_grid(path, rule: SphereRule, values: np.ndarray, names) -> None:
    theta, phi = _latlon(rule.dirs)
    with open(path, "w", newline="") as fh:
        meta = {"radius": rule.radius, "rule": rule.spec, "columns": ["theta", "phi", *names]}
        fh.write("# " + json.dumps(meta, sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(["theta", "phi", *names])
        for t, p, row in zip(theta, phi, values):
            w.writerow([repr(float(t)), repr(float(p)), *(repr(float(v)) for v in row)])


def read_grid_csv(path):
    """Load a grid CSV written by ``to_csv``; the rule is rebuilt from the header."""
    path = Path(path)
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing metadata header")
        meta = json.loads(first[1:])
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader if row])
    rule = rule_from_spec(meta["radius"], meta["rule"])
    if data.shape[0] != rule.size:
        raise ValueError(f"{path}: {data.shape[0]} rows for a rule with {rule.size} nodes")
    if len(header) == 3:
        return GridScalarField(rule, data[:, 2])
    return GridVectorField(rule, data[:, 2:5])
