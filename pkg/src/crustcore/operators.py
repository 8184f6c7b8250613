"""
Forward and adjoint potential operators on nested spheres, and balayage.

Sources are always represented by their samples on quadrature rules, so a
forward evaluation is the rule applied to the exact integral kernel:

* crustal potential ``Phi0[m](x) = 1/(4 pi) int_{S_R0} m(y).(x - y)/|x - y|^3 dw(y)``
* core potential ``Phi1[h](x) = 1/(4 pi R1) int_{S_R1} h(y)(|x|^2 - R1^2)/|x - y|^3 dw(y)``

``B = grad Phi`` is obtained by differentiating under the integral.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _direct
from .harmonics import CapRegion, HarmonicCoeffs
from .kernels import KernelSystem, abel_poisson
from .quadrature import (GridScalarField, GridVectorField, SphereRule, full_sphere_rule,
                         gauss_legendre)

FOUR_PI = 4.0 * np.pi


@dataclass(frozen=True)
class Magnetization:
    """Vector density on ``S_R0`` given as a sum of sampled pieces.

    Each piece lives on its own rule (all of the same radius), which lets
    locally supported contributions use rules adapted to their support.
    """

    pieces: tuple
    support: CapRegion | None = None

    def __post_init__(self):
        pieces = tuple(self.pieces)
        if not pieces:
            raise ValueError("magnetization needs at least one piece")
        radii = {p.radius for p in pieces}
        if len(radii) != 1:
            raise ValueError("all pieces must live on the same sphere")
        if self.support is not None:
            for p in pieces:
                outside = ~self.support.contains(p.rule.nodes)
                if np.any(np.abs(p.values[outside]) > 1e-12):
                    raise ValueError("magnetization does not vanish outside its support")
        object.__setattr__(self, "pieces", pieces)

    @classmethod
    def from_field(cls, field: GridVectorField, support: CapRegion | None = None):
        return cls((field,), support)

    @property
    def radius(self) -> float:
        return self.pieces[0].radius

    def sources(self):
        """Stacked nodes and weighted moments ``w_j m(y_j)``."""
        nodes = np.concatenate([p.rule.nodes for p in self.pieces])
        moments = np.concatenate([p.rule.weights[:, None] * p.values for p in self.pieces])
        return nodes, moments


@dataclass(frozen=True)
class CoreDensity:
    samples: GridScalarField

    def __post_init__(self):
        if not np.all(np.isfinite(self.samples.values)):
            raise ValueError("core density samples must be finite")

    @property
    def radius(self) -> float:
        return self.samples.radius


@dataclass(frozen=True)
class PotentialField:
    samples: GridScalarField
    coeffs: HarmonicCoeffs | None = None

    @property
    def rule(self) -> SphereRule:
        return self.samples.rule

    @property
    def values(self) -> np.ndarray:
        return self.samples.values


def _points(x) -> np.ndarray:
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(x, dtype=float)))
    if x.shape[1] != 3:
        raise ValueError("targets must be (N, 3)")
    return x


def _check_exterior(targets, R: float):
    r = np.linalg.norm(targets, axis=1)
    if np.any(r <= R * (1.0 + 1e-12)):
        raise ValueError(f"targets must lie strictly outside the sphere of radius {R}")


def _check_interior(targets, R: float):
    r = np.linalg.norm(targets, axis=1)
    if np.any(r >= R * (1.0 - 1e-12)):
        raise ValueError(f"targets must lie strictly inside the sphere of radius {R}")


# -- forward operators -------------------------------------------------------

def phi0_forward(m: Magnetization, targets) -> np.ndarray:
    """Crustal potential of a surface magnetization at exterior targets."""
    x = _points(targets)
    _check_exterior(x, m.radius)
    y, mw = m.sources()
    return _direct.dipole_potential(x, y, mw) / FOUR_PI


def b0_forward(m: Magnetization, targets) -> np.ndarray:
    x = _points(targets)
    _check_exterior(x, m.radius)
    y, mw = m.sources()
    return _direct.dipole_field(x, y, mw) / FOUR_PI


def phi1_forward(h: CoreDensity, targets) -> np.ndarray:
    """Poisson transform of ``h`` (exterior harmonic extension from ``S_R1``)."""
    x = _points(targets)
    R1 = h.radius
    _check_exterior(x, R1)
    rule = h.samples.rule
    s = _direct.inv_r3_sum(x, rule.nodes, rule.weights * h.samples.values)
    return (np.einsum("ij,ij->i", x, x) - R1 * R1) * s / (FOUR_PI * R1)


def b1_forward(h: CoreDensity, targets) -> np.ndarray:
    x = _points(targets)
    R1 = h.radius
    _check_exterior(x, R1)
    rule = h.samples.rule
    _, d5, s3 = _direct.diff_r3_sum(x, rule.nodes, rule.weights * h.samples.values)
    r2 = np.einsum("ij,ij->i", x, x)
    return (2.0 * x * s3[:, None] - 3.0 * (r2 - R1 * R1)[:, None] * d5) / (FOUR_PI * R1)


def phi0_forward_batch(rule: SphereRule, fields, targets) -> np.ndarray:
    """Crustal potentials of many vector fields sampled on ``rule``; fields (S, 3, F)."""
    x = _points(targets)
    _check_exterior(x, rule.radius)
    mw = rule.weights[:, None, None] * np.asarray(fields, dtype=float)
    return _direct.dipole_potential_batch(x, rule.nodes, mw) / FOUR_PI


def phi1_forward_batch(rule: SphereRule, fields, targets, extended: bool = False) -> np.ndarray:
    """Poisson transforms of many scalar fields on ``rule``; fields (S, F).

    With ``extended`` the rule's extended-precision nodes and weights are used
    and all arithmetic runs in long double. High-degree images are damped by
    ``(R1/|x|)**(n+1)``, so double precision bottoms out at a relative error
    of roughly ``eps * (|x|/R1)**(n+1)``; pass fields sampled in extended
    precision (at ``rule.nodes_ext``) to get past it.
    """
    if not extended:
        x = _points(targets)
        R1 = rule.radius
        _check_exterior(x, R1)
        qw = rule.weights[:, None] * np.asarray(fields, dtype=float)
        s = _direct.inv_r3_batch(x, rule.nodes, qw)
        return (np.einsum("ij,ij->i", x, x) - R1 * R1)[:, None] * s / (FOUR_PI * R1)
    x = np.atleast_2d(np.asarray(targets, dtype=np.longdouble))
    _check_exterior(x.astype(float), rule.radius)
    R1 = np.longdouble(rule.radius_ext)
    qw = rule.weights_ext[:, None] * np.asarray(fields, dtype=np.longdouble)
    s = _direct.inv_r3_extended(x, rule.nodes_ext, qw)
    four_pi = 16 * np.arctan(np.longdouble(1))
    return ((x * x).sum(axis=1) - R1 * R1)[:, None] * s / (four_pi * R1)


def phi_forward(m: Magnetization | None, h: CoreDensity | None, rule: SphereRule) -> PotentialField:
    """``Phi = Phi0[m] + Phi1[h]`` sampled on the nodes of ``rule``."""
    values = np.zeros(rule.size)
    if m is not None:
        values += phi0_forward(m, rule.nodes)
    if h is not None:
        values += phi1_forward(h, rule.nodes)
    return PotentialField(GridScalarField(rule, values))


def psi_forward(m0: Magnetization | None, m1: Magnetization | None, rule: SphereRule) -> PotentialField:
    """Superposition of two crustal-type potentials generated at ``S_R0`` and ``S_R1``."""
    values = np.zeros(rule.size)
    for m in (m0, m1):
        if m is not None:
            values += phi0_forward(m, rule.nodes)
    return PotentialField(GridScalarField(rule, values))


def b_forward(m: Magnetization | None, h: CoreDensity | None, rule: SphereRule) -> GridVectorField:
    values = np.zeros((rule.size, 3))
    if m is not None:
        values += b0_forward(m, rule.nodes)
    if h is not None:
        values += b1_forward(h, rule.nodes)
    return GridVectorField(rule, values)


def b_normal(m: Magnetization | None, h: CoreDensity | None, rule: SphereRule) -> GridScalarField:
    return b_forward(m, h, rule).normal_part()


# -- adjoints ----------------------------------------------------------------

def _g_samples(g):
    return g.samples if isinstance(g, PotentialField) else g


def phi0_adjoint(g, rule0: SphereRule) -> GridVectorField:
    """Adjoint of ``Phi0`` (L2 on ``S_R2`` to L2 on the rule's part of ``S_R0``)."""
    gs = _g_samples(g)
    if gs.radius <= rule0.radius:
        raise ValueError("data sphere must enclose the source sphere")
    rule2 = gs.rule
    d3, _, _ = _direct.diff_r3_sum(rule0.nodes, rule2.nodes, rule2.weights * gs.values)
    return GridVectorField(rule0, -d3 / FOUR_PI)


def phi1_adjoint(g, rule1: SphereRule) -> GridScalarField:
    """Adjoint of ``Phi1`` (L2 on ``S_R2`` to L2 on ``S_R1``)."""
    gs = _g_samples(g)
    R1, R2 = rule1.radius, gs.radius
    if R2 <= R1:
        raise ValueError("data sphere must enclose the core sphere")
    rule2 = gs.rule
    s = _direct.inv_r3_sum(rule1.nodes, rule2.nodes, rule2.weights * gs.values)
    return GridScalarField(rule1, (R2 * R2 - R1 * R1) * s / (FOUR_PI * R1))


def adjoint_on_kernel_crust(sys: KernelSystem, points0, index=None) -> np.ndarray:
    """``Phi0^*[K_m]`` at points of ``S_R0`` in closed form.

    Equals ``(R2/4pi) grad F_{g|x|/R2}(x/|x| . x_m)``, i.e. the field of a point
    source at ``a_m = (R2/g) x_m``. Shape (N, 3) for one index, (N, M, 3) otherwise.
    """
    R2, g = sys.sphere_radius, sys.gamma
    x = _points(points0)
    centers = sys.centers if index is None else sys.centers[[index]]
    a = (R2 / g) * centers
    d = a[None, :, :] - x[:, None, :]
    r3 = np.linalg.norm(d, axis=2) ** 3
    out = R2 * R2 / (FOUR_PI * g) * d / r3[:, :, None]
    return out[:, 0, :] if index is not None else out


def adjoint_on_kernel_core(sys: KernelSystem, R1: float, points1, index=None) -> np.ndarray:
    """``Phi1^*[K_m] = (R2/R1) K_{g R1/R2}(x/|x| . x_m)`` at points of ``S_R1``."""
    R2, g = sys.sphere_radius, sys.gamma
    x = _points(points1)
    d = x / np.linalg.norm(x, axis=1)[:, None]
    t = sys.cosines(d)
    vals = (R2 / R1) * abel_poisson(g * R1 / R2, t)
    return vals[:, index] if index is not None else vals


def adjoint_on_kernel(sys: KernelSystem, index: int, R1: float, points0, points1):
    """Both components of ``Phi^*[K_m]``: crustal vector field and core scalar."""
    return (adjoint_on_kernel_crust(sys, points0, index),
            adjoint_on_kernel_core(sys, R1, points1, index))


# -- balayage ----------------------------------------------------------------

@dataclass(frozen=True)
class ShellDensity:
    """Density inside a ball, sampled on concentric spheres.

    ``radial_weights`` integrate in ``r``; each sphere rule already carries the
    ``r**2`` surface factor, so volume integrals are ``sum_i w_i sum_j w_ij f_ij``.
    """

    radii: np.ndarray
    radial_weights: np.ndarray
    fields: tuple
    r_outer: float | None = None  # outer radius of the shell; defaults to the last node

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if np.any(np.diff(r) <= 0) or np.any(r <= 0):
            raise ValueError("shell radii must be positive and strictly increasing")
        if len(self.fields) != len(r) or len(self.radial_weights) != len(r):
            raise ValueError("one field and one weight per radius")
        for ri, f in zip(r, self.fields):
            if abs(f.radius - ri) > 1e-12 * ri:
                raise ValueError("field radius does not match the shell node")
        object.__setattr__(self, "radii", r)
        object.__setattr__(self, "radial_weights", np.asarray(self.radial_weights, dtype=float))
        object.__setattr__(self, "fields", tuple(self.fields))
        outer = r[-1] if self.r_outer is None else float(self.r_outer)
        if outer < r[-1]:
            raise ValueError("outer radius lies inside the shell nodes")
        object.__setattr__(self, "r_outer", outer)

    @property
    def is_vector(self) -> bool:
        return isinstance(self.fields[0], GridVectorField)

    def sources(self):
        """Stacked nodes and volume-weighted samples."""
        nodes = np.concatenate([f.rule.nodes for f in self.fields])
        w = np.concatenate([wr * f.rule.weights for wr, f in zip(self.radial_weights, self.fields)])
        vals = np.concatenate([f.values for f in self.fields])
        return nodes, w, vals


def shell_density(func, r_lo: float, r_hi: float, band: int, n_radial: int = 32,
                  vector: bool = False) -> ShellDensity:
    """Sample ``func(points)`` on Gauss-Legendre shells in ``(r_lo, r_hi)``."""
    if not 0 <= r_lo < r_hi:
        raise ValueError("need 0 <= r_lo < r_hi")
    radii, weights = gauss_legendre(n_radial, r_lo, r_hi)
    cls = GridVectorField if vector else GridScalarField
    fields = []
    for r in radii:
        rule = full_sphere_rule(r, band)
        fields.append(cls(rule, np.asarray(func(rule.nodes), dtype=float)))
    return ShellDensity(radii, weights, tuple(fields), r_hi)


def balayage_shell(d: ShellDensity, R: float, rule: SphereRule):
    """Swept density on ``S_R`` with the same exterior potential.

    ``h_hat(x) = 1/(4 pi R) int_{B_R} (R^2 - |y|^2)/|x - y|^3 h(y) dy``; vector
    densities are swept componentwise.
    """
    if abs(rule.radius - R) > 1e-12 * R:
        raise ValueError("target rule must live on S_R")
    if d.r_outer >= R:
        raise ValueError("shell must lie strictly inside S_R")
    nodes, w, vals = d.sources()
    wk = w * (R * R - np.einsum("ij,ij->i", nodes, nodes)) / (FOUR_PI * R)
    if d.is_vector:
        out = np.stack([_direct.inv_r3_sum(rule.nodes, nodes, wk * vals[:, c]) for c in range(3)], axis=1)
        return GridVectorField(rule, out)
    return GridScalarField(rule, _direct.inv_r3_sum(rule.nodes, nodes, wk * vals))


def shell_potential(d: ShellDensity, targets) -> np.ndarray:
    """Newton potential ``-(1/4pi) int h(y)/|x - y| dy`` of a scalar shell density."""
    x = _points(targets)
    _check_exterior(x, d.r_outer)
    nodes, w, vals = d.sources()
    return -_direct.inv_r_sum(x, nodes, w * vals) / FOUR_PI


def surface_potential(f: GridScalarField, targets) -> np.ndarray:
    """Newton potential ``-(1/4pi) int_{S_R} f(y)/|x - y| dw(y)``."""
    x = _points(targets)
    _check_exterior(x, f.radius)
    return -_direct.inv_r_sum(x, f.rule.nodes, f.rule.weights * f.values) / FOUR_PI


def shell_dipole_potential(d: ShellDensity, targets) -> np.ndarray:
    """Volume crustal potential ``1/(4pi) int M(y).(x - y)/|x - y|^3 dy``."""
    if not d.is_vector:
        raise ValueError("vector shell density required")
    x = _points(targets)
    _check_exterior(x, d.r_outer)
    nodes, w, vals = d.sources()
    return _direct.dipole_potential(x, nodes, w[:, None] * vals) / FOUR_PI


def hardy_bound(d: ShellDensity) -> float:
    """Largest sampled value of ``int_{S_r} |h|^2``; finite samples only bound it from below."""
    out = 0.0
    for f in d.fields:
        v = f.values if f.values.ndim == 1 else np.linalg.norm(f.values, axis=1)
        out = max(out, float(f.rule.weights @ v**2))
    return out
