"""
Vector spherical harmonics, Helmholtz-Hodge and Hardy-Hodge splits, and the
eigensystem of the combined crust/core operator.

Vector fields on ``S_R`` are expanded in the unit-normalized frame

    e1 = nu Y_nk,   e2 = grad_S Y_nk / sqrt(n(n+1)),   e3 = L_S Y_nk / sqrt(n(n+1))

which is orthonormal for the unit-sphere measure. The traces of the Hardy
basis on ``S_R`` in this frame are

    grad H^R_nk      -> ( n,     sqrt(n(n+1)), 0) / R
    grad H^R_{-n-1,k} -> (-(n+1), sqrt(n(n+1)), 0) / R
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .harmonics import degrees_of, num_coeffs, rotate_tangent, ynk_all
from .quadrature import GridVectorField, SphereRule, full_sphere_rule
from .operators import phi0_forward_batch, phi1_forward_batch


@dataclass(frozen=True)
class VectorHarmonicCoeffs:
    n_max: int
    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray

    def __post_init__(self):
        L = num_coeffs(self.n_max)
        for name in ("c1", "c2", "c3"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (L,):
                raise ValueError(f"{name} must have length {L}")
            object.__setattr__(self, name, v)
        if self.c2[0] != 0.0 or self.c3[0] != 0.0:
            raise ValueError("tangential frames vanish at degree 0")

    @classmethod
    def zeros(cls, n_max: int):
        L = num_coeffs(n_max)
        return cls(n_max, np.zeros(L), np.zeros(L), np.zeros(L))

    def stacked(self) -> np.ndarray:
        return np.stack([self.c1, self.c2, self.c3])


def _frames(n_max: int, dirs):
    """Frame vectors at unit directions, shape (3, N, L, 3)."""
    Y, G = ynk_all(n_max, dirs, with_gradient=True)
    n = degrees_of(n_max).astype(float)
    inv = np.zeros_like(n)
    inv[1:] = 1.0 / np.sqrt(n[1:] * (n[1:] + 1.0))
    e1 = Y[:, :, None] * dirs[:, None, :]
    e2 = G * inv[None, :, None]
    e3 = np.cross(dirs[:, None, :], e2)
    return e1, e2, e3


def _check_rule(rule: SphereRule, n_max: int):
    deg = rule.exact_degree
    if rule.spec.get("kind") != "sphere" or deg is None or deg < 2 * n_max:
        raise ValueError(f"analysis to degree {n_max} needs a full-sphere rule exact to degree {2 * n_max}")


def analyze_vector(field: GridVectorField, n_max: int) -> VectorHarmonicCoeffs:
    """Project a sampled vector field onto the frame up to degree ``n_max``."""
    rule = field.rule
    _check_rule(rule, n_max)
    w = rule.weights / rule.radius**2
    frames = _frames(n_max, rule.dirs)
    wv = w[:, None] * field.values
    c = [np.einsum("nc,nlc->l", wv, e) for e in frames]
    c[1][0] = c[2][0] = 0.0
    return VectorHarmonicCoeffs(n_max, *c)


def synthesize_vector(coeffs: VectorHarmonicCoeffs, rule: SphereRule) -> GridVectorField:
    frames = _frames(coeffs.n_max, rule.dirs)
    out = sum(np.einsum("nlc,l->nc", e, c) for e, c in zip(frames, coeffs.stacked()))
    return GridVectorField(rule, out)


@dataclass(frozen=True)
class HardyHodgeParts:
    plus: GridVectorField
    minus: GridVectorField
    df: GridVectorField

    def total(self) -> GridVectorField:
        return self.plus + self.minus + self.df


def hardy_hodge_coeffs(coeffs: VectorHarmonicCoeffs):
    """Split frame coefficients into (plus, minus, divergence-free) coefficient sets."""
    n = degrees_of(coeffs.n_max).astype(float)
    s = np.sqrt(n * (n + 1.0))
    q = np.divide(coeffs.c2, s, out=np.zeros_like(s), where=s > 0)
    a = (coeffs.c1 + (n + 1.0) * q) / (2.0 * n + 1.0)
    b = (n * q - coeffs.c1) / (2.0 * n + 1.0)
    zero = np.zeros_like(n)
    plus = VectorHarmonicCoeffs(coeffs.n_max, a * n, a * s, zero)
    minus = VectorHarmonicCoeffs(coeffs.n_max, -b * (n + 1.0), b * s, zero)
    df = VectorHarmonicCoeffs(coeffs.n_max, zero, zero, coeffs.c3)
    return plus, minus, df


def hardy_hodge_split(field: GridVectorField, R: float, n_max: int) -> HardyHodgeParts:
    """Hardy-Hodge decomposition of a band-limited field on ``S_R``.

    ``plus`` is the trace of an interior harmonic gradient, ``minus`` that of
    an exterior one and ``df`` is tangential and divergence-free.
    """
    if abs(field.radius - R) > 1e-12 * R:
        raise ValueError("field does not live on S_R")
    parts = hardy_hodge_coeffs(analyze_vector(field, n_max))
    return HardyHodgeParts(*(synthesize_vector(p, field.rule) for p in parts))


def rotate_field(field: GridVectorField) -> GridVectorField:
    """Pointwise tangent-plane rotation ``nu x v`` of a tangential field."""
    return GridVectorField(field.rule, rotate_tangent(field.values, field.rule.dirs))


# -- eigensystem of Phi^* Phi ------------------------------------------------

def sigma_closed_form(n, R1: float, R0: float, R2: float):
    """Non-zero eigenvalues ``n/(2n+1)(R0/R2)^(2n) + (R1/R2)^(2n)``."""
    n = np.asarray(n, dtype=float)
    return n / (2.0 * n + 1.0) * (R0 / R2) ** (2 * n) + (R1 / R2) ** (2 * n)


@dataclass(frozen=True)
class OperatorSpectrum:
    degrees: np.ndarray
    eigenvalues: np.ndarray
    expected: np.ndarray
    gram: np.ndarray


def operator_svd(R1: float, R0: float, R2: float, n_max: int, source_band: int = 220,
                 core_band: int | None = None, batch_fields: int = 240) -> OperatorSpectrum:
    """Eigenvalues of ``Phi^* Phi`` (crust on all of ``S_R0``) in a truncated basis.

    The basis is orthonormal in ``L2(S_R0, R^3) x L2(S_R1)``: the three frame
    fields of every ``(n, k)`` on ``S_R0`` and ``Y_nk / R1`` on ``S_R1``. Images
    are computed by quadrature of the forward kernels and their Gram matrix is
    formed with a rule on ``S_R2`` that is exact for the band-limited images.
    """
    if not 0 < R1 < R0 < R2:
        raise ValueError("radii must satisfy 0 < R1 < R0 < R2")
    L = num_coeffs(n_max)
    rule2 = full_sphere_rule(R2, n_max + 1)
    rule0 = full_sphere_rule(R0, source_band)
    rule1 = full_sphere_rule(R1, core_band or max(n_max + 30, 40))
    d0 = rule0.dirs
    Y, G = ynk_all(n_max, d0, with_gradient=True)
    images = np.empty((rule2.size, 4 * L))
    nvec = degrees_of(n_max)
    # group degrees so that each batch of source fields stays moderate in size
    groups, current = [], []
    for n in range(n_max + 1):
        current.append(n)
        if sum(3 * (2 * m + 1) for m in current) >= batch_fields:
            groups.append(current)
            current = []
    if current:
        groups.append(current)
    for group in groups:
        blocks, targets = [], []
        for n in group:
            cols = np.flatnonzero(nvec == n)
            k = len(cols)
            block = np.zeros((rule0.size, 3, 3 * k))
            block[:, :, :k] = d0[:, :, None] * Y[:, None, cols]
            if n > 0:
                g = np.transpose(G[:, cols, :], (0, 2, 1)) / np.sqrt(n * (n + 1.0))
                block[:, :, k:2 * k] = g
                block[:, :, 2 * k:] = np.cross(d0[:, :, None], g, axis=1)
            blocks.append(block)
            targets.extend(frame * L + cols for frame in range(3))
        out = phi0_forward_batch(rule0, np.concatenate(blocks, axis=2) / R0, rule2.nodes)
        images[:, np.concatenate(targets)] = out
    del Y, G
    Y1 = ynk_all(n_max, rule1.dirs) / R1
    images[:, 3 * L:] = phi1_forward_batch(rule1, Y1, rule2.nodes)
    gram = images.T @ (rule2.weights[:, None] * images)
    gram = 0.5 * (gram + gram.T)
    eig = np.sort(np.linalg.eigvalsh(gram))[::-1]
    expected = np.zeros(4 * L)
    expected[:L] = np.sort(sigma_closed_form(nvec, R1, R0, R2))[::-1]
    degrees = np.zeros(4 * L, dtype=int)
    order = np.argsort(-sigma_closed_form(nvec, R1, R0, R2), kind="stable")
    degrees[:L] = nvec[order]
    degrees[L:] = -1
    return OperatorSpectrum(degrees, eig, expected, gram)
