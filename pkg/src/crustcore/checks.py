"""Fast invariant suite behind ``crustcore verify``.

Each check returns a measured error that is compared against its tolerance.
Sizes are kept small so the whole suite runs in well under a minute.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .decomposition import (analyze_vector, hardy_hodge_split, operator_svd, synthesize_vector,
                            VectorHarmonicCoeffs)
from .harmonics import degrees_of, num_coeffs, ynk_all
from .kernels import KernelSystem, SobolevSpec, gram_matrix
from .operators import (balayage_shell, phi0_adjoint, phi0_forward_batch, phi1_adjoint,
                        phi1_forward_batch, shell_density)
from .quadrature import GridScalarField, full_sphere_rule, uniform_centers

R1, R0, R2 = 0.5, 1.0, 1.06


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tol: float

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.value) and self.value < self.tol)


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


def check_quadrature():
    rule = full_sphere_rule(1.0, 10)
    Y = ynk_all(9, rule.dirs)
    G = Y.T @ (rule.weights[:, None] * Y)
    return float(np.abs(G - np.eye(G.shape[0])).max())


def check_phi1_eigen(n_max=10):
    tg = R2 * uniform_centers(60)
    rule = full_sphere_rule(R1, 30)
    n = degrees_of(n_max)
    out = phi1_forward_batch(rule, ynk_all(n_max, rule.dirs), tg)
    ref = (R1 / R2) ** (n + 1) * ynk_all(n_max, tg / R2)
    return float(np.max(np.linalg.norm(out - ref, axis=0) / np.linalg.norm(ref, axis=0)))


def check_phi0_eigen(n_max=10):
    tg = R2 * uniform_centers(60)
    rule = full_sphere_rule(R0, 220)
    d = rule.dirs
    n = degrees_of(n_max)
    Y, G = ynk_all(n_max, d, with_gradient=True)
    F = np.empty((rule.size, 3, len(n)))
    for c in range(3):
        F[:, c, :] = (n * d[:, c, None] * Y + G[:, :, c]) / R0
    out = phi0_forward_batch(rule, F, tg)[:, 1:]
    ref = ((n / R2) * (R0 / R2) ** n * ynk_all(n_max, tg / R2))[:, 1:]
    return float(np.max(np.linalg.norm(out - ref, axis=0) / np.linalg.norm(ref, axis=0)))


def check_adjoints():
    rule2 = full_sphere_rule(R2, 220)
    rule1 = full_sphere_rule(R1, 12)
    rule0 = full_sphere_rule(R0, 12)
    y0 = ynk_all(0, rule2.dirs)[:, 0]
    core = phi1_adjoint(GridScalarField(rule2, y0), rule1).values
    err = _rel(core, (R2 / R1) * ynk_all(0, rule1.dirs)[:, 0])
    # Phi0^*[Y_nk] = R2/(2n+1) (R0/R2)^n grad H^R0_nk on S_R0
    n, flat = 3, 3 * 3 + 2
    y = ynk_all(n, rule2.dirs)[:, flat]
    crust = phi0_adjoint(GridScalarField(rule2, y), rule0).values
    Y, G = ynk_all(n, rule0.dirs, with_gradient=True)
    grad_h = (n * Y[:, flat, None] * rule0.dirs + G[:, flat]) / R0
    err = max(err, _rel(crust, R2 / (2 * n + 1) * (R0 / R2) ** n * grad_h))
    return err


def check_kernel_gram():
    sys = KernelSystem(0.8, uniform_centers(40))
    err = 0.0
    for s in (0, 1, 2):
        sob = SobolevSpec(s, 1.3)
        for frame in ("scalar", "grad"):
            a = gram_matrix(sys, sob, frame, "closed")
            b = gram_matrix(sys, sob, frame, "series")
            err = max(err, _rel(a, b))
    return err


def check_hardy_hodge():
    rng = np.random.default_rng(7)
    n_max = 8
    L = num_coeffs(n_max)
    c = rng.standard_normal((3, L))
    c[1:, 0] = 0.0
    rule = full_sphere_rule(1.2, n_max + 2)
    field = synthesize_vector(VectorHarmonicCoeffs(n_max, *c), rule)
    parts = hardy_hodge_split(field, 1.2, n_max)
    err = _rel(parts.total().values, field.values)
    w = rule.weights
    for a, b in ((parts.plus, parts.minus), (parts.plus, parts.df), (parts.minus, parts.df)):
        dot = w @ np.einsum("ij,ij->i", a.values, b.values)
        err = max(err, abs(dot) / (a.l2_norm() * b.l2_norm()))
    back = analyze_vector(field, n_max)
    err = max(err, float(np.abs(back.stacked() - c).max()))
    return err


def check_balayage():
    d = shell_density(lambda x: np.ones(x.shape[0]), 0.2, 0.7, 50, 8)
    rule = full_sphere_rule(1.0, 8)
    swept = balayage_shell(d, 1.0, rule)
    Q = sum(wr * f.rule.weights.sum() for wr, f in zip(d.radial_weights, d.fields))
    return _rel(swept.values, np.full(rule.size, Q / (4 * np.pi)))


def check_svd():
    spec = operator_svd(R1, R0, R2, 4, source_band=220)
    L = num_coeffs(4)
    return float(np.max(np.abs(spec.eigenvalues[:L] - spec.expected[:L]) / spec.expected[:L]))


CHECKS = (
    ("quadrature exactness", check_quadrature, 1e-12),
    ("Phi1 eigen-relation n<=10", check_phi1_eigen, 1e-10),
    ("Phi0 eigen-relation n<=10", check_phi0_eigen, 1e-9),
    ("adjoint identities", check_adjoints, 1e-10),
    ("kernel Gram closed form", check_kernel_gram, 1e-10),
    ("Hardy-Hodge round trip", check_hardy_hodge, 1e-10),
    ("balayage of symmetric shell", check_balayage, 1e-12),
    ("operator spectrum n<=4", check_svd, 1e-9),
)


def run_checks(stop_on_failure: bool = True):
    results = []
    for name, fn, tol in CHECKS:
        try:
            value = fn()
        except Exception:  # a crashing check counts as a failure
            value = float("inf")
        results.append(CheckResult(name, float(value), tol))
        if stop_on_failure and not results[-1].ok:
            break
    return results
