"""
Reconstruction of crustal Fourier coefficients and of the crust/core split.

Coefficient problem
-------------------
For a target ``Y_pq`` the kernel expansion ``f = sum_m a_m K_{g,m}`` on
``S_R2`` solves

    ((1/lam) G + C) a = d

with ``G`` the ``W^{1,2}(S_R2)`` Gram of the kernels, ``C`` the Gram of the
adjoint images ``Phi^* K_m`` in ``L2(Gamma, R^3) x L2(S_R1)`` and ``d`` the
pairing of those images with ``(Phi0^*[Y_pq], 0)``. The estimate of
``<Phi0, Y_pq>`` is ``<Phi, f>`` on ``S_R2``.

Field problem
-------------
Magnetizations ``sum_i sum_n a_in o^(i) K_n`` on ``S_R0`` (frames ``normal``,
``grad``, ``curl``) and core densities ``sum_n b_n K_n`` on ``S_R1`` are fit to
``Phi`` in least squares with a ``W^{2,2}`` penalty (weight ``alpha``) and an
``L2`` penalty on the magnetization outside ``Gamma`` (weight ``beta``).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .harmonics import CapRegion, SphIndex, degrees_of, num_coeffs, sph_index, ynk_all
from .kernels import KernelSystem, SobolevSpec, abel_poisson, gram_matrix, zonal_gram_closed
from .operators import (FOUR_PI, CoreDensity, Magnetization, PotentialField,
                        adjoint_on_kernel_crust)
from .quadrature import GridScalarField, GridVectorField, SphereRule, cap_rule, full_sphere_rule

NODE_CHUNK = 1500


class SolverError(RuntimeError):
    """A linear system could not be factorized."""


@dataclass(frozen=True)
class SpectrumResult:
    degrees: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.degrees, dtype=int)
        v = np.asarray(self.values, dtype=float)
        if d.shape != v.shape:
            raise ValueError("degrees and values differ in length")
        if np.any(v < 0):
            raise ValueError("power spectra are nonnegative")
        object.__setattr__(self, "degrees", d)
        object.__setattr__(self, "values", v)

    def to_csv(self, path, meta: dict | None = None) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(meta or {}) + "\n")
            w = csv.writer(fh)
            w.writerow(["degree", "value"])
            for p, v in zip(self.degrees, self.values):
                w.writerow([int(p), repr(float(v))])


def _check_radii(R1, R0, R2):
    if not 0 < R1 < R0 < R2:
        raise ValueError("radii must satisfy 0 < R1 < R0 < R2")


def _chunks(n, step=NODE_CHUNK):
    for s in range(0, n, step):
        yield slice(s, min(s + step, n))


def cholesky_solve(M, rhs, what: str = "system"):
    """Cholesky solve with one refinement step and a diagonal jitter fallback.

    Returns ``(x, jitter)``; ``jitter`` is 0 unless the plain factorization failed.
    """
    jitter = 0.0
    try:
        factor = sla.cho_factor(M, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        jitter = 1e-14 * np.trace(M) / M.shape[0]
        try:
            factor = sla.cho_factor(M + jitter * np.eye(M.shape[0]), lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            ev = np.linalg.eigvalsh(M)
            raise SolverError(f"{what} is not positive definite: eigenvalues in "
                              f"[{ev[0]:.3e}, {ev[-1]:.3e}]") from None
    x = sla.cho_solve(factor, rhs, check_finite=False)
    x += sla.cho_solve(factor, rhs - M @ x, check_finite=False)
    return x, jitter


# -- power spectra -------------------------------------------------------------

def _full_rule_check(rule: SphereRule, p_max: int):
    if rule.spec.get("kind") != "sphere" or rule.exact_degree < 2 * p_max:
        raise ValueError(f"spectrum to degree {p_max} needs a full-sphere rule exact to degree {2 * p_max}")


def project(field: PotentialField | GridScalarField, p_max: int) -> np.ndarray:
    """``<field, Y_nk>_{L2(S_R)}`` for all ``n <= p_max`` (flat index order)."""
    gs = field.samples if isinstance(field, PotentialField) else field
    _full_rule_check(gs.rule, p_max)
    out = np.zeros(num_coeffs(p_max))
    wv = gs.rule.weights * gs.values
    for sl in _chunks(gs.rule.size, 4000):
        out += wv[sl] @ ynk_all(p_max, gs.rule.dirs[sl])
    return out


def degree_sums(coeffs, p_max: int) -> np.ndarray:
    deg = degrees_of(p_max)
    return np.bincount(deg, weights=np.asarray(coeffs) ** 2, minlength=p_max + 1)


def power_spectrum(field, p_max: int) -> SpectrumResult:
    """``R_p = sum_q <field, Y_pq>^2`` on the field's sphere."""
    return SpectrumResult(np.arange(p_max + 1), degree_sums(project(field, p_max), p_max))


# -- coefficient problem -------------------------------------------------------

@dataclass(frozen=True)
class CoeffProblemConfig:
    R1: float
    R0: float
    R2: float
    region: CapRegion
    sys: KernelSystem
    lambda_grid: tuple
    target: SphIndex = SphIndex(1, 1)
    cap_band: int = 160
    gamma_integration: str = "complement"

    def __post_init__(self):
        _check_radii(self.R1, self.R0, self.R2)
        lam = np.asarray(self.lambda_grid, dtype=float).ravel()
        if lam.size == 0 or np.any(lam <= 0) or np.any(np.diff(lam) <= 0):
            raise ValueError("lambda grid must be positive and strictly increasing")
        if abs(self.sys.sphere_radius - self.R2) > 1e-12 * self.R2:
            raise ValueError("kernels must live on S_R2")
        if self.gamma_integration not in ("complement", "direct"):
            raise ValueError("gamma_integration is 'complement' or 'direct'")
        if self.cap_band < 2:
            raise ValueError("cap band too small")
        object.__setattr__(self, "lambda_grid", tuple(float(v) for v in lam))
        object.__setattr__(self, "target", sph_index(*self.target))


def default_lambda_grid(lo: float = 1e2, hi: float = 1e14, num: int = 12) -> tuple:
    return tuple(np.logspace(np.log10(lo), np.log10(hi), num))


def crust_gram_full(sys: KernelSystem, R0: float, t):
    """``<Phi0^* K_m, Phi0^* K_n>`` over all of ``S_R0``, as a function of ``t``."""
    R2 = sys.sphere_radius
    g = (sys.gamma * R0 / R2) ** 2
    t = np.asarray(t, dtype=float)
    u = 1.0 + g * g - 2.0 * g * t
    return R2 * R2 / FOUR_PI * g * (t - g) * u**-1.5


def core_gram(sys: KernelSystem, R1: float, t):
    """``<Phi1^* K_m, Phi1^* K_n>_{L2(S_R1)} = R2^2 K_{(g R1/R2)^2}(t)``."""
    R2 = sys.sphere_radius
    return R2 * R2 * abel_poisson((sys.gamma * R1 / R2) ** 2, t)


def target_fields(targets, R0: float, R2: float, dirs) -> np.ndarray:
    """``Phi0^*[Y_pq] = R2/(2p+1) (R0/R2)^p grad H^R0_pq`` on ``S_R0``; shape (N, T, 3)."""
    targets = [sph_index(*t) for t in targets]
    p_max = max(t.n for t in targets)
    cols = np.array([t.flat for t in targets])
    p = np.array([t.n for t in targets], dtype=float)
    Y, G = ynk_all(p_max, dirs, with_gradient=True)
    Y, G = Y[:, cols], G[:, cols, :]
    scale = R2 / (2 * p + 1) * (R0 / R2) ** p / R0
    return scale[None, :, None] * (p[None, :, None] * Y[:, :, None] * dirs[:, None, :] + G)


@dataclass
class CoeffSolution:
    """Per-lambda results for one or more targets.

    Arrays are indexed ``[lambda, target]`` (``alphas`` adds a trailing center axis).
    """

    lambdas: np.ndarray
    targets: list
    alphas: np.ndarray
    estimates: np.ndarray
    residuals: np.ndarray
    norms: np.ndarray
    jitter: np.ndarray
    target_norms: np.ndarray

    def for_target(self, i: int) -> "CoeffSolution":
        return CoeffSolution(self.lambdas, [self.targets[i]], self.alphas[:, i:i + 1],
                             self.estimates[:, i:i + 1], self.residuals[:, i:i + 1],
                             self.norms[:, i:i + 1], self.jitter, self.target_norms[i:i + 1])


class CoeffSystem:
    """Assembled pieces of the coefficient problem, reusable across targets and lambdas."""

    def __init__(self, cfg: CoeffProblemConfig):
        self.cfg = cfg
        sys = cfg.sys
        t = sys.cosines(sys.centers)
        self.G = gram_matrix(sys, SobolevSpec(1, cfg.R2))
        self.C_core = core_gram(sys, cfg.R1, t)
        if cfg.region.half_angle >= np.pi:
            self.mode, self.rule = "full", None
            self.C_crust = crust_gram_full(sys, cfg.R0, t)
        else:
            if cfg.gamma_integration == "complement":
                self.mode, cap = "complement", cfg.region.complement()
            else:
                self.mode, cap = "direct", cfg.region
            self.rule = cap_rule(cfg.R0, cap, cfg.cap_band)
            quad = self._cap_gram()
            if self.mode == "complement":
                self.C_crust = crust_gram_full(sys, cfg.R0, t) - quad
            else:
                self.C_crust = quad
        self.C = self.C_crust + self.C_core
        self.C = 0.5 * (self.C + self.C.T)

    def _kernel_fields(self, sl):
        return adjoint_on_kernel_crust(self.cfg.sys, self.rule.nodes[sl])

    def _cap_gram(self):
        M = self.cfg.sys.size
        out = np.zeros((M, M), order="F")
        for sl in _chunks(self.rule.size, max(1, 3_000_000 // (3 * M))):
            V = self._kernel_fields(sl) * np.sqrt(self.rule.weights[sl])[:, None, None]
            for c in range(3):
                # upper triangle of out += Vc^T Vc
                out = sla.blas.dsyrk(1.0, np.asfortranarray(V[:, :, c]), beta=1.0, c=out,
                                     trans=1, lower=0, overwrite_c=1)
        return np.triu(out) + np.triu(out, 1).T

    def matrix(self, lam: float) -> np.ndarray:
        if lam <= 0:
            raise ValueError("lambda must be positive")
        return self.G / lam + self.C

    def rhs(self, targets):
        """Right-hand sides ``(M, T)`` and squared target norms ``||g||^2_Gamma``."""
        cfg = self.cfg
        targets = [sph_index(*t) for t in targets]
        R0, R2, g = cfg.R0, cfg.R2, cfg.sys.gamma
        p = np.array([t.n for t in targets], dtype=float)
        p_max = int(p.max())
        Yc = ynk_all(p_max, cfg.sys.centers)[:, [t.flat for t in targets]]
        full_d = R2 * R2 * p * g**p * (R0 / R2) ** (2 * p) / (2 * p + 1) * Yc
        full_n = R2 * R2 * p * (R0 / R2) ** (2 * p) / (2 * p + 1)
        if self.mode == "full":
            return full_d, full_n
        d = np.zeros_like(full_d)
        nrm = np.zeros(len(targets))
        M = cfg.sys.size
        step = max(1, 3_000_000 // (3 * max(M, num_coeffs(p_max))))
        for sl in _chunks(self.rule.size, step):
            V = self._kernel_fields(sl)
            T = target_fields(targets, R0, R2, self.rule.dirs[sl])
            w = self.rule.weights[sl]
            d += np.einsum("nmc,ntc->mt", V, w[:, None, None] * T, optimize=True)
            nrm += np.einsum("n,ntc,ntc->t", w, T, T)
        if self.mode == "complement":
            return full_d - d, full_n - nrm
        return d, nrm

    def data_pairing(self, Phi: PotentialField) -> np.ndarray:
        """``<Phi, K_m>_{L2(S_R2)}`` by quadrature on the data rule."""
        rule = Phi.rule
        if abs(rule.radius - self.cfg.R2) > 1e-12 * self.cfg.R2:
            raise ValueError("data must be sampled on S_R2")
        wv = rule.weights * Phi.values
        out = np.zeros(self.cfg.sys.size)
        for sl in _chunks(rule.size, max(1, 4_000_000 // self.cfg.sys.size)):
            out += wv[sl] @ self.cfg.sys.evaluate(rule.dirs[sl])
        return out

    def solve(self, targets, Phi: PotentialField | None = None) -> CoeffSolution:
        targets = [sph_index(*t) for t in targets]
        d, gn = self.rhs(targets)
        phi = self.data_pairing(Phi) if Phi is not None else None
        lams = np.asarray(self.cfg.lambda_grid)
        L, T, M = len(lams), len(targets), self.cfg.sys.size
        alphas = np.zeros((L, T, M))
        est = np.full((L, T), np.nan)
        res = np.zeros((L, T))
        nrm = np.zeros((L, T))
        jit = np.zeros(L)
        for i, lam in enumerate(lams):
            A, jit[i] = cholesky_solve(self.matrix(lam), d, f"coefficient system at lambda={lam:g}")
            alphas[i] = A.T
            CA = self.C @ A
            r2 = gn - 2.0 * np.einsum("mt,mt->t", A, d) + np.einsum("mt,mt->t", A, CA)
            res[i] = np.sqrt(np.clip(r2, 0.0, None))
            nrm[i] = np.sqrt(np.clip(np.einsum("mt,mt->t", A, self.G @ A), 0.0, None))
            if phi is not None:
                est[i] = phi @ A
        return CoeffSolution(lams, targets, alphas, est, res, nrm, jit, np.sqrt(np.clip(gn, 0, None)))


def assemble_coeff_system(cfg: CoeffProblemConfig, lam: float, system: CoeffSystem | None = None):
    """Matrix and right-hand side of the coefficient problem for ``cfg.target``."""
    system = system or CoeffSystem(cfg)
    d, _ = system.rhs([cfg.target])
    return system.matrix(lam), d[:, 0]


def solve_coeff_problem(cfg: CoeffProblemConfig, Phi: PotentialField | None,
                        system: CoeffSystem | None = None) -> CoeffSolution:
    """Solve for ``cfg.target`` on every lambda of the grid."""
    system = system or CoeffSystem(cfg)
    return system.solve([cfg.target], Phi)


def kernel_expansion_coeffs(sys: KernelSystem, alpha, n_max: int) -> np.ndarray:
    """``<f, Y_nk>_{L2(S_R)}`` of ``f = sum_m alpha_m K_m`` for ``n <= n_max``."""
    n = degrees_of(n_max)
    Yc = ynk_all(n_max, sys.centers)
    return sys.sphere_radius**2 * sys.gamma ** n.astype(float) * (np.asarray(alpha) @ Yc)


def scaled_power(sys: KernelSystem, alpha, n_max: int) -> np.ndarray:
    """``1/(2n+1) sum_k <f, Y_nk>^2`` per degree."""
    c = kernel_expansion_coeffs(sys, alpha, n_max)
    return degree_sums(c, n_max) / (2.0 * np.arange(n_max + 1) + 1.0)


@dataclass
class EstimatedSpectrum:
    lambdas: np.ndarray
    degrees: np.ndarray
    per_lambda: np.ndarray
    solution: CoeffSolution
    truth: np.ndarray | None = None
    best_index: np.ndarray | None = None

    def fixed(self, i: int) -> SpectrumResult:
        return SpectrumResult(self.degrees, self.per_lambda[i])

    def best(self) -> SpectrumResult:
        """Per degree, the lambda closest to the true spectrum (testing mode)."""
        if self.best_index is None:
            raise ValueError("best lambda needs the true spectrum")
        return SpectrumResult(self.degrees, self.per_lambda[self.best_index, self.degrees])

    def discrepancy(self, eps: float) -> tuple[SpectrumResult, np.ndarray]:
        """Blind selection: per target, the smallest lambda with residual ``<= eps``.

        Targets that never reach ``eps`` use the largest lambda. Returns the
        spectrum and the chosen lambda index per target.
        """
        res = self.solution.residuals
        ok = res <= eps
        idx = np.where(ok.any(axis=0), ok.argmax(axis=0), len(self.lambdas) - 1)
        est = self.solution.estimates[idx, np.arange(len(idx))]
        deg = np.array([t.n for t in self.solution.targets])
        vals = np.bincount(deg, weights=est**2, minlength=self.degrees.max() + 1)[self.degrees]
        return SpectrumResult(self.degrees, vals), idx


def estimated_spectrum(cfg: CoeffProblemConfig, Phi: PotentialField, p_max: int,
                       truth: SpectrumResult | None = None, p_min: int = 0,
                       system: CoeffSystem | None = None) -> EstimatedSpectrum:
    """``R_p = sum_q <Phi, f_pq>^2`` for all ``p_min <= p <= p_max`` and every lambda."""
    system = system or CoeffSystem(cfg)
    targets = [sph_index(p, k) for p in range(p_min, p_max + 1) for k in range(1, 2 * p + 2)]
    sol = system.solve(targets, Phi)
    deg = np.array([t.n for t in targets])
    per = np.stack([np.bincount(deg, weights=sol.estimates[i] ** 2, minlength=p_max + 1)
                    for i in range(len(sol.lambdas))])
    degrees = np.arange(p_min, p_max + 1)
    best = None
    tv = None
    if truth is not None:
        tv = np.zeros(p_max + 1)
        tv[truth.degrees[truth.degrees <= p_max]] = truth.values[truth.degrees <= p_max]
        err = np.abs(np.log((per + 1e-300) / (tv[None, :] + 1e-300)))
        best = err.argmin(axis=0)
    return EstimatedSpectrum(sol.lambdas, degrees, per, sol, tv, best)


# -- field problem -------------------------------------------------------------

FIELD_FRAMES = ("normal", "grad", "curl")


@dataclass(frozen=True)
class FieldProblemConfig:
    R1: float
    R0: float
    R2: float
    region: CapRegion
    gamma: float
    centers: np.ndarray
    alpha: float
    beta: float
    cap_band: int = 90
    model_band: int = 120

    def __post_init__(self):
        _check_radii(self.R1, self.R0, self.R2)
        if not self.alpha > 0:
            raise ValueError("alpha must be strictly positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        object.__setattr__(self, "centers", KernelSystem(self.gamma, self.centers).centers)

    @property
    def sys(self) -> KernelSystem:
        return KernelSystem(self.gamma, self.centers)


def _multi_series(symbols, t, radius: float, n_max: int):
    """``R^2 sum_n s[n] (2n+1)/(4 pi) P_n(t)`` for several symbols in one pass."""
    t = np.clip(np.asarray(t, dtype=float), -1.0, 1.0)
    coef = [np.asarray(s, dtype=float)[: n_max + 1] * (2.0 * np.arange(n_max + 1) + 1.0) / FOUR_PI
            for s in symbols]
    outs = [np.full_like(t, c[0]) for c in coef]
    p_prev, p = np.ones_like(t), t.copy()
    for o, c in zip(outs, coef):
        o += c[1] * p
    for n in range(2, n_max + 1):
        p_prev, p = p, ((2 * n - 1) * t * p - (n - 1) * p_prev) / n
        for o, c in zip(outs, coef):
            o += c[n] * p
    return [radius**2 * o for o in outs]


def field_image_symbols(cfg: FieldProblemConfig, n_max: int):
    """Degree symbols of the data-space images on ``S_R2``.

    ``Phi1[K_n]``: ``g^l (R1/R2)^(l+1)``; ``Phi0[nu K_n]``: ``g^l l/(2l+1) (R0/R2)^(l+1)``;
    ``Phi0[grad K_n]``: ``g^l l(l+1)/(2l+1) (R0/R2)^(l+1)``; the curl frame maps to zero.
    """
    l = np.arange(n_max + 1, dtype=float)
    gl = cfg.gamma**l
    core = gl * (cfg.R1 / cfg.R2) ** (l + 1)
    c0 = gl * (cfg.R0 / cfg.R2) ** (l + 1) / (2 * l + 1)
    return core, c0 * l, c0 * l * (l + 1)


def field_images(cfg: FieldProblemConfig, dirs):
    """Closed forms of the images at points of ``S_R2``: core, normal, grad; each (N, M)."""
    t = np.clip(np.asarray(dirs) @ cfg.centers.T, -1.0, 1.0)
    core = (cfg.R1 / cfg.R2) * abel_poisson(cfg.gamma * cfg.R1 / cfg.R2, t)
    g = cfg.gamma * cfg.R0 / cfg.R2
    u = 1.0 + g * g - 2.0 * g * t
    c = cfg.R0 / (FOUR_PI * cfg.R2)
    normal = c * g * (t - g) * u**-1.5
    grad = c * (2.0 * g * t * u**-1.5 - 3.0 * g * g * (1.0 - t * t) * u**-2.5)
    return core, normal, grad


def _series_degree(cfg: FieldProblemConfig, tol: float = 1e-17) -> int:
    q = (cfg.gamma * cfg.R0 / cfg.R2) ** 2
    n = 10
    while n * n * q**n > tol and n < 4000:
        n += 10
    return n


def cap_frame_gram(gamma: float, centers, rule: SphereRule) -> np.ndarray:
    """``L2`` Gram of the frame fields ``o^(i) K_n`` over the rule's region, (3M, 3M).

    Uses the pointwise identities ``nu . grad = nu . curl = 0``,
    ``grad_m . grad_n = curl_m . curl_n = K'K'(x_m . x_n - t_m t_n)`` and
    ``grad_m . curl_n = K'K' nu . (x_n x x_m)``.
    """
    c = np.asarray(centers)
    M = c.shape[0]
    P = np.zeros((M, M))
    Q = np.zeros((M, M))
    Rt = np.zeros((M, M))
    N3 = np.zeros((3, M, M))
    for sl in _chunks(rule.size, max(1, 2_000_000 // M)):
        d = rule.dirs[sl]
        w = rule.weights[sl][:, None]
        t = np.clip(d @ c.T, -1.0, 1.0)
        K = abel_poisson(gamma, t)
        dK = abel_poisson(gamma, t, 1)
        P += K.T @ (w * K)
        Q += dK.T @ (w * dK)
        tdK = t * dK
        Rt += tdK.T @ (w * tdK)
        for j in range(3):
            N3[j] += dK.T @ (w * d[:, j:j + 1] * dK)
    xx = c @ c.T
    tang = Q * xx - Rt
    cross = np.cross(c[None, :, :], c[:, None, :])  # [m, n] -> x_n x x_m
    gc = np.einsum("jmn,mnj->mn", N3, cross)
    out = np.zeros((3 * M, 3 * M))
    out[:M, :M] = P
    out[M:2 * M, M:2 * M] = tang
    out[2 * M:, 2 * M:] = tang
    out[M:2 * M, 2 * M:] = gc
    out[2 * M:, M:2 * M] = gc.T
    return out


@dataclass
class FieldSolution:
    config: FieldProblemConfig
    coeffs_core: np.ndarray
    coeffs_crust: np.ndarray
    magnetization: Magnetization
    core: CoreDensity
    phi0: PotentialField
    phi1: PotentialField
    outside_norm: float
    jitter: float

    def export_coefficients(self, path) -> None:
        """Centers and coefficients, one row per center."""
        with open(path, "w", newline="") as fh:
            meta = {"gamma": self.config.gamma, "alpha": self.config.alpha, "beta": self.config.beta,
                    "radii": [self.config.R1, self.config.R0, self.config.R2]}
            fh.write("# " + json.dumps(meta) + "\n")
            w = csv.writer(fh)
            w.writerow(["x", "y", "z", "core", "normal", "grad", "curl"])
            for i, c in enumerate(self.config.centers):
                w.writerow([repr(float(v)) for v in (*c, self.coeffs_core[i], *self.coeffs_crust[:, i])])


class FieldSystem:
    """Assembled normal equations of the field problem (independent of the data)."""

    def __init__(self, cfg: FieldProblemConfig):
        self.cfg = cfg
        N = cfg.centers.shape[0]
        t = cfg.centers @ cfg.centers.T
        np.clip(t, -1.0, 1.0, out=t)
        n_max = _series_degree(cfg)
        core, s1, s2 = field_image_symbols(cfg, n_max)
        R2 = cfg.R2
        grams = _multi_series([core * core, core * s1, core * s2, s1 * s1, s1 * s2, s2 * s2],
                              t, R2, n_max)
        cc, b1, b2, c11, c12, c22 = grams
        self.data_gram = np.zeros((4 * N, 4 * N))
        D = self.data_gram
        D[:N, :N] = cc
        D[N:2 * N, :N] = b1
        D[2 * N:3 * N, :N] = b2
        D[:N, N:2 * N] = b1.T
        D[:N, 2 * N:3 * N] = b2.T
        D[N:2 * N, N:2 * N] = c11
        D[N:2 * N, 2 * N:3 * N] = c12
        D[2 * N:3 * N, N:2 * N] = c12.T
        D[2 * N:3 * N, 2 * N:3 * N] = c22
        self.reg = np.zeros((4 * N, 4 * N))
        sys = KernelSystem(cfg.gamma, cfg.centers)
        self.reg[:N, :N] = gram_matrix(sys, SobolevSpec(2, cfg.R1))
        sob0 = SobolevSpec(2, cfg.R0)
        for i, frame in enumerate(FIELD_FRAMES):
            s = slice((i + 1) * N, (i + 2) * N)
            self.reg[s, s] = zonal_gram_closed(cfg.gamma, sob0, t, frame)
        if cfg.region.half_angle < np.pi:
            rule = cap_rule(cfg.R0, cfg.region.complement(), cfg.cap_band)
            self.outside = cap_frame_gram(cfg.gamma, cfg.centers, rule)
        else:
            self.outside = np.zeros((3 * N, 3 * N))

    def matrix(self, alpha: float | None = None, beta: float | None = None) -> np.ndarray:
        alpha = self.cfg.alpha if alpha is None else alpha
        beta = self.cfg.beta if beta is None else beta
        N = self.cfg.centers.shape[0]
        M = self.data_gram + alpha * self.reg
        if beta:
            M[N:, N:] += beta * self.outside
        return 0.5 * (M + M.T)

    def rhs(self, Phi: PotentialField) -> np.ndarray:
        rule = Phi.rule
        if abs(rule.radius - self.cfg.R2) > 1e-12 * self.cfg.R2:
            raise ValueError("data must be sampled on S_R2")
        N = self.cfg.centers.shape[0]
        out = np.zeros(4 * N)
        wv = rule.weights * Phi.values
        for sl in _chunks(rule.size, max(1, 2_000_000 // N)):
            core, normal, grad = field_images(self.cfg, rule.dirs[sl])
            out[:N] += wv[sl] @ core
            out[N:2 * N] += wv[sl] @ normal
            out[2 * N:3 * N] += wv[sl] @ grad
        return out


def _frame_samples(cfg: FieldProblemConfig, coeffs_crust, dirs):
    sys = cfg.sys
    out = np.zeros((dirs.shape[0], 3))
    for sl in _chunks(dirs.shape[0], max(1, 1_000_000 // sys.size)):
        for i, frame in enumerate(FIELD_FRAMES):
            out[sl] += np.einsum("nmc,m->nc", sys.frame_fields(dirs[sl], frame), coeffs_crust[i])
    return out


def _same_geometry(a: FieldProblemConfig, b: FieldProblemConfig) -> bool:
    return ((a.R1, a.R0, a.R2, a.region, a.gamma, a.cap_band, a.model_band)
            == (b.R1, b.R0, b.R2, b.region, b.gamma, b.cap_band, b.model_band)
            and np.array_equal(a.centers, b.centers))


def solve_field_problem(cfg: FieldProblemConfig, Phi: PotentialField,
                        system: FieldSystem | None = None) -> FieldSolution:
    """Least-squares crust/core reconstruction with localization penalty."""
    if system is None:
        system = FieldSystem(cfg)
    elif not _same_geometry(system.cfg, cfg):
        raise ValueError("field system was assembled for a different configuration")
    N = cfg.centers.shape[0]
    d = system.rhs(Phi)
    # alpha and beta come from cfg so one assembled system serves several penalties
    sol, jit = cholesky_solve(system.matrix(cfg.alpha, cfg.beta), d, "field system")
    core_c = sol[:N]
    crust_c = sol[N:].reshape(3, N)
    outside = float(np.sqrt(max(sol[N:] @ system.outside @ sol[N:], 0.0)))

    rule0 = full_sphere_rule(cfg.R0, cfg.model_band)
    mvals = _frame_samples(cfg, crust_c, rule0.dirs)
    m = Magnetization.from_field(GridVectorField(rule0, mvals))
    rule1 = full_sphere_rule(cfg.R1, cfg.model_band)
    h = CoreDensity(GridScalarField(rule1, cfg.sys.evaluate(rule1.dirs) @ core_c))

    rule = Phi.rule
    p0 = np.zeros(rule.size)
    p1 = np.zeros(rule.size)
    for sl in _chunks(rule.size, max(1, 2_000_000 // N)):
        core, normal, grad = field_images(cfg, rule.dirs[sl])
        p1[sl] = core @ core_c
        p0[sl] = normal @ crust_c[0] + grad @ crust_c[1]
    return FieldSolution(cfg, core_c, crust_c, m, h,
                         PotentialField(GridScalarField(rule, p0)),
                         PotentialField(GridScalarField(rule, p1)), outside, jit)


def relative_error(approx: PotentialField, truth: PotentialField) -> float:
    """Relative ``L2(S_R2)`` error by quadrature on the common rule."""
    if approx.rule is not truth.rule and approx.rule.size != truth.rule.size:
        raise ValueError("fields live on different rules")
    w = truth.rule.weights
    diff = approx.values - truth.values
    return float(np.sqrt(w @ diff**2 / (w @ truth.values**2)))
