"""
Real spherical harmonics, inner/outer harmonics and surface operators.

Orders are indexed by ``k = 1, ..., 2n+1`` with the following bijection to a
signed order ``s = k - n - 1``:

* ``k = 1, ..., n``       (``s < 0``): ``P_{n,|s|}(z) cos(|s| phi)``
* ``k = n + 1``           (``s = 0``): the zonal harmonic ``P_{n,0}(z)``
* ``k = n + 2, ..., 2n+1`` (``s > 0``): ``P_{n,s}(z) sin(s phi)``

where ``z`` is the Cartesian z-coordinate of the unit direction (the sine of
the latitude) and ``phi`` the longitude. The associated Legendre functions
carry no Condon-Shortley phase, and the harmonics are orthonormal in
``L^2`` of the unit sphere. Harmonics on a sphere of radius ``R`` are always
evaluated at the direction ``x/|x|`` and keep the unit-sphere normalization,
so that ``||Y_{n,k}||_{L^2(S_R)} = R``.

Flat storage of all harmonics up to degree ``n_max`` uses the position
``n**2 + k - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

UNIT_TOL = 1e-10


class SphIndex(NamedTuple):
    """Degree/order pair ``(n, k)`` with ``1 <= k <= 2n+1``."""

    n: int
    k: int

    @property
    def flat(self) -> int:
        return self.n * self.n + self.k - 1

    @property
    def signed_order(self) -> int:
        return self.k - self.n - 1


def sph_index(n: int, k: int) -> SphIndex:
    if n < 0 or not 1 <= k <= 2 * n + 1:
        raise ValueError(f"invalid harmonic index (n={n}, k={k})")
    return SphIndex(int(n), int(k))


def num_coeffs(n_max: int) -> int:
    return (n_max + 1) ** 2


def flat_index(n: int, k: int) -> int:
    return sph_index(n, k).flat


def degrees_of(n_max: int) -> np.ndarray:
    """Degree ``n`` of every flat position up to ``n_max``."""
    return np.repeat(np.arange(n_max + 1), 2 * np.arange(n_max + 1) + 1)


def indices(n_max: int):
    """Iterate over all ``SphIndex`` up to ``n_max`` in flat order."""
    for n in range(n_max + 1):
        for k in range(1, 2 * n + 2):
            yield SphIndex(n, k)


@dataclass(frozen=True)
class HarmonicCoeffs:
    """Real spherical-harmonic coefficients up to degree ``n_max``."""

    n_max: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (num_coeffs(self.n_max),):
            raise ValueError(
                f"expected {num_coeffs(self.n_max)} coefficients, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, n_max: int) -> "HarmonicCoeffs":
        return cls(n_max, np.zeros(num_coeffs(n_max)))

    @classmethod
    def from_dict(cls, n_max: int, entries: dict) -> "HarmonicCoeffs":
        values = np.zeros(num_coeffs(n_max))
        for (n, k), v in entries.items():
            values[flat_index(n, k)] = v
        return cls(n_max, values)

    def __getitem__(self, idx) -> float:
        n, k = idx
        return float(self.values[flat_index(n, k)])

    def evaluate(self, dirs) -> np.ndarray:
        """Synthesize the expansion at unit directions."""
        return ynk_all(self.n_max, dirs) @ self.values


@dataclass(frozen=True)
class CapRegion:
    """Spherical cap ``{x : x/|x| . axis >= cos(half_angle)}``."""

    axis: tuple
    half_angle: float

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ValueError("cap axis must be a unit vector")
        if not 0.0 < self.half_angle <= np.pi:
            raise ValueError("cap half-angle must lie in (0, pi]")
        object.__setattr__(self, "axis", tuple(float(a) for a in axis))
        object.__setattr__(self, "half_angle", float(self.half_angle))

    @property
    def cos_half_angle(self) -> float:
        return float(np.cos(self.half_angle))

    def complement(self) -> "CapRegion":
        if self.half_angle >= np.pi:
            raise ValueError("the full sphere has an empty complement")
        return CapRegion(tuple(-a for a in self.axis), np.pi - self.half_angle)

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        """Mask of points inside the closed cap (optionally shrunk by ``tol``)."""
        pts = _as_points(x)
        d = pts / np.linalg.norm(pts, axis=1)[:, None]
        return d @ np.asarray(self.axis) >= self.cos_half_angle + tol

    def area(self, radius: float = 1.0) -> float:
        return 2.0 * np.pi * radius**2 * (1.0 - self.cos_half_angle)


def southern_hemisphere() -> CapRegion:
    return CapRegion((0.0, 0.0, -1.0), np.pi / 2)


def _as_points(x) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype != np.longdouble:
        x = x.astype(float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[-1] != 3:
        raise ValueError("points must have 3 Cartesian components")
    return x


def _check_unit(dirs: np.ndarray) -> None:
    norms = np.linalg.norm(dirs, axis=-1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise ValueError("directions must lie on the unit sphere")


def _legendre_tables(n_max: int, t: np.ndarray, with_derivative: bool):
    """Normalized Legendre factors with the ``(1-t^2)^{m/2}`` part removed.

    Returns ``T[m][n - m]`` (and derivatives in ``t``) such that
    ``Y = T_n^m(t) * Re/Im((x + i y)^m)`` on the unit sphere.
    """
    tables, dtables = [], []
    one = t.dtype.type(1)
    four_pi = 16 * np.arctan(one)
    diag = one / np.sqrt(four_pi)
    for m in range(n_max + 1):
        if m == 1:
            diag = np.sqrt(3 * one / four_pi)
        elif m > 1:
            diag *= np.sqrt((2 * m + one) / (2 * m))
        rows = np.empty((n_max - m + 1,) + t.shape, dtype=t.dtype)
        drows = np.empty_like(rows) if with_derivative else None
        rows[0] = diag
        if with_derivative:
            drows[0] = 0.0
        if m < n_max:
            c = np.sqrt(2 * m + 3 * one)
            rows[1] = c * t * diag
            if with_derivative:
                drows[1] = c * diag
        for n in range(m + 2, n_max + 1):
            a = np.sqrt((4 * n * n - one) / (n * n - m * m))
            b = np.sqrt(((n - one) ** 2 - m * m) / (4 * (n - one) ** 2 - 1))
            j = n - m
            rows[j] = a * (t * rows[j - 1] - b * rows[j - 2])
            if with_derivative:
                drows[j] = a * (rows[j - 1] + t * drows[j - 1] - b * drows[j - 2])
        tables.append(rows)
        dtables.append(drows)
    return tables, dtables


def ynk_all(n_max: int, dirs, with_gradient: bool = False, extended: bool = False,
            keep_extended: bool = False):
    """All real harmonics up to ``n_max`` at unit directions.

    Parameters
    ----------
    n_max : int
        Maximal degree.
    dirs : (N, 3) array_like
        Unit vectors.
    with_gradient : bool
        Also return the surface gradients ``nabla_S Y_{n,k}`` on the unit
        sphere, shape ``(N, L, 3)``.
    extended : bool
        Run the recursions in extended precision before rounding to double.
        Needed when high-degree values feed integrals that are damped by many
        orders of magnitude.

    Returns
    -------
    Y : (N, L) ndarray, ``L = (n_max + 1)**2``
    """
    x = _as_points(dirs)
    _check_unit(x)
    npts = x.shape[0]
    L = num_coeffs(n_max)
    if extended:
        x = x.astype(np.longdouble)
    elif x.dtype == np.longdouble:
        x = x.astype(float)
    X, Yc, Z = x[:, 0], x[:, 1], x[:, 2]
    tables, dtables = _legendre_tables(n_max, Z, with_gradient)

    # cos/sin parts as Re/Im of (x + iy)^m
    w = np.empty((n_max + 1, npts), dtype=np.clongdouble if extended else complex)
    w[0] = 1.0
    for m in range(1, n_max + 1):
        w[m] = w[m - 1] * (X + 1j * Yc)
    C, S = w.real, w.imag

    # filled degree-major for contiguous writes, transposed on return
    Y = np.empty((L, npts), dtype=x.dtype)
    G = np.empty((L, npts, 3), dtype=x.dtype) if with_gradient else None
    ez = np.array([0.0, 0.0, 1.0], dtype=x.dtype)
    for n in range(n_max + 1):
        base = n * n + n  # position of k = n + 1
        for m in range(n + 1):
            T = tables[m][n - m]
            if m == 0:
                Y[base] = T
            else:
                Y[base - m] = T * C[m]
                Y[base + m] = T * S[m]
            if not with_gradient:
                continue
            dT = dtables[m][n - m]
            # gradient of r^(n-m) T(z/r) at r = 1
            gu = (n - m) * x * T[:, None] + dT[:, None] * (ez[None, :] - Z[:, None] * x)
            if m == 0:
                grad = gu
                G[base] = grad - n * x * Y[base, :, None]
            else:
                mT = m * T
                gc = G[base - m]
                gs = G[base + m]
                np.multiply(gu, C[m][:, None], out=gc)
                np.multiply(gu, S[m][:, None], out=gs)
                gc[:, 0] += mT * C[m - 1]
                gc[:, 1] -= mT * S[m - 1]
                gs[:, 0] += mT * S[m - 1]
                gs[:, 1] += mT * C[m - 1]
                gc -= n * x * Y[base - m, :, None]
                gs -= n * x * Y[base + m, :, None]
    if extended and not keep_extended:
        Y = Y.astype(float)
        G = G.astype(float) if with_gradient else None
    if with_gradient:
        return Y.T, G.transpose(1, 0, 2)
    return Y.T


def eval_ynk(idx, direction) -> float | np.ndarray:
    """Value of ``Y_{n,k}`` at unit direction(s)."""
    idx = sph_index(*idx)
    x = _as_points(direction)
    out = ynk_all(idx.n, x)[:, idx.flat]
    return float(out[0]) if np.ndim(direction) == 1 else out


def surface_grad_ynk(idx, direction) -> np.ndarray:
    """``nabla_S Y_{n,k}`` on the unit sphere, shape ``(N, 3)`` or ``(3,)``."""
    idx = sph_index(*idx)
    x = _as_points(direction)
    _, G = ynk_all(idx.n, x, with_gradient=True)
    out = G[:, idx.flat]
    return out[0] if np.ndim(direction) == 1 else out


def _radial_split(x):
    x = _as_points(x)
    r = np.linalg.norm(x, axis=1)
    if np.any(r == 0.0):
        raise ValueError("evaluation point must not be the origin")
    return x, r, x / r[:, None]


def eval_inner_harmonic(idx, R: float, x):
    """``H^R_{n,k}(x) = (|x|/R)^n Y_{n,k}(x/|x|)``; defined at 0 for n = 0."""
    idx = sph_index(*idx)
    pts = _as_points(x)
    r = np.linalg.norm(pts, axis=1)
    if np.any(r == 0.0):
        if idx.n != 0:
            raise ValueError("inner harmonic of positive degree needs x != 0")
    out = np.full(r.shape, 1.0 / np.sqrt(4.0 * np.pi))
    nz = r > 0
    if idx.n > 0:
        out[nz] = (r[nz] / R) ** idx.n * ynk_all(idx.n, pts[nz] / r[nz, None])[:, idx.flat]
    return float(out[0]) if np.ndim(x) == 1 else out


def eval_outer_harmonic(idx, R: float, x):
    """Kelvin transform of the inner harmonic: ``(R/|x|)^(n+1) Y_{n,k}``."""
    idx = sph_index(*idx)
    _, r, d = _radial_split(x)
    out = (R / r) ** (idx.n + 1) * ynk_all(idx.n, d)[:, idx.flat]
    return float(out[0]) if np.ndim(x) == 1 else out


def grad_inner_harmonic(idx, R: float, x):
    """Exact gradient of the inner harmonic ``H^R_{n,k}``."""
    idx = sph_index(*idx)
    _, r, d = _radial_split(x)
    Y, G = ynk_all(idx.n, d, with_gradient=True)
    y, gs = Y[:, idx.flat], G[:, idx.flat]
    scale = (r / R) ** idx.n / r
    out = scale[:, None] * (idx.n * d * y[:, None] + gs)
    return out[0] if np.ndim(x) == 1 else out


def grad_outer_harmonic(idx, R: float, x):
    """Exact gradient of the outer harmonic ``H^R_{-n-1,k}``."""
    idx = sph_index(*idx)
    _, r, d = _radial_split(x)
    Y, G = ynk_all(idx.n, d, with_gradient=True)
    y, gs = Y[:, idx.flat], G[:, idx.flat]
    scale = (R / r) ** (idx.n + 1) / r
    out = scale[:, None] * (-(idx.n + 1) * d * y[:, None] + gs)
    return out[0] if np.ndim(x) == 1 else out


def kelvin(f, R: float):
    """Kelvin transform ``K_R[f](x) = R/|x| f(R^2 x/|x|^2)`` of a callable."""

    def transformed(x):
        pts = _as_points(x)
        r2 = np.einsum("ij,ij->i", pts, pts)
        out = R / np.sqrt(r2) * np.asarray(f(R * R * pts / r2[:, None]))
        return out

    return transformed


def rotate_tangent(v, direction, tol: float = 1e-10) -> np.ndarray:
    """Rotate tangent vector(s) by pi/2 in the tangent plane: ``dir x v``."""
    v = np.asarray(v, dtype=float)
    d = np.asarray(direction, dtype=float)
    dd = np.broadcast_to(d, v.shape)
    _check_unit(dd.reshape(-1, 3))
    scale = np.maximum(np.linalg.norm(v, axis=-1), 1.0)
    if np.any(np.abs(np.sum(v * dd, axis=-1)) > tol * scale):
        raise ValueError("vector is not tangential at the given direction")
    return np.cross(dd, v)


def surface_ops(coeffs: HarmonicCoeffs, direction):
    """Surface gradient ``nabla_S f`` and surface curl ``L_S f`` of an expansion.

    Both are returned at the unit direction(s); ``L_S f = dir x nabla_S f``.
    """
    x = _as_points(direction)
    _, G = ynk_all(coeffs.n_max, x, with_gradient=True)
    grad = np.einsum("nlc,l->nc", G, coeffs.values)
    curl = np.cross(x, grad)
    if np.ndim(direction) == 1:
        return grad[0], curl[0]
    return grad, curl


def legendre_all(n_max: int, t) -> np.ndarray:
    """Legendre polynomials ``P_0..P_{n_max}`` at ``t``; shape ``(n_max+1,) + t.shape``."""
    t = np.asarray(t, dtype=float)
    out = np.empty((n_max + 1,) + t.shape)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = t
    for n in range(2, n_max + 1):
        out[n] = ((2 * n - 1) * t * out[n - 1] - (n - 1) * out[n - 2]) / n
    return out
