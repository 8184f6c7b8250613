"""
Zonal kernels on the sphere and Gram matrices of their translates.

All kernels are functions of ``t = x.y`` for unit vectors. Their Legendre
symbols against unit-normalized harmonics are

* Abel-Poisson ``K_g``:    ``g**n``
* single layer ``F_g``:    ``g**n * 4 pi / (2n + 1)``

Sobolev inner products on ``S_R`` use the multipliers ``(1 + n(n+1)/R**2)**s``
and the surface measure of ``S_R``, so that for ``s = 0`` the Gram of
``K_g`` translates is ``R**2 K_{g**2}(t)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .harmonics import legendre_all
from .quadrature import gauss_legendre

FRAMES = ("normal", "grad", "curl")
SERIES_RTOL = 1e-15


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0 + 1e-12):
        raise ValueError("kernel argument must lie in [-1, 1]")
    return np.clip(t, -1.0, 1.0)


def _check_gamma(gamma):
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")


def _rising(a: float, j: int) -> float:
    out = 1.0
    for i in range(j):
        out *= a + i
    return out


def abel_poisson(gamma: float, t, deriv: int = 0):
    """``K_g(t) = (1 - g^2) / (4 pi (1 + g^2 - 2 g t)^{3/2})`` and its t-derivatives."""
    _check_gamma(gamma)
    t = _check_t(t)
    u = 1.0 + gamma * gamma - 2.0 * gamma * t
    c = (1.0 - gamma * gamma) / (4.0 * np.pi) * (2.0 * gamma) ** deriv * _rising(1.5, deriv)
    return c * u ** (-1.5 - deriv)


def single_layer(gamma: float, t, deriv: int = 0):
    """``F_g(t) = (1 + g^2 - 2 g t)^{-1/2} = sum_n g^n P_n(t)`` and its derivatives."""
    _check_gamma(gamma)
    t = _check_t(t)
    u = 1.0 + gamma * gamma - 2.0 * gamma * t
    return (2.0 * gamma) ** deriv * _rising(0.5, deriv) * u ** (-0.5 - deriv)


def cap_profile_L(gamma_i: float, k_exp: int, t):
    """Compactly supported profile ``((t - g)/(1 - g))^k`` on ``[g, 1]``, zero below."""
    if not -1.0 < gamma_i < 1.0:
        raise ValueError("cap parameter must lie in (-1, 1)")
    t = _check_t(t)
    s = np.clip((t - gamma_i) / (1.0 - gamma_i), 0.0, None)
    return s**k_exp


def cap_profile_legendre(gamma_i: float, k_exp: int, n_max: int) -> np.ndarray:
    """``l_n = 2 pi int_g^1 L(t) P_n(t) dt`` for ``n = 0..n_max``.

    With these, ``L(x.y) = sum_n l_n sum_k Y_nk(x) Y_nk(y)``.
    """
    npts = (n_max + k_exp) // 2 + 2
    t, w = gauss_legendre(npts, gamma_i, 1.0)
    P = legendre_all(n_max, t)
    return 2.0 * np.pi * P @ (w * cap_profile_L(gamma_i, k_exp, t))


@dataclass(frozen=True)
class KernelSystem:
    """Abel-Poisson translates ``K_g(x/|x| . x_m)`` on the sphere of radius ``sphere_radius``."""

    gamma: float
    centers: np.ndarray
    sphere_radius: float = 1.0

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if c.shape[1] != 3 or np.any(np.abs(np.linalg.norm(c, axis=1) - 1.0) > 1e-12):
            raise ValueError("centers must be unit vectors")
        if self.sphere_radius <= 0:
            raise ValueError("sphere radius must be positive")
        object.__setattr__(self, "centers", c)

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    def cosines(self, dirs) -> np.ndarray:
        """``(N, M)`` array of ``dir . x_m``."""
        return np.clip(np.asarray(dirs) @ self.centers.T, -1.0, 1.0)

    def evaluate(self, dirs) -> np.ndarray:
        return abel_poisson(self.gamma, self.cosines(dirs))

    def frame_fields(self, dirs, frame: str) -> np.ndarray:
        """``o^(i) K_m`` at unit directions, shape ``(N, M, 3)``.

        ``normal``: ``nu K``; ``grad``: ``K'(t)(x_m - t nu)``; ``curl``: ``K'(t) nu x x_m``.
        """
        d = np.asarray(dirs, dtype=float)
        t = self.cosines(d)
        if frame == "normal":
            return abel_poisson(self.gamma, t)[:, :, None] * d[:, None, :]
        dk = abel_poisson(self.gamma, t, 1)[:, :, None]
        if frame == "grad":
            return dk * (self.centers[None, :, :] - t[:, :, None] * d[:, None, :])
        if frame == "curl":
            return dk * np.cross(d[:, None, :], self.centers[None, :, :])
        raise ValueError(f"unknown frame {frame!r}")


@dataclass(frozen=True)
class SobolevSpec:
    order: int
    radius: float

    def __post_init__(self):
        if self.order not in (0, 1, 2):
            raise ValueError("Sobolev order must be 0, 1 or 2")
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def multiplier(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        return (1.0 + n * (n + 1.0) / self.radius**2) ** self.order


def _beltrami_chain(derivs, t, times: int):
    """Apply ``D = -Delta*`` ``times`` times to a zonal function given by its derivatives.

    ``derivs[i]`` holds the i-th t-derivative; ``2*times`` extra orders are needed.
    """
    cur = list(derivs)
    for _ in range(times):
        nxt = []
        for i in range(len(cur) - 2):
            lap = (1.0 - t * t) * cur[i + 2] - 2.0 * (i + 1) * t * cur[i + 1] - i * (i + 1) * cur[i]
            nxt.append(-lap)
        cur = nxt
    return cur[0]


def zonal_gram_closed(gamma: float, sob: SobolevSpec, t, frame: str = "scalar"):
    """Closed-form Gram entries ``<o K_m, o K_n>_{W^{s,2}(S_R)}`` as a function of ``t``.

    ``frame`` is ``scalar`` (or ``normal``) for the plain kernel, or ``grad`` /
    ``curl`` for the surface gradient / surface curl translates.
    """
    t = _check_t(t)
    g2 = gamma * gamma
    extra = 1 if frame in ("grad", "curl") else 0
    if frame not in ("scalar", "normal", "grad", "curl"):
        raise ValueError(f"unknown frame {frame!r}")
    R2 = sob.radius**2
    nd = 2 * (sob.order + extra) + 1
    derivs = [abel_poisson(g2, t, j) for j in range(nd)]
    # (1 + D/R^2)^s D^extra
    binom = {0: [1.0], 1: [1.0, 1.0], 2: [1.0, 2.0, 1.0]}[sob.order]
    out = np.zeros_like(t)
    for j, c in enumerate(binom):
        out = out + c / R2**j * _beltrami_chain(derivs, t, j + extra)
    return R2 * out


def zonal_series(symbol, t, radius: float = 1.0, rtol: float = SERIES_RTOL):
    """``R^2 sum_n symbol[n] (2n+1)/(4 pi) P_n(t)`` with tail truncation.

    Terms stop once ``|symbol[n]| (2n+1)`` drops below ``rtol`` times the
    value of the partial sum at ``t = 1`` (an upper bound for ``|P_n| <= 1``).
    """
    t = _check_t(t)
    c = np.asarray(symbol, dtype=float) * (2.0 * np.arange(len(symbol)) + 1.0) / (4.0 * np.pi)
    total = np.cumsum(np.abs(c))
    stop = len(c)
    for n in range(1, len(c)):
        if abs(c[n]) < rtol * total[n] and np.all(np.abs(c[n:min(len(c), n + 8)]) < rtol * total[n]):
            stop = n
            break
    out = np.zeros_like(t)
    p_prev, p = np.ones_like(t), t.copy()
    out += c[0]
    if stop > 1:
        out += c[1] * p
    for n in range(2, stop):
        p_prev, p = p, ((2 * n - 1) * t * p - (n - 1) * p_prev) / n
        out += c[n] * p
    return radius**2 * out


def gram_symbol(gamma: float, sob: SobolevSpec, n_max: int, frame: str = "scalar") -> np.ndarray:
    n = np.arange(n_max + 1, dtype=float)
    sym = gamma ** (2 * n) * sob.multiplier(n)
    if frame in ("grad", "curl"):
        sym = sym * n * (n + 1.0)
    return sym


def zonal_gram_series(gamma: float, sob: SobolevSpec, t, frame: str = "scalar", n_max: int | None = None):
    if n_max is None:
        n_max = int(np.ceil(np.log(1e-18) / (2.0 * np.log(gamma)))) + 40
    return zonal_series(gram_symbol(gamma, sob, n_max, frame), t, sob.radius)


def kernel_gram(sys: KernelSystem, sob: SobolevSpec, m: int, n: int, frame: str = "scalar",
                method: str = "closed") -> float:
    """Single Gram entry between translates ``m`` and ``n``."""
    t = float(np.clip(sys.centers[m] @ sys.centers[n], -1.0, 1.0))
    return float(gram_matrix(sys, sob, frame, method, _t=np.array([[t]]))[0, 0])


def gram_matrix(sys: KernelSystem, sob: SobolevSpec, frame: str = "scalar",
                method: str = "closed", _t=None) -> np.ndarray:
    """Gram matrix of all translates, closed form (default) or truncated series."""
    t = sys.cosines(sys.centers) if _t is None else _t
    if method == "closed":
        return zonal_gram_closed(sys.gamma, sob, t, frame)
    if method == "series":
        return zonal_gram_series(sys.gamma, sob, t, frame)
    raise ValueError(f"unknown method {method!r}")
