"""Direct pair sums between target points and weighted source samples.

Single-field sums run as compiled loops; batches of fields go through chunked
kernel matrices and BLAS.
"""

import numpy as np
from numba import njit

CHUNK_ENTRIES = 2_000_000


@njit(cache=True)
def dipole_potential(X, Y, Mw):
    """sum_j Mw_j . (x - y_j) / |x - y_j|^3"""
    out = np.zeros(X.shape[0])
    for i in range(X.shape[0]):
        x0, x1, x2 = X[i, 0], X[i, 1], X[i, 2]
        acc = 0.0
        for j in range(Y.shape[0]):
            d0 = x0 - Y[j, 0]
            d1 = x1 - Y[j, 1]
            d2 = x2 - Y[j, 2]
            r2 = d0 * d0 + d1 * d1 + d2 * d2
            acc += (Mw[j, 0] * d0 + Mw[j, 1] * d1 + Mw[j, 2] * d2) / (r2 * np.sqrt(r2))
        out[i] = acc
    return out


@njit(cache=True)
def dipole_field(X, Y, Mw):
    """Gradient in x of ``dipole_potential``."""
    out = np.zeros((X.shape[0], 3))
    for i in range(X.shape[0]):
        x0, x1, x2 = X[i, 0], X[i, 1], X[i, 2]
        a0 = a1 = a2 = 0.0
        for j in range(Y.shape[0]):
            d0 = x0 - Y[j, 0]
            d1 = x1 - Y[j, 1]
            d2 = x2 - Y[j, 2]
            r2 = d0 * d0 + d1 * d1 + d2 * d2
            ir3 = 1.0 / (r2 * np.sqrt(r2))
            md = 3.0 * (Mw[j, 0] * d0 + Mw[j, 1] * d1 + Mw[j, 2] * d2) * ir3 / r2
            a0 += Mw[j, 0] * ir3 - md * d0
            a1 += Mw[j, 1] * ir3 - md * d1
            a2 += Mw[j, 2] * ir3 - md * d2
        out[i, 0] = a0
        out[i, 1] = a1
        out[i, 2] = a2
    return out


@njit(cache=True)
def inv_r3_sum(X, Y, qw):
    """sum_j qw_j / |x - y_j|^3"""
    out = np.zeros(X.shape[0])
    for i in range(X.shape[0]):
        x0, x1, x2 = X[i, 0], X[i, 1], X[i, 2]
        acc = 0.0
        for j in range(Y.shape[0]):
            d0 = x0 - Y[j, 0]
            d1 = x1 - Y[j, 1]
            d2 = x2 - Y[j, 2]
            r2 = d0 * d0 + d1 * d1 + d2 * d2
            acc += qw[j] / (r2 * np.sqrt(r2))
        out[i] = acc
    return out


@njit(cache=True)
def inv_r_sum(X, Y, qw):
    """sum_j qw_j / |x - y_j|"""
    out = np.zeros(X.shape[0])
    for i in range(X.shape[0]):
        x0, x1, x2 = X[i, 0], X[i, 1], X[i, 2]
        acc = 0.0
        for j in range(Y.shape[0]):
            d0 = x0 - Y[j, 0]
            d1 = x1 - Y[j, 1]
            d2 = x2 - Y[j, 2]
            acc += qw[j] / np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        out[i] = acc
    return out


@njit(cache=True)
def diff_r3_sum(X, Y, qw):
    """sum_j qw_j (x - y_j) / |x - y_j|^3, and sum_j qw_j (x - y_j) / |x - y_j|^5."""
    out3 = np.zeros((X.shape[0], 3))
    out5 = np.zeros((X.shape[0], 3))
    s3 = np.zeros(X.shape[0])
    for i in range(X.shape[0]):
        x0, x1, x2 = X[i, 0], X[i, 1], X[i, 2]
        a0 = a1 = a2 = b0 = b1 = b2 = c = 0.0
        for j in range(Y.shape[0]):
            d0 = x0 - Y[j, 0]
            d1 = x1 - Y[j, 1]
            d2 = x2 - Y[j, 2]
            r2 = d0 * d0 + d1 * d1 + d2 * d2
            q3 = qw[j] / (r2 * np.sqrt(r2))
            q5 = q3 / r2
            a0 += q3 * d0
            a1 += q3 * d1
            a2 += q3 * d2
            b0 += q5 * d0
            b1 += q5 * d1
            b2 += q5 * d2
            c += q3
        out3[i, 0] = a0
        out3[i, 1] = a1
        out3[i, 2] = a2
        out5[i, 0] = b0
        out5[i, 1] = b1
        out5[i, 2] = b2
        s3[i] = c
    return out3, out5, s3


def _chunks(n_targets, n_sources):
    step = max(1, CHUNK_ENTRIES // max(n_sources, 1))
    for start in range(0, n_targets, step):
        yield slice(start, min(start + step, n_targets))


def _diff(X, Y):
    d = X[:, None, :] - Y[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    return d, r2


def dipole_potential_batch(X, Y, Mw):
    """``Mw`` of shape (S, 3, F); returns (T, F)."""
    out = np.empty((X.shape[0], Mw.shape[2]))
    for sl in _chunks(X.shape[0], Y.shape[0]):
        d, r2 = _diff(X[sl], Y)
        ir3 = r2 ** -1.5
        acc = (d[:, :, 0] * ir3) @ Mw[:, 0, :]
        acc += (d[:, :, 1] * ir3) @ Mw[:, 1, :]
        acc += (d[:, :, 2] * ir3) @ Mw[:, 2, :]
        out[sl] = acc
    return out


def inv_r3_batch(X, Y, Qw):
    """``Qw`` of shape (S, F); returns (T, F) of sum_j Qw_jf / |x - y_j|^3."""
    out = np.empty((X.shape[0], Qw.shape[1]))
    for sl in _chunks(X.shape[0], Y.shape[0]):
        _, r2 = _diff(X[sl], Y)
        out[sl] = (r2 ** -1.5) @ Qw
    return out


def diff_r3_batch(X, Y, Qw):
    """``Qw`` of shape (S, F); returns (T, 3, F) of sum_j Qw_jf (x - y_j) / |x - y_j|^3."""
    out = np.empty((X.shape[0], 3, Qw.shape[1]))
    for sl in _chunks(X.shape[0], Y.shape[0]):
        d, r2 = _diff(X[sl], Y)
        ir3 = r2 ** -1.5
        for c in range(3):
            out[sl, c, :] = (d[:, :, c] * ir3) @ Qw
    return out



def inv_r3_extended(X, Y, Qw):
    """``inv_r3_batch`` carried out entirely in extended precision."""
    X = np.asarray(X, dtype=np.longdouble)
    Y = np.asarray(Y, dtype=np.longdouble)
    Qw = np.asarray(Qw, dtype=np.longdouble)
    out = np.empty((X.shape[0], Qw.shape[1]), dtype=np.longdouble)
    for sl in _chunks(X.shape[0], Y.shape[0]):
        d = X[sl, None, :] - Y[None, :, :]
        r2 = (d * d).sum(axis=2)
        out[sl] = np.einsum("ts,sf->tf", 1 / (r2 * np.sqrt(r2)), Qw)
    return out
