"""Compiled inner loop for the free-form terminal cost and its adjoint gradient."""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _rotation(bx, by, bz, dt, R, Rint):
    """Rotation exp(dt/2 [B]x) and its time integral over [0, dt]."""
    nb = math.sqrt(bx * bx + by * by + bz * bz)
    for i in range(3):
        for j in range(3):
            R[i, j] = 1.0 if i == j else 0.0
            Rint[i, j] = dt if i == j else 0.0
    if nb < 1e-300:
        return
    kx, ky, kz = bx / nb, by / nb, bz / nb
    w = 0.5 * nb
    sn, cs = math.sin(w * dt), math.cos(w * dt)
    a1 = (1.0 - cs) / w
    a2 = dt - sn / w
    b2 = 1.0 - cs
    # K = [k]x and K^2 = k k^T - I
    kv = (kx, ky, kz)
    K = ((0.0, -kz, ky), (kz, 0.0, -kx), (-ky, kx, 0.0))
    for i in range(3):
        for j in range(3):
            k2 = kv[i] * kv[j] - (1.0 if i == j else 0.0)
            R[i, j] += sn * K[i][j] + b2 * k2
            Rint[i, j] += a1 * K[i][j] + a2 * k2


@njit(cache=True)
def _forward_uniform(controls, T, R, Rint, r):
    n = controls.shape[0]
    dt = T / n
    for c in range(2):
        sign = 1.0 if c == 0 else -1.0
        r[c, 0, 0] = 0.0
        r[c, 0, 1] = 0.0
        r[c, 0, 2] = 1.0
        for k in range(n):
            _rotation(controls[k, 0], sign * controls[k, 1], controls[k, 2], dt, R[c, k], Rint[c, k])
            for i in range(3):
                r[c, k + 1, i] = R[c, k, i, 0] * r[c, k, 0] + R[c, k, i, 1] * r[c, k, 1] + R[c, k, i, 2] * r[c, k, 2]


@njit(cache=True)
def _adjoint_pass(R, Rint, r, c, lam_T, grad):
    n = grad.shape[0]
    sign = 1.0 if c == 0 else -1.0
    lam = lam_T.copy()
    tmp = np.zeros(3)
    L0 = np.zeros(3)
    for k in range(n - 1, -1, -1):
        for i in range(3):
            tmp[i] = R[c, k, 0, i] * lam[0] + R[c, k, 1, i] * lam[1] + R[c, k, 2, i] * lam[2]
        lam[:] = tmp
        L0[0] = r[c, k, 1] * lam[2] - r[c, k, 2] * lam[1]
        L0[1] = r[c, k, 2] * lam[0] - r[c, k, 0] * lam[2]
        L0[2] = r[c, k, 0] * lam[1] - r[c, k, 1] * lam[0]
        for i in range(3):
            li = Rint[c, k, i, 0] * L0[0] + Rint[c, k, i, 1] * L0[1] + Rint[c, k, i, 2] * L0[2]
            if i == 1:
                li *= sign
            grad[k, i] += 0.5 * li


@njit(cache=True)
def constraints_uniform(controls, T):
    """``(y_+, z_+, x_-)`` at ``T`` and their ``(3, n, 3)`` gradient in the controls."""
    n = controls.shape[0]
    R = np.empty((2, n, 3, 3))
    Rint = np.empty((2, n, 3, 3))
    r = np.zeros((2, n + 1, 3))
    _forward_uniform(controls, T, R, Rint, r)
    vals = np.array([r[0, n, 1], r[0, n, 2], r[1, n, 0]])
    jac = np.zeros((3, n, 3))
    _adjoint_pass(R, Rint, r, 0, np.array([0.0, 1.0, 0.0]), jac[0])
    _adjoint_pass(R, Rint, r, 0, np.array([0.0, 0.0, 1.0]), jac[1])
    _adjoint_pass(R, Rint, r, 1, np.array([1.0, 0.0, 0.0]), jac[2])
    return vals, jac


@njit(cache=True)
def cost_and_gradient_uniform(controls, T):
    """``J = (1 - x_+)^2 + x_-^2`` at ``T`` and its ``(n, 3)`` gradient."""
    n = controls.shape[0]
    R = np.empty((2, n, 3, 3))
    Rint = np.empty((2, n, 3, 3))
    r = np.zeros((2, n + 1, 3))
    _forward_uniform(controls, T, R, Rint, r)
    xp = r[0, n, 0]
    xm = r[1, n, 0]
    grad = np.zeros((n, 3))
    _adjoint_pass(R, Rint, r, 0, np.array([-2.0 * (1.0 - xp), 0.0, 0.0]), grad)
    _adjoint_pass(R, Rint, r, 1, np.array([2.0 * xm, 0.0, 0.0]), grad)
    return (1.0 - xp) ** 2 + xm * xm, grad
