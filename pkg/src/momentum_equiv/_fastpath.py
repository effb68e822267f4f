"""Compiled inner loop for the Monte Carlo engine.

Implements exactly the recursions of :mod:`momentum_equiv.optimizers` for a
batch of trials and a chunk of samples, accumulating the same statistics as
the reference numpy engine.  Results agree with the numpy path to rounding
(summation order differs); each path is deterministic on its own.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

SGD, MOMENTUM = 0, 1
QUADRATIC, LOGISTIC = 0, 1


@njit(cache=True)
def _grad(kind, rho, a, yv, x, g):
    m = a.shape[0]
    s = 0.0
    for c in range(m):
        s += a[c] * x[c]
    if kind == QUADRATIC:
        e = yv - s
        for c in range(m):
            g[c] = -a[c] * e
    else:
        margin = yv * s
        if margin > 0:
            t = math.exp(-margin)
            f = yv * t / (1.0 + t)
        else:
            f = yv / (1.0 + math.exp(margin))
        for c in range(m):
            g[c] = rho * x[c] - f * a[c]


@njit(cache=True)
def advance(
    kind, rho, A, y, k0,
    alg_type, sgd_mu, mom_step, b1, b2,
    X, Wp, Pp,
    need_star, w_star, want_msd, want_m4, transformed, beta_t,
    sums, diff, da, db,
    track_div, limit, diverged, last_sq,
):
    n_alg = alg_type.shape[0]
    nb, n, m = A.shape
    g = np.empty(m)
    psi = np.empty(m)
    for j in range(n):
        k = k0 + j
        for a in range(n_alg):
            for t in range(nb):
                x = X[a, t]
                if alg_type[a] == SGD:
                    _grad(kind, rho, A[t, j], y[t, j], x, g)
                    for c in range(m):
                        x[c] = x[c] - sgd_mu[a, j, c] * g[c]
                elif k == 0:
                    _grad(kind, rho, A[t, j], y[t, j], x, g)
                    for c in range(m):
                        Wp[a, t, c] = x[c]
                        Pp[a, t, c] = x[c]
                        x[c] = x[c] - mom_step[a, c] * g[c]
                else:
                    for c in range(m):
                        psi[c] = x[c] + b1[a, j, c] * (x[c] - Wp[a, t, c])
                    _grad(kind, rho, A[t, j], y[t, j], psi, g)
                    for c in range(m):
                        new = psi[c] - mom_step[a, c] * g[c] + b2[a, j, c] * (psi[c] - Pp[a, t, c])
                        Pp[a, t, c] = psi[c]
                        Wp[a, t, c] = x[c]
                        x[c] = new
                if need_star:
                    sq = 0.0
                    for c in range(m):
                        e = w_star[t, c] - x[c]
                        sq += e * e
                    if want_msd:
                        sums[a, 0, j] += sq
                    if want_m4:
                        sums[a, 1, j] += sq * sq
                    if transformed[a]:
                        hat = 0.0
                        check = 0.0
                        for c in range(m):
                            e = w_star[t, c] - x[c]
                            ep = w_star[t, c] - Wp[a, t, c]
                            s = 1.0 / (1.0 - beta_t[a, c])
                            h = s * (e - beta_t[a, c] * ep)
                            v = s * (e - ep)
                            hat += h * h
                            check += v * v
                        sums[a, 2, j] += hat
                        sums[a, 3, j] += check
                    if track_div:
                        if not (sq <= limit[t]):
                            diverged[a, t] = True
                    last_sq[a, t] = sq
        if da >= 0:
            for t in range(nb):
                s = 0.0
                for c in range(m):
                    d = X[da, t, c] - X[db, t, c]
                    s += d * d
                diff[j] += s
