"""Noise-free comparison of stair-scheduled heavy-ball and decaying-step SGD.

Propagates the mean error of both recursions exactly (no sampling) and prints
the largest dB gap between their squared mean errors, for a few step sizes.
The gap is a transient effect that shrinks with the step size.
"""

import numpy as np

from momentum_equiv.optimizers import BetaStairSchedule, DecayingStepScale
from momentum_equiv.problems import lms_problem


def mean_gap(mu, stair, steps):
    spec = lms_problem()
    lam, e0 = spec.r_u_diag, spec.w_star
    scale = DecayingStepScale(stair)
    es = e0 - mu * lam * e0
    em_prev, em = e0, e0 - mu * lam * e0
    gap = 0.0
    for i in range(1, steps):
        es = es - mu * scale(i) * lam * es
        em, em_prev = em - mu * lam * em + stair(i) * (em - em_prev), em
        gap = max(gap, abs(10 * np.log10(np.sum(em**2) / np.sum(es**2))))
    return gap


def main():
    stair = BetaStairSchedule(0.9, 100, 0.3)
    for mu in (3e-3, 1e-3, 3e-4, 1e-4):
        print(f"mu_m = {mu:.0e}: max mean-error gap {mean_gap(mu, stair, 3000):.3f} dB")


if __name__ == "__main__":
    main()
