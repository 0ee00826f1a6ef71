"""Compiled inner loop of the best-reply scan."""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def score_candidates(levels, max_power, serving_local, g_serv, g_intra, denom0, weights,
                     w_unserved, abar_c, alpha, beta, gamma_min, xi, delta, u_set, pc_set,
                     payoff, util, cost, totals):
    """Payoff terms of every level vector, enumerated first-location-most-significant."""
    n_loc = max_power.shape[0]
    n_tiles = serving_local.shape[0]
    n_lev = levels.shape[0]
    sig0 = 1.0 / (1.0 + math.exp(alpha * beta))
    w = np.empty(n_loc)
    for i in range(payoff.shape[0]):
        r = i
        tot = 0.0
        pc = 0.0
        for l in range(n_loc - 1, -1, -1):
            w[l] = levels[r % n_lev] * max_power[l]
            r //= n_lev
            tot += w[l]
            pc += abar_c[l] * w[l]
        u = 0.0
        e = 0.0
        for z in range(n_tiles):
            s = w[serving_local[z]] * g_serv[z]
            if s == 0.0:
                u += weights[z] * sig0
                e += w_unserved[z]
                continue
            d = denom0[z]
            for l in range(n_loc):
                d += w[l] * g_intra[l, z]
            g = s / d
            u += weights[z] / (1.0 + math.exp(-alpha * (g - beta)))
            if g < gamma_min:
                e += w_unserved[z]
        util[i] = u_set + u
        cost[i] = pc_set + xi * pc + delta * e
        payoff[i] = util[i] - cost[i]
        totals[i] = tot
