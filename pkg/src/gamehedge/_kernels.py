"""Numba kernels for the wealth-grid backward induction.

The objective scanned here is

    I(y, z) = min(A(y), max(B(y), sum_k p_k * Jnext_k(y + z * u_k * kappa)))

with A/B the upper/lower payoff losses at the node. Next-layer values come
either from a piecewise-linear grid (interior layers) or from the closed-form
terminal payoff loss, which keeps the last induction step free of
interpolation error.
"""

import numpy as np
from numba import njit, prange

# Relative tolerance for "attains the minimum" when picking the smallest
# minimizer; backward induction values are floating point.
TIE_TOL = 1e-12


@njit(cache=True, inline="always")
def _pow_loss(d, p):
    if d <= 0.0:
        return 0.0
    if p == 1.0:
        return d
    if p == 2.0:
        return 0.5 * d * d
    return d ** p / p


@njit(cache=True, inline="always")
def _objective(y, z, mu, pw, terminal, u_next, j_next, inv_h, last, a_cap, b_floor, p):
    acc = 0.0
    for k in range(mu.shape[0]):
        q = y + z * mu[k]
        if q < 0.0:
            # admissible positions keep q >= 0 up to rounding at the corners
            q = 0.0
        if terminal:
            acc += pw[k] * _pow_loss(u_next[k] - q, p)
        else:
            pos = q * inv_h
            if pos >= last:
                acc += pw[k] * j_next[k, last]
            else:
                i = int(pos)
                frac = pos - i
                acc += pw[k] * (j_next[k, i] + frac * (j_next[k, i + 1] - j_next[k, i]))
    if acc < b_floor:
        acc = b_floor
    if acc > a_cap:
        acc = a_cap
    return acc


@njit(cache=True, parallel=True)
def scan_minimize(Y, A, B, kb, ka, mu, pw, terminal, u_next, j_next, inv_h, last, p,
                  n_scan, n_ref, rounds, out_j, out_lam):
    """Smallest-minimizer scan of I over [-y/kb, -y/ka], one cell per wealth.

    kb = kappa * b > 0 and ka = kappa * a < 0 define the admissible interval.
    Each cell writes only its own slots, so the parallel schedule cannot
    change the output.
    """
    for iy in prange(Y.shape[0]):
        y = Y[iy]
        a_cap = A[iy]
        b_floor = B[iy]
        lo = (-y / kb) + 0.0
        hi = (-y / ka) + 0.0

        if b_floor >= a_cap:
            # clamp collapse: I == A for every position, so the smallest
            # minimizer is the interval's lower endpoint
            out_j[iy] = a_cap
            out_lam[iy] = lo
            continue

        if hi <= lo:
            # zero wealth: the only admissible position is 0
            out_j[iy] = _objective(y, lo, mu, pw, terminal, u_next, j_next,
                                   inv_h, last, a_cap, b_floor, p)
            out_lam[iy] = lo
            continue

        step = (hi - lo) / n_scan
        vals = np.empty(n_scan + 1)
        best_v = np.inf
        for j in range(n_scan + 1):
            z = hi if j == n_scan else lo + step * j
            v = _objective(y, z, mu, pw, terminal, u_next, j_next,
                           inv_h, last, a_cap, b_floor, p)
            vals[j] = v
            if v < best_v:
                best_v = v
        tol = TIE_TOL * (1.0 + abs(best_v))
        jstar = n_scan
        for j in range(n_scan + 1):
            if vals[j] <= best_v + tol:
                jstar = j
                break
        best_z = hi if jstar == n_scan else lo + step * jstar
        champ_v = vals[jstar]

        # refine around the left edge of the minimizing set
        half = step
        rvals = np.empty(n_ref + 1)
        for _ in range(rounds):
            if half <= 1e-15 * (1.0 + abs(best_z)):
                break
            blo = best_z - half
            if blo < lo:
                blo = lo
            bhi = best_z + half
            if bhi > hi:
                bhi = hi
            rstep = (bhi - blo) / n_ref
            rbest = np.inf
            for j in range(n_ref + 1):
                z = bhi if j == n_ref else blo + rstep * j
                v = _objective(y, z, mu, pw, terminal, u_next, j_next,
                               inv_h, last, a_cap, b_floor, p)
                rvals[j] = v
                if v < rbest:
                    rbest = v
            if rbest < best_v:
                best_v = rbest
            tol = TIE_TOL * (1.0 + abs(best_v))
            rj = -1
            for j in range(n_ref + 1):
                if rvals[j] <= best_v + tol:
                    rj = j
                    break
            if rj >= 0:
                z_rj = bhi if rj == n_ref else blo + rstep * rj
                if champ_v > best_v + tol or z_rj < best_z:
                    best_z = z_rj
                    champ_v = rvals[rj]
            half = rstep

        out_j[iy] = best_v
        out_lam[iy] = best_z


@njit(cache=True)
def interp_grid(q, values, inv_h, last):
    """Piecewise-linear read of grid values at nonnegative query points."""
    out = np.empty(q.shape[0])
    for i in range(q.shape[0]):
        pos = q[i] * inv_h
        if pos <= 0.0:
            out[i] = values[0]
        elif pos >= last:
            out[i] = values[last]
        else:
            j = int(pos)
            frac = pos - j
            out[i] = values[j] + frac * (values[j + 1] - values[j])
    return out
