"""Compiled inner loops of the splitting integrator.

Every sub-step is the exact flow of one term of the Hamiltonian, so spin norms
are preserved by construction and each flow conserves whatever symmetry its
term has.  The pseudo-dipolar bond flow moves spins and momenta together with
positions frozen; because ``s_i . u`` and ``s_j . u`` are constants of that
flow it can be written in closed form.
"""

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _cos_sin(th):
    # 1 - cos from the half angle; forming it as 1.0 - cos(th) rounds the
    # same way every step and the spin norms drift linearly
    sh = np.sin(0.5 * th)
    omc = 2.0 * sh * sh
    return 1.0 - omc, np.sin(th), omc


@njit(cache=True, inline="always")
def _rotate(v0, v1, v2, k0, k1, k2, s, omc):
    # Rodrigues: v + sin (k x v) + (1 - cos) k x (k x v), k a unit axis
    kv = k0 * v0 + k1 * v1 + k2 * v2
    x0 = k1 * v2 - k2 * v1
    x1 = k2 * v0 - k0 * v2
    x2 = k0 * v1 - k1 * v0
    return (v0 + x0 * s + (k0 * kv - v0) * omc,
            v1 + x1 * s + (k1 * kv - v1) * omc,
            v2 + x2 * s + (k2 * kv - v2) * omc)


@njit(cache=True)
def zeeman_flow(spins, b, h):
    bm = np.sqrt(b[0] * b[0] + b[1] * b[1] + b[2] * b[2])
    if bm == 0.0:
        return
    k0, k1, k2 = b[0] / bm, b[1] / bm, b[2] / bm
    _, s, omc = _cos_sin(-bm * h)
    for i in range(spins.shape[0]):
        a0, a1, a2 = _rotate(spins[i, 0], spins[i, 1], spins[i, 2], k0, k1, k2, s, omc)
        spins[i, 0], spins[i, 1], spins[i, 2] = a0, a1, a2


@njit(cache=True)
def exchange_pair_flow(spins, i, j, eps_j, h):
    # H = -eps_j s_i.s_j: both spins rotate about their (conserved) sum
    s0 = spins[i, 0] + spins[j, 0]
    s1 = spins[i, 1] + spins[j, 1]
    s2 = spins[i, 2] + spins[j, 2]
    sm = np.sqrt(s0 * s0 + s1 * s1 + s2 * s2)
    if sm == 0.0:
        return
    _, s, omc = _cos_sin(-eps_j * sm * h)
    k0, k1, k2 = s0 / sm, s1 / sm, s2 / sm
    for a in (i, j):
        r0, r1, r2 = _rotate(spins[a, 0], spins[a, 1], spins[a, 2], k0, k1, k2, s, omc)
        spins[a, 0], spins[a, 1], spins[a, 2] = r0, r1, r2


@njit(cache=True, inline="always")
def _trig(th):
    # sin, 1 - cos, sin(th)/th and (1 - cos(th))/th with a series near zero
    _, s, omc = _cos_sin(th)
    if abs(th) < 1e-4:
        t2 = th * th
        return s, omc, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, th * (0.5 - t2 / 24.0 + t2 * t2 / 720.0)
    return s, omc, s / th, omc / th


@njit(cache=True)
def pd_bond_flow(spins, pos, mom, i, j, c_spin, eps_c, h):
    """Exact flow of ``-2 c_spin (s_i.u)(u.s_j)`` for bond (i, j), positions fixed."""
    d0 = pos[j, 0] - pos[i, 0]
    d1 = pos[j, 1] - pos[i, 1]
    d2 = pos[j, 2] - pos[i, 2]
    dl = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
    u0, u1, u2 = d0 / dl, d1 / dl, d2 / dl
    ai = u0 * spins[i, 0] + u1 * spins[i, 1] + u2 * spins[i, 2]
    aj = u0 * spins[j, 0] + u1 * spins[j, 1] + u2 * spins[j, 2]
    # s_i turns about u at rate -2 c_spin a_j, s_j at rate -2 c_spin a_i
    th_i = -2.0 * c_spin * aj * h
    th_j = -2.0 * c_spin * ai * h

    # perpendicular parts at the start of the flow
    pi0 = spins[i, 0] - ai * u0
    pi1 = spins[i, 1] - ai * u1
    pi2 = spins[i, 2] - ai * u2
    pj0 = spins[j, 0] - aj * u0
    pj1 = spins[j, 1] - aj * u1
    pj2 = spins[j, 2] - aj * u2

    # time integrals of the rotating perpendicular parts, divided by h
    sin_i, omc_i, si, ci = _trig(th_i)
    sin_j, omc_j, sj, cj = _trig(th_j)
    qi0 = pi0 * si + (u1 * pi2 - u2 * pi1) * ci
    qi1 = pi1 * si + (u2 * pi0 - u0 * pi2) * ci
    qi2 = pi2 * si + (u0 * pi1 - u1 * pi0) * ci
    qj0 = pj0 * sj + (u1 * pj2 - u2 * pj1) * cj
    qj1 = pj1 * sj + (u2 * pj0 - u0 * pj2) * cj
    qj2 = pj2 * sj + (u0 * pj1 - u1 * pj0) * cj

    f = 2.0 * eps_c * h / dl
    g0 = f * (ai * qj0 + aj * qi0)
    g1 = f * (ai * qj1 + aj * qi1)
    g2 = f * (ai * qj2 + aj * qi2)
    mom[j, 0] += g0
    mom[j, 1] += g1
    mom[j, 2] += g2
    mom[i, 0] -= g0
    mom[i, 1] -= g1
    mom[i, 2] -= g2

    r0, r1, r2 = _rotate(spins[i, 0], spins[i, 1], spins[i, 2], u0, u1, u2, sin_i, omc_i)
    spins[i, 0], spins[i, 1], spins[i, 2] = r0, r1, r2
    r0, r1, r2 = _rotate(spins[j, 0], spins[j, 1], spins[j, 2], u0, u1, u2, sin_j, omc_j)
    spins[j, 0], spins[j, 1], spins[j, 2] = r0, r1, r2


@njit(cache=True)
def harmonic_kick(pos, mom, k_harm, h):
    n = pos.shape[0]
    for i in range(n - 1):
        d0 = pos[i + 1, 0] - pos[i, 0]
        d1 = pos[i + 1, 1] - pos[i, 1]
        d2 = pos[i + 1, 2] - pos[i, 2]
        dl = np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        f = -k_harm * (dl - 1.0) / dl * h
        mom[i + 1, 0] += f * d0
        mom[i + 1, 1] += f * d1
        mom[i + 1, 2] += f * d2
        mom[i, 0] -= f * d0
        mom[i, 1] -= f * d1
        mom[i, 2] -= f * d2


@njit(cache=True)
def drift(pos, mom, h):
    for i in range(pos.shape[0]):
        for a in range(3):
            pos[i, a] += mom[i, a] * h


@njit(cache=True)
def _exchange_sweep(spins, eps_j, h, parity):
    n = spins.shape[0]
    for i in range(parity, n - 1, 2):
        exchange_pair_flow(spins, i, i + 1, eps_j, h)


@njit(cache=True)
def _pd_sweep(spins, pos, mom, c_spin, eps_c, h, parity):
    n = spins.shape[0]
    for i in range(parity, n - 1, 2):
        pd_bond_flow(spins, pos, mom, i, i + 1, c_spin, eps_c, h)


@njit(cache=True)
def _renormalize(spins):
    # every flow is an exact rotation, so this only strips rounding bias
    for i in range(spins.shape[0]):
        r = 1.0 / np.sqrt(spins[i, 0] ** 2 + spins[i, 1] ** 2 + spins[i, 2] ** 2)
        spins[i, 0] *= r
        spins[i, 1] *= r
        spins[i, 2] *= r


@njit(cache=True)
def advance(spins, pos, mom, fields, h, eps_j, c_spin, eps_c, k_harm):
    """Take ``len(fields)`` palindromic steps of size ``h`` in place.

    One step (each factor an exact flow)::

        Xe/2 Xo/2 K/2 D/2 Z/2 Pe/2 Po Pe/2 Z/2 D/2 K/2 Xo/2 Xe/2

    K harmonic kick, D drift, Z Zeeman, X exchange, P pseudo-dipolar, e/o the
    even/odd bond sub-lattices.  Exchange commutes with K, D and Z, so the
    trailing Xe/2 of a step is merged with the leading one of the next.
    ``fields[k]`` is the field vector at the midpoint of step k.
    """
    hh = 0.5 * h
    n = fields.shape[0]
    if eps_j != 0.0 and n > 0:
        _exchange_sweep(spins, eps_j, hh, 0)
    for k in range(n):
        b = fields[k]
        if eps_j != 0.0:
            _exchange_sweep(spins, eps_j, hh, 1)
        harmonic_kick(pos, mom, k_harm, hh)
        drift(pos, mom, hh)
        zeeman_flow(spins, b, hh)
        if eps_c != 0.0:
            _pd_sweep(spins, pos, mom, c_spin, eps_c, hh, 0)
            _pd_sweep(spins, pos, mom, c_spin, eps_c, h, 1)
            _pd_sweep(spins, pos, mom, c_spin, eps_c, hh, 0)
        zeeman_flow(spins, b, hh)
        drift(pos, mom, hh)
        harmonic_kick(pos, mom, k_harm, hh)
        if eps_j != 0.0:
            _exchange_sweep(spins, eps_j, hh, 1)
            _exchange_sweep(spins, eps_j, h if k < n - 1 else hh, 0)
        _renormalize(spins)
