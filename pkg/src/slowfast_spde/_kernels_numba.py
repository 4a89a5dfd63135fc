"""Numba lane of the hot kernels: explicit loops, one allocation-free sweep.

Summation order (sequential over grid nodes / modes) deliberately matches the
einsum reductions of the numpy lane so both lanes agree bitwise.
"""

import math

import numpy as np
from numba import njit

# catalog codes mirrored from reaction.py
_LINEAR_DAMPED = 0
_AFFINE_DAMPED = 1
_TANH_COUPLED = 2
_SATURATED_PRODUCT = 3
_IDENTITY_SLOW = 4
_FAST_VALUE = 5
_LINEAR_COMBO = 6
_SIN_PRODUCT = 7
_LINEAR_COUPLED = 8


@njit(cache=True, nogil=True)
def _value(code, a, b, c, s1, s2):
    if code == _LINEAR_DAMPED:
        return -a * s2
    if code == _AFFINE_DAMPED:
        return -a * s2 + c
    if code == _TANH_COUPLED:
        return -a * s2 + b * math.tanh(s1)
    if code == _SATURATED_PRODUCT:
        return -a * s2 + b * math.tanh(s1) * math.tanh(s2)
    if code == _IDENTITY_SLOW:
        return s1
    if code == _FAST_VALUE:
        return s2
    if code == _LINEAR_COMBO:
        return a * s1 + b * s2 + c
    if code == _SIN_PRODUCT:
        return a * math.sin(s1) * s2
    return -a * s2 + b * s1


@njit(cache=True, nogil=True)
def _logcosh(y):
    y = abs(y)
    return y + math.log1p(math.exp(-2.0 * y)) - math.log(2.0)


@njit(cache=True, nogil=True)
def _antiderivative(code, a, b, c, s1, y):
    if code == _LINEAR_DAMPED:
        return -0.5 * a * y * y
    if code == _AFFINE_DAMPED:
        return -0.5 * a * y * y + c * y
    if code == _TANH_COUPLED:
        return -0.5 * a * y * y + b * math.tanh(s1) * y
    if code == _SATURATED_PRODUCT:
        return -0.5 * a * y * y + b * math.tanh(s1) * _logcosh(y)
    if code == _IDENTITY_SLOW:
        return s1 * y
    if code == _FAST_VALUE:
        return 0.5 * y * y
    if code == _LINEAR_COMBO:
        return a * s1 * y + 0.5 * b * y * y + c * y
    if code == _SIN_PRODUCT:
        return 0.5 * a * math.sin(s1) * y * y
    return -0.5 * a * y * y + b * s1 * y


@njit(cache=True, nogil=True)
def ou_batch(decay, phi1, nsd, Ev, Av, x_grid, code, a, b, c, V0, Z, record_every, OUT):
    """Exact-OU / exponential-Euler stepping of the fast flow, batched over replicas."""
    n_rep, n_steps, n_modes = Z.shape
    n_nodes = x_grid.shape[0]
    vg = np.empty(n_nodes)
    v = np.empty(n_modes)
    drift = np.empty(n_modes)
    for r in range(n_rep):
        for k in range(n_modes):
            v[k] = V0[r, k]
            OUT[r, 0, k] = v[k]
        rec = 1
        for i in range(n_steps):
            for j in range(n_nodes):
                s = 0.0
                for k in range(n_modes):
                    s += Ev[j, k] * v[k]
                vg[j] = _value(code, a, b, c, x_grid[j], s)
            for k in range(n_modes):
                s = 0.0
                for j in range(n_nodes):
                    s += Av[k, j] * vg[j]
                drift[k] = s
            for k in range(n_modes):
                v[k] = decay[k] * v[k] + phi1[k] * drift[k] + nsd[k] * Z[r, i, k]
            if (i + 1) % record_every == 0:
                for k in range(n_modes):
                    OUT[r, rec, k] = v[k]
                rec += 1


@njit(cache=True, nogil=True)
def pcn_chain(Ey, wq, x_grid, code, a, b, c, y0, ref_sd, beta, Z, LOGU, OUT):
    """Preconditioned Crank-Nicolson sweep; records the state after every step.

    Returns the acceptance count.  LOGU holds pre-drawn log-uniforms.
    """
    n_steps, n_modes = Z.shape
    n_nodes = x_grid.shape[0]
    contract = math.sqrt(1.0 - beta * beta)
    y = np.empty(n_modes)
    yp = np.empty(n_modes)
    for k in range(n_modes):
        y[k] = y0[k]
    u_cur = 0.0
    for j in range(n_nodes):
        s = 0.0
        for k in range(n_modes):
            s += Ey[j, k] * y[k]
        u_cur += wq[j] * _antiderivative(code, a, b, c, x_grid[j], s)
    n_accept = 0
    for i in range(n_steps):
        for k in range(n_modes):
            yp[k] = contract * y[k] + beta * ref_sd[k] * Z[i, k]
        u_prop = 0.0
        for j in range(n_nodes):
            s = 0.0
            for k in range(n_modes):
                s += Ey[j, k] * yp[k]
            u_prop += wq[j] * _antiderivative(code, a, b, c, x_grid[j], s)
        du = 2.0 * (u_prop - u_cur)
        if du >= 0.0 or LOGU[i] < du:
            for k in range(n_modes):
                y[k] = yp[k]
            u_cur = u_prop
            n_accept += 1
        for k in range(n_modes):
            OUT[i, k] = y[k]
    return n_accept


@njit(cache=True, nogil=True)
def coupled_batch(
    fcode, fa, fb, fc, gcode, ga, gb, gc,
    decayA, phi1A, decayB, phi1B, nsdB,
    EuA, EvA, ATA, EuB, EvB, ATB,
    U0, V0, Z, m_micro, OUTU, OUTV,
):
    """Macro/micro stepping of the coupled slow-fast pair, batched over replicas.

    Per macro step: the slow drift F(u, v) is evaluated at the step start,
    the fast component advances m_micro exact-OU substeps with u frozen, then
    the slow component takes its exponential-Euler step.
    """
    n_rep = U0.shape[0]
    n_modes = U0.shape[1]
    n_macro = OUTU.shape[1] - 1
    na = EuA.shape[0]
    nb = EuB.shape[0]
    u = np.empty(n_modes)
    v = np.empty(n_modes)
    fvals = np.empty(na)
    gvals = np.empty(nb)
    ug_b = np.empty(nb)
    fdrift = np.empty(n_modes)
    gdrift = np.empty(n_modes)
    for r in range(n_rep):
        for k in range(n_modes):
            u[k] = U0[r, k]
            v[k] = V0[r, k]
            OUTU[r, 0, k] = u[k]
            OUTV[r, 0, k] = v[k]
        step = 0
        for n in range(n_macro):
            # slow drift from the macro-step-start states
            for j in range(na):
                su = 0.0
                sv = 0.0
                for k in range(n_modes):
                    su += EuA[j, k] * u[k]
                    sv += EvA[j, k] * v[k]
                fvals[j] = _value(fcode, fa, fb, fc, su, sv)
            for k in range(n_modes):
                s = 0.0
                for j in range(na):
                    s += ATA[k, j] * fvals[j]
                fdrift[k] = s
            # fast micro steps with u frozen
            for j in range(nb):
                s = 0.0
                for k in range(n_modes):
                    s += EuB[j, k] * u[k]
                ug_b[j] = s
            for m in range(m_micro):
                for j in range(nb):
                    s = 0.0
                    for k in range(n_modes):
                        s += EvB[j, k] * v[k]
                    gvals[j] = _value(gcode, ga, gb, gc, ug_b[j], s)
                for k in range(n_modes):
                    s = 0.0
                    for j in range(nb):
                        s += ATB[k, j] * gvals[j]
                    gdrift[k] = s
                for k in range(n_modes):
                    v[k] = decayB[k] * v[k] + phi1B[k] * gdrift[k] + nsdB[k] * Z[r, step, k]
                step += 1
            for k in range(n_modes):
                u[k] = decayA[k] * u[k] + phi1A[k] * fdrift[k]
                OUTU[r, n + 1, k] = u[k]
                OUTV[r, n + 1, k] = v[k]


@njit(cache=True, nogil=True)
def averaged_linear(
    fcode, fa, fb, fc, gcode, ga, gb, gc, g_slope,
    decayA, phi1A, alphaB,
    EuA, ATA, EuB, ATB, EmA,
    u0, n_steps, OUT,
):
    """Deterministic averaged path when g is linear in sigma2.

    The invariant mean solves (alpha_k + g_slope) m_k = <g(u, 0), e_k>, and
    the averaged drift is f(u, m) pointwise.  The slow update mirrors
    coupled_batch exactly so sigma2-independent f gives bitwise-equal paths.
    """
    n_modes = u0.shape[0]
    na = EuA.shape[0]
    nb = EuB.shape[0]
    u = np.empty(n_modes)
    m = np.empty(n_modes)
    fvals = np.empty(na)
    hvals = np.empty(nb)
    fdrift = np.empty(n_modes)
    for k in range(n_modes):
        u[k] = u0[k]
        OUT[0, k] = u[k]
    for n in range(n_steps):
        for j in range(nb):
            s = 0.0
            for k in range(n_modes):
                s += EuB[j, k] * u[k]
            hvals[j] = _value(gcode, ga, gb, gc, s, 0.0)
        for k in range(n_modes):
            s = 0.0
            for j in range(nb):
                s += ATB[k, j] * hvals[j]
            m[k] = s / (alphaB[k] + g_slope)
        for j in range(na):
            su = 0.0
            sm = 0.0
            for k in range(n_modes):
                su += EuA[j, k] * u[k]
                sm += EmA[j, k] * m[k]
            fvals[j] = _value(fcode, fa, fb, fc, su, sm)
        for k in range(n_modes):
            s = 0.0
            for j in range(na):
                s += ATA[k, j] * fvals[j]
            fdrift[k] = s
        for k in range(n_modes):
            u[k] = decayA[k] * u[k] + phi1A[k] * fdrift[k]
            OUT[n + 1, k] = u[k]
