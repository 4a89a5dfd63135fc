"""Pure-numpy lane of the hot kernels.

Matvecs and quadrature sums use einsum forms whose sequential reduction
matches the numba lane's loops bitwise (reduction index leading the second
operand); replicas are vectorized per step.  Catalog entries with
transcendental terms may still differ from the numba lane by one ulp, since
numpy's SIMD tanh/sin round differently from libm.
"""

import math

import numpy as np

from .reaction import term_antiderivative, term_value


def _t(mat):
    return np.ascontiguousarray(mat.T)


def ou_batch(decay, phi1, nsd, Ev, Av, x_grid, code, a, b, c, V0, Z, record_every, OUT):
    n_rep, n_steps, _ = Z.shape
    params = (a, b, c)
    ev_t = _t(Ev)
    av_t = _t(Av)
    v = V0.copy()
    OUT[:, 0, :] = v
    rec = 1
    for i in range(n_steps):
        vg = np.einsum("rk,kj->rj", v, ev_t)
        gv = term_value(code, params, x_grid[None, :], vg)
        drift = np.einsum("rj,jk->rk", gv, av_t)
        v = decay * v + phi1 * drift + nsd * Z[:, i, :]
        if (i + 1) % record_every == 0:
            OUT[:, rec, :] = v
            rec += 1


def pcn_chain(Ey, wq, x_grid, code, a, b, c, y0, ref_sd, beta, Z, LOGU, OUT):
    n_steps = Z.shape[0]
    params = (a, b, c)
    contract = math.sqrt(1.0 - beta * beta)
    ey_t = _t(Ey)

    def potential(yc):
        yg = np.einsum("k,kj->j", yc, ey_t)
        return float(np.einsum("j,j->", wq, term_antiderivative(code, params, x_grid, yg)))

    y = y0.copy()
    u_cur = potential(y)
    n_accept = 0
    for i in range(n_steps):
        yp = contract * y + beta * ref_sd * Z[i]
        u_prop = potential(yp)
        du = 2.0 * (u_prop - u_cur)
        if du >= 0.0 or LOGU[i] < du:
            y = yp
            u_cur = u_prop
            n_accept += 1
        OUT[i] = y
    return n_accept


def coupled_batch(
    fcode, fa, fb, fc, gcode, ga, gb, gc,
    decayA, phi1A, decayB, phi1B, nsdB,
    EuA, EvA, ATA, EuB, EvB, ATB,
    U0, V0, Z, m_micro, OUTU, OUTV,
):
    fparams = (fa, fb, fc)
    gparams = (ga, gb, gc)
    n_macro = OUTU.shape[1] - 1
    eua_t = _t(EuA)
    eva_t = _t(EvA)
    ata_t = _t(ATA)
    eub_t = _t(EuB)
    evb_t = _t(EvB)
    atb_t = _t(ATB)
    u = U0.copy()
    v = V0.copy()
    OUTU[:, 0, :] = u
    OUTV[:, 0, :] = v
    step = 0
    for n in range(n_macro):
        ug_a = np.einsum("rk,kj->rj", u, eua_t)
        vg_a = np.einsum("rk,kj->rj", v, eva_t)
        fvals = term_value(fcode, fparams, ug_a, vg_a)
        fdrift = np.einsum("rj,jk->rk", fvals, ata_t)
        ug_b = np.einsum("rk,kj->rj", u, eub_t)
        for _ in range(m_micro):
            vg_b = np.einsum("rk,kj->rj", v, evb_t)
            gvals = term_value(gcode, gparams, ug_b, vg_b)
            gdrift = np.einsum("rj,jk->rk", gvals, atb_t)
            v = decayB * v + phi1B * gdrift + nsdB * Z[:, step, :]
            step += 1
        u = decayA * u + phi1A * fdrift
        OUTU[:, n + 1, :] = u
        OUTV[:, n + 1, :] = v


def averaged_linear(
    fcode, fa, fb, fc, gcode, ga, gb, gc, g_slope,
    decayA, phi1A, alphaB,
    EuA, ATA, EuB, ATB, EmA,
    u0, n_steps, OUT,
):
    fparams = (fa, fb, fc)
    gparams = (ga, gb, gc)
    eua_t = _t(EuA)
    ata_t = _t(ATA)
    eub_t = _t(EuB)
    atb_t = _t(ATB)
    ema_t = _t(EmA)
    u = u0.copy()
    OUT[0] = u
    for n in range(n_steps):
        ug_b = np.einsum("k,kj->j", u, eub_t)
        hvals = term_value(gcode, gparams, ug_b, np.zeros_like(ug_b))
        m = np.einsum("j,jk->k", hvals, atb_t) / (alphaB + g_slope)
        ug_a = np.einsum("k,kj->j", u, eua_t)
        mg_a = np.einsum("k,kj->j", m, ema_t)
        fvals = term_value(fcode, fparams, ug_a, mg_a)
        fdrift = np.einsum("j,jk->k", fvals, ata_t)
        u = decayA * u + phi1A * fdrift
        OUT[n + 1] = u
