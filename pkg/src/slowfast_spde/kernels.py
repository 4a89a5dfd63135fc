"""Lane dispatch and array plumbing for the hot kernels.

The raw implementations live in _kernels_numba (njit loops) and
_kernels_numpy (einsum); both expose the same signatures and agree bitwise.
Wrappers here allocate outputs and normalize dtypes.
"""

import numpy as np

from .backend import BACKEND

_LANES: dict = {}


def lane(name: str):
    """Raw kernel module for a lane ("numba" or "numpy"), loaded lazily."""
    if name not in _LANES:
        if name == "numba":
            from . import _kernels_numba as mod
        elif name == "numpy":
            from . import _kernels_numpy as mod
        else:
            raise ValueError(f"unknown kernel lane {name!r}")
        _LANES[name] = mod
    return _LANES[name]


def active_lane():
    return lane(BACKEND)


def _c(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def ou_batch(
    decay, phi1, nsd, Ev, Av, x_grid, code, params, V0, Z, record_every=1, impl=None
) -> np.ndarray:
    """Fast-flow stepping over a replica batch; returns (R, S/rec + 1, N) states."""
    mod = active_lane() if impl is None else lane(impl)
    Z = _c(Z)
    n_rep, n_steps, n_modes = Z.shape
    if n_steps % record_every != 0:
        raise ValueError("step count must be a multiple of record_every")
    out = np.empty((n_rep, n_steps // record_every + 1, n_modes))
    a, b, c = (float(p) for p in params)
    mod.ou_batch(
        _c(decay), _c(phi1), _c(nsd), _c(Ev), _c(Av), _c(x_grid),
        int(code), a, b, c, _c(V0).reshape(n_rep, n_modes), Z,
        int(record_every), out,
    )
    return out


def pcn_chain(
    Ey, wq, x_grid, code, params, y0, ref_sd, beta, Z, log_uniforms, impl=None
):
    """One pCN sweep; returns (samples, acceptance count)."""
    mod = active_lane() if impl is None else lane(impl)
    Z = _c(Z)
    n_steps, n_modes = Z.shape
    out = np.empty((n_steps, n_modes))
    a, b, c = (float(p) for p in params)
    n_accept = mod.pcn_chain(
        _c(Ey), _c(wq), _c(x_grid), int(code), a, b, c,
        _c(y0), _c(ref_sd), float(beta), Z, _c(log_uniforms), out,
    )
    return out, int(n_accept)


def coupled_batch(
    f_code, f_params, g_code, g_params,
    decayA, phi1A, decayB, phi1B, nsdB,
    EuA, EvA, ATA, EuB, EvB, ATB,
    U0, V0, Z, m_micro, impl=None,
):
    """Coupled slow-fast stepping; returns (U, V) of shape (R, n_macro+1, N)."""
    mod = active_lane() if impl is None else lane(impl)
    Z = _c(Z)
    n_rep, n_total, n_modes = Z.shape
    if n_total % m_micro != 0:
        raise ValueError("noise steps must be n_macro * m_micro")
    n_macro = n_total // m_micro
    out_u = np.empty((n_rep, n_macro + 1, n_modes))
    out_v = np.empty((n_rep, n_macro + 1, n_modes))
    fa, fb, fc = (float(p) for p in f_params)
    ga, gb, gc = (float(p) for p in g_params)
    mod.coupled_batch(
        int(f_code), fa, fb, fc, int(g_code), ga, gb, gc,
        _c(decayA), _c(phi1A), _c(decayB), _c(phi1B), _c(nsdB),
        _c(EuA), _c(EvA), _c(ATA), _c(EuB), _c(EvB), _c(ATB),
        _c(U0).reshape(n_rep, n_modes), _c(V0).reshape(n_rep, n_modes),
        Z, int(m_micro), out_u, out_v,
    )
    return out_u, out_v


def averaged_linear(
    f_code, f_params, g_code, g_params, g_slope,
    decayA, phi1A, alphaB,
    EuA, ATA, EuB, ATB, EmA,
    u0, n_steps, impl=None,
) -> np.ndarray:
    """Deterministic averaged path for g linear in sigma2; returns (n+1, N)."""
    mod = active_lane() if impl is None else lane(impl)
    n_modes = np.asarray(u0).size
    out = np.empty((int(n_steps) + 1, n_modes))
    fa, fb, fc = (float(p) for p in f_params)
    ga, gb, gc = (float(p) for p in g_params)
    mod.averaged_linear(
        int(f_code), fa, fb, fc, int(g_code), ga, gb, gc, float(g_slope),
        _c(decayA), _c(phi1A), _c(alphaB),
        _c(EuA), _c(ATA), _c(EuB), _c(ATB), _c(EmA),
        _c(u0), int(n_steps), out,
    )
    return out
