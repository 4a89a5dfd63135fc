"""Coupled eps-system, averaged equation, remainder and convergence studies."""

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import stats
from .errors import BasisMismatch
from .kernels import averaged_linear, coupled_batch, ou_batch
from .noise import NoiseStream, ou_step_factors
from .reaction import SATURATED_PRODUCT, ReactionSystem, term_value
from .spectral import (
    Field,
    OperatorSpectrum,
    analysis_matrix,
    eigenfunction_matrix,
    field,
    norm_h,
    quadrature_nodes,
    quadrature_weights,
    synthesis_matrix,
    synthesize,
)


@dataclass(frozen=True)
class SimConfig:
    """Single source of run determinism for coupled experiments."""

    eps: float
    t_final: float
    dt_slow: float
    dt_fast: float  # micro step in fast-clock units
    n_modes: int
    replicas: int
    seed: int
    eta: float = 0.1

    def __post_init__(self):
        for name in ("eps", "t_final", "dt_slow", "dt_fast", "eta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"SimConfig.{name} must be positive")
        if self.n_modes < 1 or self.replicas < 1:
            raise ValueError("SimConfig needs n_modes >= 1 and replicas >= 1")
        if self.dt_fast > self.dt_slow:
            raise ValueError(
                f"dt_fast={self.dt_fast} must not exceed dt_slow={self.dt_slow}"
            )

    def with_eps(self, eps: float) -> "SimConfig":
        return SimConfig(
            eps=eps, t_final=self.t_final, dt_slow=self.dt_slow,
            dt_fast=self.dt_fast, n_modes=self.n_modes, replicas=self.replicas,
            seed=self.seed, eta=self.eta,
        )

    def micro_per_macro(self) -> int:
        """Micro steps per macro step: the fast clock advances dt_slow/eps."""
        return max(1, math.ceil(self.dt_slow / (self.eps * self.dt_fast) - 1e-12))

    def macro_steps(self) -> int:
        n = int(round(self.t_final / self.dt_slow))
        if abs(n * self.dt_slow - self.t_final) > 1e-9:
            raise ValueError("t_final must be a multiple of dt_slow")
        return n


@dataclass(frozen=True, eq=False)
class CoupledPath:
    times: np.ndarray
    u_states: np.ndarray  # (n_macro+1, n_modes)
    v_states: np.ndarray
    config: SimConfig
    basis_slow: OperatorSpectrum
    basis_fast: OperatorSpectrum


@dataclass(frozen=True, eq=False)
class AveragedPath:
    times: np.ndarray
    states: np.ndarray
    basis: OperatorSpectrum
    fbar_rel_noise: float | None = None  # worst recorded SE/|F-bar| for MC drift


def _coupled_setup(spec_a: OperatorSpectrum, spec_b: OperatorSpectrum):
    if spec_a.domain_length != spec_b.domain_length:
        raise BasisMismatch("slow and fast operators live on different intervals")
    if spec_a.n_modes != spec_b.n_modes:
        raise BasisMismatch("slow and fast spectra must carry the same mode count")
    nodes_a = quadrature_nodes(spec_a)
    nodes_b = quadrature_nodes(spec_b)
    return {
        "EuA": synthesis_matrix(spec_a),
        "EvA": eigenfunction_matrix(spec_b, nodes_a),
        "ATA": analysis_matrix(spec_a),
        "EuB": eigenfunction_matrix(spec_a, nodes_b),
        "EvB": synthesis_matrix(spec_b),
        "ATB": analysis_matrix(spec_b),
    }


def _coupled_factors(spec_a, spec_b, cfg: SimConfig):
    decay_a, phi1_a, _ = ou_step_factors(spec_a.eigenvalues, cfg.dt_slow)
    m_micro = cfg.micro_per_macro()
    tau = cfg.dt_slow / m_micro / cfg.eps
    decay_b, phi1_b, nsd_b = ou_step_factors(spec_b.eigenvalues, tau)
    return decay_a, phi1_a, decay_b, phi1_b, nsd_b, m_micro


def simulate_coupled_batch(
    x0: Field,
    y0: Field,
    spec_a: OperatorSpectrum,
    spec_b: OperatorSpectrum,
    system: ReactionSystem,
    cfg: SimConfig,
    replica_ids,
    noise: bool = True,
):
    """Coupled paths for the given replica ids; returns (times, U, V) arrays."""
    mats = _coupled_setup(spec_a, spec_b)
    decay_a, phi1_a, decay_b, phi1_b, nsd_b, m_micro = _coupled_factors(
        spec_a, spec_b, cfg
    )
    n_macro = cfg.macro_steps()
    n_noise = n_macro * m_micro
    replica_ids = list(replica_ids)
    z = np.stack(
        [
            NoiseStream(seed=cfg.seed, replica_id=rid).normals(n_noise, cfg.n_modes)
            for rid in replica_ids
        ]
    )
    if not noise:
        z = np.zeros_like(z)
    n_rep = len(replica_ids)
    u0 = np.broadcast_to(x0.coeffs, (n_rep, cfg.n_modes))
    v0 = np.broadcast_to(y0.coeffs, (n_rep, cfg.n_modes))
    out_u, out_v = coupled_batch(
        system.f.code, system.f.params, system.g.code, system.g.params,
        decay_a, phi1_a, decay_b, phi1_b, nsd_b,
        mats["EuA"], mats["EvA"], mats["ATA"],
        mats["EuB"], mats["EvB"], mats["ATB"],
        u0, v0, z, m_micro,
    )
    times = cfg.dt_slow * np.arange(n_macro + 1)
    return times, out_u, out_v


def simulate_coupled(
    x0: Field,
    y0: Field,
    spec_a: OperatorSpectrum,
    spec_b: OperatorSpectrum,
    system: ReactionSystem,
    cfg: SimConfig,
    ns: NoiseStream | None = None,
) -> CoupledPath:
    replica = ns.replica_id if ns is not None else 0
    times, out_u, out_v = simulate_coupled_batch(
        x0, y0, spec_a, spec_b, system, cfg, [replica]
    )
    return CoupledPath(
        times=times, u_states=out_u[0], v_states=out_v[0],
        config=cfg, basis_slow=spec_a, basis_fast=spec_b,
    )


def _threaded_batches(cfg, replica_worker, threads: int, chunk: int):
    """Run replica chunks (deterministically indexed) across threads."""
    ids = list(range(cfg.replicas))
    chunks = [ids[i : i + chunk] for i in range(0, len(ids), chunk)]
    if threads <= 1 or len(chunks) == 1:
        return [replica_worker(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(replica_worker, chunks))


# ---------------------------------------------------------------------------
# a priori bounds


def apriori_bounds_check(paths_by_eps: dict):
    """Uniform-in-eps second-moment diagnostics (Lemma-style bounds).

    paths_by_eps maps eps -> (U, V) replica arrays.  Reports
    E sup_t |u|^2 and sup_t E |v|^2 per eps and flags a growth trend as
    eps decreases (slope against log eps negative beyond noise).
    """
    rows = {"eps": [], "e_sup_u_sq": [], "se_u": [], "sup_e_v_sq": [], "se_v": []}
    for eps in sorted(paths_by_eps, reverse=True):
        u, v = paths_by_eps[eps]
        sup_u = np.max(np.sum(u**2, axis=2), axis=1)  # per replica
        mean_v = np.mean(np.sum(v**2, axis=2), axis=0)  # per time
        t_star = int(np.argmax(mean_v))
        v_at_star = np.sum(v[:, t_star, :] ** 2, axis=1)
        n_rep = u.shape[0]
        rows["eps"].append(eps)
        rows["e_sup_u_sq"].append(float(sup_u.mean()))
        rows["se_u"].append(float(sup_u.std(ddof=1) / math.sqrt(n_rep)))
        rows["sup_e_v_sq"].append(float(mean_v[t_star]))
        rows["se_v"].append(float(v_at_star.std(ddof=1) / math.sqrt(n_rep)))
    log_eps = np.log(np.asarray(rows["eps"]))
    report = dict(rows)
    xm = log_eps - log_eps.mean()
    sxx = float(np.dot(xm, xm))
    ok = True
    for key, se_key, out in (
        ("e_sup_u_sq", "se_u", "slope_u"),
        ("sup_e_v_sq", "se_v", "slope_v"),
    ):
        values = np.asarray(rows[key])
        stderrs = np.asarray(rows[se_key])
        report[out] = float(np.dot(xm, values) / sxx)
        # slope uncertainty propagated from the per-point Monte Carlo errors
        report[out + "_se"] = float(np.sqrt(np.sum((xm * stderrs) ** 2)) / sxx)
        # unbounded growth shows up at the small-eps end; the statistic is
        # allowed to saturate toward its finite eps -> 0 plateau, so the
        # trend test uses the two smallest eps values (plus noise and a 2%
        # scale floor)
        dlog = log_eps[-1] - log_eps[-2]
        tail_slope = (values[-1] - values[-2]) / dlog
        tail_se = float(np.hypot(stderrs[-1], stderrs[-2]) / abs(dlog))
        ok = ok and tail_slope > -(2 * tail_se + 0.02 * float(np.mean(values)))
    report["trend_ok"] = bool(ok)
    return report


# ---------------------------------------------------------------------------
# averaged equation


def closed_form_admissible(system: ReactionSystem) -> bool:
    """The Gaussian-mean shortcut needs g linear in sigma2 and f affine in it."""
    g_linear = system.g.code in (0, 1, 2, 8)
    f_affine = system.f.code != SATURATED_PRODUCT
    return g_linear and f_affine


def closed_form_fbar(
    system: ReactionSystem, spec_a: OperatorSpectrum, spec_b: OperatorSpectrum
):
    """x -> F-bar(x) for g linear in sigma2: mu^x is Gaussian with mean
    m solving (alpha_k - d2) m_k = <g(x, 0), e_k>, and F-bar(x) = f(x, m)."""
    if not closed_form_admissible(system):
        raise ValueError("closed-form averaged drift needs g linear in sigma2")
    mats = _coupled_setup(spec_a, spec_b)
    slope = -float(system.g.d2(0.0, 0.0))
    denom = spec_b.eigenvalues + slope

    def nodal(u: Field, ug_a: np.ndarray | None = None) -> np.ndarray:
        """F-bar(x) values on spec_a's quadrature grid (pre-projection).

        Callers stepping along a path pass the grid values of u they already
        hold, so sigma2-independent f cancels bitwise in the remainder.
        """
        ug_b = synthesize(u, quadrature_nodes(spec_b))
        h0 = term_value(system.g.code, system.g.params, ug_b, np.zeros_like(ug_b))
        m = (mats["ATB"] @ h0) / denom
        if ug_a is None:
            ug_a = synthesize(u, quadrature_nodes(spec_a))
        mg_a = mats["EvA"] @ m
        return term_value(system.f.code, system.f.params, ug_a, mg_a)

    def fbar(u: Field) -> Field:
        return field(mats["ATA"] @ nodal(u), spec_a)

    fbar.nodal = nodal
    return fbar


def solve_averaged_closed(
    x0: Field,
    spec_a: OperatorSpectrum,
    spec_b: OperatorSpectrum,
    system: ReactionSystem,
    t_final: float,
    dt: float,
) -> AveragedPath:
    """Kernel-backed deterministic averaged solve (g linear in sigma2).

    Shares the slow-update arithmetic with simulate_coupled, so a
    sigma2-independent f reproduces the coupled slow path bitwise.
    """
    if not closed_form_admissible(system):
        raise ValueError("closed-form averaged solve needs g linear in sigma2")
    mats = _coupled_setup(spec_a, spec_b)
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9:
        raise ValueError("t_final must be a multiple of dt")
    decay_a, phi1_a, _ = ou_step_factors(spec_a.eigenvalues, dt)
    nodes_a = quadrature_nodes(spec_a)
    out = averaged_linear(
        system.f.code, system.f.params, system.g.code, system.g.params,
        -float(system.g.d2(0.0, 0.0)),
        decay_a, phi1_a, spec_b.eigenvalues,
        mats["EuA"], mats["ATA"], mats["EuB"], mats["ATB"],
        eigenfunction_matrix(spec_b, nodes_a),
        x0.coeffs, n_steps,
    )
    return AveragedPath(times=dt * np.arange(n_steps + 1), states=out, basis=spec_a)


def solve_averaged(
    x0: Field,
    spec_a: OperatorSpectrum,
    fbar,
    t_final: float,
    dt: float,
) -> AveragedPath:
    """Exponential-Euler integration of du = Au + F-bar(u) with a drift oracle.

    fbar maps a Field to either a Field or a (Field, per-mode stderr) pair;
    for Monte Carlo oracles the worst SE/|F-bar| ratio is recorded and a
    budget warning fires above 10%.
    """
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9:
        raise ValueError("t_final must be a multiple of dt")
    decay, phi1, _ = ou_step_factors(spec_a.eigenvalues, dt)
    states = np.empty((n_steps + 1, spec_a.n_modes))
    states[0] = x0.coeffs
    u = x0
    worst = None
    for n in range(n_steps):
        result = fbar(u)
        if isinstance(result, tuple):
            drift, se = result
            mag = norm_h(drift)
            rel = float(np.linalg.norm(se)) / max(mag, 1e-300)
            worst = rel if worst is None else max(worst, rel)
        else:
            drift = result
        u = field(decay * u.coeffs + phi1 * drift.coeffs, spec_a)
        states[n + 1] = u.coeffs
    if worst is not None and worst > 0.1:
        warnings.warn(
            f"averaged-drift noise floor {worst:.1%} of |F-bar| exceeds 10%; "
            "increase the measure sample budget",
            stacklevel=2,
        )
    return AveragedPath(
        times=dt * np.arange(n_steps + 1), states=states, basis=spec_a,
        fbar_rel_noise=worst,
    )


class CachedFbar:
    """Memoizing wrapper for an expensive F-bar oracle.

    Re-evaluates only when |u - u_cached| exceeds rel_tol * (1 + |u|); the
    Lipschitz bound on F-bar keeps the cache error proportional.
    """

    def __init__(self, fbar, rel_tol: float = 0.01):
        self._fbar = fbar
        self.rel_tol = rel_tol
        self._keys = []
        self._values = []
        self.calls = 0
        self.evaluations = 0

    def __call__(self, u: Field):
        self.calls += 1
        uc = u.coeffs
        budget = self.rel_tol * (1.0 + float(np.linalg.norm(uc)))
        for key, value in zip(self._keys, self._values):
            if np.linalg.norm(uc - key) <= budget:
                return value
        value = self._fbar(u)
        self.evaluations += 1
        self._keys.append(uc.copy())
        self._values.append(value)
        return value


# ---------------------------------------------------------------------------
# remainder and correction diagnostics


def _pairing_setup(spec_a: OperatorSpectrum, h: Field):
    hg = synthesize(h, quadrature_nodes(spec_a))
    return hg * quadrature_weights(spec_a)


def _fbar_nodal_values(fbar, u: Field, spec_a: OperatorSpectrum, ug_a=None) -> np.ndarray:
    """F-bar(u) on spec_a's grid; the nodal shortcut keeps the decoupled
    integrand exactly zero instead of zero-up-to-roundoff."""
    if hasattr(fbar, "nodal"):
        return fbar.nodal(u, ug_a)
    result = fbar(u)
    drift = result[0] if isinstance(result, tuple) else result
    return synthesis_matrix(spec_a) @ drift.coeffs


def remainder_series(
    path: CoupledPath, h: Field, system: ReactionSystem, fbar
) -> np.ndarray:
    """R_h(t) = int_0^t <F(u,v) - F-bar(u), h> ds along one path (trapezoid)."""
    spec_a = path.basis_slow
    spec_b = path.basis_fast
    wh = _pairing_setup(spec_a, h)
    ug = path.u_states @ synthesis_matrix(spec_a).T
    vg = path.v_states @ eigenfunction_matrix(spec_b, quadrature_nodes(spec_a)).T
    fvals = term_value(system.f.code, system.f.params, ug, vg)
    bar_vals = np.stack(
        [
            _fbar_nodal_values(fbar, field(path.u_states[i], spec_a), spec_a, ug[i])
            for i in range(path.u_states.shape[0])
        ]
    )
    integrand = (fvals - bar_vals) @ wh
    dt = path.times[1] - path.times[0]
    out = np.zeros_like(integrand)
    out[1:] = 0.5 * dt * np.cumsum(integrand[1:] + integrand[:-1])
    return out


def _batch_remainders(times, out_u, out_v, spec_a, spec_b, system, h, fbar):
    """Per-replica remainder series for a batch; vectorized F, cached F-bar."""
    wh = _pairing_setup(spec_a, h)
    n_rep, n_times, _ = out_u.shape
    eu = synthesis_matrix(spec_a).T
    evb = eigenfunction_matrix(spec_b, quadrature_nodes(spec_a)).T
    ug = out_u @ eu
    vg = out_v @ evb
    fvals = term_value(system.f.code, system.f.params, ug, vg)
    bar_vals = np.empty_like(fvals)
    for r in range(n_rep):
        for i in range(n_times):
            bar_vals[r, i] = _fbar_nodal_values(
                fbar, field(out_u[r, i], spec_a), spec_a, ug[r, i]
            )
    integrand = (fvals - bar_vals) @ wh
    dt = times[1] - times[0]
    series = np.zeros_like(integrand)
    series[:, 1:] = 0.5 * dt * np.cumsum(integrand[:, 1:] + integrand[:, :-1], axis=1)
    return series


def remainder_study(
    x0: Field,
    y0: Field,
    spec_a: OperatorSpectrum,
    spec_b: OperatorSpectrum,
    system: ReactionSystem,
    cfg: SimConfig,
    eps_grid,
    h: Field,
    fbar=None,
    threads: int = 1,
    chunk: int = 64,
):
    """sup_t E|R^eps_h(t)| across an eps grid, with standard errors.

    The averaging remainder has no proven rate, so the study reports the
    per-eps sup statistic and lets callers assert the monotone decrease.
    """
    if fbar is None:
        fbar = closed_form_fbar(system, spec_a, spec_b)
    rows = {"eps": [], "sup_mean_abs_r": [], "se": [], "t_at_sup": [], "replicas": []}
    for eps in eps_grid:
        cfg_eps = cfg.with_eps(eps)

        def worker(ids, cfg_eps=cfg_eps):
            times, out_u, out_v = simulate_coupled_batch(
                x0, y0, spec_a, spec_b, system, cfg_eps, ids
            )
            return times, _batch_remainders(
                times, out_u, out_v, spec_a, spec_b, system, h, fbar
            )

        results = _threaded_batches(cfg_eps, worker, threads, chunk)
        times = results[0][0]
        series = np.concatenate([r[1] for r in results], axis=0)
        mean_abs = np.abs(series).mean(axis=0)
        i_star = int(np.argmax(mean_abs))
        se = float(np.abs(series[:, i_star]).std(ddof=1) / math.sqrt(series.shape[0]))
        rows["eps"].append(eps)
        rows["sup_mean_abs_r"].append(float(mean_abs[i_star]))
        rows["se"].append(se)
        rows["t_at_sup"].append(float(times[i_star]))
        rows["replicas"].append(series.shape[0])
    return rows


@dataclass(frozen=True)
class CorrectionEstimate:
    value: float
    std_error: float
    truncation_bound: float
    truncation_dominated: bool


def correction_estimate(
    x_frozen: Field,
    y0: Field,
    h: Field,
    c_eps: float,
    system: ReactionSystem,
    spectrum: OperatorSpectrum,
    t_cut: float,
    dt: float,
    replicas: int,
    seed: int,
    fbar_pairing: float,
    chunk: int = 128,
) -> CorrectionEstimate:
    """Damped-Laplace-transform functional of the fast flow (fast clock).

    Estimates int_0^inf e^{-c t} P^x_t[<F(x,.) - F-bar(x), h>](y) dt by
    trajectory quadrature truncated at t_cut; the truncation bound uses the
    mixing rate delta and the observed endpoint discrepancy.
    """
    if c_eps <= 0:
        raise ValueError(f"damping constant must be positive, got {c_eps}")
    if system.f.d2_bound == 0.0:
        # F(x, .) does not see the fast state, so the integrand
        # <F(x,.) - F-bar(x), h> vanishes identically
        return CorrectionEstimate(0.0, 0.0, 0.0, False)
    from .fast import simulate_fast_batch

    n_steps = int(round(t_cut / dt))
    times = dt * np.arange(n_steps + 1)
    wh = _pairing_setup(spectrum, h)
    ug = synthesize(x_frozen, quadrature_nodes(spectrum))
    damping = np.exp(-c_eps * times)
    values = []
    endpoint = []
    done = 0
    while done < replicas:
        size = min(chunk, replicas - done)
        _, out = simulate_fast_batch(
            x_frozen, y0, system, spectrum, n_steps * dt, dt, seed, size,
            first_replica=done,
        )
        vg = out @ synthesis_matrix(spectrum).T
        pair = term_value(system.f.code, system.f.params, ug[None, None, :], vg) @ wh
        integrand = damping[None, :] * (pair - fbar_pairing)
        values.append(np.trapz(integrand, dx=dt, axis=1))
        endpoint.append(pair[:, -1] - fbar_pairing)
        done += size
    values = np.concatenate(values)
    endpoint = np.concatenate(endpoint)
    value = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(replicas))
    delta = system.gap
    tail = abs(float(endpoint.mean())) * math.exp(-c_eps * t_cut) / (c_eps + delta)
    return CorrectionEstimate(
        value=value, std_error=se, truncation_bound=tail,
        truncation_dominated=bool(tail > max(2 * se, 1e-300)),
    )


# ---------------------------------------------------------------------------
# convergence study


def convergence_study(
    x0: Field,
    y0: Field,
    spec_a: OperatorSpectrum,
    spec_b: OperatorSpectrum,
    system: ReactionSystem,
    cfg: SimConfig,
    eps_grid,
    ubar: AveragedPath | None = None,
    threads: int = 1,
    chunk: int = 64,
    config_hash: str = "",
):
    """Pathwise distance of the slow component to the averaged solution.

    Per eps: mean/median of sup_t |u^eps - u_bar|_H over replicas and the
    exceedance probability P(sup > eta) with its Wilson interval.
    """
    if ubar is None:
        ubar = solve_averaged_closed(
            x0, spec_a, spec_b, system, cfg.t_final, cfg.dt_slow
        )
    if ubar.states.shape[0] != cfg.macro_steps() + 1:
        raise ValueError("averaged path grid does not match the macro grid")
    rows = {
        "eps": [], "replica_count": [], "mean_sup_error": [], "median_sup_error": [],
        "exceedance_prob": [], "ci_low": [], "ci_high": [], "seed": [], "config_hash": [],
    }
    for eps in eps_grid:
        cfg_eps = cfg.with_eps(eps)

        def worker(ids, cfg_eps=cfg_eps):
            _, out_u, _ = simulate_coupled_batch(
                x0, y0, spec_a, spec_b, system, cfg_eps, ids
            )
            diff = out_u - ubar.states[None, :, :]
            return np.max(np.sqrt(np.sum(diff**2, axis=2)), axis=1)

        sup_err = np.concatenate(_threaded_batches(cfg_eps, worker, threads, chunk))
        exceed = int(np.count_nonzero(sup_err > cfg.eta))
        lo, hi = stats.wilson_interval(exceed, sup_err.size)
        rows["eps"].append(eps)
        rows["replica_count"].append(sup_err.size)
        rows["mean_sup_error"].append(float(sup_err.mean()))
        rows["median_sup_error"].append(float(np.median(sup_err)))
        rows["exceedance_prob"].append(exceed / sup_err.size)
        rows["ci_low"].append(lo)
        rows["ci_high"].append(hi)
        rows["seed"].append(cfg.seed)
        rows["config_hash"].append(config_hash)
    return rows
