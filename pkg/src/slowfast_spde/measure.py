"""Invariant measure of the fast equation, two independent ways.

The ergodic route time-averages a long trajectory; the pCN route samples the
explicit Gibbs form exp(2U(x,y)) times the Gaussian with mode variances
1/(2 alpha_k).  The normalization Z(x) never appears: time averages do not
need it and the Metropolis ratio cancels it.
"""

import hashlib
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import stats
from .fast import _fast_setup, _steps, simulate_fast_batch
from .functionals import Functional
from .kernels import ou_batch, pcn_chain
from .noise import NoiseStream, ou_step_factors
from .reaction import ReactionSystem, term_d1, term_value
from .spectral import (
    Field,
    OperatorSpectrum,
    analysis_matrix,
    field,
    norm_h,
    quadrature_nodes,
    quadrature_weights,
    synthesis_matrix,
    synthesize,
)
from .tables import write_csv

ERGODIC = "ergodic"
PCN = "pcn"


@dataclass(frozen=True, eq=False)
class MeasureEstimate:
    """Equally weighted spectral samples approximating mu^x."""

    samples: np.ndarray  # (n_samples, n_modes)
    provenance: str
    x_frozen: Field
    ess: float
    burn_in: float  # time units (ergodic) or steps (pcn)
    acceptance_rate: float | None = None
    seed: int = 0

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    def mode_means(self) -> np.ndarray:
        return self.samples.mean(axis=0)

    def mode_variances(self) -> np.ndarray:
        return self.samples.var(axis=0, ddof=1)

    def mode_mean_stderr(self) -> np.ndarray:
        scale = math.sqrt(max(self.ess, 1.0))
        return self.samples.std(axis=0, ddof=1) / scale


@dataclass(frozen=True, eq=False)
class AveragedDrift:
    """Monte Carlo value of F-bar(x) with per-mode standard errors."""

    x: Field
    value: Field
    std_error: np.ndarray
    provenance: str


def ergodic_measure(
    x_frozen: Field,
    y0: Field,
    system: ReactionSystem,
    spectrum: OperatorSpectrum,
    t_sample: float,
    dt: float,
    thin: int,
    ns: NoiseStream,
    t_burn: float | None = None,
) -> MeasureEstimate:
    """Thinned post-burn-in trajectory states as measure samples.

    Burn-in defaults to 5/delta, the only principled timescale available,
    and may not be set below it.
    """
    delta = system.gap
    min_burn = 5.0 / delta
    if t_burn is None:
        t_burn = min_burn
    if t_burn < min_burn * (1 - 1e-9):
        raise ValueError(f"t_burn={t_burn} is below the mixing floor 5/delta={min_burn}")
    ev, av, x_grid = _fast_setup(system, spectrum, x_frozen)
    decay, phi1, nsd = ou_step_factors(spectrum.eigenvalues, dt)
    n_burn = int(math.ceil(t_burn / dt - 1e-9))
    z = ns.normals(n_burn, spectrum.n_modes)
    out = ou_batch(
        decay, phi1, nsd, ev, av, x_grid, system.g.code, system.g.params,
        y0.coeffs[None, :], z[None, :, :], n_burn,
    )
    y_start = out[0, -1]
    n_sample_steps = _steps(t_sample, dt)
    n_sample_steps -= n_sample_steps % thin
    z = ns.normals(n_sample_steps, spectrum.n_modes)
    out = ou_batch(
        decay, phi1, nsd, ev, av, x_grid, system.g.code, system.g.params,
        y_start[None, :], z[None, :, :], thin,
    )
    samples = out[0, 1:]
    ess = stats.effective_sample_size(samples)
    if ess < 100:
        warnings.warn(
            f"ergodic measure ESS = {ess:.1f} < 100; lengthen t_sample", stacklevel=2
        )
    return MeasureEstimate(
        samples=samples, provenance=ERGODIC, x_frozen=x_frozen,
        ess=ess, burn_in=t_burn, seed=ns.seed,
    )


def reference_stddev(spectrum: OperatorSpectrum) -> np.ndarray:
    """Mode-wise sqrt(1/(2 alpha_k)) of the Gaussian reference measure."""
    return np.sqrt(1.0 / (2.0 * spectrum.eigenvalues))


def pcn_measure(
    x_frozen: Field,
    system: ReactionSystem,
    spectrum: OperatorSpectrum,
    n_samples: int,
    beta: float,
    burn_in: int,
    ns: NoiseStream,
    thin: int = 1,
    adapt: bool = True,
) -> MeasureEstimate:
    """Preconditioned Crank-Nicolson chain targeting the Gibbs measure.

    beta adapts toward 25% acceptance during burn-in, the burn-in extends to
    at least 10x the integrated autocorrelation time estimated on the fly,
    then beta freezes for the sampling phase (reversibility).
    """
    if not 0.0 < beta < 1.0:
        raise ValueError(f"pCN step beta must lie in (0, 1), got {beta}")
    ev, _, x_grid = _fast_setup(system, spectrum, x_frozen)
    wq = quadrature_weights(spectrum)
    ref_sd = reference_stddev(spectrum)
    n_modes = spectrum.n_modes
    y = ref_sd * ns.normals(1, n_modes)[0]

    def sweep(y, n_steps, beta):
        z = ns.normals(n_steps, n_modes)
        logu = np.log(np.maximum(ns.uniforms(n_steps), 1e-300))
        samples, accepted = pcn_chain(
            ev, wq, x_grid, system.g.code, system.g.params,
            y, ref_sd, beta, z, logu,
        )
        return samples, accepted

    chunk = 250
    burn_trace = []
    burned = 0
    while burned < burn_in:
        size = min(chunk, burn_in - burned)
        samples, accepted = sweep(y, size, beta)
        y = samples[-1]
        burn_trace.append(samples[:, 0])
        burned += size
        if adapt:
            rate = accepted / size
            beta = float(np.clip(beta * math.exp(1.5 * (rate - 0.25)), 1e-3, 0.995))
    # extend burn-in until it covers 10x the autocorrelation time
    while True:
        trace = np.concatenate(burn_trace)[-max(1000, burned // 2):]
        tau = stats.integrated_autocorr_time(trace)
        if burned >= 10 * tau or burned > 100 * burn_in:
            break
        samples, _ = sweep(y, chunk, beta)
        y = samples[-1]
        burn_trace.append(samples[:, 0])
        burned += chunk

    n_steps = n_samples * thin
    samples, accepted = sweep(y, n_steps, beta)
    rate = accepted / n_steps
    if not 0.1 <= rate <= 0.6:
        suggested = float(np.clip(beta * math.exp(1.5 * (rate - 0.25)), 1e-3, 0.995))
        warnings.warn(
            f"pCN acceptance rate {rate:.3f} outside [0.1, 0.6]; "
            f"consider beta around {suggested:.3g}",
            stacklevel=2,
        )
    kept = samples[thin - 1 :: thin]
    ess = stats.effective_sample_size(kept)
    return MeasureEstimate(
        samples=kept, provenance=PCN, x_frozen=x_frozen,
        ess=ess, burn_in=float(burned), acceptance_rate=rate, seed=ns.seed,
    )


# ---------------------------------------------------------------------------
# averaged drift and its derivative


def averaged_drift(system: ReactionSystem, measure: MeasureEstimate) -> AveragedDrift:
    """F-bar(x) = mean of F(x, y_i) over measure samples, with per-mode SE."""
    spectrum = system.spectrum
    e = synthesis_matrix(spectrum)
    av = analysis_matrix(spectrum)
    xg = synthesize(measure.x_frozen, quadrature_nodes(spectrum))
    yg = measure.samples @ e.T
    fvals = term_value(system.f.code, system.f.params, xg[None, :], yg)
    coeffs = fvals @ av.T  # (n_samples, n_modes)
    value = coeffs.mean(axis=0)
    scale = math.sqrt(max(measure.ess, 1.0))
    se = coeffs.std(axis=0, ddof=1) / scale
    return AveragedDrift(
        x=measure.x_frozen,
        value=field(value, measure.x_frozen.basis),
        std_error=se,
        provenance=measure.provenance,
    )


_GAUSS8 = np.polynomial.legendre.leggauss(8)


def averaged_drift_gradient(
    system: ReactionSystem,
    measure: MeasureEstimate,
    k_dir: Field,
    h_dir: Field,
    n_batches: int = 25,
):
    """<D F-bar(x) k, h> by the Gibbs-gradient formula, with a batch-means SE.

    Three Monte Carlo terms over mu^x: the pointwise derivative of F in x,
    plus twice the covariance of <U_x(x,y), k> with <F(x,y), h>.
    """
    spectrum = system.spectrum
    e = synthesis_matrix(spectrum)
    wq = quadrature_weights(spectrum)
    xg = synthesize(measure.x_frozen, quadrature_nodes(spectrum))
    kg = synthesize(k_dir, quadrature_nodes(spectrum))
    hg = synthesize(h_dir, quadrature_nodes(spectrum))
    yg = measure.samples @ e.T  # (n, M)

    t1 = (term_d1(system.f.code, system.f.params, xg[None, :], yg) * (kg * hg * wq)) @ np.ones(
        wq.size
    )
    fh = (term_value(system.f.code, system.f.params, xg[None, :], yg) * (hg * wq)) @ np.ones(
        wq.size
    )
    nodes, gw = _GAUSS8
    theta = 0.5 * (nodes + 1.0)
    ux = np.zeros(yg.shape[0])
    for th, tw in zip(theta, gw):
        ux += 0.5 * tw * (
            (term_d1(system.g.code, system.g.params, xg[None, :], th * yg) * yg)
            @ (kg * wq)
        )

    def estimate(sl):
        return float(
            t1[sl].mean() + 2.0 * (ux[sl] * fh[sl]).mean() - 2.0 * ux[sl].mean() * fh[sl].mean()
        )

    value = estimate(slice(None))
    n = yg.shape[0]
    usable = (n // n_batches) * n_batches
    width = usable // n_batches
    parts = [estimate(slice(i * width, (i + 1) * width)) for i in range(n_batches)]
    se = float(np.std(parts, ddof=1) / math.sqrt(n_batches))
    return value, se


@dataclass(frozen=True, eq=False)
class MixingFit:
    rate: float
    intercept: float
    times: np.ndarray
    gaps: np.ndarray
    stderrs: np.ndarray
    noise_floor: bool


def mixing_rate(
    x_frozen: Field,
    y0: Field,
    phi: Functional,
    system: ReactionSystem,
    spectrum: OperatorSpectrum,
    t_max: float,
    n_points: int,
    replicas: int,
    seed: int,
    dt: float,
    mu_phi: float,
) -> MixingFit:
    """Fit |P^x_t phi(y) - mu^x(phi)| to C e^{-rho t} on a uniform t-grid.

    Points drowned by Monte Carlo error (gap < 3 SE) are dropped; if fewer
    than three remain the fit is flagged as noise-floor-limited rather than
    asserted.
    """
    n_steps = _steps(t_max, dt)
    record_every = max(1, n_steps // n_points)
    n_steps -= n_steps % record_every
    times, out = simulate_fast_batch(
        x_frozen, y0, system, spectrum, n_steps * dt, dt, seed, replicas,
        record_every=record_every,
    )
    vals = phi(out)  # (R, K)
    est = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(replicas)
    gaps = np.abs(est - mu_phi)
    usable = (gaps > 3 * se) & (times > 0)
    if np.count_nonzero(usable) < 3:
        return MixingFit(math.nan, math.nan, times, gaps, se, True)
    slope, intercept = np.polyfit(times[usable], np.log(gaps[usable]), 1)
    return MixingFit(float(-slope), float(intercept), times, gaps, se, False)


def measure_moment_growth(
    system: ReactionSystem,
    spectrum: OperatorSpectrum,
    x_fields: list,
    p: int,
    n_samples: int,
    seed: int,
    beta: float = 0.5,
    burn_in: int = 2000,
):
    """p-th moment of mu^x against |x|_H over a grid of frozen states.

    Returns columns (x_norm, moment); the Lemma-style envelope is
    c (1 + |x|^p) with c fitted by fit_moment_growth_constant.
    """
    if p not in (1, 2, 4):
        raise ValueError(f"moment order p must be 1, 2 or 4, got {p}")
    x_norms = []
    moments = []
    stderrs = []
    for i, x in enumerate(x_fields):
        est = pcn_measure(
            x, system, spectrum, n_samples, beta, burn_in,
            NoiseStream(seed=seed, replica_id=i),
        )
        norms = np.sqrt(np.sum(est.samples**2, axis=1))
        x_norms.append(norm_h(x))
        moments.append(float(np.mean(norms**p)))
        stderrs.append(stats.batch_standard_error(norms**p, 40))
    return {
        "x_norm": np.array(x_norms),
        "moment": np.array(moments),
        "moment_se": np.array(stderrs),
    }


def fit_moment_growth_constant(table, p: int) -> float:
    return float(np.max(table["moment"] / (1.0 + table["x_norm"] ** p)))


def field_hash(x: Field) -> str:
    """sha256 of the little-endian float64 coefficient bytes."""
    return hashlib.sha256(x.coeffs.astype("<f8").tobytes()).hexdigest()


def export_measure_csv(estimate: MeasureEstimate, path) -> None:
    """One row per sample, one column per mode; provenance in header comments."""
    comments = [
        f"provenance={estimate.provenance}",
        f"x_hash={field_hash(estimate.x_frozen)}",
        f"seed={estimate.seed}",
        f"ess={estimate.ess!r}",
    ]
    columns = {
        f"mode_{k + 1}": estimate.samples[:, k] for k in range(estimate.samples.shape[1])
    }
    write_csv(path, columns, comments)
