"""Spectral cylindrical Wiener increments and exact stiff-OU stepping.

Stream derivation rule (documented so other implementations can reproduce
trajectories): one Philox bit generator keyed by the pair
(seed, replica_id); a trajectory consumes standard normals step-major and
mode-minor via ``standard_normal((n_steps, n_modes))``, and uniform variates
(for acceptance decisions) are drawn from the same stream where needed.
Distinct replica ids give independent streams, so scheduling order across
replicas can never change results.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .spectral import Field, OperatorSpectrum, field

DERIVATION_RULE = "philox(key=(seed,replica_id)); standard_normal step-major/mode-minor"


@dataclass
class NoiseStream:
    """Reproducible per-replica source of mode-wise Brownian increments."""

    seed: int
    replica_id: int = 0
    mode_count: int = 0
    derivation: str = DERIVATION_RULE
    _gen: np.random.Generator | None = dc_field(default=None, repr=False)

    def _generator(self) -> np.random.Generator:
        if self._gen is None:
            key = np.array([self.seed, self.replica_id], dtype=np.uint64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def normals(self, n_steps: int, n_modes: int | None = None) -> np.ndarray:
        n_modes = self.mode_count if n_modes is None else n_modes
        if n_modes < 1:
            raise ValueError("mode count must be set before drawing normals")
        return self._generator().standard_normal((n_steps, n_modes))

    def uniforms(self, n: int) -> np.ndarray:
        return self._generator().random(n)

    def spawn(self, replica_id: int) -> "NoiseStream":
        """Independent stream for another replica under the same seed."""
        return NoiseStream(seed=self.seed, replica_id=replica_id, mode_count=self.mode_count)


def ou_step_factors(alphas: np.ndarray, tau: float):
    """Per-mode (decay, drift weight, noise sd) for one exact OU step.

    tau is the step in the fast clock (physical step / eps).  The linear flow
    and the stochastic convolution are sampled from their exact laws; only
    the frozen drift term carries the exponential-Euler approximation.
    """
    decay = np.exp(-alphas * tau)
    phi1 = (1.0 - decay) / alphas
    noise_sd = np.sqrt((1.0 - decay**2) / (2.0 * alphas))
    return decay, phi1, noise_sd


def ou_exact_step(
    spectrum: OperatorSpectrum,
    v: Field,
    drift: Field,
    h: float,
    eps: float,
    ns: NoiseStream,
) -> Field:
    """One distributionally exact step of dv = (1/eps)[Bv + drift]dt + dw/sqrt(eps).

    The drift is the nonlinear term frozen at the step start.
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    decay, phi1, noise_sd = ou_step_factors(spectrum.eigenvalues, h / eps)
    z = ns.normals(1, spectrum.n_modes)[0]
    return field(decay * v.coeffs + phi1 * drift.coeffs + noise_sd * z, v.basis)


def stationary_variance(spectrum: OperatorSpectrum) -> np.ndarray:
    """Mode-wise stationary variance 1/(2 alpha_k) of the driftless fast flow."""
    return 1.0 / (2.0 * spectrum.eigenvalues)


def convolution_second_moment(spectrum: OperatorSpectrum, t, eps: float) -> np.ndarray:
    """Analytic E|w^{eps,B}(t)|^2 = sum_k (1 - e^{-2 alpha_k t/eps})/(2 alpha_k)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    alphas = spectrum.eigenvalues
    return np.sum(
        (1.0 - np.exp(-2.0 * np.outer(t, alphas) / eps)) / (2.0 * alphas), axis=1
    )


def stochastic_convolution_moments(
    spectrum: OperatorSpectrum,
    eps: float,
    t_final: float,
    dt: float,
    replicas: int,
    ns: NoiseStream,
):
    """Monte Carlo time profile of E|w^{eps,B}(t)|^2 next to its closed form.

    Simulates the pure convolution (zero reaction) with the exact one-step
    law; returns a dict of columns (t, second_moment, analytic).
    """
    if min(eps, t_final, dt) <= 0 or replicas < 1:
        raise ValueError("eps, t_final, dt must be positive and replicas >= 1")
    n_steps = int(round(t_final / dt))
    times = dt * np.arange(n_steps + 1)
    decay, _, noise_sd = ou_step_factors(spectrum.eigenvalues, dt / eps)
    acc = np.zeros(n_steps + 1)
    for replica in range(replicas):
        z = ns.spawn(replica).normals(n_steps, spectrum.n_modes)
        v = np.zeros(spectrum.n_modes)
        for i in range(n_steps):
            v = decay * v + noise_sd * z[i]
            acc[i + 1] += np.dot(v, v)
    acc /= replicas
    return {
        "t": times,
        "second_moment": acc,
        "analytic": convolution_second_moment(spectrum, times, eps),
    }
