"""Spectral representation of the dissipative elliptic operators on (0, L).

The operators are diagonal in an analytic sine/cosine basis of H = L2(0, L);
everything downstream (semigroups, Sobolev scales, Nemytskii evaluation)
works on the coefficient vectors against that basis.  Plain Neumann walls
would put a zero eigenvalue in the spectrum, so the catalog offers Dirichlet
and mass-shifted Neumann only: the spectral gap stays positive by
construction.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import BasisMismatch, HypothesisViolation

DIRICHLET = "dirichlet"
NEUMANN_SHIFTED = "neumann_shifted"

#: default trace exponent; any value > 1/2 works for second-order operators in d=1
DEFAULT_TRACE_EXPONENT = 0.51


@dataclass(frozen=True, eq=False)
class OperatorSpectrum:
    """Eigenpairs of a dissipative operator: B e_k = -alpha_k e_k, alpha_k > 0."""

    domain_length: float
    bc_kind: str
    eigenvalues: np.ndarray
    mass_shift: float = 0.0
    trace_exponent: float = DEFAULT_TRACE_EXPONENT

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    @property
    def spectral_gap(self) -> float:
        return float(self.eigenvalues[0])

    def describe(self) -> str:
        if self.bc_kind == NEUMANN_SHIFTED:
            return f"{self.bc_kind}(m={self.mass_shift})[L={self.domain_length},N={self.n_modes}]"
        return f"{self.bc_kind}[L={self.domain_length},N={self.n_modes}]"


@dataclass(frozen=True, eq=False)
class Field:
    """An element of H stored as coefficients against a spectrum's eigenbasis."""

    coeffs: np.ndarray
    basis: OperatorSpectrum
    grid_values: np.ndarray | None = None  # optional cached nodal synthesis


def build_basis(
    length: float,
    bc_kind: str,
    n_modes: int,
    mass_shift: float = 0.0,
    trace_exponent: float = DEFAULT_TRACE_EXPONENT,
) -> OperatorSpectrum:
    """Analytic eigenpairs of the constant-coefficient operator catalog.

    Dirichlet on (0, L): alpha_k = (k pi / L)^2 with sine eigenfunctions.
    Shifted Neumann (Laplacian minus mass m > 0): alpha_k = ((k-1) pi / L)^2 + m
    with cosine eigenfunctions.
    """
    if n_modes < 1:
        raise ValueError(f"need at least one mode, got {n_modes}")
    if length <= 0:
        raise ValueError(f"domain length must be positive, got {length}")
    k = np.arange(1, n_modes + 1, dtype=np.float64)
    if bc_kind == DIRICHLET:
        alphas = (k * np.pi / length) ** 2
        mass_shift = 0.0
    elif bc_kind == NEUMANN_SHIFTED:
        alphas = ((k - 1) * np.pi / length) ** 2 + mass_shift
    else:
        raise ValueError(f"unknown boundary condition kind {bc_kind!r}")
    if alphas[0] <= 0:
        raise HypothesisViolation(
            f"spectral gap min alpha_k = {alphas[0]} must be positive "
            f"(shifted Neumann needs mass_shift > 0, got {mass_shift})"
        )
    alphas.setflags(write=False)
    return OperatorSpectrum(
        domain_length=float(length),
        bc_kind=bc_kind,
        eigenvalues=alphas,
        mass_shift=float(mass_shift),
        trace_exponent=float(trace_exponent),
    )


def same_basis(a: OperatorSpectrum, b: OperatorSpectrum) -> bool:
    return a is b or (
        a.bc_kind == b.bc_kind
        and a.domain_length == b.domain_length
        and a.mass_shift == b.mass_shift
        and a.n_modes == b.n_modes
    )


def field(coeffs, basis: OperatorSpectrum) -> Field:
    c = np.asarray(coeffs, dtype=np.float64)
    if c.ndim != 1:
        raise ValueError("field coefficients must be one-dimensional")
    if c.size > basis.n_modes:
        raise BasisMismatch(
            f"{c.size} coefficients exceed the basis mode count {basis.n_modes}"
        )
    if c.size < basis.n_modes:
        c = np.concatenate([c, np.zeros(basis.n_modes - c.size)])
    c = c.copy()
    c.setflags(write=False)
    return Field(coeffs=c, basis=basis)


def zero_field(basis: OperatorSpectrum) -> Field:
    return field(np.zeros(basis.n_modes), basis)


def basis_vector(basis: OperatorSpectrum, k: int, scale: float = 1.0) -> Field:
    """The scaled eigenfunction e_k as a Field (k is 1-based)."""
    if not 1 <= k <= basis.n_modes:
        raise ValueError(f"mode index {k} outside 1..{basis.n_modes}")
    c = np.zeros(basis.n_modes)
    c[k - 1] = scale
    return field(c, basis)


def norm_h(x: Field) -> float:
    """Parseval: the H-norm is the Euclidean norm of the coefficients."""
    return float(np.sqrt(np.dot(x.coeffs, x.coeffs)))


def inner_h(x: Field, y: Field) -> float:
    if not same_basis(x.basis, y.basis):
        raise BasisMismatch("inner product requires a common basis")
    return float(np.dot(x.coeffs, y.coeffs))


# ---------------------------------------------------------------------------
# semigroup / norms


def apply_semigroup(spectrum: OperatorSpectrum, x: Field, t: float) -> Field:
    """e^{tB} x: coefficient-wise multiplication by exp(-alpha_k t)."""
    if t < 0:
        raise ValueError(f"semigroup time must be nonnegative, got {t}")
    _check_conforms(spectrum, x)
    return field(np.exp(-spectrum.eigenvalues * t) * x.coeffs, x.basis)


def hilbert_schmidt_decay(spectrum: OperatorSpectrum, t: float) -> float:
    """Truncated Hilbert-Schmidt norm of e^{tB}: (sum_k e^{-2 alpha_k t})^{1/2}."""
    if t <= 0:
        raise ValueError(f"Hilbert-Schmidt norm needs t > 0, got {t}")
    return float(np.sqrt(np.sum(np.exp(-2.0 * spectrum.eigenvalues * t))))


def trace_sum(spectrum: OperatorSpectrum, t: float) -> float:
    """sum_k e^{-t alpha_k}, the quantity bounded by c (t^1)^{-gamma} e^{-lambda t}."""
    return float(np.sum(np.exp(-spectrum.eigenvalues * t)))


def fit_trace_constant(spectrum: OperatorSpectrum, t_grid) -> float:
    """Smallest c with trace_sum(t) <= c (t^1)^{-gamma} e^{-lambda t} on the grid."""
    t = np.asarray(t_grid, dtype=np.float64)
    gamma = spectrum.trace_exponent
    lam = spectrum.spectral_gap
    envelope = np.minimum(t, 1.0) ** (-gamma) * np.exp(-lam * t)
    values = np.array([trace_sum(spectrum, ti) for ti in t])
    return float(np.max(values / envelope))


def project(x: Field, n: int) -> Field:
    """Zero all coefficients with index > n (1-based); idempotent, nonexpansive."""
    if not 1 <= n <= x.basis.n_modes:
        raise ValueError(f"projection level {n} outside 1..{x.basis.n_modes}")
    c = x.coeffs.copy()
    c[n:] = 0.0
    return field(c, x.basis)


def sobolev_norm(spectrum: OperatorSpectrum, x: Field, a: float) -> float:
    """|(I - B)^{a/2} x|_H, the spectral realization of the W^{a,2} scale."""
    if not 0.0 <= a <= 2.0:
        raise ValueError(f"Sobolev exponent must lie in [0, 2], got {a}")
    _check_conforms(spectrum, x)
    weights = (1.0 + spectrum.eigenvalues) ** a
    return float(np.sqrt(np.sum(weights * x.coeffs**2)))


# ---------------------------------------------------------------------------
# nodal grid / pseudo-spectral transforms
#
# Default M = 2N+1 nodes: DST-consistent interior points for the sine basis,
# midpoints for the cosine basis.  Either choice makes analyze(synthesize(x))
# exact for band-limited x and leaves a dealiasing margin for quadratic
# nonlinearities; a larger M sharpens the quadrature for oracle comparisons.


def quadrature_nodes(spectrum: OperatorSpectrum, n_nodes: int | None = None) -> np.ndarray:
    return _grid(spectrum, n_nodes)[0]


def quadrature_weights(spectrum: OperatorSpectrum, n_nodes: int | None = None) -> np.ndarray:
    return _grid(spectrum, n_nodes)[1]


@lru_cache(maxsize=None)
def _grid(spectrum: OperatorSpectrum, n_nodes: int | None = None):
    m = 2 * spectrum.n_modes + 1 if n_nodes is None else int(n_nodes)
    if m < spectrum.n_modes:
        raise ValueError(f"need at least {spectrum.n_modes} nodes, got {m}")
    length = spectrum.domain_length
    if spectrum.bc_kind == DIRICHLET:
        nodes = np.arange(1, m + 1) * length / (m + 1)
        weights = np.full(m, length / (m + 1))
    else:
        nodes = (np.arange(1, m + 1) - 0.5) * length / m
        weights = np.full(m, length / m)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def eigenfunction_matrix(spectrum: OperatorSpectrum, points) -> np.ndarray:
    """Synthesis matrix E with E[j, k-1] = e_k(points[j])."""
    pts = np.atleast_1d(np.asarray(points, dtype=np.float64))
    k = np.arange(1, spectrum.n_modes + 1)
    length = spectrum.domain_length
    if spectrum.bc_kind == DIRICHLET:
        return np.sqrt(2.0 / length) * np.sin(np.outer(pts, k) * np.pi / length)
    cols = np.cos(np.outer(pts, k - 1) * np.pi / length) * np.sqrt(2.0 / length)
    cols[:, 0] = np.sqrt(1.0 / length)
    return cols


@lru_cache(maxsize=None)
def synthesis_matrix(spectrum: OperatorSpectrum, n_nodes: int | None = None) -> np.ndarray:
    e = eigenfunction_matrix(spectrum, quadrature_nodes(spectrum, n_nodes))
    e.setflags(write=False)
    return e


@lru_cache(maxsize=None)
def analysis_matrix(spectrum: OperatorSpectrum, n_nodes: int | None = None) -> np.ndarray:
    """Maps nodal values to coefficients: A = E^T diag(w)."""
    a = (
        synthesis_matrix(spectrum, n_nodes).T
        * quadrature_weights(spectrum, n_nodes)[None, :]
    )
    a.setflags(write=False)
    return a


def synthesize(x: Field, points=None) -> np.ndarray:
    """Nodal values of x; defaults to the basis quadrature grid."""
    if points is None:
        if x.grid_values is not None:
            return x.grid_values
        return synthesis_matrix(x.basis) @ x.coeffs
    return eigenfunction_matrix(x.basis, points) @ x.coeffs


def analyze(values, spectrum: OperatorSpectrum) -> Field:
    """Quadrature projection of nodal values onto the eigenbasis.

    The node count is inferred from the value vector (the grid family is
    fixed by the basis), so oversampled oracle grids work too.
    """
    vals = np.asarray(values, dtype=np.float64)
    if vals.ndim != 1 or vals.size < spectrum.n_modes:
        raise BasisMismatch(
            f"expected at least {spectrum.n_modes} nodal values, got shape {vals.shape}"
        )
    m = None if vals.size == 2 * spectrum.n_modes + 1 else vals.size
    return field(analysis_matrix(spectrum, m) @ vals, spectrum)


def with_grid_cache(x: Field) -> Field:
    """Copy of x carrying its synthesized nodal values."""
    vals = synthesis_matrix(x.basis) @ x.coeffs
    vals.setflags(write=False)
    return Field(coeffs=x.coeffs, basis=x.basis, grid_values=vals)


def _check_conforms(spectrum: OperatorSpectrum, x: Field) -> None:
    if x.coeffs.size != spectrum.n_modes:
        raise BasisMismatch(
            f"field has {x.coeffs.size} coefficients, spectrum has {spectrum.n_modes} modes"
        )
