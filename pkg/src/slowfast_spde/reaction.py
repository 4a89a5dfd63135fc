"""Reaction terms, their Nemytskii operators and the fast-equation potential.

Terms come from a typed catalog with analytically certified derivative
bounds — the dissipativity gate needs L_g = sup|dg/dsigma2| exactly, not an
estimate.  Each entry also carries the antiderivative of g in its second
argument, which is what the potential (and hence the pCN acceptance ratio)
evaluates node by node.
"""

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import BasisMismatch, HypothesisViolation
from .spectral import (
    Field,
    OperatorSpectrum,
    analyze,
    field,
    quadrature_nodes,
    quadrature_weights,
    same_basis,
    synthesize,
)

# catalog codes, shared with the kernels module
LINEAR_DAMPED = 0
AFFINE_DAMPED = 1
TANH_COUPLED = 2
SATURATED_PRODUCT = 3
IDENTITY_SLOW = 4
FAST_VALUE = 5
LINEAR_COMBO = 6
SIN_PRODUCT = 7
LINEAR_COUPLED = 8

_SIGNATURES = {
    "linear_damped": (LINEAR_DAMPED, ("a",)),
    "affine_damped": (AFFINE_DAMPED, ("a", "c")),
    "tanh_coupled": (TANH_COUPLED, ("a", "b")),
    "saturated_product": (SATURATED_PRODUCT, ("a", "b")),
    "identity_slow": (IDENTITY_SLOW, ()),
    "fast_value": (FAST_VALUE, ()),
    "linear_combo": (LINEAR_COMBO, ("a", "b", "c")),
    "sin_product": (SIN_PRODUCT, ("a",)),
    "linear_coupled": (LINEAR_COUPLED, ("a", "b")),
}


def _logcosh(y):
    y = np.abs(y)
    return y + np.log1p(np.exp(-2.0 * y)) - math.log(2.0)


@dataclass(frozen=True)
class ReactionTerm:
    """One scalar reaction function (sigma1, sigma2) -> real from the catalog."""

    name: str
    code: int
    params: tuple

    def __call__(self, s1, s2):
        return term_value(self.code, self.params, s1, s2)

    def d1(self, s1, s2):
        return term_d1(self.code, self.params, s1, s2)

    def d2(self, s1, s2):
        return term_d2(self.code, self.params, s1, s2)

    def antiderivative(self, s1, y):
        """integral_0^y of the term in its second argument, first frozen."""
        return term_antiderivative(self.code, self.params, s1, y)

    @property
    def d1_bound(self) -> float:
        a, b, c = self.params
        return {
            LINEAR_DAMPED: 0.0,
            AFFINE_DAMPED: 0.0,
            TANH_COUPLED: abs(b),
            SATURATED_PRODUCT: abs(b),
            IDENTITY_SLOW: 1.0,
            FAST_VALUE: 0.0,
            LINEAR_COMBO: abs(a),
            SIN_PRODUCT: math.inf,  # a*cos(s1)*s2 is unbounded in s2
            LINEAR_COUPLED: abs(b),
        }[self.code]

    @property
    def d2_bound(self) -> float:
        a, b, c = self.params
        return {
            LINEAR_DAMPED: abs(a),
            AFFINE_DAMPED: abs(a),
            TANH_COUPLED: abs(a),
            SATURATED_PRODUCT: abs(a) + abs(b),
            IDENTITY_SLOW: 0.0,
            FAST_VALUE: 1.0,
            LINEAR_COMBO: abs(b),
            SIN_PRODUCT: abs(a),
            LINEAR_COUPLED: abs(a),
        }[self.code]

    @property
    def lipschitz(self) -> float:
        return max(self.d1_bound, self.d2_bound)

    def spec_string(self) -> str:
        _, names = _SIGNATURES[self.name]
        args = ", ".join(f"{n}={self.params[i]!r}" for i, n in enumerate(names))
        return f"{self.name}({args})"


def term_value(code, params, s1, s2):
    a, b, c = params
    if code == LINEAR_DAMPED:
        return -a * np.asarray(s2, dtype=np.float64)
    if code == AFFINE_DAMPED:
        return -a * s2 + c * np.ones_like(np.asarray(s2, dtype=np.float64))
    if code == TANH_COUPLED:
        return -a * s2 + b * np.tanh(s1)
    if code == SATURATED_PRODUCT:
        return -a * np.asarray(s2, dtype=np.float64) + b * np.tanh(s1) * np.tanh(s2)
    if code == IDENTITY_SLOW:
        return np.asarray(s1, dtype=np.float64) + 0.0 * np.asarray(s2)
    if code == FAST_VALUE:
        return np.asarray(s2, dtype=np.float64) + 0.0 * np.asarray(s1)
    if code == LINEAR_COMBO:
        return a * s1 + b * s2 + c * np.ones_like(np.asarray(s1, dtype=np.float64))
    if code == SIN_PRODUCT:
        return a * np.sin(s1) * np.asarray(s2, dtype=np.float64)
    if code == LINEAR_COUPLED:
        return -a * s2 + b * np.asarray(s1, dtype=np.float64)
    raise ValueError(f"unknown catalog code {code}")


def term_d1(code, params, s1, s2):
    a, b, c = params
    s1 = np.asarray(s1, dtype=np.float64)
    s2 = np.asarray(s2, dtype=np.float64)
    if code in (LINEAR_DAMPED, AFFINE_DAMPED, FAST_VALUE):
        return np.zeros(np.broadcast(s1, s2).shape)
    if code == TANH_COUPLED:
        return b / np.cosh(s1) ** 2 + 0.0 * s2
    if code == SATURATED_PRODUCT:
        return b * np.tanh(s2) / np.cosh(s1) ** 2
    if code == IDENTITY_SLOW:
        return np.ones(np.broadcast(s1, s2).shape)
    if code == LINEAR_COMBO:
        return a * np.ones(np.broadcast(s1, s2).shape)
    if code == SIN_PRODUCT:
        return a * np.cos(s1) * s2
    if code == LINEAR_COUPLED:
        return b * np.ones(np.broadcast(s1, s2).shape)
    raise ValueError(f"unknown catalog code {code}")


def term_d2(code, params, s1, s2):
    a, b, c = params
    s1 = np.asarray(s1, dtype=np.float64)
    s2 = np.asarray(s2, dtype=np.float64)
    if code in (LINEAR_DAMPED, AFFINE_DAMPED, TANH_COUPLED):
        return -a * np.ones(np.broadcast(s1, s2).shape)
    if code == SATURATED_PRODUCT:
        return -a + b * np.tanh(s1) / np.cosh(s2) ** 2
    if code == IDENTITY_SLOW:
        return np.zeros(np.broadcast(s1, s2).shape)
    if code == FAST_VALUE:
        return np.ones(np.broadcast(s1, s2).shape)
    if code == LINEAR_COMBO:
        return b * np.ones(np.broadcast(s1, s2).shape)
    if code == SIN_PRODUCT:
        return a * np.sin(s1) + 0.0 * s2
    if code == LINEAR_COUPLED:
        return -a * np.ones(np.broadcast(s1, s2).shape)
    raise ValueError(f"unknown catalog code {code}")


def term_antiderivative(code, params, s1, y):
    a, b, c = params
    s1 = np.asarray(s1, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if code == LINEAR_DAMPED:
        return -0.5 * a * y**2 + 0.0 * s1
    if code == AFFINE_DAMPED:
        return -0.5 * a * y**2 + c * y + 0.0 * s1
    if code == TANH_COUPLED:
        return -0.5 * a * y**2 + b * np.tanh(s1) * y
    if code == SATURATED_PRODUCT:
        return -0.5 * a * y**2 + b * np.tanh(s1) * _logcosh(y)
    if code == IDENTITY_SLOW:
        return s1 * y
    if code == FAST_VALUE:
        return 0.5 * y**2 + 0.0 * s1
    if code == LINEAR_COMBO:
        return a * s1 * y + 0.5 * b * y**2 + c * y
    if code == SIN_PRODUCT:
        return 0.5 * a * np.sin(s1) * y**2
    if code == LINEAR_COUPLED:
        return -0.5 * a * y**2 + b * s1 * y
    raise ValueError(f"unknown catalog code {code}")


def make_term(name: str, **params) -> ReactionTerm:
    if name not in _SIGNATURES:
        raise ValueError(
            f"unknown catalog entry {name!r}; available: {sorted(_SIGNATURES)}"
        )
    code, wanted = _SIGNATURES[name]
    unknown = set(params) - set(wanted)
    if unknown:
        raise ValueError(f"{name} does not take parameters {sorted(unknown)}")
    missing = set(wanted) - set(params)
    if missing:
        raise ValueError(f"{name} is missing parameters {sorted(missing)}")
    slots = {"a": 0.0, "b": 0.0, "c": 0.0}
    for key in wanted:
        slots[key] = float(params[key])
    return ReactionTerm(name=name, code=code, params=(slots["a"], slots["b"], slots["c"]))


_CALL_RE = re.compile(r"^\s*([a-z_][a-z0-9_]*)\s*\((.*)\)\s*$", re.IGNORECASE)


def parse_term(text: str) -> ReactionTerm:
    """Parse catalog call syntax such as ``linear_damped(a=0.5)``."""
    match = _CALL_RE.match(text)
    if not match:
        raise ValueError(f"cannot parse reaction term {text!r}; expected name(k=v, ...)")
    name, body = match.group(1), match.group(2).strip()
    params = {}
    if body:
        for chunk in body.split(","):
            if "=" not in chunk:
                raise ValueError(f"malformed parameter {chunk!r} in {text!r}")
            key, value = chunk.split("=", 1)
            try:
                params[key.strip()] = float(value)
            except ValueError:
                raise ValueError(f"non-numeric parameter {chunk!r} in {text!r}") from None
    return make_term(name, **params)


def _as_term(spec) -> ReactionTerm:
    if isinstance(spec, ReactionTerm):
        return spec
    if isinstance(spec, str):
        return parse_term(spec)
    raise TypeError(f"reaction spec must be a ReactionTerm or string, got {type(spec)}")


@dataclass(frozen=True, eq=False)
class ReactionSystem:
    """Validated pair (f, g) bound to the fast operator's spectrum."""

    f: ReactionTerm
    g: ReactionTerm
    spectrum: OperatorSpectrum

    @property
    def lipschitz_f(self) -> float:
        return self.f.lipschitz

    @property
    def lipschitz_g(self) -> float:
        return self.g.d2_bound

    @property
    def gap(self) -> float:
        """delta = (lambda - L_g)/2, the contraction rate of the fast flow."""
        return 0.5 * (self.spectrum.spectral_gap - self.lipschitz_g)


_CHECK_POINTS = [(-1.3, 0.7), (0.4, -2.1), (2.2, 1.9), (0.0, 0.0), (-0.6, -0.4)]


def _verify_partials(term: ReactionTerm) -> None:
    # supplied partials must match finite differences at sampled points
    tau = 1e-6
    for s1, s2 in _CHECK_POINTS:
        fd1 = (term(s1 + tau, s2) - term(s1 - tau, s2)) / (2 * tau)
        fd2 = (term(s1, s2 + tau) - term(s1, s2 - tau)) / (2 * tau)
        for got, want in ((term.d1(s1, s2), fd1), (term.d2(s1, s2), fd2)):
            if abs(got - want) > 1e-6 * max(1.0, abs(want)):
                raise AssertionError(
                    f"partial derivative of {term.name} disagrees with finite "
                    f"differences at {(s1, s2)}: {got} vs {want}"
                )
        fda = (
            term.antiderivative(s1, s2 + tau) - term.antiderivative(s1, s2 - tau)
        ) / (2 * tau)
        if abs(term(s1, s2) - fda) > 1e-6 * max(1.0, abs(fda)):
            raise AssertionError(
                f"antiderivative of {term.name} disagrees with the term at {(s1, s2)}"
            )


def make_reaction(f_spec, g_spec, spectrum: OperatorSpectrum) -> ReactionSystem:
    """Build and gate a reaction system: requires L_g < lambda.

    Raises HypothesisViolation when the dissipativity condition fails — the
    averaging theory does not apply to such a pair.
    """
    f = _as_term(f_spec)
    g = _as_term(g_spec)
    if not math.isfinite(g.d1_bound) or not math.isfinite(g.d2_bound):
        raise HypothesisViolation(
            f"fast reaction {g.spec_string()} lacks finite derivative bounds"
        )
    lam = spectrum.spectral_gap
    if g.d2_bound >= lam:
        raise HypothesisViolation(
            f"L_g = {g.d2_bound} >= spectral gap lambda = {lam}: "
            f"need L_g < lambda for {g.spec_string()}"
        )
    _verify_partials(f)
    _verify_partials(g)
    return ReactionSystem(f=f, g=g, spectrum=spectrum)


# ---------------------------------------------------------------------------
# Nemytskii evaluation and the potential


def _nodal_pair(x: Field, y: Field, n_nodes: int | None = None):
    if not same_basis(x.basis, y.basis):
        raise BasisMismatch("Nemytskii evaluation requires x, y on one basis")
    nodes = quadrature_nodes(x.basis, n_nodes)
    return synthesize(x, nodes), synthesize(y, nodes)


def eval_F(system: ReactionSystem, x: Field, y: Field, n_nodes: int | None = None) -> Field:
    """F(x, y): pointwise f on the nodal grid, re-analyzed to coefficients."""
    xg, yg = _nodal_pair(x, y, n_nodes)
    return analyze(system.f(xg, yg), x.basis)


def eval_G(system: ReactionSystem, x: Field, y: Field, n_nodes: int | None = None) -> Field:
    xg, yg = _nodal_pair(x, y, n_nodes)
    return analyze(system.g(xg, yg), x.basis)


def potential_U(
    system: ReactionSystem, x: Field, y: Field, n_nodes: int | None = None
) -> float:
    """U(x,y) = int_0^L int_0^{y(xi)} g(x(xi), s) ds dxi via nodal quadrature.

    The catalog supplies the inner integral analytically; n_nodes sharpens
    the outer quadrature when an oracle comparison needs it.
    """
    xg, yg = _nodal_pair(x, y, n_nodes)
    w = quadrature_weights(x.basis, n_nodes)
    return float(np.sum(w * system.g.antiderivative(xg, yg)))


def potential_gradient_check(
    system: ReactionSystem, x: Field, y: Field, direction: Field, tau: float = 1e-4
):
    """Return (analytic, numeric) for <U_y(x,y), k>: G(x,y) paired with k
    versus a central finite difference of U along k."""
    analytic = float(np.dot(eval_G(system, x, y).coeffs, direction.coeffs))
    up = field(y.coeffs + tau * direction.coeffs, y.basis)
    down = field(y.coeffs - tau * direction.coeffs, y.basis)
    numeric = (potential_U(system, x, up) - potential_U(system, x, down)) / (2 * tau)
    return analytic, numeric


_GAUSS_THETA = np.polynomial.legendre.leggauss(8)


def potential_x_derivative(
    system: ReactionSystem, x: Field, y: Field, direction: Field,
    n_nodes: int | None = None,
) -> float:
    """<U_x(x,y), k> = int_0^1 <G_x(x, theta y) k, y> dtheta (8-point Gauss)."""
    xg, yg = _nodal_pair(x, y, n_nodes)
    nodes = quadrature_nodes(x.basis, n_nodes)
    kg = synthesize(direction, nodes)
    w = quadrature_weights(x.basis, n_nodes)
    theta_nodes, gw = _GAUSS_THETA
    theta = 0.5 * (theta_nodes + 1.0)
    total = 0.0
    for th, tw in zip(theta, gw):
        inner = np.sum(w * system.g.d1(xg, th * yg) * kg * yg)
        total += 0.5 * tw * inner
    return float(total)
