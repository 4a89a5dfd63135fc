"""Catalog of Lipschitz test functionals with certified constants.

Mirrors the reaction catalog rationale: semigroup/mixing tests need the
Lipschitz constant of phi exactly, so phi comes from a typed menu instead of
arbitrary callables.
"""

from dataclasses import dataclass

import numpy as np

from .spectral import Field

INNER = "inner"
NORM = "norm"
TANH_INNER = "tanh_inner"


@dataclass(frozen=True, eq=False)
class Functional:
    """phi: H -> R applied to coefficient arrays of shape (..., n_modes)."""

    kind: str
    h: np.ndarray | None = None

    def __call__(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states, dtype=np.float64)
        if self.kind == INNER:
            return states @ self.h
        if self.kind == NORM:
            return np.sqrt(np.sum(states**2, axis=-1))
        if self.kind == TANH_INNER:
            return np.tanh(states @ self.h)
        raise ValueError(f"unknown functional kind {self.kind!r}")

    @property
    def lipschitz(self) -> float:
        if self.kind == NORM:
            return 1.0
        return float(np.sqrt(np.dot(self.h, self.h)))


def make_functional(kind: str, h: Field | np.ndarray | None = None) -> Functional:
    if kind == NORM:
        return Functional(kind=NORM)
    if kind not in (INNER, TANH_INNER):
        raise ValueError(f"unknown functional kind {kind!r}")
    if h is None:
        raise ValueError(f"functional kind {kind!r} needs a direction h")
    coeffs = h.coeffs if isinstance(h, Field) else np.asarray(h, dtype=np.float64)
    coeffs = coeffs.copy()
    coeffs.setflags(write=False)
    return Functional(kind=kind, h=coeffs)
