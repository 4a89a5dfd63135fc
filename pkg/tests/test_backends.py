"""Lane equivalence: the numba kernels and the numpy fallback must agree.

Polynomial catalog entries agree bitwise (matched summation order);
transcendental entries may differ by an ulp per evaluation because numpy's
SIMD tanh/sin round differently from libm.
"""

import subprocess
import sys

import numpy as np
import pytest

from slowfast_spde.kernels import averaged_linear, coupled_batch, ou_batch, pcn_chain
from slowfast_spde.noise import NoiseStream, ou_step_factors
from slowfast_spde.reaction import make_reaction
from slowfast_spde.spectral import (
    analysis_matrix,
    build_basis,
    eigenfunction_matrix,
    quadrature_nodes,
    quadrature_weights,
    synthesis_matrix,
)

S = build_basis(np.pi, "dirichlet", 8)
EV = synthesis_matrix(S)
AV = analysis_matrix(S)
XG = 0.3 * np.sin(quadrature_nodes(S))


def _ou(impl, g_spec):
    system = make_reaction("fast_value()", g_spec, S)
    decay, phi1, nsd = ou_step_factors(S.eigenvalues, 0.05)
    z = NoiseStream(seed=5).normals(300, 8).reshape(3, 100, 8)
    v0 = np.zeros((3, 8))
    return ou_batch(
        decay, phi1, nsd, EV, AV, XG, system.g.code, system.g.params, v0, z, 1, impl=impl
    )


@pytest.mark.parametrize("g_spec", ["affine_damped(a=0.5, c=1.0)", "linear_damped(a=0.5)"])
def test_ou_lanes_bitwise_for_polynomial_terms(g_spec):
    np.testing.assert_array_equal(_ou("numba", g_spec), _ou("numpy", g_spec))


@pytest.mark.parametrize(
    "g_spec", ["tanh_coupled(a=0.5, b=0.2)", "saturated_product(a=0.5, b=0.2)"]
)
def test_ou_lanes_close_for_transcendental_terms(g_spec):
    a, b = _ou("numba", g_spec), _ou("numpy", g_spec)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_pcn_lanes_match(with_impl=("numba", "numpy")):
    system = make_reaction("fast_value()", "tanh_coupled(a=0.5, b=0.2)", S)
    wq = quadrature_weights(S)
    ref_sd = np.sqrt(1 / (2 * S.eigenvalues))
    ns = NoiseStream(seed=6)
    z = ns.normals(2000, 8)
    logu = np.log(np.maximum(ns.uniforms(2000), 1e-300))
    outs = []
    for impl in with_impl:
        samples, accepted = pcn_chain(
            EV, wq, XG, system.g.code, system.g.params,
            np.zeros(8), ref_sd, 0.6, z, logu, impl=impl,
        )
        outs.append((samples, accepted))
    assert outs[0][1] == outs[1][1]
    np.testing.assert_allclose(outs[0][0], outs[1][0], rtol=0, atol=1e-12)


def _coupled(impl, f_spec, g_spec):
    system = make_reaction(f_spec, g_spec, S)
    sa = S
    mats = dict(
        EuA=synthesis_matrix(sa),
        EvA=eigenfunction_matrix(S, quadrature_nodes(sa)),
        ATA=analysis_matrix(sa),
        EuB=eigenfunction_matrix(sa, quadrature_nodes(S)),
        EvB=synthesis_matrix(S),
        ATB=analysis_matrix(S),
    )
    decay_a, phi1_a, _ = ou_step_factors(sa.eigenvalues, 0.01)
    decay_b, phi1_b, nsd_b = ou_step_factors(S.eigenvalues, 0.1)
    z = NoiseStream(seed=7).normals(50 * 4, 8)[None]
    u0 = 0.3 * np.ones((1, 8))
    v0 = np.zeros((1, 8))
    return coupled_batch(
        system.f.code, system.f.params, system.g.code, system.g.params,
        decay_a, phi1_a, decay_b, phi1_b, nsd_b,
        mats["EuA"], mats["EvA"], mats["ATA"], mats["EuB"], mats["EvB"], mats["ATB"],
        u0, v0, z, 4, impl=impl,
    )


def test_coupled_lanes_bitwise_for_polynomial_terms(self=None):
    a = _coupled("numba", "fast_value()", "affine_damped(a=0.5, c=1.0)")
    b = _coupled("numpy", "fast_value()", "affine_damped(a=0.5, c=1.0)")
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_averaged_lanes_match():
    system = make_reaction("fast_value()", "affine_damped(a=0.5, c=1.0)", S)
    mats = dict(
        EuA=synthesis_matrix(S), ATA=analysis_matrix(S),
        EuB=eigenfunction_matrix(S, quadrature_nodes(S)), ATB=analysis_matrix(S),
        EmA=eigenfunction_matrix(S, quadrature_nodes(S)),
    )
    decay_a, phi1_a, _ = ou_step_factors(S.eigenvalues, 0.01)
    u0 = 0.3 * np.ones(8)
    outs = [
        averaged_linear(
            system.f.code, system.f.params, system.g.code, system.g.params, 0.5,
            decay_a, phi1_a, S.eigenvalues,
            mats["EuA"], mats["ATA"], mats["EuB"], mats["ATB"], mats["EmA"],
            u0, 60, impl=impl,
        )
        for impl in ("numba", "numpy")
    ]
    np.testing.assert_array_equal(outs[0], outs[1])


def test_backend_env_var_selects_numpy_lane():
    code = (
        "import os; os.environ['SLOWFAST_SPDE_BACKEND']='numpy'; "
        "import slowfast_spde; print(slowfast_spde.BACKEND)"
    )
    out = subprocess.run(
        [sys.executable, "-c", code], capture_output=True, text=True, check=True
    )
    assert out.stdout.strip() == "numpy"


def test_backend_env_var_rejects_garbage():
    code = (
        "import os; os.environ['SLOWFAST_SPDE_BACKEND']='cuda'; "
        "import slowfast_spde"
    )
    out = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True)
    assert out.returncode != 0
    assert "SLOWFAST_SPDE_BACKEND" in out.stderr
