"""Change of variables, Madelung transform, original-variable energy."""

import math

import numpy as np
import pytest

from isofluid import diagnostics as diag
from isofluid.rescaling import (
    FluidState,
    WaveFunction,
    from_self_similar,
    madelung,
    original_energy,
    to_self_similar,
)
from isofluid.spectral import Grid, ScalarField, VectorField, integrate


def _smooth_state(g, offset=0.05, vel=0.3):
    y0 = np.broadcast_to(g.y[0], g.shape)
    rho = ScalarField(g, np.exp(-g.r2) + offset)
    u = VectorField.from_arrays(
        g,
        [vel * np.sin(math.pi * y0 / g.ell)]
        + [np.zeros(g.shape) for _ in range(g.d - 1)],
    )
    return rho, u


def test_identity_scaling_at_t0():
    g = Grid(1, 8.0, 128)
    rho, u = _smooth_state(g)
    state = to_self_similar(rho, u, (1.0, 0.0))
    ratio = state.mass_ratio
    # R = rho / mass_ratio, U = u at tau = 1, taudot = 0
    assert np.abs(state.sqrtR.values**2 - rho.values / ratio).max() < 1e-13
    U = state.velocity()
    assert np.abs(U[0].values - u[0].values).max() < 1e-9


def test_round_trip():
    g = Grid(1, 6.0, 128)
    rho, u = _smooth_state(g)
    for tau in ((1.0, 0.0), (1.7, 0.9)):
        state = to_self_similar(rho, u, tau)
        rho2, u2 = from_self_similar(state, tau)
        assert np.abs(rho2.values - rho.values).max() < 1e-12
        assert np.abs(u2[0].values - u[0].values).max() < 1e-9


def test_mass_normalization():
    g = Grid(2, 6.0, 32)
    rho, u = _smooth_state(g)
    state = to_self_similar(rho, u, (1.3, 0.4))
    gamma_mass = integrate(ScalarField(g, np.exp(-g.r2)))
    # integrate(R) = |Gamma|_L1 (computed quadrature value, about pi^(d/2))
    assert abs(state.mass() - gamma_mass) < 1e-10


def test_negative_density_rejected():
    g = Grid(1, 4.0, 32)
    rho = ScalarField(g, -np.ones(g.shape))
    with pytest.raises(ValueError):
        to_self_similar(rho, VectorField.zero(g), (1.0, 0.0))


def test_madelung_plane_wave():
    g = Grid(1, 4.0, 64)
    eps = 1.3
    k = 2 * math.pi / g.ell  # mode m = 2
    y0 = np.broadcast_to(g.y[0], g.shape)
    psi = WaveFunction.from_complex(0.0, g, np.exp(1j * k * y0), eps)
    st = madelung(psi)
    assert np.abs(st.sqrtR.values - 1.0).max() < 1e-12
    assert np.abs(st.Lambda[0].values - eps * k).max() < 1e-9


def test_madelung_real_gaussian_zero_velocity():
    g = Grid(1, 6.0, 128)
    psi = WaveFunction.from_complex(0.0, g, np.exp(-g.r2 / 2.0) + 0j, 1.0)
    st = madelung(psi)
    assert np.abs(st.Lambda[0].values).max() < 1e-14
    # rho from madelung equals |psi|^2 pointwise exactly
    assert np.abs(st.sqrtR.values**2 - np.exp(-g.r2)).max() < 1e-14


def test_madelung_irrotationality_2d():
    g = Grid(2, 6.0, 64)
    y0 = np.broadcast_to(g.y[0], g.shape)
    z = (0.2 + np.exp(-g.r2)) * np.exp(1j * (math.pi / g.ell) * y0)
    st = madelung(WaveFunction.from_complex(0.0, g, z, 1.0))
    assert diag.irrotationality_residual(st) < 1e-8


def test_energy_transport_identity_at_unit_tau():
    # for mass-matched input, the self-similar pseudo-energy at tau = (1, 0)
    # equals the original energy plus the moment term (mass_ratio = 1)
    g = Grid(1, 7.0, 128)
    rho = ScalarField(g, np.exp(-g.r2))  # carries the reference mass
    y0 = np.broadcast_to(g.y[0], g.shape)
    u = VectorField.from_arrays(g, [0.3 * np.exp(-g.r2 / 2) * np.sin(math.pi * y0 / g.ell)])
    eps = 0.7
    state = to_self_similar(rho, u, (1.0, 0.0))
    assert abs(state.mass_ratio - 1.0) < 1e-12
    E0 = original_energy(rho, u, eps)
    moment = integrate(ScalarField(g, state.sqrtR.values**2 * g.r2))
    EE = diag.energy(state, (1.0, 0.0), eps)
    assert abs(EE - (E0 + moment)) < 1e-10 * max(1.0, abs(EE))


def test_original_energy_finite():
    g = Grid(1, 6.0, 128)
    rho, u = _smooth_state(g)
    e = original_energy(rho, u, 0.5)
    assert math.isfinite(e)


def test_vacuum_compatibility_enforced():
    g = Grid(1, 4.0, 64)
    s = np.where(np.abs(np.broadcast_to(g.y[0], g.shape)) < 2.0, 1.0, 0.0)
    lam = np.ones(g.shape)  # violates Lambda = 0 on {sqrtR = 0}
    st = FluidState(
        t=0.0, grid=g, sqrtR=ScalarField(g, s),
        Lambda=VectorField.from_arrays(g, [lam]),
    )
    with pytest.raises(ValueError):
        st.validate()
    ok = st.enforce_vacuum()
    ok.validate()
    assert np.abs(ok.Lambda[0].values[s == 0.0]).max() == 0.0


def test_wavefunction_validation():
    g = Grid(1, 4.0, 32)
    with pytest.raises(ValueError):
        WaveFunction.from_complex(0.0, g, np.ones(g.shape, dtype=complex), -1.0)
