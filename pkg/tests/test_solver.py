"""Stepper, right-hand side, initial-data preparation and drag schedules."""

import math

import numpy as np
import pytest

from isofluid.params import ParamSet
from isofluid.rescaling import FluidState
from isofluid.solver import (
    drag_schedule,
    mollifier_kernel,
    prepare_initial_data,
    rhs,
    run,
    step,
)
from isofluid.spectral import Grid, ScalarField, VectorField, grad_arrays, lap_arrays


def gaussian_state(g):
    s = np.exp(-g.r2 / 2.0)
    return FluidState(t=0.0, grid=g, sqrtR=ScalarField(g, s), Lambda=VectorField.zero(g))


def drag_state(g, pert=0.4, vel=0.6):
    y = np.broadcast_to(g.y[0], g.shape)
    s = np.exp(-(y**2) / 2.0) * np.sqrt(1.0 + pert * np.cos(math.pi * y / g.ell))
    lam = vel * np.exp(-(y**2) / 2.0) * np.sin(2 * math.pi * y / g.ell)
    return FluidState(
        t=0.0, grid=g, sqrtR=ScalarField(g, s), Lambda=VectorField.from_arrays(g, [lam])
    )


def test_rhs_constant_state_confinement_only():
    g = Grid(1, 6.0, 64)
    c = 0.7
    st = FluidState(
        t=0.0, grid=g, sqrtR=ScalarField.constant(g, math.sqrt(c)),
        Lambda=VectorField.zero(g),
    )
    dR, dM = rhs(st, ParamSet(nu=0.3, eps=0.1), (1.0, 0.0))
    y = np.broadcast_to(g.y[0], g.shape)
    assert np.abs(dR.values).max() < 1e-13
    assert np.abs(dM[0].values + 2.0 * y * c).max() < 1e-12


def test_rhs_gaussian_equilibrium_eps0():
    # pressure + confinement cancel identically on R = exp(-|y|^2)
    g = Grid(1, 8.0, 128)
    st = gaussian_state(g)
    dR, dM = rhs(st, ParamSet(nu=0.3, eps=0.0), (1.0, 0.0))
    assert np.abs(dR.values).max() < 1e-13
    assert np.abs(dM[0].values).max() < 1e-12


def test_korteweg_divergence_form_matches_potential_form():
    g = Grid(1, 6.0, 128)
    s = np.exp(-g.r2) + 0.2
    R = s**2
    lhs = grad_arrays(g, lap_arrays(g, s) / s)
    lhs = [R * a for a in lhs]
    st = FluidState(t=0.0, grid=g, sqrtR=ScalarField(g, s), Lambda=VectorField.zero(g))
    dR, dM = rhs(st, ParamSet(nu=0.0, eps=2.0), (1.0, 0.0))
    # subtract the pressure + confinement part (eps-independent)
    dR0, dM0 = rhs(st, ParamSet(nu=1e-30, eps=0.0), (1.0, 0.0))
    kort = dM[0].values - dM0[0].values  # = (eps^2/2) Div(S_K)
    rel = np.abs(kort - 2.0 * lhs[0]).max() / np.abs(kort).max()
    assert rel < 1e-8


def test_step_frozen_tau_preserves_equilibrium():
    g = Grid(1, 8.0, 128)
    st0 = gaussian_state(g)
    p = ParamSet(nu=0.3, eps=0.0, dt_policy="fixed", dt=1e-3)
    st = st0
    for _ in range(100):
        st = step(st, p, 1e-3, (1.0, 0.0))
    drift = np.abs(st.sqrtR.values**2 - st0.sqrtR.values**2).max()
    assert drift <= 1e-10


def test_step_mass_exact():
    g = Grid(1, 8.0, 128)
    st = drag_state(g)
    p = ParamSet(nu=0.1, eps=0.2, r1=0.05, dt_policy="fixed", dt=5e-3,
                 viscous_form="bounded")
    m0 = st.mass()
    for _ in range(20):
        st = step(st, p, 5e-3, (1.02, 0.2))
    # the zero mode of R is exactly constant; reported mass moves only by the
    # clipping of round-off-negative vacuum cells when states are emitted
    assert abs(st.mass() - m0) / m0 < 1e-12


def test_state_convergence_second_order():
    g = Grid(1, 8.0, 128)
    st0 = drag_state(g)
    finals = {}
    for dt in (8e-3, 4e-3, 2e-3, 5e-4):
        p = ParamSet(nu=0.1, eps=0.2, r1=0.05, dt_policy="fixed", dt=dt,
                     viscous_form="bounded")
        traj = run(st0, p, 0.1, diag_every=10**9)
        finals[dt] = traj.state_final.sqrtR.values ** 2
    e1 = np.abs(finals[8e-3] - finals[5e-4]).max()
    e2 = np.abs(finals[4e-3] - finals[5e-4]).max()
    e3 = np.abs(finals[2e-3] - finals[5e-4]).max()
    assert 2.5 < e1 / e2 < 6.5
    assert 2.5 < e2 / e3 < 8.0


def test_run_zero_horizon_returns_initial():
    g = Grid(1, 6.0, 64)
    st = gaussian_state(g)
    traj = run(st, ParamSet(nu=0.1, eps=0.0, dt_policy="fixed", dt=1e-3), 0.0)
    assert traj.n_steps == 0
    assert len(traj.records) == 1
    assert np.abs(traj.state_final.sqrtR.values - st.sqrtR.values).max() == 0.0


def test_run_times_strictly_increasing():
    g = Grid(1, 6.0, 64)
    st = drag_state(g, pert=0.2, vel=0.3)
    p = ParamSet(nu=0.05, eps=0.1, dt_policy="cfl", dt=5e-3)
    traj = run(st, p, 0.05, diag_every=1)
    traj.validate()
    assert traj.status == "ok"
    t = np.asarray(traj.times)
    assert np.all(np.diff(t) > 0)


def test_run_detects_blowup():
    # a grossly unstable fixed step must terminate with a failure status,
    # keeping the last valid state
    g = Grid(1, 6.0, 64)
    st = drag_state(g)
    p = ParamSet(nu=0.5, eps=1.0, dt_policy="fixed", dt=0.3, viscous_form="bounded")
    traj = run(st, p, 3.0, diag_every=1)
    assert traj.status in ("nan", "floor")
    assert np.all(np.isfinite(traj.state_final.sqrtR.values))


def test_prepare_initial_data_floor_and_mass():
    g = Grid(1, 8.0, 256)
    st = prepare_initial_data(
        g,
        lambda y: np.exp(-np.asarray(y) ** 2 / 2.0),
        lambda y: (np.zeros(g.shape),),
        theta=0.1,
        iota=0.3,
    )
    # the constant theta convolves to itself: sqrtR >= theta exactly
    assert st.sqrtR.values.min() >= 0.1 - 1e-12
    assert st.mass() > 0


def test_prepare_small_iota_approaches_unmollified():
    g = Grid(1, 6.0, 512)
    target = None
    errs = []
    for iota in (0.4, 0.2, 0.1):
        st = prepare_initial_data(
            g,
            lambda y: np.exp(-np.asarray(y) ** 2 / 2.0),
            lambda y: (np.zeros(g.shape),),
            theta=0.25,
            iota=iota,
        )
        from isofluid.solver import plateau

        raw = np.exp(-g.r2 / 2.0) * plateau(g) + 0.25
        errs.append(np.abs(st.sqrtR.values - raw).max())
    assert errs[0] > errs[1] > errs[2]


def test_mollifier_kernel_unit_mass_nonnegative():
    g = Grid(2, 4.0, 32)
    z = mollifier_kernel(g, 0.5)
    assert z.min() >= 0.0
    assert abs(z.sum() * g.weight - 1.0) < 1e-12
    with pytest.raises(ValueError):
        mollifier_kernel(g, -1.0)


def test_truncation_functionals_approach_full_space():
    from isofluid.experiments import truncation_study

    stats = truncation_study([4.0, 8.0, 16.0], n=1024)
    for key in ("mass_excess", "dirichlet_excess", "moment_excess"):
        seq = [abs(s[key]) for s in stats]
        assert seq[0] >= seq[1] >= seq[2] - 1e-12
    assert abs(stats[-1]["moment_excess"]) < 0.05


def test_drag_schedule_values():
    g = Grid(1, 10.0, 64)
    above_one = ScalarField.constant(g, 2.0)
    r0, r1, eps_l = drag_schedule(10.0, above_one, eps=0.25)
    assert abs(r0 - 0.1) < 1e-15  # indicator region empty
    assert abs(r1 - 0.1) < 1e-15
    assert abs(eps_l - 0.35) < 1e-15


def test_drag_schedule_log_product_vanishes():
    vals = []
    for ell in (4.0, 8.0, 16.0):
        g = Grid(1, ell, 256)
        R0 = ScalarField(g, np.exp(-g.r2))
        r0, _, _ = drag_schedule(ell, R0)
        logneg = np.where(R0.values < 1.0, np.log(np.maximum(R0.values, 1e-30)), 0.0)
        intlog = float(g.weight * logneg.sum())
        vals.append(abs(r0 * intlog))
    assert vals[0] > vals[1] > vals[2]


def test_full_regularized_balance_coarse():
    # with every regularization active on plateau data the balance holds to
    # the boundary-term floor (the y-weights are not periodic on the torus:
    # the identity carries O(theta^2 ell) face corrections, see the ledger)
    from isofluid.experiments import full_reg_setup

    state, params = full_reg_setup(n=128)
    traj = run(state, params, 0.2, diag_every=1)
    assert traj.status == "ok"
    assert traj.energy_balance_residual() < 5e-3
    assert traj.bd_identity_residual() < 2e-1


def test_dealiasing_resolution_invariance():
    # doubling n changes sampled diagnostics less than the time error scale
    finals = {}
    for n in (128, 256):
        g = Grid(1, 8.0, n)
        st = drag_state(g, pert=0.2, vel=0.3)
        p = ParamSet(nu=0.1, eps=0.1, r1=0.02, dt_policy="fixed", dt=5e-3,
                     viscous_form="bounded")
        traj = run(st, p, 0.1, diag_every=10**9)
        finals[n] = traj.records[-1].energy
    assert abs(finals[128] - finals[256]) < 1e-6 * max(1.0, abs(finals[256]))


def test_paramset_validation():
    with pytest.raises(ValueError):
        ParamSet(nu=0.0, eps=0.0)
    with pytest.raises(ValueError):
        ParamSet(nu=0.1, delta1=1.5)
    with pytest.raises(ValueError):
        ParamSet(nu=0.1, dt=-1.0)
    with pytest.raises(ValueError):
        ParamSet(nu=0.1, eta1=0.5, alpha=3.0).bind(1)
    with pytest.raises(ValueError):
        ParamSet(nu=0.1, eta2=0.5, s=1).bind(1)
    with pytest.raises(ValueError):
        ParamSet(nu=0.1, viscous_form="magic")
    p = ParamSet(nu=0.1, eta2=0.5).bind(2)
    assert p.s == 3  # default s = d + 1
