"""Batch execution: named initial data, parameter-limit sweeps, long-time
studies, the NLS/hydro cross-check, and the self-test gate.

Configs are plain nested dicts (read from JSON by the CLI); every run emits a
diagnostics CSV, a metadata JSON carrying the config hash, and optional
snapshots.  Identical config + seed reproduces the CSV bitwise (fixed
reduction order, single-threaded numerics per run).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__ as _pkg_version
from . import diagnostics as diag
from . import io as io_
from . import lognls, solver
from .params import ParamSet
from .rescaling import FluidState, WaveFunction, madelung
from .spectral import Grid, ScalarField, VectorField, integrate
from .tauode import tau_solve, tau_asymptotic_ratio

__all__ = ["ExperimentConfig", "BadConfig", "run_experiment", "check", "make_initial", "FAULTS"]

# test seam: check() families consult this mapping so a deliberately injected
# defect (e.g. a sign flip in the Korteweg identity) is provably caught
FAULTS: dict = {}

EXPERIMENT_KINDS = (
    "simulate",
    "sweep_delta",
    "sweep_eta",
    "sweep_drag_ell",
    "longtime",
    "korteweg_crosscheck",
    "tau",
    "check",
)

SCHEMA_VERSION = 1


class BadConfig(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    out_dir: str = "out"
    seed: int = 0
    threads: int = 1
    grid: dict = field(default_factory=lambda: {"d": 1, "ell": 8.0, "n": 256})
    params: dict = field(default_factory=dict)
    initial: dict = field(default_factory=lambda: {"generator": "gaussian"})
    t_end: float = 1.0
    snapshot_every: int = 0
    diag_every: int = 1
    ladder: list = field(default_factory=list)
    filter: str | None = None
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        version = raw.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise BadConfig(f"unsupported schema_version {version}")
        kind = raw.pop("kind", None)
        if kind not in EXPERIMENT_KINDS:
            raise BadConfig(f"kind must be one of {EXPERIMENT_KINDS}, got {kind!r}")
        cfg = cls(kind=kind)
        for key, val in raw.items():
            if not hasattr(cfg, key):
                raise BadConfig(f"unknown config key {key!r}")
            setattr(cfg, key, val)
        if cfg.ladder and any(
            not (a < b) for a, b in zip(cfg.ladder, cfg.ladder[1:])
        ) and any(not (a > b) for a, b in zip(cfg.ladder, cfg.ladder[1:])):
            raise BadConfig("ladder axis must be strictly monotone")
        return cfg

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "out_dir": self.out_dir,
            "seed": self.seed,
            "threads": self.threads,
            "grid": self.grid,
            "params": self.params,
            "initial": self.initial,
            "t_end": self.t_end,
            "snapshot_every": self.snapshot_every,
            "diag_every": self.diag_every,
            "ladder": self.ladder,
            "filter": self.filter,
            "schema_version": self.schema_version,
        }

    def make_grid(self) -> Grid:
        g = self.grid
        return Grid(int(g.get("d", 1)), float(g.get("ell", 8.0)), int(g.get("n", 256)))

    def make_params(self) -> ParamSet:
        return ParamSet(**self.params)


# ---------------------------------------------------------------------------
# initial-data generators (all parameters logged via the config)


def _gaussian_sqrtR(grid: Grid) -> np.ndarray:
    return np.exp(-grid.r2 / 2.0)


def make_initial(grid: Grid, spec: dict, seed: int = 0) -> FluidState:
    """Named generators: gaussian, perturbed_gaussian (x (1 + a cos(pi m y/ell))),
    two_bump, prepared_gaussian (plateau + theta, mollified), random_positive."""
    name = spec.get("generator", "gaussian")
    rng = np.random.default_rng(spec.get("seed", seed))
    if name == "gaussian":
        s = _gaussian_sqrtR(grid)
    elif name == "perturbed_gaussian":
        a = float(spec.get("amplitude", 0.2))
        m = int(spec.get("mode", 1))
        y0 = np.broadcast_to(grid.y[0], grid.shape)
        fac = 1.0 + a * np.cos(math.pi * m * y0 / grid.ell)
        if np.any(fac <= 0):
            raise BadConfig("perturbation amplitude makes the density negative")
        s = _gaussian_sqrtR(grid) * np.sqrt(fac)
    elif name == "two_bump":
        c = float(spec.get("separation", 2.0))
        width = float(spec.get("width", 1.0))
        y0 = np.broadcast_to(grid.y[0], grid.shape)
        r2rest = grid.r2 - y0**2
        s = np.exp(-((y0 - c) ** 2 + r2rest) / (2 * width**2)) + np.exp(
            -((y0 + c) ** 2 + r2rest) / (2 * width**2)
        )
    elif name == "prepared_gaussian":
        theta = float(spec.get("theta", 1.0 / grid.ell**3))
        iota = float(spec.get("iota", 1.0 / grid.ell))
        return solver.prepare_initial_data(
            grid,
            lambda *y: np.exp(-sum(np.asarray(c) ** 2 for c in y) / 2.0),
            lambda *y: tuple(np.zeros(grid.shape) for _ in range(grid.d)),
            theta,
            iota,
        )
    elif name == "random_positive":
        s = random_positive_field(grid, rng, spec.get("roughness", 4.0))
        s = np.sqrt(s)
    else:
        raise BadConfig(f"unknown generator {name!r}")
    state = FluidState(
        t=0.0,
        grid=grid,
        sqrtR=ScalarField(grid, s),
        Lambda=VectorField.zero(grid),
    )
    amp = float(spec.get("velocity_amplitude", 0.0))
    if amp:
        y0 = np.broadcast_to(grid.y[0], grid.shape)
        lam = [amp * s * np.sin(math.pi * y0 / grid.ell)] + [
            np.zeros(grid.shape) for _ in range(grid.d - 1)
        ]
        state = FluidState(
            t=0.0, grid=grid, sqrtR=state.sqrtR,
            Lambda=VectorField.from_arrays(grid, lam),
        )
    gamma_mass = float(np.exp(-grid.r2).sum() * grid.weight)
    state.mass_ratio = state.mass() / gamma_mass
    return state


def random_positive_field(grid: Grid, rng, roughness: float = 4.0) -> np.ndarray:
    """Strictly positive random field: exp of low-pass-filtered white noise,
    shaped by a Gaussian envelope so moments stay finite."""
    noise = rng.standard_normal(grid.shape)
    nh = np.fft.fftn(noise)
    filt = np.exp(-grid.k2 / roughness**2)
    smooth = np.fft.ifftn(nh * filt).real
    smooth *= 1.0 / max(smooth.std(), 1e-300)
    return np.exp(0.5 * smooth) * np.exp(-grid.r2 / 2.0)


def make_wavefunction(grid: Grid, spec: dict, eps: float) -> WaveFunction:
    """Wavefunction generators: gaussian, offset_gaussian (strictly positive
    modulus), plane_wave_phase (gaussian plus offset times exp(i k.y))."""
    name = spec.get("generator", "gaussian")
    amp = float(spec.get("offset", 0.1))
    w = float(spec.get("offset_width", 2.0))
    # the "offset" floor is a wide Gaussian, not a constant: the modulus must
    # be negligible near the box faces, where the periodized confinement force
    # is discontinuous and would drain an O(1) boundary density unphysically
    floor = amp * np.exp(-grid.r2 / (2.0 * w**2))
    if name == "gaussian":
        z = np.exp(-grid.r2 / 2.0).astype(complex)
    elif name == "offset_gaussian":
        z = (floor + np.exp(-grid.r2 / 2.0)).astype(complex)
    elif name == "plane_wave_phase":
        m = int(spec.get("mode", 1))
        kvec = math.pi * m / grid.ell
        phase = sum(kvec * np.broadcast_to(grid.y[i], grid.shape) for i in range(grid.d))
        z = (floor + np.exp(-grid.r2 / 2.0)) * np.exp(1j * phase)
    else:
        raise BadConfig(f"unknown wavefunction generator {name!r}")
    if spec.get("mass_match", True):
        target = float(np.exp(-grid.r2).sum() * grid.weight)
        have = float((np.abs(z) ** 2).sum() * grid.weight)
        z *= math.sqrt(target / have)
    return WaveFunction.from_complex(0.0, grid, z, eps)


# ---------------------------------------------------------------------------
# experiment driver


def run_experiment(config: ExperimentConfig) -> int:
    """Execute one experiment; returns the process exit status
    (0 ok, 1 invariant violation, 2 run failure, 3 bad config)."""
    try:
        kind = config.kind
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        meta = {
            "config": config.as_dict(),
            "config_hash": io_.config_hash(config.as_dict()),
            "version": _pkg_version,
        }
        if kind == "simulate":
            status = _run_single(config, out, meta)
            return 0 if status == "ok" else 2
        if kind in ("sweep_delta", "sweep_eta", "sweep_drag_ell"):
            return _run_sweep(config, out, meta)
        if kind == "longtime":
            return _run_longtime(config, out, meta)
        if kind == "korteweg_crosscheck":
            return _run_crosscheck(config, out, meta)
        if kind == "tau":
            return _run_tau(config, out, meta)
        if kind == "check":
            ok, failures = check(config.filter)
            io_.write_metadata(out, {**meta, "failures": failures})
            return 0 if ok else 1
        raise BadConfig(f"unhandled kind {kind!r}")
    except BadConfig:
        raise
    except solver.SolverError:
        return 2


def _run_single(config: ExperimentConfig, out: Path, meta: dict) -> str:
    grid = config.make_grid()
    params = config.make_params()
    initial = make_initial(grid, config.initial, config.seed)
    traj = solver.run(
        initial,
        params,
        config.t_end,
        snapshot_every=config.snapshot_every,
        diag_every=config.diag_every,
    )
    io_.write_diagnostics_csv(out, traj.records, grid.d)
    for snap in traj.snapshots:
        io_.write_snapshot(io_.snapshot_path(out, "R", snap.t), snap.R, snap.t)
        for i, lam in enumerate(snap.Lambda.components):
            io_.write_snapshot(io_.snapshot_path(out, f"Lambda{i}", snap.t), lam, snap.t)
    io_.write_metadata(
        out,
        {**meta, "status": traj.status, "n_steps": traj.n_steps,
         "params": params.bind(grid.d).as_dict()},
    )
    return traj.status


def _ladder_values(config: ExperimentConfig, default: list) -> list:
    return list(config.ladder) if config.ladder else default


def _run_sweep(config: ExperimentConfig, out: Path, meta: dict) -> int:
    kind = config.kind
    grid = config.make_grid()
    base = dict(config.params)
    rows = []
    finals = []

    if kind == "sweep_drag_ell":
        values = _ladder_values(config, [4.0, 8.0, 16.0])
    elif kind == "sweep_delta":
        values = _ladder_values(config, [1e-2, 1e-3, 1e-4])
    else:
        values = _ladder_values(config, [1e-10, 1e-11, 1e-12])

    def one_point(v):
        if kind == "sweep_drag_ell":
            g = Grid(grid.d, float(v), grid.n)
            init = make_initial(
                g,
                {"generator": "prepared_gaussian",
                 "theta": 1.0 / v**3, "iota": 1.0 / v},
                config.seed,
            )
            r0, r1, eps_l = solver.drag_schedule(v, init.R, base.get("eps", 0.0))
            p = ParamSet(**{**base, "r0": r0, "r1": r1, "eps": eps_l})
        else:
            g = grid
            init = make_initial(g, config.initial, config.seed)
            if kind == "sweep_delta":
                p = ParamSet(**{**base, "delta1": v, "delta2": v})
            else:
                p = ParamSet(**{**base, "eta2": v, "eta1": base.get("eta1", 0.0)})
        traj = solver.run(init, p, config.t_end, diag_every=max(config.diag_every, 1))
        return v, traj

    workers = max(1, int(config.threads))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one_point, values))
    else:
        results = [one_point(v) for v in values]

    any_fail = False
    for v, traj in results:
        rec = traj.records[-1]
        rows.append(
            {
                "axis": v,
                "status": traj.status,
                "mass": rec.mass,
                "energy": rec.energy,
                "energy_reg": rec.energy_reg,
                "second_moment": rec.second_moment,
                "min_density": rec.min_density,
                "n_steps": traj.n_steps,
            }
        )
        finals.append(traj.state_final)
        any_fail |= traj.status != "ok"

    # trailing pairwise-difference block (terminal density L2, same grid only)
    diffs = []
    for (va, ta), (vb, tb) in zip(results, results[1:]):
        sa, sb = ta.state_final, tb.state_final
        if sa.grid == sb.grid:
            num = math.sqrt(
                integrate(ScalarField(sa.grid, (sa.R.values - sb.R.values) ** 2))
            )
            den = math.sqrt(integrate(ScalarField(sa.grid, sb.R.values**2)))
            diffs.append({"pair": f"{va}->{vb}", "l2_density_diff": num / max(den, 1e-300)})
        else:
            diffs.append(
                {"pair": f"{va}->{vb}",
                 "l2_density_diff": float("nan"),
                 "mass_diff": abs(rows_by_axis(rows, va)["mass"] - rows_by_axis(rows, vb)["mass"])}
            )
    _write_sweep_csv(out / "sweep.csv", rows, diffs)
    io_.write_metadata(out, {**meta, "rows": rows, "pairwise": diffs})
    return 2 if any_fail else 0


def rows_by_axis(rows, v):
    for r in rows:
        if r["axis"] == v:
            return r
    raise KeyError(v)


def _write_sweep_csv(path: Path, rows, diffs):
    import csv as _csv

    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        if rows:
            cols = list(rows[0].keys())
            w.writerow(cols)
            for r in rows:
                w.writerow([r[c] for c in cols])
        w.writerow([])
        w.writerow(["pair", "l2_density_diff"])
        for d in diffs:
            w.writerow([d["pair"], d.get("l2_density_diff")])


def _run_longtime(config: ExperimentConfig, out: Path, meta: dict) -> int:
    grid = config.make_grid()
    params = config.make_params()
    initial = make_initial(grid, config.initial, config.seed)
    traj = solver.run(
        initial, params, config.t_end,
        diag_every=max(config.diag_every, 1),
    )
    io_.write_diagnostics_csv(out, traj.records, grid.d)
    mass = traj.records[-1].mass
    gam = diag.matched_gaussian(grid, mass)
    targets = {
        "mass": mass,
        "second_moment_target": float(grid.weight * (gam * grid.r2).sum()),
        "second_moment_final": traj.records[-1].second_moment,
    }
    io_.write_metadata(out, {**meta, "status": traj.status, "targets": targets})
    return 0 if traj.status == "ok" else 2


def _run_crosscheck(config: ExperimentConfig, out: Path, meta: dict) -> int:
    grid = config.make_grid()
    eps = float(config.params.get("eps", 1.0))
    spec = dict(config.initial)
    if spec.get("generator") in (None, "gaussian"):
        spec = {"generator": "offset_gaussian", "offset": 0.35, "offset_width": 3.0}
    psi0 = make_wavefunction(grid, spec, eps)
    ladder = config.ladder or [[1e-3, 2e-3], [1e-4, 1e-3]]
    rows = []
    ok = True
    for delta_stab, dt in ladder:
        rep = lognls.nls_to_hydro_crosscheck(
            psi0, config.t_end, delta_stab=float(delta_stab), dt=float(dt)
        )
        rows.append(rep.__dict__)
        ok &= rep.status == "ok"
    io_.write_metadata(out, {**meta, "rows": rows})
    return 0 if ok else 2


def _run_tau(config: ExperimentConfig, out: Path, meta: dict) -> int:
    sol = tau_solve(config.t_end, 1e-10, 1e-12)
    import csv as _csv

    with open(out / "tau.csv", "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["t", "tau", "taudot", "first_integral_residual"])
        res = sol.first_integral_residual()
        for i in range(len(sol.t)):
            w.writerow(
                ["%.17g" % sol.t[i], "%.17g" % sol.tau[i],
                 "%.17g" % sol.taudot[i], "%.17g" % res[i]]
            )
    io_.write_metadata(out, {**meta, "nodes": len(sol.t)})
    return 0


# ---------------------------------------------------------------------------
# invariant gate


def check(filter: str | None = None, verbose: bool = True) -> tuple[bool, list[str]]:
    """Run the invariant/identity suite on generated fields at desk scale.

    Returns (ok, failures).  Families: tau, spectral, rescaling, korteweg,
    csiszar, llogl, compat, mass, energy, bd, nls, prepare, snapshots.
    """
    failures: list[str] = []
    families = {
        "tau": _check_tau,
        "spectral": _check_spectral,
        "rescaling": _check_rescaling,
        "korteweg": _check_korteweg,
        "csiszar": _check_csiszar,
        "llogl": _check_llogl,
        "compat": _check_compat,
        "mass": _check_mass,
        "energy": _check_energy_balance,
        "bd": _check_bd_identity,
        "nls": _check_nls,
        "prepare": _check_prepare,
        "snapshots": _check_snapshots,
    }
    for name, fn in families.items():
        if filter and filter not in name:
            continue
        t0 = time.time()
        errs = fn()
        took = time.time() - t0
        if errs:
            failures.extend(f"{name}: {e}" for e in errs)
            if verbose:
                print(f"[FAIL] {name} ({took:.1f}s): " + "; ".join(errs))
        elif verbose:
            print(f"[ok]   {name} ({took:.1f}s)")
    return (not failures), failures


def _check_tau() -> list[str]:
    errs = []
    sol = tau_solve(100.0, 1e-10, 1e-12)
    res = np.abs(sol.first_integral_residual()).max()
    if res > 1e-8:
        errs.append(f"first-integral residual {res:.2e} > 1e-8")
    tau01, _ = sol.eval(0.1)
    if abs(tau01 - 1.0099834106109) > 1e-8:
        errs.append(f"tau(0.1) = {tau01!r} off the oracle value")
    if np.any(sol.taudot[1:] <= 0):
        errs.append("taudot must be positive for t > 0")
    sol_long = tau_solve(1.1e6, 1e-10, 1e-12)
    gaps = [abs(tau_asymptotic_ratio(sol_long, t) - 1.0) for t in (1e4, 1e5, 1e6)]
    if not all(a > b for a, b in zip(gaps, gaps[1:])):
        errs.append(f"|ratio-1| not decreasing over the verified tail: {gaps}")
    return errs


def _check_spectral() -> list[str]:
    from . import spectral as sp

    errs = []
    rng = np.random.default_rng(7)
    for d, n in ((1, 64), (2, 32)):
        g = Grid(d, 5.0, n)
        f = ScalarField(g, sp.dealias_arrays(g, rng.standard_normal(g.shape)))
        back = sp.transform_inverse(g, sp.transform_forward(f))
        err = np.abs(back.values - f.values).max() / max(np.abs(f.values).max(), 1e-300)
        if err > 1e-13:
            errs.append(f"d={d} roundtrip error {err:.2e}")
        quad = integrate(ScalarField(g, f.values**2))
        coeffs = sp.transform_forward(f)
        pars = g.volume * float(np.sum(np.abs(coeffs) ** 2))
        if abs(quad - pars) / abs(quad) > 1e-12:
            errs.append(f"d={d} Parseval mismatch {abs(quad-pars)/abs(quad):.2e}")
        dfdx = sp.derivative(f, 0)
        if abs(integrate(dfdx)) > 1e-12 * np.abs(dfdx.values).max() * g.volume:
            errs.append(f"d={d} integral of derivative not zero")
        da = sp.dealias(f)
        db = sp.dealias(da)
        if np.abs(da.values - db.values).max() > 1e-14:
            errs.append("dealias not idempotent")
    g = Grid(1, 10.0, 256)
    gauss = ScalarField(g, np.exp(-g.r2))
    if abs(integrate(gauss) - math.sqrt(math.pi)) > 1e-10:
        errs.append("Gaussian quadrature off")
    return errs


def _check_rescaling() -> list[str]:
    from . import rescaling as rs

    errs = []
    g = Grid(1, 8.0, 128)
    rho = ScalarField(g, np.exp(-g.r2) + 0.05)
    u = VectorField.from_arrays(g, [0.3 * np.sin(math.pi * np.broadcast_to(g.y[0], g.shape) / g.ell)])
    state = rs.to_self_similar(rho, u, (1.0, 0.0))
    rho2, u2 = rs.from_self_similar(state, (1.0, 0.0))
    if np.abs(rho2.values - rho.values).max() > 1e-12:
        errs.append("density roundtrip failed")
    if np.abs(u2[0].values - u[0].values).max() > 1e-10:
        errs.append("velocity roundtrip failed")
    kvec = math.pi * 2 / g.ell
    psi = WaveFunction.from_complex(
        0.0, g, np.exp(1j * kvec * np.broadcast_to(g.y[0], g.shape)), 1.3
    )
    st = rs.madelung(psi)
    if np.abs(st.sqrtR.values - 1.0).max() > 1e-12:
        errs.append("plane-wave modulus wrong")
    if np.abs(st.Lambda[0].values - 1.3 * kvec).max() > 1e-9:
        errs.append("plane-wave velocity wrong")
    return errs


def _check_korteweg() -> list[str]:
    errs = []
    sign = FAULTS.get("korteweg_sign", 1.0)
    for d, n, tol in ((1, 128, 1e-8), (2, 64, 1e-6)):
        g = Grid(d, 5.0, n)
        s = np.exp(-g.r2) + 0.2
        if sign != 1.0:
            # evaluate the residual with the injected defect on one side
            from .spectral import grad_arrays, lap_arrays

            R = s**2
            lhs = [R * a for a in grad_arrays(g, lap_arrays(g, s) / s)]
            st = solver._Stepper(g, ParamSet(eps=1.0), float(np.mean(R)))
            rhs_v = [sign * v for v in st.korteweg_divform(R)]
            num = math.sqrt(float(g.weight * sum(((a - b) ** 2).sum() for a, b in zip(lhs, rhs_v))))
            den = math.sqrt(float(g.weight * sum((b**2).sum() for b in rhs_v)))
            res = num / max(den, 1e-300)
        else:
            res = diag.korteweg_identity_residual(ScalarField(g, s))
        if res > tol:
            errs.append(f"korteweg_residual d={d} n={n}: {res:.2e} > {tol:.0e}")
        res2 = diag.loghess_identity_residual(ScalarField(g, s**2))
        if res2 > tol:
            errs.append(f"loghess_residual d={d} n={n}: {res2:.2e} > {tol:.0e}")
    return errs


def _check_csiszar() -> list[str]:
    errs = []
    rng = np.random.default_rng(11)
    worst = math.inf
    for i in range(100):
        d = 1 if i % 2 == 0 else 2
        g = Grid(d, 6.0, 64 if d == 1 else 32)
        R = ScalarField(g, random_positive_field(g, rng))
        gap = diag.csiszar_kullback_gap(R)
        worst = min(worst, gap)
    if worst < -1e-10:
        errs.append(f"min gap {worst:.2e} < -1e-10")
    return errs


def _check_llogl() -> list[str]:
    errs = []
    rng = np.random.default_rng(13)
    for i in range(100):
        d = 1 if i % 2 == 0 else 2
        g = Grid(d, 6.0, 64 if d == 1 else 32)
        beta = 2.0 / (d + 2)
        f = ScalarField(g, np.sqrt(random_positive_field(g, rng)))
        value, bound = diag.llogl_bound(f, beta)
        if not value <= bound:
            errs.append(f"seed {i}: value {value:.3e} > bound {bound:.3e}")
            break
    return errs


def _check_compat() -> list[str]:
    errs = []
    g = Grid(1, 6.0, 128)
    s = np.exp(-g.r2) + 0.3
    state = FluidState(
        t=0.0, grid=g, sqrtR=ScalarField(g, s),
        Lambda=VectorField.from_arrays(g, [0.7 * s]),  # U constant = 0.7
    )
    tn, sk = diag.compatibility_residuals(state)
    if tn > 1e-10:
        errs.append(f"T_N residual for constant U: {tn:.2e}")
    const = FluidState(
        t=0.0, grid=g, sqrtR=ScalarField(g, np.full(g.shape, 0.8)),
        Lambda=VectorField.zero(g),
    )
    _, sk0 = diag.compatibility_residuals(const)
    ops = diag.StateOps(const)
    hs = diag._hessian(g, ops.s)
    if max(np.abs(h).max() for h in hs.values()) > 1e-12:
        errs.append("S_K of constant density not zero")
    g2 = Grid(2, 6.0, 64)
    z = (0.2 + np.exp(-g2.r2)) * np.exp(
        1j * (math.pi / g2.ell) * np.broadcast_to(g2.y[0], g2.shape)
    )
    st = madelung(WaveFunction.from_complex(0.0, g2, z, 1.0))
    irr = diag.irrotationality_residual(st)
    if irr > 1e-8:
        errs.append(f"irrotationality residual {irr:.2e} > 1e-8")
    return errs


def drag_run_state(n=128, ell=8.0, perturbation=0.4, velocity=0.6) -> FluidState:
    """Gaussian-tail perturbed state used by the identity-grade drag runs."""
    g = Grid(1, ell, n)
    y = np.broadcast_to(g.y[0], g.shape)
    s = np.exp(-(y**2) / 2.0) * np.sqrt(1.0 + perturbation * np.cos(math.pi * y / ell))
    lam = velocity * np.exp(-(y**2) / 2.0) * np.sin(2 * math.pi * y / ell)
    return FluidState(
        t=0.0, grid=g, sqrtR=ScalarField(g, s),
        Lambda=VectorField.from_arrays(g, [lam]),
    )


def full_reg_setup(n=256, ell=8.0):
    """Plateau-floored data and the all-terms-active parameter set of the
    mass-conservation run (every regularization strictly positive)."""
    g = Grid(1, ell, n)
    state = solver.prepare_initial_data(
        g,
        lambda y: np.exp(-np.asarray(y) ** 2 / 2.0),
        lambda y: (0.3 * np.exp(-np.asarray(y) ** 2 / 2.0) * np.sin(math.pi * np.asarray(y) / ell),),
        0.2,
        0.4,
    )
    params = ParamSet(
        nu=0.1, eps=0.1, r0=0.02, r1=0.02, delta1=1e-4, delta2=1e-7,
        eta1=1e-14, eta2=1e-13, alpha=8.0, s=2,
        dt_policy="cfl", dt=5e-3, cfl=0.4,
    )
    return state, params


def identity_ladder(kind: str, dts=(2e-2, 1e-2, 5e-3), t_end=0.4, r0=0.0):
    """Balance/BD residuals on the drag run across a fixed-dt ladder."""
    state = drag_run_state()
    out = []
    for dt in dts:
        p = ParamSet(
            nu=0.1, eps=0.2, r0=r0, r1=0.05,
            dt_policy="fixed", dt=dt, viscous_form="bounded",
        )
        traj = solver.run(state, p, t_end, diag_every=1)
        if traj.status != "ok":
            return None, f"run aborted: {traj.status} at dt={dt}"
        out.append(
            traj.energy_balance_residual()
            if kind == "energy"
            else traj.bd_identity_residual()
        )
    return out, None


def _check_mass() -> list[str]:
    errs = []
    state, params = full_reg_setup(n=128)
    traj = solver.run(state, params, 0.25, diag_every=5)
    if traj.status != "ok":
        errs.append(f"run aborted: {traj.status}")
        return errs
    m = traj.series("mass")
    drift = np.abs(m - m[0]).max() / abs(m[0])
    if drift > 1e-8:
        errs.append(f"mass drift {drift:.2e} > 1e-8")
    if traj.series("min_density").min() <= 0:
        errs.append("density lost positivity")
    return errs


def _check_energy_balance() -> list[str]:
    errs = []
    res, err = identity_ladder("energy")
    if err:
        return [err]
    ratios = [a / b for a, b in zip(res, res[1:])]
    if not all(4 / 1.3 < r < 4 * 1.3 for r in ratios):
        errs.append(f"balance residuals {res} not order-2 convergent (ratios {ratios})")
    return errs


def _check_bd_identity() -> list[str]:
    errs = []
    res, err = identity_ladder("bd")
    if err:
        return [err]
    ratios = [a / b for a, b in zip(res, res[1:])]
    if not all(4 / 1.3 < r < 4 * 1.3 for r in ratios):
        errs.append(f"bd residuals {res} not order-convergent (ratios {ratios})")
    state = drag_run_state()
    p = ParamSet(nu=0.0, eps=0.2, r1=0.05, dt_policy="fixed", dt=1e-2)
    traj = solver.run(state, p, 0.05, diag_every=1)
    if abs(traj.bd_identity_residual()) > 1e-14:
        errs.append("bd identity not identically zero at nu = 0")
    return errs


def _check_nls() -> list[str]:
    errs = []
    g = Grid(1, 8.0, 128)
    psi0 = make_wavefunction(g, {"generator": "gaussian"}, eps=1.0)
    res = []
    for dt in (4e-3, 2e-3):
        p = lognls.NlsParams(eps=1.0, dt=dt)
        traj = lognls.run_nls(psi0, p, 0.5)
        if traj.max_step_mass_drift > 1e-12:
            errs.append(f"mass drift per step {traj.max_step_mass_drift:.2e} > 1e-12")
            break
        res.append(traj.dissipation_identity_residual())
    if len(res) == 2 and not 2.0 < res[0] / res[1] < 8.0:
        errs.append(f"dissipation identity residuals {res} not order-convergent")
    return errs


def _check_prepare() -> list[str]:
    errs = []
    stats = truncation_study([4.0, 8.0, 16.0], n=2048)
    last = stats[-1]
    for key in ("mass_excess", "dirichlet_excess", "moment_excess"):
        if abs(last[key]) > 0.05:
            errs.append(f"{key} at ell=16 is {last[key]:.3f} (>5%)")
    for key in ("mass_excess", "dirichlet_excess", "moment_excess"):
        seq = [abs(s[key]) for s in stats]
        if not all(a >= b - 1e-12 for a, b in zip(seq, seq[1:])):
            errs.append(f"{key} grows along the ladder: {seq}")
    return errs


def truncation_study(ells, n=2048, theta_exponent=3.0):
    """Prepared-data functionals vs the analytic full-space Gaussian values
    (sqrtR0 = exp(-|y|^2/2): mass sqrt(pi), Dirichlet and moment sqrt(pi)/2)."""
    from .spectral import gradient

    out = []
    mass_target = math.sqrt(math.pi)
    grad_target = 0.5 * math.sqrt(math.pi)
    mom_target = 0.5 * math.sqrt(math.pi)
    for ell in ells:
        g = Grid(1, float(ell), n)
        st = solver.prepare_initial_data(
            g,
            lambda y: np.exp(-np.asarray(y) ** 2 / 2.0),
            lambda y: (np.zeros(g.shape),),
            float(ell) ** (-theta_exponent),
            1.0 / float(ell),
        )
        mass = st.mass()
        gs = gradient(st.sqrtR)
        dirichlet = integrate(ScalarField(g, gs[0].values ** 2))
        mom = integrate(ScalarField(g, st.R.values * g.r2))
        out.append(
            {
                "ell": ell,
                "mass": mass,
                "dirichlet": dirichlet,
                "moment": mom,
                "mass_excess": (mass - mass_target) / mass_target,
                "dirichlet_excess": (dirichlet - grad_target) / grad_target,
                "moment_excess": (mom - mom_target) / mom_target,
                "min_sqrtR": float(st.sqrtR.values.min()),
            }
        )
    return out


def _check_snapshots() -> list[str]:
    import tempfile

    errs = []
    g = Grid(2, 3.0, 16)
    rng = np.random.default_rng(3)
    f = ScalarField(g, rng.standard_normal(g.shape))
    with tempfile.TemporaryDirectory() as tmp:
        p = io_.write_snapshot(io_.snapshot_path(tmp, "R", 0.25), f, 0.25)
        back, t = io_.read_snapshot(p)
        if t != 0.25 or back.grid != g or not np.array_equal(back.values, f.values):
            errs.append("snapshot roundtrip not bitwise")
    return errs
