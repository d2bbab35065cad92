import cmath
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from scatterlab.dynamics import (
    BlowupError,
    PhaseStepWarning,
    SolverConfig,
    Trajectory,
    abs_power,
    default_sample_times,
    e_dot,
    evolve,
    expm1_i,
    expm1_i_second,
    galilean_vector_norm_sq,
    nonlinear_phase_step,
    nonlinearity_difference,
    power_nonlinearity,
    pseudoconformal_report,
    self_convergence_order,
)
from scatterlab.exponents import PhysParams
from scatterlab.spectral import Field, Grid, WrapAroundWarning, free_propagate, gaussian, mass

P13 = PhysParams(1, 3)
G = Grid(1, 512, 64.0)


# --- nonlinearity ---------------------------------------------------------------

def test_phase_step_scalar_example():
    g = Grid(1, 8, 8.0)
    f = Field(g, np.full(g.shape, 2.0 + 0j))
    out = nonlinear_phase_step(f, 3.0, 0.1)
    assert np.allclose(out.values, 2 * cmath.exp(-0.8j), atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(0.1, 4.0), st.floats(-5, 5))
def test_phase_step_preserves_modulus(seed, p, tau):
    rng = np.random.default_rng(seed)
    f = Field(G, rng.normal(size=G.shape) + 1j * rng.normal(size=G.shape))
    out = nonlinear_phase_step(f, p, tau)
    assert np.max(np.abs(np.abs(out.values) - np.abs(f.values))) < 1e-14 * max(1, np.abs(f.values).max())
    assert mass(out) == pytest.approx(mass(f), rel=1e-14)
    assert np.array_equal(nonlinear_phase_step(f, p, 0.0).values, f.values)


def test_fractional_power_at_zero():
    u = np.array([0.0, 1e-300, 2.0, -3.0 + 4j])
    assert abs_power(u, 0.5)[0] == 0
    assert power_nonlinearity(u, 0.5)[0] == 0
    assert power_nonlinearity(u, 2.5)[3] == pytest.approx(5 ** 2.5 * (-3 + 4j))


@settings(max_examples=100, deadline=None)
@given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
       st.floats(0.5, 4.0), st.floats(-12, 0))
def test_nonlinearity_difference(a, e, p, logscale):
    eta = e * 10.0 ** logscale
    a_arr, e_arr = np.array([a]), np.array([eta])
    got = nonlinearity_difference(a_arr, e_arr, p)[0]
    # high-precision oracle
    import mpmath as mp

    with mp.workdps(700):
        A, E = mp.mpc(a), mp.mpc(eta)
        ref = abs(A + E) ** p * (A + E) - abs(A) ** p * A
    scale = max(abs(complex(ref)), 1e-300)
    assert abs(got - complex(ref)) <= 1e-12 * scale + 1e-300


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3))
def test_phase_helpers(theta):
    th = np.array([theta])
    assert expm1_i(th)[0] == pytest.approx(cmath.exp(-1j * theta) - 1, abs=1e-15)
    import mpmath as mp

    with mp.workdps(700):
        ref = complex(mp.exp(-1j * mp.mpf(theta)) - 1 + 1j * mp.mpf(theta))
    got = expm1_i_second(th)[0]
    assert abs(got - ref) <= 1e-14 * abs(ref) + 1e-300


# --- solver ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(0.0, 1.0, P13, G)
    with pytest.raises(ValueError):
        SolverConfig(0.1, 1.0, P13, G, sample_times=[0.5, 0.2])
    with pytest.raises(ValueError):
        SolverConfig(0.1, 1.0, P13, G, sample_times=[0.0, 2.0])
    cfg = SolverConfig(0.1, 100.0, P13, G)
    assert cfg.sample_times[0] == 0 and cfg.sample_times[1] == 1.0
    assert cfg.sample_times[-1] == pytest.approx(100.0)
    # 16 per decade on [1, 100]
    assert len(default_sample_times(100.0)) == 1 + 33


def test_trajectory_invariants():
    phi = gaussian(G, amplitude=0.1)
    with pytest.raises(ValueError):
        Trajectory([0.0, 0.0], [phi, phi], SolverConfig(0.1, 1.0, P13, G))
    tr = evolve(phi, SolverConfig(0.05, 1.0, P13, G, [0.0, 0.5, 1.0]))
    assert tr.times == [0.0, 0.5, 1.0] and len(tr) == 3
    assert all(np.all(np.isfinite(u.values)) for _, u in tr)


def test_linear_limit_matches_free_flow():
    phi = gaussian(G, amplitude=0.3)
    T = 3.0
    tr = evolve(phi, SolverConfig(0.1, T, P13, G, [0.0, T], nonlinear=False))
    ref = free_propagate(phi, T)
    assert np.max(np.abs(tr.final.values - ref.values)) < 1e-10


def test_grid_mismatch_and_warnings():
    phi = gaussian(G, amplitude=0.1)
    with pytest.raises(ValueError):
        evolve(phi, SolverConfig(0.1, 1.0, P13, Grid(1, 256, 64.0)))
    with pytest.warns(WrapAroundWarning):
        evolve(phi, SolverConfig(1.0, 50.0, P13, G, [0.0, 50.0], nonlinear=False))
    big = gaussian(G, amplitude=10.0)
    with pytest.warns(PhaseStepWarning):
        evolve(big, SolverConfig(0.05, 0.1, P13, G, [0.0, 0.1]))


def test_blowup_guard():
    g = Grid(1, 64, 16.0)
    phi = gaussian(g, amplitude=1e160)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with np.errstate(all="ignore"):
            with pytest.raises((BlowupError, ValueError)):
                evolve(phi, SolverConfig(0.1, 0.2, P13, g, [0.0, 0.2]))


def test_mass_and_energy_conservation_short():
    phi = gaussian(G, amplitude=0.5)
    tr = evolve(phi, SolverConfig(0.01, 5.0, P13, G, list(np.linspace(0, 5, 11))))
    rep = pseudoconformal_report(tr)
    assert rep.mass_drift < 1e-12
    assert rep.energy_drift < 1e-5


def test_richardson_order():
    phi = gaussian(Grid(1, 1024, 64.0), amplitude=1.0)
    cfg = SolverConfig(0.02, 2.0, P13, phi.grid, [0.0, 2.0])
    out = self_convergence_order(phi, cfg, levels=4)
    for o in out["orders"]:
        assert o == pytest.approx(2.0, abs=0.1)


# --- pseudoconformal diagnostics -----------------------------------------------------

def test_J_constant_under_linear_flow():
    g = Grid(1, 2048, 256.0)
    phi = gaussian(g, amplitude=0.2)
    tr = evolve(phi, SolverConfig(0.1, 5.0, P13, g, [0.0, 1.0, 2.5, 5.0], nonlinear=False))
    J = [galilean_vector_norm_sq(u, t) for t, u in tr]
    assert np.allclose(J, J[0], rtol=1e-10)
    rep = pseudoconformal_report(tr)
    assert rep.gronwall_ok


def test_e_dot_matches_finite_difference():
    # dense samples around t = 2 for a centred difference of e(t)
    g = Grid(1, 2048, 256.0)
    phi = gaussian(g, amplitude=0.3)
    h = 0.01
    times = [0.0, 2.0 - h, 2.0, 2.0 + h]
    tr = evolve(phi, SolverConfig(h / 10, 2.0 + h, P13, g, times))
    rep = pseudoconformal_report(tr, fit_from=1.0)
    fd = (rep.e[3] - rep.e[1]) / (2 * h)
    pred = e_dot(rep, P13)[2]
    assert fd == pytest.approx(pred, rel=1e-4)
    assert all(U <= e for U, e in zip(rep.U, rep.e))
    assert rep.decay_fit is None and rep.notes


def test_smallness_note():
    phi = gaussian(G, amplitude=1.0)
    tr = evolve(phi, SolverConfig(0.05, 0.5, P13, G, [0.0, 0.5]))
    rep = pseudoconformal_report(tr)
    assert any("smallness" in n for n in rep.notes)
