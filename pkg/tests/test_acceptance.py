"""The twelve acceptance criteria, one test each, with their stated tolerances and time budgets."""
import math
import time
import warnings

import numpy as np
import pytest

from scatterlab.dynamics import SolverConfig, evolve, pseudoconformal_report, self_convergence_order
from scatterlab.exponents import (
    PhysParams,
    canonical_q,
    is_admissible_pair,
    sharpened_Q,
    strauss_exponent,
)
from scatterlab.lab import SweepConfig, holder_probe, quotient_blowup_test, run_scaling_sweep, scalar_model
from scatterlab.scattering import (
    ScatteringConfig,
    born_term,
    build_mesh,
    expansion_error,
    mesh_spacetime_norm,
    scattering_state,
    wave_operator,
)
from scatterlab.spectral import (
    Grid,
    NormSpec,
    dispersive_decay_check,
    free_flow_sampler,
    free_propagate,
    gaussian,
    l2_norm,
    scale_family,
    spacetime_norm,
)

P13 = PhysParams(1, 3)


class Clock:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def l2(v, grid):
    return float(np.sqrt(np.sum(np.abs(v) ** 2) * grid.cell))


def test_criterion_01_exponent_units(criterion):
    with Clock() as c:
        a3 = strauss_exponent(3)
        a1_err = abs(strauss_exponent(1) - (1 + math.sqrt(17)) / 2)
        rng = np.random.default_rng(20240601)
        admissible, q_err = 0, 0.0
        for _ in range(50):
            d = int(rng.integers(1, 4))
            p = float(rng.uniform(strauss_exponent(d), 4.0 / d))
            prm = PhysParams(d, p)
            admissible += is_admissible_pair(d, canonical_q(prm), p + 2)
            q_err = max(q_err, abs(sharpened_Q(prm, 1.0, 1.0) - 2 * (2 * p + 1) / (p + 2)))
    ok = a3 == 1.0 and a1_err < 1e-12 and admissible == 50 and q_err < 1e-12 and c.elapsed < 1
    criterion(1, ok, f"alpha(3)={a3!r} |alpha(1) err|={a1_err:.1e} admissible={admissible}/50 "
                     f"Q err={q_err:.1e} ({c.elapsed:.2f}s)")
    assert ok


def test_criterion_02_free_propagator(criterion):
    g = Grid(1, 4096, 400.0)
    phi = gaussian(g, amplitude=1.0)
    x = g.coords()[0]
    worst = 0.0
    with Clock() as c:
        for t in np.linspace(0, 10, 21):
            z = 1 + 2j * t
            exact = z ** -0.5 * np.exp(-x ** 2 / (2 * z))
            worst = max(worst, l2(free_propagate(phi, t).values - exact, g) / l2(exact, g))
    ok = worst < 1e-10 and c.elapsed < 5
    criterion(2, ok, f"max relative L2 error {worst:.2e} over t in [0, 10] ({c.elapsed:.2f}s)")
    assert ok


def test_criterion_03_dispersive_decay(criterion):
    g = Grid(1, 16384, 3000.0)
    phi = gaussian(g, amplitude=1.0)
    with Clock() as c:
        fit = dispersive_decay_check(phi, math.inf, np.geomspace(1, 100, 21))
    ok = abs(fit.slope + 0.5) <= 0.05 * 0.5 and c.elapsed < 30
    criterion(3, ok, f"sup-norm slope {fit.slope:.4f} (target -0.5 +- 5%) ({c.elapsed:.2f}s)")
    assert ok


def test_criterion_04_conservation_and_order(criterion):
    with Clock() as c:
        g = Grid(1, 4096, 600.0)
        phi = gaussian(g, amplitude=0.1)
        tr = evolve(phi, SolverConfig(0.01, 50.0, P13, g))
        rep = pseudoconformal_report(tr)
        g2 = Grid(1, 1024, 64.0)
        big = gaussian(g2, amplitude=1.0)
        orders = self_convergence_order(big, SolverConfig(0.05, 5.0, P13, g2, [0.0, 5.0]), levels=4)["orders"]
    ok = (rep.mass_drift < 1e-8 and rep.energy_drift < 1e-6 and all(abs(o - 2) <= 0.1 for o in orders)
          and c.elapsed < 120)
    criterion(4, ok, f"mass drift {rep.mass_drift:.1e} energy drift {rep.energy_drift:.1e} "
                     f"orders {[round(o, 3) for o in orders]} ({c.elapsed:.1f}s)")
    assert ok


def test_criterion_05_pseudoconformal_decay(criterion):
    g = Grid(1, 8192, 1200.0)
    phi = gaussian(g, amplitude=0.1)
    with Clock() as c:
        tr = evolve(phi, SolverConfig(0.02, 100.0, P13, g))
        rep = pseudoconformal_report(tr, fit_from=1.0)
    slope = rep.decay_fit.slope
    ok = abs(slope + 1.5) <= 0.1 * 1.5 and rep.gronwall_ok and c.elapsed < 180
    criterion(5, ok, f"potential decay slope {slope:.4f} (target -1.5 +- 10%) "
                     f"U<=e at all samples: {rep.gronwall_ok} ({c.elapsed:.1f}s)")
    assert ok


def test_criterion_06_duality(criterion):
    g = Grid(1, 512, 64.0)
    phi = gaussian(g, amplitude=0.05)
    cfg = ScatteringConfig(P13, g)
    with Clock() as c:
        mesh = build_mesh(phi, cfg)
        B = born_term(phi, cfg, mesh)
        pairing = float(np.real(np.sum(np.conj(phi.values) * B.values)) * g.cell)
        st = mesh_spacetime_norm(phi, mesh, 5.0)
    gap = abs(pairing - st) / st
    ok = gap < 1e-6 and c.elapsed < 60
    criterion(6, ok, f"<B(phi), phi> vs spacetime norm: relative gap {gap:.1e} ({c.elapsed:.2f}s)")
    assert ok


def test_criterion_07_parabolic_scaling(criterion):
    g = Grid(1, 2048, 256.0)
    base = gaussian(g)
    ratios = []
    with Clock() as c:
        for sigma in (1.0, 2.0, 4.0, 8.0):
            eps = 0.5 / sigma
            phi = scale_family(base, eps, sigma)
            st = spacetime_norm(free_flow_sampler(phi, 5.0), NormSpec(5, 5, t_uniform=5.0 * sigma ** 2,
                                                                      per_decade=32, t_max=1e4 * sigma ** 2))
            ratios.append(st.value ** 5 / (eps ** 5 * sigma ** 0.5))
    spread = (max(ratios) - min(ratios)) / np.mean(ratios)
    ok = spread < 1e-3 and c.elapsed < 120
    criterion(7, ok, f"scaled spacetime norm spread {spread:.1e} across sigma in {{1,2,4,8}} ({c.elapsed:.2f}s)")
    assert ok


def test_criterion_08_born_homogeneity(criterion):
    g = Grid(1, 512, 64.0)
    phi = gaussian(g, amplitude=1.0)
    cfg = ScatteringConfig(P13, g)
    with Clock() as c:
        vals = [l2_norm(born_term(phi * e, cfg)) / e ** 4 for e in (0.5, 0.25, 0.125)]
    spread = (max(vals) - min(vals)) / np.mean(vals)
    ok = spread < 1e-10 and c.elapsed < 60
    criterion(8, ok, f"||B(eps phi)||/eps^(p+1) relative spread {spread:.1e} ({c.elapsed:.2f}s)")
    assert ok


def test_criterion_09_expansion_error_scaling(criterion):
    g = Grid(1, 512, 64.0)
    phi = gaussian(g, amplitude=1.0)
    cfg = ScatteringConfig(P13, g, steps=64)
    eps = 2.0 ** -np.arange(3, 9)
    with Clock() as c:
        errs = [expansion_error(phi * e, "S", cfg).error_norm for e in eps]
    slope = np.polyfit(np.log(eps), np.log(errs), 1)[0]
    ok = slope >= 2.8 and abs(slope - 7) <= 0.15 * 7 and c.elapsed < 600
    criterion(9, ok, f"e_- amplitude slope {slope:.4f} (>= 2.8, target 7 +- 15%) ({c.elapsed:.1f}s)")
    assert ok


def test_criterion_10_round_trip(criterion):
    g = Grid(1, 512, 64.0)
    psi = gaussian(g, amplitude=0.1)
    cfg = ScatteringConfig(P13, g)
    with Clock() as c:
        back = scattering_state(wave_operator(psi, cfg).value, cfg).value
    err = l2(back.values - psi.values, g)
    ok = err <= 1e-4 and c.elapsed < 300
    criterion(10, ok, f"||S(W(psi)) - psi|| = {err:.1e} ({c.elapsed:.2f}s)")
    assert ok


def test_criterion_11_quotient_dichotomy(criterion):
    cfg = SweepConfig(j=9.0, sigmas=[2, 4, 8, 16], s=4.5)
    with Clock() as c:
        recs = run_scaling_sweep(cfg, workers=1)
        above = quotient_blowup_test(recs, P13, 9.0, s=4.5)
        at = quotient_blowup_test(recs, P13, 9.0, s=4.0)
    ok = (above.monotone_increasing and abs(above.fit.slope - 0.5) <= 0.2 * 0.5
          and at.fit.slope <= 0 and c.elapsed < 900)
    criterion(11, ok, f"s=4.5 slope {above.fit.slope:.4f} increasing={above.monotone_increasing}; "
                      f"s=4 slope {at.fit.slope:.4f} ({c.elapsed:.1f}s)")
    assert ok


def test_criterion_12_holder_probe(criterion):
    with Clock() as c:
        fit = holder_probe(scalar_model(3.0), 0.0, 1.0, 4.5, np.geomspace(1e-3, 1e-1, 12))
    order = fit.remainder_exponent
    ok = abs(order - 4.0) <= 0.05 * 4.0 and not fit.member and c.elapsed < 10
    criterion(12, ok, f"scalar model breakdown order {order:.4f} (target 4 +- 5%) ({c.elapsed:.2f}s)")
    assert ok
