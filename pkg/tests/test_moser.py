import math
from fractions import Fraction

import numpy as np
import pytest

from cknlab.errors import ParameterError, SolverError
from cknlab.fields import DiscreteField, RadialGrid
from cknlab.measure import centered_weight_integral, sphere_area
from cknlab.moser import (MeasureTable, centered_doubling_constant, find_ell,
                          interpolation_gap, lemma_a2_constant,
                          lemma_a2_property_check, run_ladder, smallness_check,
                          subdomain_lq_norm)
from cknlab.params import INF, k0_threshold, moser_ladder, validate
from cknlab.solver import ckn_bubble, exact_radial_mms

P300 = validate(3, 0.0, 0.0, INF)
P335 = validate(3, 0.3, 0.5, INF)


def test_smallness_zero_potential():
    grid = RadialGrid(0.0, 1.0, 128)
    V = DiscreteField(grid=grid, values=np.zeros(128))
    for ell in (1e-3, 1.0, 100.0):
        out = smallness_check(P300, V, ell, ckn_constant=1.0)
        assert out.tail_mass == 0.0 and out.satisfied


def test_smallness_compact_small_potential():
    grid = RadialGrid(0.0, 1.0, 256)
    vals = np.where(grid.centers < 0.3, 0.5, 0.0)
    V = DiscreteField(grid=grid, values=vals)
    out = smallness_check(P300, V, ell=2.0, ckn_constant=1.0)
    assert out.tail_mass == 0.0  # sup|V| < ell and support inside B_ell


def test_smallness_nonpositive_ell():
    grid = RadialGrid(0.0, 1.0, 16)
    V = DiscreteField(grid=grid, values=np.zeros(16))
    with pytest.raises(ParameterError) as exc:
        smallness_check(P300, V, 0.0, 1.0)
    assert exc.value.code == "nonpositive_ell"


def test_smallness_tail_mass_oracle_and_monotone():
    params = P335
    p = params.p
    grid = RadialGrid(0.0, 1.0, 4000)
    u_exact, _ = exact_radial_mms(params, 0.0, 1.0)
    V = DiscreteField.from_function(
        grid, lambda r: 2.0 * np.abs(u_exact(r)) ** (p - 2))
    ell = 0.25
    out = smallness_check(params, V, ell, ckn_constant=1.0)
    # 1D oracle on a fine grid
    r = np.linspace(1e-7, 1.0, 400001)
    vv = 2.0 * np.abs(u_exact(r)) ** (p - 2)
    dens = sphere_area(3) * r ** (2 - params.bp) * vv ** (p / (p - 2))
    oracle = (np.trapezoid(np.where(vv >= ell, dens, 0.0), r)
              + np.trapezoid(np.where(r > ell, dens, 0.0), r))
    assert out.tail_mass == pytest.approx(oracle, rel=0.01)
    masses = [smallness_check(params, V, e, 1.0).tail_mass
              for e in (0.1, 0.2, 0.4, 0.8)]
    assert all(b <= a for a, b in zip(masses, masses[1:]))


def test_find_ell_zero_and_heavy_tail_and_monotone():
    grid = RadialGrid(0.0, 1.0, 256)
    zero = DiscreteField(grid=grid, values=np.zeros(256))
    assert find_ell(P300, zero, 1.0) == pytest.approx(1e-3)
    huge = DiscreteField(grid=grid, values=np.full(256, 1e12))
    assert find_ell(P300, huge, 1.0) is None
    mid = DiscreteField.from_function(grid, lambda r: 0.4 * np.exp(-r))
    e1 = find_ell(P300, mid, 1.0)
    e2 = find_ell(P300, mid.with_values(2.0 * mid.values), 1.0)
    assert e1 is not None and e2 is not None and e2 >= e1


def test_ladder_q_sequence_fraction_oracle():
    params = validate(3, 0.0, 0.25)  # p = 4
    ladder = moser_ladder(params, 5)
    want = [float(Fraction(4) ** (k + 1) / 2 ** k) for k in range(6)]
    assert ladder == want


def test_run_ladder_harmonic_k_zero():
    a = 0.3
    params = validate(3, a, a, INF)
    grid = RadialGrid(0.25, 2.0, 1000)
    expo = 2 + 2 * a - 3
    u = DiscreteField.from_function(grid, lambda r: r ** expo)
    k_stop = k0_threshold(params) + 2
    states = run_ladder(params, u, 0.0, k_stop, margin0=0.2,
                        inner=float(0.25 ** expo), dirichlet=float(2.0 ** expo))
    assert len(states) == k_stop + 1
    assert [s.q_k for s in states] == moser_ladder(params, k_stop)
    assert all(math.isfinite(s.norm_q) for s in states)
    assert all(s2.subdomain_margin > s1.subdomain_margin
               for s1, s2 in zip(states, states[1:]))


def test_run_ladder_bubble_solution():
    params = P300
    u_fn, K, _, _ = ckn_bubble(params)
    grid = RadialGrid(0.0, 3.0, 2000)
    u = DiscreteField.from_function(grid, u_fn)
    k_stop = k0_threshold(params) + 2
    states = run_ladder(params, u, K, k_stop, margin0=0.3,
                        dirichlet=float(u_fn(3.0)))
    assert all(s.norm_q < 1e3 for s in states)
    # cross-check the first ladder norm by 1D quadrature (full-domain margin 0)
    got = subdomain_lq_norm(params, u, params.p, 0.0)
    r = np.linspace(0, 3.0, 200001)
    oracle = (np.trapezoid(4 * math.pi * r * r * u_fn(r) ** 6, r)) ** (1 / 6)
    assert got == pytest.approx(oracle, rel=1e-3)


def test_run_ladder_rejects_non_solution():
    grid = RadialGrid(0.25, 2.0, 400)
    u = DiscreteField.from_function(grid, lambda r: np.sin(5 * r))
    with pytest.raises(SolverError) as exc:
        run_ladder(P300, u, 0.0, 3)
    assert exc.value.code == "residual_too_large"


def test_interpolation_log_convexity():
    rng = np.random.default_rng(17)
    grid = RadialGrid(0.0, 1.0, 512)
    for _ in range(10):
        u = DiscreteField(grid=grid, values=rng.uniform(0.1, 2.0, size=512))
        gap = interpolation_gap(P335, u, 6.0, 18.0, 0.37, margin=0.05)
        assert gap >= -1e-10
    const = DiscreteField(grid=grid, values=np.full(512, 1.3))
    assert abs(interpolation_gap(P335, const, 6.0, 18.0, 0.5, 0.05)) < 1e-12


def test_lemma_a2_tau_examples():
    env = lemma_a2_constant(4.0, 1.0, 0.5, 3.0, 2.5, doubling_constant=8.0)
    assert env.tau == 0.5
    env = lemma_a2_constant(1.0, 1.0, 0.5, 3.0, 2.5, doubling_constant=8.0)
    assert env.tau == 0.5
    env = lemma_a2_constant(100.0, 1.0, 1.0, 3.0, 2.0, doubling_constant=8.0)
    assert env.tau == pytest.approx(0.01)
    with pytest.raises(ParameterError) as exc:
        lemma_a2_constant(1.0, 1.0, 2.0, 1.0, 1.5, doubling_constant=8.0)
    assert exc.value.code == "exponent_order_violation"


def test_centered_doubling_constant_exact():
    assert centered_doubling_constant(P300, 0.5) == pytest.approx(8.0)
    p = validate(3, 0.4, 0.5, INF)
    assert centered_doubling_constant(p, 0.5) == pytest.approx(2 ** (3 - 0.8))


def test_measure_table_centered_and_offcenter():
    t = MeasureTable(P335, (0.0, 0.0, 0.0), 0.01, 2.0)
    for r in (0.05, 0.3, 1.1):
        want = centered_weight_integral(3, -0.6, r)
        assert t(r) == pytest.approx(want, rel=1e-3)
    toff = MeasureTable(P335, (0.7, 0.0, 0.0), 0.05, 1.5, n=60)
    assert toff.doubling_constant(0.5) < 100
    vals = toff(np.array([0.1, 0.8]))
    assert np.all(np.isfinite(vals)) and np.all(vals > 0)


def test_lemma_a2_property_small_runs():
    out = lemma_a2_property_check(P335, alpha=0.5, beta=3.0, gamma=1.5,
                                  center=(0.0, 0.0, 0.0), r_lo=0.02, r_hi=1.0,
                                  n_trials=60, seed=42)
    assert out["violations"] == 0
    out2 = lemma_a2_property_check(P335, alpha=1.0, beta=2.5, gamma=2.0,
                                   center=(0.6, 0.0, 0.0), r_lo=0.05,
                                   r_hi=1.0, n_trials=40, seed=7)
    assert out2["violations"] == 0
