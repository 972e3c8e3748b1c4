import math

import numpy as np
import pytest

from cknlab.errors import GridError, ParameterError
from cknlab.fields import BoxGrid, DiscreteField, RadialGrid
from cknlab.params import INF, validate
from cknlab.regularity import (FitResult, GrowthProfile, ProfileKind,
                               campanato_profile, default_radii, fit_growth,
                               gradient_profile, holder_quotient,
                               mean_value_deviation, regularity_report)
from cknlab.solver import assemble, exact_radial_mms, solve

P300 = validate(3, 0.0, 0.0, INF)


def test_campanato_constant_zero():
    grid = RadialGrid(0.0, 1.0, 256)
    u = DiscreteField(grid=grid, values=np.full(256, 5.0))
    prof = campanato_profile(P300, u, (0.0,), [0.4, 0.2, 0.1])
    assert all(abs(v) < 1e-20 for v in prof.values)


def test_campanato_linear_field_moment_oracle():
    # u = x1, a=0: value(r) = |B_r| r^2 / (N+2)
    grid = BoxGrid((-1, -1, -1), (1, 1, 1), (40, 40, 40))
    u = DiscreteField.from_function(grid, lambda p: p[:, 0])
    radii = [0.8, 0.55, 0.4]
    prof = campanato_profile(P300, u, (0, 0, 0), radii)
    for r, v in zip(radii, prof.values):
        want = (4 * math.pi / 3) * r ** 3 * r ** 2 / 5.0
        assert v == pytest.approx(want, rel=0.03)
    fit = fit_growth(prof, P300, "measure_normalized")
    assert fit.exponent == pytest.approx(1.0, abs=0.03)


def test_gradient_profile_linear_and_mms():
    grid = BoxGrid((-1, -1, -1), (1, 1, 1), (32, 32, 32))
    u = DiscreteField.from_function(grid, lambda p: p[:, 0])
    prof = gradient_profile(P300, u, (0, 0, 0), [0.8, 0.6, 0.45])
    raw = fit_growth(prof, None, "raw")
    assert raw.exponent == pytest.approx(3.0, abs=0.15)
    norm = fit_growth(prof, P300, "measure_normalized")
    assert norm.exponent == pytest.approx(1.0, abs=0.08)
    # radial MMS: energy over B_r equals 4 pi r^5 / 45
    rg = RadialGrid(0.0, 1.0, 1024)
    mms = DiscreteField.from_function(rg, lambda r: (1 - r ** 2) / 6)
    gprof = gradient_profile(P300, mms, (0.0,), [0.5, 0.35, 0.25])
    for r, v in zip(gprof.radii, gprof.values):
        assert v == pytest.approx(4 * math.pi * r ** 5 / 45, rel=0.01)


def test_fit_growth_synthetic_clamped():
    params = P300
    radii = [0.4, 0.2, 0.1, 0.05]
    from cknlab.measure import centered_weight_integral
    mu = [centered_weight_integral(3, 0.0, r) for r in radii]
    mu1 = centered_weight_integral(3, 0.0, 1.0)
    vals = [r ** 2.6 * m / mu1 for r, m in zip(radii, mu)]
    prof = GrowthProfile(center=(0.0,), radii=tuple(radii), values=tuple(vals),
                         kind=ProfileKind.campanato)
    fit = fit_growth(prof, params, "measure_normalized")
    assert fit.clamped
    assert fit.exponent == 1.0


def test_fit_growth_insufficient_points():
    prof = GrowthProfile(center=(0.0,), radii=(0.4, 0.2, 0.1),
                         values=(0.0, 0.0, 1.0), kind=ProfileKind.campanato)
    with pytest.raises(ParameterError) as exc:
        fit_growth(prof, P300, "measure_normalized")
    assert exc.value.code == "insufficient_points"


def test_holder_quotient_examples():
    grid = BoxGrid((-1, -1, -1), (1, 1, 1), (12, 12, 12))
    const = DiscreteField.from_function(grid, lambda p: np.full(len(p), 1.5))
    assert holder_quotient(const, 0.1, 0.7)["seminorm"] == 0.0
    lin = DiscreteField.from_function(grid, lambda p: p[:, 0])
    out = holder_quotient(lin, 0.1, 1.0)
    assert out["seminorm"] == pytest.approx(1.0, rel=1e-12)
    # u = sqrt(r): exact alpha=1/2 seminorm is 1, attained through 0
    rg = RadialGrid(0.0, 1.0, 1500)
    sq = DiscreteField.from_function(rg, np.sqrt)
    out2 = holder_quotient(sq, 0.0, 0.5)
    assert out2["seminorm"] <= 1.0 + 1e-9
    assert out2["seminorm"] == pytest.approx(1.0, rel=0.02)


def test_holder_quotient_sampled_pairs_deterministic():
    rng = np.random.default_rng(3)
    grid = RadialGrid(0.0, 1.0, 3000)  # > 2000 nodes: sampled path
    u = DiscreteField(grid=grid, values=np.cumsum(rng.normal(size=3000)) * 1e-3)
    a = holder_quotient(u, 0.05, 0.5, seed=9, n_pairs=200_000)
    b = holder_quotient(u, 0.05, 0.5, seed=9, n_pairs=200_000)
    assert a == b


def test_holder_quotient_errors():
    grid = RadialGrid(0.0, 1.0, 64)
    u = DiscreteField.from_function(grid, lambda r: r)
    with pytest.raises(GridError) as exc:
        holder_quotient(u, 0.6, 0.5)
    assert exc.value.code == "empty_subdomain"
    with pytest.raises(ParameterError):
        holder_quotient(u, 0.1, 1.5)


def test_default_radii_ladder():
    grid = RadialGrid(0.0, 1.0, 512)
    radii = default_radii(grid, (0.0,))
    assert radii[0] == pytest.approx(0.5)
    assert all(b == pytest.approx(a / 2) for a, b in zip(radii, radii[1:]))
    assert radii[-1] >= 8.0 / 512


def test_regularity_report_classical_mms():
    grid = RadialGrid(0.0, 1.0, 512)
    f = DiscreteField.from_function(grid, lambda r: np.ones_like(r))
    u, rep = solve(assemble(P300, grid, f, dirichlet=0.0))
    assert rep.converged
    radii = default_radii(grid, (0.0,))
    report = regularity_report(P300, u, f, INF, (0.0,), radii,
                               alpha_h_est=1.0)
    assert report.alpha_measured == pytest.approx(1.0, abs=0.05)
    assert report.alpha_predicted_sup == 1.0
    assert report.limiting_branch == "unit"
    assert report.passed


def test_constructed_holder_field_radial_reduction():
    # a = 0: weight trivial, so |x - x0|^{1/2} around x0 reduces to the
    # radial profile sqrt(r) around a centered origin
    grid = RadialGrid(0.0, 1.0, 4096)
    u = DiscreteField.from_function(grid, np.sqrt)
    radii = default_radii(grid, (0.0,))
    prof = campanato_profile(P300, u, (0.0,), radii)
    fit = fit_growth(prof, P300, "measure_normalized")
    assert fit.exponent == pytest.approx(0.5, abs=0.05)


def test_constructed_holder_field_box():
    grid = BoxGrid((-1, -1, -1), (1, 1, 1), (48, 48, 48))
    x0 = np.array([0.25, 0.15, -0.1])
    u = DiscreteField.from_function(
        grid, lambda p: np.linalg.norm(p - x0, axis=1) ** 0.5)
    radii = [0.35, 0.25, 0.18, 0.13]
    prof = campanato_profile(P300, u, tuple(x0), radii)
    fit = fit_growth(prof, P300, "measure_normalized")
    assert fit.exponent == pytest.approx(0.5, abs=0.1)


def test_campanato_gradient_consistency_smooth():
    grid = RadialGrid(0.0, 1.0, 2048)
    u = DiscreteField.from_function(grid, lambda r: np.cos(2 * r))
    radii = [0.4, 0.28, 0.2, 0.14, 0.1]
    ca = fit_growth(campanato_profile(P300, u, (0.0,), radii), P300,
                    "measure_normalized")
    gr = fit_growth(gradient_profile(P300, u, (0.0,), radii), P300,
                    "measure_normalized")
    assert abs(ca.exponent - gr.exponent) <= 0.1


def test_mean_value_deviation_decays():
    grid = RadialGrid(0.0, 1.0, 1024)
    u = DiscreteField.from_function(grid, lambda r: np.sin(3 * r))
    devs = mean_value_deviation(P300, u, (0.0,), [0.2, 0.1, 0.05])
    assert devs[0] > devs[-1] >= 0
