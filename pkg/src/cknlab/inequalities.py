"""Empirical checks of the weighted functional inequalities.

Everything here evaluates ratios lhs / rhs_core on concrete discrete
fields; the unknown constants of the inequalities are reported as
suite maxima, never assumed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .errors import GridError, ParameterError
from .fields import (BoxGrid, DiscreteField, RadialGrid, dirichlet_energy,
                     lq_norm, oscillation)
from .measure import BallSpec, weighted_mean
from .params import WeightParams
from .solver import raw_stiffness


@dataclass
class RatioSample:
    lhs: float
    rhs_core: float
    ratio: float
    descriptor: str = ""


@dataclass
class AlphaHEstimate:
    alpha_h: float
    fit_residual: float
    n_samples: int


# ---------------------------------------------------------------------------
# CKN ratio

def ckn_ratio(params: WeightParams, field: DiscreteField,
              descriptor: str = "") -> RatioSample:
    """||u||_{L^p, |x|^{-bp}} / energy^{1/2} for a compactly supported field."""
    if not np.any(field.values):
        raise ParameterError("zero_field", "CKN ratio needs a nonzero field")
    lhs = lq_norm(params, field, params.p)
    rhs = math.sqrt(dirichlet_energy(params, field))
    return RatioSample(lhs=lhs, rhs_core=rhs,
                       ratio=lhs / rhs if rhs > 0 else math.inf,
                       descriptor=descriptor)


def ckn_ratio_radial_quad(params: WeightParams, u, du, r_max: float,
                          tol: float = 1e-11) -> float:
    """Exact-quadrature CKN ratio for a radial profile with derivative du."""
    from .measure import sphere_area
    sigma = sphere_area(params.N)
    p, N, a, bp = params.p, params.N, params.a, params.bp
    num = quad(lambda t: sigma * t ** (N - 1 - bp) * abs(u(t)) ** p,
               0.0, r_max, epsabs=tol, epsrel=tol, limit=400)[0]
    den = quad(lambda t: sigma * t ** (N - 1 - 2 * a) * du(t) ** 2,
               0.0, r_max, epsabs=tol, epsrel=tol, limit=400)[0]
    return num ** (1.0 / p) / math.sqrt(den)


# ---------------------------------------------------------------------------
# Poincare ratio on balls

def poincare_ratio(params: WeightParams, field: DiscreteField,
                   ball: BallSpec, descriptor: str = "") -> RatioSample:
    """int_B |u - mean|^2 dmu_a over r^2 * int_B |grad u|^2 dmu_a."""
    m = weighted_mean(params, field, ball)
    dev2 = (field.values - m) ** 2
    lhs = field.ball_weighted_integral(params, ball, -2.0 * params.a,
                                       values=dev2)
    rhs = ball.radius ** 2 * dirichlet_energy(params, field, ball)
    return RatioSample(lhs=lhs, rhs_core=rhs,
                       ratio=(lhs / rhs if rhs > 0 else 0.0),
                       descriptor=descriptor)


# ---------------------------------------------------------------------------
# oscillation decay / alpha_h

def estimate_alpha_h(params: WeightParams, field: DiscreteField, center,
                     radii) -> AlphaHEstimate:
    """Least-squares slope of log osc(u, B_rho) vs log rho, clamped to (0,1]."""
    radii = list(radii)
    if len(radii) < 3:
        raise ParameterError("insufficient_points", "need at least 3 radii")
    oscs = []
    for rho in radii:
        o = oscillation(field, BallSpec(tuple(center), rho))
        if o < 1e-14:
            raise GridError("degenerate_oscillation",
                            f"oscillation {o} at rho={rho}; field locally constant")
        oscs.append(o)
    x = np.log(np.asarray(radii, float))
    y = np.log(np.asarray(oscs))
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    alpha = min(max(float(slope), 1e-12), 1.0)
    return AlphaHEstimate(alpha_h=alpha, fit_residual=resid,
                          n_samples=len(radii))


# ---------------------------------------------------------------------------
# weak Harnack

def weak_harnack_check(params: WeightParams, field: DiscreteField,
                       ball: BallSpec, s_exp: float = 1.0,
                       superharmonic_tol: float = 1e-10,
                       descriptor: str = "") -> RatioSample:
    """(mean of u^s over B_r wrt mu_a)^{1/s} against inf over B_{r/2}.

    The field must be nonnegative and discretely weakly superharmonic on
    B_{2r} (stiffness residual >= -tol against the nodal hat basis).
    """
    u = field.values
    if u.min() < -1e-14:
        raise ParameterError("negative_field",
                             f"min value {u.min()} < 0")
    grid = field.grid
    coords = grid.node_coords()
    if isinstance(grid, RadialGrid):
        dist = np.abs(coords[:, 0] - ball.center_norm)
    else:
        dist = np.linalg.norm(coords - np.array(ball.center), axis=1)
    A = raw_stiffness(params, grid)
    res = np.asarray(A @ u).ravel()
    scale = max(float(np.abs(u).max()), 1.0) * np.maximum(A.diagonal(), 1e-300)
    check = dist <= 2.0 * ball.radius
    # rows touching the domain edge see a one-sided stencil, and the two
    # end faces carry edge-extended dual weights; skip those rows
    if isinstance(grid, RadialGrid):
        check[[0, 1, -2, -1]] = False
    else:
        nx, ny, nz = grid.shape
        onion = np.zeros((nx, ny, nz), dtype=bool)
        onion[0, :, :] = onion[-1, :, :] = True
        onion[:, 0, :] = onion[:, -1, :] = True
        onion[:, :, 0] = onion[:, :, -1] = True
        check &= ~onion.ravel()
    if np.any(res[check] < -superharmonic_tol * scale[check]):
        worst = float(np.min(res[check] / scale[check]))
        raise ParameterError("not_superharmonic",
                             f"weak residual {worst} below -{superharmonic_tol}")
    mass = field.ball_weighted_integral(params, ball, -2.0 * params.a,
                                        of_ones=True)
    mom = field.ball_weighted_integral(params, ball, -2.0 * params.a,
                                       values=u ** s_exp)
    lhs = (mom / mass) ** (1.0 / s_exp)
    half = BallSpec(ball.center, 0.5 * ball.radius)
    in_half = dist <= half.radius
    rhs = float(u[in_half].min()) if np.any(in_half) else 0.0
    ratio = lhs / rhs if rhs > 0 else math.inf
    return RatioSample(lhs=lhs, rhs_core=rhs, ratio=ratio,
                       descriptor=descriptor)


# ---------------------------------------------------------------------------
# sup bound and energy decay for harmonic fields

def sup_bound_ratio(params: WeightParams, field: DiscreteField,
                    ball: BallSpec, descriptor: str = "") -> RatioSample:
    """max_{B_{r/2}} |u| over the mu_a root-mean-square of u on B_r."""
    grid = field.grid
    coords = grid.node_coords()
    if isinstance(grid, RadialGrid):
        dist = np.abs(coords[:, 0] - ball.center_norm)
    else:
        dist = np.linalg.norm(coords - np.array(ball.center), axis=1)
    in_half = dist <= 0.5 * ball.radius
    if not np.any(in_half):
        raise GridError("empty_ball", "no nodes in the half ball")
    lhs = float(np.abs(field.values[in_half]).max())
    mass = field.ball_weighted_integral(params, ball, -2.0 * params.a,
                                        of_ones=True)
    mom = field.ball_weighted_integral(params, ball, -2.0 * params.a,
                                       values=field.values ** 2)
    rhs = math.sqrt(mom / mass)
    return RatioSample(lhs=lhs, rhs_core=rhs,
                       ratio=lhs / rhs if rhs > 0 else math.inf,
                       descriptor=descriptor)


def energy_decay_profile(params: WeightParams, field: DiscreteField, center,
                         radii):
    """Gradient energies over the shrinking ball family (Lemma-style Phi)."""
    from .regularity import GrowthProfile, ProfileKind
    values = [dirichlet_energy(params, field, BallSpec(tuple(center), rho))
              for rho in radii]
    return GrowthProfile(center=tuple(center), radii=tuple(float(r) for r in radii),
                         values=tuple(values), kind=ProfileKind.gradient_energy)


# ---------------------------------------------------------------------------
# deterministic test-field suite

def _radial_cutoff(r, r0: float, r1: float):
    """Smooth (C^1) transition 1 -> 0 on [r0, r1]."""
    t = np.clip((np.asarray(r, float) - r0) / (r1 - r0), 0.0, 1.0)
    return (1.0 - t) ** 2 * (1.0 + 2.0 * t)


def build_test_suite(grid: RadialGrid, seed: int, n_fields: int = 50,
                     support: float = 0.8):
    """Deterministic list of (descriptor, field) compactly supported in r < support.

    Mix of polynomial bumps, radial power profiles and seeded Fourier
    combinations; spans smooth and mildly singular behavior.
    """
    rng = np.random.default_rng(seed)
    r = grid.centers
    out = []
    cut = _radial_cutoff(r, 0.6 * support, support)
    kinds = ["bump", "poly", "power", "fourier"]
    for i in range(n_fields):
        kind = kinds[i % 4]
        if kind == "bump":
            m = 1 + (i // 4) % 4
            vals = np.clip(1.0 - (r / support) ** 2, 0.0, None) ** m
            desc = f"bump_m{m}"
        elif kind == "poly":
            coeffs = rng.uniform(-1.0, 1.0, size=4)
            vals = np.polyval(coeffs, r) * cut
            desc = f"poly_{i}"
        elif kind == "power":
            beta = rng.uniform(0.3, 1.8)
            vals = np.maximum(r, 1e-12) ** beta * cut
            desc = f"power_{beta:.3f}"
        else:
            ks = rng.integers(1, 6, size=3)
            amps = rng.uniform(-1.0, 1.0, size=3)
            vals = sum(a * np.sin(k * math.pi * r / support)
                       for a, k in zip(amps, ks)) * cut
            desc = f"fourier_{i}"
        if not np.any(vals):
            vals = np.clip(1.0 - (r / support) ** 2, 0.0, None)
            desc += "_fallback"
        out.append((desc, DiscreteField(grid=grid, values=vals, name=desc)))
    return out
