"""Weighted measure mu_a = |x|^{-2a} dx over balls.

Centered balls use the closed form; off-center balls reduce to a 1D
integral over spherical shells (the weight is radial, so the only
geometric input is the area fraction of each shell inside the ball),
refined by Richardson extrapolation of a composite Simpson rule.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import betainc

from .errors import GridError, QuadratureError
from .params import WeightParams


def sphere_area(N: int) -> float:
    """Surface area of the unit sphere in R^N: 2 pi^{N/2} / Gamma(N/2)."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


@dataclass(frozen=True)
class BallSpec:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise GridError("nonpositive_radius",
                            f"ball radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def center_norm(self) -> float:
        return math.sqrt(sum(c * c for c in self.center))


class MeasureMethod(Enum):
    closed_form = "closed_form"
    quadrature = "quadrature"


@dataclass(frozen=True)
class MeasureResult:
    value: float
    method: MeasureMethod
    est_error: float


def cap_fraction(N: int, cos_theta: np.ndarray) -> np.ndarray:
    """Fraction of the unit sphere S^{N-1} within polar angle theta of a pole."""
    c = np.clip(cos_theta, -1.0, 1.0)
    sin2 = 1.0 - c * c
    half = 0.5 * betainc((N - 1) / 2.0, 0.5, sin2)
    return np.where(c >= 0.0, half, 1.0 - half)


def _shell_integrand(N: int, w_exp: float, d: float, rho: float, t: np.ndarray) -> np.ndarray:
    """sigma_{N-1} t^{N-1+w} times the shell fraction inside B_rho(|x0|=d)."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0.0
    tp = t[pos]
    cos_theta = (tp * tp + d * d - rho * rho) / (2.0 * tp * d)
    frac = cap_fraction(N, cos_theta)
    out[pos] = sphere_area(N) * tp ** (N - 1 + w_exp) * frac
    return out


def _simpson(f, lo: float, hi: float, n: int) -> float:
    t = np.linspace(lo, hi, n + 1)
    y = f(t)
    h = (hi - lo) / n
    return h / 3.0 * (y[0] + y[-1] + 4.0 * np.sum(y[1:-1:2]) + 2.0 * np.sum(y[2:-1:2]))


def _simpson_refine(f, lo: float, hi: float, tol: float, scale: float,
                    max_panels: int = 1 << 18) -> tuple[float, float]:
    """Composite Simpson with doubling; Richardson difference as error estimate."""
    if hi <= lo:
        return 0.0, 0.0
    n = 16
    prev = _simpson(f, lo, hi, n)
    while n <= max_panels:
        n *= 2
        cur = _simpson(f, lo, hi, n)
        err = abs(cur - prev) / 15.0
        if err <= tol * max(scale, abs(cur)):
            return cur + (cur - prev) / 15.0, err
        prev = cur
    raise QuadratureError("quadrature_nonconvergence",
                          f"Simpson refinement exhausted {max_panels} panels on "
                          f"[{lo}, {hi}]")


def centered_weight_integral(N: int, w_exp: float, radius: float) -> float:
    """Closed form of the integral of |x|^{w_exp} over B_radius(0)."""
    expo = N + w_exp
    if expo <= 0:
        raise QuadratureError("nonintegrable_weight",
                              f"|x|^{w_exp} is not integrable near 0 in R^{N}")
    return sphere_area(N) * radius ** expo / expo


def ball_weight_integral(N: int, w_exp: float, ball: BallSpec,
                         tol: float = 1e-10) -> MeasureResult:
    """Integral of |x|^{w_exp} over the ball, closed form when centered."""
    if not tol > 0:
        raise QuadratureError("invalid_tolerance", f"tol must be > 0, got {tol}")
    d = ball.center_norm
    rho = ball.radius
    if d == 0.0:
        return MeasureResult(value=centered_weight_integral(N, w_exp, rho),
                             method=MeasureMethod.closed_form, est_error=0.0)

    def f(t):
        return _shell_integrand(N, w_exp, d, rho, t)

    total = 0.0
    err = 0.0
    scale_guess = centered_weight_integral(N, w_exp, d + rho)
    if d < rho:
        # Inner part of the ball covers whole shells: closed form, exact.
        total += centered_weight_integral(N, w_exp, rho - d)
        lo = rho - d
    else:
        lo = d - rho
    hi = d + rho
    # The cap fraction loses smoothness where the shell meets the ball
    # boundary at a right angle; split there to keep Simpson at full order.
    breaks = [lo]
    if d < rho:
        t_orth = math.sqrt(rho * rho - d * d)
        if lo < t_orth < hi:
            breaks.append(t_orth)
    breaks.append(hi)
    for left, right in zip(breaks[:-1], breaks[1:]):
        v, e = _simpson_refine(f, left, right, tol, scale_guess)
        total += v
        err += e
    return MeasureResult(value=total, method=MeasureMethod.quadrature, est_error=err)


def ball_measure(params: WeightParams, ball: BallSpec, tol: float = 1e-10) -> MeasureResult:
    """mu_a(B) = integral of |x|^{-2a} over the ball."""
    return ball_weight_integral(params.N, -2.0 * params.a, ball, tol)


def doubling_ratio(params: WeightParams, center, r: float, tau: float,
                   tol: float = 1e-10) -> float:
    """mu_a(B(x, r)) / mu_a(B(x, tau r)); one sample of the doubling constant."""
    if not 0.0 < tau < 1.0:
        raise GridError("invalid_tau", f"tau must lie in (0,1), got {tau}")
    big = ball_measure(params, BallSpec(tuple(center), r), tol)
    small = ball_measure(params, BallSpec(tuple(center), tau * r), tol)
    return big.value / small.value


def weighted_mean(params: WeightParams, field, ball: BallSpec) -> float:
    """Mean of a discrete field over the ball with respect to mu_a.

    Both numerator and denominator use the field's own cell quadrature so
    that constants average to themselves exactly.
    """
    num = field.ball_weighted_integral(params, ball, -2.0 * params.a)
    den = field.ball_weighted_integral(params, ball, -2.0 * params.a, of_ones=True)
    if den == 0.0:
        raise GridError("ball_outside_domain",
                        "ball does not intersect the field's grid")
    return num / den


def lemma_a1_ratio(params: WeightParams, ball: BallSpec, eps: float,
                   tol: float = 1e-9) -> dict:
    """Two-sided comparison of the weight integrals over one ball.

    lhs  = (int_B |x|^{-bp})^{2/p + eps}
    rhs0 = rho^{-2 + eps N} max(rho, |x0|)^{-eps b p} int_B |x|^{-2a}
    The ratio lhs/rhs0 sampled over ball families estimates the comparison
    constant; `envelope` is an explicit analytic upper bound for it.
    """
    if not eps > 0:
        raise QuadratureError("invalid_epsilon", f"eps must be > 0, got {eps}")
    N, bp = params.N, params.bp
    rho = ball.radius
    d = ball.center_norm
    lhs = ball_weight_integral(N, -bp, ball, tol).value ** (2.0 / params.p + eps)
    mu = ball_weight_integral(N, -2.0 * params.a, ball, tol).value
    rhs0 = rho ** (-2.0 + eps * N) * max(rho, d) ** (-eps * bp) * mu
    return {"lhs": lhs, "rhs_without_constant": rhs0, "ratio": lhs / rhs0,
            "envelope": lemma_a1_envelope(params, eps, d / rho)}


def lemma_a1_envelope(params: WeightParams, eps: float, t: float) -> float:
    """Explicit upper bound for the lemma ratio at |x0|/rho = t.

    Scale invariance makes the ratio a function of t alone; the bound below
    follows from enclosing/inscribed balls (near case, t <= 2) or from
    freezing the weight between its extremes on [t-1, t+1] (far case).
    """
    N, a, bp, p = params.N, params.a, params.bp, params.p
    sigma = sphere_area(N)
    omega = sigma / N  # unit-ball volume
    q = 2.0 / p + eps
    if t <= 2.0:
        # B subset B_{3 rho}(0); mu_a(B) bounded below on the sub-ball
        # B_{rho/4} centered 3/4 of the way out along the center ray,
        # where |x| stays in [rho/2, 3 rho].
        c_lhs = (sigma * 3.0 ** (N - bp) / (N - bp)) ** q
        w_min = min(0.5 ** (-2.0 * a), 3.0 ** (-2.0 * a))
        c_rhs = omega * 4.0 ** (-N) * w_min
        return c_lhs / c_rhs * max(1.0, 2.0 ** (eps * bp))
    lo, hi = t - 1.0, t + 1.0
    w_bp_max = max(lo ** -bp, hi ** -bp)
    w_2a_min = min(lo ** (-2.0 * a), hi ** (-2.0 * a))
    return omega ** (q - 1.0) * w_bp_max ** q * t ** (eps * bp) / w_2a_min
