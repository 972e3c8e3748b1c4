"""Command-line orchestration: `ckn-lab run <config>` executes a named
experiment from a flat key=value config and writes CSV / structured-text
reports with fixed schemas; `ckn-lab list` shows the registry.

Exit codes: 0 pass, 1 usage or config error, 2 scientific failure.
"""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .errors import LabError
from .fields import BoxGrid, DiscreteField, RadialGrid
from .inequalities import (build_test_suite, ckn_ratio, estimate_alpha_h,
                           poincare_ratio)
from .measure import (BallSpec, ball_measure, centered_weight_integral,
                      doubling_ratio, lemma_a1_ratio)
from .moser import lemma_a2_property_check, run_ladder
from .params import INF, epsilon_choice, validate
from .regularity import (campanato_profile, default_radii, fit_growth,
                         regularity_report)
from .solver import (assemble, ckn_bubble, dilate_radial, exact_radial_mms,
                     harmonic_replacement, residual, solve,
                     stiffness_quadratic_form)


class UsageError(Exception):
    pass


FMT = "%.17g"


def _fmt(x) -> str:
    if isinstance(x, float):
        return FMT % x
    return str(x)


def parse_config(path: str) -> dict:
    cfg = {}
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {path}")
    for lineno, line in enumerate(p.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"invalid_config: line {lineno} has no '=': {line!r}")
        key, _, val = line.partition("=")
        cfg[key.strip()] = val.strip()
    return cfg


def _get(cfg: dict, key: str, cast=str, default=...):
    if key not in cfg:
        if default is ...:
            raise UsageError(f"invalid_config: missing key `{key}`")
        return default
    raw = cfg[key]
    try:
        if cast is float and raw.lower() in ("inf", "infinity"):
            return INF
        return cast(raw)
    except ValueError:
        raise UsageError(f"invalid_config: bad value for `{key}`: {raw!r}")


def _params(cfg: dict):
    return validate(_get(cfg, "params.N", int),
                    _get(cfg, "params.a", float),
                    _get(cfg, "params.b", float),
                    _get(cfg, "params.s", float, INF))


def _manifest(cfg: dict, name: str) -> str:
    echo = " ".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return f"# experiment={name} {echo}"


def _grid(cfg: dict) -> RadialGrid:
    return RadialGrid(_get(cfg, "grid.r_min", float, 0.0),
                      _get(cfg, "grid.r_max", float, 1.0),
                      _get(cfg, "grid.n", int, 512),
                      _get(cfg, "grid.spacing", str, "uniform"))


def _write(out_dir: Path, name: str, lines: list[str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# experiments; each returns True (pass) or False (scientific failure)

def exp_measure_identities(cfg, out_dir, dump):
    seed = _get(cfg, "seed", int)
    rng = np.random.default_rng(seed)
    tol = _get(cfg, "tol", float, 1e-8)
    rows = ["N,a,r,closed_form,quadrature,rel_error,doubling,doubling_exact"]
    ok = True
    from scipy.integrate import quad
    from .measure import sphere_area
    for _ in range(_get(cfg, "n_combos", int, 100)):
        N = int(rng.integers(3, 7))
        a = float(rng.uniform(-1.5, (N - 2) / 2 - 1e-3))
        r = float(rng.uniform(0.1, 2.0))
        closed = centered_weight_integral(N, -2 * a, r)
        quadr = quad(lambda t: sphere_area(N) * t ** (N - 1 - 2 * a), 0.0, r,
                     epsabs=1e-13 * closed, epsrel=1e-12)[0]
        rel = abs(closed - quadr) / closed
        params = validate(N, a, a + 0.5, INF)
        doub = doubling_ratio(params, (0.0,) * N, r, 0.5)
        dexact = 2.0 ** (N - 2 * a)
        ok &= rel <= tol and abs(doub - dexact) <= 1e-10 * dexact
        rows.append(",".join(_fmt(v) for v in
                             [N, a, r, closed, quadr, rel, doub, dexact]))
    _write(out_dir, "measure_report.csv",
           [_manifest(cfg, "measure_identities")] + rows)
    return ok


def exp_mms_convergence(cfg, out_dir, dump):
    params = _params(cfg)
    gamma = _get(cfg, "mms.gamma", float, 0.0)
    levels = _get(cfg, "levels", int, 4)
    n0 = _get(cfg, "grid.n", int, 256)
    r_min = _get(cfg, "grid.r_min", float, 0.0)
    r_max = _get(cfg, "grid.r_max", float, 1.0)
    u_exact, f_exact = exact_radial_mms(params, gamma, r_max)
    rows = ["level,h,max_error,observed_order"]
    errs = []
    ok = True
    for lev in range(levels + 1):
        n = n0 * 2 ** lev
        grid = RadialGrid(r_min, r_max, n)
        f = DiscreteField.from_function(grid, f_exact)
        inner = float(u_exact(r_min)) if r_min > 0 else None
        uh, rep = solve(assemble(params, grid, f, dirichlet=0.0, inner=inner))
        ok &= rep.converged
        err = float(np.max(np.abs(uh.values - u_exact(grid.centers))))
        order = math.log2(errs[-1] / err) if errs else float("nan")
        errs.append(err)
        rows.append(",".join(_fmt(v) for v in
                             [lev, (r_max - r_min) / n, err, order]))
        if lev > 0:
            ok &= 1.8 <= order <= 2.5
    _write(out_dir, "mms_report.csv", [_manifest(cfg, "mms_convergence")] + rows)
    return ok


def exp_harmonic_replacement(cfg, out_dir, dump):
    params = _params(cfg)
    seed = _get(cfg, "seed", int)
    grid = _grid(cfg)
    rng = np.random.default_rng(seed)
    n_cases = _get(cfg, "n_cases", int, 50)
    rows = ["case,energy_u,energy_w,energy_diff_split,idempotence_gap"]
    ok = True
    for i in range(n_cases):
        vals = np.cumsum(rng.standard_normal(grid.n_cells)) * 0.02
        u = DiscreteField(grid=grid, values=vals)
        rho = float(rng.uniform(0.3, 0.8)) * (grid.r_max - grid.r_min)
        ball = BallSpec((0.0,), max(rho, 20 * (grid.r_max - grid.r_min)
                                    / grid.n_cells))
        w = harmonic_replacement(params, u, ball)
        qu = stiffness_quadratic_form(params, grid, u.values)
        qw = stiffness_quadratic_form(params, grid, w.values)
        qv = stiffness_quadratic_form(params, grid, u.values - w.values)
        w2 = harmonic_replacement(params, w, ball)
        gap = float(np.max(np.abs(w2.values - w.values)))
        split = abs(qu - qw - qv) / max(qu, 1e-300)
        ok &= (qw <= qu * (1 + 1e-12)) and split < 1e-8 and gap < 1e-8
        rows.append(",".join(_fmt(v) for v in [i, qu, qw, split, gap]))
    _write(out_dir, "replacement_report.csv",
           [_manifest(cfg, "harmonic_replacement")] + rows)
    return ok


def exp_inequality_suite(cfg, out_dir, dump):
    params = _params(cfg)
    seed = _get(cfg, "seed", int)
    grid = _grid(cfg)
    suite = build_test_suite(grid, seed)
    rows = ["descriptor,lhs,rhs_core,ratio"]
    ckn_max = 0.0
    poin_max = 0.0
    ball = BallSpec((0.0,), 0.9 * (grid.r_max - grid.r_min))
    ok = True
    for desc, f in suite:
        c = ckn_ratio(params, f, desc)
        p = poincare_ratio(params, f, ball, desc)
        ckn_max = max(ckn_max, c.ratio)
        poin_max = max(poin_max, p.ratio)
        ok &= math.isfinite(c.ratio) and math.isfinite(p.ratio)
        rows.append(",".join([f"ckn_{desc}", _fmt(c.lhs), _fmt(c.rhs_core),
                              _fmt(c.ratio)]))
        rows.append(",".join([f"poincare_{desc}", _fmt(p.lhs), _fmt(p.rhs_core),
                              _fmt(p.ratio)]))
    rows.append(",".join(["max_ckn_constant", _fmt(ckn_max), "", ""]))
    rows.append(",".join(["max_poincare_constant", _fmt(poin_max), "", ""]))
    _write(out_dir, "inequality_report.csv",
           [_manifest(cfg, "inequality_suite")] + rows)
    frozen_ckn = _get(cfg, "frozen.ckn_constant", float, None)
    frozen_poin = _get(cfg, "frozen.poincare_constant", float, None)
    if frozen_ckn is not None:
        ok &= ckn_max <= frozen_ckn * 1.02
    if frozen_poin is not None:
        ok &= poin_max <= frozen_poin * 1.02
    return ok


def exp_alpha_h_estimation(cfg, out_dir, dump):
    params = _params(cfg)
    grid = RadialGrid(_get(cfg, "grid.r_min", float, 0.25),
                      _get(cfg, "grid.r_max", float, 2.0),
                      _get(cfg, "grid.n", int, 4000))
    expo = 2 + 2 * params.a - params.N
    u = DiscreteField.from_function(grid, lambda r: r ** expo)
    center = (_get(cfg, "center", float, 1.2),)
    radii = [0.2 * 0.7 ** k for k in range(5)]
    est = estimate_alpha_h(params, u, center, radii)
    ok = 0 < est.alpha_h <= 1 and est.fit_residual <= 0.05
    if params.a == 0.0:
        ok &= est.alpha_h >= 0.9
    _write(out_dir, "alpha_h_report.csv",
           [_manifest(cfg, "alpha_h_estimation"),
            "alpha_h,fit_residual,n_samples",
            ",".join([_fmt(est.alpha_h), _fmt(est.fit_residual),
                      str(est.n_samples)])])
    return ok


def exp_regularity_report(cfg, out_dir, dump):
    params = _params(cfg)
    s_used = _get(cfg, "params.s", float, INF)
    grid = _grid(cfg)
    f = DiscreteField.from_function(grid, lambda r: np.ones_like(r))
    uh, rep = solve(assemble(params, grid, f, dirichlet=0.0))
    radii = default_radii(grid, (0.0,))
    report = regularity_report(params, uh, f, s_used, (0.0,), radii,
                               alpha_h_est=_get(cfg, "alpha_h", float, 1.0),
                               seed=_get(cfg, "seed", int))
    lines = [_manifest(cfg, "regularity_report"),
             f"alpha_measured={_fmt(report.alpha_measured)}",
             f"alpha_predicted_sup={_fmt(report.alpha_predicted_sup)}",
             f"limiting_branch={report.limiting_branch}",
             f"holder_seminorm={_fmt(report.holder_seminorm)}",
             f"sup_norm={_fmt(report.sup_norm)}",
             f"pass={str(report.passed).lower()}"]
    _write(out_dir, "regularity_report.txt", lines)
    prof = campanato_profile(params, uh, (0.0,), radii)
    _write(out_dir, "regularity_profile.csv",
           [_manifest(cfg, "regularity_report"), "radius,value"]
           + [",".join([_fmt(r), _fmt(v)])
              for r, v in zip(prof.radii, prof.values)])
    return rep.converged and report.passed


def exp_dilation_symmetry(cfg, out_dir, dump):
    params = _params(cfg)
    lam = _get(cfg, "lambda", float, 2.0)
    u_fn, K, _, _ = ckn_bubble(params)
    ul = dilate_radial(params, u_fn, lam)
    r_min = _get(cfg, "grid.r_min", float, 0.05)
    r_max = _get(cfg, "grid.r_max", float, 3.0)
    rows = ["n,dual_residual,observed_order"]
    prev = None
    ok = True
    for n in [_get(cfg, "grid.n", int, 250) * 2 ** k for k in range(3)]:
        grid = RadialGrid(r_min, r_max, n)
        uf = DiscreteField.from_function(grid, ul)
        ff = uf.with_values(K * np.abs(uf.values) ** (params.p - 2) * uf.values)
        rep = residual(params, uf, ff, inner=float(ul(r_min)),
                       dirichlet=float(ul(r_max)))
        order = math.log2(prev / rep.dual_norm) if prev else float("nan")
        if prev:
            ok &= order >= 1.8
        prev = rep.dual_norm
        rows.append(",".join(_fmt(v) for v in [n, rep.dual_norm, order]))
    _write(out_dir, "dilation_report.csv",
           [_manifest(cfg, "dilation_symmetry")] + rows)
    return ok


def exp_moser_ladder(cfg, out_dir, dump):
    params = _params(cfg)
    u_fn, K, _, _ = ckn_bubble(params)
    r_max = _get(cfg, "grid.r_max", float, 3.0)
    grid = RadialGrid(0.0, r_max, _get(cfg, "grid.n", int, 2000))
    u = DiscreteField.from_function(grid, u_fn)
    from .params import k0_threshold
    k_stop = k0_threshold(params) + 2
    states = run_ladder(params, u, K, k_stop,
                        margin0=_get(cfg, "margin0", float, 0.3),
                        dirichlet=float(u_fn(r_max)))
    rows = ["k,q_k,norm_q,subdomain_margin"]
    for s in states:
        rows.append(",".join(_fmt(v) for v in
                             [s.k, s.q_k, s.norm_q, s.subdomain_margin]))
    _write(out_dir, "ladder_report.csv", [_manifest(cfg, "moser_ladder")] + rows)
    return all(math.isfinite(s.norm_q) for s in states)


def exp_lemma_a1_envelope(cfg, out_dir, dump):
    params = _params(cfg)
    seed = _get(cfg, "seed", int)
    rng = np.random.default_rng(seed)
    eps = epsilon_choice(validate(params.N, params.a, params.b,
                                  _get(cfg, "eps_s", float, 12.0)))
    n_balls = _get(cfg, "n_balls", int, 200)
    rows = ["center_norm,radius,ratio,envelope"]
    ok = True
    for _ in range(n_balls):
        center = rng.uniform(-1.5, 1.5, size=params.N)
        rho = float(rng.uniform(0.05, 1.0))
        out = lemma_a1_ratio(params, BallSpec(tuple(center), rho), eps,
                             tol=1e-8)
        ok &= out["ratio"] <= out["envelope"] * (1 + 1e-6)
        rows.append(",".join(_fmt(v) for v in
                             [float(np.linalg.norm(center)), rho,
                              out["ratio"], out["envelope"]]))
    _write(out_dir, "lemma_a1_report.csv",
           [_manifest(cfg, "lemma_a1_envelope")] + rows)
    return ok


def exp_lemma_a2_property(cfg, out_dir, dump):
    params = _params(cfg)
    seed = _get(cfg, "seed", int)
    rng = np.random.default_rng(seed)
    n_envelopes = _get(cfg, "n_envelopes", int, 20)
    trials_per = _get(cfg, "n_trials", int, 50)
    rows = ["envelope,alpha,beta,gamma,center_norm,violations,worst_margin"]
    trial_rows = ["envelope,trial,A1,A2,tau,constant,violations,worst_margin"]
    total_viol = 0
    for i in range(n_envelopes):
        alpha = float(rng.uniform(0.1, 1.5))
        beta = float(rng.uniform(alpha + 0.5, 4.0))
        gamma = float(rng.uniform(alpha + 0.1 * (beta - alpha),
                                  beta - 0.1 * (beta - alpha)))
        center = ((0.0,) * params.N if i % 2 == 0
                  else tuple(rng.uniform(-1.0, 1.0, size=params.N)))
        out = lemma_a2_property_check(params, alpha, beta, gamma, center,
                                      0.02, 1.0, trials_per,
                                      seed + i)
        total_viol += out["violations"]
        rows.append(",".join(_fmt(v) for v in
                             [i, alpha, beta, gamma,
                              float(np.linalg.norm(center)),
                              out["violations"],
                              out["worst_relative_margin"]]))
        for t in out["trials"]:
            trial_rows.append(",".join(_fmt(v) for v in
                                       [i, t["trial"], t["A1"], t["A2"],
                                        t["tau"], t["constant"],
                                        t["violations"],
                                        t["worst_relative_margin"]]))
    _write(out_dir, "lemma_a2_report.csv",
           [_manifest(cfg, "lemma_a2_property")] + rows)
    if dump:
        _write(out_dir, "lemma_a2_trials.csv",
               [_manifest(cfg, "lemma_a2_property")] + trial_rows)
    return total_viol == 0


EXPERIMENTS = {
    "measure_identities": (exp_measure_identities,
                           "closed-form vs quadrature ball measures, doubling"),
    "mms_convergence": (exp_mms_convergence,
                        "manufactured-solution convergence order study"),
    "harmonic_replacement": (exp_harmonic_replacement,
                             "energy minimality / idempotence suite"),
    "inequality_suite": (exp_inequality_suite,
                         "CKN and Poincare ratios over the 50-field suite"),
    "alpha_h_estimation": (exp_alpha_h_estimation,
                           "oscillation-decay exponent of harmonic fields"),
    "regularity_report": (exp_regularity_report,
                          "measured vs predicted Holder exponent"),
    "dilation_symmetry": (exp_dilation_symmetry,
                          "invariant dilation residual refinement study"),
    "moser_ladder": (exp_moser_ladder,
                     "weighted L^q integrability ladder on a solution"),
    "lemma_a1_envelope": (exp_lemma_a1_envelope,
                          "measure-ratio bound over random balls"),
    "lemma_a2_property": (exp_lemma_a2_property,
                          "iteration-lemma conclusion on random profiles"),
}

_RANDOMIZED = {"measure_identities", "harmonic_replacement",
               "inequality_suite", "lemma_a1_envelope", "lemma_a2_property",
               "regularity_report"}


def list_experiments() -> str:
    return "\n".join(f"{name}: {desc}"
                     for name, (_, desc) in sorted(EXPERIMENTS.items()))


def run(config_path: str, dump_trials: bool = False) -> int:
    try:
        cfg = parse_config(config_path)
        name = _get(cfg, "experiment")
        if name not in EXPERIMENTS:
            raise UsageError(f"unknown_experiment: {name}")
        if name in _RANDOMIZED and "seed" not in cfg:
            raise UsageError("invalid_config: missing key `seed` "
                             f"(required for randomized experiment {name})")
        out_dir = Path(_get(cfg, "output_dir", str, "."))
        fn = EXPERIMENTS[name][0]
        passed = fn(cfg, out_dir, dump_trials)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except LabError as exc:
        print(f"failure[{exc.code}]: {exc}", file=sys.stderr)
        return 2
    if not passed:
        print(f"experiment {name} FAILED", file=sys.stderr)
        return 2
    print(f"experiment {name} passed")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ckn-lab")
    sub = parser.add_subparsers(dest="cmd")
    runp = sub.add_parser("run", help="run an experiment from a config file")
    runp.add_argument("config")
    runp.add_argument("--dump-trials", action="store_true")
    sub.add_parser("list", help="list available experiments")
    args = parser.parse_args(argv)
    if args.cmd == "list":
        print(list_experiments())
        return 0
    if args.cmd == "run":
        return run(args.config, args.dump_trials)
    parser.print_usage(sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
