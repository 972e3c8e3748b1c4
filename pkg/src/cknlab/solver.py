"""Finite-volume solver for -div(|x|^{-2a} grad u) = |x|^{-bp} f.

Cell-centered unknowns; transmissibilities come from the exact weight
integral over each face's dual interval (radial) or dual box (box grid).
Two stiffness variants are used:

* `raw_stiffness` extends the end duals to the domain edges so that its
  quadratic form coincides with `fields.dirichlet_energy` exactly; this
  is what harmonic replacement minimizes.
* `assemble` uses pure inter-center duals plus half-cell caps coupling to
  explicit Dirichlet boundary nodes, the standard consistent second-order
  scheme.  Boundary rows are identity and the couplings are folded
  symmetrically into the right-hand side, so the matrix stays SPD.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .errors import GridError, ParameterError, SolverError
from .fields import (BoxGrid, DiscreteField, RadialGrid, _power_antiderivative,
                     box_face_dual_weights, cell_weights,
                     radial_face_dual_weights)
from .measure import BallSpec, sphere_area
from .params import WeightParams


@dataclass
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    boundary_mask: np.ndarray
    boundary_values: np.ndarray
    grid: object
    params: WeightParams
    node_positions: np.ndarray  # radial: augmented r positions; box: empty


@dataclass
class SolveReport:
    iterations: int
    relative_residual: float
    energy: float
    converged: bool = True


# ---------------------------------------------------------------------------
# stiffness assembly helpers

def _tridiag(T: np.ndarray, n: int) -> sp.csr_matrix:
    diag = np.zeros(n)
    diag[:-1] += T
    diag[1:] += T
    return sp.diags([-T, diag, -T], offsets=[-1, 0, 1], format="csr")


def raw_stiffness(params: WeightParams, grid) -> sp.csr_matrix:
    """Symmetric stiffness over all cells, natural (no-flux) at the domain edge.

    Its quadratic form u^T A u equals `fields.dirichlet_energy` exactly.
    """
    if isinstance(grid, RadialGrid):
        w = np.asarray(radial_face_dual_weights(grid, params.N, -2.0 * params.a))
        T = w / np.diff(grid.centers) ** 2
        return _tridiag(T, grid.n_cells)
    nx, ny, nz = grid.shape
    n = nx * ny * nz
    idx = np.arange(n).reshape(nx, ny, nz)
    rows, cols, vals = [], [], []
    h = grid.h
    for axis in range(3):
        w = np.asarray(box_face_dual_weights(grid, -2.0 * params.a, axis))
        T = (w / h[axis] ** 2).ravel()
        sl_lo = [slice(None)] * 3
        sl_hi = [slice(None)] * 3
        sl_lo[axis] = slice(None, -1)
        sl_hi[axis] = slice(1, None)
        i = idx[tuple(sl_lo)].ravel()
        j = idx[tuple(sl_hi)].ravel()
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-T, -T, T, T]
    return sp.csr_matrix((np.concatenate(vals),
                          (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def stiffness_quadratic_form(params: WeightParams, grid, values) -> float:
    """u^T A u for the raw stiffness; the discrete Dirichlet energy form."""
    A = raw_stiffness(params, grid)
    v = np.asarray(values, float).reshape(-1)
    return float(v @ (A @ v))


def _eliminate_dirichlet(A: sp.csr_matrix, rhs: np.ndarray, bidx: np.ndarray,
                         gvals: np.ndarray):
    """Identity rows/columns at `bidx`; couplings moved to the RHS."""
    n = A.shape[0]
    mask = np.zeros(n, dtype=bool)
    mask[bidx] = True
    x_b = np.zeros(n)
    x_b[bidx] = gvals
    rhs = rhs - A @ x_b
    coo = A.tocoo()
    keep = ~(mask[coo.row] | mask[coo.col])
    A2 = sp.coo_matrix((coo.data[keep], (coo.row[keep], coo.col[keep])),
                       shape=(n, n)).tocsr()
    A2 = A2 + sp.diags(mask.astype(float))
    rhs[bidx] = gvals
    return A2.tocsr(), rhs, mask


def _cap_transmissibility(params: WeightParams, lo: float, hi: float) -> float:
    """Boundary coupling sigma / int t^{-(N-1-2a)} dt over [lo, hi].

    Exact for constant-flux (homogeneous-equation) profiles, so the flux
    at the domain edge is reproduced to second order.
    """
    expo = 2.0 - params.N + 2.0 * params.a
    return sphere_area(params.N) / float(_power_antiderivative(expo, lo, hi))


def assemble(params: WeightParams, grid, f: DiscreteField | None = None,
             dirichlet=0.0, inner=None) -> LinearSystem:
    """Assemble the weighted stiffness with load |x|^{-bp} f.

    Radial grids: `dirichlet` is the value at r_max; `inner` (optional)
    the value at r_min, which requires r_min > 0 (r_min = 0 is always
    no-flux by symmetry).  Box grids: `dirichlet` is a constant or a
    callable g(points) imposed on the outer layer of cells.
    """
    load_w = np.asarray(cell_weights(grid, params.N, -params.bp))
    fvals = np.zeros(grid.n_nodes) if f is None else f.values
    if isinstance(grid, RadialGrid):
        if inner is not None and grid.r_min <= 0.0:
            raise GridError("invalid_boundary", "inner Dirichlet needs r_min > 0")
        n = grid.n_cells
        c = grid.centers
        e = grid.edges
        expo = params.N - 2.0 * params.a
        w_faces = sphere_area(params.N) * _power_antiderivative(
            expo, np.maximum(c[:-1], 1e-300), c[1:])
        T = w_faces / np.diff(c) ** 2
        ntot = n + (2 if inner is not None else 1)
        A = sp.lil_matrix((ntot, ntot))
        A[:n, :n] = _tridiag(T, n)
        rhs = np.zeros(ntot)
        rhs[:n] = load_w * fvals
        bnodes, bvals = [n], [float(dirichlet)]
        t_out = _cap_transmissibility(params, c[-1], e[-1])
        A[n - 1, n - 1] += t_out
        A[n, n] += t_out
        A[n - 1, n] -= t_out
        A[n, n - 1] -= t_out
        positions = [e[-1]]
        if inner is not None:
            t_in = _cap_transmissibility(params, e[0], c[0])
            A[0, 0] += t_in
            A[n + 1, n + 1] += t_in
            A[0, n + 1] -= t_in
            A[n + 1, 0] -= t_in
            bnodes.append(n + 1)
            bvals.append(float(inner))
            positions.append(e[0])
        A2, rhs, mask = _eliminate_dirichlet(A.tocsr(), rhs,
                                             np.array(bnodes), np.array(bvals))
        return LinearSystem(matrix=A2, rhs=rhs, boundary_mask=mask,
                            boundary_values=np.array(bvals), grid=grid,
                            params=params,
                            node_positions=np.concatenate([c, positions]))
    # box grid: boundary = outer layer of cells
    nx, ny, nz = grid.shape
    A = raw_stiffness(params, grid)
    rhs = load_w * fvals
    onion = np.zeros((nx, ny, nz), dtype=bool)
    onion[0, :, :] = onion[-1, :, :] = True
    onion[:, 0, :] = onion[:, -1, :] = True
    onion[:, :, 0] = onion[:, :, -1] = True
    bidx = np.nonzero(onion.ravel())[0]
    pts = grid.node_coords()[bidx]
    gvals = (np.asarray(dirichlet(pts), float) if callable(dirichlet)
             else np.full(len(bidx), float(dirichlet)))
    A2, rhs, mask = _eliminate_dirichlet(A, rhs, bidx, gvals)
    return LinearSystem(matrix=A2, rhs=rhs, boundary_mask=mask,
                        boundary_values=gvals, grid=grid, params=params,
                        node_positions=np.zeros(0))


# ---------------------------------------------------------------------------
# solve

def _jacobi(A: sp.csr_matrix) -> sp.dia_matrix:
    d = A.diagonal()
    if np.any(d <= 0):
        raise SolverError("not_spd", "nonpositive diagonal entry in stiffness")
    return sp.diags(1.0 / d)


def solve(system: LinearSystem, tol: float = 1e-11,
          max_iter: int = 100000) -> tuple[DiscreteField, SolveReport]:
    """Diagonally preconditioned conjugate gradients; deterministic."""
    A, b = system.matrix, system.rhs
    count = {"n": 0}

    def cb(_):
        count["n"] += 1

    x, info = cg(A, b, rtol=tol, atol=0.0, maxiter=max_iter, M=_jacobi(A),
                 callback=cb)
    bnorm = float(np.linalg.norm(b))
    rel = float(np.linalg.norm(b - A @ x)) / (bnorm if bnorm > 0 else 1.0)
    energy = float(0.5 * x @ (A @ x) - b @ x)
    report = SolveReport(iterations=count["n"], relative_residual=rel,
                         energy=energy, converged=(info == 0))
    field = DiscreteField(grid=system.grid, values=x[:system.grid.n_nodes].copy(),
                          name="solution")
    return field, report


# ---------------------------------------------------------------------------
# manufactured radial solutions

def exact_radial_mms(params: WeightParams, gamma: float, r_outer: float):
    """Closed-form pair (u, f) with f(r) = r^gamma and u(r_outer) = 0.

    u(r) = (r_outer^beta - r^beta) / ((N - bp + gamma) * beta),
    beta = 2 + 2a - bp + gamma, solves -(r^{N-1-2a} u')' = r^{N-1-bp} f.
    """
    N, a, bp = params.N, params.a, params.bp
    beta = 2.0 + 2.0 * a - bp + gamma
    denom1 = N - bp + gamma
    if abs(beta) < 1e-10 or abs(denom1) < 1e-10:
        raise ParameterError("degenerate_exponent",
                             f"beta={beta}, N-bp+gamma={denom1}; both must be nonzero")
    scale = 1.0 / (denom1 * beta)

    def u(r):
        return (r_outer ** beta - np.asarray(r, float) ** beta) * scale

    def f(r):
        return np.asarray(r, float) ** gamma

    return u, f


def ckn_bubble(params: WeightParams):
    """Radial solution of the critical nonlinear equation with constant K.

    u(r) = (1 + r^delta)^{-kappa}, kappa = 2/(p-2), delta = (N-2-2a)/kappa,
    solves -(r^{N-1-2a} u')' = K r^{N-1-bp} u^{p-1} with
    K = kappa (kappa + 1) delta^2.
    """
    if not params.p_above_two:
        raise ParameterError("degenerate_exponent", "needs b < a+1 (p > 2)")
    kappa = 2.0 / (params.p - 2.0)
    delta = (params.N - 2.0 - 2.0 * params.a) / kappa
    K = kappa * (kappa + 1.0) * delta ** 2

    def u(r):
        return (1.0 + np.asarray(r, float) ** delta) ** -kappa

    return u, K, delta, kappa


def dilate_radial(params: WeightParams, u, lam: float):
    """The invariant dilation u_lam(x) = lam^{(N-2-2a)/2} u(lam x)."""
    e = (params.N - 2.0 - 2.0 * params.a) / 2.0

    def ul(r):
        return lam ** e * u(lam * np.asarray(r, float))

    return ul


# ---------------------------------------------------------------------------
# residual in the energy-dual norm

@dataclass
class ResidualReport:
    nodal: DiscreteField
    dual_norm: float


def residual(params: WeightParams, u: DiscreteField, f: DiscreteField,
             dirichlet=None, inner=None, tol: float = 1e-9) -> ResidualReport:
    """Weak residual A u - rhs of the assembled system at the sampled u.

    Boundary values default to the sampled field's own trace, so the
    residual isolates the interior equation error; rows coupled to the
    Dirichlet data (the trace cells on a radial grid) are excluded since
    their balance mixes in the prescribed trace.  The scalar summary is
    sqrt(r^T A^{-1} r), the energy-dual norm of the residual functional.
    """
    grid = u.grid
    if isinstance(grid, RadialGrid):
        outer_val = float(u.values[-1]) if dirichlet is None else float(dirichlet)
        system = assemble(params, grid, f, dirichlet=outer_val, inner=inner)
        extra = [outer_val] if inner is None else [outer_val, float(inner)]
        x = np.concatenate([u.values, extra])
    else:
        system = assemble(params, grid, f, dirichlet=0.0)
        x = u.values.copy()
        if dirichlet is None:
            system.rhs[system.boundary_mask] = x[system.boundary_mask]
        else:
            pts = grid.node_coords()[system.boundary_mask]
            system.rhs[system.boundary_mask] = (
                np.asarray(dirichlet(pts), float) if callable(dirichlet)
                else float(dirichlet))
    r = system.matrix @ x - system.rhs
    r[system.boundary_mask] = 0.0
    if isinstance(grid, RadialGrid):
        r[grid.n_cells - 1] = 0.0
        if inner is not None:
            r[0] = 0.0
    z, _ = cg(system.matrix, r, rtol=tol, atol=0.0, maxiter=100000,
              M=_jacobi(system.matrix))
    dual = math.sqrt(max(float(r @ z), 0.0))
    nodal = DiscreteField(grid=grid, values=r[:grid.n_nodes].copy(),
                          name="residual")
    return ResidualReport(nodal=nodal, dual_norm=dual)


# ---------------------------------------------------------------------------
# harmonic replacement

def harmonic_replacement(params: WeightParams, u: DiscreteField, ball: BallSpec,
                         tol: float = 1e-13, max_iter: int = 100000) -> DiscreteField:
    """Minimize the discrete energy over fields equal to u outside the ball.

    Nodes strictly inside the ball that touch neither an outside node nor
    the domain edge are relaxed; everything else keeps u's values.  The
    output w satisfies the discrete weighted-harmonic equation at relaxed
    nodes, so energy(u) = energy(w) + energy(u - w) for the raw form.
    """
    grid = u.grid
    coords = grid.node_coords()
    if isinstance(grid, RadialGrid):
        inside = np.abs(coords[:, 0] - ball.center_norm) <= ball.radius
    else:
        inside = np.linalg.norm(coords - np.array(ball.center), axis=1) <= ball.radius
    A = raw_stiffness(params, grid)
    adj = A.copy().tolil()
    adj.setdiag(0.0)
    adj = adj.tocsr()
    adj.eliminate_zeros()
    adj.data = np.ones_like(adj.data)
    touches_outside = np.asarray(adj @ (~inside).astype(float)).ravel() > 0.5
    degree = np.asarray(adj @ np.ones(grid.n_nodes)).ravel()
    full_degree = 2.0 if isinstance(grid, RadialGrid) else 6.0
    on_edge = degree < full_degree - 0.5
    interior = inside & ~touches_outside & ~on_edge
    if interior.sum() < 2:
        raise GridError("ball_too_small",
                        f"only {int(interior.sum())} relaxable nodes in the ball")
    I = np.nonzero(interior)[0]
    A_II = A[np.ix_(I, I)].tocsr()
    b = -np.asarray(A[I][:, ~interior] @ u.values[~interior]).ravel()
    x, info = cg(A_II, b, x0=u.values[I], rtol=tol, atol=0.0, maxiter=max_iter,
                 M=_jacobi(A_II))
    if info != 0:
        raise SolverError("no_convergence",
                          f"harmonic replacement CG stopped at info={info}")
    w = u.values.copy()
    w[I] = x
    return u.with_values(w, name="harmonic_replacement")
