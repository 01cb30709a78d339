"""Monotone iteration for the discrete complex-coefficient degenerate system.

The discrete weak problem is: find u vanishing on the boundary layer with

    sum_cells a * <flux(Du), D phi> h^n = sum_cells <G, D phi> h^n,
    G = |F|^(p-2) F,

for all admissible phi.  Strong accretivity of a * flux (coefficient sector
plus two-sided flux monotonicity) makes the residual operator strongly
monotone, so a damped preconditioned descent

    u <- u - tau * P residual(u),     P = inverse discrete Laplacian

contracts without ever forming the (degenerate, for p<2 unbounded) Jacobian.
The step rule is Barzilai-Borwein with rejection: a step that does not
decrease the preconditioned dual residual is rejected and tau halved, which
enforces a monotone residual history.  For p < 2 at small mu the solve runs a
mu-continuation (mu_k = max(mu, mu0 2^-k)) and finishes at the target mu.

The residual dual norm is ||D(P r)||_{p'}, which has flux units and bounds
<r, phi> <= ||D(P r)||_{p'} ||D phi||_p by construction; the stopping rule is
relative to ||F||_p^(p-1) + mu^(p-1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse.linalg as spla

from .algebra import flux
from .fields import CoefficientField, verify_structure
from .grid import (
    Grid,
    boundary_nodes,
    discrete_divergence,
    discrete_gradient,
    free_nodes,
    laplacian,
    lp_norm_cells,
)


class ConvergenceError(RuntimeError):
    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = list(history or [])


@dataclass
class Problem:
    grid: Grid
    a: CoefficientField
    F: np.ndarray  # complex (N, ndim, *cells)
    p: float
    mu: float

    def __post_init__(self):
        if self.p <= 1:
            raise ValueError("p must exceed 1")
        if not 0 <= self.mu <= 1:
            raise ValueError("mu must lie in [0, 1]")
        if not (np.isfinite(self.F.real).all() and np.isfinite(self.F.imag).all()):
            raise ValueError("source field has non-finite entries")
        rep = verify_structure(self.a)
        if not (rep.ellipticity_ok and rep.sector_ok):
            raise ValueError(
                f"coefficient field fails its structure conditions at {rep.worst_cell}"
            )

    @property
    def components(self) -> int:
        return self.F.shape[0]


@dataclass
class SolveOptions:
    max_iters: int = 20000
    tol_residual: float | None = None  # default 1e-8 (p=2) / 1e-6 (p!=2)
    damping: str = "bb"  # "bb" | "fixed"
    seed: int = 0
    init: str = "zero"  # "zero" | "random"
    mu_floor: float = 0.05  # continuation start for p<2
    check_monotone: bool = False
    telemetry_path: str | None = None

    def tol_for(self, p: float) -> float:
        if self.tol_residual is not None:
            return self.tol_residual
        return 1e-8 if p == 2 else 1e-6


@dataclass
class State:
    u: np.ndarray  # complex (N, *node_shape)
    Du: np.ndarray  # complex (N, ndim, *cells)
    grid: Grid

    def gradient_consistent(self) -> bool:
        return bool(
            np.allclose(self.Du, discrete_gradient(self.u, self.grid), atol=1e-13)
        )


@dataclass
class SolveResult:
    state: State
    iterations: int
    residual_history: list = field(default_factory=list)
    energy_testing_bound: float = 0.0
    mu_stages: list = field(default_factory=list)


def source_flux(F: np.ndarray, p: float) -> np.ndarray:
    """|F|^(p-2) F per cell (the dual-exponent source the weak form pairs with)."""
    F = np.asarray(F, dtype=np.complex128)
    mag2 = (F.real**2 + F.imag**2).sum(axis=(0, 1))
    with np.errstate(divide="ignore"):
        w = np.where(mag2 > 0, mag2, 1.0) ** ((p - 2.0) / 2.0)
    return np.where(mag2 > 0, w, 0.0) * F


def residual(u: np.ndarray, problem: Problem, mu: float | None = None) -> np.ndarray:
    """Dual vector r with <r, phi> = weak-form mismatch, via adjointness.

    r = -div( a flux(Du) - |F|^(p-2) F ) restricted to the domain cells;
    entries at non-free nodes are zeroed (test functions vanish there).
    """
    g = problem.grid
    mu = problem.mu if mu is None else mu
    Du = discrete_gradient(u, g)
    fl = _cell_flux(Du, problem, mu) - source_flux(problem.F, problem.p)
    r = -discrete_divergence(fl, g)
    r[:, ~g.free] = 0.0
    return r


def _cell_flux(Du: np.ndarray, problem: Problem, mu: float) -> np.ndarray:
    # flux over (N, ndim) matrix per cell: move cells to the batch axes
    nd = problem.grid.ndim
    eta = np.moveaxis(Du, (0, 1), (-2, -1))  # (*cells, N, ndim)
    out = flux(eta, problem.p, mu)
    out = np.moveaxis(out, (-2, -1), (0, 1))
    return problem.a.values * out


class _Preconditioner:
    """Complex LU of the free-node Laplacian of a cell region."""

    def __init__(self, grid: Grid, region=None):
        self.grid = grid
        self.free = free_nodes(grid, region)
        self.idx = np.where(self.free.ravel())[0]
        L = laplacian(grid, region).astype(np.complex128)
        self.lu = spla.splu(L.tocsc())

    def apply(self, r: np.ndarray) -> np.ndarray:
        # r: (N, *node_shape) complex -> same, zero off the free set
        N = r.shape[0]
        flat = r.reshape(N, -1)[:, self.idx]
        sol = self.lu.solve(flat.T).T
        out = np.zeros_like(r)
        out.reshape(N, -1)[:, self.idx] = sol
        return out


def _dual_norm(d: np.ndarray, problem: Problem, region=None) -> float:
    """||D d||_{p'} of a preconditioned residual d (flux units)."""
    g = problem.grid
    pprime = problem.p / (problem.p - 1.0)
    Dd = discrete_gradient(d, g)
    return lp_norm_cells(Dd, pprime, g, region=g.mask if region is None else region)


def _monotone_pairing(Du1, Du2, problem: Problem, mu: float) -> float:
    g = problem.grid
    f1 = _cell_flux(Du1, problem, mu)
    f2 = _cell_flux(Du2, problem, mu)
    d = Du1 - Du2
    val = ((f1 - f2) * d.conj()).sum(axis=(0, 1))
    return float(val.real[g.mask].sum() * g.h**g.ndim)


def _solve_stage(
    problem: Problem,
    opts: SolveOptions,
    u0: np.ndarray,
    mu: float,
    tol_abs: float,
    precond: _Preconditioner,
    region,
    telemetry,
    history_out: list,
):
    g = problem.grid
    u = u0.copy()
    r = residual_region(u, problem, mu, region)
    d = precond.apply(r)
    rho = _dual_norm(d, problem, region)
    history_out.append(rho)
    if telemetry is not None:
        telemetry.write(json.dumps({"iter": 0, "residual": rho, "step": 0.0}) + "\n")
    if rho <= tol_abs:
        return u, 0
    tau = _initial_step(problem, mu, region)
    prev_u = None
    prev_d = None
    iters = 0
    Du = discrete_gradient(u, g)
    for k in range(1, opts.max_iters + 1):
        # Barzilai-Borwein step from the last accepted pair, else keep tau
        if opts.damping == "bb" and prev_u is not None:
            du = (u - prev_u).ravel()
            dd = (d - prev_d).ravel()
            num = float((du.conj() * dd).real.sum())
            den = float((dd.conj() * dd).real.sum())
            if num > 0 and den > 0:
                tau = num / den
        accepted = False
        for _ in range(60):
            trial = u - tau * d
            r_t = residual_region(trial, problem, mu, region)
            d_t = precond.apply(r_t)
            rho_t = _dual_norm(d_t, problem, region)
            if rho_t < rho or rho_t <= tol_abs:
                accepted = True
                break
            tau *= 0.5
        if not accepted:
            raise ConvergenceError(
                f"step collapsed at iteration {k} (residual {rho:.3e})",
                history=history_out,
            )
        if opts.check_monotone:
            Du_t = discrete_gradient(trial, g)
            pair = _monotone_pairing(Du_t, Du, problem, mu)
            if pair < -1e-12 * max(rho, 1.0):
                raise AssertionError("monotone pairing negative across iterates")
            Du = Du_t
        prev_u, prev_d = u, d
        u, d, rho = trial, d_t, rho_t
        history_out.append(rho)
        iters = k
        if telemetry is not None:
            telemetry.write(
                json.dumps({"iter": k, "residual": rho, "step": tau}) + "\n"
            )
        if rho <= tol_abs:
            return u, iters
    raise ConvergenceError(
        f"no convergence in {opts.max_iters} iterations (residual {rho:.3e}, "
        f"target {tol_abs:.3e})",
        history=history_out,
    )


def residual_region(u, problem: Problem, mu: float, region) -> np.ndarray:
    """Residual with the cell sum restricted to ``region`` (None = full mask)."""
    g = problem.grid
    if region is None:
        return residual(u, problem, mu)
    Du = discrete_gradient(u, g)
    fl = (_cell_flux(Du, problem, mu) - source_flux(problem.F, problem.p)) * region
    # discrete_divergence applies the grid mask; region is a subset of it
    r = -discrete_divergence(fl, g)
    r[:, ~free_nodes(g, region)] = 0.0
    return r


def _initial_step(problem: Problem, mu: float, region) -> float:
    """Scale guess 1/(|a| * slope) from the source magnitude, clamped."""
    g = problem.grid
    p = problem.p
    G = source_flux(problem.F, p)
    mag = np.sqrt((G.real**2 + G.imag**2).sum(axis=(0, 1)))
    sel = g.mask if region is None else region
    gbar = float(np.abs(problem.a.values[sel]).mean())
    scale = float(mag[sel].mean()) / max(gbar, 1e-12)
    grad_scale = max(scale, mu ** (p - 1.0) if mu > 0 else 0.0) ** (1.0 / (p - 1.0))
    slope = (mu * mu + grad_scale**2) ** ((p - 2.0) / 2.0) if (mu > 0 or grad_scale > 0) else 1.0
    tau = 1.0 / max(gbar * slope, 1e-8)
    return float(np.clip(tau, 1e-6, 1e6))


def solve(problem: Problem, opts: SolveOptions | None = None) -> SolveResult:
    """Solve the discrete system on the grid's domain (zero boundary data)."""
    opts = opts or SolveOptions()
    g = problem.grid
    N = problem.components
    tol = opts.tol_for(problem.p)
    scale = (
        lp_norm_cells(problem.F, problem.p, g) ** (problem.p - 1.0)
        + problem.mu ** (problem.p - 1.0)
    )
    u0 = np.zeros((N,) + g.node_shape, dtype=np.complex128)
    if opts.init == "random":
        rng = np.random.default_rng(opts.seed)
        u0 = 0.1 * (
            rng.standard_normal(u0.shape) + 1j * rng.standard_normal(u0.shape)
        ).astype(np.complex128)
        u0[:, ~g.free] = 0.0

    precond = _Preconditioner(g)
    telemetry = open(opts.telemetry_path, "a") if opts.telemetry_path else None
    history: list = []
    stages = _mu_schedule(problem.p, problem.mu, opts.mu_floor)
    try:
        u = u0
        total_iters = 0
        for i, mu_k in enumerate(stages):
            last = i == len(stages) - 1
            stage_tol = tol if last else max(tol, 1e-3)
            tol_abs = stage_tol * scale if scale > 0 else 0.0
            if tol_abs == 0.0:
                r0 = residual_region(u, problem, mu_k, None)
                d0 = precond.apply(r0)
                tol_abs = stage_tol * max(_dual_norm(d0, problem, None), 1e-300)
            u, iters = _solve_stage(
                problem, opts, u, mu_k, tol_abs, precond, None, telemetry, history
            )
            total_iters += iters
    finally:
        if telemetry is not None:
            telemetry.close()

    Du = discrete_gradient(u, g)
    du_norm = lp_norm_cells(Du, problem.p, g)
    denom = (
        lp_norm_cells(problem.F, problem.p, g)
        + problem.mu * g.domain_measure ** (1.0 / problem.p)
    )
    bound = du_norm / denom if denom > 0 else (0.0 if du_norm == 0 else np.inf)
    return SolveResult(
        state=State(u=u, Du=Du, grid=g),
        iterations=total_iters,
        residual_history=history,
        energy_testing_bound=bound,
        mu_stages=stages,
    )


def _mu_schedule(p: float, mu: float, mu_floor: float) -> list:
    if p >= 2 or mu >= mu_floor:
        return [mu]
    stages = []
    m = mu_floor
    while m > mu:
        stages.append(m)
        m *= 0.5
        if m <= max(mu, 1e-4):
            break
    stages.append(mu)
    return stages


def manufactured_source(
    state: State, a: CoefficientField, p: float, mu: float
) -> np.ndarray:
    """Source F whose discrete system has ``state`` as its exact solution.

    Inverts the dual-exponent map: with G = a flux(Du*) the returned F has
    |F|^(p-2) F = G exactly, so the discrete residual of u* vanishes and any
    solver error is iteration error, not discretization error.
    """
    g = state.grid
    eta = np.moveaxis(state.Du, (0, 1), (-2, -1))
    G = np.moveaxis(flux(eta, p, mu), (-2, -1), (0, 1)) * a.values
    mag2 = (G.real**2 + G.imag**2).sum(axis=(0, 1))
    expo = -(p - 2.0) / (p - 1.0) / 2.0  # |G|^(-(p-2)/(p-1)) on squared norms
    with np.errstate(divide="ignore"):
        w = np.where(mag2 > 0, mag2, 1.0) ** expo
    return np.where(mag2 > 0, w, 0.0) * G


def uniqueness_probe(problem: Problem, opts: SolveOptions, trials: int = 3) -> float:
    """Max pairwise ||D(u_i - u_j)||_p over solves from random starts."""
    if trials < 2:
        raise ValueError("need at least two trials")
    ss = np.random.SeedSequence(opts.seed)
    seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(trials)]
    grads = []
    for s in seeds:
        res = solve(problem, replace(opts, init="random", seed=s))
        grads.append(res.state.Du)
    worst = 0.0
    for i in range(trials):
        for j in range(i + 1, trials):
            worst = max(
                worst,
                lp_norm_cells(grads[i] - grads[j], problem.p, problem.grid),
            )
    return worst


# ---------------------------------------------------------------------------
# local (comparison) problems on ball subregions
# ---------------------------------------------------------------------------


@dataclass
class LocalSolve:
    u: np.ndarray  # node field over the full grid; data outside the region
    region: np.ndarray  # bool cells
    free: np.ndarray  # bool nodes
    boundary: np.ndarray  # bool nodes carrying Dirichlet data
    iterations: int
    residual_history: list


def _ball_region(grid: Grid, center, radius: float) -> np.ndarray:
    center = np.asarray(center, dtype=float)
    grids = np.meshgrid(*[grid.cell_centers(a) for a in range(grid.ndim)], indexing="ij")
    d2 = sum((g - c) ** 2 for g, c in zip(grids, center))
    region = (d2 < radius**2) & grid.mask
    if not region.any():
        raise ValueError("ball region is empty at this resolution")
    return region


def solve_local_homogeneous(
    problem: Problem, center, radius: float, u_outer: np.ndarray, opts: SolveOptions
) -> LocalSolve:
    """Homogeneous system with the problem's coefficient on a ball subregion.

    Dirichlet data from ``u_outer`` is carried by the region's node layer;
    source is zero inside (same iteration as the global solve).
    """
    return _solve_local(problem, problem.a.values, center, radius, u_outer, opts)


def solve_local_frozen(
    problem: Problem, a0: complex, center, radius: float, u_outer: np.ndarray,
    opts: SolveOptions,
) -> LocalSolve:
    """Same local problem with the coefficient frozen to the constant a0."""
    coef = np.full(problem.grid.shape, complex(a0), dtype=np.complex128)
    return _solve_local(problem, coef, center, radius, u_outer, opts)


def _solve_local(problem, coef_values, center, radius, u_outer, opts):
    g = problem.grid
    region = _ball_region(g, center, radius)
    free = free_nodes(g, region)
    bnd = boundary_nodes(g, region)
    if not free.any():
        raise ValueError("ball region has no free nodes at this resolution")

    local_a = CoefficientField(
        values=np.asarray(coef_values, dtype=np.complex128),
        gamma0=problem.a.gamma0,
        gamma1=min(problem.a.gamma1, float(np.abs(coef_values).min())),
        gamma2=max(problem.a.gamma2, float(np.abs(coef_values).max())),
        c0=problem.a.c0,
        kind="local",
    )
    sub = Problem(
        grid=g,
        a=local_a,
        F=np.zeros_like(problem.F),
        p=problem.p,
        mu=problem.mu,
    )
    precond = _Preconditioner(g, region)
    u = u_outer.copy().astype(np.complex128)

    # stopping scale: boundary data drives the local problem
    Du0 = discrete_gradient(u, g)
    scale = lp_norm_cells(Du0, problem.p, g, region=region) ** (problem.p - 1.0)
    scale += problem.mu ** (problem.p - 1.0)
    tol = opts.tol_for(problem.p)
    history: list = []
    stages = _mu_schedule(problem.p, problem.mu, opts.mu_floor)
    total = 0
    for i, mu_k in enumerate(stages):
        last = i == len(stages) - 1
        stage_tol = tol if last else max(tol, 1e-3)
        tol_abs = stage_tol * scale if scale > 0 else 0.0
        if tol_abs == 0.0:
            r0 = residual_region(u, sub, mu_k, region)
            d0 = precond.apply(r0)
            tol_abs = stage_tol * max(_dual_norm(d0, sub, region), 1e-300)
        u, iters = _solve_stage(
            sub, opts, u, mu_k, tol_abs, precond, region, None, history
        )
        total += iters
    return LocalSolve(
        u=u,
        region=region,
        free=free,
        boundary=bnd,
        iterations=total,
        residual_history=history,
    )
