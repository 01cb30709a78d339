"""Harmonic-analysis toolkit: maximal operators, norms, weights, level sets.

Everything runs on cell fields over a grid's bounding box with the domain
mask giving the zero extension.  Ball sweeps share the prefix-sum kernels, so
a full maximal-operator evaluation costs O(cells * sum of ball rows) rather
than O(cells^2).  Suprema over continuous radii are approximated on the
dyadic set {h, 2h, 4h, ...}; every inequality check reported from here
carries that slack in its fitted constant rather than hiding it.

Level-set measures are cell counts times h^n, exact for grid functions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .grid import Grid


def dyadic_radii(grid: Grid, cap: float | None = None, cover: bool = False):
    """Dyadic radius set {h, 2h, 4h, ...} capped at ``cap`` (default 2 diam).

    With ``cover`` the first dyadic value exceeding the cap is appended, so a
    ball from any center contains the whole domain.
    """
    cap = 2.0 * grid.diameter if cap is None else cap
    radii = []
    r = grid.h
    while r <= cap + 1e-12:
        radii.append(r)
        r *= 2.0
    if cover and (not radii or radii[-1] <= grid.diameter):
        radii.append(r)
    if not radii:
        raise ValueError("empty radius set")
    return radii


def _ball_mean(f: np.ndarray, radius_cells: float, node_centered: bool = False):
    """Zero-extended ball average: ball sum / full discrete ball volume."""
    _, _, _, count = _kernels.ball_segments(radius_cells, f.ndim, node_centered)
    if count == 0:
        return np.zeros(
            tuple(s + 1 for s in f.shape) if node_centered else f.shape
        )
    return _kernels.ball_sums(f, radius_cells, node_centered) / count


def maximal(f: np.ndarray, grid: Grid, beta: float = 0.0, radii=None) -> np.ndarray:
    """Fractional maximal operator at every cell center.

    M_beta f(x) = max over the radius set of rho^beta * (ball average of f),
    with f extended by zero outside the domain mask.  beta in [0, n).
    """
    if not 0 <= beta < grid.ndim:
        raise ValueError(f"beta must lie in [0, {grid.ndim})")
    radii = dyadic_radii(grid) if radii is None else list(radii)
    if not radii:
        raise ValueError("empty radius set")
    f = np.asarray(f, dtype=np.float64) * grid.mask
    out = np.full(grid.shape, -np.inf)
    for rho in radii:
        avg = _ball_mean(f, rho / grid.h)
        np.maximum(out, rho**beta * avg, out=out)
    return out


def truncated_maximal(
    f: np.ndarray, grid: Grid, beta: float, R: float, side: str, radii=None
) -> np.ndarray:
    """Maximal operator restricted to radii rho < R (below) or rho >= R (above).

    The pointwise max of the two sides reconstructs the full operator exactly.
    """
    radii = dyadic_radii(grid) if radii is None else list(radii)
    if side == "below":
        sub = [r for r in radii if r < R]
    elif side == "above":
        sub = [r for r in radii if r >= R]
    else:
        raise ValueError("side must be 'below' or 'above'")
    if not sub:
        return np.zeros(grid.shape)
    return maximal(f, grid, beta, sub)


def level_set_measure(field: np.ndarray, lam: float, grid: Grid, where=None) -> float:
    """|{field > lam}| as cell count * h^n, optionally within a cell subset."""
    sel = field > lam
    if where is not None:
        sel = sel & where
    return float(sel.sum()) * grid.h**grid.ndim


@dataclass
class Weak11Report:
    lambdas: np.ndarray
    measures: np.ndarray
    bounds: np.ndarray  # (integral/lambda)^(n/(n-beta))
    fitted_constant: float
    passed: bool


def weak11_bound_check(
    f: np.ndarray, grid: Grid, beta: float, lambdas, benchmark: float | None = None
) -> Weak11Report:
    """Weak-type bound |{M_beta f > lam}| <= C (lam^-1 integral |f|)^(n/(n-beta)).

    Reports the smallest admissible C over the sweep; with ``benchmark`` set,
    ``passed`` states whether that C stays below it.
    """
    f = np.abs(np.asarray(f, dtype=np.float64)) * grid.mask
    Mf = maximal(f, grid, beta)
    total = float(f.sum()) * grid.h**grid.ndim
    lambdas = np.asarray(sorted(lambdas), dtype=float)
    n = grid.ndim
    expo = n / (n - beta)
    meas = np.array([level_set_measure(Mf, lam, grid, where=None) for lam in lambdas])
    bounds = (total / lambdas) ** expo
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(meas > 0, meas / bounds, 0.0)
    C = float(ratios.max()) if ratios.size else 0.0
    return Weak11Report(
        lambdas=lambdas,
        measures=meas,
        bounds=bounds,
        fitted_constant=C,
        passed=(benchmark is None) or (C <= benchmark),
    )


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


def lq_norm(f: np.ndarray, q: float, grid: Grid) -> float:
    """L^q norm of a scalar cell field over the domain."""
    if q < 1:
        raise ValueError("q must be >= 1")
    f = np.abs(np.asarray(f, dtype=np.float64))
    return float((f[grid.mask] ** q).sum() * grid.h**grid.ndim) ** (1.0 / q)


def weighted_lq_norm(f: np.ndarray, q: float, w: np.ndarray, grid: Grid) -> float:
    if q < 1:
        raise ValueError("q must be >= 1")
    w = np.asarray(w, dtype=np.float64)
    if (w <= 0).any():
        raise ValueError("weights must be strictly positive")
    f = np.abs(np.asarray(f, dtype=np.float64))
    return float(
        ((f[grid.mask] ** q) * w[grid.mask]).sum() * grid.h**grid.ndim
    ) ** (1.0 / q)


def morrey_norm(f: np.ndarray, q: float, s: float, grid: Grid) -> float:
    """Morrey norm: sup over balls of |B|^(q/s-1) * integral_{B cap domain} |f|^q.

    Centers run over grid nodes, radii over the dyadic set extended by one
    value past the diameter so some ball covers the whole domain; at q = s the
    norm coincides with the Lebesgue norm and is computed as such.
    """
    if not 1 <= q <= s:
        raise ValueError("need 1 <= q <= s")
    if q == s:
        return lq_norm(f, q, grid)
    return _morrey_norm_swept(f, q, s, grid)


def _morrey_norm_swept(f: np.ndarray, q: float, s: float, grid: Grid) -> float:
    """Generic ball-sweep Morrey norm (also used to cross-check q = s)."""
    fq = (np.abs(np.asarray(f, dtype=np.float64)) ** q) * grid.mask
    hn = grid.h**grid.ndim
    best = 0.0
    for rho in dyadic_radii(grid, cap=grid.diameter, cover=True):
        sums = _kernels.ball_sums(fq, rho / grid.h, node_centered=True) * hn
        _, _, _, count = _kernels.ball_segments(rho / grid.h, grid.ndim, True)
        ball_measure = count * hn
        if ball_measure <= 0:
            continue
        val = ball_measure ** (q / s - 1.0) * float(sums.max())
        best = max(best, val)
    return best ** (1.0 / q)


def layer_cake(f: np.ndarray, q: float, grid: Grid) -> float:
    """integral_0^infty q lam^(q-1) |{f > lam}| d lam, summed exactly.

    The distribution function of a grid field is piecewise constant between
    its sorted distinct values, so the integral is an exact finite sum and
    reproduces lq_norm(f, q)^q up to rounding.
    """
    if q <= 1:
        raise ValueError("q must exceed 1")
    vals = np.abs(np.asarray(f, dtype=np.float64))[grid.mask]
    hn = grid.h**grid.ndim
    v = np.sort(vals)
    distinct, start = np.unique(v, return_index=True)
    total = v.size
    acc = 0.0
    prev = 0.0
    for val, st in zip(distinct, start):
        if val == 0.0:
            prev = 0.0
            continue
        count_ge = total - st  # cells with value >= val, i.e. |{f > lam}| below val
        acc += (val**q - prev**q) * count_ge * hn
        prev = val
    return acc


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------


def muckenhoupt_characteristic(w: np.ndarray, s: float, grid: Grid) -> float:
    """A_s product maximized over node-centered dyadic balls (A_1 via M w / w)."""
    w = np.asarray(w, dtype=np.float64)
    if (w <= 0).any():
        raise ValueError("weights must be strictly positive")
    if s < 1:
        raise ValueError("s must be >= 1")
    if s == 1:
        Mw = maximal(w, grid, 0.0)
        return float((Mw[grid.mask] / w[grid.mask]).max())
    best = 0.0
    wm = w * grid.mask
    wneg = np.where(grid.mask, w ** (-1.0 / (s - 1.0)), 0.0)
    cnt_dom = grid.mask.astype(np.float64)
    for rho in dyadic_radii(grid, cap=grid.diameter, cover=True):
        rc = rho / grid.h
        cnt = _kernels.ball_sums(cnt_dom, rc, node_centered=True)
        ok = cnt > 0
        if not ok.any():
            continue
        m1 = np.where(ok, _kernels.ball_sums(wm, rc, True) / np.maximum(cnt, 1), 0)
        m2 = np.where(ok, _kernels.ball_sums(wneg, rc, True) / np.maximum(cnt, 1), 0)
        prod = m1 * m2 ** (s - 1.0)
        best = max(best, float(prod.max()))
    return best


@dataclass
class DoublingFit:
    constant: float
    exponent: float
    pairs_checked: int


def doubling_check(w: np.ndarray, grid: Grid, exponents=None) -> DoublingFit:
    """Fit (C, nu) with w(V) <= C (|V|/|B|)^nu w(B) over concentric ball pairs.

    V runs over the dyadic sub-balls of each swept ball B; the reported pair
    minimizes C over a small exponent grid, i.e. the tightest power-type
    doubling certificate the samples admit.
    """
    w = np.asarray(w, dtype=np.float64)
    radii = dyadic_radii(grid, cap=grid.diameter, cover=True)
    wm = w * grid.mask
    hn = grid.h**grid.ndim
    sums = {}
    measures = {}
    for rho in radii:
        rc = rho / grid.h
        sums[rho] = _kernels.ball_sums(wm, rc, node_centered=True) * hn
        _, _, _, count = _kernels.ball_segments(rc, grid.ndim, True)
        measures[rho] = count * hn
    # collect log-ratio samples over (sub-ball, ball) concentric pairs
    log_wr = []
    log_mr = []
    pairs = 0
    for i, rv in enumerate(radii):
        for rb in radii[i + 1 :]:
            num = sums[rv]
            den = sums[rb]
            ok = (num > 0) & (den > 0)
            if not ok.any():
                continue
            pairs += int(ok.sum())
            log_wr.append(np.log(num[ok] / den[ok]))
            log_mr.append(
                np.full(int(ok.sum()), np.log(measures[rv] / measures[rb]))
            )
    if not log_wr:
        return DoublingFit(constant=1.0, exponent=1.0, pairs_checked=0)
    lw = np.concatenate(log_wr)
    lm = np.concatenate(log_mr)
    exponents = np.linspace(0.05, float(grid.ndim), 40) if exponents is None else exponents
    best = None
    for nu in exponents:
        logC = float((lw - nu * lm).max())
        if best is None or logC < best[0]:
            best = (logC, nu)
    return DoublingFit(
        constant=float(np.exp(best[0])), exponent=float(best[1]), pairs_checked=pairs
    )


def a1_indicator_weight(grid: Grid, center, radius: float, tau: float) -> np.ndarray:
    """Weight (M chi_B)^tau for a ball B; an A_1 weight for 0 < tau < 1.

    Takes the value 1 on B (smallest balls saturate) and decays like
    2^(-(j-1) n tau) on the annulus B_{2^{j+1} r} \\ B_{2^j r}.
    """
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    center = np.asarray(center, dtype=float)
    grids = np.meshgrid(*[grid.cell_centers(a) for a in range(grid.ndim)], indexing="ij")
    d2 = sum((g - c) ** 2 for g, c in zip(grids, center))
    chi = (d2 < radius**2).astype(np.float64)
    if not chi.any():
        raise ValueError("indicator ball contains no cell centers")
    M = maximal(chi, grid, 0.0)
    return np.maximum(M, 1e-300) ** tau


@dataclass
class VitaliReport:
    hypotheses_hold: bool
    first_hypothesis: bool
    second_hypothesis: bool
    conclusion_holds: bool
    measured_constant: float
    benchmark: float


def vitali_density_check(
    V1: np.ndarray, V2: np.ndarray, grid: Grid, R0: float, epsilon: float
) -> VitaliReport:
    """Density-implication check behind the covering argument.

    Hypotheses: (i) |V1| <= eps |B_{R0}|; (ii) for every domain cell center
    and dyadic rho <= R0, if the domain part of B_rho is not inside V2 then
    |B_rho cap V1| < eps |B_rho|.  When both hold, measures the smallest C
    with |V1| <= C eps |V2| and compares with the covering benchmark 15^n.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0,1)")
    V1 = np.asarray(V1, dtype=bool) & grid.mask
    V2 = np.asarray(V2, dtype=bool) & grid.mask
    hn = grid.h**grid.ndim
    m1 = float(V1.sum()) * hn
    m2 = float(V2.sum()) * hn
    _, _, _, cnt_R0 = _kernels.ball_segments(R0 / grid.h, grid.ndim, False)
    hyp1 = m1 <= epsilon * cnt_R0 * hn + 1e-15

    hyp2 = True
    v1f = V1.astype(np.float64)
    v2f = V2.astype(np.float64)
    domf = grid.mask.astype(np.float64)
    for rho in dyadic_radii(grid, cap=R0):
        rc = rho / grid.h
        _, _, _, ball_cnt = _kernels.ball_segments(rc, grid.ndim, False)
        if ball_cnt == 0:
            continue
        in_v1 = _kernels.ball_sums(v1f, rc, False)
        in_v2 = _kernels.ball_sums(v2f, rc, False)
        in_dom = _kernels.ball_sums(domf, rc, False)
        not_contained = (in_v2 < in_dom) & grid.mask
        viol = not_contained & (in_v1 >= epsilon * ball_cnt)
        if viol.any():
            hyp2 = False
            break

    benchmark = 15.0**grid.ndim
    if m1 == 0.0:
        measured = 0.0
        concl = True
    elif m2 == 0.0:
        measured = np.inf
        concl = False
    else:
        measured = m1 / (epsilon * m2)
        concl = measured <= benchmark
    return VitaliReport(
        hypotheses_hold=hyp1 and hyp2,
        first_hypothesis=hyp1,
        second_hypothesis=hyp2,
        conclusion_holds=concl,
        measured_constant=measured,
        benchmark=benchmark,
    )
