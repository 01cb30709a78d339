"""Complex coefficient fields: admissible construction and BMO measurement.

A coefficient a(x) is admissible when its modulus stays inside [gamma1,
gamma2] and its value stays inside the accretivity sector
Re a - c0 |Im a| > gamma0 at every cell.  The factory only ever produces
admissible fields; the validator re-checks both conditions exhaustively and
reports the worst margin, so factory and validator stay an honest
round-trip pair.

The BMO seminorm is measured as the max mean oscillation over balls centered
at grid nodes with dyadic radii r0, r0/2, ..., down to 4h, balls clipped to
the grid bounding box.  This samples the definition's sup (all centers, all
radii <= r0) from below; dyadic node sampling is the standard surrogate and
is what the smallness certification uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .grid import Grid


class ConstructionError(ValueError):
    pass


@dataclass
class CoefficientField:
    values: np.ndarray  # complex, one value per cell (full bounding box)
    gamma0: float
    gamma1: float
    gamma2: float
    c0: float
    kind: str
    seed: int = 0
    params: dict = field(default_factory=dict)

    def sector_margin(self) -> np.ndarray:
        v = self.values
        return v.real - self.c0 * np.abs(v.imag) - self.gamma0


@dataclass
class StructureReport:
    ellipticity_ok: bool
    sector_ok: bool
    worst_cell: tuple
    worst_margin: float


@dataclass
class BmoReport:
    seminorm: float
    r0: float
    ball_count: int
    max_ball_center: tuple
    max_ball_radius: float


def _sector_halfwidth(rho: float, c0: float, gamma0: float) -> float:
    """Max |phase| so that rho*e^{i t} satisfies Re - c0|Im| > gamma0 strictly."""
    import math

    lo, hi = 0.0, math.pi / 2
    ok0 = rho - gamma0
    if ok0 <= 0:
        return -1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if rho * math.cos(mid) - c0 * rho * math.sin(mid) > gamma0:
            lo = mid
        else:
            hi = mid
    return lo


def make_coefficient(
    kind: str,
    grid: Grid,
    c0: float,
    gamma0: float,
    gamma1: float,
    gamma2: float,
    seed: int = 0,
    **params,
) -> CoefficientField:
    """Build an admissible coefficient field of the given kind.

    Kinds:
      constant          value= complex (default midway on the real axis)
      checkerboard      value_a=, value_b=, period= cells per tile
      smooth-oscillatory  amplitude= relative modulus/phase wobble,
                          frequency= cycles across the box
      random-sector     iid uniform samples from the admissible annulus-sector
    """
    if not (0 < gamma1 <= gamma2) or gamma0 <= 0:
        raise ConstructionError("need 0 < gamma1 <= gamma2 and gamma0 > 0")
    if gamma0 >= gamma2:
        raise ConstructionError(
            f"infeasible parameters: gamma0={gamma0} >= gamma2={gamma2} leaves "
            "no admissible modulus"
        )
    if c0 < 0:
        raise ConstructionError("sector slope c0 must be nonnegative")
    rho_min = max(gamma1, gamma0 * (1.0 + 1e-9) + 1e-12)
    if rho_min > gamma2:
        raise ConstructionError("admissible annulus-sector is empty")
    shape = grid.shape
    rng = np.random.default_rng(seed)

    if kind == "constant":
        val = params.get("value")
        if val is None:
            val = 0.5 * (rho_min + gamma2)
        vals = np.full(shape, complex(val), dtype=np.complex128)
    elif kind == "checkerboard":
        rho_mid = 0.5 * (rho_min + gamma2)
        t = 0.5 * _sector_halfwidth(rho_mid, c0, gamma0)
        va = params.get("value_a", rho_mid * np.exp(1j * t))
        vb = params.get("value_b", rho_mid * np.exp(-1j * t))
        period = int(params.get("period", 4))
        if period < 1:
            raise ConstructionError("checkerboard period must be >= 1 cell")
        idx = np.indices(shape) // period
        parity = idx.sum(axis=0) % 2
        vals = np.where(parity == 0, complex(va), complex(vb))
    elif kind == "smooth-oscillatory":
        amp = float(params.get("amplitude", 0.1))
        freq = float(params.get("frequency", 1.0))
        rho_mid = 0.5 * (rho_min + gamma2)
        rho_span = 0.5 * (gamma2 - rho_min)
        tmax = _sector_halfwidth(rho_min, c0, gamma0)
        if tmax <= 0:
            raise ConstructionError("sector admits no phase wobble")
        coords = np.meshgrid(
            *[(np.arange(s) + 0.5) / s for s in shape], indexing="ij"
        )
        phase0 = rng.uniform(0, 2 * np.pi, size=grid.ndim)
        wobble = sum(
            np.sin(2 * np.pi * freq * c + p0) for c, p0 in zip(coords, phase0)
        ) / grid.ndim
        rho = rho_mid + amp * rho_span * wobble
        theta = amp * tmax * sum(
            np.cos(2 * np.pi * freq * c + p0) for c, p0 in zip(coords, phase0)
        ) / grid.ndim
        vals = rho * np.exp(1j * theta)
    elif kind == "random-sector":
        vals = np.empty(shape, dtype=np.complex128)
        flat = vals.reshape(-1)
        need = flat.size
        got = 0
        while got < need:
            m = max(2 * (need - got), 1024)
            rho = rng.uniform(rho_min, gamma2, m)
            tcap = np.arctan2(1.0, max(c0, 1e-12)) if c0 > 0 else np.pi / 2
            th = rng.uniform(-tcap, tcap, m)
            z = rho * np.exp(1j * th)
            ok = (z.real - c0 * np.abs(z.imag) > gamma0) & (np.abs(z) >= gamma1)
            z = z[ok]
            take = min(z.size, need - got)
            flat[got : got + take] = z[:take]
            got += take
    else:
        raise ConstructionError(f"unknown coefficient kind {kind!r}")

    fieldobj = CoefficientField(
        values=vals,
        gamma0=gamma0,
        gamma1=gamma1,
        gamma2=gamma2,
        c0=c0,
        kind=kind,
        seed=seed,
        params=params,
    )
    rep = verify_structure(fieldobj)
    if not (rep.ellipticity_ok and rep.sector_ok):
        raise ConstructionError(
            f"constructed field violates its own invariants at {rep.worst_cell} "
            f"(margin {rep.worst_margin:.3g})"
        )
    return fieldobj


def verify_structure(a: CoefficientField) -> StructureReport:
    """Exhaustive cell-wise check of the modulus band and sector condition."""
    mod = np.abs(a.values)
    ell_ok = bool((mod >= a.gamma1 - 1e-12).all() and (mod <= a.gamma2 + 1e-12).all())
    margin = a.sector_margin()
    sec_ok = bool((margin > 0).all())
    ell_margin = np.minimum(mod - a.gamma1, a.gamma2 - mod)
    combined = np.minimum(ell_margin, margin)
    worst = np.unravel_index(int(np.argmin(combined)), combined.shape)
    return StructureReport(
        ellipticity_ok=ell_ok,
        sector_ok=sec_ok,
        worst_cell=tuple(int(i) for i in worst),
        worst_margin=float(combined[worst]),
    )


def save_coefficient(path, a: CoefficientField, grid: Grid):
    """Write a coefficient field to the shared binary snapshot format."""
    from .snapshots import write_field

    write_field(
        path, a.values, grid.h, role="coefficient", kind=a.kind,
        params={
            "gamma0": a.gamma0, "gamma1": a.gamma1, "gamma2": a.gamma2,
            "c0": a.c0, "seed": a.seed, **a.params,
        },
    )


def load_coefficient(path) -> CoefficientField:
    from .snapshots import read_field

    values, header = read_field(path)
    if header.get("role") != "coefficient":
        raise ValueError(f"snapshot role {header.get('role')!r} is not a coefficient")
    params = dict(header.get("params", {}))
    return CoefficientField(
        values=np.asarray(values, dtype=np.complex128),
        gamma0=params.pop("gamma0"),
        gamma1=params.pop("gamma1"),
        gamma2=params.pop("gamma2"),
        c0=params.pop("c0"),
        kind=header.get("kind", ""),
        seed=int(params.pop("seed", 0)),
        params=params,
    )


def bmo_seminorm(a: CoefficientField, r0: float, grid: Grid) -> BmoReport:
    """Max mean oscillation over node-centered balls with dyadic radii <= r0.

    Balls with fewer than 8 cells are skipped (oscillation statistically
    meaningless at that resolution); complex means are taken component-wise.
    """
    h = grid.h
    if r0 < 4 * h:
        raise ValueError(f"r0={r0} under-resolved: need r0 >= 4h = {4*h}")
    if r0 > grid.diameter:
        raise ValueError(f"r0={r0} exceeds the domain diameter {grid.diameter}")
    re = np.ascontiguousarray(a.values.real)
    im = np.ascontiguousarray(a.values.imag)
    ones = np.ones(grid.shape)
    best = -1.0
    best_center = None
    best_radius = None
    balls = 0
    xi = r0
    while xi >= 4 * h - 1e-12:
        rc = xi / h
        counts = _kernels.ball_sums(ones, rc, node_centered=True)
        valid = counts >= 8
        if valid.any():
            cnt = np.maximum(counts, 1.0)
            mre = _kernels.ball_sums(re, rc, node_centered=True) / cnt
            mim = _kernels.ball_sums(im, rc, node_centered=True) / cnt
            dev = _kernels.ball_abs_dev(re, im, mre, mim, rc, node_centered=True)
            osc = np.where(valid, dev / cnt, -np.inf)
            balls += int(valid.sum())
            k = int(np.argmax(osc))
            if osc.flat[k] > best:
                best = float(osc.flat[k])
                best_center = np.unravel_index(k, osc.shape)
                best_radius = xi
        xi *= 0.5
    if best_center is None:
        raise ValueError("no ball had >= 8 cells; refine the grid or raise r0")
    center_phys = tuple(float(i) * h for i in best_center)
    return BmoReport(
        seminorm=best,
        r0=r0,
        ball_count=balls,
        max_ball_center=center_phys,
        max_ball_radius=float(best_radius),
    )
