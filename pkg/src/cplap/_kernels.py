"""Hot numeric kernels with two interchangeable backends.

Every kernel here exists twice: a numba ``@njit`` loop version and a
vectorized pure-numpy version.  The active backend is chosen once at import
from the ``CPLAP_KERNELS`` environment variable (``numba`` or ``numpy``) and
can be switched at runtime with :func:`set_backend`; ``benchmarks/`` compares
the two.  Results of the two paths agree to floating-point rounding, never
bitwise; anything that must be byte-reproducible is reproducible per backend.

The geometric primitive is a discrete Euclidean ball decomposed into rows of
contiguous cells ("segments").  Segment tables are built once per (radius,
dimension, center kind) and cached; ball sums are then prefix-sum lookups per
row, which is what keeps the maximal-operator and ball-oscillation sweeps far
from O(cells^2).
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap


_env = os.environ.get("CPLAP_KERNELS", "").strip().lower()
if _env == "numba" and not HAVE_NUMBA:
    raise RuntimeError("CPLAP_KERNELS=numba requested but numba is not importable")
if _env in ("numba", "numpy"):
    _backend = _env
else:
    _backend = "numba" if HAVE_NUMBA else "numpy"


def active_backend() -> str:
    return _backend


def set_backend(name: str) -> str:
    """Switch kernel backend; returns the previous one."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown kernel backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend unavailable")
    prev = _backend
    _backend = name
    return prev


# ---------------------------------------------------------------------------
# ball segment tables
# ---------------------------------------------------------------------------

_SEG_CACHE: dict = {}


def _half_width_sq(limit_sq: float) -> int:
    # largest integer w >= 0 with w*w < limit_sq, or -1 if none
    if limit_sq <= 0:
        return -1
    w = int(math.floor(math.sqrt(limit_sq)))
    while w * w >= limit_sq:
        w -= 1
    while (w + 1) * (w + 1) < limit_sq:
        w += 1
    return w


def ball_segments(radius_cells: float, ndim: int, node_centered: bool):
    """Row decomposition of {cells with center strictly inside a ball}.

    Offsets are integer cell-index offsets relative to the center cell (cell
    centered) or to the node (node centered, where cell j sits at physical
    offset j + 1/2).  Returns (rows, lo, hi, count): ``rows`` has shape
    (R, ndim-1) with the transverse offsets, ``lo``/``hi`` are inclusive
    bounds along the last axis, and ``count`` is the total cell count.
    """
    key = (round(float(radius_cells), 9), ndim, node_centered)
    hit = _SEG_CACHE.get(key)
    if hit is not None:
        return hit
    r2 = float(radius_cells) ** 2
    shift = 0.5 if node_centered else 0.0

    def axis_range():
        k = int(math.ceil(radius_cells)) + 1
        return range(-k - 1, k + 1)

    rows = []
    los = []
    his = []
    if ndim == 2:
        for dy in axis_range():
            rem = r2 - (dy + shift) ** 2
            if node_centered:
                w_pos = _half_width_sq_shifted(rem)
                if w_pos is None:
                    continue
                lo, hi = w_pos
            else:
                w = _half_width_sq(rem)
                if w < 0:
                    continue
                lo, hi = -w, w
            rows.append((dy,))
            los.append(lo)
            his.append(hi)
    elif ndim == 3:
        for dz in axis_range():
            for dy in axis_range():
                rem = r2 - (dz + shift) ** 2 - (dy + shift) ** 2
                if node_centered:
                    w_pos = _half_width_sq_shifted(rem)
                    if w_pos is None:
                        continue
                    lo, hi = w_pos
                else:
                    w = _half_width_sq(rem)
                    if w < 0:
                        continue
                    lo, hi = -w, w
                rows.append((dz, dy))
                los.append(lo)
                his.append(hi)
    else:
        raise ValueError("only 2D and 3D grids are supported")

    rows_a = np.asarray(rows, dtype=np.int64).reshape(len(rows), ndim - 1)
    lo_a = np.asarray(los, dtype=np.int64)
    hi_a = np.asarray(his, dtype=np.int64)
    count = int((hi_a - lo_a + 1).sum()) if len(rows) else 0
    out = (rows_a, lo_a, hi_a, count)
    _SEG_CACHE[key] = out
    return out


def _half_width_sq_shifted(limit_sq: float):
    # integer j range with (j + 0.5)^2 < limit_sq (node-centered rows)
    if limit_sq <= 0.25:
        return None
    b = math.sqrt(limit_sq)
    hi = int(math.floor(b - 0.5))
    while (hi + 0.5) ** 2 >= limit_sq:
        hi -= 1
    lo = -hi - 1
    if hi < lo:
        return None
    return lo, hi


# ---------------------------------------------------------------------------
# ball sums (prefix-sum accelerated)
# ---------------------------------------------------------------------------


def _row_prefix(field: np.ndarray) -> np.ndarray:
    out = np.zeros(field.shape[:-1] + (field.shape[-1] + 1,), dtype=np.float64)
    np.cumsum(field, axis=-1, out=out[..., 1:])
    return out


def ball_sums(field: np.ndarray, radius_cells: float, node_centered: bool) -> np.ndarray:
    """Sum of ``field`` over the discrete ball around every center.

    ``field`` lives on cells and is implicitly extended by zero outside its
    own array.  Centers are either all cells (same shape as ``field``) or all
    nodes (shape + 1 per axis).
    """
    field = np.ascontiguousarray(field, dtype=np.float64)
    ndim = field.ndim
    rows, lo, hi, count = ball_segments(radius_cells, ndim, node_centered)
    out_shape = tuple(s + 1 for s in field.shape) if node_centered else field.shape
    if len(lo) == 0:
        return np.zeros(out_shape)
    if count == 1 and not node_centered:
        # single-cell ball: exact, no prefix-difference rounding
        return field.copy()
    P = _row_prefix(field)
    if _backend == "numba":
        if ndim == 2:
            return _ball_sums_2d_nb(P, rows[:, 0], lo, hi, out_shape[0], out_shape[1])
        return _ball_sums_3d_nb(
            P, rows[:, 0], rows[:, 1], lo, hi, out_shape[0], out_shape[1], out_shape[2]
        )
    return _ball_sums_np(P, rows, lo, hi, out_shape)


def _ball_sums_np(P, rows, lo, hi, out_shape):
    ndim = len(out_shape)
    nx = P.shape[-1] - 1
    out = np.zeros(out_shape)
    base = np.arange(out_shape[-1])
    for r in range(rows.shape[0]):
        xl = np.clip(base + lo[r], 0, nx)
        xr = np.clip(base + hi[r] + 1, 0, nx)
        if ndim == 2:
            y = np.arange(out_shape[0]) + rows[r, 0]
            ok = (y >= 0) & (y < P.shape[0])
            if not ok.any():
                continue
            rowsum = P[y[ok][:, None], xr[None, :]] - P[y[ok][:, None], xl[None, :]]
            out[ok] += rowsum
        else:
            z = np.arange(out_shape[0]) + rows[r, 0]
            y = np.arange(out_shape[1]) + rows[r, 1]
            okz = (z >= 0) & (z < P.shape[0])
            oky = (y >= 0) & (y < P.shape[1])
            if not okz.any() or not oky.any():
                continue
            block = (
                P[np.ix_(z[okz], y[oky], xr)] - P[np.ix_(z[okz], y[oky], xl)]
            )
            out[np.ix_(okz, oky)] += block
    return out


@njit(cache=True)
def _ball_sums_2d_nb(P, dys, lo, hi, out_ny, out_nx):  # pragma: no cover - jit
    ny = P.shape[0]
    nx = P.shape[1] - 1
    out = np.zeros((out_ny, out_nx))
    for r in range(dys.size):
        dy = dys[r]
        l = lo[r]
        h = hi[r] + 1
        for i in range(out_ny):
            y = i + dy
            if y < 0 or y >= ny:
                continue
            for j in range(out_nx):
                xl = j + l
                if xl < 0:
                    xl = 0
                elif xl > nx:
                    xl = nx
                xr = j + h
                if xr < 0:
                    xr = 0
                elif xr > nx:
                    xr = nx
                out[i, j] += P[y, xr] - P[y, xl]
    return out


@njit(cache=True)
def _ball_sums_3d_nb(P, dzs, dys, lo, hi, out_nz, out_ny, out_nx):  # pragma: no cover
    nz = P.shape[0]
    ny = P.shape[1]
    nx = P.shape[2] - 1
    out = np.zeros((out_nz, out_ny, out_nx))
    for r in range(dzs.size):
        dz = dzs[r]
        dy = dys[r]
        l = lo[r]
        h = hi[r] + 1
        for k in range(out_nz):
            z = k + dz
            if z < 0 or z >= nz:
                continue
            for i in range(out_ny):
                y = i + dy
                if y < 0 or y >= ny:
                    continue
                for j in range(out_nx):
                    xl = j + l
                    if xl < 0:
                        xl = 0
                    elif xl > nx:
                        xl = nx
                    xr = j + h
                    if xr < 0:
                        xr = 0
                    elif xr > nx:
                        xr = nx
                    out[k, i, j] += P[z, y, xr] - P[z, y, xl]
    return out


# ---------------------------------------------------------------------------
# ball mean-absolute-deviation (BMO oscillation sweep)
# ---------------------------------------------------------------------------


def ball_abs_dev(re, im, mean_re, mean_im, radius_cells: float, node_centered: bool):
    """Sum over each ball of |a(cell) - mean(center)| for complex a."""
    re = np.ascontiguousarray(re, dtype=np.float64)
    im = np.ascontiguousarray(im, dtype=np.float64)
    ndim = re.ndim
    rows, lo, hi, _ = ball_segments(radius_cells, ndim, node_centered)
    if len(lo) == 0:
        return np.zeros(mean_re.shape)
    if _backend == "numba":
        if ndim == 2:
            return _ball_abs_dev_2d_nb(re, im, mean_re, mean_im, rows[:, 0], lo, hi)
        return _ball_abs_dev_3d_nb(
            re, im, mean_re, mean_im, rows[:, 0], rows[:, 1], lo, hi
        )
    return _ball_abs_dev_np(re, im, mean_re, mean_im, rows, lo, hi)


def _offsets_from_segments(rows, lo, hi, ndim):
    offs = []
    for r in range(rows.shape[0]):
        for dx in range(lo[r], hi[r] + 1):
            offs.append(tuple(rows[r]) + (dx,))
    return np.asarray(offs, dtype=np.int64).reshape(len(offs), ndim)


def _ball_abs_dev_np(re, im, mean_re, mean_im, rows, lo, hi):
    ndim = re.ndim
    out = np.zeros(mean_re.shape)
    offs = _offsets_from_segments(rows, lo, hi, ndim)
    for off in offs:
        src_sl = []
        dst_sl = []
        valid = True
        for ax in range(ndim):
            o = int(off[ax])
            n_src = re.shape[ax]
            n_dst = out.shape[ax]
            s0 = max(0, -o)
            s1 = min(n_dst, n_src - o)
            if s1 <= s0:
                valid = False
                break
            dst_sl.append(slice(s0, s1))
            src_sl.append(slice(s0 + o, s1 + o))
        if not valid:
            continue
        dst_sl = tuple(dst_sl)
        src_sl = tuple(src_sl)
        out[dst_sl] += np.hypot(
            re[src_sl] - mean_re[dst_sl], im[src_sl] - mean_im[dst_sl]
        )
    return out


@njit(cache=True)
def _ball_abs_dev_2d_nb(re, im, mre, mim, dys, lo, hi):  # pragma: no cover - jit
    ny, nx = re.shape
    out = np.zeros(mre.shape)
    for i in range(out.shape[0]):
        for j in range(out.shape[1]):
            acc = 0.0
            for r in range(dys.size):
                y = i + dys[r]
                if y < 0 or y >= ny:
                    continue
                xl = j + lo[r]
                if xl < 0:
                    xl = 0
                xr = j + hi[r]
                if xr > nx - 1:
                    xr = nx - 1
                for x in range(xl, xr + 1):
                    dr = re[y, x] - mre[i, j]
                    di = im[y, x] - mim[i, j]
                    acc += math.sqrt(dr * dr + di * di)
            out[i, j] = acc
    return out


@njit(cache=True)
def _ball_abs_dev_3d_nb(re, im, mre, mim, dzs, dys, lo, hi):  # pragma: no cover
    nz, ny, nx = re.shape
    out = np.zeros(mre.shape)
    for k in range(out.shape[0]):
        for i in range(out.shape[1]):
            for j in range(out.shape[2]):
                acc = 0.0
                for r in range(dzs.size):
                    z = k + dzs[r]
                    if z < 0 or z >= nz:
                        continue
                    y = i + dys[r]
                    if y < 0 or y >= ny:
                        continue
                    xl = j + lo[r]
                    if xl < 0:
                        xl = 0
                    xr = j + hi[r]
                    if xr > nx - 1:
                        xr = nx - 1
                    for x in range(xl, xr + 1):
                        dr = re[z, y, x] - mre[k, i, j]
                        di = im[z, y, x] - mim[k, i, j]
                        acc += math.sqrt(dr * dr + di * di)
                out[k, i, j] = acc
    return out


# ---------------------------------------------------------------------------
# degenerate power-growth flux weights
# ---------------------------------------------------------------------------


def flux_weights(sq_norm: np.ndarray, p: float, mu: float) -> np.ndarray:
    """(mu^2 + s)^((p-2)/2) with the degenerate point mapped to 0.

    ``sq_norm`` is |eta|^2.  For mu = 0, p < 2 the weight blows up as
    s -> 0 but the flux weight * eta tends to 0; returning weight 0 at s = 0
    realizes that limit (the flux itself is continuous, its slope is not).
    """
    sq_norm = np.asarray(sq_norm, dtype=np.float64)
    if _backend == "numba":
        flat = np.ascontiguousarray(sq_norm.reshape(-1))
        out = _flux_weights_nb(flat, float(p), float(mu))
        return out.reshape(sq_norm.shape)
    base = mu * mu + sq_norm
    with np.errstate(divide="ignore"):
        w = np.where(base > 0.0, base, 1.0) ** ((p - 2.0) / 2.0)
    return np.where(base > 0.0, w, 0.0)


@njit(cache=True)
def _flux_weights_nb(s, p, mu):  # pragma: no cover - jit
    out = np.empty_like(s)
    e = (p - 2.0) / 2.0
    m2 = mu * mu
    for i in range(s.size):
        b = m2 + s[i]
        out[i] = b**e if b > 0.0 else 0.0
    return out


def warmup():
    """Compile the numba kernels on tiny inputs (no-op for numpy backend)."""
    if _backend != "numba":
        return
    f2 = np.ones((4, 4))
    ball_sums(f2, 1.0, False)
    ball_sums(f2, 1.0, True)
    ball_abs_dev(f2, f2, np.zeros((5, 5)), np.zeros((5, 5)), 1.0, True)
    f3 = np.ones((4, 4, 4))
    ball_sums(f3, 1.0, False)
    ball_abs_dev(f3, f3, np.zeros((4, 4, 4)), np.zeros((4, 4, 4)), 1.0, False)
    flux_weights(np.ones(3), 3.0, 0.5)
