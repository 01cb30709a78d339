"""Masked lattice geometry with an exactly adjoint gradient/divergence pair.

Unknowns live on nodes, gradients and coefficients on cells (staggered).  The
cell gradient is the forward difference along each axis averaged over the
transverse corner shifts, which is exact on affine fields; the divergence is
defined as minus the matrix transpose of that gradient, so summation by parts
holds to machine precision for every node field vanishing on the boundary and
the discrete weak formulation is self-consistent by construction.

Domains are the full rectangle or a ball selected by cell-center containment
(no cut cells).  A node is free when all 2^n incident cells belong to the
domain; nodes touching the domain but not free form the Dirichlet boundary
layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Grid:
    ndim: int
    shape: tuple  # cells per axis
    h: float
    mask_kind: str  # "rect" | "ball"
    mask: np.ndarray  # bool over cells
    free: np.ndarray  # bool over nodes: all incident cells masked
    boundary: np.ndarray  # bool over nodes: touches mask but not free
    mask_params: dict = field(default_factory=dict)

    @property
    def node_shape(self) -> tuple:
        return tuple(s + 1 for s in self.shape)

    @property
    def cell_count(self) -> int:
        return int(self.mask.sum())

    @property
    def domain_measure(self) -> float:
        return self.cell_count * self.h**self.ndim

    @property
    def diameter(self) -> float:
        if self.mask_kind == "ball":
            return 2.0 * self.mask_params["radius"]
        return float(np.linalg.norm(np.asarray(self.shape) * self.h))

    def cell_centers(self, axis: int) -> np.ndarray:
        return (np.arange(self.shape[axis]) + 0.5) * self.h

    def node_coords(self, axis: int) -> np.ndarray:
        return np.arange(self.shape[axis] + 1) * self.h


def make_grid(shape, h: float, mask="rect") -> Grid:
    """Build a 2D/3D lattice with the requested domain mask.

    ``mask`` is "rect" or ("ball", center, radius) with physical coordinates;
    ball membership is strict cell-center containment.
    """
    shape = tuple(int(s) for s in shape)
    ndim = len(shape)
    if ndim not in (2, 3):
        raise ValueError("grids are 2D or 3D")
    if any(s < 8 for s in shape):
        raise ValueError("need at least 8 cells per axis")
    if h <= 0:
        raise ValueError("spacing must be positive")

    if mask == "rect" or mask is None:
        cell_mask = np.ones(shape, dtype=bool)
        kind = "rect"
        params = {}
    else:
        kind, center, radius = mask
        if kind != "ball":
            raise ValueError(f"unknown mask kind {kind!r}")
        center = np.asarray(center, dtype=float)
        grids = np.meshgrid(
            *[(np.arange(s) + 0.5) * h for s in shape], indexing="ij"
        )
        d2 = sum((g - c) ** 2 for g, c in zip(grids, center))
        cell_mask = d2 < radius**2
        params = {"center": tuple(center.tolist()), "radius": float(radius)}
    if not cell_mask.any():
        raise ValueError("empty interior: no cell centers inside the mask")

    padded = np.zeros(tuple(s + 2 for s in shape), dtype=bool)
    padded[(slice(1, -1),) * ndim] = cell_mask
    node_shape = tuple(s + 1 for s in shape)
    free = np.ones(node_shape, dtype=bool)
    touch = np.zeros(node_shape, dtype=bool)
    for shifts in np.ndindex((2,) * ndim):
        sl = tuple(slice(sh, sh + ns) for sh, ns in zip(shifts, node_shape))
        free &= padded[sl]
        touch |= padded[sl]
    boundary = touch & ~free
    if not free.any():
        raise ValueError("empty interior: no free nodes at this resolution")
    return Grid(
        ndim=ndim,
        shape=shape,
        h=float(h),
        mask_kind=kind,
        mask=cell_mask,
        free=free,
        boundary=boundary,
        mask_params=params,
    )


# ---------------------------------------------------------------------------
# gradient / divergence
# ---------------------------------------------------------------------------


def discrete_gradient(u: np.ndarray, grid: Grid) -> np.ndarray:
    """Cell gradient of a node field u with shape (N, *node_shape).

    Returns (N, ndim, *cell_shape); real and imaginary parts are
    differentiated independently.  Exact on affine fields.
    """
    u = np.asarray(u)
    if u.shape[1:] != grid.node_shape:
        raise ValueError(f"node field shape {u.shape[1:]} != {grid.node_shape}")
    comps = []
    for a in range(grid.ndim):
        g = np.diff(u, axis=1 + a) / grid.h
        for b in range(grid.ndim):
            if b == a:
                continue
            ax = 1 + b
            sl0 = [slice(None)] * g.ndim
            sl1 = [slice(None)] * g.ndim
            sl0[ax] = slice(None, -1)
            sl1[ax] = slice(1, None)
            g = 0.5 * (g[tuple(sl0)] + g[tuple(sl1)])
        comps.append(g)
    return np.stack(comps, axis=1)


def discrete_divergence(G: np.ndarray, grid: Grid) -> np.ndarray:
    """Negative adjoint of discrete_gradient, restricted to the domain cells.

    <G, Du>_cells = -<div G, u>_nodes exactly for every u vanishing on the
    boundary layer, with both inner products carrying the uniform h^n weight.
    """
    G = np.asarray(G)
    N = G.shape[0]
    out = np.zeros((N,) + grid.node_shape, dtype=G.dtype)
    for a in range(grid.ndim):
        T = G[:, a] * grid.mask
        for b in range(grid.ndim):
            if b == a:
                continue
            ax = 1 + b
            pad = [(0, 0)] * T.ndim
            pad[ax] = (1, 0)
            left = np.pad(T, pad)
            pad[ax] = (0, 1)
            right = np.pad(T, pad)
            T = 0.5 * (left + right)
        ax = 1 + a
        pad = [(0, 0)] * T.ndim
        pad[ax] = (1, 0)
        plus = np.pad(T, pad)
        pad[ax] = (0, 1)
        minus = np.pad(T, pad)
        out += (plus - minus) / grid.h
    return -out


def integrate(f: np.ndarray, grid: Grid, region: np.ndarray | None = None):
    """h^n-weighted sum of a cell field over the domain (or a cell subset)."""
    f = np.asarray(f)
    region = grid.mask if region is None else region
    if not region.any():
        raise ValueError("empty integration region")
    return f[..., region].sum(axis=-1) * grid.h**grid.ndim


def mean(f: np.ndarray, grid: Grid, region: np.ndarray | None = None):
    region = grid.mask if region is None else region
    if not region.any():
        raise ValueError("empty integration region")
    return f[..., region].mean(axis=-1)


def lp_norm_cells(f: np.ndarray, q: float, grid: Grid, region=None) -> float:
    """L^q norm of |f| where f is any cell field (complex matrix ok).

    Matrix-valued fields carry components in leading axes; the modulus is the
    Frobenius norm over everything but the trailing spatial axes.
    """
    f = np.asarray(f)
    spatial = f.shape[-grid.ndim:]
    mag2 = (f.real**2 + f.imag**2).reshape(-1, *spatial).sum(axis=0)
    region = grid.mask if region is None else region
    return float((mag2[region] ** (q / 2.0)).sum() * grid.h**grid.ndim) ** (1.0 / q)


# ---------------------------------------------------------------------------
# sparse operators
# ---------------------------------------------------------------------------


def _diff1d(m: int, h: float) -> sp.csr_matrix:
    return sp.diags([-np.ones(m), np.ones(m)], [0, 1], shape=(m, m + 1)) / h


def _avg1d(m: int) -> sp.csr_matrix:
    return sp.diags([np.full(m, 0.5), np.full(m, 0.5)], [0, 1], shape=(m, m + 1))


def gradient_matrices(grid: Grid) -> list:
    """Sparse per-axis gradient operators on flattened (C-order) node fields."""
    mats = []
    for a in range(grid.ndim):
        factors = [
            _diff1d(grid.shape[b], grid.h) if b == a else _avg1d(grid.shape[b])
            for b in range(grid.ndim)
        ]
        M = factors[0]
        for f in factors[1:]:
            M = sp.kron(M, f, format="csr")
        mats.append(M)
    return mats


def laplacian(grid: Grid, region: np.ndarray | None = None) -> sp.csc_matrix:
    """Stiffness matrix D^T chi D restricted to the free nodes of ``region``.

    ``region`` defaults to the grid mask; passing a cell subset yields the
    operator of the local problem whose free nodes are the nodes with all
    incident cells inside the subset.
    """
    region = grid.mask if region is None else region
    chi = sp.diags(region.ravel().astype(np.float64))
    L = None
    for Da in gradient_matrices(grid):
        term = Da.T @ chi @ Da
        L = term if L is None else L + term
    free = free_nodes(grid, region).ravel()
    idx = np.where(free)[0]
    return L.tocsr()[idx][:, idx].tocsc()


def free_nodes(grid: Grid, region: np.ndarray | None = None) -> np.ndarray:
    """Nodes whose 2^n incident cells all belong to ``region``."""
    if region is None:
        return grid.free
    padded = np.zeros(tuple(s + 2 for s in grid.shape), dtype=bool)
    padded[(slice(1, -1),) * grid.ndim] = region
    free = np.ones(grid.node_shape, dtype=bool)
    for shifts in np.ndindex((2,) * grid.ndim):
        sl = tuple(slice(sh, sh + ns) for sh, ns in zip(shifts, grid.node_shape))
        free &= padded[sl]
    return free


def boundary_nodes(grid: Grid, region: np.ndarray) -> np.ndarray:
    """Nodes incident to ``region`` cells that are not free (Dirichlet layer)."""
    padded = np.zeros(tuple(s + 2 for s in grid.shape), dtype=bool)
    padded[(slice(1, -1),) * grid.ndim] = region
    touch = np.zeros(grid.node_shape, dtype=bool)
    for shifts in np.ndindex((2,) * grid.ndim):
        sl = tuple(slice(sh, sh + ns) for sh, ns in zip(shifts, grid.node_shape))
        touch |= padded[sl]
    return touch & ~free_nodes(grid, region)
