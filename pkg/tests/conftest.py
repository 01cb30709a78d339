import numpy as np
import pytest

from cplap import _kernels


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    _kernels.warmup()


@pytest.fixture(params=["numpy", "numba"] if _kernels.HAVE_NUMBA else ["numpy"])
def kernel_backend(request):
    prev = _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(prev)


def naive_ball_sum(field: np.ndarray, radius_cells: float, node_centered: bool):
    """O(centers * cells) reference for the prefix-sum ball kernels.

    Direct distance test and masked sum per center; shares no code with the
    segment/prefix-sum path it checks.
    """
    ndim = field.ndim
    shift = 0.5 if node_centered else 0.0
    out_shape = (
        tuple(s + 1 for s in field.shape) if node_centered else field.shape
    )
    out = np.zeros(out_shape)
    cells = np.indices(field.shape).reshape(ndim, -1)
    flat = field.reshape(-1)
    r2 = radius_cells**2
    for c in np.ndindex(out_shape):
        d2 = np.zeros(flat.shape)
        for a in range(ndim):
            d2 += (cells[a] - c[a] + shift) ** 2
        out[c] = flat[d2 < r2].sum()
    return out


def naive_maximal(f, grid, beta, radii):
    """Direct per-cell evaluation of the fractional maximal operator."""
    from cplap._kernels import ball_segments

    f = f * grid.mask
    out = np.full(grid.shape, -np.inf)
    for rho in radii:
        rc = rho / grid.h
        _, _, _, count = ball_segments(rc, grid.ndim, False)
        if count == 0:
            continue
        sums = naive_ball_sum(f, rc, False)
        np.maximum(out, rho**beta * sums / count, out=out)
    return out
