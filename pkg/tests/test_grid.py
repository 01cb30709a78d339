import numpy as np
import pytest

from cplap import grid as G


@pytest.fixture
def square32():
    return G.make_grid((32, 32), 1 / 32)


class TestMakeGrid:
    def test_rectangle_counts(self, square32):
        g = square32
        assert g.cell_count == 32 * 32
        assert g.domain_measure == pytest.approx(1.0)
        # interior nodes form a 31x31 block, boundary is the frame
        assert g.free.sum() == 31 * 31
        assert g.boundary.sum() == 4 * 32

    def test_ball_mask_is_center_containment(self):
        g = G.make_grid((32, 32), 1 / 32, ("ball", (0.5, 0.5), 0.4))
        cx, cy = np.meshgrid(g.cell_centers(0), g.cell_centers(1), indexing="ij")
        want = (cx - 0.5) ** 2 + (cy - 0.5) ** 2 < 0.4**2
        assert np.array_equal(g.mask, want)
        assert g.diameter == pytest.approx(0.8)

    def test_3d(self):
        g = G.make_grid((16, 16, 16), 1 / 16)
        assert g.ndim == 3
        assert g.domain_measure == pytest.approx(1.0)

    def test_interior_nodes_have_neighbors_inside(self, square32):
        g = square32
        fi = np.argwhere(g.free)
        inside = g.free | g.boundary
        for d in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nb = fi + d
            assert inside[nb[:, 0], nb[:, 1]].all()

    def test_rejects_small_and_empty(self):
        with pytest.raises(ValueError):
            G.make_grid((4, 4), 0.25)
        with pytest.raises(ValueError):
            G.make_grid((8, 8), 1 / 8, ("ball", (10.0, 10.0), 0.1))


class TestGradient:
    def test_exact_on_affine(self, square32):
        g = square32
        A = np.array([[0.3 + 0.2j, -1.1 + 0.05j]])
        x, y = np.meshgrid(g.node_coords(0), g.node_coords(1), indexing="ij")
        u = (A[0, 0] * x + A[0, 1] * y)[None]
        Du = G.discrete_gradient(u, g)
        assert np.allclose(Du[0, 0], A[0, 0], atol=1e-13)
        assert np.allclose(Du[0, 1], A[0, 1], atol=1e-13)

    def test_zero_field(self, square32):
        u = np.zeros((2,) + square32.node_shape, dtype=complex)
        assert np.all(G.discrete_gradient(u, square32) == 0)

    def test_convergence_on_smooth_field(self):
        # max-norm error of the cell-center gradient vs the analytic one
        errs = []
        for m in (32, 64, 128):
            g = G.make_grid((m, m), 1.0 / m)
            x, y = np.meshgrid(g.node_coords(0), g.node_coords(1), indexing="ij")
            u = np.sin(np.pi * x)[None] * np.ones_like(y)
            xc, yc = np.meshgrid(g.cell_centers(0), g.cell_centers(1), indexing="ij")
            want = np.pi * np.cos(np.pi * xc)
            Du = G.discrete_gradient(u.astype(complex), g)
            errs.append(np.abs(Du[0, 0] - want).max())
        rates = [np.log2(errs[i] / errs[i + 1]) for i in range(len(errs) - 1)]
        assert min(rates) >= 1.0  # at least first order; midpoint gives ~2

    def test_linearity(self, square32):
        rng = np.random.default_rng(0)
        u = rng.standard_normal((1,) + square32.node_shape) + 1j * rng.standard_normal(
            (1,) + square32.node_shape
        )
        v = rng.standard_normal((1,) + square32.node_shape)
        got = G.discrete_gradient(2.0 * u + 3.0 * v, square32)
        want = 2.0 * G.discrete_gradient(u, square32) + 3.0 * G.discrete_gradient(
            v, square32
        )
        assert np.allclose(got, want, atol=1e-12)


class TestDivergence:
    @pytest.mark.parametrize(
        "maker",
        [
            lambda: G.make_grid((16, 16), 1 / 16),
            lambda: G.make_grid((12, 16), 1 / 16),
            lambda: G.make_grid((16, 16), 1 / 16, ("ball", (0.5, 0.5), 0.45)),
            lambda: G.make_grid((8, 8, 8), 1 / 8),
        ],
    )
    def test_adjointness_random_pairs(self, maker):
        g = maker()
        rng = np.random.default_rng(7)
        for _ in range(25):
            u = rng.standard_normal((2,) + g.node_shape) + 1j * rng.standard_normal(
                (2,) + g.node_shape
            )
            u[:, ~g.free] = 0
            Gf = rng.standard_normal((2, g.ndim) + g.shape) + 1j * rng.standard_normal(
                (2, g.ndim) + g.shape
            )
            Du = G.discrete_gradient(u, g)
            lhs = (Gf * g.mask * np.conj(Du)).sum()
            rhs = -(G.discrete_divergence(Gf, g) * np.conj(u)).sum()
            scale = max(abs(lhs), 1.0)
            assert abs(lhs - rhs) <= 1e-12 * scale

    def test_constant_flux_divergence_free_inside(self, square32):
        g = square32
        Gf = np.ones((1, 2) + g.shape, dtype=complex)
        div = G.discrete_divergence(Gf, g)
        interior = np.zeros(g.node_shape, dtype=bool)
        interior[2:-2, 2:-2] = True
        assert np.abs(div[0][interior]).max() <= 1e-13

    def test_gradient_energy_nonnegative(self, square32):
        g = square32
        rng = np.random.default_rng(3)
        u = rng.standard_normal((1,) + g.node_shape).astype(complex)
        u[:, ~g.free] = 0
        Du = G.discrete_gradient(u, g)
        rhs = -(G.discrete_divergence(Du, g) * np.conj(u)).sum()
        assert rhs.real >= 0
        assert rhs.real == pytest.approx((np.abs(Du) ** 2).sum(), rel=1e-12)


class TestIntegrate:
    def test_measure(self, square32):
        assert G.integrate(np.ones(square32.shape), square32) == pytest.approx(1.0)

    def test_mean_of_constant(self, square32):
        f = np.full(square32.shape, 2.5 + 1j)
        assert G.mean(f, square32) == pytest.approx(2.5 + 1j)

    def test_sin_squared(self):
        g = G.make_grid((64, 64), 1 / 64)
        x, _ = np.meshgrid(g.cell_centers(0), g.cell_centers(1), indexing="ij")
        val = G.integrate(np.sin(np.pi * x) ** 2, g)
        assert val == pytest.approx(0.5, abs=1e-3)

    def test_empty_region(self, square32):
        with pytest.raises(ValueError):
            G.integrate(np.ones(square32.shape), square32, np.zeros(square32.shape, bool))


class TestSparseOperators:
    def test_matrices_match_gradient(self, square32):
        g = square32
        rng = np.random.default_rng(1)
        u = rng.standard_normal(g.node_shape)
        Du = G.discrete_gradient(u[None].astype(complex), g)
        for a, M in enumerate(G.gradient_matrices(g)):
            v = (M @ u.ravel()).reshape(g.shape)
            assert np.allclose(v, Du[0, a].real, atol=1e-13)

    def test_laplacian_positive_definite(self, square32):
        import scipy.sparse.linalg as spla

        L = G.laplacian(square32)
        assert (abs(L - L.T)).max() == 0
        w = spla.eigsh(L.astype(float), k=1, which="SA", return_eigenvectors=False)
        assert w[0] > 1.0  # lowest mode stays near the continuum value 2*pi^2

    def test_region_free_nodes(self, square32):
        g = square32
        region = np.zeros(g.shape, dtype=bool)
        region[8:16, 8:16] = True
        free = G.free_nodes(g, region)
        bnd = G.boundary_nodes(g, region)
        assert free.sum() == 7 * 7
        assert not (free & bnd).any()
        # every region cell corner is either free or boundary
        corners = np.zeros(g.node_shape, dtype=bool)
        corners[8:17, 8:17] = True
        assert ((free | bnd) == corners).all()
