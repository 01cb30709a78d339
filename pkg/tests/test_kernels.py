import numpy as np
import pytest

from cplap import _kernels as K

from conftest import naive_ball_sum


class TestSegments:
    def test_strict_containment_counts(self):
        # radius 1 cell-centered ball is exactly the center cell
        _, _, _, count = K.ball_segments(1.0, 2, False)
        assert count == 1
        _, _, _, count = K.ball_segments(2.0, 2, False)
        assert count == 9  # {0,+-1}^2 all satisfy d^2 < 4

    def test_node_centered_symmetry(self):
        rows, lo, hi, count = K.ball_segments(2.0, 2, True)
        # node-centered balls are symmetric under offset -> -1-offset
        assert sorted(rows[:, 0]) == sorted(-1 - rows[:, 0])
        assert count == 12

    def test_3d_counts_match_enumeration(self):
        for r in (1.5, 2.0, 3.3):
            _, _, _, count = K.ball_segments(r, 3, False)
            k = int(np.ceil(r)) + 1
            grid = np.arange(-k, k + 1)
            dz, dy, dx = np.meshgrid(grid, grid, grid, indexing="ij")
            want = int((dz**2 + dy**2 + dx**2 < r * r).sum())
            assert count == want


class TestBallSums:
    @pytest.mark.parametrize("radius", [1.0, 2.0, 3.7, 6.0])
    @pytest.mark.parametrize("node_centered", [False, True])
    def test_2d_matches_naive(self, kernel_backend, radius, node_centered):
        rng = np.random.default_rng(3)
        f = rng.random((13, 17))
        got = K.ball_sums(f, radius, node_centered)
        want = naive_ball_sum(f, radius, node_centered)
        assert np.allclose(got, want, atol=1e-10)

    @pytest.mark.parametrize("node_centered", [False, True])
    def test_3d_matches_naive(self, kernel_backend, node_centered):
        rng = np.random.default_rng(4)
        f = rng.random((6, 7, 8))
        got = K.ball_sums(f, 2.4, node_centered)
        want = naive_ball_sum(f, 2.4, node_centered)
        assert np.allclose(got, want, atol=1e-10)

    def test_zero_extension(self, kernel_backend):
        f = np.ones((9, 9))
        out = K.ball_sums(f, 3.0, False)
        _, _, _, count = K.ball_segments(3.0, 2, False)
        # center sees the full ball, the corner loses the out-of-grid part
        assert out[4, 4] == pytest.approx(count)
        assert out[0, 0] < count

    def test_backends_agree(self):
        if not K.HAVE_NUMBA:
            pytest.skip("numba unavailable")
        rng = np.random.default_rng(5)
        f = rng.random((20, 23))
        prev = K.set_backend("numpy")
        try:
            a = K.ball_sums(f, 4.3, True)
            K.set_backend("numba")
            b = K.ball_sums(f, 4.3, True)
        finally:
            K.set_backend(prev)
        assert np.allclose(a, b, atol=1e-10)


class TestAbsDev:
    @pytest.mark.parametrize("node_centered", [False, True])
    def test_matches_naive(self, kernel_backend, node_centered):
        rng = np.random.default_rng(6)
        a = rng.random((11, 12)) + 1j * rng.random((11, 12))
        r = 2.5
        cnt = np.maximum(K.ball_sums(np.ones(a.shape), r, node_centered), 1.0)
        mre = K.ball_sums(a.real, r, node_centered) / cnt
        mim = K.ball_sums(a.imag, r, node_centered) / cnt
        got = K.ball_abs_dev(a.real, a.imag, mre, mim, r, node_centered)
        shift = 0.5 if node_centered else 0.0
        want = np.zeros(mre.shape)
        for c in np.ndindex(want.shape):
            acc = 0.0
            for cell in np.ndindex(a.shape):
                d2 = sum((cell[ax] - c[ax] + shift) ** 2 for ax in range(2))
                if d2 < r * r:
                    acc += abs(a[cell] - (mre[c] + 1j * mim[c]))
            want[c] = acc
        assert np.allclose(got, want, atol=1e-10)


class TestFluxWeights:
    def test_degenerate_zero(self, kernel_backend):
        w = K.flux_weights(np.array([0.0, 1.0]), 1.5, 0.0)
        assert w[0] == 0.0
        assert w[1] == 1.0

    def test_shapes_roundtrip(self, kernel_backend):
        w = K.flux_weights(np.float64(4.0), 3.0, 0.0)
        assert w.shape == ()
        w = K.flux_weights(np.ones((3, 4, 5)), 3.0, 0.5)
        assert w.shape == (3, 4, 5)

    def test_values(self, kernel_backend):
        w = K.flux_weights(np.array([0.0]), 4.0, 0.7)
        assert w[0] == pytest.approx(0.49)


class TestBackendSelection:
    def test_set_backend_validates(self):
        with pytest.raises(ValueError):
            K.set_backend("cuda")

    def test_active_backend_reports(self):
        assert K.active_backend() in ("numba", "numpy")
