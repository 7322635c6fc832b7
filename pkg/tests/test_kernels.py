"""Kernel backends: NumPy fallback vs compiled extension vs a naive oracle."""

import numpy as np
import pytest

from temploc.net import _kernels_py, kernels

try:
    from temploc.net import _kernels
except ImportError:
    _kernels = None

needs_compiled = pytest.mark.skipif(
    _kernels is None, reason="compiled extension not built"
)

BACKENDS = [("python", _kernels_py)] + ([("compiled", _kernels)] if _kernels else [])


def naive_conv3d(x, weight, bias):
    n, ci, t, h, w = x.shape
    co = weight.shape[0]
    out = np.zeros((n, co, t, h, w))
    for i in range(n):
        for o in range(co):
            for tt in range(t):
                for hh in range(h):
                    for ww in range(w):
                        acc = bias[o]
                        for c in range(ci):
                            for dt in range(3):
                                for dh in range(3):
                                    for dw in range(3):
                                        st, sh, sw = tt + dt - 1, hh + dh - 1, ww + dw - 1
                                        if 0 <= st < t and 0 <= sh < h and 0 <= sw < w:
                                            acc += x[i, c, st, sh, sw] * weight[o, c, dt, dh, dw]
                        out[i, o, tt, hh, ww] = acc
    return out


@pytest.fixture(scope="module")
def conv_case():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 3, 4, 5, 6))
    weight = rng.normal(size=(4, 3, 3, 3, 3))
    bias = rng.normal(size=4)
    dy = rng.normal(size=(2, 4, 4, 5, 6))
    return x, weight, bias, dy


@pytest.mark.parametrize("name,impl", BACKENDS)
class TestConv3d:
    def test_forward_matches_naive(self, name, impl, conv_case):
        x, weight, bias, _ = conv_case
        expected = naive_conv3d(x, weight, bias)
        assert np.allclose(impl.conv3d_forward(x, weight, bias), expected, atol=1e-12)

    def test_backward_matches_finite_differences(self, name, impl, conv_case):
        x, weight, bias, dy = conv_case
        dx, dw, db = impl.conv3d_backward(x, weight, dy)
        step = 1e-6

        def total(xx, ww, bb):
            return float(np.sum(dy * impl.conv3d_forward(xx, ww, bb)))

        rng = np.random.default_rng(1)
        for _ in range(10):
            idx = tuple(rng.integers(0, s) for s in x.shape)
            xp, xm = x.copy(), x.copy()
            xp[idx] += step
            xm[idx] -= step
            numeric = (total(xp, weight, bias) - total(xm, weight, bias)) / (2 * step)
            assert dx[idx] == pytest.approx(numeric, rel=1e-4, abs=1e-7)
        for _ in range(10):
            idx = tuple(rng.integers(0, s) for s in weight.shape)
            wp, wm = weight.copy(), weight.copy()
            wp[idx] += step
            wm[idx] -= step
            numeric = (total(x, wp, bias) - total(x, wm, bias)) / (2 * step)
            assert dw[idx] == pytest.approx(numeric, rel=1e-4, abs=1e-7)
        assert db == pytest.approx(dy.sum(axis=(0, 2, 3, 4)))

    def test_shape_validation(self, name, impl):
        with pytest.raises(ValueError):
            impl.conv3d_forward(np.zeros((2, 3, 4, 4)), np.zeros((4, 3, 3, 3, 3)), np.zeros(4))
        with pytest.raises(ValueError):
            impl.conv3d_forward(
                np.zeros((1, 3, 4, 4, 4)), np.zeros((4, 2, 3, 3, 3)), np.zeros(4)
            )


@pytest.mark.parametrize("name,impl", BACKENDS)
class TestPool3d:
    @pytest.mark.parametrize("kt,st", [(1, 1), (2, 2), (3, 2), (2, 1)])
    def test_forward_shape_and_values(self, name, impl, kt, st):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 3, 7, 6, 9))
        y, idx = impl.pool3d_forward(x, kt, st)
        n, c, t, h, w = x.shape
        assert y.shape == (n, c, (t - kt) // st + 1, h // 2, w // 2)
        # every output equals the max of its window, found at the stored index
        flat = x.reshape(-1)
        assert np.array_equal(flat[idx.reshape(-1)], y.reshape(-1))
        for (i, cc, ot, oh, ow), value in np.ndenumerate(y):
            window = x[i, cc, ot * st : ot * st + kt, oh * 2 : oh * 2 + 2, ow * 2 : ow * 2 + 2]
            assert value == window.max()

    def test_backward_routes_to_argmax_only(self, name, impl):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(1, 2, 4, 4, 4))
        y, idx = impl.pool3d_forward(x, 2, 2)
        dy = rng.normal(size=y.shape)
        dx = impl.pool3d_backward(idx, x.shape, dy)
        assert dx.shape == x.shape
        # total gradient is preserved and lands only on argmax positions
        assert dx.sum() == pytest.approx(dy.sum())
        nonzero = set(np.flatnonzero(dx))
        assert nonzero <= set(idx.reshape(-1).tolist())

    def test_tie_takes_first_in_scan_order(self, name, impl):
        x = np.zeros((1, 1, 2, 2, 2))  # all equal: argmax must be the first cell
        _, idx = impl.pool3d_forward(x, 2, 2)
        assert idx.reshape(-1).tolist() == [0]

    def test_too_small_input_rejected(self, name, impl):
        with pytest.raises(ValueError):
            impl.pool3d_forward(np.zeros((1, 1, 1, 4, 4)), 2, 2)
        with pytest.raises(ValueError):
            impl.pool3d_forward(np.zeros((1, 1, 4, 1, 4)), 2, 2)


@needs_compiled
class TestBackendEquivalence:
    def test_conv_matches(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            n, ci, co = rng.integers(1, 4, size=3)
            t, h, w = rng.integers(2, 9, size=3)
            x = rng.normal(size=(n, ci, t, h, w))
            weight = rng.normal(size=(co, ci, 3, 3, 3))
            bias = rng.normal(size=co)
            dy = rng.normal(size=(n, co, t, h, w))
            assert np.allclose(
                _kernels.conv3d_forward(x, weight, bias),
                _kernels_py.conv3d_forward(x, weight, bias),
                atol=1e-11,
            )
            for a, b in zip(
                _kernels.conv3d_backward(x, weight, dy),
                _kernels_py.conv3d_backward(x, weight, dy),
            ):
                assert np.allclose(a, b, atol=1e-11)

    def test_pool_matches_bitwise(self):
        rng = np.random.default_rng(5)
        for kt, st in [(1, 1), (2, 2), (3, 1)]:
            x = rng.normal(size=(2, 2, 6, 6, 6))
            y_c, idx_c = _kernels.pool3d_forward(x, kt, st)
            y_p, idx_p = _kernels_py.pool3d_forward(x, kt, st)
            assert np.array_equal(y_c, y_p)
            assert np.array_equal(idx_c, idx_p)

    def test_dispatcher_selected_compiled(self):
        assert kernels.BACKEND == "compiled"
