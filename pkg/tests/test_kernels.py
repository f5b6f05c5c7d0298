"""The compiled and numpy kernel backends must agree exactly."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msnilm import _pykernels, kernels

backends = [pytest.param(_pykernels, id="python")]
if kernels.compiled_backend is not None:
    backends.append(pytest.param(kernels.compiled_backend, id="compiled"))


def test_backend_is_selected():
    assert kernels.BACKEND_NAME in ("compiled", "python")


@pytest.mark.parametrize("impl", backends)
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
@pytest.mark.parametrize("k,d", [(1, 1), (3, 1), (3, 2), (5, 4), (5, 16)])
def test_im2col_matches_definition(impl, dtype, k, d, rng):
    x = rng.standard_normal((2, 3, 11)).astype(dtype)
    cols = impl.im2col(x, k, d)
    assert cols.shape == (3, k, 2, 11) and cols.dtype == dtype
    pad = (k - 1) * d // 2
    for c in range(3):
        for j in range(k):
            for b in range(2):
                for t in range(11):
                    src = t + j * d - pad
                    want = x[b, c, src] if 0 <= src < 11 else 0.0
                    assert cols[c, j, b, t] == want


@pytest.mark.parametrize("impl", backends)
def test_col2im_is_adjoint_of_im2col(impl, rng):
    x = rng.standard_normal((2, 4, 13))
    g = rng.standard_normal((4, 5, 2, 13))
    lhs = (impl.im2col(x, 5, 2) * g).sum()
    rhs = (x * impl.col2im(g, 2)).sum()
    assert lhs == pytest.approx(rhs, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    bits=st.lists(st.booleans(), min_size=0, max_size=120),
    min_on=st.sampled_from([0.0, 6.0, 12.0, 60.0]),
    min_off=st.sampled_from([0.0, 12.0, 30.0, 160.0]),
)
def test_activation_runs_backends_agree(bits, min_on, min_off):
    above = np.asarray(bits, dtype=np.uint8)
    ref = _pykernels.activation_runs(above, 6.0, min_on, min_off)
    got = kernels.activation_runs(above, 6.0, min_on, min_off)
    assert np.array_equal(ref[0], got[0]) and np.array_equal(ref[1], got[1])


@pytest.mark.skipif(kernels.compiled_backend is None, reason="compiled kernels not built")
def test_compiled_conv_kernels_match_python(rng):
    c = kernels.compiled_backend
    for dtype in (np.float32, np.float64):
        x = rng.standard_normal((4, 7, 33)).astype(dtype)
        for k, d in [(1, 1), (5, 1), (5, 8), (3, 32)]:
            cols = c.im2col(x, k, d)
            assert np.array_equal(cols, _pykernels.im2col(x, k, d))
            np.testing.assert_allclose(c.col2im(cols, d), _pykernels.col2im(cols, d), rtol=1e-6)
