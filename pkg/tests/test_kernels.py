"""Kernel backends: correctness vs a scipy oracle and cross-backend parity."""

import numpy as np
import pytest
from scipy import signal

from ladderlab import kernels

BACKENDS = kernels.available_backends()
CASES = [
    (1, 1, 1, 1, 3, 3, 8, 8, 2, 4, 3),
    (2, 2, 0, 0, 2, 2, 8, 8, 3, 5, 2),
    (2, 1, 1, 2, 3, 4, 7, 9, 1, 2, 2),
]


def oracle_conv(x, w, sh, sw, ph, pw):
    N, C, H, W = x.shape
    F, _, kh, kw = w.shape
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    Ho = (H + 2 * ph - kh) // sh + 1
    Wo = (W + 2 * pw - kw) // sw + 1
    y = np.zeros((N, F, Ho, Wo))
    for n in range(N):
        for f in range(F):
            acc = np.zeros((xp.shape[2] - kh + 1, xp.shape[3] - kw + 1))
            for c in range(C):
                acc += signal.correlate2d(xp[n, c], w[f, c].astype(np.float64), mode="valid")
            y[n, f] = acc[::sh, ::sw][:Ho, :Wo]
    return y


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("case", CASES)
def test_conv_forward_matches_oracle(backend, case):
    sh, sw, ph, pw, kh, kw, H, W, C, F, N = case
    impl = kernels.get_backend(backend)
    rng = np.random.default_rng(42)
    x = rng.normal(size=(N, C, H, W)).astype(np.float32)
    w = rng.normal(size=(F, C, kh, kw)).astype(np.float32)
    got = impl.conv2d_fwd(x, w, sh, sw, ph, pw)
    want = oracle_conv(x, w, sh, sw, ph, pw)
    assert got.shape == want.shape
    assert np.abs(got - want).max() < 1e-4


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend unavailable")
@pytest.mark.parametrize("case", CASES)
def test_backend_parity(case):
    sh, sw, ph, pw, kh, kw, H, W, C, F, N = case
    py = kernels.get_backend("numpy")
    cy = kernels.get_backend("cython")
    rng = np.random.default_rng(7)
    x = rng.normal(size=(N, C, H, W)).astype(np.float32)
    w = rng.normal(size=(F, C, kh, kw)).astype(np.float32)
    ya, yb = py.conv2d_fwd(x, w, sh, sw, ph, pw), cy.conv2d_fwd(x, w, sh, sw, ph, pw)
    assert np.allclose(ya, yb, rtol=1e-4, atol=1e-5)
    dy = rng.normal(size=ya.shape).astype(np.float32)
    assert np.allclose(
        py.conv2d_dx(dy, w, sh, sw, ph, pw, H, W),
        cy.conv2d_dx(dy, w, sh, sw, ph, pw, H, W),
        rtol=1e-4,
        atol=1e-5,
    )
    assert np.allclose(
        py.conv2d_dw(dy, x, sh, sw, ph, pw, kh, kw),
        cy.conv2d_dw(dy, x, sh, sw, ph, pw, kh, kw),
        rtol=1e-4,
        atol=1e-5,
    )


@pytest.mark.parametrize("backend", BACKENDS)
def test_maxpool_roundtrip(backend):
    impl = kernels.get_backend(backend)
    rng = np.random.default_rng(3)
    x = rng.normal(size=(2, 3, 8, 8)).astype(np.float32)
    y, idx = impl.maxpool_fwd(x, 2)
    assert y.shape == (2, 3, 4, 4)
    # every pooled value is the max of its window
    for n in range(2):
        for c in range(3):
            for i in range(4):
                for j in range(4):
                    assert y[n, c, i, j] == x[n, c, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].max()
    dy = rng.normal(size=y.shape).astype(np.float32)
    dx = impl.maxpool_bwd(dy, idx, 2, 8, 8)
    assert dx.shape == x.shape
    assert np.isclose(dx.sum(), dy.sum(), atol=1e-4)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled backend unavailable")
def test_maxpool_parity_includes_tie_rule():
    x = np.zeros((1, 1, 4, 4), dtype=np.float32)  # all ties: first index wins
    py_y, py_i = kernels.get_backend("numpy").maxpool_fwd(x, 2)
    cy_y, cy_i = kernels.get_backend("cython").maxpool_fwd(x, 2)
    assert np.array_equal(py_y, cy_y)
    assert np.array_equal(py_i, cy_i)
