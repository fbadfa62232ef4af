import numpy as np
import oracles
import pytest

from slat.errors import NumericalError, ValidationError
from slat.linops import (
    GradientField,
    LinearOperator,
    conjugate_gradient,
    div,
    grad,
    identity_operator,
    laplacian,
    masked_adjoint,
    masked_apply,
    operator_norm_sq,
    tv_norm,
    vertical_box_blur,
)


def inner(a, b):
    return float((a * b).sum())


def test_grad_of_constant_is_zero():
    g = grad(np.full((5, 7), 2.5))
    assert not g.gx.any() and not g.gy.any()


def test_grad_row_differences():
    g = grad(np.array([[0.0, 1.0, 3.0]]))
    assert np.array_equal(g.gx, [[0.0, 1.0, 2.0]])
    assert np.array_equal(g.gy, [[0.0, 0.0, 0.0]])


def test_grad_matches_loop_oracle(rng):
    u = rng.standard_normal((5, 5))
    g = grad(u)
    ox, oy = oracles.loop_grad(u)
    assert np.array_equal(g.gx, ox)
    assert np.array_equal(g.gy, oy)


def test_grad_kernel_is_exactly_constants(rng):
    for _ in range(10):
        u = rng.standard_normal((6, 6))
        g = grad(u)
        if np.ptp(u) > 0:
            assert abs(g.gx).max() + abs(g.gy).max() > 0
    c = grad(np.full((6, 6), -3.0))
    assert abs(c.gx).max() + abs(c.gy).max() == 0.0


def test_div_zero_field():
    z = GradientField(np.zeros((4, 4)), np.zeros((4, 4)))
    assert not div(z).any()


def test_div_is_minus_grad_transpose(rng):
    for _ in range(20):
        u = rng.standard_normal((8, 8))
        p = GradientField(rng.standard_normal((8, 8)), rng.standard_normal((8, 8)))
        g = grad(u)
        lhs = inner(g.gx, p.gx) + inner(g.gy, p.gy)
        rhs = -inner(u, div(p))
        assert abs(lhs - rhs) <= 1e-10


def test_div_grad_constant_zero():
    assert not laplacian(np.full((5, 5), 4.2)).any()


def test_tv_norm_zero_field():
    assert tv_norm(GradientField(np.zeros((3, 3)), np.zeros((3, 3)))) == 0.0


def test_tv_norm_345():
    gx = np.zeros((1, 1))
    gy = np.zeros((1, 1))
    gx[0, 0], gy[0, 0] = 3.0, 4.0
    assert tv_norm(GradientField(gx, gy)) == 5.0


def test_tv_norm_matches_loop(rng):
    gx, gy = rng.standard_normal((6, 6)), rng.standard_normal((6, 6))
    assert abs(tv_norm(GradientField(gx, gy)) - oracles.loop_tv(gx, gy)) <= 1e-12


def test_identity_apply_is_noop(rng):
    u = rng.standard_normal((4, 6))
    op = identity_operator()
    assert np.array_equal(op.apply(u), u)
    assert np.array_equal(op.adjoint(u), u)


def test_box_blur_keeps_constants():
    op = vertical_box_blur(10)
    u = np.full((20, 5), 0.3)
    assert np.allclose(op.apply(u), u, atol=1e-14)


def test_box_blur_matches_loop_convolution(rng):
    u = np.zeros((16, 4))
    u[8:, :] = 1.0  # vertical step edge
    op = vertical_box_blur(10)
    assert np.allclose(op.apply(u), oracles.loop_conv(u, op.kernel, op.anchor), atol=1e-12)
    v = rng.standard_normal((12, 9))
    assert np.allclose(op.apply(v), oracles.loop_conv(v, op.kernel, op.anchor), atol=1e-12)


def test_box_blur_window_alignment():
    # output row k must average input rows k-5 .. k+4
    u = np.zeros((30, 1))
    u[12, 0] = 1.0
    out = vertical_box_blur(10).apply(u)
    hit = np.nonzero(out[:, 0] > 1e-12)[0]
    assert hit.min() == 12 - 4 and hit.max() == 12 + 5


def test_blur_adjoint_identity(rng):
    for op in (vertical_box_blur(10), vertical_box_blur(5), LinearOperator("convolution", np.full((3, 3), 1 / 9))):
        for _ in range(20):
            u, v = rng.standard_normal((11, 8)), rng.standard_normal((11, 8))
            assert abs(inner(op.apply(u), v) - inner(u, op.adjoint(v))) <= 1e-10


def test_odd_box_preserves_mean(rng):
    u = rng.random((17, 13))
    for length in (5, 9):
        out = vertical_box_blur(length).apply(u)
        assert abs(out.mean() - u.mean()) <= 1e-12


def test_kernel_validation():
    with pytest.raises(ValidationError):
        LinearOperator("convolution", np.array([[0.3, 0.3]]))  # taps sum != 1
    with pytest.raises(ValidationError):
        LinearOperator("convolution", np.full((2, 1), 0.5))  # even, no anchor
    with pytest.raises(ValidationError):
        LinearOperator("convolution", np.full((2, 1), 0.5), anchor=(5, 0))
    with pytest.raises(ValidationError):
        LinearOperator("warp")


def test_kernel_larger_than_image():
    with pytest.raises(ValidationError):
        vertical_box_blur(10).apply(np.ones((4, 4)))


def test_masked_apply_full_mask_reduces_to_apply(rng):
    u = rng.standard_normal((9, 9))
    op = vertical_box_blur(5)
    assert np.array_equal(masked_apply(op, np.ones_like(u), u), op.apply(u))


def test_masked_apply_zeroes_unknown_pixels(rng):
    u = rng.standard_normal((6, 6))
    w = np.ones_like(u)
    w[2, 3] = 0.0
    out = masked_apply(identity_operator(), w, u)
    assert out[2, 3] == 0.0
    u2 = u.copy()
    u2[2, 3] = 99.0
    assert masked_apply(identity_operator(), w, u2)[2, 3] == 0.0


def test_masked_adjoint_identity(rng):
    op = vertical_box_blur(5)
    for _ in range(20):
        u, v = rng.standard_normal((10, 7)), rng.standard_normal((10, 7))
        w = (rng.random((10, 7)) < 0.7).astype(np.float64)
        assert abs(inner(masked_apply(op, w, u), v) - inner(u, masked_adjoint(op, w, v))) <= 1e-10


def test_masked_apply_rejects_empty_mask(rng):
    with pytest.raises(ValidationError):
        masked_apply(identity_operator(), np.zeros((3, 3)), rng.standard_normal((3, 3)))
    with pytest.raises(ValidationError):
        masked_apply(identity_operator(), np.ones((2, 2)), rng.standard_normal((3, 3)))


def test_conjugate_gradient_solves_spd(rng):
    m = rng.standard_normal((12, 12))
    a = m @ m.T + 12 * np.eye(12)
    x_true = rng.standard_normal((12, 1))
    b = a @ x_true
    x, iters = conjugate_gradient(lambda v: a @ v, b, tol=1e-12, max_iter=200)
    assert np.allclose(x, x_true, atol=1e-8)
    assert 0 < iters <= 200


def test_conjugate_gradient_zero_rhs():
    x, iters = conjugate_gradient(lambda v: 2 * v, np.zeros((4, 4)))
    assert not x.any() and iters == 0


def test_conjugate_gradient_rejects_indefinite(rng):
    b = rng.standard_normal((5, 1))
    with pytest.raises(NumericalError):
        conjugate_gradient(lambda v: -v, b)


def test_operator_norms():
    assert operator_norm_sq(identity_operator(), (8, 8)) == 1.0
    # averaging kernel: near 1, slightly above is possible because the
    # symmetric extension double-counts boundary samples
    est = operator_norm_sq(vertical_box_blur(10), (40, 40))
    assert 0.5 <= est <= 1.1
    # the estimate must dominate the Rayleigh quotient of any probe
    op = vertical_box_blur(10)
    probe = np.linspace(0.0, 1.0, 40)[:, None] * np.ones((1, 40))
    assert est + 1e-6 >= (op.apply(probe) ** 2).sum() / (probe**2).sum()
