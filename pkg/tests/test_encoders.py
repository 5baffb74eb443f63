"""Duration encoders: ranges, gradients, Lipschitz bounds, serialization."""
import numpy as np
import pytest
from scipy.special import expit

from orbitfit.encoders import Encoder, ProductEncoder, encoder_c0_distance


def test_interval_must_straddle_zero():
    Encoder.affine(np.ones(2), 0.0, (0.0, 2 * np.pi))
    Encoder.affine(np.ones(2), 0.0, (-1.0, 0.5))
    with pytest.raises(ValueError):
        Encoder.affine(np.ones(2), 0.0, (0.5, 1.0))
    with pytest.raises(ValueError):
        Encoder.affine(np.ones(2), 0.0, (-2.0, -1.0))
    with pytest.raises(ValueError):
        Encoder.affine(np.ones(2), 0.0, (0.0, 0.0))


def test_affine_encoder_closed_form():
    w = np.array([0.5, -1.0])
    b = 0.25
    enc = Encoder.affine(w, b, (-1.0, 3.0))
    x = np.array([[1.0, 2.0], [0.0, 0.0]])
    expected = -1.0 + 4.0 * expit(x @ w + b)
    np.testing.assert_allclose(enc.encode(x), expected, rtol=1e-15)


def test_mlp_encoder_closed_form():
    rng = np.random.default_rng(30)
    W1 = rng.standard_normal((4, 3))
    b1 = rng.standard_normal(4)
    w2 = rng.standard_normal(4)
    b2 = 0.1
    enc = Encoder.mlp(W1, b1, w2, b2, (-2.0, 2.0))
    x = rng.standard_normal((6, 3))
    score = np.tanh(x @ W1.T + b1) @ w2 + b2
    np.testing.assert_allclose(enc.encode(x), -2.0 + 4.0 * expit(score), rtol=1e-15)


def test_mlp_shape_validation():
    with pytest.raises(ValueError):
        Encoder.mlp(np.zeros((4, 3)), np.zeros(3), np.zeros(4), 0.0, (-1, 1))
    with pytest.raises(ValueError):
        Encoder.mlp(np.zeros((4, 3)), np.zeros(4), np.zeros(5), 0.0, (-1, 1))


def test_outputs_stay_strictly_inside_the_interval():
    rng = np.random.default_rng(31)
    for interval in ((-1.0, 1.0), (0.0, 2 * np.pi), (-3.0, 0.5)):
        enc = Encoder.new_mlp(rng, 3, interval, hidden=5, scale=2.0)
        t = enc.encode(rng.standard_normal((200, 3)) * 5)
        assert np.all(t > interval[0]) and np.all(t < interval[1])


def test_encode_rejects_wrong_dimension():
    enc = Encoder.affine(np.ones(3), 0.0, (-1.0, 1.0))
    with pytest.raises(ValueError):
        enc.encode(np.zeros((5, 2)))


@pytest.mark.parametrize("make", [
    lambda rng: Encoder.new_affine(rng, 3, (-1.0, 2.0), scale=0.5),
    lambda rng: Encoder.new_mlp(rng, 3, (-1.0, 2.0), hidden=4, scale=0.5),
], ids=["affine", "mlp"])
def test_param_grad_matches_finite_differences(make):
    rng = np.random.default_rng(32)
    enc = make(rng)
    x = rng.standard_normal((7, 3))
    grad = enc.param_grad(x)
    assert grad.shape == (7, enc.n_params)
    theta = enc.param_vector()
    h = 1e-6
    fd = np.empty_like(grad)
    for j in range(theta.size):
        e = np.zeros(theta.size)
        e[j] = h
        up = enc.with_params(theta + e).encode(x)
        dn = enc.with_params(theta - e).encode(x)
        fd[:, j] = (up - dn) / (2 * h)
    assert np.allclose(grad, fd, atol=1e-8)


def test_param_counts_and_vector_roundtrip():
    rng = np.random.default_rng(33)
    aff = Encoder.new_affine(rng, 3, (-1.0, 1.0))
    assert aff.n_params == 4
    mlp = Encoder.new_mlp(rng, 3, (-1.0, 1.0), hidden=5)
    assert mlp.n_params == 5 * (3 + 2) + 1
    x = rng.standard_normal((4, 3))
    for enc in (aff, mlp):
        again = enc.with_params(enc.param_vector())
        np.testing.assert_array_equal(enc.encode(x), again.encode(x))


@pytest.mark.parametrize("make", [
    lambda rng: Encoder.new_affine(rng, 2, (-1.0, 3.0), scale=1.0),
    lambda rng: Encoder.new_mlp(rng, 2, (-1.0, 3.0), hidden=6, scale=1.0),
], ids=["affine", "mlp"])
def test_lipschitz_bound_certifies_sampled_pairs(make):
    rng = np.random.default_rng(34)
    enc = make(rng)
    L = enc.lipschitz_bound()
    x = rng.standard_normal((300, 2)) * 2
    y = x + rng.standard_normal((300, 2)) * 0.1
    gap = np.abs(enc.encode(x) - enc.encode(y))
    assert np.all(gap <= L * np.linalg.norm(x - y, axis=-1) + 1e-12)


def test_lipschitz_bound_closed_forms():
    w = np.array([3.0, 4.0])
    enc = Encoder.affine(w, 0.0, (-1.0, 1.0))
    assert enc.lipschitz_bound() == pytest.approx(2.0 / 4.0 * 5.0)
    W1 = np.diag([2.0, 1.0])
    enc = Encoder.mlp(W1, np.zeros(2), np.array([0.0, 3.0]), 0.0, (-1.0, 1.0))
    assert enc.lipschitz_bound() == pytest.approx(0.5 * 3.0 * 2.0)


def test_encoder_roundtrips_through_dict():
    rng = np.random.default_rng(35)
    x = rng.standard_normal((5, 3))
    for enc in (Encoder.new_affine(rng, 3, (-1.0, 1.0)),
                Encoder.new_mlp(rng, 3, (0.0, 5.0), hidden=4)):
        again = Encoder.from_dict(enc.to_dict())
        np.testing.assert_array_equal(enc.encode(x), again.encode(x))
        assert again.interval == enc.interval and again.kind == enc.kind


def test_product_encoder_shapes_and_validation():
    rng = np.random.default_rng(36)
    parts = tuple(Encoder.new_affine(rng, 3, (-1.0, 1.0)) for _ in range(2))
    prod = ProductEncoder(parts)
    assert prod.m == 2 and prod.dim == 3 and prod.interval == (-1.0, 1.0)
    x = rng.standard_normal((5, 3))
    out = prod.encode(x)
    assert out.shape == (5, 2)
    np.testing.assert_array_equal(out[:, 0], parts[0].encode(x))
    single = prod.encode(x[0])
    assert single.shape == (2,)
    np.testing.assert_array_equal(single, out[0])
    with pytest.raises(ValueError):
        ProductEncoder(())
    with pytest.raises(ValueError):
        ProductEncoder((parts[0], Encoder.new_affine(rng, 2, (-1.0, 1.0))))


def test_product_encoder_roundtrips_through_dict():
    rng = np.random.default_rng(37)
    prod = ProductEncoder(tuple(Encoder.new_mlp(rng, 2, (-1.0, 1.0), hidden=3)
                                for _ in range(3)))
    again = ProductEncoder.from_dict(prod.to_dict())
    assert isinstance(prod.to_dict(), list)
    x = rng.standard_normal((4, 2))
    np.testing.assert_array_equal(prod.encode(x), again.encode(x))


def test_c0_distance_is_the_max_output_gap():
    w = np.array([1.0, 0.0])
    a = Encoder.affine(w, 0.0, (-1.0, 1.0))
    b = Encoder.affine(w, 0.5, (-1.0, 1.0))
    pts = np.array([[0.0, 0.0], [2.0, 0.0], [-2.0, 0.0]])
    expect = np.max(np.abs(a.encode(pts) - b.encode(pts)))
    assert encoder_c0_distance(a, b, pts) == pytest.approx(expect)
    assert encoder_c0_distance(a, a, pts) == 0.0
    pa = ProductEncoder((a, a))
    pb = ProductEncoder((a, b))
    assert encoder_c0_distance(pa, pb, pts) == pytest.approx(expect)
    with pytest.raises(ValueError):
        encoder_c0_distance(pa, b, pts)
