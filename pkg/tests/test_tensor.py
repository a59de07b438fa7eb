import numpy as np
import pytest

from torsionflow.tensor import (
    FramePack,
    PointTensor,
    endo_to_form,
    form_to_endo,
    musical,
    random_rotation,
    wedge2,
)


def random_spd(rng, n):
    a = rng.standard_normal((n, n))
    return a @ a.T + n * np.eye(n)


def test_frame_is_orthonormal():
    rng = np.random.default_rng(0)
    for n in (2, 3, 6):
        g = random_spd(rng, n)
        fp = FramePack(g)
        assert np.abs(fp.frame.T @ g @ fp.frame - np.eye(n)).max() < 1e-12
        assert np.abs(fp.ginv - np.linalg.inv(g)).max() < 1e-10
        assert np.abs(fp.coframe @ fp.frame - np.eye(n)).max() < 1e-12


def test_frame_rejects_bad_metrics():
    with pytest.raises(ValueError):
        FramePack(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        FramePack(-np.eye(3))


def test_to_frame_round_trip():
    rng = np.random.default_rng(1)
    g = random_spd(rng, 4)
    fp = FramePack(g)
    t = rng.standard_normal((4, 4, 4))
    for variance in ("uuu", "udd", "ddd", "dud"):
        back = fp.from_frame(fp.to_frame(t, variance), variance)
        assert np.abs(back - t).max() < 1e-10


def test_inner_product_matches_metric_contraction():
    rng = np.random.default_rng(2)
    g = random_spd(rng, 3)
    ginv = np.linalg.inv(g)
    fp = FramePack(g)
    u, v = rng.standard_normal(3), rng.standard_normal(3)
    assert fp.inner(u, v, "u") == pytest.approx(u @ g @ v, rel=1e-12)
    assert fp.inner(u, v, "d") == pytest.approx(u @ ginv @ v, rel=1e-12)
    a = rng.standard_normal((3, 3))
    b = rng.standard_normal((3, 3))
    expect = np.einsum("ij,kl,ik,jl->", a, b, g, ginv)
    assert fp.inner(a, b, "ud") == pytest.approx(expect, rel=1e-11)


def test_inner_product_frame_invariant():
    rng = np.random.default_rng(3)
    g = random_spd(rng, 5)
    t = rng.standard_normal((5, 5))
    s = rng.standard_normal((5, 5))
    base = FramePack(g).inner(t, s, "ud")
    for seed in range(3):
        q = random_rotation(5, np.random.default_rng(seed))
        rotated = FramePack(g, rotation=q).inner(t, s, "ud")
        assert rotated == pytest.approx(base, rel=1e-11)


def test_musical_round_trip_and_lowering():
    rng = np.random.default_rng(4)
    g = random_spd(rng, 4)
    v = rng.standard_normal(4)
    lowered, variance = musical(v, "u", 0, g)
    assert variance == "d"
    assert np.abs(lowered - g @ v).max() < 1e-12
    raised, variance2 = musical(lowered, "d", 0, g)
    assert variance2 == "u"
    assert np.abs(raised - v).max() < 1e-10

    t = PointTensor(rng.standard_normal((4, 4)), "ud")
    round_trip = t.musical(1, g).musical(1, g)
    assert round_trip.variance == "ud"
    assert np.abs(round_trip.data - t.data).max() < 1e-10


def test_point_tensor_validates_variance():
    with pytest.raises(ValueError):
        PointTensor(np.zeros((2, 2)), "u")
    with pytest.raises(ValueError):
        PointTensor(np.zeros(2), "x")


def test_wedge2():
    rng = np.random.default_rng(5)
    a, b = rng.standard_normal(4), rng.standard_normal(4)
    w = wedge2(a, b)
    assert np.abs(w + w.T).max() < 1e-14
    x, y = rng.standard_normal(4), rng.standard_normal(4)
    assert x @ w @ y == pytest.approx((a @ x) * (b @ y) - (a @ y) * (b @ x), rel=1e-12)


def test_endo_form_conversion():
    j0 = np.array([[0.0, -1.0], [1.0, 0.0]])
    w = endo_to_form(j0, np.eye(2))
    assert np.abs(w - np.array([[0.0, -1.0], [1.0, 0.0]])).max() < 1e-14
    back = form_to_endo(w, np.eye(2))
    assert np.abs(back - j0).max() < 1e-14

    rng = np.random.default_rng(6)
    g = random_spd(rng, 4)
    a = rng.standard_normal((4, 4))
    skew_endo = np.linalg.inv(g) @ (a - a.T)
    w2 = endo_to_form(skew_endo, g)
    assert np.abs(w2 + w2.T).max() < 1e-12
    assert np.abs(form_to_endo(w2, g) - skew_endo).max() < 1e-10


def test_endo_form_conversion_rejects_non_skew():
    with pytest.raises(ValueError):
        endo_to_form(np.eye(3), np.eye(3))
    with pytest.raises(ValueError):
        form_to_endo(np.eye(3), np.eye(3))


def test_random_rotation_properties():
    rng = np.random.default_rng(7)
    q = random_rotation(6, rng)
    assert np.abs(q.T @ q - np.eye(6)).max() < 1e-12
    assert np.linalg.det(q) == pytest.approx(1.0, rel=1e-12)
    q2 = random_rotation(6, np.random.default_rng(8))
    assert np.abs(q - q2).max() > 1e-3
