import numpy as np
import pytest
from helpers import (
    conformal_metric_field,
    flat_metric_field,
    random_metric_field,
    random_tensor_evaluator,
    sphere6_metric_field,
    trig_scalar,
)

from torsionflow.geometry import (
    GeometryError,
    MetricField,
    christoffel,
    connection_laplacian,
    cov_derivative_jets,
    covariant_derivative,
    curvature,
    second_cov_derivative,
)
from torsionflow.jets import JetField, jet_space


def test_flat_metric_trivial():
    m = flat_metric_field(3)
    p = np.array([0.2, -0.1, 0.4])
    assert np.abs(christoffel(m, p)).max() == 0.0
    pack = curvature(m, p)
    assert np.abs(pack.riem).max() == 0.0
    assert np.abs(pack.ricci).max() == 0.0
    assert pack.scalar == 0.0


def test_flat_covariant_derivative_is_partials():
    m = flat_metric_field(2)
    t = random_tensor_evaluator(3, 2, (2, 2))
    p = np.array([0.3, -0.6])
    nabla = covariant_derivative(t, "ud", m, p)
    partials = t(p).grad().value
    assert np.abs(nabla - partials).max() < 1e-14


def test_christoffel_symmetric_in_lower_slots():
    m = random_metric_field(0, 3)
    p = np.array([0.1, 0.2, -0.3])
    gam = christoffel(m, p)
    assert np.abs(gam - np.swapaxes(gam, 1, 2)).max() < 1e-13


def test_conformal_christoffel_closed_form():
    # g = e^f delta:  Gamma^k_ij = (d_i f delta^k_j + d_j f delta^k_i - d^k f delta_ij) / 2
    n = 4

    def f_of_x(space, p):
        return trig_scalar(space, p, [1.0, 0.0, 2.0, -1.0], 0.3, 0.7)

    m = conformal_metric_field(n, f_of_x)
    rng = np.random.default_rng(5)
    for _ in range(3):
        p = rng.uniform(-0.5, 0.5, size=n)
        gam = christoffel(m, p)
        space = jet_space(n, 4)
        fj = JetField(space, f_of_x(space, p).coeffs.reshape(space.ncoeff))
        df = fj.grad().value
        eye = np.eye(n)
        expect = 0.5 * (
            np.einsum("i,kj->kij", df, eye)
            + np.einsum("j,ki->kij", df, eye)
            - np.einsum("k,ij->kij", df, eye)
        )
        assert np.abs(gam - expect).max() < 1e-12


def test_metric_compatibility():
    m = random_metric_field(1, 3)
    p = np.array([0.15, -0.25, 0.05])
    nabla_g = covariant_derivative(lambda q: m.jets(q), "dd", m, p)
    assert np.abs(nabla_g).max() < 1e-12


def test_leibniz_rule():
    n = 3
    m = random_metric_field(2, n)
    p = np.array([-0.2, 0.3, 0.1])
    space = jet_space(n, 4)
    f = trig_scalar(space, p, [1.0, -1.0, 2.0], 0.1, 0.8)
    x_eval = random_tensor_evaluator(4, n, (n,))
    x = x_eval(p)
    fx = x * JetField(space, f.coeffs.reshape(space.ncoeff))
    gamma = m.christoffel_jets(p)
    lhs = cov_derivative_jets(fx, "u", gamma).value
    fj = JetField(space, f.coeffs.reshape(space.ncoeff))
    rhs = (
        np.einsum("c,a->ac", fj.grad().value, x.value)
        + f.value * cov_derivative_jets(x, "u", gamma).value
    )
    assert np.abs(lhs - rhs).max() < 1e-12


def test_curvature_symmetries_random_geometry():
    m = random_metric_field(6, 4)
    rng = np.random.default_rng(7)
    for _ in range(2):
        p = rng.uniform(-0.4, 0.4, size=4)
        pack = curvature(m, p)
        rf = pack.rflat
        # skew in the vector-pair slots and in the lowered pair
        assert np.abs(rf + np.transpose(rf, (1, 0, 2, 3))).max() < 1e-9
        assert np.abs(rf + np.transpose(rf, (0, 1, 3, 2))).max() < 1e-9
        # pair interchange
        assert np.abs(rf - np.transpose(rf, (2, 3, 0, 1))).max() < 1e-8
        # first Bianchi: cyclic sum over (i, j, k)
        cyc = pack.riem + np.transpose(pack.riem, (0, 2, 3, 1)) + np.transpose(pack.riem, (0, 3, 1, 2))
        assert np.abs(cyc).max() < 1e-8


def test_second_bianchi():
    m = random_metric_field(8, 3)
    p = np.array([0.2, -0.1, 0.3])
    pack = curvature(m, p, with_nabla_r=True)
    nr = pack.nabla_riem
    cyc = (
        nr
        + np.transpose(nr, (0, 2, 4, 3, 1))
        + np.transpose(nr, (0, 4, 1, 3, 2))
    )
    assert np.abs(cyc).max() < 1e-7


def test_conformal_curvature_closed_form():
    # the audit that pins the stored sign convention
    n = 4

    def f_of_x(space, p):
        return trig_scalar(space, p, [1.0, 2.0, 0.0, -1.0], 0.2, 0.6)

    m = conformal_metric_field(n, f_of_x)
    rng = np.random.default_rng(11)
    for _ in range(3):
        p = rng.uniform(-0.5, 0.5, size=n)
        pack = curvature(m, p)
        space = jet_space(n, 4)
        fj = JetField(space, f_of_x(space, p).coeffs.reshape(space.ncoeff))
        fval = float(fj.value)
        df = fj.grad().value
        hess = fj.grad().grad().value
        ell = hess - 0.5 * np.outer(df, df)
        df2 = float(df @ df)
        eye = np.eye(n)
        lhs = -2.0 * np.exp(-fval) * pack.rflat
        rhs = (
            np.einsum("ik,jl->ijkl", ell, eye)
            + np.einsum("jl,ik->ijkl", ell, eye)
            - np.einsum("il,jk->ijkl", ell, eye)
            - np.einsum("jk,il->ijkl", ell, eye)
            + 0.5 * df2 * (np.einsum("ik,jl->ijkl", eye, eye) - np.einsum("jk,il->ijkl", eye, eye))
        )
        scale = 1.0 + np.abs(rhs).max()
        assert np.abs(lhs - rhs).max() / scale < 1e-8


def test_sphere6_ricci_is_five_g():
    m = sphere6_metric_field()
    rng = np.random.default_rng(13)
    for _ in range(2):
        p = rng.uniform(-0.3, 0.3, size=6)
        pack = curvature(m, p)
        g = m.jets(p).value
        assert np.abs(pack.ricci - 5.0 * g).max() < 1e-7
        assert pack.scalar == pytest.approx(30.0, abs=1e-7)


def test_flat_laplacian_is_sum_of_second_partials():
    m = flat_metric_field(2)
    p = np.array([0.5, -0.2])

    def psi(q):
        space = jet_space(2, 4)
        x = JetField.variables(space, q)
        x1, x2 = x.entry(0), x.entry(1)
        val = x1 * x1 * x2 + x2 * x2
        return JetField(space, val.coeffs.reshape(space.ncoeff))

    lap = connection_laplacian(psi, "", m, p)
    # psi = x1^2 x2 + x2^2: sum of pure second partials is 2 x2 + 2
    assert lap == pytest.approx(-(2.0 * p[1] + 2.0), abs=1e-12)


def test_laplacian_of_metric_vanishes():
    m = random_metric_field(14, 3)
    p = np.array([0.1, 0.0, -0.2])
    lap = connection_laplacian(lambda q: m.jets(q), "dd", m, p)
    assert np.abs(lap).max() < 1e-11


def test_hessian_slot_order():
    # (nabla^2 psi)_{x,y} for scalar psi is the coordinate Hessian minus
    # Gamma^m_{xy} d_m psi; trailing axis is the outer direction x
    m = random_metric_field(15, 2)
    p = np.array([0.2, 0.3])
    psi = random_tensor_evaluator(16, 2, ())
    h = second_cov_derivative(psi, "", m, p)
    space = jet_space(2, 4)
    pj = psi(p)
    dd = pj.grad().grad().value  # dd[y, x] = d_x d_y psi
    dpsi = pj.grad().value
    gam = christoffel(m, p)
    expect = dd - np.einsum("mxy,m->yx", gam, dpsi)
    assert np.abs(h - expect).max() < 1e-12
    assert np.abs(h - h.T).max() < 1e-12


def test_curvature_metadata_mentions_convention():
    pack = curvature(flat_metric_field(2), np.zeros(2))
    assert "Ric" in pack.metadata["ricci_definition"]


def test_geometry_errors():
    def bad_spd(p):
        return JetField.constants(jet_space(2, 4), -np.eye(2))

    with pytest.raises(GeometryError):
        MetricField(2, bad_spd).jets(np.zeros(2))

    def asym(p):
        return JetField.constants(jet_space(2, 4), np.array([[1.0, 0.5], [0.0, 1.0]]))

    with pytest.raises(GeometryError):
        MetricField(2, asym).jets(np.zeros(2))

    shallow = random_metric_field(17, 2, degree=2)
    with pytest.raises(GeometryError):
        curvature(shallow, np.zeros(2), with_nabla_r=True)
