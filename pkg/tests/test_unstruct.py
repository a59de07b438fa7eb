import numpy as np
import pytest
from helpers import conformal_metric_field, trig_scalar

from torsionflow.geometry import GeometryError, MetricField
from torsionflow.jets import JetField, jet_space
from torsionflow.tensor import random_rotation
from torsionflow.unstruct import (
    AlmostHermitianStructure,
    connection_action_jets,
    gray_hervella_decompose,
    intrinsic_torsion,
    kahler_form,
    lee_vector,
    minimal_derivative,
    project_u_uperp,
    random_curved_structure,
    random_structure,
    standard_j,
)


def flat_kahler(n, degree=4):
    m = 2 * n

    def g_eval(p):
        return JetField.constants(jet_space(m, degree), np.eye(m))

    def j_eval(p):
        return JetField.constants(jet_space(m, degree), standard_j(n))

    return AlmostHermitianStructure(MetricField(m, g_eval, degree=degree), j_eval)


def conformal_structure(n, f_of_x, degree=4):
    m = 2 * n
    metric = conformal_metric_field(m, f_of_x, degree=degree)

    def j_eval(p):
        return JetField.constants(jet_space(m, degree), standard_j(n))

    return AlmostHermitianStructure(metric, j_eval)


def f_example(space, p):
    return trig_scalar(space, p, [1.0, 0.0, 2.0, 0.0, -1.0, 0.0][: space.dim], 0.4, 0.6)


def test_flat_kahler_form_sign():
    s = flat_kahler(2)
    omega = kahler_form(s, np.zeros(4)).value
    # omega(X, Y) = <X, JY> with J e1 = e2 makes omega(e1, e2) = -1
    expect = np.zeros((4, 4))
    expect[0, 1] = -1.0
    expect[1, 0] = 1.0
    expect[2, 3] = -1.0
    expect[3, 2] = 1.0
    assert np.abs(omega - expect).max() < 1e-14


def test_kahler_form_compatibility_properties():
    s = random_structure(3, 3)
    p = np.array([0.2, -0.4, 0.1, 0.7, -0.2, 0.5])
    sj = s.structure_jets(p)
    omega = sj.omega.value
    jv = sj.J.value
    assert np.abs(omega + omega.T).max() < 1e-12
    assert np.abs(jv.T @ omega @ jv - omega).max() < 1e-11


def test_flat_kahler_torsion_vanishes():
    s = flat_kahler(2)
    t = intrinsic_torsion(s, np.array([0.3, -0.2, 0.5, 0.1]))
    assert np.abs(t.xi).max() < 1e-14
    assert np.abs(t.lee_vector).max() < 1e-14


def test_random_structure_invariants():
    for seed, n in ((0, 2), (1, 3)):
        s = random_structure(seed, n)
        rng = np.random.default_rng(seed + 10)
        p = rng.uniform(-0.5, 0.5, size=2 * n)
        sj = s.structure_jets(p)
        jv = sj.J.value
        assert np.abs(jv @ jv + np.eye(2 * n)).max() < 1e-12
        t = sj.torsion()
        m = 2 * n
        # each xi_{e_a} is skew and anti-commutes with J (frame rep)
        jf = t.j_frame
        for a in range(m):
            assert np.abs(t.xi[a] + t.xi[a].T).max() < 1e-10
            assert np.abs(t.xi[a] @ jf + jf @ t.xi[a]).max() < 1e-10
        total = t.xi1 + t.xi2 + t.xi3 + t.xi4
        assert np.abs(total - t.xi).max() < 1e-12
        comps = t.components
        scale = 1.0 + np.abs(t.xi).max() ** 2
        for i in range(4):
            for j in range(i + 1, 4):
                assert abs(np.sum(comps[i] * comps[j])) < 1e-9 * scale


def test_n2_has_no_w1_w3():
    for seed in range(3):
        s = random_structure(seed, 2)
        p = np.random.default_rng(seed).uniform(-0.6, 0.6, size=4)
        t = intrinsic_torsion(s, p)
        norms = t.component_norms()
        assert norms[0] < 1e-9
        assert norms[2] < 1e-9


def test_generic_n3_has_all_components():
    s = random_structure(7, 3)
    t = intrinsic_torsion(s, np.array([0.3, -0.1, 0.45, 0.2, -0.5, 0.15]))
    assert (t.component_norms() > 1e-3).all()


def test_amplitude_zero_is_flat_kahler():
    s = random_structure(5, 2, amplitude=0.0)
    p = np.array([0.2, 0.4, -0.3, 0.6])
    assert np.abs(s.structure_jets(p).J.value - standard_j(2)).max() < 1e-14
    assert np.abs(intrinsic_torsion(s, p).xi).max() < 1e-13


def test_curved_structure_invariants():
    s = random_curved_structure(2, 2)
    p = np.array([0.1, -0.3, 0.25, 0.4])
    sj = s.structure_jets(p)
    jv = sj.J.value
    g = sj.g.value
    assert np.abs(jv @ jv + np.eye(4)).max() < 1e-11
    assert np.abs(jv.T @ g @ jv - g).max() < 1e-11
    # curvature should be genuinely nonzero for the identity battery
    assert np.abs(sj.curv.riem.value).max() > 1e-3
    sj.minimal_connection_validated


def test_conformal_structure_is_pure_w4():
    s = conformal_structure(3, f_example)
    rng = np.random.default_rng(4)
    for _ in range(2):
        p = rng.uniform(-0.5, 0.5, size=6)
        t = intrinsic_torsion(s, p)
        norms = t.component_norms()
        assert norms[0] < 1e-9
        assert norms[1] < 1e-9
        assert norms[2] < 1e-9
        assert norms[3] > 1e-3
        # W3+W4 characterisation: xi_{JX} JY = xi_X Y
        jf = t.j_frame
        pxi = np.einsum("ba,bkc,cm->akm", jf, t.xi, jf)
        assert np.abs(pxi - t.xi).max() < 1e-9


def test_conformal_lee_vector_closed_form():
    n = 3
    s = conformal_structure(n, f_example)
    rng = np.random.default_rng(9)
    for _ in range(2):
        p = rng.uniform(-0.5, 0.5, size=2 * n)
        sj = s.structure_jets(p)
        ell = lee_vector(s, p)
        space = jet_space(2 * n, 4)
        fj = JetField(space, f_example(space, p).coeffs.reshape(space.ncoeff))
        df = fj.grad().value
        grad_conf = np.exp(-float(fj.value)) * df
        expect = sj.framepack.to_frame((n - 1) / 2.0 * grad_conf, "u")
        assert np.abs(ell - expect).max() < 1e-9


def test_project_u_uperp():
    n = 3
    j = standard_j(n)
    a_u, a_perp = project_u_uperp(j, j)
    assert np.abs(a_u - j).max() < 1e-14
    assert np.abs(a_perp).max() < 1e-14

    rng = np.random.default_rng(11)
    raw = rng.standard_normal((2 * n, 2 * n))
    skew = raw - raw.T
    a_u, a_perp = project_u_uperp(skew, j)
    assert np.abs(a_u + a_perp - skew).max() < 1e-12
    assert np.abs(a_u @ j - j @ a_u).max() < 1e-12
    assert np.abs(a_perp @ j + j @ a_perp).max() < 1e-12
    assert abs(np.sum(a_u * a_perp)) < 1e-10 * (1.0 + np.abs(skew).max() ** 2)
    # anti-commuting input passes through
    back_u, back_perp = project_u_uperp(a_perp, j)
    assert np.abs(back_u).max() < 1e-12
    assert np.abs(back_perp - a_perp).max() < 1e-12

    with pytest.raises(ValueError):
        project_u_uperp(np.eye(2 * n), j)


def test_minimal_connection_stabilises_structure():
    s = random_curved_structure(6, 3, amplitude=0.25, metric_amplitude=0.2)
    p = np.array([0.15, -0.2, 0.3, 0.05, -0.4, 0.25])
    sj = s.structure_jets(p)
    assert sj.minimal_connection_validated
    nabla_u_omega = minimal_derivative(lambda q: s.structure_jets(q).omega, "dd", s, p)
    assert np.abs(nabla_u_omega).max() < 1e-10


def test_minimal_connection_equals_levi_civita_when_kahler():
    s = flat_kahler(2)
    p = np.array([0.1, 0.2, 0.3, 0.4])

    def field(q):
        space = jet_space(4, 4)
        x = JetField.variables(space, q)
        entries = np.zeros((4, space.ncoeff))
        for i in range(4):
            entries[i] = (x.entry(i) * x.entry((i + 1) % 4)).coeffs
        return JetField(space, entries)

    nabla_u = minimal_derivative(field, "u", s, p)
    partials = field(p).grad().value
    assert np.abs(nabla_u - partials).max() < 1e-13


def test_gh_fields_match_frame_decomposition():
    s = random_curved_structure(8, 3, amplitude=0.2)
    p = np.array([0.2, 0.1, -0.3, 0.4, 0.0, -0.1])
    sj = s.structure_jets(p)
    frame_comps = sj.gh_frame
    for field, frame_arr in zip(sj.gh_fields, frame_comps):
        converted = np.transpose(sj.framepack.to_frame(field.value, "udd"), (1, 0, 2))
        assert np.abs(converted - frame_arr).max() < 1e-9


def test_torsion_norm_frame_invariant():
    s = random_structure(13, 3)
    p = np.array([0.4, -0.2, 0.1, 0.3, 0.6, -0.5])
    base = s.structure_jets(p).torsion()
    norm0 = np.sum(base.xi * base.xi)
    comp0 = base.component_norms()
    for seed in range(2):
        q = random_rotation(6, np.random.default_rng(seed))
        t = s.structure_jets(p, rotation=q).torsion()
        assert np.sum(t.xi * t.xi) == pytest.approx(norm0, rel=1e-9)
        assert np.allclose(t.component_norms(), comp0, rtol=1e-8, atol=1e-10)


def test_extended_norm_matches_coordinate_contraction():
    s = random_curved_structure(14, 2)
    p = np.array([0.3, 0.2, -0.1, 0.5])
    sj = s.structure_jets(p)
    t = sj.torsion()
    frame_norm = np.sum(t.xi * t.xi)
    g = sj.g.value
    ginv = np.linalg.inv(g)
    xi = sj.xi.value
    coord = np.einsum("kxy,lab,kl,xa,yb->", xi, xi, g, ginv, ginv)
    assert frame_norm == pytest.approx(coord, rel=1e-10)


def test_gray_hervella_public_entry():
    s = random_structure(4, 2)
    p = np.array([0.1, 0.1, 0.2, -0.3])
    parts = gray_hervella_decompose(s, p)
    t = intrinsic_torsion(s, p)
    for a, b in zip(parts, t.components):
        assert np.abs(a - b).max() < 1e-12


def test_odd_dimension_rejected():
    def g_eval(p):
        return JetField.constants(jet_space(3, 4), np.eye(3))

    with pytest.raises(GeometryError):
        AlmostHermitianStructure(MetricField(3, g_eval), lambda p: None)


def test_bad_j_rejected():
    def g_eval(p):
        return JetField.constants(jet_space(4, 4), np.eye(4))

    def bad_j(p):
        return JetField.constants(jet_space(4, 4), np.diag([1.0, -1.0, 1.0, -1.0]))

    s = AlmostHermitianStructure(MetricField(4, g_eval), bad_j)
    with pytest.raises(GeometryError):
        s.structure_jets(np.zeros(4)).J


def test_connection_action_on_scalar_is_zero():
    s = random_structure(1, 2)
    p = np.zeros(4)
    sj = s.structure_jets(p)
    space = sj.g.space
    x = JetField.variables(space, p)
    scalar = JetField(space, (x.entry(0) * x.entry(1)).coeffs.reshape(space.ncoeff))
    act = connection_action_jets(scalar, "", sj.xi)
    assert np.abs(act.data).max() == 0.0
