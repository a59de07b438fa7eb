"""U(n)-structure layer: almost Hermitian structures and intrinsic torsion.

An almost Hermitian structure is a metric plus a compatible almost
complex structure J.  Its intrinsic torsion is

    xi_X Y = -1/2 J (nabla_X J) Y,

a one-form with values in the skew endomorphisms anti-commuting with J
(the u(n)-perp part of so(2n)).  The minimal U(n)-connection is
``nabla + xi``.  This module computes xi, splits it into the four
Gray-Hervella components, and differentiates tensors with the minimal
connection.

Layout conventions:
  * Coordinate jet fields: ``xi[k, x, y]`` is ``(xi_{d_x} d_y)^k``; the
    direction is the middle axis, matching ``gamma[k, i, j]``.
  * Frame arrays (plain numpy at a point): ``xi_frame[a, k, m]`` is
    ``<xi_{e_a} e_m, e_k>``, so ``xi_frame[a]`` is the matrix of the
    skew endomorphism ``xi_{e_a}`` in the orthonormal frame.
  * The Kahler form is ``omega(X, Y) = <X, JY>``; with the standard flat
    structure (J e_1 = e_2) this makes ``omega(e_1, e_2) = -1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .geometry import (
    CurvatureJets,
    GeometryError,
    MetricField,
    christoffel_jets,
    cov_derivative_jets,
    curvature_jets,
)
from .jets import JetField, jet_einsum, jet_matrix_inverse, jet_space
from .tensor import FramePack

__all__ = [
    "InternalConventionError",
    "AlmostHermitianStructure",
    "TorsionTensor",
    "StructureJets",
    "kahler_form",
    "intrinsic_torsion",
    "gray_hervella_decompose",
    "project_u_uperp",
    "lee_vector",
    "minimal_derivative",
    "minimal_derivative_jets",
    "connection_action_jets",
    "random_structure",
    "random_curved_structure",
    "random_j_values",
    "standard_j",
]

CHECK_TOL = 1e-9


class InternalConventionError(AssertionError):
    """A built-in cross-check failed; signals a sign or layout bug."""


def standard_j(n: int) -> np.ndarray:
    """Block-diagonal J_0 with 2x2 blocks [[0, -1], [1, 0]]."""
    j = np.zeros((2 * n, 2 * n))
    for k in range(n):
        j[2 * k, 2 * k + 1] = -1.0
        j[2 * k + 1, 2 * k] = 1.0
    return j


class AlmostHermitianStructure:
    """Metric plus compatible almost complex structure, as evaluators.

    ``j_evaluator`` maps a point to the (2n, 2n) jet field of J^i_j.
    Compatibility (J^2 = -Id and <JX, JY> = <X, Y>) is validated every
    time jets are assembled at a new point.
    """

    def __init__(self, metric: MetricField, j_evaluator: Callable[[np.ndarray], JetField], name: str = ""):
        if metric.dim % 2 != 0:
            raise GeometryError("almost Hermitian structures need even dimension")
        self.metric = metric
        self.j_evaluator = j_evaluator
        self.name = name
        self.dim = metric.dim
        self.n = metric.dim // 2
        self._cache: dict[tuple, "StructureJets"] = {}

    def structure_jets(self, p, rotation: np.ndarray | None = None) -> "StructureJets":
        key = (tuple(np.asarray(p, dtype=float).tolist()), None if rotation is None else rotation.tobytes())
        hit = self._cache.get(key)
        if hit is None:
            if len(self._cache) > 64:
                self._cache.clear()
            hit = StructureJets(self, np.asarray(p, dtype=float), rotation)
            self._cache[key] = hit
        return hit


@dataclass
class TorsionTensor:
    """Intrinsic torsion at a point, in orthonormal-frame components.

    ``xi[a]`` is the matrix of xi_{e_a}; the Gray-Hervella pieces have
    the same layout and sum to ``xi`` exactly.  ``lee_vector`` holds the
    frame components of xi_{e_i} e_i.
    """

    point: np.ndarray
    xi: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    xi3: np.ndarray
    xi4: np.ndarray
    lee_vector: np.ndarray
    frame: FramePack
    j_frame: np.ndarray

    @property
    def components(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return (self.xi1, self.xi2, self.xi3, self.xi4)

    def component_norms(self) -> np.ndarray:
        """Euclidean norms of (xi1, xi2, xi3, xi4) in frame components."""
        return np.array([np.sqrt(np.sum(c * c)) for c in self.components])


def _frame_xi4(xi_frame: np.ndarray, j_frame: np.ndarray, n: int) -> np.ndarray:
    """xi4 from the codifferential of omega, with a mandatory cross-check.

    Primary route: <xi4_X Y, JZ> = -(X_flat ^ d*omega (Y,Z)
    - JX_flat ^ J d*omega (Y,Z)) / (4(n-1)), evaluated on the frame with
    J theta (X) = -theta(JX).  Cross-check: 2(n-1) xi4_X Y =
    <X,Y> l - <l,Y> X - <JX,Y> Jl + <Jl,Y> JX with l the Lee vector.
    """
    m = 2 * n
    if n == 1:
        return np.zeros((m, m, m))
    ell = np.einsum("aka->k", xi_frame)
    jell = j_frame @ ell
    # d*omega in the frame follows from 2 l = -J (d*omega)^sharp
    theta = 2.0 * jell
    jtheta = -theta @ j_frame  # (J theta)(e_a) = -theta(J e_a)
    eye = np.eye(m)
    b3 = -(
        np.einsum("xy,z->xyz", eye, theta)
        - np.einsum("xz,y->xyz", eye, theta)
        - np.einsum("yx,z->xyz", j_frame, jtheta)
        + np.einsum("zx,y->xyz", j_frame, jtheta)
    ) / (4.0 * (n - 1))
    c3 = -np.einsum("xyz,zw->xyw", b3, j_frame)
    xi4 = np.transpose(c3, (0, 2, 1))

    alt = (
        np.einsum("am,k->akm", eye, ell)
        - np.einsum("m,ak->akm", ell, eye)
        - np.einsum("ma,k->akm", j_frame, jell)
        + np.einsum("m,ka->akm", jell, j_frame)
    ) / (2.0 * (n - 1))
    scale = 1.0 + np.abs(xi_frame).max()
    if np.abs(xi4 - alt).max() > CHECK_TOL * scale:
        raise InternalConventionError("xi4 routes disagree (torsion formula vs Lee-vector expression)")
    return xi4


def _frame_gray_hervella(xi_frame: np.ndarray, j_frame: np.ndarray, n: int):
    m = 2 * n
    if n == 1:
        z = np.zeros((m, m, m))
        return z, z.copy(), z.copy(), z.copy()
    p_xi = np.einsum("ba,bkc,cm->akm", j_frame, xi_frame, j_frame)
    a_part = 0.5 * (xi_frame - p_xi)
    b_part = xi_frame - a_part
    t3 = np.transpose(a_part, (0, 2, 1))  # t3[x, y, z] = <a_{e_x} e_y, e_z>
    psi = (t3 + np.transpose(t3, (1, 2, 0)) + np.transpose(t3, (2, 0, 1))) / 3.0
    xi1 = np.transpose(psi, (0, 2, 1))
    xi2 = a_part - xi1
    xi4 = _frame_xi4(xi_frame, j_frame, n)
    xi3 = b_part - xi4
    return xi1, xi2, xi3, xi4


def connection_action_jets(t: JetField, variance: str, coef: JetField) -> JetField:
    """Derivation action of a connection-coefficient field on a tensor.

    ``coef[k, x, m]`` acts like Gamma^k_{xm}: plus on upper slots, minus
    on lower slots, direction appended as a new last axis.
    """
    letters = "abcdefgh"[: len(variance)]
    out = None
    for k, c in enumerate(variance):
        lab = letters[k]
        inner = letters[:k] + "m" + letters[k + 1 :]
        if c == "u":
            term = jet_einsum(f"{lab}ym,{inner}->{letters}y", coef, t)
        else:
            term = jet_einsum(f"my{lab},{inner}->{letters}y", coef, t) * (-1.0)
        out = term if out is None else out + term
    if out is None:
        # scalars carry no slots; the action vanishes
        space = t.space
        out = JetField.zeros(space, t.shape + (space.dim,), deg=min(t.deg, coef.deg))
    return out


class StructureJets:
    """All jet and frame data of a structure at one point, lazily built.

    Everything downstream (torsion, curvature couplings, diagnostics)
    reads from this object, so each quantity is computed once per point.
    """

    def __init__(self, structure: AlmostHermitianStructure, point: np.ndarray, rotation: np.ndarray | None = None):
        self.structure = structure
        self.point = point
        self.rotation = rotation
        self.dim = structure.dim
        self.n = structure.n

    # -- metric layer ---------------------------------------------------

    @cached_property
    def g(self) -> JetField:
        return self.structure.metric.jets(self.point)

    @cached_property
    def ginv(self) -> JetField:
        return self.structure.metric.inverse_jets(self.point)

    @cached_property
    def gamma(self) -> JetField:
        return self.structure.metric.christoffel_jets(self.point)

    @cached_property
    def curv(self) -> CurvatureJets:
        return curvature_jets(self.g, self.gamma, self.ginv)

    @cached_property
    def framepack(self) -> FramePack:
        return FramePack(self.g.value, rotation=self.rotation)

    # -- J layer --------------------------------------------------------

    @cached_property
    def J(self) -> JetField:
        j = self.structure.j_evaluator(self.point)
        if not isinstance(j, JetField) or j.shape != (self.dim, self.dim):
            raise GeometryError("J evaluator must return a square jet field")
        space = j.space
        nc1 = space.nc_at(min(1, j.deg))
        jsq = jet_einsum("ik,kj->ij", j, j)
        target = np.zeros((self.dim, self.dim, nc1))
        target[..., 0] = -np.eye(self.dim)
        if np.abs(jsq.data[..., :nc1] - target).max() > 1e-10:
            raise GeometryError("J^2 = -Id fails at the point")
        compat = jet_einsum("ki,kl->il", j, jet_einsum("kl,lj->kj", self.g, j))
        cgap = np.abs(compat.data[..., :nc1] - self.g.data[..., :nc1]).max()
        if cgap > 1e-10 * (1.0 + np.abs(self.g.value).max()):
            raise GeometryError("J is not compatible with the metric at the point")
        return j

    @cached_property
    def omega(self) -> JetField:
        """Kahler form omega_{ij} = g_{ik} J^k_j."""
        return jet_einsum("ik,kj->ij", self.g, self.J)

    @cached_property
    def nabla_J(self) -> JetField:
        return cov_derivative_jets(self.J, "ud", self.gamma)

    @cached_property
    def nabla_omega(self) -> JetField:
        return cov_derivative_jets(self.omega, "dd", self.gamma)

    # -- torsion layer ----------------------------------------------------

    @cached_property
    def xi(self) -> JetField:
        """xi[k, x, y] = (xi_{d_x} d_y)^k = -1/2 (J nabla_{d_x} J)(d_y)^k.

        Cross-validated against 2 <xi_X Y, Z> = -(nabla_X omega)(Y, JZ)
        coefficient by coefficient; disagreement aborts.
        """
        xi = jet_einsum("km,myx->kxy", self.J, self.nabla_J) * (-0.5)
        lhs = jet_einsum("zk,kxy->xyz", self.g, xi) * 2.0
        rhs = jet_einsum("ymx,mz->xyz", self.nabla_omega, self.J) * (-1.0)
        scale = 1.0 + np.abs(lhs.data).max()
        if np.abs(lhs.data - rhs.data).max() > CHECK_TOL * scale:
            raise InternalConventionError("xi from nabla J disagrees with nabla omega route")
        return xi

    @cached_property
    def nabla_xi(self) -> JetField:
        return cov_derivative_jets(self.xi, "udd", self.gamma)

    @cached_property
    def lee_field(self) -> JetField:
        """Lee vector field xi_{e_i} e_i = g^{xy} xi[., x, y]."""
        return jet_einsum("xy,kxy->k", self.ginv, self.xi)

    @cached_property
    def gh_fields(self) -> tuple[JetField, JetField, JetField, JetField]:
        """Gray-Hervella components as coordinate jet fields."""
        space = self.g.space
        xi = self.xi
        if self.n == 1:
            z = JetField.zeros(space, xi.shape, deg=xi.deg)
            return z, z, z, z
        t1 = jet_einsum("kbc,bx->kxc", xi, self.J)
        p_xi = jet_einsum("kxc,cy->kxy", t1, self.J)
        a_part = (xi - p_xi) * 0.5
        b_part = xi - a_part
        a3 = jet_einsum("zk,kxy->xyz", self.g, a_part)
        psi = (a3 + a3.transpose((1, 2, 0)) + a3.transpose((2, 0, 1))) * (1.0 / 3.0)
        xi1 = jet_einsum("kz,xyz->kxy", self.ginv, psi)
        xi2 = a_part - xi1

        ell = self.lee_field
        jell = jet_einsum("km,m->k", self.J, ell)
        ell_flat = jet_einsum("ky,k->y", self.g, ell)
        jell_flat = jet_einsum("ky,k->y", self.g, jell)
        eye = JetField.constants(space, np.eye(self.dim))
        jg = jet_einsum("ym,mx->yx", self.g, self.J)  # <J d_x, d_y>
        t_a = jet_einsum("xy,k->kxy", self.g, ell)
        t_b = jet_einsum("y,kx->kxy", ell_flat, eye)
        t_c = jet_einsum("yx,k->kxy", jg, jell)
        t_d = jet_einsum("y,kx->kxy", jell_flat, self.J)
        xi4 = (t_a - t_b - t_c + t_d) * (1.0 / (2.0 * (self.n - 1)))
        xi3 = b_part - xi4
        return xi1, xi2, xi3, xi4

    # -- frame layer ------------------------------------------------------

    @cached_property
    def j_frame(self) -> np.ndarray:
        return self.framepack.to_frame(self.J.value, "ud")

    @cached_property
    def xi_frame(self) -> np.ndarray:
        """xi_frame[a, k, m] = <xi_{e_a} e_m, e_k>."""
        return np.transpose(self.framepack.to_frame(self.xi.value, "udd"), (1, 0, 2))

    @cached_property
    def gh_frame(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return _frame_gray_hervella(self.xi_frame, self.j_frame, self.n)

    @cached_property
    def lee_frame(self) -> np.ndarray:
        ell = np.einsum("aka->k", self.xi_frame)
        # independent route: 2 xi_{e_i} e_i = -J (d*omega)^sharp
        nom = self.framepack.to_frame(self.nabla_omega.value, "ddd")
        dstar = -np.einsum("iai->a", nom)
        alt = -0.5 * (self.j_frame @ dstar)
        scale = 1.0 + np.abs(ell).max()
        if np.abs(ell - alt).max() > CHECK_TOL * scale:
            raise InternalConventionError("Lee vector routes disagree (frame trace vs d*omega)")
        return ell

    @cached_property
    def minimal_connection_validated(self) -> bool:
        """Contract for the xi-action sign: the minimal connection kills
        g, J and omega.  Checked once per point, then trusted."""
        for t, variance in ((self.g, "dd"), (self.J, "ud"), (self.omega, "dd")):
            nabla_u = cov_derivative_jets(t, variance, self.gamma) + connection_action_jets(t, variance, self.xi)
            if np.abs(nabla_u.data).max() > CHECK_TOL * (1.0 + np.abs(t.data).max()):
                raise InternalConventionError(
                    "minimal connection does not stabilise the structure tensors"
                )
        return True

    def torsion(self) -> TorsionTensor:
        xi1, xi2, xi3, xi4 = self.gh_frame
        return TorsionTensor(
            point=self.point,
            xi=self.xi_frame,
            xi1=xi1,
            xi2=xi2,
            xi3=xi3,
            xi4=xi4,
            lee_vector=self.lee_frame,
            frame=self.framepack,
            j_frame=self.j_frame,
        )


# -- public point operations ---------------------------------------------


def kahler_form(structure: AlmostHermitianStructure, p) -> JetField:
    """omega = <., J.> as a jet field (full available degree)."""
    return structure.structure_jets(p).omega


def intrinsic_torsion(structure: AlmostHermitianStructure, p) -> TorsionTensor:
    return structure.structure_jets(p).torsion()


def gray_hervella_decompose(structure: AlmostHermitianStructure, p, xi_frame: np.ndarray | None = None):
    """Split xi into (xi1, xi2, xi3, xi4) in frame components."""
    sj = structure.structure_jets(p)
    if xi_frame is None:
        return sj.gh_frame
    return _frame_gray_hervella(np.asarray(xi_frame, dtype=float), sj.j_frame, sj.n)


def project_u_uperp(a: np.ndarray, j: np.ndarray, tol: float = 1e-9):
    """Split a skew endomorphism into J-commuting and J-anti-commuting parts."""
    a = np.asarray(a, dtype=float)
    j = np.asarray(j, dtype=float)
    if np.abs(a + a.T).max() > tol * (1.0 + np.abs(a).max()):
        raise ValueError("input endomorphism is not skew")
    a_u = 0.5 * (a - j @ a @ j)
    a_perp = 0.5 * (a + j @ a @ j)
    return a_u, a_perp


def lee_vector(structure: AlmostHermitianStructure, p) -> np.ndarray:
    """Frame components of xi_{e_i} e_i, computed by two routes."""
    return structure.structure_jets(p).lee_frame


def minimal_derivative_jets(t: JetField, variance: str, sj: StructureJets) -> JetField:
    sj.minimal_connection_validated
    return cov_derivative_jets(t, variance, sj.gamma) + connection_action_jets(t, variance, sj.xi)


def minimal_derivative(field, variance: str, structure: AlmostHermitianStructure, p) -> np.ndarray:
    """Minimal-connection derivative at a point, direction axis last."""
    sj = structure.structure_jets(p)
    t = field(p) if callable(field) else field
    if not isinstance(t, JetField):
        raise GeometryError("tensor field evaluator must return a JetField")
    return minimal_derivative_jets(t, variance, sj).value


# -- structure factories ---------------------------------------------------


def _pack_jets(space, entries) -> JetField:
    entries = np.asarray(entries, dtype=object)
    data = np.zeros(entries.shape + (space.ncoeff,))
    for idx in np.ndindex(entries.shape):
        data[idx] = entries[idx].coeffs
    return JetField(space, data)


def _givens_product(space, point, pairs, params, amplitude) -> JetField:
    """Product of Givens rotations with trigonometric angle fields.

    Each angle is amplitude * sum of unit-frequency sine terms, so the
    rotation field is 2 pi periodic and exactly orthogonal as jets.
    """
    from .jets import cos as jcos
    from .jets import sin as jsin

    m = space.dim
    x = JetField.variables(space, point)
    q = JetField.constants(space, np.eye(m))
    for (i, j), (coefs, phases) in zip(pairs, params):
        theta = None
        for k in range(m):
            term = jsin(x.entry(k) + float(phases[k])) * float(coefs[k] * amplitude)
            theta = term if theta is None else theta + term
        c, s = jcos(theta), jsin(theta)
        zero = theta * 0.0
        entries = [[zero] * m for _ in range(m)]
        for r in range(m):
            entries[r][r] = zero + 1.0
        entries[i][i] = c
        entries[j][j] = c
        entries[i][j] = s * (-1.0)
        entries[j][i] = s
        q = jet_einsum("ik,kj->ij", q, _pack_jets(space, entries))
    return q


def _rotation_params(rng, m, count):
    pairs = [(k, k + 1) for k in range(m - 1)] + [(0, m - 1)]
    pairs = pairs[:count] if count <= len(pairs) else pairs
    params = [
        (rng.uniform(-1.0, 1.0, size=m), rng.uniform(0.0, 2.0 * np.pi, size=m))
        for _ in pairs
    ]
    return pairs, params


def random_structure(seed: int, n: int, amplitude: float = 0.3, degree: int = 4) -> AlmostHermitianStructure:
    """Flat metric with J = Q J_0 Q^T for a rotation field Q.

    Q is a product of Givens rotations with 2 pi periodic trigonometric
    angles, so all structure invariants hold exactly as jets; amplitude
    zero gives the flat Kahler structure.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    m = 2 * n
    rng = np.random.default_rng(seed)
    pairs, params = _rotation_params(rng, m, m)
    j0 = standard_j(n)

    def j_evaluator(p):
        space = jet_space(m, degree)
        q = _givens_product(space, p, pairs, params, amplitude)
        qj = jet_einsum("ik,kj->ij", q, JetField.constants(space, j0))
        return jet_einsum("ik,jk->ij", qj, q)

    def g_evaluator(p):
        return JetField.constants(jet_space(m, degree), np.eye(m))

    metric = MetricField(m, g_evaluator, degree=degree)
    return AlmostHermitianStructure(metric, j_evaluator, name=f"random-flat-{seed}")


def random_j_values(seed: int, n: int, points, amplitude: float = 0.3) -> np.ndarray:
    """Plain J values of ``random_structure(seed, n, amplitude)`` at many points.

    Consumes the seed exactly as ``random_structure`` does, so the
    returned matrices agree with the jet evaluator to roundoff.  Input
    shape (..., 2n), output (..., 2n, 2n).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    m = 2 * n
    rng = np.random.default_rng(seed)
    pairs, params = _rotation_params(rng, m, m)
    pts = np.asarray(points, dtype=float)
    if pts.shape[-1] != m:
        raise ValueError("points must have 2n coordinates")
    lead = pts.shape[:-1]
    pts = pts.reshape(-1, m)
    q = np.broadcast_to(np.eye(m), (pts.shape[0], m, m)).copy()
    for (i, j), (coefs, phases) in zip(pairs, params):
        theta = amplitude * (np.sin(pts + phases) @ coefs)
        c, s = np.cos(theta), np.sin(theta)
        giv = np.broadcast_to(np.eye(m), q.shape).copy()
        giv[:, i, i] = c
        giv[:, j, j] = c
        giv[:, i, j] = -s
        giv[:, j, i] = s
        q = q @ giv
    out = q @ standard_j(n) @ np.swapaxes(q, -1, -2)
    return out.reshape(lead + (m, m))


def random_curved_structure(
    seed: int,
    n: int,
    amplitude: float = 0.3,
    metric_amplitude: float = 0.25,
    degree: int = 4,
) -> AlmostHermitianStructure:
    """Curved compatible pair from a single invertible matrix field A.

    J = A J_0 A^{-1} and g = A^{-T} A^{-1} are compatible for any
    invertible A; here A is a Givens product times a diagonal of
    exponentials, so curvature is generically nonzero while all the
    structure invariants still hold exactly as jets.
    """
    from .jets import exp as jexp
    from .jets import sin as jsin

    if n < 1:
        raise ValueError("n must be at least 1")
    m = 2 * n
    rng = np.random.default_rng(seed)
    pairs, params = _rotation_params(rng, m, m - 1)
    mu_coefs = rng.uniform(-1.0, 1.0, size=(m, m)) * metric_amplitude
    mu_phases = rng.uniform(0.0, 2.0 * np.pi, size=(m, m))
    j0 = standard_j(n)

    def a_jets(space, p):
        q = _givens_product(space, p, pairs, params, amplitude)
        x = JetField.variables(space, p)
        diag = []
        for i in range(m):
            mu = None
            for k in range(m):
                term = jsin(x.entry(k) + float(mu_phases[i, k])) * float(mu_coefs[i, k])
                mu = term if mu is None else mu + term
            diag.append(jexp(mu))
        rows = [[diag[i] if i == j else diag[i] * 0.0 for j in range(m)] for i in range(m)]
        return jet_einsum("ik,kj->ij", q, _pack_jets(space, rows))

    def g_evaluator(p):
        space = jet_space(m, degree)
        ainv = jet_matrix_inverse(a_jets(space, p))
        return jet_einsum("ki,kj->ij", ainv, ainv)

    def j_evaluator(p):
        space = jet_space(m, degree)
        a = a_jets(space, p)
        aj = jet_einsum("ik,kj->ij", a, JetField.constants(space, j0))
        return jet_einsum("ik,kj->ij", aj, jet_matrix_inverse(a))

    metric = MetricField(m, g_evaluator, degree=degree)
    return AlmostHermitianStructure(metric, j_evaluator, name=f"random-curved-{seed}")
