"""Riemannian geometry at a point from jet data.

Levi-Civita connection, curvature in the convention

    R(X, Y) = nabla_[X,Y] - [nabla_X, nabla_Y],

which is the negative of the more common sign, covariant derivatives of
arbitrary tensor fields, and the connection (rough) Laplacian
``nabla*nabla Psi = -(nabla^2 Psi)_{e_i, e_i}``.

Index conventions, used everywhere downstream:
  * ``gamma[k, i, j]`` is Gamma^k_{ij}.
  * Covariant differentiation appends the direction as the last axis:
    ``(nabla T)[..., c] = (nabla_c T)[...]``.
  * ``riem[l, i, j, k]`` is ``(R(d_i, d_j) d_k)^l``; ``rflat[i, j, k, l]``
    lowers the first slot to the last: ``<R(d_i, d_j) d_k, d_l>``.
  * The Ricci tensor is the negative frame trace of the stored R, so the
    unit round sphere comes out with positive Ricci; ``SIGN_AUDIT`` below
    records this choice and the test that pins it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .jets import JetError, JetField, jet_einsum, jet_matrix_inverse, jet_space
from .tensor import FramePack

__all__ = [
    "GeometryError",
    "MetricField",
    "CurvaturePack",
    "SIGN_AUDIT",
    "christoffel_jets",
    "cov_derivative_jets",
    "curvature_jets",
    "second_cov_jets",
    "rough_laplacian_jets",
    "christoffel",
    "covariant_derivative",
    "curvature",
    "second_cov_derivative",
    "connection_laplacian",
]

SIGN_AUDIT = {
    "curvature_convention": "R(X,Y) = nabla_[X,Y] - [nabla_X, nabla_Y]",
    "ricci_definition": "Ric(X,Y) = -<R(e_i,X)Y,e_i> (negative frame trace "
    "of the stored R); fixed so the unit 6-sphere has Ric = 5 g",
    "pinned_by": "conformal curvature closed form and round-sphere audit",
}


class GeometryError(ValueError):
    """Geometric precondition failure: bad metric, degree too low, etc."""


class MetricField:
    """A metric given by an evaluator producing jets of g at a point.

    The evaluator maps a point (shape ``(dim,)``) to a ``(dim, dim)``
    :class:`JetField`.  Symmetry is required as jets; positive
    definiteness is required of the constant term.  Jets and Christoffel
    symbols are cached per point.
    """

    def __init__(self, dim: int, evaluator: Callable[[np.ndarray], JetField], degree: int = 4):
        self.dim = dim
        self.degree = degree
        self.evaluator = evaluator
        self._cache: dict[tuple, tuple[JetField, JetField, JetField]] = {}

    def space(self):
        return jet_space(self.dim, self.degree)

    def _key(self, p) -> tuple:
        return tuple(np.asarray(p, dtype=float).tolist())

    def jets(self, p) -> JetField:
        return self._entry(p)[0]

    def inverse_jets(self, p) -> JetField:
        return self._entry(p)[1]

    def christoffel_jets(self, p) -> JetField:
        return self._entry(p)[2]

    def _entry(self, p):
        key = self._key(p)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        p = np.asarray(p, dtype=float)
        if p.shape != (self.dim,):
            raise GeometryError(f"point must have shape ({self.dim},)")
        g = self.evaluator(p)
        if not isinstance(g, JetField) or g.shape != (self.dim, self.dim):
            raise GeometryError("metric evaluator must return a square jet field")
        sym_gap = np.abs(g.data - np.swapaxes(g.data, 0, 1)).max()
        if sym_gap > 1e-10 * (1.0 + np.abs(g.data).max()):
            raise GeometryError("metric jets are not symmetric")
        try:
            np.linalg.cholesky(g.value)
        except np.linalg.LinAlgError as err:
            raise GeometryError("metric is not positive definite at the point") from err
        ginv = jet_matrix_inverse(g)
        gamma = christoffel_jets(g, ginv)
        entry = (g, ginv, gamma)
        if len(self._cache) > 256:
            self._cache.clear()
        self._cache[key] = entry
        return entry

    def frame(self, p, rotation: np.ndarray | None = None) -> FramePack:
        return FramePack(self.jets(p).value, rotation=rotation)


def christoffel_jets(g: JetField, ginv: JetField | None = None) -> JetField:
    """Gamma^k_{ij} as jets, one degree below the metric jets."""
    if g.deg < 1:
        raise GeometryError("metric jets must have degree >= 1 for Christoffel symbols")
    if ginv is None:
        ginv = jet_matrix_inverse(g)
    dg = g.grad()  # dg[i, j, c] = d_c g_{ij}
    b = dg.transpose((1, 2, 0)) + dg.transpose((1, 0, 2)) - dg.transpose((2, 0, 1))
    # b[l, i, j] = d_i g_{jl} + d_j g_{il} - d_l g_{ij}
    return jet_einsum("kl,lij->kij", ginv, b) * 0.5


def cov_derivative_jets(t: JetField, variance: str, gamma: JetField) -> JetField:
    """Levi-Civita derivative of a tensor jet field.

    The direction is appended as a new last (covariant) axis; degree
    drops by one.
    """
    if len(variance) != len(t.shape) or any(c not in "ud" for c in variance):
        raise GeometryError(f"variance {variance!r} does not match shape {t.shape}")
    if t.deg < 1:
        raise GeometryError("tensor jets must have degree >= 1 to differentiate")
    letters = "abcdefgh"[: len(variance)]
    out = t.grad()
    for k, c in enumerate(variance):
        lab = letters[k]
        inner = letters[:k] + "m" + letters[k + 1 :]
        if c == "u":
            term = jet_einsum(f"{lab}ym,{inner}->{letters}y", gamma, t)
            out = out + term
        else:
            term = jet_einsum(f"my{lab},{inner}->{letters}y", gamma, t)
            out = out - term
    return out


@dataclass
class CurvatureJets:
    """Curvature data as jet fields, all in the stored sign convention."""

    riem: JetField   # [l, i, j, k] = (R(d_i, d_j) d_k)^l
    rflat: JetField  # [i, j, k, l] = <R(d_i, d_j) d_k, d_l>
    ricci: JetField  # [x, y], positive on round spheres
    scalar: JetField


def curvature_jets(g: JetField, gamma: JetField, ginv: JetField | None = None) -> CurvatureJets:
    if gamma.deg < 1:
        raise GeometryError("Christoffel jets must have degree >= 1 for curvature")
    if ginv is None:
        ginv = jet_matrix_inverse(g)
    dgamma = gamma.grad()  # [l, a, b, c] = d_c Gamma^l_{ab}
    t1 = dgamma.transpose((0, 3, 1, 2))  # d_i Gamma^l_{jk}
    t2 = dgamma.transpose((0, 1, 3, 2))  # d_j Gamma^l_{ik}
    q1 = jet_einsum("lim,mjk->lijk", gamma, gamma)
    q2 = jet_einsum("ljm,mik->lijk", gamma, gamma)
    riem = (t2 - t1) + (q2 - q1)
    rflat = jet_einsum("lm,mijk->ijkl", g, riem)
    ricci = jet_einsum("ab,axyb->xy", ginv, rflat) * (-1.0)
    scalar = jet_einsum("xy,xy->", ginv, ricci)
    return CurvatureJets(riem=riem, rflat=rflat, ricci=ricci, scalar=scalar)


def second_cov_jets(t: JetField, variance: str, gamma: JetField) -> JetField:
    """Iterated derivative; axes ``[..., y, x]`` hold ``(nabla^2 T)_{x,y}``.

    The trailing axis is the outer direction, so the array equals the
    true second covariant derivative (Hessian), Gamma-corrected in both
    slots.
    """
    first = cov_derivative_jets(t, variance, gamma)
    return cov_derivative_jets(first, variance + "d", gamma)


def rough_laplacian_jets(t: JetField, variance: str, gamma: JetField, ginv: JetField) -> JetField:
    """Connection Laplacian: -(nabla^2 T)_{e_i, e_i} as a jet field."""
    second = second_cov_jets(t, variance, gamma)
    letters = "abcdefgh"[: len(variance)]
    return jet_einsum(f"xy,{letters}yx->{letters}", ginv, second) * (-1.0)


# -- point-level public surface ---------------------------------------


@dataclass
class CurvaturePack:
    """Curvature evaluated at a point."""

    point: np.ndarray
    riem: np.ndarray          # (1,3): [l, i, j, k]
    rflat: np.ndarray         # (0,4): [i, j, k, l]
    ricci: np.ndarray         # (0,2)
    scalar: float
    nabla_riem: np.ndarray | None = None   # (1,4): [l, i, j, k, direction]

    @property
    def metadata(self) -> dict:
        return dict(SIGN_AUDIT)


def _field_jets(field, metric: MetricField, p) -> JetField:
    value = field(p) if callable(field) else field
    if not isinstance(value, JetField):
        raise GeometryError("tensor field evaluator must return a JetField")
    return value


def christoffel(metric: MetricField, p) -> np.ndarray:
    """Gamma^k_{ij} values at the point."""
    return metric.christoffel_jets(p).value


def covariant_derivative(field, variance: str, metric: MetricField, p) -> np.ndarray:
    """nabla T at a point; the new covariant slot comes last."""
    t = _field_jets(field, metric, p)
    return cov_derivative_jets(t, variance, metric.christoffel_jets(p)).value


def curvature(metric: MetricField, p, with_nabla_r: bool = False) -> CurvaturePack:
    g = metric.jets(p)
    ginv = metric.inverse_jets(p)
    gamma = metric.christoffel_jets(p)
    cj = curvature_jets(g, gamma, ginv)
    nabla_riem = None
    if with_nabla_r:
        if cj.riem.deg < 1:
            raise GeometryError("metric degree too low for nabla R")
        nabla_riem = cov_derivative_jets(cj.riem, "uddd", gamma).value
    return CurvaturePack(
        point=np.asarray(p, dtype=float),
        riem=cj.riem.value,
        rflat=cj.rflat.value,
        ricci=cj.ricci.value,
        scalar=float(cj.scalar.value),
        nabla_riem=nabla_riem,
    )


def second_cov_derivative(field, variance: str, metric: MetricField, p) -> np.ndarray:
    """(nabla^2 T) values; axes ``[..., y, x]`` hold the (x, y) slot pair."""
    t = _field_jets(field, metric, p)
    return second_cov_jets(t, variance, metric.christoffel_jets(p)).value


def connection_laplacian(field, variance: str, metric: MetricField, p) -> np.ndarray:
    """nabla*nabla T = -(nabla^2 T)_{e_i, e_i} at the point."""
    t = _field_jets(field, metric, p)
    try:
        lap = rough_laplacian_jets(
            t, variance, metric.christoffel_jets(p), metric.inverse_jets(p)
        )
    except JetError as err:
        raise GeometryError(f"insufficient jet degree: {err}") from err
    return lap.value
