"""Catalog of example geometries with documented expected diagnostics.

Each factory returns a GeometrySpec: the data needed to rebuild the
structure (metric kind, J kind, conformal factor, chart box) plus
metadata recording what the diagnostics should find.  The test suite
asserts the metadata, so the catalog is self-verifying.

Charts:
  * ``flat`` and ``conformal`` live on R^{2n}; with ``periodic=True``
    the chart is read as a 2 pi torus in every coordinate.
  * ``hopf`` is the cylinder metric |z|^{-2} delta on an annulus chart
    of C^n minus the origin; its compact quotient is S^1 x S^{2n-1}.
  * ``s6`` is the round six-sphere inside the imaginary octonions with
    J_p = p x (cross product), on the graph chart p = (x, sqrt(1-|x|^2)).

Canonical structures on 3-symmetric spaces other than the six-sphere
(which are quasi-Kahler with parallel torsion) are not modelled here;
the six-sphere is the built-in representative.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .exprlang import EvalError, Expr, eval_expr, parse
from .geometry import GeometryError, MetricField
from .jets import JetField, jet_einsum, jet_matrix_inverse, jet_space
from .jets import exp as jet_exp
from .unstruct import AlmostHermitianStructure, standard_j

__all__ = [
    "GeometrySpec",
    "flat_kahler",
    "conformal",
    "hopf_chart",
    "s6_nearly_kahler",
    "build_structure",
    "sample_points",
    "spec_from_config",
    "octonion_structure_constants",
    "cross7",
    "octonion_multiply",
    "CATALOG_NAMES",
    "FANO_TRIPLES",
]

CATALOG_NAMES = ("flat", "conformal", "hopf", "s6")

# Cayley basis: e_a e_b = e_c with sign +1 for each cyclic rotation of
# these index triples (1-based), -1 for the transpositions.
FANO_TRIPLES = (
    (1, 2, 4),
    (2, 3, 5),
    (3, 4, 6),
    (4, 5, 7),
    (5, 6, 1),
    (6, 7, 2),
    (7, 1, 3),
)


def octonion_structure_constants() -> np.ndarray:
    """Constants f with e_i e_j = -delta_ij + sum_k f[i, j, k] e_k (0-based)."""
    f = np.zeros((7, 7, 7))
    for triple in FANO_TRIPLES:
        a, b, c = (t - 1 for t in triple)
        for i, j, k in ((a, b, c), (b, c, a), (c, a, b)):
            f[i, j, k] = 1.0
            f[j, i, k] = -1.0
    return f


_OCT = octonion_structure_constants()


def cross7(x, y) -> np.ndarray:
    """Cross product of imaginary octonions, x x y = (xy - yx)/2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.einsum("ijk,i,j->k", _OCT, x, y)


def octonion_multiply(x, y) -> np.ndarray:
    """Full octonion product; components are (scalar, imaginary part)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (8,) or y.shape != (8,):
        raise ValueError("octonions have eight components")
    out = np.empty(8)
    out[0] = x[0] * y[0] - x[1:] @ y[1:]
    out[1:] = x[0] * y[1:] + y[0] * x[1:] + cross7(x[1:], y[1:])
    return out


_METRIC_KINDS = ("flat", "conformal", "s6_round")
_J_KINDS = ("standard", "s6_cross")


@dataclass(frozen=True)
class GeometrySpec:
    """Recipe for one catalog geometry.

    ``domain`` is a box of per-coordinate (lo, hi) bounds.  ``metadata``
    holds expected diagnostics: the class label and which section
    residuals should vanish or stay visibly nonzero.
    """

    name: str
    n: int
    metric_kind: str
    j_kind: str = "standard"
    conformal_factor: Expr | None = None
    domain: tuple[tuple[float, float], ...] = ()
    periodic: bool = False
    degree: int = 4
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.metric_kind not in _METRIC_KINDS:
            raise GeometryError(f"unknown metric kind {self.metric_kind!r}")
        if self.j_kind not in _J_KINDS:
            raise GeometryError(f"unknown J kind {self.j_kind!r}")
        if self.n < 1:
            raise GeometryError("n must be at least 1")
        if self.metric_kind == "conformal" and self.conformal_factor is None:
            raise GeometryError("conformal geometries need a factor expression")
        if len(self.domain) != self.dim:
            raise GeometryError("domain box must have one (lo, hi) pair per coordinate")
        for lo, hi in self.domain:
            if not lo < hi:
                raise GeometryError("domain bounds must satisfy lo < hi")
        if self.degree < 2:
            raise GeometryError("jet degree must be at least 2")
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))

    @property
    def dim(self) -> int:
        return 2 * self.n


# -- low-discrepancy sampling ----------------------------------------------

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53)


def _halton_value(index: int, base: int) -> float:
    out, frac = 0.0, 1.0 / base
    while index > 0:
        index, digit = divmod(index, base)
        out += digit * frac
        frac /= base
    return out


def _halton_box(domain, count: int, start: int, predicate=None) -> np.ndarray:
    dim = len(domain)
    if dim > len(_PRIMES):
        raise GeometryError("domain dimension exceeds the supported Halton bases")
    lo = np.array([b[0] for b in domain])
    hi = np.array([b[1] for b in domain])
    pts: list[np.ndarray] = []
    idx = start
    tried = 0
    while len(pts) < count:
        u = np.array([_halton_value(idx, _PRIMES[k]) for k in range(dim)])
        p = lo + (hi - lo) * u
        idx += 1
        tried += 1
        if tried > 1000 * (count + 1):
            raise GeometryError("domain predicate rejected too many candidates")
        if predicate is None or predicate(p):
            pts.append(p)
    return np.array(pts)


def _domain_predicate(spec: GeometrySpec):
    if spec.metric_kind == "s6_round":
        return lambda p: float(p @ p) < 0.88**2
    if spec.name == "hopf":
        return lambda p: 0.5 < np.sqrt(float(p @ p)) < 2.0
    return None


def sample_points(spec: GeometrySpec, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic low-discrepancy points inside the spec domain."""
    if count < 1:
        raise GeometryError("need at least one sample point")
    return _halton_box(spec.domain, count, seed * 9973 + 1, _domain_predicate(spec))


# -- factories ---------------------------------------------------------------

_ALL_SECTION_RESIDUALS = (
    "harmonic",
    "harmonic_map",
    "vert_geodesic",
    "horiz_geodesic",
    "flatness",
    "superflat",
    "torsion_iv_a",
    "torsion_iv_b",
)


def flat_kahler(n: int, degree: int = 4) -> GeometrySpec:
    """Flat metric with the standard block J on R^{2n}."""
    if n < 1:
        raise GeometryError("flat_kahler needs n >= 1")
    box = ((-np.pi, np.pi),) * (2 * n)
    meta = {
        "expected_class": "Kähler",
        "expected_zero": _ALL_SECTION_RESIDUALS,
        "expected_nonzero": (),
    }
    return GeometrySpec(
        name="flat",
        n=n,
        metric_kind="flat",
        domain=box,
        periodic=True,
        degree=degree,
        metadata=meta,
    )


def _eval_factor(expr: Expr, p, dim: int, degree: int = 1):
    try:
        jet = eval_expr(expr, p, dim, degree)
    except EvalError as exc:
        raise GeometryError(f"conformal factor fails on the domain: {exc}") from exc
    if not np.all(np.isfinite(jet.coeffs)):
        raise GeometryError("conformal factor is not finite on the domain")
    return jet


def conformal(
    n: int,
    f,
    periodic: bool = False,
    degree: int = 4,
    name: str = "conformal",
    domain: tuple[tuple[float, float], ...] | None = None,
) -> GeometrySpec:
    """Conformally flat metric e^f delta with the standard J.

    ``f`` is an expression tree or source text in x1..x_{2n}.  The factor
    is probed on the domain for finiteness, and with ``periodic=True``
    also for 2 pi periodicity in every coordinate; either failure raises
    before a spec is issued.  A factor with vanishing gradient leaves the
    structure Kahler; otherwise it is locally conformal Kahler (pure W4).
    """
    if n < 2:
        raise GeometryError("conformal needs n >= 2")
    expr = parse(f) if isinstance(f, str) else f
    dim = 2 * n
    box = domain if domain is not None else ((-np.pi, np.pi),) * dim
    probes = _halton_box(box, 8, 1)
    grad_mag = 0.0
    for p in probes:
        jet = _eval_factor(expr, p, dim)
        grad_mag = max(grad_mag, float(np.abs(jet.coeffs[1 : 1 + dim]).max()))
    if periodic:
        for p in probes[:4]:
            base = _eval_factor(expr, p, dim).value
            for i in range(dim):
                q = p.copy()
                q[i] += 2.0 * np.pi
                if abs(_eval_factor(expr, q, dim).value - base) > 1e-9 * (1.0 + abs(base)):
                    raise GeometryError(
                        "conformal factor is not 2 pi periodic in every coordinate"
                    )
    if grad_mag < 1e-12:
        meta = {
            "expected_class": "Kähler",
            "expected_zero": _ALL_SECTION_RESIDUALS,
            "expected_nonzero": (),
        }
    else:
        meta = {
            "expected_class": "W4",
            "expected_zero": ("harmonic", "torsion_iv_a", "torsion_iv_b"),
            "expected_nonzero": (),
        }
    return GeometrySpec(
        name=name,
        n=n,
        metric_kind="conformal",
        conformal_factor=expr,
        domain=box,
        periodic=periodic,
        degree=degree,
        metadata=meta,
    )


def hopf_chart(n: int, degree: int = 4) -> GeometrySpec:
    """Cylinder metric |z|^{-2} delta on an annulus chart of C^n minus 0.

    Conformal with factor f = -log(|z|^2).  The box keeps 0.5 < |z| < 2,
    so the chart stays on the cylinder whose compact quotient is the
    Hopf manifold; the sphere factor has unit radius, recorded in the
    metadata as the constant in the curvature display.
    """
    if n < 2:
        raise GeometryError("hopf_chart needs n >= 2")
    dim = 2 * n
    src = "-log(" + " + ".join(f"x{i}^2" for i in range(1, dim + 1)) + ")"
    box = ((0.3, 1.9 / np.sqrt(dim)),) * dim
    spec = conformal(n, src, periodic=False, degree=degree, name="hopf", domain=box)
    meta = {
        "expected_class": "W4",
        "expected_zero": ("harmonic", "harmonic_map", "torsion_iv_a", "torsion_iv_b"),
        "expected_nonzero": ("vert_geodesic", "horiz_geodesic"),
        "sphere_curvature_k": 1.0,
    }
    return GeometrySpec(
        name="hopf",
        n=n,
        metric_kind="conformal",
        conformal_factor=spec.conformal_factor,
        domain=box,
        periodic=False,
        degree=degree,
        metadata=meta,
    )


def s6_nearly_kahler(degree: int = 4) -> GeometrySpec:
    """Round six-sphere with J from the octonion cross product."""
    box = ((-0.35, 0.35),) * 6
    meta = {
        "expected_class": "W1",
        "expected_zero": ("harmonic", "harmonic_map", "vert_geodesic"),
        "expected_nonzero": ("flatness",),
        "einstein_ricci_factor": 5.0,
        "laplacian_omega_factor": 4.0,
        "psi_norm_sq": 144.0,
    }
    return GeometrySpec(
        name="s6",
        n=3,
        metric_kind="s6_round",
        j_kind="s6_cross",
        domain=box,
        degree=degree,
        metadata=meta,
    )


# -- structure assembly ------------------------------------------------------

_s6_cache: dict[tuple, tuple[JetField, JetField]] = {}


def _s6_chart(p, degree: int) -> tuple[JetField, JetField]:
    p = np.asarray(p, dtype=float)
    key = (tuple(p.tolist()), degree)
    hit = _s6_cache.get(key)
    if hit is None:
        if len(_s6_cache) > 128:
            _s6_cache.clear()
        hit = _s6_chart_build(p, degree)
        _s6_cache[key] = hit
    return hit


def _s6_chart_build(p: np.ndarray, degree: int) -> tuple[JetField, JetField]:
    """Metric and J jets of the graph chart x -> (x, sqrt(1 - |x|^2)).

    The embedding differential D has identity rows over -x_i/w; the
    pullback metric is D^T D and the almost complex structure is the
    pullback of cross multiplication by the sphere point.
    """
    if p.shape != (6,):
        raise GeometryError("six-sphere chart points live in R^6")
    if float(p @ p) >= 0.9**2:
        raise GeometryError("six-sphere chart point outside the coordinate ball")
    space = jet_space(6, degree)
    x = JetField.variables(space, p)
    sq = jet_einsum("i,i->", x, x)
    w = (sq * (-1.0) + JetField.constants(space, 1.0)).fn("sqrt")
    winv = w.fn("reciprocal")

    d = JetField.zeros(space, (7, 6))
    for i in range(6):
        d.data[i, i, 0] = 1.0
    d.data[6] = (jet_einsum("i,->i", x, winv) * (-1.0)).data

    embed = JetField.zeros(space, (7,))
    embed.data[:6] = x.data
    embed.data[6] = w.data

    cross_op = jet_einsum("abc,a->cb", JetField.constants(space, _OCT), embed)
    g = jet_einsum("ai,aj->ij", d, d)
    md = jet_einsum("cb,bj->cj", cross_op, d)
    dtmd = jet_einsum("ai,aj->ij", d, md)
    jmat = jet_einsum("ik,kj->ij", jet_matrix_inverse(g), dtmd)
    return g, jmat


def build_structure(spec: GeometrySpec) -> AlmostHermitianStructure:
    """Materialize a spec as metric and J evaluators."""
    dim = spec.dim
    degree = spec.degree

    if spec.metric_kind == "flat":

        def g_eval(p):
            return JetField.constants(jet_space(dim, degree), np.eye(dim))

    elif spec.metric_kind == "conformal":
        expr = spec.conformal_factor

        def g_eval(p):
            space = jet_space(dim, degree)
            fj = _eval_factor(expr, p, dim, degree)
            factor = JetField.from_jet(jet_exp(fj))
            return jet_einsum("ij,->ij", JetField.constants(space, np.eye(dim)), factor)

    else:

        def g_eval(p):
            return _s6_chart(p, degree)[0]

    if spec.j_kind == "standard":
        j0 = standard_j(spec.n)

        def j_eval(p):
            return JetField.constants(jet_space(dim, degree), j0)

    else:

        def j_eval(p):
            return _s6_chart(p, degree)[1]

    metric = MetricField(dim, g_eval, degree=degree)
    return AlmostHermitianStructure(metric, j_eval, name=spec.name)


def spec_from_config(cfg: Mapping) -> GeometrySpec:
    """Build a GeometrySpec from a JSON-style mapping.

    Dispatches on the ``type`` field over the catalog names; unknown
    fields are rejected so misspelled options cannot silently pass.
    """
    if not isinstance(cfg, Mapping) or "type" not in cfg:
        raise GeometryError("geometry config must be a mapping with a 'type' field")
    kind = cfg["type"]
    degree = int(cfg.get("jet_degree", 4))
    if kind == "flat":
        allowed = {"type", "n", "jet_degree"}
        spec = flat_kahler(int(cfg.get("n", 2)), degree=degree)
    elif kind == "conformal":
        allowed = {"type", "n", "f", "periodic", "jet_degree"}
        if "f" not in cfg:
            raise GeometryError("conformal geometry needs an 'f' expression")
        spec = conformal(
            int(cfg.get("n", 2)),
            str(cfg["f"]),
            periodic=bool(cfg.get("periodic", False)),
            degree=degree,
        )
    elif kind == "hopf":
        allowed = {"type", "n", "jet_degree"}
        spec = hopf_chart(int(cfg.get("n", 2)), degree=degree)
    elif kind == "s6":
        allowed = {"type", "jet_degree"}
        spec = s6_nearly_kahler(degree=degree)
    else:
        raise GeometryError(f"unknown catalog geometry {kind!r}")
    extra = set(cfg) - allowed
    if extra:
        raise GeometryError(f"unknown geometry config fields: {sorted(extra)}")
    return spec
