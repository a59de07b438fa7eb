"""Truncated multivariate Taylor arithmetic.

A jet of degree K at a base point stores, for every multi-index alpha with
|alpha| <= K, the Taylor coefficient

    coeff[alpha] = (d^alpha f) / alpha!

of a scalar function f.  Sums, products and the elementary analytic
functions act exactly on these coefficients, so a jet of a composite
expression carries the exact partial derivatives of the composition up to
order K (no finite-difference error; the only noise is roundoff).

Two layers live here:

* ``Jet`` -- one scalar jet with operator overloads, the user-facing type.
* ``JetField`` -- a dense tensor whose entries are jets, stored as a single
  ndarray with a trailing coefficient axis.  Chart geometry (metrics,
  Christoffel symbols, curvature) is built on this layer; ``jet_einsum``
  contracts tensor axes while convolving coefficient axes.

Multi-indices are ordered by total degree, then lexicographically, so a
truncation to lower degree is a prefix slice.  A ``JetField`` tracks the
degree up to which its coefficients are valid: differentiation lowers that
degree by one, and mixed-degree products are valid only up to the smaller
operand degree.  Coefficients beyond the valid degree are kept at exactly
zero.
"""

from __future__ import annotations

import functools
import math
from typing import Callable, Iterable

import numpy as np

__all__ = [
    "JetError",
    "JetDomainError",
    "JetSpace",
    "jet_space",
    "Jet",
    "jet_constant",
    "jet_variable",
    "extract_partial",
    "jet_arith",
    "sin",
    "cos",
    "exp",
    "log",
    "sqrt",
    "JetField",
    "jet_einsum",
]

MAX_DIM = 8
MAX_DEGREE = 8


class JetError(ValueError):
    """Raised on structural misuse of jets (dimension/degree mismatch)."""


class JetDomainError(JetError):
    """Raised when an elementary function is evaluated outside its domain."""


def _compositions(total: int, slots: int) -> Iterable[tuple[int, ...]]:
    """All multi-indices of the given total degree, lexicographic order."""
    if slots == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, slots - 1):
            yield (head,) + tail


class JetSpace:
    """Index tables for jets of a fixed dimension and degree.

    Instances are cached; use :func:`jet_space` rather than constructing
    directly.  The heavy pieces are the per-degree multiplication tables:
    flat arrays of coefficient-index pairs grouped by output index, so a
    truncated product is one gather, one elementwise multiply and one
    ``np.add.reduceat``.
    """

    def __init__(self, dim: int, degree: int):
        if not 1 <= dim <= MAX_DIM:
            raise JetError(f"jet dimension must be in 1..{MAX_DIM}, got {dim}")
        if not 0 <= degree <= MAX_DEGREE:
            raise JetError(f"jet degree must be in 0..{MAX_DEGREE}, got {degree}")
        self.dim = dim
        self.degree = degree

        indices: list[tuple[int, ...]] = []
        for d in range(degree + 1):
            indices.extend(sorted(_compositions(d, dim)))
        self.multi_indices: tuple[tuple[int, ...], ...] = tuple(indices)
        self.index: dict[tuple[int, ...], int] = {
            a: i for i, a in enumerate(indices)
        }
        self.ncoeff = len(indices)
        self._order = np.array([sum(a) for a in indices], dtype=np.int64)
        # ncoeff of each truncation degree: prefix lengths
        self.nc_level = np.searchsorted(self._order, np.arange(degree + 2), side="left")
        # nc_level[d] = number of indices with |alpha| < d ... adjust: we want <= d
        self.nc_level = np.array(
            [int(np.searchsorted(self._order, d, side="right")) for d in range(degree + 1)]
        )

        self._tables: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._build_tables()

        # differentiation maps: index of alpha + e_c and the factor alpha_c + 1
        n_lower = self.nc_level[degree - 1] if degree >= 1 else 0
        self._diff_idx = np.zeros((dim, n_lower), dtype=np.int64)
        self._diff_coef = np.zeros((dim, n_lower))
        for i in range(n_lower):
            a = indices[i]
            for c in range(dim):
                shifted = list(a)
                shifted[c] += 1
                self._diff_idx[c, i] = self.index[tuple(shifted)]
                self._diff_coef[c, i] = a[c] + 1

    def _build_tables(self) -> None:
        order = self._order
        nc = self.ncoeff
        ia_all: list[int] = []
        ib_all: list[int] = []
        out_all: list[int] = []
        for ia, a in enumerate(self.multi_indices):
            da = order[ia]
            for ib, b in enumerate(self.multi_indices):
                if da + order[ib] > self.degree:
                    continue
                ia_all.append(ia)
                ib_all.append(ib)
                out_all.append(self.index[tuple(x + y for x, y in zip(a, b))])
        ia_arr = np.array(ia_all, dtype=np.int64)
        ib_arr = np.array(ib_all, dtype=np.int64)
        out_arr = np.array(out_all, dtype=np.int64)
        pair_deg = order[ia_arr] + order[ib_arr]
        for d in range(self.degree + 1):
            keep = pair_deg <= d
            ia_d, ib_d, out_d = ia_arr[keep], ib_arr[keep], out_arr[keep]
            srt = np.argsort(out_d, kind="stable")
            ia_d, ib_d, out_d = ia_d[srt], ib_d[srt], out_d[srt]
            ncd = int(self.nc_level[d])
            starts = np.searchsorted(out_d, np.arange(ncd), side="left")
            self._tables[d] = (ia_d, ib_d, starts)

    def nc_at(self, d: int) -> int:
        return int(self.nc_level[d])

    def table(self, d: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self._tables[d]

    def __repr__(self) -> str:  # pragma: no cover
        return f"JetSpace(dim={self.dim}, degree={self.degree})"


@functools.lru_cache(maxsize=None)
def jet_space(dim: int, degree: int) -> JetSpace:
    return JetSpace(dim, degree)


# ---------------------------------------------------------------------------
# raw-coefficient kernels; data has shape tensor_shape + (ncoeff,)
# ---------------------------------------------------------------------------


def _mul_data(space: JetSpace, a: np.ndarray, b: np.ndarray, d: int) -> np.ndarray:
    ia, ib, starts = space.table(d)
    prod = a[..., ia] * b[..., ib]
    out_trunc = np.add.reduceat(prod, starts, axis=-1)
    out = np.zeros(np.broadcast_shapes(a.shape[:-1], b.shape[:-1]) + (space.ncoeff,))
    out[..., : space.nc_at(d)] = out_trunc
    return out


def _diff_data(space: JetSpace, a: np.ndarray, c: int, new_deg: int) -> np.ndarray:
    out = np.zeros_like(a)
    idx = space._diff_idx[c]
    out[..., : idx.size] = a[..., idx] * space._diff_coef[c]
    out[..., space.nc_at(new_deg) :] = 0.0
    return out


def _trunc_tail(space: JetSpace, data: np.ndarray, d: int) -> np.ndarray:
    data[..., space.nc_at(d) :] = 0.0
    return data


_SERIES_FNS: dict[str, Callable[[np.ndarray, int], list[np.ndarray]]] = {}


def _series(name: str):
    def deco(fn):
        _SERIES_FNS[name] = fn
        return fn

    return deco


@_series("sin")
def _sin_coeffs(c: np.ndarray, deg: int) -> list[np.ndarray]:
    table = [np.sin(c), np.cos(c), -np.sin(c), -np.cos(c)]
    return [table[k % 4] / math.factorial(k) for k in range(deg + 1)]


@_series("cos")
def _cos_coeffs(c: np.ndarray, deg: int) -> list[np.ndarray]:
    table = [np.cos(c), -np.sin(c), -np.cos(c), np.sin(c)]
    return [table[k % 4] / math.factorial(k) for k in range(deg + 1)]


@_series("exp")
def _exp_coeffs(c: np.ndarray, deg: int) -> list[np.ndarray]:
    e = np.exp(c)
    return [e / math.factorial(k) for k in range(deg + 1)]


@_series("log")
def _log_coeffs(c: np.ndarray, deg: int) -> list[np.ndarray]:
    if np.any(c <= 0.0):
        raise JetDomainError("log of a jet with non-positive constant term")
    out = [np.log(c)]
    for k in range(1, deg + 1):
        out.append((-1.0) ** (k - 1) / (k * c**k))
    return out


@_series("sqrt")
def _sqrt_coeffs(c: np.ndarray, deg: int) -> list[np.ndarray]:
    if np.any(c <= 0.0):
        raise JetDomainError("sqrt of a jet with non-positive constant term")
    out = [np.sqrt(c)]
    for k in range(1, deg + 1):
        out.append(out[-1] * (1.5 - k) / (k * c))
    return out


@_series("reciprocal")
def _recip_coeffs(c: np.ndarray, deg: int) -> list[np.ndarray]:
    if np.any(c == 0.0):
        raise JetDomainError("division by a jet with zero constant term")
    return [(-1.0) ** k / c ** (k + 1) for k in range(deg + 1)]


def _apply_series(space: JetSpace, data: np.ndarray, deg: int, name: str) -> np.ndarray:
    """Compose an analytic function with a jet via the Taylor series at the
    constant term, evaluated in Horner form on the nilpotent part."""
    coeffs = _SERIES_FNS[name](np.asarray(data[..., 0]), deg)
    h = data.copy()
    h[..., 0] = 0.0
    out = np.zeros_like(data)
    out[..., 0] = coeffs[deg]
    for k in range(deg - 1, -1, -1):
        out = _mul_data(space, out, h, deg)
        out[..., 0] += coeffs[k]
    return out


# ---------------------------------------------------------------------------
# scalar jets
# ---------------------------------------------------------------------------


class Jet:
    """A scalar jet: dense Taylor coefficients of one function value.

    Arithmetic requires both operands to live in the same ``JetSpace``;
    mixing dimensions or degrees raises :class:`JetError`.  Plain numbers
    broadcast as constants.
    """

    __slots__ = ("space", "coeffs")

    def __init__(self, space: JetSpace, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.ncoeff,):
            raise JetError(
                f"coefficient array must have shape ({space.ncoeff},), got {coeffs.shape}"
            )
        self.space = space
        self.coeffs = coeffs

    # -- constructors -------------------------------------------------

    @staticmethod
    def constant(value: float, dim: int, degree: int) -> "Jet":
        sp = jet_space(dim, degree)
        c = np.zeros(sp.ncoeff)
        c[0] = value
        return Jet(sp, c)

    @staticmethod
    def variable(i: int, value: float, dim: int, degree: int) -> "Jet":
        sp = jet_space(dim, degree)
        if not 0 <= i < dim:
            raise JetError(f"variable index {i} out of range for dimension {dim}")
        c = np.zeros(sp.ncoeff)
        c[0] = value
        if degree >= 1:
            unit = tuple(1 if k == i else 0 for k in range(dim))
            c[sp.index[unit]] = 1.0
        return Jet(sp, c)

    # -- accessors ----------------------------------------------------

    @property
    def value(self) -> float:
        return float(self.coeffs[0])

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def degree(self) -> int:
        return self.space.degree

    def coeff(self, alpha: tuple[int, ...]) -> float:
        try:
            return float(self.coeffs[self.space.index[tuple(alpha)]])
        except KeyError:
            raise JetError(f"multi-index {alpha} not stored at degree {self.degree}")

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {a: float(v) for a, v in zip(self.space.multi_indices, self.coeffs)}

    def partial(self, alpha: tuple[int, ...]) -> float:
        """The partial derivative d^alpha f, i.e. coeff * alpha!."""
        fac = 1.0
        for k in alpha:
            fac *= math.factorial(k)
        return self.coeff(alpha) * fac

    # -- arithmetic ---------------------------------------------------

    def _coerce(self, other) -> "Jet":
        if isinstance(other, Jet):
            if other.space is not self.space:
                raise JetError(
                    "jets from different spaces: "
                    f"dim/degree ({other.dim},{other.degree}) vs ({self.dim},{self.degree})"
                )
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Jet.constant(float(other), self.dim, self.degree)
        return NotImplemented  # type: ignore[return-value]

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return Jet(self.space, self.coeffs + o.coeffs)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return Jet(self.space, self.coeffs - o.coeffs)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return Jet(self.space, o.coeffs - self.coeffs)

    def __neg__(self):
        return Jet(self.space, -self.coeffs)

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Jet(self.space, self.coeffs * float(other))
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return Jet(self.space, _mul_data(self.space, self.coeffs, o.coeffs, self.degree))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            if other == 0:
                raise ZeroDivisionError("jet divided by zero scalar")
            return Jet(self.space, self.coeffs / float(other))
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        recip = _apply_series(self.space, o.coeffs, self.degree, "reciprocal")
        return Jet(self.space, _mul_data(self.space, self.coeffs, recip, self.degree))

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return o / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, np.integer)):
            raise JetError("jet exponent must be an integer")
        return _int_pow(self, int(exponent))

    def __repr__(self) -> str:  # pragma: no cover
        return f"Jet(dim={self.dim}, degree={self.degree}, value={self.value:g})"


def _int_pow(base: Jet, n: int) -> Jet:
    if n < 0:
        return 1.0 / _int_pow(base, -n)
    result = Jet.constant(1.0, base.dim, base.degree)
    acc = base
    while n:
        if n & 1:
            result = result * acc
        acc = acc * acc
        n >>= 1
    return result


def jet_constant(value: float, dim: int, degree: int) -> Jet:
    return Jet.constant(value, dim, degree)


def jet_variable(i: int, value: float, dim: int, degree: int) -> Jet:
    return Jet.variable(i, value, dim, degree)


def extract_partial(jet: Jet, alpha: tuple[int, ...]) -> float:
    return jet.partial(alpha)


def _unary(name: str):
    def fn(jet: Jet) -> Jet:
        return Jet(jet.space, _apply_series(jet.space, jet.coeffs, jet.degree, name))

    fn.__name__ = name
    fn.__doc__ = f"Elementwise {name} of a jet."
    return fn


sin = _unary("sin")
cos = _unary("cos")
exp = _unary("exp")
log = _unary("log")
sqrt = _unary("sqrt")

_ARITH_OPS: dict[str, Callable] = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "div": lambda a, b: a / b,
    "neg": lambda a: -a,
    "sin": sin,
    "cos": cos,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
    "pow": lambda a, n: a**n,
}


def jet_arith(op: str, *args):
    """Named-operation dispatcher over jets (same table the evaluator uses)."""
    try:
        fn = _ARITH_OPS[op]
    except KeyError:
        raise JetError(f"unknown jet operation {op!r}")
    return fn(*args)


# ---------------------------------------------------------------------------
# jet-valued tensors
# ---------------------------------------------------------------------------


class JetField:
    """A tensor with jet entries: ndarray of shape ``shape + (ncoeff,)``.

    ``deg`` is the degree up to which coefficients are valid; entries beyond
    ``nc_at(deg)`` are kept at exactly zero.  Differentiation lowers ``deg``
    by one; binary operations are valid to the smaller operand degree.
    """

    __slots__ = ("space", "data", "deg")

    def __init__(self, space: JetSpace, data: np.ndarray, deg: int | None = None):
        data = np.asarray(data, dtype=float)
        if data.shape[-1] != space.ncoeff:
            raise JetError(
                f"trailing axis must have length {space.ncoeff}, got {data.shape[-1]}"
            )
        self.space = space
        self.data = data
        self.deg = space.degree if deg is None else deg
        if not 0 <= self.deg <= space.degree:
            raise JetError(f"invalid field degree {self.deg}")

    # -- constructors -------------------------------------------------

    @staticmethod
    def constants(space: JetSpace, values: np.ndarray, deg: int | None = None) -> "JetField":
        values = np.asarray(values, dtype=float)
        data = np.zeros(values.shape + (space.ncoeff,))
        data[..., 0] = values
        return JetField(space, data, deg)

    @staticmethod
    def zeros(space: JetSpace, shape: tuple[int, ...], deg: int | None = None) -> "JetField":
        return JetField(space, np.zeros(shape + (space.ncoeff,)), deg)

    @staticmethod
    def variables(space: JetSpace, point: np.ndarray) -> "JetField":
        """Vector of coordinate jets x_i expanded at ``point``."""
        point = np.asarray(point, dtype=float)
        if point.shape != (space.dim,):
            raise JetError(f"point must have shape ({space.dim},)")
        data = np.zeros((space.dim, space.ncoeff))
        data[:, 0] = point
        if space.degree >= 1:
            for i in range(space.dim):
                unit = tuple(1 if k == i else 0 for k in range(space.dim))
                data[i, space.index[unit]] = 1.0
        return JetField(space, data)

    @staticmethod
    def from_jet(jet: Jet) -> "JetField":
        return JetField(jet.space, jet.coeffs.copy())

    # -- accessors ----------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape[:-1]

    @property
    def value(self) -> np.ndarray:
        """Constant terms (the point values)."""
        return self.data[..., 0].copy()

    def entry(self, *idx) -> Jet:
        if self.deg != self.space.degree:
            # re-home in a smaller space so the scalar jet is fully valid
            sub = jet_space(self.space.dim, self.deg)
            return Jet(sub, self.data[idx][: sub.ncoeff].copy())
        return Jet(self.space, self.data[idx].copy())

    # -- algebra ------------------------------------------------------

    def _binary_deg(self, other: "JetField") -> int:
        if other.space is not self.space:
            raise JetError("jet fields from different spaces")
        return min(self.deg, other.deg)

    def __add__(self, other):
        if isinstance(other, JetField):
            d = self._binary_deg(other)
            return JetField(self.space, _trunc_tail(self.space, self.data + other.data, d), d)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, JetField):
            d = self._binary_deg(other)
            return JetField(self.space, _trunc_tail(self.space, self.data - other.data, d), d)
        return NotImplemented

    def __neg__(self):
        return JetField(self.space, -self.data, self.deg)

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return JetField(self.space, self.data * float(other), self.deg)
        if isinstance(other, JetField):
            d = self._binary_deg(other)
            return JetField(self.space, _mul_data(self.space, self.data, other.data, d), d)
        return NotImplemented

    __rmul__ = __mul__

    def truncate(self, d: int) -> "JetField":
        if d > self.deg:
            raise JetError(f"cannot extend validity from degree {self.deg} to {d}")
        return JetField(self.space, _trunc_tail(self.space, self.data.copy(), d), d)

    def diff(self, c: int) -> "JetField":
        """Partial derivative with respect to coordinate ``c``."""
        if self.deg < 1:
            raise JetError("cannot differentiate a degree-0 jet field")
        return JetField(self.space, _diff_data(self.space, self.data, c, self.deg - 1), self.deg - 1)

    def grad(self) -> "JetField":
        """Stack of all coordinate derivatives along a new last tensor axis."""
        parts = [self.diff(c).data for c in range(self.space.dim)]
        return JetField(self.space, np.stack(parts, axis=-2), self.deg - 1)

    def transpose(self, axes: tuple[int, ...]) -> "JetField":
        full = tuple(axes) + (self.data.ndim - 1,)
        return JetField(self.space, np.transpose(self.data, full), self.deg)

    def fn(self, name: str) -> "JetField":
        """Apply an elementary analytic function entrywise."""
        return JetField(self.space, _apply_series(self.space, self.data, self.deg, name), self.deg)


def jet_einsum(subscripts: str, a: JetField, b: JetField) -> JetField:
    """Einstein contraction over tensor axes with jet-coefficient convolution.

    ``subscripts`` addresses tensor axes only, e.g. ``'km,mj->kj'``; the
    coefficient axes are handled internally.
    """
    space = a.space
    if b.space is not space:
        raise JetError("jet fields from different spaces")
    d = min(a.deg, b.deg)
    ia, ib, starts = space.table(d)
    lhs, out = subscripts.split("->")
    s1, s2 = lhs.split(",")
    pair = next(c for c in "zwvutsrqpon" if c not in subscripts)
    prod = np.einsum(f"{s1}{pair},{s2}{pair}->{out}{pair}", a.data[..., ia], b.data[..., ib])
    res = np.add.reduceat(prod, starts, axis=-1)
    full = np.zeros(res.shape[:-1] + (space.ncoeff,))
    full[..., : space.nc_at(d)] = res
    return JetField(space, full, d)


def jet_matrix_inverse(a: JetField) -> JetField:
    """Inverse of a square-matrix jet field whose constant part is invertible.

    Writes A = A0 (I - N) with N carrying no constant term, so the Neumann
    series (sum of N^k) A0^{-1} terminates exactly at the field degree.
    """
    m = a.shape[0]
    if a.shape != (m, m):
        raise JetError("matrix inverse requires a square jet field")
    a0 = a.data[..., 0]
    a0inv = np.linalg.inv(a0)
    b = JetField.constants(a.space, a0inv, a.deg)
    eye = JetField.constants(a.space, np.eye(m), a.deg)
    n = eye - jet_einsum("ij,jk->ik", b, a)
    total = eye
    acc = eye
    for _ in range(a.deg):
        acc = jet_einsum("ij,jk->ik", acc, n)
        total = total + acc
    return jet_einsum("ij,jk->ik", total, b)
