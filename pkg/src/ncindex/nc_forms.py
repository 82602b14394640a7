"""Noncommutative differential forms over a finite algebra.

A form of degree ``n >= 1`` is a tensor of shape ``(m+1, m, ..., m)`` with
``n`` trailing axes of length ``m = dim``: the first slot lives in the
unitization ``A+`` (index ``m`` is the adjoined unit, so ``x[m, i1..in]`` is
the coefficient of ``d e_i1 ... d e_in``) and the remaining slots in ``A``.
Degree 0 is just ``A`` (shape ``(m,)``).

Operators act on trailing axes, so every function below also accepts
components carrying leading batch axes.  Forms are truncated at a top degree
``N``: anything pushed above ``N`` is discarded and the result carries
``truncation_loss=True`` if the discarded part was nonzero.

Chern character constants (degree -> coefficient):

======  ============================================  =====================
degree  idempotent ``e``                              invertible ``u``
======  ============================================  =====================
0       ``e``                                         --
2k      ``(-1)^k (2k)!/k! (e - 1/2)(de)^{2k}``        --
2k+1    --                                            ``(-1)^k k! c u^-1 du (du^-1 du)^k``
======  ============================================  =====================

with ``c = (2 pi i)^(-1/2)`` (principal branch).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import factorial
from typing import Callable

import numpy as np
from numba import njit

from .algebra_core import FiniteAlgebra, AlgebraElement, invert, is_idempotent, TOL
from .errors import DegreeUnsupported, NotIdempotent, ParityMismatch

SQRT_2PI_I = np.sqrt(2j * np.pi)
RANK_CUTOFF = 1e-9


def component_shape(dim: int, n: int) -> tuple:
    return (dim,) if n == 0 else (dim + 1,) + (dim,) * n


class NCForm:
    """Truncated element of Omega A = sum_n A+ (x) A^(x)n.

    Zero components are stored as ``None`` so that sparse forms (the common
    case: homogeneous inputs, Chern characters) cost nothing in empty degrees.
    """

    def __init__(self, parent: FiniteAlgebra, top_degree: int, components=None, truncation_loss: bool = False):
        if top_degree < 0:
            raise ValueError("top_degree must be nonnegative")
        self.parent = parent
        self.top_degree = top_degree
        comps = [None] * (top_degree + 1)
        if components is not None:
            for n, arr in enumerate(components):
                if arr is None:
                    continue
                if n > top_degree:
                    if np.any(arr != 0):
                        truncation_loss = True
                    continue
                arr = np.asarray(arr, dtype=complex)
                shape = component_shape(parent.dim, n)
                if arr.shape != shape:
                    raise ValueError(f"degree {n} component must have shape {shape}, got {arr.shape}")
                comps[n] = arr
        self._comps = comps
        self.truncation_loss = truncation_loss

    def __repr__(self) -> str:
        return f"NCForm(dim={self.parent.dim}, top_degree={self.top_degree}, degrees={self.support()})"

    @property
    def components(self) -> list:
        return [self.component(n) for n in range(self.top_degree + 1)]

    def raw(self, n: int):
        """Degree-n tensor, or None when that degree is identically zero."""
        return self._comps[n] if 0 <= n <= self.top_degree else None

    def component(self, n: int) -> np.ndarray:
        t = self.raw(n)
        return np.zeros(component_shape(self.parent.dim, n), dtype=complex) if t is None else t

    # construction helpers
    @classmethod
    def zeros(cls, parent: FiniteAlgebra, top_degree: int) -> NCForm:
        return cls(parent, top_degree)

    @classmethod
    def random(cls, parent, top_degree, rng: np.random.Generator, degrees=None, scale: float = 1.0) -> NCForm:
        degrees = range(top_degree + 1) if degrees is None else degrees
        comps = [None] * (top_degree + 1)
        for n in degrees:
            shape = component_shape(parent.dim, n)
            # uniform entries in the unit square: cheap to draw and well scaled
            comps[n] = scale * (2.0 * rng.random(shape + (2,)) - 1.0).view(complex)[..., 0]
        return cls(parent, top_degree, comps)

    @classmethod
    def elementary(cls, parent, top_degree, a0, *slots, coeff: complex = 1.0) -> NCForm:
        """coeff * a0 d slots[0] ... d slots[-1].

        ``a0`` is an AlgebraElement, ``None`` for the adjoined unit, or a pair
        ``(element_or_None, scalar)`` meaning ``element + scalar * 1``.
        """
        n = len(slots)
        if n > top_degree:
            return cls(parent, top_degree, truncation_loss=True)
        tensor = unitized(parent, a0) if n > 0 else _plain(parent, a0)
        for s in slots:
            tensor = np.multiply.outer(tensor, s.coeffs)
        comps = [None] * (top_degree + 1)
        comps[n] = coeff * tensor
        return cls(parent, top_degree, comps)

    # arithmetic
    def _check(self, other: NCForm) -> None:
        if other.parent is not self.parent:
            raise ValueError("forms over different algebras")

    def __add__(self, other: NCForm) -> NCForm:
        self._check(other)
        N = max(self.top_degree, other.top_degree)
        comps = []
        for n in range(N + 1):
            a, b = self.raw(n), other.raw(n)
            comps.append(b if a is None else a if b is None else a + b)
        return NCForm(self.parent, N, comps, self.truncation_loss or other.truncation_loss)

    def __sub__(self, other: NCForm) -> NCForm:
        return self + (-1.0) * other

    def __mul__(self, scalar) -> NCForm:
        z = complex(scalar)
        comps = [None if t is None else z * t for t in self._comps]
        return NCForm(self.parent, self.top_degree, comps, self.truncation_loss)

    __rmul__ = __mul__

    def __neg__(self) -> NCForm:
        return (-1.0) * self

    def homogeneous(self, n: int) -> NCForm:
        comps = [None] * (self.top_degree + 1)
        comps[n] = self.raw(n)
        return NCForm(self.parent, self.top_degree, comps)

    def homogeneous_range(self, lo: int, hi: int) -> NCForm:
        comps = [t if lo <= n <= hi else None for n, t in enumerate(self._comps)]
        return NCForm(self.parent, self.top_degree, comps)

    def support(self, atol: float = 0.0) -> list:
        return [n for n, c in enumerate(self._comps) if c is not None and np.any(np.abs(c) > atol)]

    def max_abs(self, degrees=None) -> float:
        degrees = range(self.top_degree + 1) if degrees is None else degrees
        vals = [np.max(np.abs(self._comps[n])) for n in degrees if self.raw(n) is not None]
        return float(max(vals, default=0.0))

    # serialization
    def to_json(self) -> str:
        payload = {
            "dim": self.parent.dim,
            "top_degree": self.top_degree,
            "components": {
                str(n): np.stack([c.real, c.imag], axis=-1).tolist()
                for n, c in enumerate(self._comps)
                if c is not None and np.any(c)
            },
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, parent: FiniteAlgebra, text: str) -> NCForm:
        payload = json.loads(text)
        if payload["dim"] != parent.dim:
            raise ValueError("form was serialized over an algebra of another dimension")
        N = payload["top_degree"]
        comps = [None] * (N + 1)
        for key, val in payload["components"].items():
            arr = np.asarray(val, dtype=float)
            comps[int(key)] = arr[..., 0] + 1j * arr[..., 1]
        return cls(parent, N, comps)


def _plain(parent, a0) -> np.ndarray:
    if isinstance(a0, AlgebraElement):
        return a0.coeffs.copy()
    raise ValueError("a degree-0 elementary form needs an algebra element")


def unitized(parent: FiniteAlgebra, a0) -> np.ndarray:
    """Coordinates in A+ of an element, None (adjoined unit) or (element, scalar)."""
    v = np.zeros(parent.dim + 1, dtype=complex)
    if a0 is None:
        v[-1] = 1.0
    elif isinstance(a0, AlgebraElement):
        v[:-1] = a0.coeffs
    else:
        elem, scalar = a0
        if elem is not None:
            v[:-1] = elem.coeffs
        v[-1] = scalar
    return v


# ---------------------------------------------------------------------------
# raw tensor kernels (trailing axes are slots, leading axes are batch)


def _pad_head(t: np.ndarray, n: int) -> np.ndarray:
    """Append the adjoined-unit row to slot 0 of a degree-n tensor (n >= 1)."""
    ax = t.ndim - (n + 1)
    shape = list(t.shape)
    shape[ax] += 1
    out = np.zeros(shape, dtype=complex)
    idx = [slice(None)] * t.ndim
    idx[ax] = slice(0, t.shape[ax])
    out[tuple(idx)] = t
    return out


def d_tensor(t: np.ndarray, n: int, dim: int) -> np.ndarray:
    """d(a0 da1..dan) = da0 da1..dan; d of the adjoined unit is zero."""
    ax = t.ndim - (n + 1)
    head = t if n == 0 else np.take(t, np.arange(dim), axis=ax)
    out = np.zeros(head.shape[:ax] + (dim + 1,) + head.shape[ax:], dtype=complex)
    idx = [slice(None)] * out.ndim
    idx[ax] = dim
    out[tuple(idx)] = head
    return out


def _contract_adjacent(t: np.ndarray, ax: int, K: np.ndarray) -> np.ndarray:
    """Contract axes ax, ax+1 of t against the first two axes of K (product slot lands at ax)."""
    sh = t.shape
    pre, post = sh[:ax], sh[ax + 2:]
    P, Q = int(np.prod(pre)), int(np.prod(post))
    t3 = t.reshape(P, sh[ax] * sh[ax + 1], Q)
    K2 = K.reshape(sh[ax] * sh[ax + 1], -1)
    if Q >= 64:
        out = np.matmul(K2.T, t3)
    else:
        # few trailing entries: one large GEMM beats many skinny ones
        out = np.ascontiguousarray(np.moveaxis(np.tensordot(t3, K2, axes=([1], [0])), 2, 1))
    return out.reshape(pre + (K.shape[2],) + post)


def b_tensor(t: np.ndarray, n: int, c: np.ndarray, cplus: np.ndarray) -> np.ndarray:
    """Hochschild boundary on a degree-n tensor, n >= 1."""
    m = c.shape[0]
    base = t.ndim - (n + 1)

    def head(r: np.ndarray) -> np.ndarray:
        return _pad_head(r, n - 1) if n - 1 >= 1 else r

    # a0 a1 da2 .. dan  and  (-1)^n a_n a0 da1 .. da_{n-1}; both land in A
    out = head(_contract_adjacent(t, base, cplus[:, :m, :m]))
    rolled = np.moveaxis(t, base + n, base)
    out = out + (-1) ** n * head(_contract_adjacent(rolled, base, cplus[:m, :, :m]))
    # (-1)^i a0 da1 .. d(a_i a_{i+1}) .. dan
    for i in range(1, n):
        out = out + (-1) ** i * _contract_adjacent(t, base + i, c)
    return out


@njit(cache=True, nogil=True)
def _b_flat(t, n, m, hidx, hval, midx, mval, tidx, tval):
    """All faces of b on one flat degree-n tensor (n >= 1) in a single compiled pass."""
    Qn = m ** (n - 1)
    out = np.zeros(((m + 1) if n >= 2 else m) * Qn, dtype=np.complex128)
    for e in range(hval.shape[0]):
        src = (hidx[e, 0] * m + hidx[e, 1]) * Qn
        dst = hidx[e, 2] * Qn
        v = hval[e]
        for post in range(Qn):
            out[dst + post] += v * t[src + post]
    for i in range(1, n):
        P = (m + 1) * m ** (i - 1)
        Q = m ** (n - i - 1)
        sgn = 1.0 if i % 2 == 0 else -1.0
        for pre in range(P):
            for e in range(mval.shape[0]):
                src = (pre * m * m + midx[e, 0] * m + midx[e, 1]) * Q
                dst = (pre * m + midx[e, 2]) * Q
                v = sgn * mval[e]
                for post in range(Q):
                    out[dst + post] += v * t[src + post]
    sgn = 1.0 if n % 2 == 0 else -1.0
    for e in range(tval.shape[0]):
        last, i0 = tidx[e, 0], tidx[e, 1]
        dst = tidx[e, 2] * Qn
        v = sgn * tval[e]
        for j in range(Qn):
            out[dst + j] += v * t[(i0 * Qn + j) * m + last]
    return out


def _sparse_table(K: np.ndarray):
    idx = np.argwhere(K != 0)
    return idx.astype(np.int64), K[tuple(idx.T)].astype(np.complex128)


def b_tables(c: np.ndarray, cplus: np.ndarray) -> tuple:
    """Sparse structure-constant tables for the head, middle and wrap-around faces."""
    m = c.shape[0]
    return _sparse_table(cplus[:, :m, :m]) + _sparse_table(c) + _sparse_table(cplus[:m, :, :m])


def b_tensor_fast(t: np.ndarray, n: int, tables: tuple) -> np.ndarray:
    """Compiled b for an unbatched degree-n tensor; agrees with ``b_tensor``."""
    m = t.shape[-1]
    flat = np.ascontiguousarray(t, dtype=np.complex128).reshape(-1)
    out = _b_flat(flat, n, m, *tables)
    return out.reshape(component_shape(m, n - 1))


def B_tensor(t: np.ndarray, n: int, dim: int) -> np.ndarray:
    """Connes operator: sum_j (-1)^(n j) cyclic rotations of da0 da1 .. dan."""
    if n == 0:
        return d_tensor(t, 0, dim)
    base = t.ndim - (n + 1)
    head = np.take(t, np.arange(dim), axis=base)
    lead = list(range(base))
    acc = np.zeros_like(head)
    for j in range(n + 1):
        # new slot s holds old slot (s - j) mod (n+1)
        perm = lead + [base + (s - j) % (n + 1) for s in range(n + 1)]
        acc += (-1) ** (n * j) * np.transpose(head, perm)
    out = np.zeros(head.shape[:base] + (dim + 1,) + head.shape[base:], dtype=complex)
    idx = [slice(None)] * out.ndim
    idx[base] = dim
    out[tuple(idx)] = acc
    return out


@njit(cache=True, nogil=True)
def _B_flat(t, n, m):
    """Signed cyclic rotations of the A-part of a flat degree-n tensor (n >= 1)."""
    size = m ** (n + 1)
    out = np.zeros((m + 1) * size, dtype=np.complex128)
    base = m * size
    for j in range(n + 1):
        lo = m ** j
        hi = m ** (n + 1 - j)
        sgn = -1.0 if (n * j) % 2 == 1 else 1.0
        # old = h * lo + l moves to l * hi + h
        for l in range(lo):
            dst = base + l * hi
            for h in range(hi):
                out[dst + h] += sgn * t[h * lo + l]
    return out


def B_tensor_fast(t: np.ndarray, n: int) -> np.ndarray:
    """Compiled B for an unbatched degree-n tensor; agrees with ``B_tensor``."""
    m = t.shape[-1]
    if n == 0:
        return d_tensor(t, 0, m)
    flat = np.ascontiguousarray(t, dtype=np.complex128).reshape(-1)
    return _B_flat(flat, n, m).reshape(component_shape(m, n + 1))


# ---------------------------------------------------------------------------
# operators on forms


def _raise_degree(x: NCForm, kernel) -> NCForm:
    N = x.top_degree
    comps = [None]
    for n in range(N):
        t = x.raw(n)
        comps.append(None if t is None else kernel(t, n))
    top = x.raw(N)
    loss = x.truncation_loss or (top is not None and bool(np.any(top != 0)))
    return NCForm(x.parent, N, comps, loss)


def d(x: NCForm) -> NCForm:
    dim = x.parent.dim
    return _raise_degree(x, lambda t, n: d_tensor(t, n, dim))


def connes_B(x: NCForm) -> NCForm:
    return _raise_degree(x, B_tensor_fast)


def hochschild_b(x: NCForm) -> NCForm:
    alg = x.parent
    tables = b_tables(alg.structure_constants, alg.unitized_constants())
    N = x.top_degree
    comps = [None if t is None else b_tensor_fast(t, n + 1, tables) for n, t in enumerate(x._comps[1:])]
    comps.append(None)
    return NCForm(alg, N, comps, x.truncation_loss)


def boundary(x: NCForm) -> NCForm:
    """Total differential b + B."""
    return hochschild_b(x) + connes_B(x)


def identity_residuals(x: NCForm) -> dict:
    """Residuals of b^2, B^2, bB+Bb and d^2 on the degrees unaffected by truncation.

    b^2, B^2 and d^2 are clean in every retained degree.  bB+Bb in degree N
    would need B of the degree-N part, which the truncation dropped, so it is
    measured through degree N-1 (and the degree-N part is never formed).
    """
    N = x.top_degree
    below_top = x.homogeneous_range(0, N - 1)
    bx, Bx = hochschild_b(x), connes_B(x)
    return {
        "b2": hochschild_b(bx).max_abs(),
        "B2": connes_B(Bx).max_abs(),
        "bB+Bb": (hochschild_b(connes_B(below_top)) + connes_B(hochschild_b(below_top))).max_abs(range(N)),
        "d2": d(d(x)).max_abs(),
    }


def normalize(x: NCForm) -> NCForm:
    """Canonical representative in the normalized complex of a unital algebra.

    The adjoined unit is identified with the algebra unit in slot 0 and the
    algebra unit is projected out of every other slot.
    """
    alg = x.parent
    if not alg.has_unit:
        raise ValueError("normalization needs a unital algebra")
    u = alg.unit_coeffs
    P = np.eye(alg.dim) - np.outer(u, u.conj()) / np.vdot(u, u)
    comps = [x.raw(0)]
    for n in range(1, x.top_degree + 1):
        t = x.raw(n)
        if t is None:
            comps.append(None)
            continue
        head = t[:-1] + np.multiply.outer(u, t[-1])
        t = np.concatenate([head, np.zeros((1,) + head.shape[1:], dtype=complex)], axis=0)
        for s in range(1, n + 1):
            t = np.moveaxis(np.tensordot(P, t, axes=([1], [s])), 0, s)
        comps.append(t)
    return NCForm(alg, x.top_degree, comps, x.truncation_loss)


# ---------------------------------------------------------------------------
# Chern characters


def chern_idempotent(e: AlgebraElement, N: int) -> NCForm:
    if not is_idempotent(e, TOL.idempotent):
        raise NotIdempotent("element is not idempotent within tolerance")
    alg = e.parent
    comps = [None] * (N + 1)
    comps[0] = e.coeffs.copy()
    head = unitized(alg, (e, -0.5))
    for k in range(1, N // 2 + 1):
        t = head
        for _ in range(2 * k):
            t = np.multiply.outer(t, e.coeffs)
        comps[2 * k] = (-1) ** k * factorial(2 * k) / factorial(k) * t
    return NCForm(alg, N, comps)


def chern_invertible(u: AlgebraElement, N: int) -> NCForm:
    """Odd Chern character, returned in normalized form (see :func:`normalize`)."""
    uinv = invert(u)
    alg = u.parent
    comps = [None] * (N + 1)
    head = unitized(alg, uinv)
    for k in range((N - 1) // 2 + 1):
        t = head
        for j in range(2 * k + 1):
            t = np.multiply.outer(t, (u if j % 2 == 0 else uinv).coeffs)
        comps[2 * k + 1] = (-1) ** k * factorial(k) / SQRT_2PI_I * t
    return normalize(NCForm(alg, N, comps))


def cycle_residual(x: NCForm, normalized: bool = False) -> float:
    """max |(b+B)x| through degree N-1 (degree N holds the truncation remainder)."""
    y = boundary(x)
    if normalized:
        y = normalize(y)
    return y.max_abs(range(x.top_degree))


# ---------------------------------------------------------------------------
# elementary chains over arbitrary algebras


class Chain:
    """Finite sum of elementary forms ``c * x0 dx1 .. dxn``.

    Works over any algebra whose elements support ``*`` (algebra product).
    ``x0 = None`` stands for the adjoined unit.  Used for infinite-dimensional
    algebras such as trigonometric polynomials, where tensors are unavailable.
    """

    def __init__(self, terms=()):
        self.terms = [(complex(c), tuple(slots)) for c, slots in terms]

    def __repr__(self) -> str:
        return f"Chain({len(self.terms)} terms, degrees={self.degrees()})"

    @classmethod
    def elementary(cls, *slots, coeff: complex = 1.0) -> Chain:
        return cls([(coeff, slots)])

    def degrees(self) -> list:
        return sorted({len(s) - 1 for _, s in self.terms})

    def homogeneous(self, n: int) -> Chain:
        return Chain([(c, s) for c, s in self.terms if len(s) - 1 == n])

    def __add__(self, other: Chain) -> Chain:
        return Chain(self.terms + other.terms)

    def __sub__(self, other: Chain) -> Chain:
        return self + (-1.0) * other

    def __mul__(self, scalar) -> Chain:
        return Chain([(scalar * c, s) for c, s in self.terms])

    __rmul__ = __mul__

    def __neg__(self) -> Chain:
        return (-1.0) * self

    def to_form(self, parent: FiniteAlgebra, N: int) -> NCForm:
        """Expand into tensors; slots must be elements of ``parent``."""
        out = NCForm.zeros(parent, N)
        comps = out.components
        for c, slots in self.terms:
            n = len(slots) - 1
            if n > N:
                continue
            if n == 0 and slots[0] is None:
                raise ValueError("degree-0 forms live in the algebra, not its unitization")
            t = unitized(parent, slots[0]) if n >= 1 else slots[0].coeffs
            for a in slots[1:]:
                t = np.multiply.outer(t, a.coeffs)
            comps[n] = comps[n] + c * t
        return NCForm(parent, N, comps)


def _times(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a * b


def chain_b(x: Chain) -> Chain:
    """Hochschild boundary of an elementary chain."""
    out = []
    for c, s in x.terms:
        n = len(s) - 1
        if n == 0:
            continue
        out.append((c, (_times(s[0], s[1]),) + s[2:]))
        for i in range(1, n):
            out.append(((-1) ** i * c, s[:i] + (s[i] * s[i + 1],) + s[i + 2:]))
        out.append(((-1) ** n * c, (_times(s[n], s[0]),) + s[1:n]))
    return Chain(out)


def chain_B(x: Chain) -> Chain:
    """Connes operator on an elementary chain; zero on terms headed by the adjoined unit."""
    out = []
    for c, s in x.terms:
        if s[0] is None:
            continue
        n = len(s) - 1
        for j in range(n + 1):
            rotated = tuple(s[(k - j) % (n + 1)] for k in range(n + 1))
            out.append(((-1) ** (n * j) * c, (None,) + rotated))
    return Chain(out)


def chain_chern_invertible(u, uinv, N: int) -> Chain:
    """Odd Chern character of ``u`` with the same constants as :func:`chern_invertible` (unnormalized)."""
    terms = []
    for k in range((N - 1) // 2 + 1):
        slots = (uinv,) + tuple(u if j % 2 == 0 else uinv for j in range(2 * k + 1))
        terms.append(((-1) ** k * factorial(k) / SQRT_2PI_I, slots))
    return Chain(terms)


def chain_chern_idempotent(e, N: int) -> Chain:
    """Even Chern character of ``e`` with the same constants as :func:`chern_idempotent`."""
    terms = [(1.0, (e,))]
    for k in range(1, N // 2 + 1):
        coeff = (-1) ** k * factorial(2 * k) / factorial(k)
        tail = (e,) * (2 * k)
        terms.append((coeff, (e,) + tail))
        terms.append((-0.5 * coeff, (None,) + tail))
    return Chain(terms)


# ---------------------------------------------------------------------------
# cochains and pairing


@dataclass
class CochainOnForms:
    """Scalar cochain given degree by degree.

    ``evaluator(n, tensor)`` returns the value on a homogeneous degree-n
    component and is only called for ``n in supported_degrees``.
    """

    evaluator: Callable[[int, np.ndarray], complex]
    supported_degrees: frozenset = field(default_factory=frozenset)
    parity: str = "even"

    def __post_init__(self):
        self.supported_degrees = frozenset(self.supported_degrees)
        if self.parity not in ("even", "odd"):
            raise ValueError("parity must be 'even' or 'odd'")

    def __call__(self, x: NCForm) -> complex:
        return pair(self, x)


def pair(phi: CochainOnForms, x: NCForm, strict: bool = False) -> complex:
    if strict:
        outside = [n for n in x.support() if n not in phi.supported_degrees]
        if outside:
            raise DegreeUnsupported(f"form has mass in degrees {outside} outside the cochain's support")
        want = 0 if phi.parity == "even" else 1
        if any(n % 2 != want for n in x.support()):
            raise ParityMismatch("form parity does not match cochain parity")
    total = 0j
    for n in sorted(phi.supported_degrees):
        if n <= x.top_degree:
            t = x.raw(n)
            if t is not None:
                total += complex(phi.evaluator(n, t))
    return total


def trace_cochain(tau_weights) -> CochainOnForms:
    """Degree-0 cochain a -> tau(a)."""
    w = np.asarray(tau_weights, dtype=complex)
    return CochainOnForms(lambda n, t: w @ t, {0}, "even")


def zero_cochain(degrees=(0,), parity="even") -> CochainOnForms:
    return CochainOnForms(lambda n, t: 0.0, degrees, parity)


# ---------------------------------------------------------------------------
# homology of the truncated complex


def operator_matrix(kernel, dim: int, n: int) -> np.ndarray:
    """Matrix of a linear map on degree-n tensors, by applying it to the identity batch."""
    size = int(np.prod(component_shape(dim, n)))
    eye = np.eye(size, dtype=complex).reshape((size,) + component_shape(dim, n))
    out = kernel(eye, n)
    return out.reshape(size, -1).T


def _rank(mat: np.ndarray) -> int:
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > RANK_CUTOFF * s[0]))


def homology_ranks(alg: FiniteAlgebra, N: int) -> dict:
    """Even/odd homology ranks of the (b+B)-complex truncated at degree N.

    The truncation is the Hodge quotient: degrees above N are dropped and
    degree N is taken modulo b(Omega^{N+1}), which keeps (b+B)^2 = 0.
    """
    c, cplus, m = alg.structure_constants, alg.unitized_constants(), alg.dim
    sizes = [int(np.prod(component_shape(m, n))) for n in range(N + 2)]
    bmats = {n: operator_matrix(lambda t, k: b_tensor(t, k, c, cplus), m, n) for n in range(1, N + 2)}
    Bmats = {n: operator_matrix(lambda t, k: B_tensor(t, k, m), m, n) for n in range(N)}
    # projector onto the complement of b(Omega^{N+1}) inside Omega^N
    img = bmats[N + 1]
    if img.size and np.any(img):
        U, s, _ = np.linalg.svd(img, full_matrices=True)
        r = int(np.sum(s > RANK_CUTOFF * s[0]))
        Q = U[:, r:].conj().T
    else:
        Q = np.eye(sizes[N], dtype=complex)
    dims = sizes[:N] + [Q.shape[0]]
    offs = np.concatenate([[0], np.cumsum(dims)])
    total = np.zeros((offs[-1], offs[-1]), dtype=complex)

    def put(row_deg, col_deg, mat):
        if row_deg == N:
            mat = Q @ mat
        if col_deg == N:
            mat = mat @ Q.conj().T
        total[offs[row_deg]:offs[row_deg + 1], offs[col_deg]:offs[col_deg + 1]] += mat

    for n in range(1, N + 1):
        put(n - 1, n, bmats[n])
    for n in range(N):
        put(n + 1, n, Bmats[n])
    even = [i for n in range(N + 1) if n % 2 == 0 for i in range(offs[n], offs[n + 1])]
    odd = [i for n in range(N + 1) if n % 2 == 1 for i in range(offs[n], offs[n + 1])]
    d_even = total[np.ix_(odd, even)]
    d_odd = total[np.ix_(even, odd)]
    rank_even, rank_odd = _rank(d_even), _rank(d_odd)
    return {
        "even": len(even) - rank_even - rank_odd,
        "odd": len(odd) - rank_odd - rank_even,
        "square_residual": float(np.max(np.abs(total @ total), initial=0.0)),
    }


def identity_sweep(alg: FiniteAlgebra, N: int, count: int, seed: int, workers: int = 4) -> dict:
    """Max identity residuals over ``count`` random homogeneous forms per degree 0..N.

    Each form lives in the complex truncated at N.  Work is spread over a
    thread pool; per-degree seeds come from the master seed so the result
    does not depend on scheduling.
    """
    from concurrent.futures import ThreadPoolExecutor

    seeds = np.random.SeedSequence(seed).spawn(N + 1)

    def run(n: int) -> dict:
        rng = np.random.default_rng(seeds[n])
        worst = {"b2": 0.0, "B2": 0.0, "bB+Bb": 0.0, "d2": 0.0}
        for _ in range(count):
            res = identity_residuals(NCForm.random(alg, N, rng, degrees=[n]))
            for k, v in res.items():
                worst[k] = max(worst[k], v)
        return worst

    with ThreadPoolExecutor(max_workers=workers) as pool:
        per_degree = list(pool.map(run, range(N + 1)))
    total = {k: max(r[k] for r in per_degree) for k in per_degree[0]}
    total["per_degree"] = per_degree
    return total
