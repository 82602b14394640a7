"""Finite-dimensional associative algebras over C given by structure constants.

An algebra of dimension ``m`` is stored as a rank-3 array ``c`` with
``e_i e_j = sum_k c[i, j, k] e_k``.  Elements are coefficient vectors tied to
their parent algebra; every binary operation checks the parent first.

Tolerances live in a single :class:`Tolerances` record so that callers can
tighten or relax them in one place (see :func:`configure_tolerances`).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path

import numpy as np

from .errors import NotAGroup, ParentMismatch, Singular


@dataclass(frozen=True)
class Tolerances:
    associativity: float = 1e-12
    unit: float = 1e-12
    trace: float = 1e-10
    inverse: float = 1e-10
    singular_residual: float = 1e-8
    idempotent: float = 1e-10


TOL = Tolerances()


def configure_tolerances(**overrides) -> Tolerances:
    """Replace the process-wide tolerance table and return the new one."""
    global TOL
    TOL = replace(TOL, **overrides)
    return TOL


class FiniteAlgebra:
    """Associative algebra presented by structure constants.

    Instances are immutable: the structure tensor is copied and marked
    read-only at construction.
    """

    def __init__(self, structure_constants, basis_labels=None, unit_coeffs=None):
        c = np.array(structure_constants, dtype=complex)
        if c.ndim != 3 or not (c.shape[0] == c.shape[1] == c.shape[2]):
            raise ValueError(f"structure constants must be m x m x m, got {c.shape}")
        c.setflags(write=False)
        self._c = c
        self.dim = c.shape[0]
        labels = list(basis_labels) if basis_labels is not None else [f"e{i}" for i in range(self.dim)]
        if len(labels) != self.dim:
            raise ValueError("one label per basis vector required")
        self.basis_labels = tuple(labels)
        if unit_coeffs is not None:
            u = np.array(unit_coeffs, dtype=complex)
            if u.shape != (self.dim,):
                raise ValueError("unit has wrong length")
            u.setflags(write=False)
            self.unit_coeffs = u
        else:
            self.unit_coeffs = None

    @property
    def structure_constants(self) -> np.ndarray:
        return self._c

    @property
    def has_unit(self) -> bool:
        return self.unit_coeffs is not None

    def __repr__(self) -> str:
        return f"FiniteAlgebra(dim={self.dim}, has_unit={self.has_unit})"

    # element construction
    def element(self, coeffs) -> AlgebraElement:
        return AlgebraElement(self, coeffs)

    def basis(self, i: int) -> AlgebraElement:
        v = np.zeros(self.dim, dtype=complex)
        v[i] = 1.0
        return AlgebraElement(self, v)

    def zero(self) -> AlgebraElement:
        return AlgebraElement(self, np.zeros(self.dim, dtype=complex))

    def unit(self) -> AlgebraElement:
        if not self.has_unit:
            raise ValueError("algebra has no unit")
        return AlgebraElement(self, self.unit_coeffs)

    def random_element(self, rng: np.random.Generator, scale: float = 1.0) -> AlgebraElement:
        v = rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim)
        return AlgebraElement(self, scale * v)

    # linear-algebra views
    def left_regular(self, coeffs) -> np.ndarray:
        """Matrix of b -> a b in the basis, i.e. L[k, j] = sum_i a_i c[i, j, k]."""
        return np.einsum("i,ijk->kj", np.asarray(coeffs, dtype=complex), self._c)

    def right_regular(self, coeffs) -> np.ndarray:
        """Matrix of a -> a b."""
        return np.einsum("j,ijk->ki", np.asarray(coeffs, dtype=complex), self._c)

    def product_coeffs(self, a, b) -> np.ndarray:
        return np.einsum("i,j,ijk->k", a, b, self._c)

    def associativity_residual(self) -> float:
        c = self._c
        left = np.einsum("ijl,lkm->ijkm", c, c)
        right = np.einsum("jkl,ilm->ijkm", c, c)
        return float(np.max(np.abs(left - right), initial=0.0))

    def unit_residual(self) -> float:
        if not self.has_unit:
            return 0.0
        eye = np.eye(self.dim)
        left = np.einsum("i,ijk->jk", self.unit_coeffs, self._c)
        right = np.einsum("j,ijk->ik", self.unit_coeffs, self._c)
        return float(max(np.max(np.abs(left - eye)), np.max(np.abs(right - eye))))

    def unitized_constants(self) -> np.ndarray:
        """Structure constants of A+ = A + C1, the adjoined unit sitting at index dim."""
        m = self.dim
        cp = np.zeros((m + 1, m + 1, m + 1), dtype=complex)
        cp[:m, :m, :m] = self._c
        idx = np.arange(m + 1)
        cp[m, idx, idx] = 1.0
        cp[idx, m, idx] = 1.0
        return cp

    # serialization
    def to_json(self) -> str:
        c = self._c
        payload = {
            "dim": self.dim,
            "labels": list(self.basis_labels),
            "c": np.stack([c.real, c.imag], axis=-1).tolist(),
        }
        if self.has_unit:
            payload["unit"] = np.stack([self.unit_coeffs.real, self.unit_coeffs.imag], axis=-1).tolist()
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text_or_path) -> FiniteAlgebra:
        if isinstance(text_or_path, Path) or (isinstance(text_or_path, str) and not text_or_path.lstrip().startswith("{")):
            text = Path(text_or_path).read_text()
        else:
            text = text_or_path
        payload = json.loads(text)
        c = np.asarray(payload["c"], dtype=float)
        c = c[..., 0] + 1j * c[..., 1]
        if c.shape != (payload["dim"],) * 3:
            raise ValueError("dim does not match structure constants")
        unit = payload.get("unit")
        if unit is not None:
            u = np.asarray(unit, dtype=float)
            unit = u[..., 0] + 1j * u[..., 1] if u.ndim == 2 else u
        return cls(c, payload.get("labels"), unit)


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    parent: FiniteAlgebra
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.coeffs, dtype=complex)
        if v.shape != (self.parent.dim,):
            raise ValueError(f"expected {self.parent.dim} coefficients, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "coeffs", v)

    def _check(self, other: AlgebraElement) -> None:
        if not isinstance(other, AlgebraElement) or other.parent is not self.parent:
            raise ParentMismatch("elements belong to different algebras")

    def __add__(self, other):
        self._check(other)
        return AlgebraElement(self.parent, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return AlgebraElement(self.parent, self.coeffs - other.coeffs)

    def __neg__(self):
        return AlgebraElement(self.parent, -self.coeffs)

    def __mul__(self, other):
        if isinstance(other, AlgebraElement):
            return multiply(self, other)
        return AlgebraElement(self.parent, self.coeffs * complex(other))

    def __rmul__(self, scalar):
        return AlgebraElement(self.parent, self.coeffs * complex(scalar))

    def allclose(self, other: AlgebraElement, atol: float = 1e-12) -> bool:
        self._check(other)
        return bool(np.allclose(self.coeffs, other.coeffs, atol=atol, rtol=0))


@dataclass(eq=False)
class LinearFunctional:
    parent: FiniteAlgebra
    weights: np.ndarray
    is_trace: bool = False

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=complex)
        if self.weights.shape != (self.parent.dim,):
            raise ValueError("weights must have length dim")

    def __call__(self, a: AlgebraElement) -> complex:
        if a.parent is not self.parent:
            raise ParentMismatch("functional applied to a foreign element")
        return complex(self.weights @ a.coeffs)


def make_matrix_algebra(n: int) -> FiniteAlgebra:
    """M_n(C) with matrix units E_ab at index a*n + b."""
    if n < 1:
        raise ValueError("n must be positive")
    m = n * n
    c = np.zeros((m, m, m))
    for a, b, d in product(range(n), repeat=3):
        # E_ab E_bd = E_ad
        c[a * n + b, b * n + d, a * n + d] = 1.0
    unit = np.zeros(m)
    unit[[a * n + a for a in range(n)]] = 1.0
    labels = [f"E{a + 1}{b + 1}" for a in range(n) for b in range(n)]
    return FiniteAlgebra(c, labels, unit)


def matrix_of(a: AlgebraElement) -> np.ndarray:
    """Read an element of make_matrix_algebra(n) back as an n x n array."""
    n = int(round(np.sqrt(a.parent.dim)))
    return a.coeffs.reshape(n, n)


def from_matrix(algebra: FiniteAlgebra, mat) -> AlgebraElement:
    return AlgebraElement(algebra, np.asarray(mat, dtype=complex).reshape(-1))


def _check_group(table: np.ndarray) -> int:
    g = table.shape[0]
    if table.ndim != 2 or table.shape[1] != g:
        raise NotAGroup("multiplication table must be square")
    if table.min() < 0 or table.max() >= g:
        raise NotAGroup("table entries out of range")
    identities = [e for e in range(g) if np.all(table[e] == np.arange(g)) and np.all(table[:, e] == np.arange(g))]
    if not identities:
        raise NotAGroup("no two-sided identity")
    e = identities[0]
    for x in range(g):
        if not np.any((table[x] == e) & (table[:, x] == e)):
            raise NotAGroup(f"element {x} has no two-sided inverse")
    # (xy)z == x(yz) over all triples
    lhs = table[table[:, :, None], np.arange(g)[None, None, :]]
    rhs = table[np.arange(g)[:, None, None], table[None, :, :]]
    if not np.array_equal(lhs, rhs):
        raise NotAGroup("table is not associative")
    return e


def make_group_algebra(mult_table) -> FiniteAlgebra:
    """Convolution algebra C[G] of a finite group given by its Cayley table."""
    table = np.asarray(mult_table, dtype=int)
    e = _check_group(table)
    g = table.shape[0]
    c = np.zeros((g, g, g))
    for x, y in product(range(g), repeat=2):
        c[x, y, table[x, y]] = 1.0
    unit = np.zeros(g)
    unit[e] = 1.0
    return FiniteAlgebra(c, [f"g{x}" for x in range(g)], unit)


def cyclic_group_table(n: int) -> np.ndarray:
    idx = np.arange(n)
    return (idx[:, None] + idx[None, :]) % n


def permutation_group_table(perms) -> np.ndarray:
    """Cayley table of a list of permutations closed under composition (p*q = p o q)."""
    perms = [tuple(p) for p in perms]
    index = {p: i for i, p in enumerate(perms)}
    n = len(perms)
    table = np.zeros((n, n), dtype=int)
    for i, p in enumerate(perms):
        for j, q in enumerate(perms):
            comp = tuple(p[q[k]] for k in range(len(q)))
            if comp not in index:
                raise NotAGroup("permutations are not closed under composition")
            table[i, j] = index[comp]
    return table


def make_crossed_product(mult_table, action) -> FiniteAlgebra:
    """C(X) x| G for a finite group acting on a finite set.

    ``action[g][x]`` is the image of the point ``x`` under ``g``.  The basis
    element at index ``x * |G| + g`` is ``delta_x U_g`` with
    ``(delta_x U_g)(delta_y U_h) = [x == g.y] delta_x U_{gh}``.
    """
    table = np.asarray(mult_table, dtype=int)
    e = _check_group(table)
    act = np.asarray(action, dtype=int)
    ng, npts = act.shape
    if ng != table.shape[0]:
        raise ValueError("action must list one permutation per group element")
    for g, h in product(range(ng), repeat=2):
        if not np.array_equal(act[table[g, h]], act[g][act[h]]):
            raise ValueError("action is not compatible with the group law")
    m = npts * ng
    c = np.zeros((m, m, m))
    for x, g, y, h in product(range(npts), range(ng), range(npts), range(ng)):
        if act[g, y] == x:
            c[x * ng + g, y * ng + h, x * ng + table[g, h]] = 1.0
    unit = np.zeros(m)
    unit[[x * ng + e for x in range(npts)]] = 1.0
    labels = [f"d{x}U{g}" for x in range(npts) for g in range(ng)]
    return FiniteAlgebra(c, labels, unit)


def multiply(a: AlgebraElement, b: AlgebraElement) -> AlgebraElement:
    a._check(b)
    return AlgebraElement(a.parent, a.parent.product_coeffs(a.coeffs, b.coeffs))


def invert(a: AlgebraElement) -> AlgebraElement:
    """Two-sided inverse from a dense solve of the left-regular system a x = 1."""
    alg = a.parent
    if not alg.has_unit:
        raise Singular("inversion requires a unital algebra")
    L = alg.left_regular(a.coeffs)
    try:
        x = np.linalg.solve(L, alg.unit_coeffs)
    except np.linalg.LinAlgError as exc:
        raise Singular(str(exc)) from exc
    inv = AlgebraElement(alg, x)
    one = alg.unit_coeffs
    res = max(
        np.max(np.abs(alg.product_coeffs(a.coeffs, x) - one)),
        np.max(np.abs(alg.product_coeffs(x, a.coeffs) - one)),
    )
    if not np.isfinite(res) or res > TOL.singular_residual:
        raise Singular(f"inverse residual {res:.3e} exceeds {TOL.singular_residual:.0e}")
    return inv


def trace_defect(phi: LinearFunctional) -> float:
    c = phi.parent.structure_constants
    prods = np.einsum("ijk,k->ij", c, phi.weights)
    return float(np.max(np.abs(prods - prods.T), initial=0.0))


def verify_trace(phi: LinearFunctional) -> bool:
    phi.is_trace = trace_defect(phi) <= TOL.trace
    return phi.is_trace


def matrix_trace(algebra: FiniteAlgebra) -> LinearFunctional:
    """Trace functional on make_matrix_algebra(n)."""
    n = int(round(np.sqrt(algebra.dim)))
    return LinearFunctional(algebra, np.eye(n).reshape(-1))


def is_idempotent(e: AlgebraElement, tol: float | None = None) -> bool:
    tol = TOL.idempotent if tol is None else tol
    return bool(np.max(np.abs(multiply(e, e).coeffs - e.coeffs)) <= tol)
