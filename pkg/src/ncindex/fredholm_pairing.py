"""Bounded Fredholm modules, the chi/eta cochains and index pairings.

Two kinds of module are supported:

* :class:`FredholmModule` over a :class:`FiniteAlgebra`, with dense matrices.
* :class:`CircleModule`, the Toeplitz model over trigonometric polynomials on a
  Fourier window ``[-M, M]``.

Even modules carry a grading and use the supertrace ``tau(X) = Tr(grading X)``.
Odd modules are stored on ``L`` with ``H = L (x) C1`` implicit: the algebra
acts as ``rho (x) 1`` and ``F = G (x) eps``.  Every cochain term then carries an
odd power of ``eps``, and the supertrace extracts its coefficient:
``tau(X (x) eps) = KAPPA_ODD * Tr(X)``.  ``KAPPA_ODD`` is fixed so that the
winding-one Toeplitz pairing is ``+1``.

Cochains can be evaluated on :class:`NCForm` tensors (contraction against
stacks of operator matrices) or on :class:`Chain` objects (term by term).  The
two routes are independent and are cross-checked in the tests.

The target algebra of every module here is the complex numbers, so all
``Omega^1``-valued components vanish identically; :class:`XValue` still keeps
the general shape of an X-complex value.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import factorial, gamma
from pathlib import Path

import numpy as np

from .algebra_core import AlgebraElement, FiniteAlgebra, matrix_of
from .errors import (
    ConfigInvalid,
    IllConditioned,
    ParityMismatch,
    SummabilityViolation,
    WindowTooSmall,
)
from .nc_forms import (
    RANK_CUTOFF,
    Chain,
    NCForm,
    CochainOnForms,
    b_tensor,
    boundary,
    chain_B,
    chain_b,
    chain_chern_idempotent,
    chain_chern_invertible,
    chern_idempotent,
    chern_invertible,
    component_shape,
    d_tensor,
    operator_matrix,
)

KAPPA_ODD = -np.sqrt(2j)


# ---------------------------------------------------------------------------
# target algebra and X-complex values


def complex_numbers() -> FiniteAlgebra:
    return FiniteAlgebra(np.ones((1, 1, 1)), basis_labels=["1"], unit_coeffs=[1.0])


def natural_projector(target: FiniteAlgebra) -> np.ndarray:
    """Orthogonal projector on Omega^1 R killing b(Omega^2 R) = [R, Omega^1 R]."""
    m = target.dim
    c, cplus = target.structure_constants, target.unitized_constants()
    img = operator_matrix(lambda t, k: b_tensor(t, k, c, cplus), m, 2)
    size = img.shape[0]
    if not np.any(img):
        return np.eye(size, dtype=complex)
    U, s, _ = np.linalg.svd(img, full_matrices=False)
    r = int(np.sum(s > RANK_CUTOFF * s[0]))
    Q = U[:, :r]
    return np.eye(size, dtype=complex) - Q @ Q.conj().T


@dataclass(frozen=True)
class XValue:
    """Element of X(R) = R + Omega^1 R_natural; the odd part is stored projected."""

    target: FiniteAlgebra
    even_part: np.ndarray
    odd_part: np.ndarray

    @classmethod
    def zero(cls, target: FiniteAlgebra) -> XValue:
        m = target.dim
        return cls(target, np.zeros(m, dtype=complex), np.zeros(component_shape(m, 1), dtype=complex))

    @classmethod
    def make(cls, target: FiniteAlgebra, even_part=None, odd_part=None) -> XValue:
        z = cls.zero(target)
        even = z.even_part if even_part is None else np.asarray(even_part, dtype=complex).reshape(target.dim)
        odd = z.odd_part
        if odd_part is not None:
            P = natural_projector(target)
            odd = (P @ np.asarray(odd_part, dtype=complex).reshape(-1)).reshape(z.odd_part.shape)
        return cls(target, even, odd)

    @property
    def scalar(self) -> complex:
        """Even part as a number (target of dimension one)."""
        if self.target.dim != 1:
            raise ValueError("scalar view needs a one-dimensional target")
        return complex(self.even_part[0])

    def __add__(self, other: XValue) -> XValue:
        return XValue(self.target, self.even_part + other.even_part, self.odd_part + other.odd_part)

    def __sub__(self, other: XValue) -> XValue:
        return XValue(self.target, self.even_part - other.even_part, self.odd_part - other.odd_part)

    def __mul__(self, scalar) -> XValue:
        return XValue(self.target, scalar * self.even_part, scalar * self.odd_part)

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.even_part)), np.max(np.abs(self.odd_part))))

    def boundary(self) -> XValue:
        """X-complex differential: natural d on the even part, b-bar on the odd part."""
        m = self.target.dim
        c, cplus = self.target.structure_constants, self.target.unitized_constants()
        odd = d_tensor(self.even_part, 0, m)
        even = b_tensor(self.odd_part, 1, c, cplus)
        return XValue.make(self.target, even, odd)


CC = complex_numbers()


# ---------------------------------------------------------------------------
# modules


def _as_matrix(a) -> np.ndarray:
    return np.asarray(a, dtype=complex)


@dataclass(frozen=True)
class FredholmModule:
    """Bounded module over a finite algebra.

    ``rho_basis[i]`` is the operator of basis element ``i``.  Even modules need
    ``grading`` (a +-1 vector); odd modules act on ``L`` and ``F`` is the
    involution ``G`` on ``L``.
    """

    algebra: FiniteAlgebra
    rho_basis: np.ndarray
    F: np.ndarray
    parity: str = "even"
    p: int = 0
    grading: np.ndarray | None = None
    target: FiniteAlgebra = field(default=CC, repr=False)

    def __post_init__(self):
        rho = np.array(self.rho_basis, dtype=complex)
        F = np.array(self.F, dtype=complex)
        if self.parity not in ("even", "odd"):
            raise ConfigInvalid("parity must be 'even' or 'odd'")
        if rho.shape[0] != self.algebra.dim or rho.shape[1:] != F.shape:
            raise ConfigInvalid("rho_basis must have shape (dim, h, h) matching F")
        if self.parity == "even":
            if self.grading is None:
                raise ConfigInvalid("even modules need a grading")
            g = np.array(self.grading, dtype=float)
            if g.shape != (F.shape[0],) or not np.all(np.abs(g) == 1):
                raise ConfigInvalid("grading must be a +-1 vector of length h")
            g.setflags(write=False)
            object.__setattr__(self, "grading", g)
        for arr in (rho, F):
            arr.setflags(write=False)
        object.__setattr__(self, "rho_basis", rho)
        object.__setattr__(self, "F", F)

    @property
    def h_dim(self) -> int:
        return self.F.shape[0]

    def rho(self, a) -> np.ndarray:
        if a is None:
            return np.eye(self.h_dim, dtype=complex)
        return np.tensordot(a.coeffs, self.rho_basis, axes=1)

    def tau(self, X: np.ndarray) -> complex:
        if self.parity == "even":
            return complex(np.einsum("i,ii->", self.grading, X))
        return complex(KAPPA_ODD * np.trace(X))

    def weight(self) -> np.ndarray:
        """Diagonal weight w with tau(X) = sum_i w_i X_ii."""
        if self.parity == "even":
            return self.grading.astype(complex)
        return np.full(self.h_dim, KAPPA_ODD)

    def stacks(self) -> tuple:
        """(R, C, FR): operators of the unitized basis, their commutators with F, and F R."""
        R = np.concatenate([self.rho_basis, np.eye(self.h_dim, dtype=complex)[None]], axis=0)
        C = self.F @ R - R @ self.F
        return R, C, self.F @ R

    def check(self, atol: float = 1e-10) -> dict:
        """Residuals of the module axioms; raises ConfigInvalid beyond ``atol``."""
        h = self.h_dim
        res = {"F2": float(np.max(np.abs(self.F @ self.F - np.eye(h))))}
        prod = np.einsum("iab,jbc->ijac", self.rho_basis, self.rho_basis)
        want = np.tensordot(self.algebra.structure_constants, self.rho_basis, axes=([2], [0]))
        res["homomorphism"] = float(np.max(np.abs(prod - want), initial=0.0))
        if self.parity == "even":
            g = self.grading
            res["F_odd"] = float(np.max(np.abs(g[:, None] * self.F + self.F * g[None, :])))
            res["rho_even"] = float(np.max(np.abs(g[:, None] * self.rho_basis - self.rho_basis * g[None, :]), initial=0.0))
        bad = {k: v for k, v in res.items() if v > (1e-12 if k == "F2" else atol)}
        if bad:
            raise ConfigInvalid(f"module axioms violated: {bad}")
        return res

    def conjugated(self, U: np.ndarray) -> FredholmModule:
        """Module with rho replaced by U^-1 rho U (F and grading unchanged)."""
        Uinv = np.linalg.inv(U)
        return FredholmModule(self.algebra, Uinv @ self.rho_basis @ U, self.F, self.parity, self.p, self.grading, self.target)

    def direct_sum(self, other: FredholmModule) -> FredholmModule:
        if other.parity != self.parity or other.algebra is not self.algebra:
            raise ConfigInvalid("direct sums need the same algebra and parity")
        h1, h2 = self.h_dim, other.h_dim

        def block(a, b):
            out = np.zeros(a.shape[:-2] + (h1 + h2, h1 + h2), dtype=complex)
            out[..., :h1, :h1] = a
            out[..., h1:, h1:] = b
            return out

        grading = None if self.parity == "odd" else np.concatenate([self.grading, other.grading])
        return FredholmModule(self.algebra, block(self.rho_basis, other.rho_basis), block(self.F, other.F),
                              self.parity, max(self.p, other.p), grading, self.target)

    def to_json(self) -> str:
        pairs = lambda a: np.stack([a.real, a.imag], axis=-1).tolist()
        doc = {"h_dim": self.h_dim, "parity": self.parity, "p": self.p,
               "rho": pairs(self.rho_basis), "F": pairs(self.F),
               "grading": None if self.grading is None else self.grading.tolist()}
        return json.dumps(doc, sort_keys=True)


def load_module(algebra: FiniteAlgebra, source) -> FredholmModule:
    """Read a module from JSON text or a path.

    Keys: ``h_dim``, ``parity``, ``p``, ``rho`` (per-basis matrices), ``F`` and
    ``grading`` (diagonal).  Complex entries are ``[re, im]`` pairs or plain reals.
    """
    text = Path(source).read_text() if isinstance(source, Path) or (
        isinstance(source, str) and not source.lstrip().startswith("{")) else source
    doc = json.loads(text)

    def arr(x, ndim):
        a = np.asarray(x, dtype=float)
        return a[..., 0] + 1j * a[..., 1] if a.ndim == ndim + 1 else a.astype(complex)

    try:
        rho, F = arr(doc["rho"], 3), arr(doc["F"], 2)
        mod = FredholmModule(algebra, rho, F, doc["parity"], int(doc["p"]), doc.get("grading"))
    except KeyError as exc:
        raise ConfigInvalid(f"module description lacks {exc}") from None
    if mod.h_dim != int(doc["h_dim"]):
        raise ConfigInvalid("h_dim does not match the matrices")
    mod.check()
    return mod


# ---------------------------------------------------------------------------
# circle (Toeplitz) model


@dataclass(frozen=True)
class TrigPoly:
    """Trigonometric polynomial sum_k coeffs[k - low] z^k with exact products."""

    coeffs: np.ndarray
    low: int = 0

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        nz = np.nonzero(c)[0]
        low = self.low
        if nz.size:
            low += int(nz[0])
            c = c[nz[0]:nz[-1] + 1]
        else:
            c, low = np.zeros(1, dtype=complex), 0
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "low", low)

    @classmethod
    def monomial(cls, k: int, coeff: complex = 1.0) -> TrigPoly:
        return cls(np.array([coeff]), k)

    @classmethod
    def random(cls, rng: np.random.Generator, degree: int) -> TrigPoly:
        c = (2 * rng.random((2 * degree + 1, 2)) - 1).view(complex)[:, 0]
        return cls(c, -degree)

    @property
    def high(self) -> int:
        return self.low + len(self.coeffs) - 1

    @property
    def degree(self) -> int:
        return max(abs(self.low), abs(self.high))

    def coefficient(self, k: int) -> complex:
        i = k - self.low
        return complex(self.coeffs[i]) if 0 <= i < len(self.coeffs) else 0j

    def __mul__(self, other):
        if isinstance(other, TrigPoly):
            return TrigPoly(np.convolve(self.coeffs, other.coeffs), self.low + other.low)
        return TrigPoly(other * self.coeffs, self.low)

    __rmul__ = __mul__

    def __add__(self, other: TrigPoly) -> TrigPoly:
        lo, hi = min(self.low, other.low), max(self.high, other.high)
        out = np.zeros(hi - lo + 1, dtype=complex)
        out[self.low - lo:self.high - lo + 1] += self.coeffs
        out[other.low - lo:other.high - lo + 1] += other.coeffs
        return TrigPoly(out, lo)

    def __sub__(self, other: TrigPoly) -> TrigPoly:
        return self + (-1.0) * other

    def __call__(self, theta):
        k = np.arange(self.low, self.high + 1)
        return np.exp(1j * np.multiply.outer(theta, k)) @ self.coeffs

    def inverse(self) -> TrigPoly:
        """Inverse of a monomial; other trigonometric polynomials have none in the algebra."""
        if len(self.coeffs) != 1:
            raise ValueError("only monomials are invertible among trigonometric polynomials")
        return TrigPoly.monomial(-self.low, 1.0 / self.coeffs[0])


def _slot_degree(a) -> int:
    return 0 if a is None else a.degree


@dataclass(frozen=True)
class CircleModule:
    """Odd Toeplitz module on l^2 of the window [-M, M].

    ``F = sign`` of the Fourier mode with the zero mode counted positive.
    Multiplication operators are compressed to the window; traces of products
    containing a commutator are exact while the total symbol degree stays
    below the window radius (checked per term).
    """

    M: int
    p: int = 1
    parity: str = "odd"
    conjugator: np.ndarray | None = None

    @property
    def h_dim(self) -> int:
        return 2 * self.M + 1

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.M, self.M + 1)

    @property
    def F(self) -> np.ndarray:
        return np.diag(np.where(self.modes >= 0, 1.0, -1.0)).astype(complex)

    def multiplication(self, a: TrigPoly) -> np.ndarray:
        k = self.modes
        diff = k[:, None] - k[None, :]
        out = np.zeros((self.h_dim, self.h_dim), dtype=complex)
        mask = (diff >= a.low) & (diff <= a.high)
        out[mask] = a.coeffs[diff[mask] - a.low]
        return out

    def rho(self, a) -> np.ndarray:
        if a is None:
            return np.eye(self.h_dim, dtype=complex)
        X = self.multiplication(a)
        if self.conjugator is not None:
            U = self.conjugator
            X = np.linalg.solve(U, X @ U)
        return X

    def tau(self, X: np.ndarray) -> complex:
        return complex(KAPPA_ODD * np.trace(X))

    def check_window(self, slots) -> None:
        need = sum(_slot_degree(a) for a in slots) + 1
        if need > self.M:
            raise WindowTooSmall(f"total symbol degree needs window radius > {need - 1}, have {self.M}")

    def conjugated(self, U: np.ndarray) -> CircleModule:
        return CircleModule(self.M, self.p, self.parity, U)

    def compressed_toeplitz(self, a: TrigPoly) -> np.ndarray:
        """P rho(a) P on the nonnegative modes."""
        pos = self.modes >= 0
        return self.multiplication(a)[np.ix_(pos, pos)]


# ---------------------------------------------------------------------------
# cochain prefactors and admissibility


def chi_prefactor(n: int) -> float:
    return (-1) ** n * gamma(1 + n / 2) / factorial(n + 1)


def eta_prefactor(n: int) -> float:
    return gamma(n / 2 + 1) / factorial(n + 2) / 2


def _admissible(n: int, module) -> None:
    if n % 2 != (0 if module.parity == "even" else 1):
        raise ParityMismatch(f"degree {n} does not match a {module.parity} module")
    if n < module.p:
        raise SummabilityViolation(f"degree {n} is below the summability degree {module.p}")


# ---------------------------------------------------------------------------
# tensor route (finite algebras)


def _pad_slots(t: np.ndarray, m: int) -> np.ndarray:
    """Pad slots 1..n from m to m+1 entries so every slot uses the unitized stacks."""
    n = t.ndim - 1
    out = np.zeros((m + 1,) * (n + 1), dtype=complex)
    out[(slice(None),) + (slice(0, m),) * n] = t
    return out


def _rotate(t: np.ndarray, j: int) -> np.ndarray:
    """New slot s holds old slot (s + j) mod (n+1)."""
    k = t.ndim
    return np.transpose(t, [(s + j) % k for s in range(k)])


def _contract(t: np.ndarray, stacks: list, w: np.ndarray) -> complex:
    """sum over i of t[i0..ik] * sum_a w_a (S0[i0] S1[i1] .. Sk[ik])_aa."""
    h = w.shape[0]
    Y = np.tensordot(t, stacks[-1], axes=([t.ndim - 1], [0]))
    if len(stacks) == 1:
        return complex(np.einsum("a,aa->", w, Y))
    for S in reversed(stacks[1:-1]):
        q = S.shape[0]
        Y = Y.reshape(-1, q, h, h)
        Y = np.einsum("iab,pibc->pac", S, Y, optimize=True)
    Y = Y.reshape(stacks[0].shape[0], h, h)
    return complex(np.einsum("a,iab,iba->", w, stacks[0], Y, optimize=True))


def _chi_tensor(n: int, module: FredholmModule, t: np.ndarray) -> complex:
    m = module.algebra.dim
    T = _pad_slots(t, m) if n >= 1 else np.concatenate([t, [0]])
    R, C, _ = module.stacks()
    if n == 0:
        return chi_prefactor(0) * _contract(T, [R], module.weight())
    acc = np.zeros_like(T)
    for j in range(n + 1):
        acc += (-1) ** (j * n) * _rotate(T, j)
    return chi_prefactor(n) * _contract(acc, [R] + [C] * n, module.weight())


def _eta_tensor(n: int, module: FredholmModule, t: np.ndarray) -> complex:
    """eta^(n+1)_0 on a degree n+1 tensor."""
    k = n + 1
    T = _pad_slots(t, module.algebra.dim)
    R, C, FR = module.stacks()
    w = module.weight()
    total = _contract(T, [FR] + [C] * k, w)
    for i in range(1, k + 1):
        stacks = [C] * (k + 1)
        stacks[k + 1 - i] = FR
        total += (-1) ** (k * i) * _contract(_rotate(T, i), stacks, w)
    return eta_prefactor(n) * total


# ---------------------------------------------------------------------------
# chain route (any module)


def _product(mats) -> np.ndarray:
    out = mats[0]
    for X in mats[1:]:
        out = out @ X
    return out


def _chain_operators(module, slots):
    if isinstance(module, CircleModule):
        module.check_window(slots)
    R = [module.rho(a) for a in slots]
    F = module.F
    C = [F @ X - X @ F for X in R]
    return R, C, F


def _chi_term(n: int, module, slots) -> complex:
    R, C, _ = _chain_operators(module, slots)
    total = 0j
    for j in range(n + 1):
        order = [(s + j) % (n + 1) for s in range(n + 1)]
        mats = [R[order[0]]] + [C[i] for i in order[1:]]
        total += (-1) ** (j * n) * module.tau(_product(mats))
    return chi_prefactor(n) * total


def _eta_term(n: int, module, slots) -> complex:
    k = n + 1
    R, C, F = _chain_operators(module, slots)
    total = module.tau(_product([F @ R[0]] + C[1:]))
    for i in range(1, k + 1):
        mats = C[i:] + [F @ R[0]] + C[1:i]
        total += (-1) ** (k * i) * module.tau(_product(mats))
    return eta_prefactor(n) * total


# ---------------------------------------------------------------------------
# public cochains


def _component(x, deg: int):
    """Degree-deg part of a form or chain, or None when empty."""
    if isinstance(x, NCForm):
        return x.raw(deg) if deg <= x.top_degree else None
    part = x.homogeneous(deg)
    return part if part.terms else None


def _evaluate(x, deg: int, module, tensor_fn, term_fn, n: int) -> complex:
    part = _component(x, deg)
    if part is None:
        return 0j
    if isinstance(part, np.ndarray):
        return tensor_fn(n, module, part)
    return sum((c * term_fn(n, module, s) for c, s in part.terms), 0j)


def chi_even(n: int, module, x) -> XValue:
    """The chi^n cocycle on a form or chain.

    The R-valued component reads the degree-n part of ``x``; the Omega^1-valued
    component (degree n+1) vanishes for the scalar target used here.
    """
    _admissible(n, module)
    val = _evaluate(x, n, module, _chi_tensor, _chi_term, n)
    return XValue.make(CC, [val])


def eta(n_plus_1: int, module, x) -> XValue:
    """The eta^(n+1) transgression cochain; reads the degree n+1 part of ``x``."""
    n = n_plus_1 - 1
    _admissible(n, module)
    val = _evaluate(x, n + 1, module, _eta_tensor, _eta_term, n)
    return XValue.make(CC, [val])


def chi_cochain(n: int, module: FredholmModule) -> CochainOnForms:
    """chi^n as a scalar cochain on forms, for use with :func:`ncindex.nc_forms.pair`."""
    _admissible(n, module)
    return CochainOnForms(lambda k, t: _chi_tensor(n, module, t), {n}, module.parity)


def _boundary_of(x):
    return boundary(x) if isinstance(x, NCForm) else chain_b(x) + chain_B(x)


def transgression_residual(n: int, module, x) -> float:
    """|(chi^n - chi^(n+2))(x) - [boundary, eta^(n+1)](x)| for one form or chain.

    The graded commutator is X-boundary o eta - (-1)^(n+1) eta o (b+B), eta
    having degree n+1.
    """
    lhs = chi_even(n, module, x) - chi_even(n + 2, module, x)
    rhs = eta(n + 1, module, x).boundary() - (-1) ** (n + 1) * eta(n + 1, module, _boundary_of(x))
    return (lhs - rhs).max_abs()


def random_circle_chain(rng: np.random.Generator, degrees, terms: int = 2, symbol_degree: int = 2) -> Chain:
    out = []
    for n in degrees:
        for _ in range(terms):
            head = None if rng.random() < 0.25 else TrigPoly.random(rng, symbol_degree)
            slots = (head,) + tuple(TrigPoly.random(rng, symbol_degree) for _ in range(n))
            out.append(((2 * rng.random(2) - 1).view(complex)[0], slots))
    return Chain(out)


def transgression_check(n: int, module, trials: int, seed, workers: int = 1) -> float:
    """Max transgression residual over random inputs of degrees n..n+3.

    Finite-algebra modules get random tensors; circle modules get random chains
    of trigonometric polynomials.  Trial seeds are spawned from ``seed``.
    """
    _admissible(n, module)
    seeds = np.random.SeedSequence(seed).spawn(trials)
    degrees = list(range(n, n + 4))

    def one(ss) -> float:
        rng = np.random.default_rng(ss)
        if isinstance(module, CircleModule):
            x = random_circle_chain(rng, degrees)
        else:
            x = NCForm.random(module.algebra, n + 4, rng, degrees=degrees)
        return transgression_residual(n, module, x)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return max(pool.map(one, seeds))
    return max(map(one, seeds))


# ---------------------------------------------------------------------------
# index pairing and the operator-index oracle


def minimal_degree(module) -> int:
    start = module.p
    want = 0 if module.parity == "even" else 1
    return start if start % 2 == want else start + 1


def chern_of(module, k_class, kind: str, N: int):
    """Chern character of a K-class in the representation matching the module."""
    if kind == "idempotent":
        if isinstance(k_class, AlgebraElement):
            return chern_idempotent(k_class, N)
        return chain_chern_idempotent(k_class, N)
    if kind == "invertible":
        if isinstance(k_class, AlgebraElement):
            return chern_invertible(k_class, N)
        return chain_chern_invertible(k_class, k_class.inverse(), N)
    raise ValueError("kind must be 'idempotent' or 'invertible'")


def index_pairing(module, k_class, kind: str, n: int | None = None) -> complex:
    """<chi^n, ch(k_class)> at the minimal admissible degree unless ``n`` is given."""
    want = "even" if kind == "idempotent" else "odd"
    if module.parity != want:
        raise ParityMismatch(f"{kind} classes pair with {want} modules")
    n = minimal_degree(module) if n is None else n
    x = chern_of(module, k_class, kind, n + 1)
    return chi_even(n, module, x).scalar


def _numerical_nullity(A: np.ndarray) -> int:
    if A.shape[1] == 0:
        return 0
    if A.shape[0] == 0:
        return A.shape[1]
    s = np.linalg.svd(A, compute_uv=False)
    scale = max(s[0] if s.size else 0.0, 1.0)
    cut = RANK_CUTOFF * scale
    near = (s > cut * 1e-2) & (s < cut * 1e2)
    if np.any(near):
        raise IllConditioned("singular values cluster at the rank cutoff")
    return A.shape[1] - int(np.sum(s > cut))


def operator_index_oracle(module, u_or_e, kind: str | None = None) -> int:
    """dim ker - dim coker of the compressed operator, by numerical rank.

    Circle modules: the Toeplitz operator of the symbol ``u`` on the
    nonnegative modes; the kernels of T_u and T_u* are counted on finite
    sections large enough to contain every polynomial kernel vector.  With the
    mode conventions here u = z has index -1 and the pairing equals minus
    this oracle.

    Even finite modules: rho_-(e) F rho_+(e) from the range of rho_+(e) to
    the range of rho_-(e); in finite dimensions this is the rank difference.
    """
    if isinstance(module, CircleModule):
        u = u_or_e
        L = module.M
        sections = CircleModule(L + u.degree)
        T = sections.compressed_toeplitz(u)[:, : L + 1]
        adj = TrigPoly(np.conj(u.coeffs[::-1]), -u.high)
        Tstar = sections.compressed_toeplitz(adj)[:, : L + 1]
        return _numerical_nullity(T) - _numerical_nullity(Tstar)
    if module.parity != "even":
        # finite-dimensional odd modules: the compressed Toeplitz operator acts on a finite space
        return 0
    e = u_or_e
    g = module.grading
    P = module.rho(e)
    plus, minus = P[np.ix_(g > 0, g > 0)], P[np.ix_(g < 0, g < 0)]
    Fpm = module.F[np.ix_(g < 0, g > 0)]
    rng_plus = _range_basis(plus)
    rng_minus = _range_basis(minus)
    T = rng_minus.conj().T @ minus @ Fpm @ plus @ rng_plus
    return _numerical_nullity(T) - _numerical_nullity(T.conj().T)


def _range_basis(P: np.ndarray) -> np.ndarray:
    U, s, _ = np.linalg.svd(P)
    if s.size == 0 or s[0] == 0:
        return U[:, :0]
    return U[:, : int(np.sum(s > RANK_CUTOFF * s[0]))]


# ---------------------------------------------------------------------------
# model builders


def toeplitz_even_module(algebra: FiniteAlgebra, copies: int) -> FredholmModule:
    """Even module rho_+ = a (x) 1, rho_- = a (x) SS* with S the unilateral shift on C^copies.

    F swaps the two halves.  A rank-r projector pairs to r.
    """
    mats = np.array([matrix_of(b) for b in (algebra.basis(i) for i in range(algebra.dim))])
    q = copies
    shift = np.eye(q, k=-1)
    SS = shift @ shift.T
    plus = np.array([np.kron(a, np.eye(q)) for a in mats])
    minus = np.array([np.kron(a, SS) for a in mats])
    h = plus.shape[1]
    rho = np.zeros((algebra.dim, 2 * h, 2 * h), dtype=complex)
    rho[:, :h, :h] = plus
    rho[:, h:, h:] = minus
    F = np.block([[np.zeros((h, h)), np.eye(h)], [np.eye(h), np.zeros((h, h))]])
    grading = np.concatenate([np.ones(h), -np.ones(h)])
    return FredholmModule(algebra, rho, F, "even", 0, grading)


def random_unitary(rng: np.random.Generator, h: int) -> np.ndarray:
    Z = (rng.standard_normal((h, h)) + 1j * rng.standard_normal((h, h))) / np.sqrt(2)
    Q, Rm = np.linalg.qr(Z)
    return Q * (np.diag(Rm) / np.abs(np.diag(Rm)))


def _block_representation(mats: np.ndarray, h: int, rng) -> np.ndarray:
    """a -> U (a (x) 1_k + 0) U*, a dense homomorphism into h x h matrices."""
    n = mats.shape[1]
    k = max(1, h // n - (1 if h % n == 0 and h // n > 1 else 0))
    base = np.zeros((mats.shape[0], h, h), dtype=complex)
    base[:, : n * k, : n * k] = np.array([np.kron(a, np.eye(k)) for a in mats])
    U = random_unitary(rng, h)
    return U @ base @ U.conj().T


def random_dense_module(algebra: FiniteAlgebra, h: int, parity: str, seed) -> FredholmModule:
    """Random module with dense operators; matrix algebras only (rho is a block embedding).

    Odd: rho on C^h and a random hermitian involution G.  Even: two independent
    embeddings rho_+, rho_- and F swapping the halves through a random unitary.
    """
    rng = np.random.default_rng(seed)
    mats = np.array([matrix_of(b) for b in (algebra.basis(i) for i in range(algebra.dim))])
    if parity == "odd":
        rho = _block_representation(mats, h, rng)
        V = random_unitary(rng, h)
        signs = np.where(np.arange(h) < h // 2, 1.0, -1.0)
        G = V @ np.diag(signs) @ V.conj().T
        return FredholmModule(algebra, rho, G, "odd", 1)
    plus = _block_representation(mats, h, rng)
    minus = _block_representation(mats, h, rng)
    V = random_unitary(rng, h)
    rho = np.zeros((algebra.dim, 2 * h, 2 * h), dtype=complex)
    rho[:, :h, :h] = plus
    rho[:, h:, h:] = minus
    Z = np.zeros((h, h))
    F = np.block([[Z, V.conj().T], [V, Z]])
    grading = np.concatenate([np.ones(h), -np.ones(h)])
    return FredholmModule(algebra, rho, F, "even", 0, grading)


# ---------------------------------------------------------------------------
# summability


def schatten_sum(module: CircleModule, a: TrigPoly, p: float) -> float:
    X = module.rho(a)
    s = np.linalg.svd(module.F @ X - X @ module.F, compute_uv=False)
    return float(np.sum(s[s > RANK_CUTOFF * max(s[0], 1e-300)] ** p)) if s.size and s[0] > 0 else 0.0


def summability_check(a: TrigPoly, p: float, windows=(8, 16, 32, 64)) -> dict:
    """Schatten-p sums of [F, rho(a)] over growing windows.

    Passes when the sums never decrease and stop growing: the increments of the
    last half of the windows are below 1e-8 relative to the total.
    """
    sums = [schatten_sum(CircleModule(M), a, p) for M in windows]
    diffs = np.diff(sums)
    monotone = bool(np.all(diffs >= -1e-9 * max(sums[-1], 1.0)))
    tail = diffs[len(diffs) // 2:] if diffs.size else diffs
    bounded = bool(np.all(np.abs(tail) <= 1e-8 * max(sums[-1], 1.0)))
    return {"windows": list(windows), "sums": sums, "monotone": monotone, "bounded": bounded,
            "passed": monotone and bounded}
