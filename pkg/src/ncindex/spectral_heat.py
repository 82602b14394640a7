"""Spectral triples, heat operators, the JLO cocycle and the residue cocycle.

Two backends:

* ``dense``: a finite algebra represented on C^h with a hermitian D.
* ``circle_exact``: trigonometric polynomials acting on the Fourier window
  [-M, M] with D = diag(k), except that the zero mode gets eigenvalue 1/2 so
  that D is invertible.  Zeta functions on this backend are exact sums of
  Hurwitz zeta functions (see :class:`ZetaTrace`).

JLO simplex integrals are evaluated exactly in the eigenbasis of D: the
integral of prod exp(-s_i mu_i) over the standard n-simplex equals
(-1)^n times the divided difference of exp(-x) at (mu_0, .., mu_n).

Odd triples use the same supertrace convention as odd Fredholm modules,
``tau(X (x) eps) = KAPPA_ODD * Tr X``.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from math import factorial, gamma

import numpy as np
import mpmath
from scipy.linalg import expm

from .algebra_core import FiniteAlgebra, invert, matrix_of
from .errors import (
    BackendUnsupported,
    ConfigInvalid,
    DerivativeCapExceeded,
    ParityMismatch,
    WindowTooSmall,
    ZeroMode,
)
from .fredholm_pairing import (
    KAPPA_ODD,
    CircleModule,
    FredholmModule,
    TrigPoly,
    index_pairing,
    random_unitary,
)
from .nc_forms import Chain, chain_chern_idempotent, chain_chern_invertible

K_MAX = 6
SERIES_TERMS = 30  # Taylor terms for points spread at most 1


# ---------------------------------------------------------------------------
# divided differences of exp(-x)


def _taylor_table(q: np.ndarray, scale: float) -> np.ndarray:
    """Upper-triangular table T[i, j] = scale^(j-i) exp[q_i, .., q_j] for points spread <= 1.

    Expands around min(q) so every term is nonnegative.
    """
    n = q.shape[-1]
    lo = np.min(q, axis=-1)
    y = q - lo[..., None]
    inv_fact = np.array([1.0 / factorial(m) for m in range(n + SERIES_TERMS + 1)])
    T = np.zeros(q.shape[:-1] + (n, n))
    for i in range(n):
        # h[..., m] = complete homogeneous h_m(y_i, .., y_j), extended one point at a time
        h = np.ones(q.shape[:-1] + (SERIES_TERMS + 1,))
        h *= y[..., i, None] ** np.arange(SERIES_TERMS + 1)
        for j in range(i, n):
            if j > i:
                for m in range(1, SERIES_TERMS + 1):
                    h[..., m] += y[..., j] * h[..., m - 1]
            k = j - i
            T[..., i, j] = scale ** k * (h @ inv_fact[k: k + SERIES_TERMS + 1])
    return np.exp(lo)[..., None, None] * T


def divided_difference_exp(x) -> np.ndarray:
    """Divided differences exp(-.)[x_0, .., x_n] along the last axis.

    Uses exp(A)[0, n] for the bidiagonal A with diagonal -x and unit
    superdiagonal: after shifting by the largest diagonal entry every entry of
    exp(A / 2^s) is nonnegative, so a Taylor start and s squarings keep full
    relative accuracy even for clustered or widely spread points.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1] - 1
    y = -x
    top = np.max(y, axis=-1)
    p = y - top[..., None]
    spread = float(np.max(-p, initial=0.0))
    s = max(0, int(np.ceil(np.log2(spread)))) if spread > 1.0 else 0
    T = _taylor_table(p / 2.0 ** s, 2.0 ** -s)
    for _ in range(s):
        T = T @ T
    return (-1.0) ** n * np.exp(top) * T[..., 0, n]


def simplex_exp_integral(mu) -> np.ndarray:
    """Integral over the standard n-simplex of exp(-sum_i s_i mu_i) (last axis holds mu)."""
    mu = np.asarray(mu, dtype=float)
    return (-1.0) ** (mu.shape[-1] - 1) * divided_difference_exp(mu)


# ---------------------------------------------------------------------------
# spectral triples


@dataclass(frozen=True)
class SpectralTriple:
    """Truncated spectral triple.

    ``dense``: ``rho_basis`` (dim, h, h) over ``algebra`` and hermitian ``D``.
    ``circle_exact``: window radius ``M``; elements are :class:`TrigPoly`.
    """

    backend: str
    parity: str
    D: np.ndarray
    algebra: FiniteAlgebra | None = None
    rho_basis: np.ndarray | None = None
    grading: np.ndarray | None = None
    M: int | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        D = np.array(self.D, dtype=complex)
        if np.max(np.abs(D - D.conj().T), initial=0.0) > 1e-12:
            raise ConfigInvalid("D must be hermitian")
        if self.parity not in ("even", "odd") or self.backend not in ("dense", "circle_exact"):
            raise ConfigInvalid("unknown parity or backend")
        if self.parity == "even" and self.grading is None:
            raise ConfigInvalid("even triples need a grading")
        D.setflags(write=False)
        object.__setattr__(self, "D", D)

    @classmethod
    def circle(cls, M: int) -> SpectralTriple:
        k = np.arange(-M, M + 1).astype(float)
        k[M] = 0.5
        return cls("circle_exact", "odd", np.diag(k), M=M)

    @classmethod
    def dense(cls, algebra: FiniteAlgebra, rho_basis, D, parity: str = "odd", grading=None) -> SpectralTriple:
        return cls("dense", parity, D, algebra=algebra, rho_basis=np.asarray(rho_basis, dtype=complex),
                   grading=None if grading is None else np.asarray(grading, dtype=float))

    @property
    def h_dim(self) -> int:
        return self.D.shape[0]

    def eig(self) -> tuple:
        """Cached (eigenvalues, eigenvectors) of D."""
        with self._lock:
            if "eig" not in self._cache:
                if self.backend == "circle_exact":
                    self._cache["eig"] = (np.real(np.diag(self.D)).copy(), np.eye(self.h_dim, dtype=complex))
                else:
                    self._cache["eig"] = np.linalg.eigh(self.D)
            return self._cache["eig"]

    def heat(self, t: float) -> np.ndarray:
        """exp(-t D^2)."""
        if t <= 0:
            raise ValueError("heat time must be positive")
        lam, V = self.eig()
        return (V * np.exp(-t * lam ** 2)) @ V.conj().T

    def rho(self, a) -> np.ndarray:
        if a is None:
            return np.eye(self.h_dim, dtype=complex)
        if self.backend == "circle_exact":
            return CircleModule(self.M).multiplication(a)
        return np.tensordot(a.coeffs, self.rho_basis, axes=1)

    def weight(self) -> np.ndarray:
        if self.parity == "even":
            return np.asarray(self.grading, dtype=complex)
        return np.full(self.h_dim, KAPPA_ODD)

    def tau(self, X: np.ndarray) -> complex:
        return complex(self.weight() @ np.diag(X))

    def fredholm_module(self):
        """Bounded module with F = D/|D|."""
        lam, V = self.eig()
        if np.any(np.abs(lam) < 1e-12):
            raise ZeroMode("D has a kernel; F = D/|D| is undefined")
        if self.backend == "circle_exact":
            return CircleModule(self.M)
        F = (V * np.sign(lam)) @ V.conj().T
        p = 0 if self.parity == "even" else 1
        return FredholmModule(self.algebra, self.rho_basis, F, self.parity, p, self.grading)


# ---------------------------------------------------------------------------
# JLO cocycle


def _sparse(X: np.ndarray, atol: float = 0.0):
    r, c = np.nonzero(np.abs(X) > atol)
    return r, c, X[r, c]


def _loop_sum(mats, weight: np.ndarray, mu_of_index: np.ndarray, t: float) -> complex:
    """sum over closed index paths j0 -> j1 -> .. -> j0 of
    weight[j0] prod mats[i][j_i, j_(i+1)] * simplex integral at t*mu(j_1, .., j_n, j_0)."""
    r, c, v = _sparse(mats[0])
    start, cur, val = r, c, v * weight[r]
    visited = [c]
    for X in mats[1:]:
        r, c, v = _sparse(X)
        order = np.argsort(r, kind="stable")
        r, c, v = r[order], c[order], v[order]
        lo = np.searchsorted(r, cur, side="left")
        hi = np.searchsorted(r, cur, side="right")
        counts = hi - lo
        idx = np.repeat(np.arange(cur.size), counts)
        offs = np.arange(idx.size) - np.repeat(np.cumsum(counts) - counts, counts)
        pos = np.repeat(lo, counts) + offs
        start, val = start[idx], val[idx] * v[pos]
        visited = [w[idx] for w in visited] + [c[pos]]
        cur = c[pos]
    closed = cur == start
    if not np.any(closed):
        return 0j
    # exponentials sit after each factor: at j_1, .., j_n and finally j_0
    mu = np.stack([mu_of_index[w[closed]] for w in visited], axis=-1)
    return complex(np.sum(val[closed] * simplex_exp_integral(t * mu)))


def _eigen_operators(triple: SpectralTriple, t: float, a) -> tuple:
    """Matrices of a0, [sqrt(t) D, a_i] in the eigenbasis of D, the trace weight and t*lambda^2."""
    lam, V = triple.eig()
    Vh = V.conj().T
    ops = [Vh @ triple.rho(x) @ V for x in a]
    mats = [ops[0]] + [np.sqrt(t) * (lam[:, None] * X - X * lam[None, :]) for X in ops[1:]]
    if triple.parity == "even":
        # the grading anticommutes with D, so it is not diagonal in this basis
        mats[0] = (Vh * triple.weight()) @ V @ mats[0]
        w = np.ones(triple.h_dim, dtype=complex)
    else:
        w = triple.weight()
    return mats, w, t * lam ** 2


def jlo_prefactor(n: int) -> float:
    """Sign carried by the degree-n term of the Duhamel expansion."""
    return (-1.0) ** n


def _check_parity(triple: SpectralTriple, n: int) -> None:
    if n % 2 != (0 if triple.parity == "even" else 1):
        raise ParityMismatch(f"degree {n} does not match a {triple.parity} triple")


def _block_simplex(H: np.ndarray, B: list) -> np.ndarray:
    """Simplex integral of e^(-s0 H) B_1 e^(-s1 H) .. B_n e^(-sn H) as a corner of one exponential.

    The block bidiagonal matrix with -H on the diagonal and B_i above it has
    exactly this integral in its top-right block.
    """
    h, n = H.shape[0], len(B)
    big = np.zeros(((n + 1) * h, (n + 1) * h), dtype=complex)
    for i in range(n + 1):
        big[i * h:(i + 1) * h, i * h:(i + 1) * h] = -H
    for i, X in enumerate(B):
        big[i * h:(i + 1) * h, (i + 1) * h:(i + 2) * h] = X
    return expm(big)[:h, n * h:]


def jlo(n: int, t: float, a, triple: SpectralTriple, method: str = "auto") -> complex:
    """Degree-n JLO cochain of the triple rescaled to sqrt(t) D, on (a_0, .., a_n).

    Equals (-1)^n times the simplex integral of
    tau(a0 e^(-s0 t D^2) [sqrt(t) D, a1] e^(-s1 t D^2) .. [sqrt(t) D, an] e^(-sn t D^2)).
    ``method``: "paths" sums closed index paths in the eigenbasis with exact
    divided differences (cheap for banded circle operators); "block" takes a
    block matrix exponential (dense triples, any degree).  ``a_0 = None`` is the unit.
    """
    if len(a) != n + 1:
        raise ValueError("jlo needs n+1 entries")
    _check_parity(triple, n)
    if t <= 0:
        raise ValueError("t must be positive")
    if method == "auto":
        method = "paths" if triple.backend == "circle_exact" else "block"
    if method == "paths":
        mats, w, mu = _eigen_operators(triple, t, a)
        return jlo_prefactor(n) * _loop_sum(mats, w, mu / t, t)
    D = triple.D
    ops = [triple.rho(x) for x in a]
    corner = _block_simplex(t * D @ D, [np.sqrt(t) * (D @ X - X @ D) for X in ops[1:]])
    return jlo_prefactor(n) * triple.tau(ops[0] @ corner)


def jlo_on_chain(triple: SpectralTriple, t: float, x: Chain, degrees=None) -> complex:
    """JLO cochain summed over the terms of a chain (degrees of the wrong parity are skipped)."""
    want = 0 if triple.parity == "even" else 1
    total = 0j
    for c, slots in x.terms:
        n = len(slots) - 1
        if n % 2 != want or (degrees is not None and n not in degrees):
            continue
        if any(s is None for s in slots[1:]):
            continue  # [D, 1] = 0
        total += c * jlo(n, t, list(slots), triple)
    return total


def _as_chain(k_class, kind: str, N: int) -> Chain:
    if kind == "idempotent":
        return chain_chern_idempotent(k_class, N)
    uinv = k_class.inverse() if isinstance(k_class, TrigPoly) else invert(k_class)
    return chain_chern_invertible(k_class, uinv, N)


def jlo_pairing(triple: SpectralTriple, k_class, kind: str, t: float = 1.0,
                tol: float = 1e-14, max_degree: int = 61) -> complex:
    """<JLO_t, ch(k_class)>, summing Chern degrees until a term drops below ``tol``."""
    want = "even" if kind == "idempotent" else "odd"
    if triple.parity != want:
        raise ParityMismatch(f"{kind} classes pair with {want} triples")
    n = 0 if kind == "idempotent" else 1
    total, small = 0j, 0
    while n <= max_degree:
        x = _as_chain(k_class, kind, n).homogeneous(n)
        term = jlo_on_chain(triple, t, x)
        total += term
        small = small + 1 if abs(term) < tol else 0
        if small >= 2:
            break
        n += 2
    return total


def jlo_pairing_t_independence(triple: SpectralTriple, k_class, t_list, kind: str = "invertible") -> float:
    """max |pairing(t_i) - pairing(t_j)| over ``t_list``."""
    vals = [jlo_pairing(triple, k_class, kind, t) for t in t_list]
    return float(max(abs(a - b) for a in vals for b in vals))


def retraction_compare(triple: SpectralTriple, k_class, kind: str = "invertible", t: float = 1.0) -> tuple:
    """(JLO pairing, chi pairing of the module with F = D/|D|, difference)."""
    module = triple.fredholm_module()
    j = jlo_pairing(triple, k_class, kind, t)
    c = index_pairing(module, k_class, kind)
    return j, c, j - c


# ---------------------------------------------------------------------------
# Monte-Carlo check of the simplex integration


def jlo_monte_carlo(triple: SpectralTriple, t: float, a, samples: int, seed) -> tuple:
    """Monte-Carlo estimate of the unsigned JLO simplex integral: (mean, standard error).

    Points are uniform on the simplex (Dirichlet(1, .., 1)); the simplex volume is 1/n!.
    """
    n = len(a) - 1
    rng = np.random.default_rng(seed)
    mats, w, mu = _eigen_operators(triple, t, a)
    s = rng.dirichlet(np.ones(n + 1), size=samples)
    # e^(-s_i mu) after factor i, in the eigenbasis: column scaling
    acc = mats[0][None] * np.exp(-s[:, 0, None] * mu)[:, None, :]
    for i in range(1, n + 1):
        acc = acc @ mats[i]
        acc = acc * np.exp(-s[:, i, None] * mu)[:, None, :]
    vals = np.einsum("a,paa->p", w, acc) / factorial(n)
    return complex(vals.mean()), float(np.std(vals) / np.sqrt(samples))


def jlo_unsigned(triple: SpectralTriple, t: float, a) -> complex:
    """The simplex integral itself (no Duhamel sign), the quantity Monte-Carlo estimates."""
    mats, w, mu = _eigen_operators(triple, t, a)
    return _loop_sum(mats, w, mu / t, t)


# ---------------------------------------------------------------------------
# exact circle calculus: window matrices plus asymptotic symbols


def _poly_shift(p: np.ndarray, s: int) -> np.ndarray:
    """Coefficients of q(l) = p(l + s) (ascending powers)."""
    n = len(p)
    out = np.zeros(n, dtype=complex)
    for i in range(n):
        for j in range(i + 1):
            out[j] += p[i] * _binom(i, j) * s ** (i - j)
    return out


def _binom(n: int, k: int) -> int:
    return factorial(n) // (factorial(k) * factorial(n - k))


def _poly_add(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    out = np.zeros(max(len(p), len(q)), dtype=complex)
    out[: len(p)] += p
    out[: len(q)] += q
    return out


@dataclass(frozen=True)
class CircleOp:
    """Operator on l^2(Z) built from multiplications by trigonometric polynomials, D, |D| and F.

    ``matrix`` is exact on the window [-W, W] for modes with |l| <= W - band.
    ``symbols[side]`` maps a shift m to a polynomial P_m (ascending
    coefficients) with O e_l = sum_m P_m(l) e_(l+m); it is exact for
    ``side * l > band``, away from the modified zero mode.
    """

    W: int
    matrix: np.ndarray
    symbols: tuple
    band: int

    @staticmethod
    def _window_modes(W: int) -> np.ndarray:
        return np.arange(-W, W + 1)

    @classmethod
    def diagonal(cls, W: int, values: np.ndarray, plus: list, minus: list) -> CircleOp:
        return cls(W, np.diag(values).astype(complex),
                   ({0: np.asarray(plus, dtype=complex)}, {0: np.asarray(minus, dtype=complex)}), 0)

    @classmethod
    def dirac(cls, W: int) -> CircleOp:
        k = cls._window_modes(W).astype(float)
        k[W] = 0.5
        return cls.diagonal(W, k, [0, 1], [0, 1])

    @classmethod
    def abs_dirac(cls, W: int) -> CircleOp:
        k = np.abs(cls._window_modes(W)).astype(float)
        k[W] = 0.5
        return cls.diagonal(W, k, [0, 1], [0, -1])

    @classmethod
    def sign(cls, W: int) -> CircleOp:
        k = np.where(cls._window_modes(W) >= 0, 1.0, -1.0)
        return cls.diagonal(W, k, [1], [-1])

    @classmethod
    def identity(cls, W: int) -> CircleOp:
        return cls.diagonal(W, np.ones(2 * W + 1), [1], [1])

    @classmethod
    def multiplication(cls, W: int, a: TrigPoly) -> CircleOp:
        mat = CircleModule(W).multiplication(a)
        sym = {m: np.array([a.coefficient(m)]) for m in range(a.low, a.high + 1) if a.coefficient(m) != 0}
        return cls(W, mat, (sym, dict(sym)), a.degree)

    def __matmul__(self, other: CircleOp) -> CircleOp:
        syms = []
        for A, B in zip(self.symbols, other.symbols):
            out = {}
            for m1, p1 in A.items():
                for m2, p2 in B.items():
                    prod = np.polynomial.polynomial.polymul(_poly_shift(p1, m2), p2)
                    out[m1 + m2] = _poly_add(out.get(m1 + m2, np.zeros(1, dtype=complex)), prod)
            syms.append(out)
        return CircleOp(self.W, self.matrix @ other.matrix, tuple(syms), self.band + other.band)

    def __add__(self, other: CircleOp) -> CircleOp:
        syms = []
        for A, B in zip(self.symbols, other.symbols):
            out = dict(A)
            for m, p in B.items():
                out[m] = _poly_add(out.get(m, np.zeros(1, dtype=complex)), p)
            syms.append(out)
        return CircleOp(self.W, self.matrix + other.matrix, tuple(syms), max(self.band, other.band))

    def __mul__(self, scalar) -> CircleOp:
        syms = tuple({m: scalar * p for m, p in S.items()} for S in self.symbols)
        return CircleOp(self.W, scalar * self.matrix, syms, self.band)

    __rmul__ = __mul__

    def __sub__(self, other: CircleOp) -> CircleOp:
        return self + (-1.0) * other

    def commutator(self, other: CircleOp) -> CircleOp:
        return self @ other - other @ self

    def diagonal_symbol(self, side: int) -> np.ndarray:
        return self.symbols[0 if side > 0 else 1].get(0, np.zeros(1, dtype=complex))


@dataclass(frozen=True)
class ZetaTrace:
    """z -> Tr(Y |D|^(-z)) on the circle as finite sums of Hurwitz zeta functions.

    ``finite``: (values, moduli) of the diagonal entries with |l| <= J, whose
    contribution is the entire function sum_l values_l moduli_l^(-z).
    ``hurwitz``: list of (c, r) meaning c * zeta_H(z - r, J + 1); each has a
    simple pole at z = r + 1 with residue c.
    ``shift``: the function is evaluated at z + shift, i.e. Tr(Y |D|^(-z - shift)).
    """

    finite: tuple
    hurwitz: tuple
    J: int
    shift: int = 0

    def __call__(self, z, window: int | None = None) -> complex:
        """Value at z; with ``window`` = M the sum is cut to modes |l| <= M."""
        z = z + self.shift
        vals, mods = self.finite
        total = complex(np.sum(vals * mods ** (-complex(z))))
        for c, r in self.hurwitz:
            term = mpmath.zeta(z - r, self.J + 1)
            if window is not None:
                term -= mpmath.zeta(z - r, window + 1)
            total += complex(c * complex(term))
        return total

    def poles(self) -> dict:
        """Pole location -> residue."""
        out = {}
        for c, r in self.hurwitz:
            if c != 0:
                out[r + 1 - self.shift] = out.get(r + 1 - self.shift, 0j) + c
        return {k: v for k, v in out.items() if abs(v) > 0}

    def laurent(self, z0: float) -> tuple:
        """(residue, finite part) at z0."""
        z0 = z0 + self.shift
        vals, mods = self.finite
        res, fin = 0j, complex(np.sum(vals * mods ** (-float(z0))))
        for c, r in self.hurwitz:
            if z0 - r == 1:
                res += c
                fin += -c * float(mpmath.digamma(self.J + 1))
            else:
                fin += c * complex(mpmath.zeta(z0 - r, self.J + 1))
        return res, fin


def zeta_of(Y: CircleOp) -> ZetaTrace:
    """ZetaTrace of Tr(Y |D|^(-z)) for a circle operator."""
    J = Y.band
    if Y.W < 2 * J + 1:
        raise WindowTooSmall(f"window {Y.W} too small for band {J}")
    modes = CircleOp._window_modes(Y.W)
    inner = np.abs(modes) <= J
    mods = np.abs(modes[inner]).astype(float)
    mods[mods == 0] = 0.5
    vals = np.diag(Y.matrix)[inner]
    plus, minus = Y.diagonal_symbol(1), Y.diagonal_symbol(-1)
    hurwitz = []
    for r in range(max(len(plus), len(minus))):
        c = (plus[r] if r < len(plus) else 0) + (-1) ** r * (minus[r] if r < len(minus) else 0)
        if c != 0:
            hurwitz.append((complex(c), r))
    return ZetaTrace((vals, mods), tuple(hurwitz), J)


def zeta_trace(triple: SpectralTriple, a: TrigPoly, s_shift: int = 0) -> ZetaTrace:
    """z -> Tr(a |D|^(-z - s_shift)) for a multiplication operator on the circle."""
    if triple.backend != "circle_exact":
        raise BackendUnsupported("zeta functions need the circle_exact backend")
    Z = zeta_of(CircleOp.multiplication(2 * a.degree + 2, a))
    return ZetaTrace(Z.finite, Z.hurwitz, Z.J, int(s_shift))


# ---------------------------------------------------------------------------
# residue cocycle


def residue_constant(ks) -> float:
    """c(k_0, .., k_n) = 1 / (k_0! .. k_n! (k_0+1)(k_0+k_1+2) .. (k_0+..+k_n+n+1))."""
    denom, partial = 1, 0
    for i, k in enumerate(ks):
        partial += k
        denom *= factorial(k) * (partial + i + 1)
    return 1.0 / denom


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _gamma_ratio_laurent(k: int, n: int) -> tuple:
    """(coefficient of 1/z, value at 0) of Gamma(z + k + n/2) / Gamma(z + 1)."""
    if k == 0 and n == 0:
        return 1.0, 0.0  # exactly 1/z
    return 0.0, gamma(k + n / 2)


def _residue_term(n: int, slots, ks, W: int) -> complex:
    """Res_(z=0) of the k-multi-index summand, before the (-1)^(k+n) c(k) factor."""
    D = CircleOp.dirac(W)
    D2 = D @ D
    ops = [CircleOp.identity(W) if a is None else CircleOp.multiplication(W, a) for a in slots]
    k = sum(ks)
    g_pole, g0 = _gamma_ratio_laurent(k, n)
    total = 0j
    for i in range(n + 1):
        # factor order: d x_(n-i+1), .., d x_n, x_0, d x_1, .., d x_(n-i)
        order = [(n - i + 1 + j) % (n + 1) for j in range(n + 1)]
        Y = None
        for pos, slot in enumerate(order):
            X = ops[slot]
            for _ in range(ks[pos]):
                X = D2.commutator(X)
            if slot != 0:
                X = D.commutator(X)
            Y = X if Y is None else Y @ X
        Z = zeta_of(Y)
        # Tr(Y |D|^(-s)) at s = 2(z + k) + n: a pole at s = r + 1 gives residue c / 2 in z
        s0 = 2 * k + n
        res_s, fin_s = Z.laurent(s0)
        res_z = res_s / 2
        total += (-1) ** (i * (n - 1)) * (g0 * res_z + g_pole * fin_s)
    return total


def residue_cocycle(n: int, x: Chain, triple: SpectralTriple, k_max: int = K_MAX) -> complex:
    """chi_R^n on a chain of trigonometric polynomials (scalar target).

    Sums the residue formula over derivative orders with total k <= k_max;
    raises DerivativeCapExceeded if the last shell still contributes.
    """
    if triple.backend != "circle_exact":
        raise BackendUnsupported("the residue cocycle needs the circle_exact backend")
    _check_parity(triple, n)
    kappa = KAPPA_ODD if triple.parity == "odd" else 1.0
    total = 0j
    for c, slots in x.homogeneous(n).terms:
        if any(s is None for s in slots[1:]):
            continue
        budget = sum(0 if s is None else s.degree for s in slots)
        W = 2 * (budget * (k_max + 2) + 2) + 2
        shell = 0j
        for k in range(k_max + 1):
            shell = 0j
            for ks in _compositions(k, n + 1):
                shell += (-1) ** (k + n) * residue_constant(ks) * _residue_term(n, slots, ks, W)
            total += c * kappa * shell
        if abs(shell) > 1e-12:
            raise DerivativeCapExceeded(f"terms with total derivative order {k_max} still contribute")
    return total


def residue_pairing(triple: SpectralTriple, k_class, kind: str = "invertible", n: int = 1) -> complex:
    """<chi_R^n, ch(k_class)> on the circle."""
    x = _as_chain(k_class, kind, n)
    return residue_cocycle(n, x, triple)


def _unital_representation(mats: np.ndarray, h: int, rng) -> np.ndarray:
    """a -> U (a (x) 1) U*, a unital dense embedding into h x h matrices."""
    n = mats.shape[1]
    if h % n:
        raise ConfigInvalid(f"dimension {h} is not a multiple of {n}")
    U = random_unitary(rng, h)
    return U @ np.array([np.kron(a, np.eye(h // n)) for a in mats]) @ U.conj().T


def random_dense_triple(algebra: FiniteAlgebra, h: int, parity: str, seed) -> SpectralTriple:
    """Random dense triple over a matrix algebra with a unital representation and invertible D.

    Odd: one embedding on C^h.  Even: embeddings on both halves of C^h, a
    diagonal grading and D = [[0, T*], [T, 0]] with T invertible.
    """
    rng = np.random.default_rng(seed)
    mats = np.array([matrix_of(algebra.basis(i)) for i in range(algebra.dim)])
    if parity == "odd":
        rho = _unital_representation(mats, h, rng)
        V = random_unitary(rng, h)
        lam = rng.uniform(0.3, 2.0, h) * rng.choice([-1.0, 1.0], h)
        return SpectralTriple.dense(algebra, rho, (V * lam) @ V.conj().T, "odd")
    half = h // 2
    rho = np.zeros((algebra.dim, h, h), dtype=complex)
    rho[:, :half, :half] = _unital_representation(mats, half, rng)
    rho[:, half:, half:] = _unital_representation(mats, half, rng)
    T = random_unitary(rng, half) * rng.uniform(0.3, 2.0, half)
    D = np.zeros((h, h), dtype=complex)
    D[half:, :half] = T
    D[:half, half:] = T.conj().T
    grading = np.where(np.arange(h) < half, 1.0, -1.0)
    return SpectralTriple.dense(algebra, rho, D, "even", grading)
