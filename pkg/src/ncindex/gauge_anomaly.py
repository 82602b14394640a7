"""Gauge potentials over an even triple, the zeta-renormalized quantum action and its anomaly.

The triple is written in its quasihomomorphism form: H_+ and H_- are
identified, D = [[0, Q*], [Q, 0]] and the potential attached to a loop u of
gauge transformations is A = u_-^(-1) Q u_+ - Q.  The action is
W(A) = Tr ln(1 + Q^(-1) A); its first ``P_DEGREE`` Taylor terms are replaced
by finite parts of Tr((Q^(-1) A)^n |D|_+^(-2z)) at z = 0.

Backends:

* ``modes``: a matrix algebra M_m acting on C^m (x) l^2(Z) with
  rho_+(a) = a (x) 1 and rho_-(a) = a (x) (1 - E_0), E_0 the projection on the
  zero mode, and Q = (q + s h) on mode l with q = |l| (1/2 on the zero mode) and
  h a small hermitian m x m matrix.  Every operator is block diagonal in the
  modes and depends on |l| only.  In the eigenbasis of h, |D|_+ is diagonal on
  each block, so each zeta function is a finite sum of Hurwitz zeta functions
  (from an expansion in w = 1/(n + s lambda_i)) plus an absolutely convergent
  remainder summed over the window.
* ``dense``: finite dimensional H_+ = H_- = C^h with explicit representations
  and an invertible Q.  All zeta functions are entire.

Anomalies are 1-forms on the loop circle, reported as the coefficient of dtheta.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import factorial, pi

import mpmath
import numpy as np
from scipy.linalg import logm

from .algebra_core import AlgebraElement, FiniteAlgebra, from_matrix, make_matrix_algebra, matrix_of
from .errors import BackendUnsupported, ConfigInvalid, NonSummable, PathMissing, Singular
from .fredholm_pairing import FredholmModule
from .nc_forms import Chain
from .spectral_heat import residue_constant

P_DEGREE = 2  # Q^(-1) A lies in every Schatten class above 1; the smallest even p with p + 1 > 1
LAURENT_ORDER = 12
SQRT_2PI_I = np.sqrt(2j * pi)


# ---------------------------------------------------------------------------
# matrix-valued series in w


class _Series:
    """sum_k coeffs[k] w^(low + k) with m x m coefficients, kept up to w^LAURENT_ORDER."""

    def __init__(self, low: int, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        keep = max(LAURENT_ORDER - low + 1, 0)
        self.low = low
        self.coeffs = coeffs[:keep]

    @property
    def m(self) -> int:
        return self.coeffs.shape[1]

    def __matmul__(self, other: _Series) -> _Series:
        low = self.low + other.low
        K = LAURENT_ORDER - low + 1
        m = self.coeffs.shape[1]
        if K <= 0:
            return _Series(low, np.zeros((0, m, m)))
        out = np.zeros((K, m, m), dtype=complex)
        for a in range(min(len(self.coeffs), K)):
            for b in range(min(len(other.coeffs), K - a)):
                out[a + b] += self.coeffs[a] @ other.coeffs[b]
        return _Series(low, out)

    def __add__(self, other: _Series) -> _Series:
        low = min(self.low, other.low)
        K = max(LAURENT_ORDER - low + 1, 0)
        out = np.zeros((K,) + self.coeffs.shape[1:], dtype=complex)
        for s in (self, other):
            off = s.low - low
            n = min(len(s.coeffs), K - off)
            if n > 0:
                out[off:off + n] += s.coeffs[:n]
        return _Series(low, out)

    def __mul__(self, scalar) -> _Series:
        return _Series(self.low, complex(scalar) * self.coeffs)

    __rmul__ = __mul__

    def __sub__(self, other: _Series) -> _Series:
        return self + (-1.0) * other

    def entry(self, i: int) -> tuple:
        return self.low, self.coeffs[:, i, i]

    def leading_power(self, tol: float = 1e-13) -> int:
        """Lowest power with a coefficient above ``tol`` (cancellations leave rounding residue)."""
        big = np.flatnonzero(np.max(np.abs(self.coeffs), axis=(1, 2)) > tol)
        return self.low + int(big[0]) if big.size else LAURENT_ORDER + 1


class _SeriesOps:
    """Building blocks expanded around the centre n + s lambda_i (``delta`` = s (lambda - lambda_i))."""

    def __init__(self, delta: np.ndarray):
        m = delta.size
        I = np.eye(m)
        Dl = np.diag(delta)
        self.I = _Series(0, [I])
        self.Q = _Series(-1, [I, Dl])
        self.Qs = self.Q
        self.Qinv = _Series(1, [np.linalg.matrix_power(-Dl, j) for j in range(LAURENT_ORDER + 1)])

    def c(self, M) -> _Series:
        return _Series(0, [M])


class _MatrixOps:
    """The same building blocks as plain matrices; Q may be a stack over modes."""

    def __init__(self, Q: np.ndarray):
        self.Q = Q
        self.Qs = np.conj(np.swapaxes(Q, -1, -2))
        self.Qinv = np.linalg.inv(Q)
        self.I = np.eye(Q.shape[-1])

    @staticmethod
    def c(M):
        return M


@dataclass(frozen=True)
class _Block:
    """Gauge data on one block: u_+, u_- with inverses and the Maurer-Cartan parts omega_+, omega_-."""

    Up: np.ndarray
    Um: np.ndarray
    Upi: np.ndarray
    Umi: np.ndarray
    Op: np.ndarray
    Om: np.ndarray


# expressions shared by all backends ---------------------------------------


def _X(ops, b: _Block):
    return ops.Qinv @ ops.c(b.Umi) @ ops.Q @ ops.c(b.Up) - ops.I


def _A(ops, b: _Block):
    return ops.c(b.Umi) @ ops.Q @ ops.c(b.Up) - ops.Q


def _power(Y, n: int, ops):
    out = ops.I
    for _ in range(n):
        out = out @ Y
    return out


def _supertrace_omega(ops, b: _Block):
    return ops.c(b.Op) - ops.Qinv @ ops.c(b.Om) @ ops.Q


def _residue_monomial(ops, b: _Block, ks) -> object:
    """q(omega) A^(k_1) Q* A^(k_2) .. Q* A^(k_n) (Q* Q)^(-(n + k))."""
    QsQ = ops.Qs @ ops.Q
    A = _A(ops, b)
    qw = ops.c(b.Op) @ ops.Qs + ops.Qs @ ops.c(b.Om)
    Y = qw
    for i, k in enumerate(ks):
        Ak = A
        for _ in range(k):
            Ak = QsQ @ Ak - Ak @ QsQ
        Y = Y @ Ak if i == 0 else Y @ ops.Qs @ Ak
    reg = _power(ops.Qinv, 2 * (len(ks) + sum(ks)), ops)
    return Y @ reg


# ---------------------------------------------------------------------------
# triples


@dataclass(frozen=True)
class GaugeTriple:
    """Even triple in quasihomomorphism form (see the module docstring for the backends)."""

    algebra: FiniteAlgebra
    backend: str
    M: int = 64
    s: float = 0.0
    h: np.ndarray | None = None
    rho_plus: np.ndarray | None = None
    rho_minus: np.ndarray | None = None
    Q: np.ndarray | None = None
    _basis: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.backend == "modes":
            m = int(round(np.sqrt(self.algebra.dim)))
            if m * m != self.algebra.dim:
                raise ConfigInvalid("the modes backend needs a matrix algebra")
            h = np.zeros((m, m)) if self.h is None else np.asarray(self.h, dtype=complex)
            if np.max(np.abs(h - h.conj().T)) > 1e-12:
                raise ConfigInvalid("h must be hermitian")
            lam, V = np.linalg.eigh(h)
            if 0.5 + self.s * lam.min() <= 0.25:
                raise ConfigInvalid("s h too large: Q on the zero mode must stay positive")
            mats = np.array([matrix_of(self.algebra.basis(i)) for i in range(self.algebra.dim)])
            self._basis.update(lam=lam, V=V, mats=V.conj().T @ mats @ V)
        elif self.backend == "dense":
            Q = np.asarray(self.Q, dtype=complex)
            if abs(np.linalg.det(Q)) < 1e-12:
                raise Singular("Q must be invertible")
        else:
            raise ConfigInvalid(f"unknown backend {self.backend!r}")

    @classmethod
    def modes(cls, algebra: FiniteAlgebra, M: int = 64, s: float = 0.15, h=None, seed: int = 0) -> GaugeTriple:
        """Mode model; without ``h`` a random hermitian matrix of norm 1 is drawn from ``seed``."""
        if h is None:
            m = int(round(np.sqrt(algebra.dim)))
            rng = np.random.default_rng(seed)
            Z = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
            h = Z + Z.conj().T
            h /= np.linalg.norm(h, 2)
        return cls(algebra, "modes", M=M, s=s, h=h)

    @classmethod
    def dense(cls, algebra: FiniteAlgebra, rho_plus, rho_minus, Q) -> GaugeTriple:
        return cls(algebra, "dense", rho_plus=np.asarray(rho_plus, dtype=complex),
                   rho_minus=np.asarray(rho_minus, dtype=complex), Q=np.asarray(Q, dtype=complex))

    @classmethod
    def from_even_module(cls, module: FredholmModule, Q=None) -> GaugeTriple:
        """Dense triple from an even module whose grading splits C^h into equal halves and F swaps them."""
        if module.parity != "even":
            raise ConfigInvalid("an even module is required")
        half = module.h_dim // 2
        F = np.asarray(module.F)
        if not np.allclose(F[half:, :half], np.eye(half)):
            raise ConfigInvalid("F must be the swap of the two halves")
        rho = np.asarray(module.rho_basis)
        Q = np.eye(half) if Q is None else Q
        return cls.dense(module.algebra, rho[:, :half, :half], rho[:, half:, half:], Q)

    # -- representations --------------------------------------------------

    @property
    def m(self) -> int:
        return self._basis["mats"].shape[1] if self.backend == "modes" else self.Q.shape[0]

    def _rep(self, coeffs: np.ndarray, which: str) -> np.ndarray:
        if self.backend == "modes":
            return np.tensordot(coeffs, self._basis["mats"], axes=1)
        basis = self.rho_plus if which == "+" else self.rho_minus
        return np.tensordot(coeffs, basis, axes=1)

    def blocks(self, lam, coeffs, dlam, dcoeffs) -> dict:
        """Gauge blocks of u = lam 1 + a and its derivative: ``bulk`` (modes n >= 1) and ``zero``."""
        I = np.eye(self.m)
        Up = lam * I + self._rep(coeffs, "+")
        dUp = dlam * I + self._rep(dcoeffs, "+")
        if self.backend == "modes":
            Um, dUm = Up, dUp
            Um0, dUm0 = lam * I, dlam * I
        else:
            Um = lam * I + self._rep(coeffs, "-")
            dUm = dlam * I + self._rep(dcoeffs, "-")
        Upi = np.linalg.inv(Up)
        Umi = np.linalg.inv(Um)
        bulk = _Block(Up, Um, Upi, Umi, Upi @ dUp, Umi @ dUm)
        if self.backend == "dense":
            return {"bulk": bulk}
        Um0i = np.linalg.inv(Um0)
        zero = _Block(Up, Um0, Upi, Um0i, Upi @ dUp, Um0i @ dUm0)
        return {"bulk": bulk, "zero": zero}

    def _zero_ops(self) -> _MatrixOps:
        return _MatrixOps(np.diag(0.5 + self.s * self._basis["lam"]).astype(complex))

    def _mode_ops(self, n: np.ndarray) -> _MatrixOps:
        lam = self._basis["lam"]
        Q = np.zeros((n.size, lam.size, lam.size), dtype=complex)
        Q[:, np.arange(lam.size), np.arange(lam.size)] = n[:, None] + self.s * lam[None, :]
        return _MatrixOps(Q)

    # -- zeta functions ---------------------------------------------------

    def zeta_at_zero(self, build, blocks: dict) -> tuple:
        """(residue, finite part) at z = 0 of Tr(Y |D|_+^(-2z)), with Y = build(ops, block)."""
        if self.backend == "dense":
            return 0j, complex(np.trace(build(_MatrixOps(self.Q), blocks["bulk"])))
        res, pf = 0j, complex(np.trace(build(self._zero_ops(), blocks["zero"])))
        lam = self._basis["lam"]
        n = np.arange(1, self.M + 1, dtype=float)
        direct = build(self._mode_ops(n), blocks["bulk"])
        for i, li in enumerate(lam):
            a = 1.0 + self.s * li
            low, c = build(_SeriesOps(self.s * (lam - li)), blocks["bulk"]).entry(i)
            w = 1.0 / (n + self.s * li)
            series = np.zeros_like(n, dtype=complex)
            for k, cj in enumerate(c):
                if cj == 0:
                    continue
                j = low + k
                series += cj * w ** j
                if j == 1:
                    res += cj
                    pf += -2 * cj * float(mpmath.digamma(a))
                else:
                    pf += 2 * cj * complex(mpmath.zeta(j, a))
            pf += 2 * np.sum(direct[:, i, i] - series)
        return res, pf

    def zeta_value(self, build, blocks: dict, z: complex) -> complex:
        """Tr(Y |D|_+^(-2z)) at a regular point, from the same expansion."""
        if self.backend == "dense":
            Y = build(_MatrixOps(self.Q), blocks["bulk"])
            QsQ = self.Q.conj().T @ self.Q
            ev, V = np.linalg.eigh(QsQ)
            return complex(np.trace(Y @ (V * ev ** (-z)) @ V.conj().T))
        lam = self._basis["lam"]
        q0 = 0.5 + self.s * lam
        total = complex(np.sum(np.diag(build(self._zero_ops(), blocks["zero"])) * q0 ** (-2 * z)))
        n = np.arange(1, self.M + 1, dtype=float)
        direct = build(self._mode_ops(n), blocks["bulk"])
        for i, li in enumerate(lam):
            a = 1.0 + self.s * li
            low, c = build(_SeriesOps(self.s * (lam - li)), blocks["bulk"]).entry(i)
            w = 1.0 / (n + self.s * li)
            series = np.zeros_like(n, dtype=complex)
            for k, cj in enumerate(c):
                j = low + k
                series += cj * w ** j
                total += 2 * cj * complex(mpmath.zeta(j + 2 * z, a))
            total += 2 * np.sum((direct[:, i, i] - series) * w ** (2 * z))
        return total

    def direct_zeta(self, build, blocks: dict, z: complex, modes: int) -> complex:
        """Plain sum over |l| <= ``modes`` (for checks at points where it converges)."""
        if self.backend == "dense":
            return self.zeta_value(build, blocks, z)
        lam = self._basis["lam"]
        total = complex(np.sum(np.diag(build(self._zero_ops(), blocks["zero"])) * (0.5 + self.s * lam) ** (-2 * z)))
        n = np.arange(1, modes + 1, dtype=float)
        Y = build(self._mode_ops(n), blocks["bulk"])
        diag = np.einsum("nii->ni", Y)
        return total + 2 * complex(np.sum(diag * (n[:, None] + self.s * lam[None, :]) ** (-2 * z)))


# ---------------------------------------------------------------------------
# loops


def spectral_derivative(samples: np.ndarray) -> np.ndarray:
    """d/dtheta of periodic samples on a uniform grid of [0, 1) (first axis)."""
    N = samples.shape[0]
    freq = np.fft.fftfreq(N, d=1.0 / N)
    if N % 2 == 0:
        freq[N // 2] = 0.0
    shape = (N,) + (1,) * (samples.ndim - 1)
    return np.fft.ifft(2j * pi * freq.reshape(shape) * np.fft.fft(samples, axis=0), axis=0)


@dataclass(frozen=True)
class GaugeLoop:
    """Samples u(theta_j) = lam_j 1 + a_j in the unitized algebra.

    ``closed``: theta_j = j / grid on [0, 1) and u(1) = u(0) = 1.  Open paths
    carry grid + 1 samples including theta = 1 and only need u(0) = 1.
    """

    triple: GaugeTriple
    lam: np.ndarray
    coeffs: np.ndarray
    closed: bool = True
    label: str = ""

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=complex)
        coeffs = np.asarray(self.coeffs, dtype=complex)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "coeffs", coeffs)
        if abs(lam[0] - 1) > 1e-12 or np.max(np.abs(coeffs[0])) > 1e-12:
            raise ConfigInvalid("a gauge loop starts at the identity")
        I = np.eye(self.triple.m)
        for which in ("+", "-"):
            U = lam[:, None, None] * I + self.triple._rep(coeffs, which)
            Ui = np.linalg.inv(U)
            if np.max(np.abs(U @ Ui - I)) > 1e-10:
                raise Singular("loop sample not invertible")
        if self.triple.backend == "modes" and np.min(np.abs(lam)) < 1e-12:
            raise Singular("the scalar part acts alone on the zero mode and must be invertible")

    @property
    def grid(self) -> int:
        return self.lam.size if self.closed else self.lam.size - 1

    @property
    def theta(self) -> np.ndarray:
        return np.arange(self.lam.size) / self.grid

    @classmethod
    def from_function(cls, triple: GaugeTriple, fn, grid: int, closed: bool = True, label: str = "") -> GaugeLoop:
        """``fn(theta) -> (lam, coeffs)``."""
        count = grid if closed else grid + 1
        vals = [fn(j / grid) for j in range(count)]
        return cls(triple, np.array([v[0] for v in vals]), np.array([v[1] for v in vals]), closed, label)

    @classmethod
    def bott(cls, triple: GaugeTriple, e: AlgebraElement, grid: int = 128, k: int = 1) -> GaugeLoop:
        """u = 1 + e (beta^k - 1) with beta = exp(2 pi i theta)."""
        return cls.from_function(triple, lambda t: (1.0, (np.exp(2j * pi * k * t) - 1) * e.coeffs), grid,
                                 label=f"bott(k={k})")

    @classmethod
    def winding(cls, triple: GaugeTriple, k: int, grid: int = 128) -> GaugeLoop:
        """Bott loop of winding k on the rank-one projector E_11."""
        loop = cls.bott(triple, triple.algebra.basis(0), grid, k)
        return cls(triple, loop.lam, loop.coeffs, True, f"winding(k={k})")

    @classmethod
    def constant(cls, triple: GaugeTriple, grid: int = 128) -> GaugeLoop:
        return cls(triple, np.ones(grid), np.zeros((grid, triple.algebra.dim)), True, "constant")

    def derivative(self) -> tuple:
        if self.closed:
            return spectral_derivative(self.lam), spectral_derivative(self.coeffs)
        h = 1.0 / self.grid
        return np.gradient(self.lam, h, edge_order=2), np.gradient(self.coeffs, h, axis=0, edge_order=2)

    def blocks(self, j: int) -> dict:
        dlam, dcoeffs = self._derivs()
        return self.triple.blocks(self.lam[j], self.coeffs[j], dlam[j], dcoeffs[j])

    def _derivs(self) -> tuple:
        cache = self.__dict__.setdefault("_deriv_cache", {})
        if "d" not in cache:
            cache["d"] = self.derivative()
        return cache["d"]

    def matrices(self, which: str = "+") -> np.ndarray:
        I = np.eye(self.triple.m)
        return self.lam[:, None, None] * I + self.triple._rep(self.coeffs, which)


def loop_from_config(cfg: dict | str) -> GaugeLoop:
    """{"kind": "winding", "k": 2, "grid": 128, "window": 64} or {"kind": "bott", "projector": [[..]], ..}.

    Optional keys: "s" (coupling, default 0.15) and "seed" (for h).
    """
    if isinstance(cfg, str):
        cfg = json.loads(cfg)
    allowed = {"kind", "k", "grid", "window", "projector", "s", "seed"}
    unknown = set(cfg) - allowed
    if unknown:
        raise ConfigInvalid(f"unknown loop keys {sorted(unknown)}")
    grid = int(cfg.get("grid", 128))
    M = int(cfg.get("window", 64))
    s = float(cfg.get("s", 0.15))
    seed = int(cfg.get("seed", 0))
    kind = cfg.get("kind")
    if kind == "winding":
        triple = GaugeTriple.modes(make_matrix_algebra(2), M=M, s=s, seed=seed)
        return GaugeLoop.winding(triple, int(cfg.get("k", 1)), grid)
    if kind == "bott":
        P = np.asarray(cfg["projector"], dtype=complex)
        if np.max(np.abs(P @ P - P)) > 1e-10:
            raise ConfigInvalid("projector is not idempotent")
        alg = make_matrix_algebra(P.shape[0])
        triple = GaugeTriple.modes(alg, M=M, s=s, seed=seed)
        return GaugeLoop.bott(triple, from_matrix(alg, P), grid, int(cfg.get("k", 1)))
    raise ConfigInvalid(f"unknown loop kind {kind!r}")


# ---------------------------------------------------------------------------
# potentials and the action


@dataclass(frozen=True)
class PotentialPath:
    """Potentials A(theta_j) = u_-^(-1) Q u_+ - Q along a loop."""

    loop: GaugeLoop

    @property
    def triple(self) -> GaugeTriple:
        return self.loop.triple

    def blocks(self, j: int) -> dict:
        return self.loop.blocks(j)

    def singular_values(self, j: int) -> np.ndarray:
        """Singular values of Q^(-1) A on the window, sorted decreasingly."""
        T = self.triple
        b = self.blocks(j)
        if T.backend == "dense":
            return np.linalg.svd(_X(_MatrixOps(T.Q), b["bulk"]), compute_uv=False)
        n = np.arange(1, T.M + 1, dtype=float)
        sv = [np.linalg.svd(_X(T._zero_ops(), b["zero"]), compute_uv=False)]
        bulk = np.linalg.svd(_X(T._mode_ops(n), b["bulk"]), compute_uv=False)
        sv += [bulk, bulk]
        return np.sort(np.concatenate([np.ravel(x) for x in sv]))[::-1]

    def summability_tail(self, j: int, p: float = P_DEGREE + 1) -> float:
        """Share of sum s_i^p carried by the upper half of the window (small when p-summable)."""
        sv = self.singular_values(j) ** p
        total = sv.sum()
        return 0.0 if total == 0 else float(sv[sv.size // 2:].sum() / total)


def _series_sign(n: int) -> float:
    return (-1.0) ** (n + 1) / n


def w_term(n: int, path: PotentialPath, j: int) -> complex:
    """W^n(A) = (-1)^(n+1)/n Tr((Q^(-1) A)^n) at sample j.

    On the modes backend only n > P_DEGREE converges; the trace is summed over
    all modes exactly (window plus Hurwitz tail).
    """
    T = path.triple
    if n < 1:
        raise ValueError("n >= 1")
    if T.backend == "modes" and n <= P_DEGREE:
        raise NonSummable(f"Tr((Q^-1 A)^{n}) needs renormalization; use w_renorm")
    res, pf = T.zeta_at_zero(lambda ops, b: _power(_X(ops, b), n, ops), path.blocks(j))
    if abs(res) > 1e-12:
        raise NonSummable(f"Tr((Q^-1 A)^{n}) has a pole")
    return _series_sign(n) * pf


def w_renorm(n: int, path: PotentialPath, j: int) -> complex:
    """(-1)^(n+1)/n times the finite part at z = 0 of Tr((Q^(-1) A)^n |D|_+^(-2z))."""
    T = path.triple
    if T.backend != "modes" and T.backend != "dense":
        raise BackendUnsupported(T.backend)
    _, pf = T.zeta_at_zero(lambda ops, b: _power(_X(ops, b), n, ops), path.blocks(j))
    return _series_sign(n) * pf


def _log_det_tail(path: PotentialPath, j: int) -> complex:
    """Tr(ln(1 + X) - sum_{n <= P_DEGREE} (-1)^(n+1) X^n / n), principal branch on each block."""
    T = path.triple
    b = path.blocks(j)

    def poly(X):
        out = 0
        Xn = np.eye(X.shape[-1])
        for n in range(1, P_DEGREE + 1):
            Xn = Xn @ X
            out = out + _series_sign(n) * np.trace(Xn, axis1=-2, axis2=-1)
        return out

    def block_value(ops, blk):
        X = _X(ops, blk)
        return np.log(np.linalg.det(np.eye(X.shape[-1]) + X)) - poly(X)

    if T.backend == "dense":
        return complex(block_value(_MatrixOps(T.Q), b["bulk"]))
    total = complex(block_value(T._zero_ops(), b["zero"]))
    n = np.arange(1, T.M + 1, dtype=float)
    total += 2 * complex(np.sum(block_value(T._mode_ops(n), b["bulk"])))
    # modes beyond the window from the expansion of the remaining Taylor terms
    lam = T._basis["lam"]
    for i, li in enumerate(lam):
        ops = _SeriesOps(T.s * (lam - li))
        X = _X(ops, b["bulk"])
        Y = None
        Xn = _power(X, P_DEGREE, ops)
        for k in range(P_DEGREE + 1, LAURENT_ORDER + 1):
            Xn = Xn @ X
            Y = _series_sign(k) * Xn if Y is None else Y + _series_sign(k) * Xn
        low, c = Y.entry(i)
        for kk, cj in enumerate(c):
            if low + kk > P_DEGREE:
                total += 2 * cj * complex(mpmath.zeta(low + kk, T.M + 1 + T.s * li))
    return total


def action(path: PotentialPath, j: int) -> complex:
    """W_R(A) at sample j: renormalized terms n <= P_DEGREE plus the convergent rest (principal branch)."""
    return sum(w_renorm(n, path, j) for n in range(1, P_DEGREE + 1)) + _log_det_tail(path, j)


def action_along(path: PotentialPath) -> np.ndarray:
    """W_R at every sample, continued along the path from W_R(0) = 0."""
    vals = np.array([action(path, j) for j in range(path.loop.lam.size)])
    return vals.real + 1j * np.unwrap(vals.imag)


# ---------------------------------------------------------------------------
# anomaly


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def anomaly_residue_form(triple: GaugeTriple, blocks: dict, max_shell: int = 8) -> complex:
    """Residue closed form of the anomaly at one sample (coefficient of dtheta).

    Finite part at z = 0 of tau(omega |D|^(-2z)) plus
    sum_{n >= 1, k} (-1)^(n+k) c(k) Gamma(n+k) Res_{z=0} Tr(q(omega) A^(k_1) Q* .. A^(k_n) |D|_+^(-2(z+n+k))).
    Shells n + k are summed until no term can carry a pole at z = 0.
    """
    _, total = triple.zeta_at_zero(_supertrace_omega, blocks)
    if triple.backend == "dense":
        return total
    lam = triple._basis["lam"]
    for shell in range(1, max_shell + 1):
        live = False
        for n in range(1, shell + 1):
            for ks in _compositions(shell - n, n):
                build = lambda ops, b, ks=ks: _residue_monomial(ops, b, ks)
                lows = [build(_SeriesOps(triple.s * (lam - li)), blocks["bulk"]).leading_power() for li in lam]
                if min(lows) > 1:
                    continue
                live = True
                res, _ = triple.zeta_at_zero(build, blocks)
                k = sum(ks)
                total += (-1) ** (n + k) * residue_constant(ks) * factorial(n + k - 1) * res
        if not live:
            return total
    raise NonSummable("residue terms did not terminate")


@dataclass(frozen=True)
class AnomalyResult:
    theta: np.ndarray
    derivative: np.ndarray  # theta-derivative of W_R
    residue: np.ndarray  # residue closed form
    jump: complex  # W_R(1) - W_R(0) along the loop

    def max_gap(self) -> float:
        return float(np.max(np.abs(self.derivative - self.residue)))


def _periodic_derivative_with_jump(vals: np.ndarray, closure: complex) -> tuple:
    """Spectral derivative of samples whose continuation to theta = 1 ends at ``closure``."""
    ext = np.append(vals, closure)
    ext = ext.real + 1j * np.unwrap(ext.imag)
    jump = ext[-1] - ext[0]
    N = vals.size
    periodic = ext[:-1] - jump * np.arange(N) / N
    return spectral_derivative(periodic) + jump, jump


def anomaly(loop: GaugeLoop) -> AnomalyResult:
    """Anomaly samples by both routes: spectral theta-derivative of W_R and the residue closed form."""
    if not loop.closed:
        raise ConfigInvalid("the anomaly is computed along closed loops")
    path = PotentialPath(loop)
    W = action_along(path)
    deriv, jump = _periodic_derivative_with_jump(W, W[0])
    resid = np.array([anomaly_residue_form(loop.triple, loop.blocks(j)) for j in range(loop.grid)])
    return AnomalyResult(loop.theta, deriv, resid, jump)


@dataclass(frozen=True)
class IndexResult:
    value: complex
    nearest: int
    residual: float


def _integer_verdict(value: complex) -> IndexResult:
    nearest = int(round(value.real))
    return IndexResult(complex(value), nearest, float(abs(value - nearest)))


def index_via_anomaly(loop: GaugeLoop, route: str = "derivative") -> IndexResult:
    """(1/2 pi i) times the loop integral of the anomaly (trapezoidal rule, ascending theta)."""
    res = anomaly(loop)
    samples = res.derivative if route == "derivative" else res.residue
    return _integer_verdict(complex(np.sum(samples) / loop.grid / (2j * pi)))


# ---------------------------------------------------------------------------
# counterterms


@dataclass(frozen=True)
class Counterterm:
    """Local polynomial P(A) = sum_(d, r) c_(d,r) Res_{z=0} Tr((Q^(-1) A)^d Q^r |D|_+^(-2z)), d <= degree."""

    coeffs: dict

    @classmethod
    def random(cls, degree: int = P_DEGREE, seed: int = 0) -> Counterterm:
        rng = np.random.default_rng(seed)
        return cls({(d, r): complex(rng.standard_normal() + 1j * rng.standard_normal())
                    for d in range(1, degree + 1) for r in range(d + 1)})

    def value(self, triple: GaugeTriple, blocks: dict) -> complex:
        total = 0j
        for (d, r), c in self.coeffs.items():
            build = lambda ops, b, d=d, r=r: _power(_X(ops, b), d, ops) @ _power(ops.Q, r, ops)
            res, pf = triple.zeta_at_zero(build, blocks)
            total += c * (pf if triple.backend == "dense" else res)
        return total


def anomaly_with_counterterm(loop: GaugeLoop, ct: Counterterm) -> np.ndarray:
    """theta-derivative route for W_R + P."""
    base = anomaly(loop).derivative
    P = np.array([ct.value(loop.triple, loop.blocks(j)) for j in range(loop.grid)])
    return base + spectral_derivative(P)


# ---------------------------------------------------------------------------
# determinants and the regulator


@dataclass(frozen=True)
class HSDeterminant:
    value: complex
    lattice_generator: complex | None


def hs_determinant(path, tau=None) -> HSDeterminant:
    """(1/2 pi i) int tau(u^(-1) du) along a path of invertible matrices.

    ``path``: array (K, m, m) from theta = 0 to theta = 1 inclusive, or a
    closed :class:`GaugeLoop` (its u_+ samples, closed up).  Each step adds
    tau(log(u_j^(-1) u_(j+1))), exact when consecutive samples commute.
    ``tau`` defaults to the matrix trace, whose values on projectors generate Z.
    """
    if isinstance(path, GaugeLoop):
        mats = path.matrices("+")
        if path.closed:
            mats = np.concatenate([mats, mats[:1]])
    else:
        mats = np.asarray(path, dtype=complex)
    tau = np.trace if tau is None else tau
    total = 0j
    for a, b in zip(mats[:-1], mats[1:]):
        total += complex(tau(logm(np.linalg.solve(a, b))))
    m = mats.shape[1]
    E = np.zeros((m, m))
    E[0, 0] = 1.0
    return HSDeterminant(total / (2j * pi), complex(tau(E)))


def index_trace(triple: GaugeTriple, a: AlgebraElement | None) -> complex:
    """Degree-0 Chern component: finite part at z = 0 of Tr((rho_+(a) - Q^(-1) rho_-(a) Q) |D|_+^(-2z))."""
    m = triple.m
    coeffs = np.zeros(triple.algebra.dim, dtype=complex) if a is None else np.asarray(a.coeffs, dtype=complex)
    scalar = 1.0 if a is None else 0.0
    Up = scalar * np.eye(m) + triple._rep(coeffs, "+")
    Um = scalar * np.eye(m) + triple._rep(coeffs, "-")
    blocks = {"bulk": _Block(Up, Um, None, None, None, None)}
    if triple.backend == "modes":
        blocks["zero"] = _Block(Up, scalar * np.eye(m), None, None, None, None)
    build = lambda ops, b: ops.c(b.Up) - ops.Qinv @ ops.c(b.Um) @ ops.Q
    return triple.zeta_at_zero(build, blocks)[1]


def renormalized_determinant(path: GaugeLoop) -> complex:
    """Det_R(u) = exp(W_R(A(1)) - W_R(A(0))) integrated along the supplied open path."""
    if path.closed:
        raise ConfigInvalid("Det_R needs an open path ending at u")
    W = action_along(PotentialPath(path))
    return complex(np.exp(W[-1] - W[0]))


def regulator(path: GaugeLoop | None, theta_chain: Chain) -> complex:
    """exp(sqrt(2 pi i) ch_R . theta) / Det_R(u) for u = path(1).

    ch_R . theta pairs the degree-0 part of ``theta`` with index_trace / sqrt(2 pi i).
    """
    if path is None:
        raise PathMissing("Det_R needs a path from 1 to u")
    triple = path.triple
    pairing = sum(c * index_trace(triple, s[0]) for c, s in theta_chain.homogeneous(0).terms)
    return complex(np.exp(pairing)) / renormalized_determinant(path)


def path_lattice_element(path_a: GaugeLoop, path_b: GaugeLoop) -> IndexResult:
    """(W_R difference between two paths to the same endpoint) / (2 pi i): an integer."""
    Wa = action_along(PotentialPath(path_a))
    Wb = action_along(PotentialPath(path_b))
    return _integer_verdict(complex((Wa[-1] - Wb[-1]) / (2j * pi)))
