"""Conformal maps of the plane, higher-order Lefschetz localization and the Todd cocycle.

Functions on the plane are Gaussian-polynomials sum P(z, zbar) exp(-alpha |z - c|^2).
Derivatives ``d`` are the Wirtinger derivative d/dz with zbar held fixed, so
the local data entering a fixed-point contribution is the jet in (z - z0) of
f(z, conj(z0)).  Groupoid elements are finite sums f U*_g with the product
(f1 U*_g1)(f2 U*_g2) = f1 (f2 o g1) U*_(g2 g1); compositions are kept lazily
as factors and only ever evaluated pointwise or through jets.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, factorial, pi

import numpy as np

from .errors import (
    OrderMismatch,
    QuadratureNonConvergence,
    RootConditioning,
    SupportViolation,
    UnsupportedFixedManifold,
)

VALUATION_TOL = 1e-10
ROOT_TOL = 1e-10
NEWTON_GRID = 40
SUPPORT_TOL = 1e-14


# ---------------------------------------------------------------------------
# jets


@dataclass(frozen=True)
class Jet:
    """Taylor coefficients of (z - z0)^0 .. (z - z0)^order."""

    z0: complex
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=complex))

    @property
    def order(self) -> int:
        return self.coeffs.size - 1

    @classmethod
    def constant(cls, z0, value, order: int) -> Jet:
        c = np.zeros(order + 1, dtype=complex)
        c[0] = value
        return cls(z0, c)

    @classmethod
    def variable(cls, z0, order: int) -> Jet:
        """The coordinate z itself."""
        c = np.zeros(order + 1, dtype=complex)
        c[0] = z0
        if order >= 1:
            c[1] = 1.0
        return cls(z0, c)

    def _cut(self, other: Jet) -> int:
        return min(self.order, other.order)

    def __add__(self, other) -> Jet:
        if isinstance(other, Jet):
            k = self._cut(other)
            return Jet(self.z0, self.coeffs[:k + 1] + other.coeffs[:k + 1])
        c = self.coeffs.copy()
        c[0] += other
        return Jet(self.z0, c)

    __radd__ = __add__

    def __neg__(self) -> Jet:
        return Jet(self.z0, -self.coeffs)

    def __sub__(self, other) -> Jet:
        return self + (-other)

    def __mul__(self, other) -> Jet:
        if isinstance(other, Jet):
            k = self._cut(other)
            return Jet(self.z0, np.convolve(self.coeffs[:k + 1], other.coeffs[:k + 1])[:k + 1])
        return Jet(self.z0, self.coeffs * other)

    __rmul__ = __mul__

    def valuation(self, tol: float = VALUATION_TOL) -> int | None:
        """Index of the first coefficient above ``tol``; None if every coefficient is below it."""
        big = np.flatnonzero(np.abs(self.coeffs) > tol)
        return int(big[0]) if big.size else None

    def reciprocal(self) -> Jet:
        c = self.coeffs
        if c[0] == 0:
            raise ZeroDivisionError("jet with vanishing constant term")
        out = np.zeros_like(c)
        out[0] = 1.0 / c[0]
        for k in range(1, c.size):
            out[k] = -np.dot(c[1:k + 1], out[k - 1::-1][:k]) / c[0]
        return Jet(self.z0, out)

    def __truediv__(self, other) -> Jet:
        if not isinstance(other, Jet):
            return Jet(self.z0, self.coeffs / other)
        v = other.valuation()
        if v is None:
            raise ZeroDivisionError("division by a flat jet")
        if v and np.any(np.abs(self.coeffs[:v]) > VALUATION_TOL):
            raise ZeroDivisionError("numerator valuation below the denominator's")
        return self.drop(v) * other.drop(v).reciprocal()

    def drop(self, v: int) -> Jet:
        """Divide by (z - z0)^v, discarding the first v coefficients."""
        return Jet(self.z0, self.coeffs[v:])

    def derivative(self, k: int = 1) -> Jet:
        c = self.coeffs
        for _ in range(k):
            c = c[1:] * np.arange(1, c.size)
        return Jet(self.z0, c)

    def derivative_at(self, k: int) -> complex:
        return complex(factorial(k) * self.coeffs[k])

    def compose(self, inner: Jet) -> Jet:
        """self(inner(z)) as a jet at inner.z0; self must be based at inner's value."""
        if abs(inner.coeffs[0] - self.z0) > 1e-9 * max(1.0, abs(self.z0)):
            raise ValueError("inner jet does not land on the outer base point")
        k = min(self.order, inner.order)
        shift = Jet(inner.z0, np.concatenate([[0.0], inner.coeffs[1:k + 1]]))
        out = Jet.constant(inner.z0, self.coeffs[k], k)
        for c in self.coeffs[k - 1::-1][:k]:
            out = out * shift + c
        return out


def _taylor_shift(coeffs: np.ndarray, z0: complex, order: int) -> np.ndarray:
    """Coefficients in (z - z0) of the polynomial sum coeffs[k] z^k, truncated at ``order``."""
    n = coeffs.size
    out = np.zeros(order + 1, dtype=complex)
    for k in range(min(n, order + 1)):
        out[k] = sum(comb(j, k) * coeffs[j] * z0 ** (j - k) for j in range(k, n))
    return out


# ---------------------------------------------------------------------------
# conformal maps


Disk = tuple  # (center, radius)


def _in_disks(z, disks) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    hit = np.zeros(z.shape, dtype=bool)
    for c, r in disks:
        hit |= np.abs(z - c) <= r
    return hit


@dataclass(frozen=True)
class ConformalMap:
    """Holomorphic injective map on the plane minus ``exclusions`` (and inside ``within`` when set).

    kind ``moebius``: params (a, b, c, d); ``polynomial``: ascending
    coefficients; ``germ``: (point, ascending coefficients in (z - point));
    ``composite``: maps listed outermost first.
    """

    kind: str
    params: tuple
    exclusions: tuple = ()
    within: Disk | None = None

    # -- constructors -----------------------------------------------------

    @classmethod
    def moebius(cls, a, b, c, d, pole_radius: float = 0.5) -> ConformalMap:
        a, b, c, d = (complex(x) for x in (a, b, c, d))
        if abs(a * d - b * c) < 1e-14:
            raise ValueError("ad - bc must be nonzero")
        excl = ((-d / c, pole_radius),) if c != 0 else ()
        return cls("moebius", (a, b, c, d), excl)

    @classmethod
    def identity(cls) -> ConformalMap:
        return cls.moebius(1, 0, 0, 1)

    @classmethod
    def scaling(cls, lam) -> ConformalMap:
        return cls.moebius(lam, 0, 0, 1)

    @classmethod
    def polynomial(cls, coeffs, within: Disk | None = None, check: bool = True) -> ConformalMap:
        g = cls("polynomial", tuple(complex(x) for x in coeffs), (), within)
        if check and within is not None:
            g.check_univalent()
        return g

    @classmethod
    def germ(cls, point, coeffs, radius: float) -> ConformalMap:
        return cls("germ", (complex(point), tuple(complex(x) for x in coeffs)), (), (complex(point), radius))

    @classmethod
    def from_dict(cls, cfg: dict) -> ConformalMap:
        kind = cfg["kind"]
        if kind == "moebius":
            a, b, c, d = (complex(*x) if isinstance(x, list) else complex(x) for x in cfg["abcd"])
            return cls.moebius(a, b, c, d, cfg.get("pole_radius", 0.5))
        if kind == "polynomial":
            within = cfg.get("within")
            return cls.polynomial(cfg["coeffs"], None if within is None else (complex(within[0]), within[1]))
        if kind == "germ":
            return cls.germ(cfg["point"], cfg["coeffs"], cfg["radius"])
        raise ValueError(f"unknown map kind {kind!r}")

    # -- evaluation -------------------------------------------------------

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        if self.kind == "moebius":
            a, b, c, d = self.params
            return (a * z + b) / (c * z + d)
        if self.kind == "polynomial":
            return np.polynomial.polynomial.polyval(z, np.array(self.params))
        if self.kind == "germ":
            p, cs = self.params
            return np.polynomial.polynomial.polyval(z - p, np.array(cs))
        out = z
        for g in reversed(self.params):
            out = g(out)
        return out

    def in_domain(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        ok = ~_in_disks(z, self.exclusions)
        if self.within is not None:
            ok &= np.abs(z - self.within[0]) < self.within[1]
        if self.kind == "composite":
            w = z
            for g in reversed(self.params):
                ok &= g.in_domain(w)
                w = np.where(ok, g(np.where(ok, w, 0)), 0)
        return ok

    def jet(self, z0: complex, order: int) -> Jet:
        z0 = complex(z0)
        if self.kind == "moebius":
            a, b, c, d = self.params
            num = Jet(z0, np.concatenate([[a * z0 + b, a], np.zeros(max(order - 1, 0))])[:order + 1])
            den = Jet(z0, np.concatenate([[c * z0 + d, c], np.zeros(max(order - 1, 0))])[:order + 1])
            return num * den.reciprocal()
        if self.kind == "polynomial":
            return Jet(z0, _taylor_shift(np.array(self.params), z0, order))
        if self.kind == "germ":
            p, cs = self.params
            return Jet(z0, _taylor_shift(np.array(cs), z0 - p, order))
        out = Jet.variable(z0, order)
        for g in reversed(self.params):
            out = g.jet(out.coeffs[0], order).compose(out)
        return out

    def derivative(self, z0: complex, k: int) -> complex:
        return self.jet(z0, k).derivative_at(k)

    # -- structure --------------------------------------------------------

    @property
    def is_identity(self) -> bool:
        if self.kind == "moebius":
            a, b, c, d = self.params
            return b == 0 and c == 0 and a == d
        if self.kind == "polynomial":
            cs = np.array(self.params)
            return np.allclose(cs, np.r_[0, 1, np.zeros(cs.size - 2)][:cs.size]) if cs.size >= 2 else False
        return False

    def compose(self, inner: ConformalMap) -> ConformalMap:
        """self o inner."""
        if self.kind == "moebius" and inner.kind == "moebius":
            M = np.array(self.params).reshape(2, 2) @ np.array(inner.params).reshape(2, 2)
            out = ConformalMap.moebius(*M.ravel(), pole_radius=max([r for _, r in self.exclusions + inner.exclusions] or [0.5]))
            return ConformalMap(out.kind, out.params, out.exclusions + inner.exclusions, inner.within)
        if self.is_identity and not self.exclusions:
            return inner
        if inner.is_identity and not inner.exclusions:
            return self
        if self.kind == "polynomial" and inner.kind == "polynomial":
            P = np.polynomial.Polynomial(np.array(self.params))
            I = np.polynomial.Polynomial(np.array(inner.params))
            return ConformalMap("polynomial", tuple(P(I).coef), (), inner.within)
        outer = self.params if self.kind == "composite" else (self,)
        inn = inner.params if inner.kind == "composite" else (inner,)
        return ConformalMap("composite", tuple(outer) + tuple(inn))

    def affine_conjugate(self, A: complex, B: complex) -> ConformalMap:
        """The same map in the chart w = A z + B."""
        A, B = complex(A), complex(B)
        conj_disks = tuple((A * c + B, abs(A) * r) for c, r in self.exclusions)
        within = None if self.within is None else (A * self.within[0] + B, abs(A) * self.within[1])
        if self.kind == "moebius":
            M = np.array([[A, B], [0, 1]]) @ np.array(self.params).reshape(2, 2) @ np.array([[1, -B], [0, A]])
            return ConformalMap("moebius", tuple(M.ravel()), conj_disks, within)
        if self.kind == "polynomial":
            P = np.polynomial.Polynomial(np.array(self.params))
            z_of_w = np.polynomial.Polynomial([-B / A, 1 / A])
            return ConformalMap("polynomial", tuple((A * P(z_of_w) + B).coef), conj_disks, within)
        if self.kind == "germ":
            p, cs = self.params
            # g(z) = sum c_k (z - p)^k with z - p = (w - (A p + B)) / A
            new = [A * c / A ** k for k, c in enumerate(cs)]
            new[0] += B
            return ConformalMap("germ", (A * p + B, tuple(new)), conj_disks, within)
        return ConformalMap("composite", tuple(g.affine_conjugate(A, B) for g in self.params))

    def check_univalent(self, samples: int = 200, seed: int = 0) -> None:
        """Injectivity on the ``within`` disk: p' has no zero there and, for sampled z,
        p(x) = p(z) has no second root x in the disk."""
        c, r = self.within
        P = np.polynomial.Polynomial(np.array(self.params))
        crit = P.deriv().roots()
        if np.any(np.abs(crit - c) < r):
            raise ValueError("map not locally injective on its disk")
        rng = np.random.default_rng(seed)
        pts = c + r * np.sqrt(rng.random(samples)) * np.exp(2j * pi * rng.random(samples))
        for z in pts:
            roots = (P - P(z)).roots()
            if np.sum(np.abs(roots - c) < r) > 1:
                raise ValueError("map not injective on its disk")


# ---------------------------------------------------------------------------
# fixed points


@dataclass(frozen=True)
class FixedPointRecord:
    z0: complex
    order: int | float  # float("inf") for non-isolated points
    map: ConformalMap = field(repr=False)


@dataclass(frozen=True)
class Region:
    center: complex = 0j
    radius: float = 3.0

    def contains(self, z) -> np.ndarray:
        return np.abs(np.asarray(z) - self.center) <= self.radius


def fixed_point_order(g: ConformalMap, z0: complex, max_order: int = 12) -> int | float:
    F = g.jet(z0, max_order) - Jet.variable(z0, max_order)
    v = F.valuation()
    return float("inf") if v is None else v


def _slope(g: ConformalMap, z: np.ndarray) -> np.ndarray:
    """Vectorized g'(z), chain rule through composites."""
    if g.kind == "moebius":
        a, b, c, d = g.params
        return (a * d - b * c) / (c * z + d) ** 2
    if g.kind == "polynomial":
        return np.polynomial.Polynomial(np.array(g.params)).deriv()(z)
    if g.kind == "germ":
        p, cs = g.params
        return np.polynomial.Polynomial(np.array(cs)).deriv()(z - p)
    out = np.ones_like(z)
    for h in reversed(g.params):
        out = out * _slope(h, z)
        z = h(z)
    return out


def _newton(g: ConformalMap, starts: np.ndarray, iters: int = 80) -> np.ndarray:
    z = starts.astype(complex)
    for _ in range(iters):
        with np.errstate(all="ignore"):
            F = g(z) - z
            dF = _slope(g, z) - 1
            step = np.where(np.abs(dF) > 0, F / dF, 0)
        z = z - step
        z = np.where(np.isfinite(z), z, starts)
    return z


def _refine_multiple(g: ConformalMap, z: complex, n: int) -> complex:
    """Newton on the (n-1)-st derivative of g(z) - z, where an order-n root is simple."""
    for _ in range(60):
        J = g.jet(z, n + 1) - Jet.variable(z, n + 1)
        f, df = J.derivative_at(n - 1), J.derivative_at(n)
        if df == 0:
            break
        step = f / df
        z -= step
        if abs(step) < 1e-16 * max(1.0, abs(z)):
            break
    return z


def find_fixed_points(g: ConformalMap, region: Region | None = None) -> list:
    """Fixed points of ``g`` in ``region`` and its domain, each with its order."""
    region = Region() if region is None else region
    if g.is_identity:
        return []
    if g.kind == "moebius":
        a, b, c, d = g.params
        if c == 0:
            cands = [] if a == d else [b / (d - a)]
        else:
            disc = np.sqrt(complex((d - a) ** 2 + 4 * b * c))
            cands = [(a - d + disc) / (2 * c), (a - d - disc) / (2 * c)]
            if abs(disc) < 1e-12:
                cands = cands[:1]
    else:
        x = np.linspace(-region.radius, region.radius, NEWTON_GRID)
        starts = (region.center + x[:, None] + 1j * x[None, :]).ravel()
        found = _newton(g, starts)
        found = found[np.abs(g(found) - found) < 1e-6]
        cands = []
        for z in found:
            if all(abs(z - w) > 1e-4 for w in cands):
                cands.append(z)
    out = []
    for z in cands:
        z = complex(z)
        if not (region.contains(z) and g.in_domain(z)):
            continue
        if g.kind != "moebius":
            # a multiple root is only located to eps^(1/n); polish on the derivative where it is simple
            J = (g.jet(z, 12) - Jet.variable(z, 12)).coeffs
            n_est = max((k for k in range(1, 13) if np.max(np.abs(J[:k])) < 1e-4), default=1)
            if n_est > 1:
                w = _refine_multiple(g, z, n_est)
                if abs(g(w) - w) <= max(abs(g(z) - z), 1e-14):
                    z = w
        n = fixed_point_order(g, z, 12)
        if abs(g(z) - z) > ROOT_TOL:
            raise RootConditioning(f"fixed point residual {abs(g(z) - z):.2e} at {z}")
        if all(abs(z - r.z0) > 1e-8 for r in out):
            out.append(FixedPointRecord(z, n, g))
    return sorted(out, key=lambda r: (round(r.z0.real, 9), round(r.z0.imag, 9)))


# ---------------------------------------------------------------------------
# test functions


@dataclass(frozen=True)
class _Gaussian:
    P: np.ndarray  # P[i, j] multiplies z^i zbar^j
    alpha: float
    center: complex


def _polymul2(P1: np.ndarray, P2: np.ndarray) -> np.ndarray:
    out = np.zeros((P1.shape[0] + P2.shape[0] - 1, P1.shape[1] + P2.shape[1] - 1), dtype=complex)
    for i, j in zip(*np.nonzero(P1)):
        out[i:i + P2.shape[0], j:j + P2.shape[1]] += P1[i, j] * P2
    return out


class TestFunction:
    """Finite sum of P(z, zbar) exp(-alpha |z - c|^2)."""

    __test__ = False  # not a pytest class

    def __init__(self, terms=()):
        self.terms = [t if isinstance(t, _Gaussian) else
                      _Gaussian(np.atleast_2d(np.asarray(t[0], dtype=complex)), float(t[1]), complex(t[2]))
                      for t in terms]
        for t in self.terms:
            if t.alpha <= 0:
                raise ValueError("alpha must be positive")

    @classmethod
    def gaussian(cls, alpha: float = 1.0, center: complex = 0j, poly=None) -> TestFunction:
        return cls([(np.array([[1.0]]) if poly is None else poly, alpha, center)])

    @classmethod
    def random(cls, rng: np.random.Generator, terms: int = 1, degree: int = 2, center_scale: float = 0.5,
               alphas=(0.7, 1.5)) -> TestFunction:
        out = []
        for _ in range(terms):
            P = np.zeros((degree + 1, degree + 1), dtype=complex)
            for i in range(degree + 1):
                for j in range(degree + 1 - i):
                    P[i, j] = rng.standard_normal() + 1j * rng.standard_normal()
            c = center_scale * (rng.standard_normal() + 1j * rng.standard_normal())
            out.append((P, rng.uniform(*alphas), c))
        return cls(out)

    @classmethod
    def from_dict(cls, cfg: dict) -> TestFunction:
        terms = []
        for t in cfg["terms"]:
            P = np.array(t.get("poly", [[1.0]]), dtype=complex)
            c = t.get("center", 0.0)
            terms.append((P, t.get("alpha", 1.0), complex(*c) if isinstance(c, list) else complex(c)))
        return cls(terms)

    # -- algebra ----------------------------------------------------------

    def __add__(self, other: TestFunction) -> TestFunction:
        return TestFunction(self.terms + other.terms)

    def __neg__(self) -> TestFunction:
        return self * -1.0

    def __sub__(self, other: TestFunction) -> TestFunction:
        return self + (-other)

    def __mul__(self, other) -> TestFunction:
        if not isinstance(other, TestFunction):
            return TestFunction([_Gaussian(t.P * other, t.alpha, t.center) for t in self.terms])
        out = []
        for s in self.terms:
            for t in other.terms:
                a = s.alpha + t.alpha
                c = (s.alpha * s.center + t.alpha * t.center) / a
                K = np.exp(a * abs(c) ** 2 - s.alpha * abs(s.center) ** 2 - t.alpha * abs(t.center) ** 2)
                out.append(_Gaussian(K * _polymul2(s.P, t.P), a, c))
        return TestFunction(out)

    __rmul__ = __mul__

    # -- calculus ---------------------------------------------------------

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        total = np.zeros(z.shape, dtype=complex)
        zb = np.conj(z)
        for t in self.terms:
            poly = np.zeros(z.shape, dtype=complex)
            for i, j in zip(*np.nonzero(t.P)):
                poly += t.P[i, j] * z ** i * zb ** j
            total += poly * np.exp(-t.alpha * np.abs(z - t.center) ** 2)
        return total

    def _derive(self, holomorphic: bool) -> TestFunction:
        out = []
        for t in self.terms:
            P = t.P
            if holomorphic:
                dP = P[1:, :] * np.arange(1, P.shape[0])[:, None] if P.shape[0] > 1 else np.zeros((1, P.shape[1]))
                lin = np.array([[-np.conj(t.center), 1.0]])  # zbar - cbar
            else:
                dP = P[:, 1:] * np.arange(1, P.shape[1])[None, :] if P.shape[1] > 1 else np.zeros((P.shape[0], 1))
                lin = np.array([[-t.center], [1.0]])  # z - c
            Q = _polymul2(P, lin) * (-t.alpha)
            Q[:dP.shape[0], :dP.shape[1]] += dP
            out.append(_Gaussian(Q, t.alpha, t.center))
        return TestFunction(out)

    def dz(self) -> TestFunction:
        return self._derive(True)

    def dzbar(self) -> TestFunction:
        return self._derive(False)

    def sample(self, z) -> tuple:
        """(value, d/dz, d/dzbar) at the points ``z``."""
        return self(z), self.dz()(z), self.dzbar()(z)

    def jet(self, z0: complex, order: int, wbar: complex | None = None) -> Jet:
        """Jet in (z - z0) of z -> f(z, wbar); ``wbar`` defaults to conj(z0)."""
        z0 = complex(z0)
        wbar = np.conj(z0) if wbar is None else complex(wbar)
        total = Jet(z0, np.zeros(order + 1, dtype=complex))
        k = np.arange(order + 1)
        fact = np.array([factorial(int(x)) for x in k], dtype=float)
        for t in self.terms:
            poly = t.P @ (wbar ** np.arange(t.P.shape[1]))
            pj = Jet(z0, _taylor_shift(poly, z0, order))
            u = -t.alpha * (wbar - np.conj(t.center))
            ej = Jet(z0, np.exp(u * (z0 - t.center)) * u ** k / fact)
            total = total + pj * ej
        return total

    def integral(self) -> complex:
        """Exact integral over the plane against d^2 z (Lebesgue measure)."""
        total = 0j
        for t in self.terms:
            c, cb, a = t.center, np.conj(t.center), t.alpha
            for i, j in zip(*np.nonzero(t.P)):
                s = sum(comb(i, k) * comb(j, k) * c ** (i - k) * cb ** (j - k) * factorial(k) / a ** (k + 1)
                        for k in range(min(i, j) + 1))
                total += t.P[i, j] * pi * s
        return complex(total)

    def affine_pullback(self, A: complex, B: complex) -> TestFunction:
        """w -> f((w - B) / A)."""
        A, B = complex(A), complex(B)
        zw = np.polynomial.Polynomial([-B / A, 1 / A])
        zbw = np.polynomial.Polynomial([-np.conj(B / A), 1 / np.conj(A)])
        out = []
        for t in self.terms:
            Q = np.zeros(t.P.shape, dtype=complex)
            for i, j in zip(*np.nonzero(t.P)):
                Q += t.P[i, j] * np.outer(_pad((zw ** i).coef, t.P.shape[0]), _pad((zbw ** j).coef, t.P.shape[1]))
            out.append(_Gaussian(Q, t.alpha / abs(A) ** 2, A * t.center + B))
        return TestFunction(out)

    def support_disks(self, tol: float = SUPPORT_TOL) -> list:
        """Disks outside of which each term is below ``tol`` times the overall scale."""
        disks = []
        for t in self.terms:
            scale = np.max(np.abs(t.P))
            deg = t.P.shape[0] + t.P.shape[1] - 2
            r = 1.0
            while scale * (abs(t.center) + r + 1) ** deg * np.exp(-t.alpha * r * r) > tol:
                r *= 1.1
            disks.append((t.center, r))
        return disks


def _pad(c: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n, dtype=complex)
    out[:min(n, c.size)] = c[:n]
    return out


# ---------------------------------------------------------------------------
# groupoid elements


class Composed:
    """The factor z -> f(g(z))."""

    def __init__(self, f, g: ConformalMap):
        if isinstance(f, Composed):
            f, g = f.f, f.g.compose(g)
        self.f, self.g = f, g

    def __call__(self, z):
        return self.f(self.g(z))

    def jet(self, z0: complex, order: int) -> Jet:
        w0 = complex(self.g(z0))
        return self.f.jet(w0, order).compose(self.g.jet(z0, order))


class LogDerivative:
    """The holomorphic factor d/dz ln g'(z) = g''/g'."""

    def __init__(self, g: ConformalMap):
        self.g = g

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        if self.g.kind == "moebius":
            _, _, c, d = self.g.params
            return -2 * c / (c * z + d)
        return np.vectorize(lambda p: complex(self.jet(p, 0).coeffs[0]))(z)

    def jet(self, z0: complex, order: int) -> Jet:
        gj = self.g.jet(z0, order + 2)
        d1 = gj.derivative(1)
        return Jet(z0, (d1.derivative(1) / d1).coeffs[:order + 1])


@dataclass(frozen=True)
class GroupoidTerm:
    label: tuple
    map: ConformalMap
    factors: tuple
    coeff: complex = 1.0

    def value(self, z):
        out = np.full(np.shape(z), self.coeff, dtype=complex)
        for f in self.factors:
            out = out * f(z)
        return out

    def jet(self, z0: complex, order: int) -> Jet:
        out = Jet.constant(z0, self.coeff, order)
        for f in self.factors:
            out = out * f.jet(z0, order)
        return out


@dataclass(frozen=True)
class GroupoidElement:
    """Finite sum of terms f U*_g; ``degree`` tags 1-forms produced by the modular derivation."""

    terms: tuple
    degree: int = 0

    @classmethod
    def elementary(cls, f: TestFunction, g: ConformalMap, label=None) -> GroupoidElement:
        label = (label if label is not None else id(g),)
        bad = [d for d in f.support_disks() if not _disk_in_domain(d, g)]
        if bad:
            raise SupportViolation(f"support disk {bad[0]} leaves the domain of the map")
        return cls((GroupoidTerm(label, g, (f,)),))

    def __add__(self, other: GroupoidElement) -> GroupoidElement:
        return GroupoidElement(self.terms + other.terms, max(self.degree, other.degree))

    def __mul__(self, other) -> GroupoidElement:
        if not isinstance(other, GroupoidElement):
            return GroupoidElement(tuple(GroupoidTerm(t.label, t.map, t.factors, t.coeff * other) for t in self.terms),
                                   self.degree)
        out = []
        for s in self.terms:
            for t in other.terms:
                _check_product_support(s, t)
                factors = s.factors + tuple(Composed(f, s.map) for f in t.factors)
                out.append(GroupoidTerm(t.label + s.label, t.map.compose(s.map), factors, s.coeff * t.coeff))
        return GroupoidElement(tuple(out), self.degree + other.degree)

    __rmul__ = __mul__


def _disk_in_domain(disk, g: ConformalMap, samples: int = 64) -> bool:
    c, r = disk
    for cc, rr in g.exclusions:
        if abs(cc - c) <= r + rr:
            return False
    if g.within is not None and abs(c - g.within[0]) + r > g.within[1]:
        return False
    return True


def _check_product_support(s: GroupoidTerm, t: GroupoidTerm, n: int = 48) -> None:
    """Where f_s (f_t o g_s) is not negligible, g_s must land in the domain of g_t."""
    if not t.map.exclusions and t.map.within is None:
        return
    lead = s.factors[0]
    disks = lead.support_disks() if isinstance(lead, TestFunction) else [(0j, 10.0)]
    for c, r in disks:
        x = np.linspace(-r, r, n)
        z = (c + x[:, None] + 1j * x[None, :]).ravel()
        ok = s.map.in_domain(z)
        z = z[ok]
        img = s.map(z)
        weight = np.abs(s.value(z))
        for f in t.factors:
            weight = weight * np.abs(f(img))
        live = weight > SUPPORT_TOL * max(1.0, float(weight.max(initial=0)))
        if np.any(~t.map.in_domain(img[live])):
            raise SupportViolation("product support leaves the domain of the composite map")


# ---------------------------------------------------------------------------
# Lefschetz localization


def lefschetz_contribution(g: ConformalMap, fp: FixedPointRecord, a) -> complex:
    """-1/(n-1)! d^(n-1)/dz^(n-1) [(z - z0)^n / (g(z) - z) a(z)] at z0.

    ``a`` is anything with ``jet(z0, order)`` (a TestFunction, a groupoid term, a factor).
    """
    n = fp.order
    if n == float("inf"):
        return 0j
    m = 2 * n + 4
    F = g.jet(fp.z0, m) - Jet.variable(fp.z0, m)
    if F.valuation() != n:
        raise OrderMismatch(f"valuation {F.valuation()} differs from recorded order {n}")
    H = F.drop(n).reciprocal()
    prod = H * a.jet(fp.z0, m)
    return complex(-prod.coeffs[n - 1])


def closed_form_contribution(n: int, g_derivs, a_derivs) -> complex:
    """Explicit low-order contributions from derivatives of g (g_derivs[k] = g^(k)(z0)) and a.

    n = 3 is the classical listed formula, which is off by a factor 2 (see
    :func:`order3_discrepancy`); the jet engine is the shipped answer.
    """
    g, a = g_derivs, a_derivs
    if n == 1:
        return a[0] / (1 - g[1])
    if n == 2:
        return 2 / g[2] * (g[3] / (3 * g[2]) * a[0] - a[1])
    if n == 3:
        r4, r5 = g[4] / g[3], g[5] / g[3]
        return 3 / (2 * g[3]) * (r5 / 10 * a[0] - r4 ** 2 / 8 * a[0] + r4 / 2 * a[1] - a[2])
    raise ValueError("closed forms are listed for n <= 3")


def _derivs(jet: Jet, k: int) -> list:
    return [jet.derivative_at(i) for i in range(k + 1)]


def order3_discrepancy(g: ConformalMap, fp: FixedPointRecord, a) -> dict:
    """Jet value against the listed n = 3 closed form at an order-3 point."""
    jet_value = lefschetz_contribution(g, fp, a)
    listed = closed_form_contribution(3, _derivs(g.jet(fp.z0, 6), 6), _derivs(a.jet(fp.z0, 3), 3))
    return {"jet": jet_value, "listed": listed, "ratio": jet_value / listed if listed else None}


@dataclass(frozen=True)
class PhiRecord:
    label: tuple
    z0: complex
    order: int | float
    contribution: complex
    infinite_order_convention: bool


def phi_records(x: GroupoidElement, region: Region | None = None) -> list:
    """Every fixed point of every term with its contribution; infinite order contributes zero."""
    out = []
    cache = {}
    for t in x.terms:
        key = id(t.map)
        if key not in cache:
            cache[key] = find_fixed_points(t.map, region)
        if t.map.is_identity:
            out.append(PhiRecord(t.label, complex("nan"), float("inf"), 0j, True))
            continue
        for fp in cache[key]:
            inf = fp.order == float("inf")
            out.append(PhiRecord(t.label, fp.z0, fp.order, 0j if inf else lefschetz_contribution(t.map, fp, t), inf))
    return out


def phi_trace(x: GroupoidElement, region: Region | None = None) -> complex:
    return complex(sum(r.contribution for r in phi_records(x, region)))


def trace_property_check(x: GroupoidElement, y: GroupoidElement, region: Region | None = None) -> float:
    return float(abs(phi_trace(x * y, region) - phi_trace(y * x, region)))


def modular_delta(x: GroupoidElement) -> GroupoidElement:
    """Each term f U*_g times d/dz ln g'; the result is tagged as a 1-form."""
    terms = tuple(GroupoidTerm(t.label, t.map, t.factors + (LogDerivative(t.map),), t.coeff) for t in x.terms)
    return GroupoidElement(terms, x.degree + 1)


# ---------------------------------------------------------------------------
# quadrature on the plane


def _polar_nodes(center: complex, n_r: int, n_t: int, scale: float) -> tuple:
    t, w = np.polynomial.legendre.leggauss(n_r)
    t = 0.5 * (t + 1)
    w = 0.5 * w
    r = scale * t / (1 - t)
    dr = scale / (1 - t) ** 2
    th = 2 * pi * np.arange(n_t) / n_t
    z = center + r[:, None] * np.exp(1j * th)[None, :]
    weights = (w * dr * r)[:, None] * np.full(n_t, 2 * pi / n_t)[None, :]
    return z, weights


def plane_integral(density, center: complex = 0j, scale: float = 1.0, tol: float = 1e-11,
                   start=(96, 64), max_doublings: int = 4, accept: float = 1e-4) -> tuple:
    """Adaptive polar quadrature of ``density(z)`` against d^2 z; returns (value, last change)."""
    n_r, n_t = start
    prev = None
    for _ in range(max_doublings + 1):
        z, w = _polar_nodes(center, n_r, n_t, scale)
        val = complex(np.sum(w * density(z)))
        if prev is not None and abs(val - prev) < tol * max(1.0, abs(val)):
            return val, abs(val - prev)
        change = None if prev is None else abs(val - prev)
        prev = val
        n_r, n_t = 2 * n_r, 2 * n_t
    if change is not None and change > accept:
        raise QuadratureNonConvergence(f"quadrature stalled with change {change:.2e}")
    return prev, change


def cauchy_quadrature_oracle(g: ConformalMap, a: TestFunction, region: Region | None = None) -> complex:
    """Integral of (d a / d zbar)(z) / (pi (g(z) - z)) over the plane.

    Each fixed point gets its own polar grid weighted by a smooth partition of
    unity that vanishes to second order at the other fixed points.
    """
    c0, r0 = max(a.support_disks(), key=lambda d: d[1])
    region = Region(c0, r0) if region is None else region
    pts = [fp.z0 for fp in find_fixed_points(g, region)]
    dbar = a.dzbar()

    def base(z):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = dbar(z) / (pi * (g(z) - z))
        return np.where(np.isfinite(out), out, 0)

    if not pts:
        return plane_integral(base, c0, 1.0)[0]

    def weight(k):
        def w(z):
            prods = []
            for l in range(len(pts)):
                p = np.ones(z.shape)
                for j, zj in enumerate(pts):
                    if j != l:
                        p = p * np.abs(z - zj) ** 2
                prods.append(p)
            return prods[k] / sum(prods)
        return w

    total = 0j
    for k, zk in enumerate(pts):
        wk = weight(k)
        total += plane_integral(lambda z: wk(z) * base(z), zk, 1.0, tol=1e-9)[0]
    return total


def localized_sum(g: ConformalMap, a: TestFunction, region: Region | None = None) -> complex:
    """sum over simple fixed points of a(z0) / (1 - g'(z0))."""
    c0, r0 = max(a.support_disks(), key=lambda d: d[1])
    region = Region(c0, r0) if region is None else region
    total = 0j
    for fp in find_fixed_points(g, region):
        if fp.order != 1:
            raise OrderMismatch("the Cauchy oracle needs simple fixed points")
        total += a(fp.z0) / (1 - g.derivative(fp.z0, 1))
    return complex(total)


# ---------------------------------------------------------------------------
# Todd cocycle (trivial action)


class MatrixField:
    """Square matrix of TestFunctions with the matrix product."""

    def __init__(self, entries):
        self.entries = [list(row) for row in entries]
        self.k = len(self.entries)

    @classmethod
    def random(cls, rng: np.random.Generator, k: int = 2, degree: int = 1) -> MatrixField:
        return cls([[TestFunction.random(rng, 1, degree) for _ in range(k)] for _ in range(k)])

    def __mul__(self, other: MatrixField) -> MatrixField:
        k = self.k
        out = []
        for i in range(k):
            row = []
            for j in range(k):
                acc = self.entries[i][0] * other.entries[0][j]
                for l in range(1, k):
                    acc = acc + self.entries[i][l] * other.entries[l][j]
                row.append(acc)
            out.append(row)
        return MatrixField(out)

    def __add__(self, other: MatrixField) -> MatrixField:
        return MatrixField([[a + b for a, b in zip(r1, r2)] for r1, r2 in zip(self.entries, other.entries)])

    def __rmul__(self, scalar) -> MatrixField:
        return MatrixField([[f * scalar for f in row] for row in self.entries])

    def sample(self, z) -> tuple:
        parts = [[f.sample(z) for f in row] for row in self.entries]
        return tuple(np.moveaxis(np.array([[p[s] for p in row] for row in parts]), (0, 1), (-2, -1))
                     for s in range(3))


@dataclass(frozen=True)
class BottProjector:
    """e(z) = v v* / (1 + |z|^2) with v = (1, z), conjugated by a constant unitary; ``constant`` freezes z = 0."""

    unitary: np.ndarray | None = None
    constant: bool = False

    def sample(self, z) -> tuple:
        z = np.asarray(z, dtype=complex)
        if self.constant:
            z0 = np.zeros_like(z)
            e = np.zeros(z.shape + (2, 2), dtype=complex)
            e[..., 0, 0] = 1
            zero = np.zeros_like(e)
            out = (e, zero, zero.copy())
        else:
            N = 1 + np.abs(z) ** 2
            v = np.stack([np.ones_like(z), z], -1)
            vv = v[..., :, None] * np.conj(v)[..., None, :]
            dv = np.zeros_like(v)
            dv[..., 1] = 1
            e = vv / N[..., None, None]
            de = (dv[..., :, None] * np.conj(v)[..., None, :]) / N[..., None, None] \
                - (np.conj(z) / N ** 2)[..., None, None] * vv
            dbe = (v[..., :, None] * np.conj(dv)[..., None, :]) / N[..., None, None] \
                - (z / N ** 2)[..., None, None] * vv
            out = (e, de, dbe)
            z0 = None
        del z0
        if self.unitary is None:
            return out
        U = np.asarray(self.unitary)
        return tuple(U @ x @ U.conj().T for x in out)


def _as_field(a):
    """TestFunction, MatrixField, BottProjector, or a GroupoidElement whose maps are identities."""
    if isinstance(a, GroupoidElement):
        total = None
        for t in a.terms:
            if not t.map.is_identity:
                raise UnsupportedFixedManifold("only identity components carry an explicit fixed manifold")
            if len(t.factors) != 1 or not isinstance(t.factors[0], TestFunction):
                raise UnsupportedFixedManifold("identity-component terms must be plain test functions")
            f = t.factors[0] * t.coeff
            total = f if total is None else total + f
        return total
    return a


def _sampled(a, z) -> tuple:
    v, d, db = _as_field(a).sample(z)
    if v.ndim == z.ndim:
        return v[..., None, None], d[..., None, None], db[..., None, None]
    return v, d, db


def _two_form_density(kind: str, a0, a1, a2):
    """Density against d^2 z of the 2-form in ``kind`` (dz ^ dzbar = -2i d^2 z).

    With trivial action d ln g' = 0, so the modular derivation acts by zero; it is kept
    explicit so the nabla expression is computed independently of the split one.
    """

    def density(z):
        v0, _, _ = _sampled(a0, z)
        v1, d1, db1 = _sampled(a1, z)
        v2, d2, db2 = _sampled(a2, z)
        ell = np.zeros(z.shape)[..., None, None]  # d/dz ln g' for identity maps
        if kind == "fundamental":
            form = v0 @ (d1 @ db2 - db1 @ d2)
        elif kind == "chern1":
            # d a1 ^ delta a2 + delta a1 ^ d a2, with delta a = ell a dz
            form = v0 @ (-(db1 @ (ell * v2)) + (ell * v1) @ db2)
        elif kind == "todd":
            n1 = d1 - 0.5 * ell * v1
            n2 = d2 - 0.5 * ell * v2
            form = v0 @ (n1 @ db2 - db1 @ n2)
        else:
            raise ValueError(f"unknown cocycle {kind!r}")
        return -2j * np.trace(form, axis1=-2, axis2=-1)

    return density


def todd_pair(kind: str, a0, a1, a2, tol: float = 1e-11) -> complex:
    """fundamental, chern1 or todd (= fundamental - chern1 / 2) on a0 da1 da2 over the fixed manifold."""
    if kind == "todd_split":
        return todd_pair("fundamental", a0, a1, a2, tol) - 0.5 * todd_pair("chern1", a0, a1, a2, tol)
    return plane_integral(_two_form_density(kind, a0, a1, a2), 0j, 1.0, tol=tol)[0]


def cocycle_property_check(kind: str = "todd", trials: int = 20, seed: int = 3) -> float:
    """Max over random 2 x 2 Gaussian-polynomial fields of the Hochschild coboundary and cyclicity residuals."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        a = [MatrixField.random(rng) for _ in range(4)]
        phi = lambda x, y, w: todd_pair(kind, x, y, w)
        b = (phi(a[0] * a[1], a[2], a[3]) - phi(a[0], a[1] * a[2], a[3])
             + phi(a[0], a[1], a[2] * a[3]) - phi(a[3] * a[0], a[1], a[2]))
        cyc = phi(a[0], a[1], a[2]) - phi(a[2], a[0], a[1])
        worst = max(worst, abs(b), abs(cyc))
    return worst


def bott_pairing(projector: BottProjector | None = None, tol: float = 1e-12) -> complex:
    """(1/2 pi i) int tr(e de de) by a radial integral; the density is rotation invariant."""
    projector = BottProjector() if projector is None else projector
    density = _two_form_density("fundamental", projector, projector, projector)
    x, w = np.polynomial.legendre.leggauss(400)
    t = 0.5 * (x + 1)
    r = t / (1 - t)
    dr = 1 / (1 - t) ** 2
    radial = density(r.astype(complex))
    check = density(r * np.exp(0.7j))
    if np.max(np.abs(radial - check)) > 1e-12:
        raise QuadratureNonConvergence("density is not radial")
    val = 2 * pi * np.sum(0.5 * w * dr * r * radial)
    return complex(val / (2j * pi))


# ---------------------------------------------------------------------------
# summability of Q^(-1) A


@dataclass(frozen=True)
class SchattenReport:
    grid: int
    singular_values: np.ndarray
    partial_sums: dict  # p -> cumulative sums of s_i^p


def _cell_antiderivative(t: np.ndarray) -> np.ndarray:
    """i (t log t - t): its mixed second derivative in (Re t, Im t) is -1/t."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 1j * (t * np.log(t) - t)
    return np.where(t == 0, 0, out)


def cell_kernel(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Integral of -1/t over the unit square centred at dx + i dy (zero for the centre cell).

    Cells left of the origin are reflected through it so the square never meets
    the branch cut of the logarithm.
    """
    flip = dx < 0
    sx = np.where(flip, -dx, dx)
    sy = np.where(flip, -dy, dy)
    G = _cell_antiderivative
    val = (G(sx + 0.5 + 1j * (sy + 0.5)) - G(sx - 0.5 + 1j * (sy + 0.5))
           - G(sx + 0.5 + 1j * (sy - 0.5)) + G(sx - 0.5 + 1j * (sy - 0.5)))
    val = np.where(flip, -val, val)
    return np.where((dx == 0) & (dy == 0), 0, val)


def _cauchy_matrix(z: np.ndarray, w: np.ndarray, a: TestFunction, alpha: float, h: float,
                   jac=None, rho_w=None) -> np.ndarray:
    """Weighted discretization rho(z) a(w) / (pi (z - w)) / rho(w) on cells of side h.

    On the grid itself (``jac`` None) the kernel is integrated exactly over each
    cell; for a transported grid the midpoint rule is used.
    """
    if jac is None:
        off = (w[None, :] - z[:, None]) / h
        K = h * cell_kernel(np.rint(off.real), np.rint(off.imag)) / pi
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            K = h * h / (pi * (z[:, None] - w[None, :]))
        K[~np.isfinite(K)] = 0.0
    weight_w = a(w) * (1.0 if jac is None else jac) / (1 + np.abs(w if rho_w is None else rho_w)) ** (alpha / 2)
    return (1 + np.abs(z))[:, None] ** (alpha / 2) * K * weight_w[None, :]


def cauchy_operator_singular_values(a: TestFunction, alpha: float = -2.0, grid: int = 48,
                                    box: float = 2.0, g: ConformalMap | None = None) -> np.ndarray:
    """Singular values (decreasing) of xi -> int a(w) xi(g(w)) / (pi (z - w)) d^2 w on the weighted space.

    The box [-box, box]^2 is cut into square cells collocated at their centres;
    the self-interaction of a cell vanishes by symmetry.  With a Moebius ``g`` the
    integral is written in the variable v = g(w).  When ``a`` is invariant under
    z -> i z and ``g`` is the identity, the quarter-turn symmetry splits the
    matrix into four blocks, one per character of Z/4.
    """
    h = 2 * box / grid
    x = -box + h * (np.arange(grid) + 0.5)
    z = (x[:, None] + 1j * x[None, :]).ravel()
    if g is None or g.is_identity:
        quarter = z[(z.real > 0) & (z.imag > 0)]
        if np.allclose(a(1j * quarter), a(quarter), atol=1e-14, rtol=1e-12):
            blocks = [_cauchy_matrix(quarter, 1j ** c * quarter, a, alpha, h) for c in range(4)]
            sv = [np.linalg.svd(sum(1j ** (m * c) * blocks[c] for c in range(4)), compute_uv=False)
                  for m in range(4)]
            return np.sort(np.concatenate(sv))[::-1]
        return np.linalg.svd(_cauchy_matrix(z, z, a, alpha, h), compute_uv=False)
    if g.kind != "moebius":
        raise UnsupportedFixedManifold("the discretized Cauchy operator needs an invertible map")
    A, B, C, D = g.params
    w = (D * z - B) / (-C * z + A)
    jac = np.abs((A * D - B * C) / (-C * z + A) ** 2) ** 2
    M = _cauchy_matrix(z, w, a, alpha, h, jac=jac, rho_w=z)
    return np.linalg.svd(M, compute_uv=False)


def schatten_decay_check(g: ConformalMap | None, a: TestFunction, alpha: float = -2.0,
                         grids=(48, 64), ps=(2.0, 2.5, 3.0, 4.0), box: float = 2.0) -> list:
    """Singular values and partial sums of s_i^p for each grid."""
    out = []
    for n in grids:
        s = cauchy_operator_singular_values(a, alpha, n, box, g)
        out.append(SchattenReport(n, s, {p: np.cumsum(s ** p) for p in ps}))
    return out


def schatten_refinement_ratios(reports: list) -> dict:
    """Relative change of the total sum of s^p between the coarsest and finest grid."""
    lo, hi = reports[0], reports[-1]
    return {p: float(hi.partial_sums[p][-1] / lo.partial_sums[p][-1] - 1) for p in lo.partial_sums}


def random_moebius_pair(rng: np.random.Generator) -> tuple:
    """Two elementary elements f U*_g with g(z) = (a z + b) / (c z + 1) expanding, pole far out.

    |a| is drawn in [1.5, 2.5] and |c| ~ 0.02, so every composite has a simple
    fixed point near the origin and its pole far beyond the supports.
    """
    out = []
    for _ in range(2):
        a = rng.uniform(1.5, 2.5) * np.exp(1j * rng.uniform(-0.5, 0.5))
        b = 0.3 * (rng.standard_normal() + 1j * rng.standard_normal())
        c = 0.02 * (rng.standard_normal() + 1j * rng.standard_normal())
        f = TestFunction.random(rng, terms=1, degree=1, center_scale=0.3, alphas=(0.8, 1.5))
        out.append(GroupoidElement.elementary(f, ConformalMap.moebius(a, b, c, 1)))
    return tuple(out)


def random_pair_trace_residual(rng: np.random.Generator, region: Region | None = None) -> float:
    x, y = random_moebius_pair(rng)
    return trace_property_check(x, y, Region(0j, 60.0) if region is None else region)
