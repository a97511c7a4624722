"""Deterministic large-n limits: Marchenko-Pastur law, the limiting Jacobi
matrix, limiting CG error norms and halting times, and the classical
condition-number bound.

The limiting squared error of CG after ``k`` steps in the ``W^ell`` norm is

    e^2(ell, k, d) = int lambda^(ell-2) det(T_{k,d} - lambda)^2 dMP_d(lambda)

where ``T_{k,d}`` is the leading ``k x k`` block of ``H H*`` with ``H``
lower bidiagonal, ones on the diagonal and ``sqrt(d)`` below it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import ParameterError

# tolerance used to decide that a ceiling argument sits on an integer
_TIE_TOL = 1e-9


def _check_d(d, allow_one=True):
    if not (0.0 < d < 1.0 or (allow_one and d == 1.0)):
        raise ParameterError(f"d must lie in (0, {'1]' if allow_one else '1)'}, got {d}")


def _check_ell(ell, d):
    if int(ell) != ell:
        raise ParameterError(f"ell must be an integer, got {ell}")
    _check_d(d)
    if ell < 2 and d == 1.0:
        raise ParameterError("d=1 requires ell>=2 (the limit is undefined for ell<2)")


@dataclass(frozen=True)
class MpLaw:
    """Marchenko-Pastur law with ratio ``d``, supported on ``[d_minus, d_plus]``."""

    d: float

    def __post_init__(self):
        _check_d(self.d)

    @property
    def d_minus(self) -> float:
        return (1.0 - math.sqrt(self.d)) ** 2

    @property
    def d_plus(self) -> float:
        return (1.0 + math.sqrt(self.d)) ** 2

    def density(self, x):
        return mp_density(x, self.d)

    def cdf(self, x):
        return mp_cdf(x, self.d)


def mp_density(x, d):
    _check_d(d)
    x = np.asarray(x, dtype=float)
    lo, hi = (1 - math.sqrt(d)) ** 2, (1 + math.sqrt(d)) ** 2
    inside = (x > lo) & (x < hi)
    xs = np.where(inside, x, 1.0)
    val = np.sqrt(np.abs((hi - xs) * (xs - lo))) / (2.0 * math.pi * d * xs)
    out = np.where(inside, val, 0.0)
    return float(out) if out.ndim == 0 else out


def mp_cdf(x, d):
    """Closed-form distribution function of the Marchenko-Pastur law.

    With ``lambda = 1 + d + 2 sqrt(d) cos(theta)`` the mass above ``lambda``
    is ``(2/pi) int_0^theta sin^2 / (1 + d + 2 sqrt(d) cos)``, which has an
    elementary antiderivative.
    """
    _check_d(d)
    x = np.asarray(x, dtype=float)
    s = math.sqrt(d)
    t = np.clip((x - 1.0 - d) / (2.0 * s), -1.0, 1.0)
    theta = np.arccos(t)

    def G(th):
        # antiderivative of sin^2(th) / (1 + d + 2 s cos(th)) on [0, pi]
        half = th / 2.0
        # tan(theta/2) -> inf at theta = pi; arctan handles it through the ratio form
        atan = np.arctan2((1 - s) * np.sin(half), (1 + s) * np.cos(half))
        return -(1 - d) / (2 * d) * atan - np.sin(th) / (2 * s) + (1 + d) * th / (4 * d)

    out = 1.0 - (2.0 / math.pi) * (G(theta) - G(0.0))
    out = np.where(x <= (1 - s) ** 2, 0.0, np.where(x >= (1 + s) ** 2, 1.0, out))
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def chebyshev_u(k, x):
    """Chebyshev polynomial of the second kind ``U_k(x)``; ``U_{-1} = 0``."""
    x = np.asarray(x, dtype=float)
    if k < 0:
        return np.zeros_like(x) if x.ndim else 0.0
    u_prev, u = np.zeros_like(x), np.ones_like(x)
    for _ in range(k):
        u_prev, u = u, 2.0 * x * u - u_prev
    return float(u) if u.ndim == 0 else u


@dataclass(frozen=True)
class LimitJacobi:
    """Leading ``k x k`` block of the infinite limit Jacobi matrix."""

    k: int
    d: float

    @property
    def alpha(self) -> np.ndarray:
        a = np.full(self.k, 1.0 + self.d)
        if self.k:
            a[0] = 1.0
        return a

    @property
    def b(self) -> np.ndarray:
        return np.full(max(self.k - 1, 0), math.sqrt(self.d))

    def dense(self) -> np.ndarray:
        return np.diag(self.alpha) + np.diag(self.b, 1) + np.diag(self.b, -1)

    def char_poly(self, lam):
        return limit_char_poly(self.k, self.d, lam)


def limit_bidiagonal(k, d) -> np.ndarray:
    """Leading ``k x k`` block of the limit bidiagonal factor."""
    return np.eye(k) + math.sqrt(d) * np.eye(k, k=-1)


def limit_char_poly(k, d, lam):
    """``det(T_{k,d} - lam I)`` via ``d^{k/2} [U_k(-x) - sqrt(d) U_{k-1}(-x)]``
    with ``x = (lam - 1 - d) / (2 sqrt d)``."""
    if k < 0:
        raise ParameterError("k must be nonnegative")
    lam = np.asarray(lam, dtype=float)
    if k == 0:
        out = np.ones_like(lam)
        return float(out) if out.ndim == 0 else out
    s = math.sqrt(d)
    y = -(lam - 1.0 - d) / (2.0 * s)
    u_prev, u = np.zeros_like(y), np.ones_like(y)
    for _ in range(k):
        u_prev, u = u, 2.0 * y * u - u_prev
    out = d ** (k / 2.0) * (u - s * u_prev)
    return float(out) if out.ndim == 0 else out


def _gauss_chebyshev_u(npts):
    j = np.arange(1, npts + 1)
    t = j * math.pi / (npts + 1)
    return np.cos(t), math.pi / (npts + 1) * np.sin(t) ** 2


def _mp_integral(power, d, f=None, deg=0, tol=1e-12):
    """``int lambda^power f(lambda) dMP_d`` for a polynomial ``f`` of degree
    ``deg`` (``f=None`` means 1).

    After the substitution ``lambda = 1 + d + 2 sqrt(d) x`` the measure is
    ``(2/pi) sqrt(1 - x^2) / lambda dx``.  Polynomial integrands are done
    exactly by a Gauss rule of matching degree; a negative net power of
    ``lambda`` (pole outside [-1, 1] when d < 1) is refined by doubling the
    node count until successive values agree to ``tol``.
    """
    s = math.sqrt(d)
    f = f if f is not None else (lambda lam: np.ones_like(lam))
    net = power - 1
    if net >= 0:
        npts = (net + deg) // 2 + 2
        x, w = _gauss_chebyshev_u(npts)
        lam = 1.0 + d + 2.0 * s * x
        return (2.0 / math.pi) * float(np.sum(w * lam**net * f(lam)))
    if d == 1.0:
        if power < 0:
            raise ParameterError("d=1 requires a nonnegative power of lambda")
        # 1/lambda cancels one factor of sqrt(1+x): Gauss-Jacobi(1/2, -1/2) is exact
        x, w = special.roots_jacobi(deg // 2 + 2, 0.5, -0.5)
        lam = 2.0 + 2.0 * x
        return float(np.sum(w * f(lam))) / math.pi
    npts = 2 * (deg // 2 + 2)
    prev = None
    while npts <= 2**20:
        x, w = _gauss_chebyshev_u(npts)
        lam = 1.0 + d + 2.0 * s * x
        val = (2.0 / math.pi) * float(np.sum(w * lam**net * f(lam)))
        if prev is not None and abs(val - prev) <= tol * max(abs(val), 1e-300):
            return val
        prev = val
        npts *= 2
    raise ArithmeticError("Marchenko-Pastur quadrature did not converge")


def mp_moment(k, d) -> float:
    """``int lambda^k dMP_d``."""
    if int(k) != k:
        raise ParameterError("moment order must be an integer")
    _check_d(d)
    if k < 0 and d == 1.0:
        raise ParameterError("negative moments are infinite for d=1")
    if k == 0:
        return 1.0
    return _mp_integral(int(k), d)


def limit_error_quadrature(ell, k, d) -> float:
    """Limit error norm ``e(ell, k, d)`` by Gauss quadrature of its defining
    integral (square root taken at the end)."""
    _check_ell(ell, d)
    if k < 0:
        raise ParameterError("k must be nonnegative")
    val = _mp_integral(int(ell) - 2, d, lambda lam: limit_char_poly(k, d, lam) ** 2, deg=2 * k)
    return math.sqrt(max(val, 0.0))


def limit_error(ell, k, d) -> float:
    """Limit of ``||e_k||_{W^ell}`` as n grows.

    Closed forms are used for ``ell`` in {1, 2, 3}; other ``ell`` fall back to
    quadrature (``k = 0`` is a plain Marchenko-Pastur moment).
    """
    _check_ell(ell, d)
    if int(k) != k or k < 0:
        raise ParameterError("k must be a nonnegative integer")
    if ell == 1:
        return math.sqrt(d**k / (1.0 - d))
    if ell == 2:
        return d ** (k / 2.0)
    if ell == 3:
        return math.sqrt(d**k * (1.0 + d)) if k >= 1 else 1.0
    if k == 0:
        return math.sqrt(mp_moment(int(ell) - 2, d))
    return limit_error_quadrature(ell, k, d)


def _halting_argument(ell, eps, d):
    if ell not in (1, 2):
        raise ParameterError(f"halting times are defined for ell in {{1, 2}}, got {ell}")
    _check_d(d, allow_one=False)
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    if ell == 1:
        if not eps**2 < 1.0 / (1.0 - d):
            raise ParameterError(f"ell=1 requires eps^2 < 1/(1-d) = {1 / (1 - d):.6g}")
        return (2.0 * math.log(eps) + math.log(1.0 - d)) / math.log(d)
    if not eps < 1.0:
        raise ParameterError("ell=2 requires eps < 1")
    return 2.0 * math.log(eps) / math.log(d)


def predict_halting(ell, eps, d) -> int:
    """Limit halting time: ``ceil((2 ln eps + ln(1-d)) / ln d)`` for ``ell=1``,
    ``ceil(2 ln eps / ln d)`` for ``ell=2``."""
    q = _halting_argument(ell, eps, d)
    r = round(q)
    if abs(q - r) <= _TIE_TOL * max(1.0, abs(q)):
        return int(r)
    return math.ceil(q)


def is_exceptional(ell, eps, d) -> bool:
    """True when ``eps`` coincides (to ~1e-9 in the exponent) with a limit
    error value, where the halting time splits over two adjacent integers."""
    q = _halting_argument(ell, eps, d)
    return abs(q - round(q)) <= _TIE_TOL * max(1.0, abs(q)) and round(q) > 0


def exceptional_set(ell, d, k_max) -> list[float]:
    """``[e(ell, k, d) for k = 0..k_max]``, strictly decreasing."""
    if ell not in (1, 2):
        raise ParameterError(f"ell must be 1 or 2, got {ell}")
    _check_d(d, allow_one=False)
    return [limit_error(ell, k, d) for k in range(int(k_max) + 1)]


def classical_cg_bound(kappa, k) -> float:
    """Relative W-norm error bound ``2 / (rho^k + rho^-k)``,
    ``rho = (sqrt(kappa) - 1) / (sqrt(kappa) + 1)``."""
    if not kappa >= 1.0:
        raise ParameterError(f"condition number must be >= 1, got {kappa}")
    if k == 0:
        return 1.0
    rho = (math.sqrt(kappa) - 1.0) / (math.sqrt(kappa) + 1.0)
    if rho == 0.0:
        return 0.0
    # 2 rho^k / (1 + rho^2k) avoids overflow of rho^-k
    rk = rho**k
    return 2.0 * rk / (1.0 + rk * rk)
