"""Conjugate gradient, Lanczos and Householder bidiagonalization.

CG always starts from ``x_0 = 0``.  Operators are anything with a
``matvec``; :func:`as_operator` wraps the matrix types produced by
:mod:`cgwishart.ensembles`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
import scipy.linalg as sla

from . import BreakdownError, ParameterError
from .ensembles import BidiagonalChi, DenseWishart

# CG residual below which exact-arithmetic theory no longer describes the run
RESIDUAL_FLOOR = 1e-13


@dataclass
class SymmetricTridiagonal:
    """Jacobi matrix with diagonal ``alpha`` and off-diagonal ``b``.

    ``beta_last`` is the norm of the Lanczos remainder after the final step;
    ``breakdown`` records whether the iteration stopped on it.
    """

    alpha: np.ndarray
    b: np.ndarray
    beta_last: float = 0.0
    breakdown: bool = False

    @property
    def k(self) -> int:
        return self.alpha.size

    def dense(self) -> np.ndarray:
        return np.diag(self.alpha) + np.diag(self.b, 1) + np.diag(self.b, -1)

    def leading(self, k: int) -> "SymmetricTridiagonal":
        return SymmetricTridiagonal(self.alpha[:k].copy(), self.b[: max(k - 1, 0)].copy())


class DenseOperator:
    def __init__(self, W):
        self.W = np.asarray(W)
        self.n = self.W.shape[0]
        self._chol = None
        self._eig = None

    def matvec(self, v):
        return self.W @ v

    def solve(self, b):
        if self._chol is None:
            self._chol = sla.cho_factor(self.W, lower=True)
        return sla.cho_solve(self._chol, b)

    def eigh(self):
        if self._eig is None:
            self._eig = np.linalg.eigh(self.W)
        return self._eig

    def eigvalsh(self):
        return self._eig[0] if self._eig is not None else np.linalg.eigvalsh(self.W)

    def dense(self):
        return self.W


class TridiagonalOperator:
    """Real symmetric tridiagonal operator, O(n) matvec and solve."""

    def __init__(self, alpha, b):
        self.alpha = np.asarray(alpha, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.n = self.alpha.size
        self._eig = None

    def matvec(self, v):
        out = self.alpha * v
        out[:-1] += self.b * v[1:]
        out[1:] += self.b * v[:-1]
        return out

    def solve(self, rhs):
        ab = np.zeros((2, self.n))
        ab[0, 1:] = self.b
        ab[1] = self.alpha
        return sla.solveh_banded(ab, rhs)

    def eigh(self):
        if self._eig is None:
            if self.n == 1:
                self._eig = (self.alpha.copy(), np.ones((1, 1)))
            else:
                self._eig = sla.eigh_tridiagonal(self.alpha, self.b)
        return self._eig

    def eigvalsh(self):
        if self._eig is not None:
            return self._eig[0]
        if self.n == 1:
            return self.alpha.copy()
        return sla.eigh_tridiagonal(self.alpha, self.b, eigvals_only=True)

    def dense(self):
        return np.diag(self.alpha) + np.diag(self.b, 1) + np.diag(self.b, -1)


def as_operator(obj):
    if isinstance(obj, (DenseOperator, TridiagonalOperator)):
        return obj
    if isinstance(obj, DenseWishart):
        return DenseOperator(obj.W)
    if isinstance(obj, BidiagonalChi):
        return TridiagonalOperator(*obj.tridiagonal())
    if isinstance(obj, SymmetricTridiagonal):
        return TridiagonalOperator(obj.alpha, obj.b)
    return DenseOperator(obj)


@dataclass
class CgState:
    k: int
    x: np.ndarray
    r: np.ndarray
    p: np.ndarray
    a: float = float("nan")
    bcoef: float = float("nan")

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.r))


def _matvec_of(op):
    if callable(op):
        return op
    return as_operator(op).matvec


def conjugate_gradient(matvec, b, kmax, eps=None) -> Iterator[CgState]:
    """Yield CG states ``k = 0, 1, ...`` for ``W x = b`` from ``x_0 = 0``.

    Stops after ``kmax`` steps, once ``||r_k|| < eps``, or when the residual
    is exactly zero.  ``a`` and ``bcoef`` on state ``k`` are the coefficients
    ``a_{k-1}`` and ``b_{k-1}`` that produced it; ``bcoef`` carries the
    negative sign convention, so ``p_k = r_k - bcoef * p_{k-1}``.
    """
    matvec = _matvec_of(matvec)
    b = np.asarray(b)
    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rr = float(np.vdot(r, r).real)
    state = CgState(0, x, r, p)
    yield state
    k = 0
    while k < kmax and rr > 0.0 and not (eps is not None and np.sqrt(rr) < eps):
        Wp = matvec(p)
        curv = float(np.vdot(p, Wp).real)
        if not curv > 0.0:
            raise BreakdownError(f"nonpositive curvature p*Wp = {curv:.3e} at step {k + 1}")
        a = rr / float(np.vdot(r, Wp).real)
        x = x + a * p
        r = r - a * Wp
        rr_new = float(np.vdot(r, r).real)
        bcoef = -rr_new / rr
        p = r - bcoef * p
        rr = rr_new
        k += 1
        yield CgState(k, x, r, p, a, bcoef)


def lanczos(matvec, y1, kmax, reorthogonalize=False, breakdown_rtol=1e-12) -> SymmetricTridiagonal:
    """Lanczos tridiagonalization started from the unit vector ``y1``.

    Runs at most ``min(kmax, n)`` steps.  The iteration breaks down when
    ``beta_k`` falls below ``breakdown_rtol`` times a running estimate of
    ``||W||`` (largest Gershgorin radius of the tridiagonal built so far).
    """
    matvec = _matvec_of(matvec)
    y = np.asarray(y1)
    if abs(np.linalg.norm(y) - 1.0) > 1e-12:
        raise ParameterError("starting vector must have unit 2-norm")
    n = y.size
    kmax = min(int(kmax), n)
    alphas, betas = [], []
    basis = [y] if reorthogonalize else None
    y_prev = np.zeros_like(y)
    beta_prev = 0.0
    scale = 0.0
    beta = 0.0
    broke = False
    for k in range(1, kmax + 1):
        v = matvec(y) - beta_prev * y_prev
        alpha = float(np.vdot(y, v).real)
        v = v - alpha * y
        if reorthogonalize:
            Q = np.array(basis)
            v = v - Q.T @ (Q.conj() @ v)
            v = v - Q.T @ (Q.conj() @ v)
        beta = float(np.linalg.norm(v))
        alphas.append(alpha)
        scale = max(scale, abs(alpha) + beta + beta_prev)
        if beta <= breakdown_rtol * scale:
            broke = True
            break
        if k == kmax:
            break
        betas.append(beta)
        y_prev, y = y, v / beta
        beta_prev = beta
        if reorthogonalize:
            basis.append(y)
    return SymmetricTridiagonal(np.array(alphas), np.array(betas), beta_last=beta, breakdown=broke)


def _householder(x):
    """Hermitian reflector ``H = I - 2 u u* / (u* u)`` with ``H x = alpha e_1``."""
    norm = np.linalg.norm(x)
    u = x.copy()
    if norm == 0.0:
        return None, 0.0
    phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
    alpha = -phase * norm
    u[0] -= alpha
    return u, alpha


def householder_bidiagonalize(X) -> BidiagonalChi:
    """Lower bidiagonalize an ``n x m`` matrix (``m >= n``) by two-sided
    Householder reflections, with phases chosen so every entry is real and
    nonnegative.

    The first reflection acts on the right, so the leading diagonal entry is
    the norm of the first row.  Row 0 is never mixed with other rows, which
    preserves the first components of the eigenvectors of ``X X*`` up to
    phase.  Returns a :class:`BidiagonalChi` with ``scale = 1``.
    """
    X = np.asarray(X)
    n, m = X.shape
    if m < n:
        raise ParameterError(f"need m >= n, got shape {X.shape}")
    A = X.astype(complex if np.iscomplexobj(X) else float, copy=True)
    for j in range(n):
        # right reflection: row j, columns j: -> (|row|, 0, ..., 0)
        u, _ = _householder(A[j, j:].conj())
        if u is not None:
            A[:, j:] -= np.outer(A[:, j:] @ u, u.conj()) * (2.0 / np.vdot(u, u).real)
        if A[j, j] != 0:
            A[:, j] *= np.conj(A[j, j]) / abs(A[j, j])
        if j + 1 < n:
            # left reflection: column j, rows j+1: -> (|col|, 0, ..., 0)
            u, _ = _householder(A[j + 1 :, j])
            if u is not None:
                A[j + 1 :, :] -= np.outer(u, u.conj() @ A[j + 1 :, :]) * (2.0 / np.vdot(u, u).real)
            if A[j + 1, j] != 0:
                A[j + 1, :] *= np.conj(A[j + 1, j]) / abs(A[j + 1, j])
    diag = np.abs(np.diagonal(A)[:n]).astype(float)
    sub = np.abs(np.diagonal(A, -1)[: n - 1]).astype(float)
    return BidiagonalChi(diag=diag, subdiag=sub, scale=1.0)


@dataclass
class ErrorTrajectory:
    """``norms[ell][k] = ||e_k||_{W^ell}``; ``residual_norms[k]`` is the CG
    recurrence residual.  ``kmax`` is the last iteration index recorded."""

    ell_list: list
    norms: dict
    residual_norms: np.ndarray
    kmax: int
    condition_number: float | None = field(default=None)


def cg_error_trajectory(W, b, kmax, ell_list: Sequence[int] = (1, 2), d=None,
                        eps=None, residual_floor=RESIDUAL_FLOOR,
                        with_condition=False) -> ErrorTrajectory:
    """Run CG on ``W x = b`` and record ``||e_k||_{W^ell}`` for each ``ell``.

    The exact solution comes from a direct (Cholesky / banded) solve.
    Nonnegative ``ell`` are evaluated with matvecs; any negative ``ell``
    switches to the eigendecomposition of ``W``.  Iteration stops at
    ``kmax``, at ``eps`` if given, or once the residual drops below
    ``residual_floor``.

    Pass ``d`` (the ensemble ratio) to have ``ell < 2`` rejected when ``d = 1``.
    """
    ell_list = [int(l) for l in ell_list]
    if d is not None and d >= 1.0 and any(l < 2 for l in ell_list):
        raise ParameterError("d=1 requires ell>=2 (the limit is undefined for ell<2)")
    op = as_operator(W)
    b = np.asarray(b)
    x_true = op.solve(b)
    stop = residual_floor if eps is None else max(eps, residual_floor or 0.0)
    errors, res = [], []
    for st in conjugate_gradient(op.matvec, b, kmax, eps=stop):
        errors.append(x_true - st.x)
        res.append(st.residual_norm)
    E = np.array(errors)
    norms = {}
    if any(l < 0 for l in ell_list):
        lam, U = op.eigh()
        C = np.abs(E @ U.conj()) ** 2
        for l in ell_list:
            norms[l] = np.sqrt(C @ lam**l)
    else:
        powers = {0: E}
        top = max(ell_list) if ell_list else 0
        for j in range(1, top // 2 + 1):
            powers[j] = np.array([op.matvec(e) for e in powers[j - 1]])
        for l in ell_list:
            half = powers[l // 2]
            if l % 2:
                Wh = np.array([op.matvec(e) for e in half])
                sq = np.einsum("ij,ij->i", half.conj(), Wh).real
            else:
                sq = np.einsum("ij,ij->i", half.conj(), half).real
            norms[l] = np.sqrt(np.maximum(sq, 0.0))
    cond = None
    if with_condition:
        lam = op.eigvalsh()
        cond = float(lam[-1] / lam[0])
    return ErrorTrajectory(ell_list, norms, np.array(res), len(res) - 1, cond)


def halting_time(trajectory: ErrorTrajectory, ell, eps):
    """First ``k`` with the tracked error strictly below ``eps``; ``None`` if
    no recorded iteration qualifies.

    ``ell = 2`` uses the CG recurrence residual (the quantity observed while
    iterating); other ``ell`` use ``norms[ell]``.
    """
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    vals = trajectory.residual_norms if ell == 2 else trajectory.norms[ell]
    hits = np.flatnonzero(np.asarray(vals) < eps)
    return int(hits[0]) if hits.size else None


def cg_polynomial(T: SymmetricTridiagonal, lam):
    """CG residual polynomial ``det(T_k - lam) / det(T_k)`` from the Lanczos
    matrix of the normalized initial residual."""
    lam = np.asarray(lam, dtype=float)
    alpha, b = T.alpha, T.b
    p_prev, p = np.zeros_like(lam), np.ones_like(lam)
    q_prev, q = 0.0, 1.0
    for j in range(alpha.size):
        b2 = b[j - 1] ** 2 if j > 0 else 0.0
        p_prev, p = p, (alpha[j] - lam) * p - b2 * p_prev
        q_prev, q = q, alpha[j] * q - b2 * q_prev
    return p / q


def spectral_error_norm(T: SymmetricTridiagonal, evals, omega, ell) -> float:
    """``sqrt(sum_j lam_j^(ell-2) p_k(lam_j)^2 omega_j)`` with ``p_k`` from
    :func:`cg_polynomial`: the CG error norm written over the spectral
    measure of ``(W, b)``."""
    evals = np.asarray(evals, dtype=float)
    p = cg_polynomial(T, evals)
    return float(np.sqrt(np.sum(evals ** (ell - 2) * p**2 * np.asarray(omega))))
