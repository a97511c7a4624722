"""Eigensolvers, spectral measures and Kolmogorov-Smirnov distances.

Eigenvalues are returned in ascending order everywhere.  Literature that
indexes the spectrum descending (largest first) needs ``[::-1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import ParameterError

_EPS = np.finfo(float).eps


@dataclass
class SpectralMeasure:
    """Atomic probability measure: sorted distinct ``points`` with ``weights``."""

    points: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_atoms(cls, points, weights=None, merge_rtol=1e-12):
        """Build a measure, merging atoms closer than ``merge_rtol`` times the
        spread of the points.  ``weights=None`` gives the uniform (empirical)
        measure."""
        points = np.asarray(points, dtype=float).ravel()
        if points.size == 0:
            raise ParameterError("a measure needs at least one atom")
        if weights is None:
            weights = np.full(points.size, 1.0 / points.size)
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.shape != points.shape:
            raise ParameterError("points and weights differ in length")
        if np.any(weights < 0):
            raise ParameterError("weights must be nonnegative")
        order = np.argsort(points, kind="stable")
        points, weights = points[order], weights[order]
        tol = merge_rtol * (points[-1] - points[0])
        new_atom = np.ones(points.size, dtype=bool)
        new_atom[1:] = np.diff(points) > tol
        starts = np.flatnonzero(new_atom)
        merged_w = np.add.reduceat(weights, starts)
        return cls(points=points[starts], weights=merged_w / merged_w.sum())

    def _cum(self):
        # clamp so rounding in the running sum never exceeds one
        cum = np.minimum(np.concatenate([[0.0], np.cumsum(self.weights)]), 1.0)
        cum[-1] = 1.0
        return cum

    def cdf(self, x):
        """Right-continuous distribution function."""
        cum = self._cum()
        idx = np.searchsorted(self.points, x, side="right")
        return cum[idx]

    def cdf_left(self, x):
        cum = self._cum()
        idx = np.searchsorted(self.points, x, side="left")
        return cum[idx]

    def moment(self, power):
        return float(np.sum(self.weights * self.points**power))


def _tql_first_components(d, e):
    """Implicit-shift QL on a symmetric tridiagonal matrix.

    Returns the eigenvalues (unsorted) and the first row of the orthonormal
    eigenvector matrix.  Only that row of the rotation product is carried,
    which keeps the cost at O(n^2).
    """
    n = len(d)
    e = list(e) + [0.0]
    z = [0.0] * n
    z[0] = 1.0
    for l in range(n):
        iters = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= _EPS * dd:
                    break
                m += 1
            if m == l:
                break
            iters += 1
            if iters > 60:
                raise ArithmeticError("tridiagonal QL failed to converge")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = m - 1
            deflated = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                f = z[i + 1]
                z[i + 1] = s * z[i] + c * f
                z[i] = c * z[i] - s * f
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return d, z


def eigen_tridiagonal(alpha, b=None):
    """Eigenvalues and squared first eigenvector components of a Jacobi matrix.

    Accepts either ``(alpha, b)`` arrays or an object with ``alpha`` and
    ``b`` attributes (e.g. the output of :func:`cgwishart.krylov.lanczos`).

    Returns
    -------
    evals : ndarray, ascending
    first_sq : ndarray
        ``q_{1j}^2`` for the matching eigenvectors; sums to one.
    """
    if b is None:
        alpha, b = alpha.alpha, alpha.b
    alpha = [float(a) for a in np.asarray(alpha).ravel()]
    b = [float(v) for v in np.asarray(b).ravel()]
    if len(b) != max(len(alpha) - 1, 0):
        raise ParameterError("off-diagonal must have length len(alpha) - 1")
    if len(alpha) == 0:
        return np.zeros(0), np.zeros(0)
    evals, z = _tql_first_components(alpha, b)
    evals = np.asarray(evals)
    z = np.asarray(z)
    order = np.argsort(evals, kind="stable")
    return evals[order], z[order] ** 2


def eigen_dense(W, vectors=False, hermitian_tol=1e-12):
    """Spectrum of a Hermitian matrix, ascending; optionally with the unitary
    eigenvector matrix ``U`` such that ``W = U diag(evals) U*``."""
    W = np.asarray(getattr(W, "W", W))
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ParameterError(f"expected a square matrix, got shape {W.shape}")
    scale = max(1.0, float(np.max(np.abs(W)))) if W.size else 1.0
    asym = float(np.max(np.abs(W - W.conj().T))) if W.size else 0.0
    if asym > hermitian_tol * scale:
        raise ParameterError(f"matrix is not Hermitian (asymmetry {asym:.3e})")
    if vectors:
        return np.linalg.eigh(W)
    return np.linalg.eigvalsh(W)


def ks_distance(mu, nu: SpectralMeasure) -> float:
    """Kolmogorov-Smirnov distance ``sup_x |F_mu(x) - F_nu(x)|``.

    ``mu`` may be a :class:`SpectralMeasure` or a continuous CDF callable
    (vectorized).  The supremum is evaluated exactly: both one-sided limits
    are taken at every atom.
    """
    if isinstance(mu, SpectralMeasure):
        x = np.union1d(mu.points, nu.points)
        right = np.abs(mu.cdf(x) - nu.cdf(x))
        left = np.abs(mu.cdf_left(x) - nu.cdf_left(x))
        return float(max(right.max(), left.max()))
    F: Callable = mu
    x = nu.points
    Fx = np.asarray(F(x), dtype=float)
    return float(max(np.max(np.abs(Fx - nu.cdf(x))), np.max(np.abs(Fx - nu.cdf_left(x)))))
