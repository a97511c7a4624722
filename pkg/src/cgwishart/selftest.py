"""Fast invariant checks run by ``cg-wishart selftest``."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate
import scipy.linalg as sla

from . import krylov, spectral, theory
from .ensembles import EnsembleSpec, Kind, sample_bidiagonal_chi, sample_dense_wishart, sample_rng


def _closed_form_vs_quadrature():
    worst = 0.0
    for d in (0.1, 0.3, 0.5, 0.7, 0.9):
        for ell in (1, 2, 3):
            for k in range(11):
                a = theory.limit_error(ell, k, d)
                b = theory.limit_error_quadrature(ell, k, d)
                worst = max(worst, abs(a - b) / max(1.0, a) if a > 1 else abs(a / b - 1))
    return worst < 1e-10


def _char_poly_vs_determinant():
    rng = np.random.default_rng(1)
    for k in range(1, 13):
        d = rng.uniform(0.05, 0.95)
        lam = rng.uniform(0, 4)
        ref = np.linalg.det(theory.LimitJacobi(k, d).dense() - lam * np.eye(k))
        if abs(theory.limit_char_poly(k, d, lam) - ref) > 1e-9 * max(1.0, abs(ref)):
            return False
    return True


def _determinant_recurrence():
    rng = np.random.default_rng(2)
    d = 0.37
    s = math.sqrt(d)
    for x in rng.uniform(-1.5, 1.5, 5):
        # det D_k(x) = det(T_k - lam I) / d^{k/2} with lam = 1 + d - 2 x sqrt(d)
        lam = 1 + d - 2 * x * s
        D = [theory.limit_char_poly(k, d, lam) / d ** (k / 2) for k in range(32)]
        if abs(D[1] - (2 * x - s)) > 1e-12:
            return False
        for k in range(1, 31):
            if abs(D[k + 1] + D[k - 1] - 2 * x * D[k]) > 1e-10 * max(1.0, abs(D[k + 1])):
                return False
    return True


def _chebyshev_trig():
    th = np.linspace(0.1, 3.0, 17)
    return all(
        np.allclose(theory.chebyshev_u(k, np.cos(th)), np.sin((k + 1) * th) / np.sin(th), rtol=0, atol=1e-10)
        for k in range(51)
    )


def _mp_normalized():
    for d in (0.2, 0.5, 1.0):
        law = theory.MpLaw(d)
        tot = integrate.quad(law.density, law.d_minus, law.d_plus, limit=200, epsabs=1e-13)[0]
        if abs(tot - 1) > 1e-8:
            return False
    return True


def _mp_cdf_vs_quadrature():
    d = 0.4
    law = theory.MpLaw(d)
    for x in (0.2, 0.8, 1.3, 2.0):
        ref = integrate.quad(law.density, law.d_minus, x, limit=200)[0]
        if abs(law.cdf(x) - ref) > 1e-9:
            return False
    return True


def _negative_moment():
    return all(abs(theory.mp_moment(-1, d) - 1 / (1 - d)) < 1e-10 for d in (0.2, 0.5, 0.8))


def _halting_prediction():
    return (theory.predict_halting(2, 6.627e-8, 0.2) == 21
            and theory.predict_halting(1, 0.9, 0.5) == 2
            and theory.predict_halting(2, 0.9, 0.5) == 1)


def _classical_bound():
    return (abs(theory.classical_cg_bound(9.0, 1) - 0.8) < 1e-15
            and theory.classical_cg_bound(1.0, 3) == 0.0
            and theory.classical_cg_bound(5.0, 0) == 1.0)


def _cg_identity():
    b = np.array([0.3, -1.0, 2.0])
    states = list(krylov.conjugate_gradient(lambda v: v, b, 5))
    return len(states) == 2 and np.allclose(states[1].x, b) and np.linalg.norm(states[1].r) == 0.0


def _cg_two_eigenvalues():
    W = np.diag([1.0, 2.0])
    b = np.array([1.0, 1.0]) / math.sqrt(2)
    states = list(krylov.conjugate_gradient(lambda v: W @ v, b, 2))
    return np.linalg.norm(states[2].r) < 1e-15 and np.allclose(states[2].x, [1 / math.sqrt(2), 0.5 / math.sqrt(2)])


def _lanczos_small():
    T = krylov.lanczos(lambda v: np.array([[2.0, 1.0], [1.0, 2.0]]) @ v, np.array([1.0, 0.0]), 2)
    return np.allclose(T.alpha, [2, 2], atol=1e-15) and np.allclose(T.b, [1], atol=1e-15)


def _lanczos_on_chi_model():
    spec = EnsembleSpec(60, 0.25, kind=Kind.CHI_BIDIAGONAL, seed=3)
    B = sample_bidiagonal_chi(spec, sample_rng(spec.seed, 0))
    a, off = B.tridiagonal()
    e1 = np.zeros(60)
    e1[0] = 1
    T = krylov.lanczos(krylov.TridiagonalOperator(a, off).matvec, e1, 60)
    return np.allclose(T.alpha, a, rtol=0, atol=1e-10) and np.allclose(T.b, off, rtol=0, atol=1e-10)


def _householder_spectrum():
    X = np.random.default_rng(4).standard_normal((20, 40))
    B = krylov.householder_bidiagonalize(X)
    H = np.diag(B.diag) + np.diag(B.subdiag, -1)
    return np.allclose(np.linalg.eigvalsh(H @ H.T), np.linalg.eigvalsh(X @ X.T), rtol=1e-9, atol=0)


def _tridiagonal_eigensolver():
    rng = np.random.default_rng(5)
    a, b = rng.normal(size=40), rng.uniform(0.1, 1, 39)
    ev, q = spectral.eigen_tridiagonal(a, b)
    ref, V = sla.eigh_tridiagonal(a, b)
    return np.allclose(ev, ref, atol=1e-12) and np.allclose(q, V[0] ** 2, atol=1e-12)


def _ks_basics():
    m0 = spectral.SpectralMeasure.from_atoms([0.0])
    m1 = spectral.SpectralMeasure.from_atoms([1.0])
    return spectral.ks_distance(m0, m1) == 1.0 and spectral.ks_distance(m0, m0) == 0.0


def _spectral_error_identity():
    spec = EnsembleSpec(60, 0.3, seed=6)
    W = sample_dense_wishart(spec, sample_rng(spec.seed, 0)).W
    b = np.zeros(60)
    b[0] = 1
    traj = krylov.cg_error_trajectory(W, b, 8, [1, 2, 3])
    lam, U = np.linalg.eigh(W)
    omega = np.abs(U[0]) ** 2
    T = krylov.lanczos(lambda v: W @ v, b, 8)
    for ell in (1, 2, 3):
        val = krylov.spectral_error_norm(T, lam, omega, ell)
        if abs(val / traj.norms[ell][8] - 1) > 1e-6:
            return False
    return True


CHECKS = [
    ("closed_form_vs_quadrature", _closed_form_vs_quadrature),
    ("char_poly_vs_determinant", _char_poly_vs_determinant),
    ("determinant_recurrence", _determinant_recurrence),
    ("chebyshev_trig_identity", _chebyshev_trig),
    ("mp_density_normalized", _mp_normalized),
    ("mp_cdf_vs_quadrature", _mp_cdf_vs_quadrature),
    ("mp_negative_moment", _negative_moment),
    ("halting_prediction", _halting_prediction),
    ("classical_bound", _classical_bound),
    ("cg_identity_matrix", _cg_identity),
    ("cg_finite_termination", _cg_two_eigenvalues),
    ("lanczos_2x2", _lanczos_small),
    ("lanczos_reproduces_chi_model", _lanczos_on_chi_model),
    ("householder_bidiagonal_spectrum", _householder_spectrum),
    ("tridiagonal_eigensolver", _tridiagonal_eigensolver),
    ("ks_distance_basics", _ks_basics),
    ("spectral_error_identity", _spectral_error_identity),
]


def run_selftest(out=print):
    """Run every check; returns the list of failing check names."""
    failures = []
    for name, fn in CHECKS:
        try:
            ok = bool(fn())
        except Exception as exc:  # a crashing check is a failing check
            ok = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        out(f"{'PASS' if ok else 'FAIL'}  {name}")
        if not ok:
            failures.append(name)
    return failures
