import math

import numpy as np
import pytest
from scipy.special import gammaln

from cgwishart import ParameterError
from cgwishart.ensembles import (
    EnsembleSpec,
    Kind,
    sample_bidiagonal_chi,
    sample_chi,
    sample_dense_wishart,
    sample_rhs,
    sample_rng,
    sample_spectral_weights,
)
from cgwishart.krylov import TridiagonalOperator, lanczos
from cgwishart.spectral import SpectralMeasure, ks_distance


def chi_mean(df):
    return math.sqrt(2) * math.exp(gammaln((df + 1) / 2) - gammaln(df / 2))


class TestSpec:
    def test_m(self):
        assert EnsembleSpec(200, 0.2).m == 1000
        assert EnsembleSpec(3, 0.3).m == 10
        assert EnsembleSpec(7, 0.5).m == 14
        assert EnsembleSpec(10, 0.3).m == 33

    @pytest.mark.parametrize("kwargs", [
        dict(n=0, d=0.5), dict(n=5, d=0.0), dict(n=5, d=1.2), dict(n=5, d=0.5, beta=4),
        dict(n=5, d=0.5, seed=-1), dict(n=5, d=0.5, kind="bernoulli", beta=2),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ParameterError):
            EnsembleSpec(**kwargs)

    def test_kind_from_string(self):
        assert EnsembleSpec(4, 0.5, kind="chi").kind is Kind.CHI_BIDIAGONAL


class TestChi:
    def test_mean_df2(self):
        rng = np.random.default_rng(11)
        x = sample_chi(2.0, rng, size=10**6)
        se = x.std() / math.sqrt(x.size)
        assert chi_mean(2.0) == pytest.approx(math.sqrt(math.pi / 2), rel=1e-14)
        assert abs(x.mean() - math.sqrt(math.pi / 2)) < 3 * se

    @pytest.mark.parametrize("df", [0.7, 3.5, 40.0])
    def test_second_moment(self, df):
        rng = np.random.default_rng(12)
        x2 = sample_chi(df, rng, size=200_000) ** 2
        assert abs(x2.mean() - df) < 3 * x2.std() / math.sqrt(x2.size)

    @pytest.mark.parametrize("df", [1.0, 5.0, 17.5])
    def test_mean_general(self, df):
        x = sample_chi(df, np.random.default_rng(13), size=200_000)
        assert abs(x.mean() - chi_mean(df)) < 3 * x.std() / math.sqrt(x.size)

    def test_concentration(self):
        x = sample_chi(1e6, np.random.default_rng(14), size=10_000) / 1e3
        assert np.mean(np.abs(x - 1) < 0.01) >= 0.99

    def test_scalar(self):
        v = sample_chi(3, np.random.default_rng(0))
        assert isinstance(v, float) and v >= 0

    @pytest.mark.parametrize("df", [0.0, -1.0, float("nan")])
    def test_bad_df(self, df):
        with pytest.raises(ParameterError):
            sample_chi(df, np.random.default_rng(0))


class TestDense:
    def test_one_by_one(self):
        spec = EnsembleSpec(1, 1.0)
        s = sample_dense_wishart(spec, spec.rng(0))
        assert s.X.shape == (1, 1)
        assert s.W[0, 0] == s.X[0, 0] ** 2

    def test_trace_mean(self):
        spec = EnsembleSpec(50, 0.5, seed=3)
        t = np.array([np.trace(sample_dense_wishart(spec, spec.rng(i)).W).real / 50 for i in range(10_000)])
        assert abs(t.mean() - 1) < 3 * t.std() / math.sqrt(t.size)

    def test_eigenvalue_bounds(self):
        spec = EnsembleSpec(400, 0.2, seed=4)
        lo, hi = (1 - math.sqrt(0.2)) ** 2 - 0.2, (1 + math.sqrt(0.2)) ** 2 + 0.2
        inside = []
        for i in range(100):
            lam = np.linalg.eigvalsh(sample_dense_wishart(spec, spec.rng(i)).W)
            inside.append(lam[0] >= lo and lam[-1] <= hi)
        assert np.mean(inside) >= 0.99

    @pytest.mark.parametrize("beta,kind", [(1, "gaussian"), (2, "gaussian"), (1, "bernoulli")])
    def test_symmetric_and_pd(self, beta, kind):
        spec = EnsembleSpec(30, 0.6, beta=beta, kind=kind, seed=5)
        for i in range(20):
            W = sample_dense_wishart(spec, spec.rng(i)).W
            assert np.array_equal(W, W.conj().T)
            assert np.linalg.eigvalsh(W)[0] > 0

    def test_complex_storage(self):
        spec = EnsembleSpec(8, 0.5, beta=2)
        s = sample_dense_wishart(spec, spec.rng(0))
        assert np.iscomplexobj(s.W) and np.iscomplexobj(s.X)
        assert np.all(s.W.diagonal().imag == 0)
        assert np.trace(s.W).real == pytest.approx(np.sum(np.abs(s.X) ** 2) / (2 * spec.m))

    def test_bernoulli_entries(self):
        spec = EnsembleSpec(10, 0.5, kind="bernoulli")
        s = sample_dense_wishart(spec, spec.rng(0))
        assert set(np.unique(s.X)) <= {-1.0, 1.0}
        assert np.allclose(np.diag(s.W), 1.0)

    def test_rejects_chi_kind(self):
        spec = EnsembleSpec(10, 0.5, kind="chi")
        with pytest.raises(ParameterError):
            sample_dense_wishart(spec, spec.rng(0))

    def test_reproducible(self):
        spec = EnsembleSpec(40, 0.4, beta=2, seed=99)
        a = sample_dense_wishart(spec, spec.rng(7)).W
        b = sample_dense_wishart(spec, sample_rng(99, 7)).W
        c = sample_dense_wishart(spec, spec.rng(8)).W
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)


class TestBidiagonal:
    def test_n1(self):
        spec = EnsembleSpec(1, 0.5, kind="chi")
        B = sample_bidiagonal_chi(spec, spec.rng(0))
        assert B.diag.shape == (1,) and B.subdiag.shape == (0,)
        assert B.scale == 2.0

    def test_shape_and_positivity(self):
        spec = EnsembleSpec(30, 0.3, beta=2, kind="chi")
        B = sample_bidiagonal_chi(spec, spec.rng(0))
        assert B.diag.shape == (30,) and B.subdiag.shape == (29,)
        assert np.all(B.diag > 0) and np.all(B.subdiag > 0)
        a, b = B.tridiagonal()
        assert np.allclose(B.dense(), np.diag(a) + np.diag(b, 1) + np.diag(b, -1), atol=1e-14)
        assert np.all(b > 0)

    def test_leading_entry_mean(self):
        spec = EnsembleSpec(20, 0.25, kind="chi", seed=1)
        v = np.array([sample_bidiagonal_chi(spec, spec.rng(i)).diag[0] ** 2 / spec.m for i in range(10_000)])
        assert abs(v.mean() - 1) < 3 * v.std() / math.sqrt(v.size)

    def test_rejects_dense_kind(self):
        spec = EnsembleSpec(10, 0.5)
        with pytest.raises(ParameterError):
            sample_bidiagonal_chi(spec, spec.rng(0))

    def test_spectrum_matches_dense(self):
        dense = EnsembleSpec(100, 0.25, seed=21)
        chi = EnsembleSpec(100, 0.25, kind="chi", seed=22)
        a = np.concatenate([np.linalg.eigvalsh(sample_dense_wishart(dense, dense.rng(i)).W) for i in range(100)])
        b = np.concatenate([TridiagonalOperator(*sample_bidiagonal_chi(chi, chi.rng(i)).tridiagonal()).eigvalsh()
                            for i in range(100)])
        assert ks_distance(SpectralMeasure.from_atoms(a, merge_rtol=0), SpectralMeasure.from_atoms(b, merge_rtol=0)) < 0.05


class TestWeights:
    def test_n1(self):
        assert np.array_equal(sample_spectral_weights(1, 1, np.random.default_rng(0)), [1.0])

    @pytest.mark.parametrize("beta", [1, 2])
    def test_normalized(self, beta):
        rng = np.random.default_rng(1)
        for n in (2, 17, 500):
            w = sample_spectral_weights(n, beta, rng)
            assert np.all(w >= 0)
            assert abs(w.sum() - 1) < 1e-14

    def test_exchangeable_mean(self):
        rng = np.random.default_rng(2)
        w1 = np.array([sample_spectral_weights(1000, 1, rng)[0] for _ in range(10_000)])
        assert abs(w1.mean() - 0.001) < 3 * w1.std() / math.sqrt(w1.size)

    def test_bad_n(self):
        with pytest.raises(ParameterError):
            sample_spectral_weights(0, 1, np.random.default_rng(0))


class TestRhs:
    def test_e1(self):
        assert np.array_equal(sample_rhs(4, "e1", None), [1, 0, 0, 0])

    def test_random_unit(self):
        b = sample_rhs(50, "random", np.random.default_rng(0))
        assert np.linalg.norm(b) == pytest.approx(1.0, abs=1e-15)

    def test_unknown(self):
        with pytest.raises(ParameterError):
            sample_rhs(4, "ones", None)


def _chi_model_moments(n, m, beta, k):
    """Mean and variance of the leading Lanczos coefficients implied by the
    independent-chi bidiagonal model."""
    s = beta * m
    am, av, bm, bv = [], [], [], []
    for j in range(k):
        dfs = [beta * (m - j)] + ([beta * (n - j)] if j > 0 else [])
        am.append(sum(dfs) / s)
        av.append(sum(2 * f for f in dfs) / s**2)
        p, q = beta * (m - j), beta * (n - 1 - j)
        mean = chi_mean(p) * chi_mean(q) / s
        bm.append(mean)
        bv.append(p * q / s**2 - mean**2)
    return np.array(am), np.array(av), np.array(bm[: k - 1]), np.array(bv[: k - 1])


@pytest.mark.parametrize("beta", [1, 2])
def test_lanczos_on_dense_matches_chi_model(beta):
    n, d, k, N = 50, 0.5, 5, 10_000
    spec = EnsembleSpec(n, d, beta=beta, seed=31)
    e1 = np.zeros(n, dtype=complex if beta == 2 else float)
    e1[0] = 1
    A, B = np.empty((N, k)), np.empty((N, k - 1))
    for i in range(N):
        W = sample_dense_wishart(spec, spec.rng(i)).W
        T = lanczos(W.__matmul__, e1, k)
        A[i], B[i] = T.alpha, T.b
    am, av, bm, bv = _chi_model_moments(n, spec.m, beta, k)
    assert np.all(np.abs(A.mean(0) - am) < 4 * np.sqrt(av / N))
    assert np.all(np.abs(B.mean(0) - bm) < 4 * np.sqrt(bv / N))
    # variance: standard error of a sample variance ~ var * sqrt(2 / N) for near-normal entries
    assert np.all(np.abs(A.var(0, ddof=1) - av) < 4 * av * math.sqrt(3 / N))
    assert np.all(np.abs(B.var(0, ddof=1) - bv) < 4 * bv * math.sqrt(3 / N))
