"""Random matrix ensembles and the scalar variates they are built from.

Every sampler takes an explicit ``numpy.random.Generator``.  Use
:func:`sample_rng` to get the generator for sample ``i`` of a run so that a
sample is a pure function of ``(seed, i)`` no matter how work is split
across processes.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import ParameterError


class Kind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    BERNOULLI = "bernoulli"
    CHI_BIDIAGONAL = "chi"


@dataclass(frozen=True)
class EnsembleSpec:
    """Parameters of one random linear-system distribution.

    ``m = floor(n / d)`` columns are used for the factor ``X``.
    """

    n: int
    d: float
    beta: int = 1
    kind: Kind = Kind.GAUSSIAN
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"n must be a positive integer, got {self.n}")
        if not (0.0 < self.d <= 1.0):
            raise ParameterError(f"d must lie in (0, 1], got {self.d}")
        if self.beta not in (1, 2):
            raise ParameterError(f"beta must be 1 or 2, got {self.beta}")
        if self.kind is Kind.BERNOULLI and self.beta != 1:
            raise ParameterError("the Bernoulli ensemble is real: beta must be 1")
        if not (0 <= int(self.seed) < 2**64):
            raise ParameterError("seed must be a 64-bit unsigned integer")
        if self.m < self.n:
            raise ParameterError(f"m = floor(n/d) = {self.m} < n = {self.n}")

    @property
    def m(self) -> int:
        # n/d can land a hair below an integer (e.g. 3/0.3); snap before flooring
        q = self.n / self.d
        r = round(q)
        return int(r) if abs(q - r) <= 1e-9 * q else math.floor(q)

    def rng(self, index: int = 0) -> np.random.Generator:
        return sample_rng(self.seed, index)


@dataclass
class DenseWishart:
    W: np.ndarray
    X: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.W.shape[0]


@dataclass
class BidiagonalChi:
    """Lower bidiagonal factor ``H`` with ``diag`` on the diagonal and
    ``subdiag`` below it; the matrix of interest is ``H H* / scale``."""

    diag: np.ndarray
    subdiag: np.ndarray
    scale: float

    @property
    def n(self) -> int:
        return self.diag.size

    def tridiagonal(self):
        """Diagonal and off-diagonal of ``H H* / scale``."""
        a = self.diag**2
        a[1:] += self.subdiag**2
        b = self.diag[:-1] * self.subdiag
        return a / self.scale, b / self.scale

    def dense(self) -> np.ndarray:
        H = np.diag(self.diag) + np.diag(self.subdiag, -1)
        return H @ H.T / self.scale


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent PCG64 stream for sample ``index`` of master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(ss))


def sample_chi(df, rng: np.random.Generator, size=None):
    """Chi variate(s) with ``df`` degrees of freedom.

    Drawn as ``sqrt(2 * Gamma(df / 2))``; numpy's gamma sampler is the
    Marsaglia-Tsang squeeze method, so non-integer ``df`` is fine.
    """
    df_arr = np.asarray(df, dtype=float)
    if np.any(~(df_arr > 0)):
        raise ParameterError(f"chi degrees of freedom must be positive, got {df}")
    if size is None and df_arr.ndim == 0:
        return float(np.sqrt(2.0 * rng.standard_gamma(0.5 * float(df_arr))))
    return np.sqrt(2.0 * rng.standard_gamma(0.5 * df_arr, size=size))


def sample_dense_wishart(spec: EnsembleSpec, rng: np.random.Generator) -> DenseWishart:
    n, m, beta = spec.n, spec.m, spec.beta
    if spec.kind is Kind.GAUSSIAN:
        if beta == 1:
            X = rng.standard_normal((n, m))
        else:
            X = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
        W = X @ X.conj().T / (beta * m)
    elif spec.kind is Kind.BERNOULLI:
        X = rng.integers(0, 2, size=(n, m)).astype(float) * 2.0 - 1.0
        W = X @ X.T / m
    else:
        raise ParameterError(f"dense sampling is not defined for kind {spec.kind.value!r}")
    # BLAS may leave the two triangles differing in the last bit
    W = np.triu(W) + np.triu(W, 1).conj().T
    if beta == 2:
        W[np.diag_indices(n)] = W.diagonal().real
    return DenseWishart(W=W, X=X)


def sample_bidiagonal_chi(spec: EnsembleSpec, rng: np.random.Generator) -> BidiagonalChi:
    if spec.kind is not Kind.CHI_BIDIAGONAL:
        raise ParameterError(f"expected kind 'chi', got {spec.kind.value!r}")
    n, m, beta = spec.n, spec.m, spec.beta
    diag = sample_chi(beta * (m - np.arange(n)), rng)
    if n > 1:
        subdiag = sample_chi(beta * (n - 1 - np.arange(n - 1)), rng)
    else:
        subdiag = np.zeros(0)
    return BidiagonalChi(diag=np.atleast_1d(diag), subdiag=subdiag, scale=float(beta * m))


def sample_spectral_weights(n: int, beta: int, rng: np.random.Generator) -> np.ndarray:
    """Normalized iid chi-squared(beta) weights, the law of the squared first
    eigenvector components of an invariant ensemble."""
    if n < 1:
        raise ParameterError("n must be positive")
    nu = 2.0 * rng.standard_gamma(0.5 * beta, size=n)
    return nu / nu.sum()


def sample_rhs(n: int, rhs: str, rng: np.random.Generator) -> np.ndarray:
    """Unit right-hand side: ``"e1"`` or a Haar-uniform ``"random"`` vector."""
    if rhs == "e1":
        b = np.zeros(n)
        b[0] = 1.0
        return b
    if rhs == "random":
        g = rng.standard_normal(n)
        return g / np.linalg.norm(g)
    raise ParameterError(f"unknown right-hand side {rhs!r}")
