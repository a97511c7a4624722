"""Fix the pooled-spectrum KS threshold used by the bidiagonal/dense check.

Null distribution: KS distance between the pooled spectra of two independent
groups of 100 dense Gaussian Wishart samples (n=100, d=0.25, beta=1).  Both
groups come from the same law, so this is the spread the chi-bidiagonal vs
dense comparison should show if the two constructions agree.  The threshold
is the largest null distance over the replicates.  Reference seeds are
disjoint from the ones the tests use.

    python scripts/preregister_ks.py  # rewrites tests/fixtures/ks_threshold.json
"""

import json
from pathlib import Path

import numpy as np

from cgwishart.ensembles import EnsembleSpec, sample_dense_wishart, sample_rng
from cgwishart.spectral import SpectralMeasure, ks_distance

N, D, GROUP, REPLICATES, SEED = 100, 0.25, 100, 40, 90210


def pooled(seed):
    spec = EnsembleSpec(N, D, seed=seed)
    lam = [np.linalg.eigvalsh(sample_dense_wishart(spec, sample_rng(seed, i)).W) for i in range(GROUP)]
    return SpectralMeasure.from_atoms(np.concatenate(lam), merge_rtol=0.0)


def main():
    null = [ks_distance(pooled(SEED + 2 * r), pooled(SEED + 2 * r + 1)) for r in range(REPLICATES)]
    out = {
        "n": N, "d": D, "beta": 1, "group_size": GROUP, "replicates": REPLICATES, "reference_seed": SEED,
        "null_distances": null,
        "null_median": float(np.median(null)),
        "threshold": float(np.max(null)),
    }
    path = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "ks_threshold.json"
    path.write_text(json.dumps(out, indent=1) + "\n")
    print(f"median {out['null_median']:.4f}  threshold {out['threshold']:.4f} -> {path}")


if __name__ == "__main__":
    main()
