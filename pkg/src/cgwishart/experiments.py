"""Monte Carlo experiments on random Wishart linear systems.

Each experiment maps a sample index ``i`` to a per-sample record using the
random stream ``sample_rng(seed, i)``, so results do not depend on how the
index range is split across worker processes.  :func:`aggregate` merges
per-worker partials by sample index before any statistic is computed.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import json
import math
import os
import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from . import BreakdownError, ParameterError, __version__
from . import theory
from .ensembles import (
    EnsembleSpec,
    Kind,
    sample_bidiagonal_chi,
    sample_dense_wishart,
    sample_rhs,
    sample_rng,
    sample_spectral_weights,
)
from .krylov import (
    DenseOperator,
    ErrorTrajectory,
    TridiagonalOperator,
    cg_error_trajectory,
    conjugate_gradient,
    halting_time,
)
from .spectral import SpectralMeasure, ks_distance

EXPERIMENTS = ("errors", "halting", "clt", "spectrum", "ks")

# symmetric 99.9% band
BAND = (0.0005, 0.9995)

# relative slack for checks that hold exactly in exact arithmetic
_ROUNDOFF = 1e-10


class AggregationError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    ensemble: EnsembleSpec
    samples: int = 2000
    kmax: int = 10
    ell_list: tuple = (1, 2)
    eps_list: tuple = ()
    rhs: str = "auto"
    output_path: str | None = None
    workers: int = 1

    def __post_init__(self):
        self.ell_list = tuple(int(l) for l in self.ell_list)
        self.eps_list = tuple(float(e) for e in self.eps_list)
        if self.samples < 1:
            raise ParameterError("samples must be >= 1")
        if self.kmax < 1:
            raise ParameterError("kmax must be >= 1")
        if any(not e > 0 for e in self.eps_list):
            raise ParameterError("eps values must be positive")
        if self.workers < 0:
            raise ParameterError("workers must be >= 0")
        if self.rhs == "auto":
            self.rhs = "random" if self.ensemble.kind is Kind.BERNOULLI else "e1"
        if self.rhs not in ("e1", "random"):
            raise ParameterError(f"rhs must be 'e1' or 'random', got {self.rhs!r}")

    def to_dict(self) -> dict:
        ens = self.ensemble
        return {
            "n": ens.n, "d": ens.d, "m": ens.m, "beta": ens.beta, "ensemble": ens.kind.value,
            "seed": ens.seed, "samples": self.samples, "kmax": self.kmax,
            "ell_list": list(self.ell_list), "eps_list": list(self.eps_list), "rhs": self.rhs,
        }

    def key(self) -> tuple:
        """Identity of the sample-generating process (ignores sample count and
        execution settings)."""
        d = self.to_dict()
        d.pop("samples")
        return tuple(sorted((k, tuple(v) if isinstance(v, list) else v) for k, v in d.items()))


@dataclass
class Partial:
    experiment: str
    config: ExperimentConfig
    records: dict


@dataclass
class MonteCarloSummary:
    experiment: str
    config: dict
    stats: dict = field(default_factory=dict)
    theory: dict = field(default_factory=dict)
    halting_histograms: list = field(default_factory=list)
    fluctuation_samples: dict = field(default_factory=dict)
    ks_samples: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    # per-sample arrays in index order; in memory only
    raw: dict = field(default_factory=dict, repr=False)

    def to_dict(self, include_timing=False) -> dict:
        meta = dict(self.metadata)
        if not include_timing:
            meta.pop("wall_time", None)
        return {
            "experiment": self.experiment,
            "version": __version__,
            "config": self.config,
            "stats": self.stats,
            "theory": self.theory,
            "halting_histograms": self.halting_histograms,
            "fluctuation_samples": {str(k): v for k, v in self.fluctuation_samples.items()},
            "ks_samples": self.ks_samples,
            "extra": self.extra,
            "metadata": meta,
        }


# ---------------------------------------------------------------- sampling


def draw_system(cfg: ExperimentConfig, index: int):
    """Operator and unit right-hand side for sample ``index``."""
    spec = cfg.ensemble
    rng = sample_rng(spec.seed, index)
    if spec.kind is Kind.CHI_BIDIAGONAL:
        op = TridiagonalOperator(*sample_bidiagonal_chi(spec, rng).tridiagonal())
    else:
        op = DenseOperator(sample_dense_wishart(spec, rng).W)
    b = sample_rhs(spec.n, cfg.rhs, rng)
    if spec.beta == 2 and spec.kind is Kind.GAUSSIAN:
        b = b.astype(complex)
    return op, b, rng


def _padded(values, length):
    out = np.full(length, np.nan)
    vals = np.asarray(values, dtype=float)[:length]
    out[: vals.size] = vals
    return out


def _record_errors(cfg, i):
    op, b, _ = draw_system(cfg, i)
    ells = sorted(set(cfg.ell_list) | {1, 2}) if cfg.ensemble.d < 1 else sorted(set(cfg.ell_list) | {2})
    traj = cg_error_trajectory(op, b, cfg.kmax, ells, d=cfg.ensemble.d, with_condition=True)
    L = cfg.kmax + 1
    norms = {l: _padded(traj.norms[l], L) for l in ells}
    rec = {"norms": norms, "residual": _padded(traj.residual_norms, L), "kappa": traj.condition_number}
    eW = traj.norms.get(1)
    if eW is not None:
        bound = np.array([theory.classical_cg_bound(traj.condition_number, k) for k in range(eW.size)])
        rec["bound_violations"] = int(np.sum(eW > bound * eW[0] * (1 + _ROUNDOFF)))
        rec["monotone_violations"] = int(np.sum(np.diff(eW) > _ROUNDOFF * eW[:-1]))
    return rec


def _record_halting(cfg, i):
    op, b, _ = draw_system(cfg, i)
    ells = [l for l in cfg.ell_list if l in (1, 2)]
    if 1 in ells:
        traj = cg_error_trajectory(op, b, cfg.kmax, [1, 2], d=cfg.ensemble.d)
    else:
        stop = min(cfg.eps_list)
        res = [st.residual_norm for st in conjugate_gradient(op.matvec, b, cfg.kmax, eps=stop)]
        traj = ErrorTrajectory([2], {}, np.array(res), len(res) - 1)
    times = {}
    for l in ells:
        for e in cfg.eps_list:
            t = halting_time(traj, l, e)
            times[(l, e)] = -1 if t is None else t
    return {"times": times}


def _record_clt(cfg, i):
    op, b, _ = draw_system(cfg, i)
    res = [st.residual_norm for st in conjugate_gradient(op.matvec, b, cfg.kmax)]
    r = _padded(res, cfg.kmax + 1)
    d = cfg.ensemble.d
    return {"g": r**2 - d ** np.arange(cfg.kmax + 1)}


def _record_spectrum(cfg, i):
    op, _, _ = draw_system(cfg, i)
    lam = op.eigvalsh()
    esm = SpectralMeasure.from_atoms(lam)
    return {"eigenvalues": lam, "ks": ks_distance(lambda x: theory.mp_cdf(x, cfg.ensemble.d), esm)}


def _record_weighted_ks(cfg, i):
    op, _, rng = draw_system(cfg, i)
    lam = op.eigvalsh()
    omega = sample_spectral_weights(lam.size, cfg.ensemble.beta, rng)
    mu = SpectralMeasure.from_atoms(lam)
    nu = SpectralMeasure.from_atoms(lam, omega)
    return {"ks": ks_distance(mu, nu)}


_RECORDERS = {
    "errors": _record_errors,
    "halting": _record_halting,
    "clt": _record_clt,
    "spectrum": _record_spectrum,
    "ks": _record_weighted_ks,
}


def run_chunk(experiment: str, cfg: ExperimentConfig, start: int, stop: int) -> Partial:
    """Per-sample records for indices ``start <= i < stop``."""
    rec_fn = _RECORDERS[experiment]
    records = {}
    for i in range(start, stop):
        try:
            records[i] = rec_fn(cfg, i)
        except BreakdownError as exc:
            raise BreakdownError(f"sample {i}: {exc}", sample_index=i) from exc
        except (np.linalg.LinAlgError, ArithmeticError) as exc:
            raise BreakdownError(f"sample {i}: {exc}", sample_index=i) from exc
    return Partial(experiment, cfg, records)


def resolve_workers(workers: int) -> int:
    if workers == 0:
        env = os.environ.get("CG_WISHART_WORKERS")
        return int(env) if env else (os.cpu_count() or 1)
    return workers


def _validate(experiment, cfg):
    if experiment not in _RECORDERS:
        raise ParameterError(f"unknown experiment {experiment!r}")
    d = cfg.ensemble.d
    if experiment == "errors" and d >= 1.0 and any(l < 2 for l in cfg.ell_list):
        raise ParameterError("d=1 requires ell>=2 (the limit is undefined for ell<2)")
    if experiment == "halting":
        if not cfg.eps_list:
            raise ParameterError("halting needs at least one eps")
        ells = [l for l in cfg.ell_list if l in (1, 2)]
        if not ells:
            raise ParameterError("halting needs ell 1 and/or 2")
        for l in ells:
            for e in cfg.eps_list:
                theory.predict_halting(l, e, d)


def run_experiment(experiment: str, cfg: ExperimentConfig) -> MonteCarloSummary:
    _validate(experiment, cfg)
    t0 = time.perf_counter()
    workers = min(resolve_workers(cfg.workers), cfg.samples)
    if workers <= 1:
        partials = [run_chunk(experiment, cfg, 0, cfg.samples)]
    else:
        edges = np.linspace(0, cfg.samples, workers + 1).astype(int)
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futs = [pool.submit(run_chunk, experiment, cfg, int(a), int(z))
                    for a, z in zip(edges[:-1], edges[1:]) if z > a]
            partials = [f.result() for f in futs]
    summary = aggregate(partials)
    summary.metadata["wall_time"] = time.perf_counter() - t0
    return summary


def aggregate(partials) -> MonteCarloSummary:
    """Merge per-worker partials into one summary.

    Records are reordered by sample index before any statistic is taken, so
    the result is identical to a single-process run over the same indices.
    """
    partials = list(partials)
    if not partials:
        raise AggregationError("nothing to aggregate")
    first = partials[0]
    records = {}
    for p in partials:
        if p.experiment != first.experiment or p.config.key() != first.config.key():
            raise AggregationError("partials come from different experiment configurations")
        overlap = records.keys() & p.records.keys()
        if overlap:
            raise AggregationError(f"sample indices {sorted(overlap)[:5]} appear twice")
        records.update(p.records)
    ordered = [records[i] for i in sorted(records)]
    cfg = dataclasses.replace(first.config, samples=len(ordered))
    summary = MonteCarloSummary(first.experiment, cfg.to_dict())
    summary.metadata = {"version": __version__, "sample_indices": [min(records), max(records)]}
    _SUMMARIZERS[first.experiment](summary, cfg, ordered)
    return summary


# ---------------------------------------------------------------- statistics


def band_stats(samples: np.ndarray) -> dict:
    """Column-wise mean, variance, and 99.9% symmetric quantile band of a
    ``(samples, k)`` array, ignoring NaN padding."""
    samples = np.atleast_2d(samples)
    count = np.sum(~np.isnan(samples), axis=0)
    with np.errstate(invalid="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # single-sample columns
        mean = np.nanmean(samples, axis=0)
        var = np.where(count > 1, np.nanvar(samples, axis=0, ddof=min(1, samples.shape[0] - 1)), 0.0)
        lo, hi = np.nanquantile(samples, BAND, axis=0)
    return {
        "k": list(range(samples.shape[1])),
        "count": count.tolist(),
        "mean": mean.tolist(),
        "variance": var.tolist(),
        "q_low": lo.tolist(),
        "q_high": hi.tolist(),
    }


def _summarize_errors(summary, cfg, recs):
    d = cfg.ensemble.d
    ells = sorted(recs[0]["norms"])
    K = np.arange(cfg.kmax + 1)
    for l in ells:
        arr = np.array([r["norms"][l] for r in recs])
        summary.raw[f"error_W{l}"] = arr
        summary.stats[f"error_W{l}"] = band_stats(arr)
        if l >= 2 or d < 1:
            lim = np.array([theory.limit_error(l, int(k), d) for k in K])
            summary.theory[f"error_W{l}"] = lim.tolist()
            with np.errstate(invalid="ignore"):
                summary.stats[f"error_W{l}"]["mean_abs_dev_sq"] = \
                    np.nanmean(np.abs(arr**2 - lim**2), axis=0).tolist()
    res = np.array([r["residual"] for r in recs])
    summary.raw["residual"] = res
    summary.stats["residual"] = band_stats(res)
    summary.theory["residual"] = (d ** (K / 2.0)).tolist()
    kappa = np.array([r["kappa"] for r in recs])
    summary.raw["kappa"] = kappa
    summary.extra["kappa"] = {"min": float(kappa.min()), "mean": float(kappa.mean()),
                              "max": float(kappa.max()),
                              "limit": theory.MpLaw(d).d_plus / theory.MpLaw(d).d_minus
                              if d < 1 else math.inf}
    if "bound_violations" in recs[0]:
        summary.extra["classical_bound_violations"] = int(sum(r["bound_violations"] for r in recs))
        summary.extra["monotonicity_violations"] = int(sum(r["monotone_violations"] for r in recs))
        summary.extra["classical_bound"] = [
            theory.classical_cg_bound(summary.extra["kappa"]["limit"], int(k)) if d < 1 else 1.0
            for k in K
        ]
    summary.extra["rhs_note"] = ("b = e1 (invariance)" if cfg.rhs == "e1"
                                 else "b uniform on the unit sphere")


def _summarize_halting(summary, cfg, recs):
    d = cfg.ensemble.d
    keys = list(recs[0]["times"])
    for l, e in keys:
        t = np.array([r["times"][(l, e)] for r in recs])
        summary.raw[f"halting_l{l}_eps{e!r}"] = t
        reached = t[t >= 0]
        vals, counts = np.unique(reached, return_counts=True)
        modal = int(vals[np.argmax(counts)]) if vals.size else None
        summary.halting_histograms.append({
            "ell": l,
            "eps": e,
            "tau": theory.predict_halting(l, e, d),
            "exceptional": theory.is_exceptional(l, e, d),
            "counts": [[int(v), int(c)] for v, c in zip(vals, counts)],
            "not_reached": int(np.sum(t < 0)),
            "modal": modal,
            "modal_fraction": float(counts.max() / t.size) if vals.size else 0.0,
        })


def _summarize_clt(summary, cfg, recs):
    g = np.array([r["g"] for r in recs])
    summary.raw["g"] = g
    summary.stats["g"] = band_stats(g)
    normal_cdf = sps.norm.cdf
    per_k = {}
    for k in range(1, cfg.kmax + 1):
        col = g[:, k]
        col = col[~np.isnan(col)]
        summary.fluctuation_samples[k] = col.tolist()
        rms = math.sqrt(float(np.mean(col**2))) if col.size else float("nan")
        z = col / rms if rms > 0 else col
        entry = {
            "variance": float(np.var(col, ddof=1)) if col.size > 1 else 0.0,
            "mean_square": rms**2,
            "normalized_mean": float(np.mean(z)) if col.size else float("nan"),
            "normalized_stderr": float(np.std(z, ddof=1) / math.sqrt(z.size)) if z.size > 1 else float("nan"),
        }
        if z.size:
            entry["ks_normal"] = ks_distance(normal_cdf, SpectralMeasure.from_atoms(z, merge_rtol=0.0))
        per_k[str(k)] = entry
    summary.extra["per_k"] = per_k


def _summarize_spectrum(summary, cfg, recs):
    d = cfg.ensemble.d
    law = theory.MpLaw(d)
    lam = np.array([r["eigenvalues"] for r in recs])
    summary.raw["eigenvalues"] = lam
    summary.ks_samples = [float(r["ks"]) for r in recs]
    pooled = lam.ravel()
    hi = law.d_plus + 0.5
    counts, edges = np.histogram(pooled, bins=60, range=(0.0, hi), density=True)
    grid = np.linspace(law.d_minus, law.d_plus, 201)
    summary.extra = {
        "eigenvalues": lam.tolist(),
        "histogram": {"edges": edges.tolist(), "density": counts.tolist()},
        "mp_curve": {"x": grid.tolist(), "density": np.asarray(theory.mp_density(grid, d)).tolist()},
        "support": [law.d_minus, law.d_plus],
        "fraction_within_0.1": float(np.mean((pooled >= law.d_minus - 0.1) & (pooled <= law.d_plus + 0.1))),
        "ks_median": float(np.median(summary.ks_samples)),
    }


def _summarize_weighted_ks(summary, cfg, recs):
    ks = np.array([r["ks"] for r in recs])
    summary.raw["ks"] = ks
    summary.ks_samples = ks.tolist()
    summary.extra = {
        "mean": float(ks.mean()),
        "stderr": float(ks.std(ddof=1) / math.sqrt(ks.size)) if ks.size > 1 else 0.0,
    }


_SUMMARIZERS = {
    "errors": _summarize_errors,
    "halting": _summarize_halting,
    "clt": _summarize_clt,
    "spectrum": _summarize_spectrum,
    "ks": _summarize_weighted_ks,
}


def run_error_concentration(cfg: ExperimentConfig) -> MonteCarloSummary:
    """Sample means and 99.9% bands of ``||e_k||_W`` and ``||r_k||_2`` next to
    their limits ``d^{k/2}/sqrt(1-d)`` and ``d^{k/2}``; also counts violations
    of the classical condition-number bound and of W-norm monotonicity."""
    return run_experiment("errors", cfg)


def run_halting_histogram(cfg: ExperimentConfig) -> MonteCarloSummary:
    return run_experiment("halting", cfg)


def run_clt_fluctuations(cfg: ExperimentConfig) -> MonteCarloSummary:
    """Fluctuations ``g_k = ||r_k||^2 - d^k``, raw and normalized by their
    root mean square."""
    return run_experiment("clt", cfg)


def run_spectrum_vs_mp(cfg: ExperimentConfig) -> MonteCarloSummary:
    return run_experiment("spectrum", cfg)


def run_weighted_vs_unweighted_ks(cfg: ExperimentConfig) -> MonteCarloSummary:
    """KS distance between the empirical spectral measure and the same atoms
    carried with normalized chi-squared weights."""
    return run_experiment("ks", cfg)


# ---------------------------------------------------------------- output


def _fmt(v):
    if isinstance(v, bool) or v is None:
        return "true" if v is True else "false" if v is False else "null"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "null"
        if math.isinf(v):
            return '"inf"' if v > 0 else '"-inf"'
        return format(v, ".17g")
    raise TypeError(type(v))


def dumps(obj, indent=0) -> str:
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + " " * indent + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        obj = list(obj)
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(json.dumps(v) if isinstance(v, str) else _fmt(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 1) for v in obj) + "\n" + " " * indent + "]"
    if isinstance(obj, str):
        return json.dumps(obj)
    return _fmt(obj)


def write_json(summary: MonteCarloSummary, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(summary.to_dict()))
        fh.write("\n")


CSV_COLUMNS = ("experiment", "n", "d", "beta", "ensemble", "k", "statistic", "value")


def csv_rows(summary: MonteCarloSummary):
    c = summary.config
    head = (summary.experiment, c["n"], c["d"], c["beta"], c["ensemble"])

    def row(k, stat, value):
        return head + ("" if k is None else k, stat, value)

    for name, st in summary.stats.items():
        for key in ("mean", "variance", "q_low", "q_high", "mean_abs_dev_sq"):
            for k, v in zip(st["k"], st.get(key, [])):
                yield row(k, f"{name}:{key}", v)
    for name, vals in summary.theory.items():
        for k, v in enumerate(vals):
            yield row(k, f"{name}:limit", v)
    for h in summary.halting_histograms:
        tag = f"halting[ell={h['ell']};eps={format(h['eps'], '.17g')}]"
        for k, cnt in h["counts"]:
            yield row(k, f"{tag}:count", cnt)
        yield row(None, f"{tag}:not_reached", h["not_reached"])
        yield row(None, f"{tag}:tau", h["tau"])
    for k, entry in summary.extra.get("per_k", {}).items():
        for key, v in entry.items():
            yield row(k, f"g:{key}", v)
    for i, v in enumerate(summary.ks_samples):
        yield row(i, "ks", v)
    if "eigenvalues" in summary.extra:
        for i, lam in enumerate(summary.extra["eigenvalues"]):
            for v in lam:
                yield row(i, "eigenvalue", v)
        curve = summary.extra["mp_curve"]
        for i, (x, y) in enumerate(zip(curve["x"], curve["density"])):
            yield row(i, "mp_curve:x", x)
            yield row(i, "mp_curve:density", y)


def write_csv(summary: MonteCarloSummary, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("# version", __version__, "config", dumps(summary.config).replace("\n", " ")))
        w.writerow(CSV_COLUMNS)
        for r in csv_rows(summary):
            w.writerow(tuple(_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r))
