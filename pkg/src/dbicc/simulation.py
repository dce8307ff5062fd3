"""Synthetic data generators and Monte Carlo experiment runners.

Generators cover the three data regimes used to study dbICC behavior:

* Gaussian score-plus-noise vectors (score and noise covariances given),
* sample covariance / correlation matrices built from IID multivariate
  normal draws around per-individual covariances,
* first-order vector-autoregressive series, initialized from their
  stationary law, whose lag-1 coefficient controls temporal
  autocorrelation.

Experiment runners reproduce the standard studies end to end: point
estimate consistency, bootstrap interval coverage (naive versus
duplicate-block corrected), and log-log SNR curves against measurement
intensity.  Every run draws from a generator seeded by (seed, run
index), so results are reproducible and independent of the worker
count used to fan the runs out.
"""

import secrets
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bootstrap import bootstrap_dbicc_pair
from .core import GroupedSample, IndividualRecord, PayloadKind, compute_distance_matrix
from .distances import Metric
from .errors import FactorizationError, InsufficientDataError, ParameterError
from .estimator import dbicc_point, population_dbicc_gaussian
from .spearman_brown import build_sb_curve, fit_loglog

__all__ = [
    "TrueScorePopulation",
    "ConnectivityPopulation",
    "gen_gaussian_sample",
    "gen_mvn_timeseries",
    "gen_sample_cov",
    "gen_spd_population",
    "gen_connectivity_sample",
    "cov_error_spread",
    "error_spread_same_vs_different",
    "score_error_cross_term",
    "default_m_grid",
    "run_point_experiment",
    "run_coverage_experiment",
    "run_sb_experiment",
]


def _cholesky(mat, what):
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise FactorizationError(f"{what} must be square, got shape {mat.shape}")
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"{what} is not symmetric positive definite") from exc


@dataclass(frozen=True)
class TrueScorePopulation:
    """Gaussian score-plus-noise population for vector observations.

    Observations are ``score_i + noise_ij`` with independent zero-mean
    Gaussian scores and noises.  Both covariances must be SPD; this is
    verified by factorization at construction (no jitter is applied).
    """

    score_cov: np.ndarray
    noise_cov: np.ndarray
    n_individuals: int
    n_replicates: int

    def __post_init__(self):
        score_chol = _cholesky(self.score_cov, "score covariance")
        noise_chol = _cholesky(self.noise_cov, "noise covariance")
        if score_chol.shape != noise_chol.shape:
            raise ParameterError("score and noise covariances must share one size")
        if self.n_individuals < 2:
            raise ParameterError("need at least 2 individuals")
        if self.n_replicates < 1:
            raise ParameterError("need at least 1 replicate per individual")
        object.__setattr__(self, "score_cov", np.asarray(self.score_cov, dtype=float))
        object.__setattr__(self, "noise_cov", np.asarray(self.noise_cov, dtype=float))
        object.__setattr__(self, "_score_chol", score_chol)
        object.__setattr__(self, "_noise_chol", noise_chol)

    @property
    def dim(self) -> int:
        return self.score_cov.shape[0]

    @property
    def icc(self) -> float:
        """Population dbICC under Euclidean distance."""
        return population_dbicc_gaussian(
            np.trace(self.score_cov), np.trace(self.noise_cov)
        )


@dataclass(frozen=True)
class ConnectivityPopulation:
    """Per-individual covariances plus a series length and AR(1) coefficient."""

    sigmas: tuple
    n_timepoints: int
    ar_coeff: float = 0.0

    def __post_init__(self):
        sigmas = tuple(np.asarray(s, dtype=float) for s in self.sigmas)
        chols = tuple(_cholesky(s, "individual covariance") for s in sigmas)
        dims = {s.shape for s in sigmas}
        if len(dims) != 1:
            raise ParameterError(f"covariances have mixed shapes: {sorted(dims)}")
        if not (0.0 <= self.ar_coeff < 1.0):
            raise ParameterError(
                f"AR(1) coefficient must lie in [0, 1) for stationarity, "
                f"got {self.ar_coeff}"
            )
        if self.n_timepoints < 2:
            raise ParameterError(f"need at least 2 time points, got {self.n_timepoints}")
        object.__setattr__(self, "sigmas", sigmas)
        object.__setattr__(self, "_chols", chols)

    @property
    def n_individuals(self) -> int:
        return len(self.sigmas)

    @property
    def dim(self) -> int:
        return self.sigmas[0].shape[0]


def gen_gaussian_sample(pop: TrueScorePopulation, rng) -> GroupedSample:
    """Draw a grouped vector sample from a score-plus-noise population."""
    rng = np.random.default_rng(rng)
    n, k, p = pop.n_individuals, pop.n_replicates, pop.dim
    scores = rng.standard_normal((n, p)) @ pop._score_chol.T
    noise = rng.standard_normal((n, k, p)) @ pop._noise_chol.T
    obs = scores[:, None, :] + noise
    individuals = tuple(
        IndividualRecord(id=f"sim{i:04d}", replicates=tuple(obs[i]))
        for i in range(n)
    )
    return GroupedSample(individuals=individuals, payload_kind=PayloadKind.VECTOR)


def _var1_batch(chol, n_series, n_timepoints, ar_coeff, rng):
    """Stationary VAR(1) series, innovation covariance chol @ chol.T."""
    p = chol.shape[0]
    innov = rng.standard_normal((n_series, n_timepoints, p)) @ chol.T
    if ar_coeff == 0.0:
        return innov
    out = np.empty_like(innov)
    out[:, 0, :] = innov[:, 0, :] / np.sqrt(1.0 - ar_coeff * ar_coeff)
    for t in range(1, n_timepoints):
        out[:, t, :] = ar_coeff * out[:, t - 1, :] + innov[:, t, :]
    return out


def gen_mvn_timeseries(sigma, n_timepoints: int, ar_coeff: float, rng) -> np.ndarray:
    """One stationary (multivariate) AR(1) series with Gaussian innovations.

    The first row is drawn from the stationary law
    ``N(0, sigma / (1 - ar_coeff^2))``; each later row is
    ``ar_coeff * previous + innovation`` with innovations
    ``N(0, sigma)``.  With ``ar_coeff=0`` the rows are IID
    ``N(0, sigma)``.
    """
    if not (0.0 <= ar_coeff < 1.0):
        raise ParameterError(
            f"AR(1) coefficient must lie in [0, 1), got {ar_coeff}"
        )
    if n_timepoints < 2:
        raise ParameterError(f"need at least 2 time points, got {n_timepoints}")
    chol = _cholesky(sigma, "innovation covariance")
    rng = np.random.default_rng(rng)
    return _var1_batch(chol, 1, n_timepoints, ar_coeff, rng)[0]


def gen_sample_cov(x) -> np.ndarray:
    """Unbiased sample covariance of rows (divisor n - 1, columns centered)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ParameterError(f"expected a 2-D array, got shape {x.shape}")
    n = x.shape[0]
    if n < 2:
        raise InsufficientDataError(f"need at least 2 observations, got {n}")
    centered = x - x.mean(axis=0)
    return centered.T @ centered / (n - 1)


def _sample_cov_batch(series):
    n = series.shape[1]
    centered = series - series.mean(axis=1, keepdims=True)
    return np.einsum("nti,ntj->nij", centered, centered) / (n - 1)


def _corr_scale_batch(covs):
    d = np.sqrt(np.diagonal(covs, axis1=1, axis2=2))
    out = covs / (d[:, :, None] * d[:, None, :])
    out = np.clip(out, -1.0, 1.0)
    rows = np.arange(out.shape[1])
    out[:, rows, rows] = 1.0
    return out


def gen_spd_population(n: int, dim: int, rng, wishart_df=None) -> list:
    """Random unit-diagonal SPD matrices (correlation-scaled Wishart draws).

    ``wishart_df`` controls heterogeneity: fewer degrees of freedom give
    more variable matrices.  Defaults to ``2 * dim``; must be at least
    ``dim`` so draws are almost surely nonsingular.
    """
    if n < 1:
        raise ParameterError(f"need at least 1 matrix, got {n}")
    df = 2 * dim if wishart_df is None else int(wishart_df)
    if df < dim:
        raise ParameterError(f"wishart_df must be >= dim ({dim}), got {df}")
    rng = np.random.default_rng(rng)
    roots = rng.standard_normal((n, dim, df))
    wisharts = np.einsum("nik,njk->nij", roots, roots)
    return list(_corr_scale_batch(wisharts))


def gen_connectivity_sample(
    pop: ConnectivityPopulation,
    n_replicates: int,
    rng,
    matrix_kind: str = "covariance",
) -> GroupedSample:
    """Grouped sample of estimated connectivity matrices.

    For every individual, generates ``n_replicates`` series from the
    population's AR(1) law and summarizes each as a sample covariance
    (``matrix_kind="covariance"``) or sample correlation
    (``matrix_kind="correlation"``) matrix.
    """
    if matrix_kind not in ("covariance", "correlation"):
        raise ParameterError(f"unknown matrix kind {matrix_kind!r}")
    if n_replicates < 1:
        raise ParameterError("need at least 1 replicate per individual")
    rng = np.random.default_rng(rng)
    individuals = []
    for i, chol in enumerate(pop._chols):
        series = _var1_batch(chol, n_replicates, pop.n_timepoints, pop.ar_coeff, rng)
        mats = _sample_cov_batch(series)
        if matrix_kind == "correlation":
            mats = _corr_scale_batch(mats)
        individuals.append(
            IndividualRecord(id=f"sim{i:04d}", replicates=tuple(mats))
        )
    return GroupedSample(individuals=tuple(individuals), payload_kind=PayloadKind.MATRIX)


def cov_error_spread(sigma, n_obs: int, n_rep: int, rng):
    """Spread of sample-covariance error, simulated and in closed form.

    Estimates ``E || S1 - S2 ||_F^2`` over independent pairs of sample
    covariances of ``n_obs`` IID Gaussian draws with covariance
    ``sigma``, and returns it together with the closed-form value
    ``2 * ((tr sigma)^2 + tr(sigma^2)) / (n_obs - 1)``.

    Returns
    -------
    (monte_carlo, analytic) : tuple of float
    """
    sigma = np.asarray(sigma, dtype=float)
    chol = _cholesky(sigma, "covariance")
    p = sigma.shape[0]
    if n_obs < p + 2:
        raise ParameterError(
            f"need n_obs >= dim + 2 for well-conditioned sample covariances, "
            f"got n_obs={n_obs}, dim={p}"
        )
    if n_rep < 1000:
        raise ParameterError(f"need at least 1000 replications, got {n_rep}")
    rng = np.random.default_rng(rng)
    total = 0.0
    done = 0
    batch = max(1, 2_000_000 // max(2 * n_obs * p, 1))
    while done < n_rep:
        b = min(batch, n_rep - done)
        draws = rng.standard_normal((2 * b, n_obs, p)) @ chol.T
        covs = _sample_cov_batch(draws)
        diff = covs[0::2] - covs[1::2]
        total += float(np.sum(diff * diff))
        done += b
    trace = float(np.trace(sigma))
    trace_sq = float(np.trace(sigma @ sigma))
    analytic = 2.0 * (trace * trace + trace_sq) / (n_obs - 1)
    return total / n_rep, analytic


def _cov_errors(chols, picks, n_obs, rng):
    """Sample-covariance errors S - Sigma for given per-draw individuals."""
    p = chols[0].shape[0]
    errors = np.empty((len(picks), p, p))
    for k, i in enumerate(picks):
        draws = rng.standard_normal((n_obs, p)) @ chols[i].T
        errors[k] = gen_sample_cov(draws) - chols[i] @ chols[i].T
    return errors


def error_spread_same_vs_different(sigmas, n_obs: int, n_rep: int, rng):
    """Mean squared error-pair distance, same individual versus different.

    For sample-covariance errors the two settings should agree; the
    Monte Carlo means and their standard errors let callers check that.

    Returns
    -------
    dict with keys ``same``, ``same_se``, ``different``, ``different_se``.
    """
    rng = np.random.default_rng(rng)
    sigmas = [np.asarray(s, dtype=float) for s in sigmas]
    chols = [_cholesky(s, "individual covariance") for s in sigmas]
    n = len(sigmas)
    if n < 2:
        raise ParameterError("need at least 2 individuals")
    same_ids = rng.integers(0, n, size=n_rep)
    e1 = _cov_errors(chols, same_ids, n_obs, rng)
    e2 = _cov_errors(chols, same_ids, n_obs, rng)
    same_vals = np.sum((e1 - e2) ** 2, axis=(1, 2))
    id1 = rng.integers(0, n, size=n_rep)
    shift = rng.integers(1, n, size=n_rep)
    id2 = (id1 + shift) % n  # guaranteed distinct from id1
    d1 = _cov_errors(chols, id1, n_obs, rng)
    d2 = _cov_errors(chols, id2, n_obs, rng)
    diff_vals = np.sum((d1 - d2) ** 2, axis=(1, 2))
    return {
        "same": float(same_vals.mean()),
        "same_se": float(same_vals.std(ddof=1) / np.sqrt(n_rep)),
        "different": float(diff_vals.mean()),
        "different_se": float(diff_vals.std(ddof=1) / np.sqrt(n_rep)),
    }


def score_error_cross_term(sigmas, n_obs: int, n_rep: int, rng):
    """Monte Carlo mean of <score difference, error difference>.

    The inner product is the trace inner product on symmetric matrices.
    Under the score-plus-error decomposition of sample covariances this
    expectation is zero; the returned (mean, se) pair lets callers check
    the estimate against its Monte Carlo error.
    """
    rng = np.random.default_rng(rng)
    sigmas = [np.asarray(s, dtype=float) for s in sigmas]
    chols = [_cholesky(s, "individual covariance") for s in sigmas]
    n = len(sigmas)
    if n < 2:
        raise ParameterError("need at least 2 individuals")
    id1 = rng.integers(0, n, size=n_rep)
    shift = rng.integers(1, n, size=n_rep)
    id2 = (id1 + shift) % n
    e1 = _cov_errors(chols, id1, n_obs, rng)
    e2 = _cov_errors(chols, id2, n_obs, rng)
    score_diff = np.stack([sigmas[a] - sigmas[b] for a, b in zip(id1, id2)])
    vals = np.sum(score_diff * (e1 - e2), axis=(1, 2))
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_rep))


def default_m_grid(low: int = 25, high: int = 197, count: int = 8) -> list:
    """Integer grid approximately equally spaced on the log scale."""
    grid = np.unique(np.rint(np.geomspace(low, high, count)).astype(int))
    return [int(m) for m in grid]


def _resolve_seed(seed):
    return secrets.randbits(63) if seed is None else int(seed)


def _run_tasks(worker, tasks, workers):
    if workers is not None and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(worker, tasks, chunksize=1))
    return [worker(t) for t in tasks]


def _gaussian_population(n_individuals, n_replicates, icc, dim):
    if not (0.0 < icc < 1.0):
        raise ParameterError(f"population dbICC must lie in (0, 1), got {icc}")
    noise_scale = (1.0 - icc) / icc
    return TrueScorePopulation(
        score_cov=np.eye(dim),
        noise_cov=noise_scale * np.eye(dim),
        n_individuals=n_individuals,
        n_replicates=n_replicates,
    )


def _point_worker(task):
    seed, run, n_individuals, n_replicates, icc, dim = task
    pop = _gaussian_population(n_individuals, n_replicates, icc, dim)
    rng = np.random.default_rng([seed, run])
    sample = gen_gaussian_sample(pop, rng)
    dm = compute_distance_matrix(sample, Metric.L2_VEC)
    return dbicc_point(dm).rho_hat


def run_point_experiment(
    n_individuals: int,
    n_replicates: int,
    icc: float,
    n_runs: int,
    seed=None,
    dim: int = 2,
    workers: int = 1,
) -> dict:
    """Distribution of dbICC point estimates under a Gaussian population.

    Draws ``n_runs`` independent grouped samples with population dbICC
    ``icc`` (identity score covariance, scaled-identity noise) and
    estimates each with Euclidean distance.
    """
    seed = _resolve_seed(seed)
    tasks = [
        (seed, run, n_individuals, n_replicates, icc, dim) for run in range(n_runs)
    ]
    estimates = _run_tasks(_point_worker, tasks, workers)
    arr = np.asarray(estimates)
    return {
        "experiment": "point",
        "n_individuals": n_individuals,
        "n_replicates": n_replicates,
        "dim": dim,
        "icc_true": float(icc),
        "n_runs": n_runs,
        "seed": seed,
        "estimates": [float(v) for v in estimates],
        "mean": float(arr.mean()),
        "sd": float(arr.std(ddof=1)) if n_runs > 1 else 0.0,
    }


def _coverage_worker(task):
    seed, run, n_individuals, n_replicates, icc, dim, n_boot, level = task
    pop = _gaussian_population(n_individuals, n_replicates, icc, dim)
    rng = np.random.default_rng([seed, run])
    sample = gen_gaussian_sample(pop, rng)
    dm = compute_distance_matrix(sample, Metric.L2_VEC)
    point = dbicc_point(dm).rho_hat
    boot_seed = int(rng.integers(0, 2**62))
    naive, corrected = bootstrap_dbicc_pair(dm, n_boot, level=level, seed=boot_seed)
    return {
        "point": float(point),
        "naive": [naive.ci_low, naive.ci_high],
        "corrected": [corrected.ci_low, corrected.ci_high],
        "median_naive": float(np.median(naive.replicate_estimates)),
        "median_corrected": float(np.median(corrected.replicate_estimates)),
        "n_degenerate_naive": naive.n_degenerate,
        "n_degenerate_corrected": corrected.n_degenerate,
    }


def run_coverage_experiment(
    n_individuals: int,
    n_replicates: int,
    icc: float,
    n_boot: int,
    n_runs: int,
    level: float = 0.95,
    seed=None,
    dim: int = 2,
    workers: int = 1,
) -> dict:
    """Coverage of naive and corrected bootstrap intervals, same resamples.

    Each run simulates a Gaussian grouped sample with population dbICC
    ``icc``, bootstraps the estimate ``n_boot`` times, and records both
    interval variants.  Coverage percentages count runs whose interval
    contains the true value.
    """
    seed = _resolve_seed(seed)
    tasks = [
        (seed, run, n_individuals, n_replicates, icc, dim, n_boot, level)
        for run in range(n_runs)
    ]
    rows = _run_tasks(_coverage_worker, tasks, workers)
    covered_naive = sum(r["naive"][0] <= icc <= r["naive"][1] for r in rows)
    covered_corr = sum(r["corrected"][0] <= icc <= r["corrected"][1] for r in rows)
    return {
        "experiment": "coverage",
        "n_individuals": n_individuals,
        "n_replicates": n_replicates,
        "dim": dim,
        "icc_true": float(icc),
        "n_boot": n_boot,
        "level": level,
        "n_runs": n_runs,
        "seed": seed,
        "coverage_naive": 100.0 * covered_naive / n_runs,
        "coverage_corrected": 100.0 * covered_corr / n_runs,
        "mean_point": float(np.mean([r["point"] for r in rows])),
        "runs": rows,
    }


def _sb_worker(task):
    (seed, run, n_individuals, n_replicates, dim, m_grid, ar_coeff, df) = task
    rng = np.random.default_rng([seed, run])
    sigmas = gen_spd_population(n_individuals, dim, rng, wishart_df=df)
    chols = [_cholesky(s, "individual covariance") for s in sigmas]
    rows = []
    for m in m_grid:
        records = {"covariance": [], "correlation": []}
        for chol in chols:
            series = _var1_batch(chol, n_replicates, m, ar_coeff, rng)
            covs = _sample_cov_batch(series)
            records["covariance"].append(covs)
            records["correlation"].append(_corr_scale_batch(covs))
        row = {"m": int(m)}
        for kind, mats in records.items():
            individuals = tuple(
                IndividualRecord(id=f"sim{i:04d}", replicates=tuple(mats[i]))
                for i in range(n_individuals)
            )
            sample = GroupedSample(
                individuals=individuals, payload_kind=PayloadKind.MATRIX
            )
            dm = compute_distance_matrix(sample, Metric.L2_VEC)
            row[kind] = dbicc_point(dm).rho_hat
        rows.append(row)
    return rows


def run_sb_experiment(
    n_individuals: int = 25,
    n_replicates: int = 2,
    dim: int = 40,
    m_grid=None,
    ar_coeff: float = 0.0,
    n_runs: int = 20,
    seed=None,
    wishart_df=None,
    offset: int = 1,
    workers: int = 1,
) -> dict:
    """Log-log SNR curves for connectivity-matrix dbICC versus series length.

    For each run, draws a population of per-individual covariances,
    simulates ``n_replicates`` AR(1) series of every length in
    ``m_grid`` per individual, estimates the dbICC of the resulting
    sample covariance matrices and sample correlation matrices under
    Frobenius distance, and fits a line to
    ``[log(m - offset), log snr]``.  Reports per-run slopes plus the
    across-run mean curve, for both matrix kinds.
    """
    if m_grid is None:
        m_grid = default_m_grid()
    m_grid = [int(m) for m in m_grid]
    if len(m_grid) < 3:
        raise ParameterError("m_grid needs at least 3 lengths to fit a curve")
    seed = _resolve_seed(seed)
    tasks = [
        (seed, run, n_individuals, n_replicates, dim, tuple(m_grid), ar_coeff, wishart_df)
        for run in range(n_runs)
    ]
    per_run = _run_tasks(_sb_worker, tasks, workers)

    report = {
        "experiment": "sb",
        "n_individuals": n_individuals,
        "n_replicates": n_replicates,
        "dim": dim,
        "m_grid": m_grid,
        "ar_coeff": float(ar_coeff),
        "wishart_df": wishart_df,
        "offset": offset,
        "n_runs": n_runs,
        "seed": seed,
    }
    for kind in ("covariance", "correlation"):
        slopes = []
        intercepts = []
        n_excluded = 0
        points = []
        log_snr_by_m = {m: [] for m in m_grid}
        for run, rows in enumerate(per_run):
            estimates = [(row["m"], row[kind]) for row in rows]
            curve = build_sb_curve(estimates, offset=offset)
            slopes.append(curve.fit.slope)
            intercepts.append(curve.fit.intercept)
            n_excluded += len(curve.excluded)
            for pt in curve.points:
                log_snr_by_m[pt.m].append(pt.y)
                points.append(
                    {"run": run, "m": pt.m, "rho_hat": pt.rho_hat, "x": pt.x, "y": pt.y}
                )
        slopes_arr = np.asarray(slopes)
        mean_log_snr = [
            float(np.mean(log_snr_by_m[m])) if log_snr_by_m[m] else None
            for m in m_grid
        ]
        # one line through the across-run mean curve, with its OLS errors
        mean_pts = [
            (float(np.log(m - offset)), y)
            for m, y in zip(m_grid, mean_log_snr)
            if y is not None
        ]
        mean_fit = fit_loglog(mean_pts) if len(mean_pts) >= 3 else None
        report[kind] = {
            "slopes": [float(s) for s in slopes],
            "intercepts": [float(b) for b in intercepts],
            "mean_slope": float(slopes_arr.mean()),
            "sd_slope": float(slopes_arr.std(ddof=1)) if n_runs > 1 else 0.0,
            "mean_intercept": float(np.mean(intercepts)),
            "mean_log_snr": mean_log_snr,
            "mean_curve_fit": None
            if mean_fit is None
            else {
                "slope": mean_fit.slope,
                "intercept": mean_fit.intercept,
                "slope_se": mean_fit.slope_se,
                "intercept_se": mean_fit.intercept_se,
            },
            "n_excluded_points": n_excluded,
            "points": points,
        }
    return report
