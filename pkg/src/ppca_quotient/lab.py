"""Monte Carlo experiments for consistency of the PPCA maximum-likelihood estimator.

Every experiment is a pure function of its :class:`ExperimentConfig`. Each
replication draws from its own stream keyed by ``(master_seed, tag, n index,
rep index)`` and results are sorted by ``(n, rep)``, so thread scheduling never
changes the output.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigurationError, DegenerateDataError, InvalidInputError
from .mle import loglik_from_cov, mle_fit, sample_covariance
from .model import GeneratorSpec, PpcaParams, assemble_covariance, log_density, random_params, sample
from .numerics import lambda_max_wwt, lowrank_logdet
from .quotient import IdentifiedSet, distance_to_C, param_distance, procrustes_rotation
from .rng import child_seed, make_rng

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ExperimentConfig:
    """Configuration shared by all experiments.

    ``theta0_spec`` is either ``{"w": [[...]], "sigma2": s}`` or
    ``{"random": {"seed": int, "scale": float, "sigma2": float}}``.
    """

    p: int
    q: int
    theta0_spec: dict
    n_grid: tuple = (100, 1000, 10_000, 100_000)
    reps: int = 50
    generator: GeneratorSpec = GeneratorSpec()
    eta: float = 0.5
    master_seed: int = 0
    threads: int = field(default=1, compare=False)
    sup_starts: int = 8
    record_runtime: bool = False

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        if not (self.p > self.q >= 1):
            raise ConfigurationError(f"need p > q >= 1, got p={self.p}, q={self.q}")
        if not self.n_grid or any(n < 1 for n in self.n_grid):
            raise ConfigurationError("n_grid must be a non-empty list of positive sizes")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigurationError(f"n_grid must be strictly ascending, got {list(self.n_grid)}")
        if self.reps < 1:
            raise ConfigurationError(f"reps must be >= 1, got {self.reps}")
        if not self.eta > 0:
            raise ConfigurationError(f"eta must be positive, got {self.eta}")
        if self.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {self.threads}")
        theta0 = self.theta0()
        if (theta0.p, theta0.q) != (self.p, self.q):
            raise ConfigurationError(f"theta0 has shape {theta0.w.shape}, expected ({self.p}, {self.q})")

    def theta0(self) -> PpcaParams:
        spec = self.theta0_spec
        try:
            if "random" in spec:
                r = spec["random"]
                return random_params(
                    self.p, self.q, int(r["seed"]), float(r.get("scale", 1.0)), float(r.get("sigma2", 1.0))
                )
            return PpcaParams.from_dict(spec)
        except (KeyError, TypeError, InvalidInputError) as exc:
            raise ConfigurationError(f"bad theta0 specification: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "q": self.q,
            "theta0": self.theta0_spec,
            "n_grid": list(self.n_grid),
            "reps": self.reps,
            "generator": self.generator.to_dict(),
            "eta": self.eta,
            "seed": self.master_seed,
            "threads": self.threads,
            "sup_starts": self.sup_starts,
            "record_runtime": self.record_runtime,
        }


# --- consistency -----------------------------------------------------------

CONVERGENCE_HEADER = ("n", "rep", "d_quotient", "cov_frob_err", "sigma2_hat", "clamp_count", "runtime_ms")


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    rep: int
    d_quotient: float
    cov_frob_err: float
    sigma2_hat: float
    clamp_count: int
    runtime_ms: float = field(compare=False)
    degenerate: bool = False


def _loglog_slope(ns, values) -> float:
    v = np.asarray(values, dtype=float)
    if np.any(~np.isfinite(v)) or np.any(v <= 0) or len(v) < 2:
        return float("nan")
    return float(np.polyfit(np.log(np.asarray(ns, dtype=float)), np.log(v), 1)[0])


def _median_flagged(values) -> float:
    # Degenerate replications (nan) count as +inf rather than being dropped.
    v = np.asarray(values, dtype=float)
    return float(np.median(np.where(np.isnan(v), np.inf, v)))


@dataclass(frozen=True)
class ConvergenceReport:
    config: ExperimentConfig
    rows: tuple

    def medians(self, column: str) -> list[float]:
        return [_median_flagged([getattr(r, column) for r in self.rows if r.n == n]) for n in self.config.n_grid]

    def slope(self, column: str = "d_quotient") -> float:
        return _loglog_slope(self.config.n_grid, self.medians(column))

    def summary(self) -> dict:
        grid = list(self.config.n_grid)
        by_n = {n: [r for r in self.rows if r.n == n] for n in grid}
        return {
            "n_grid": grid,
            "reps": self.config.reps,
            "generator": self.config.generator.to_dict(),
            "median_d_quotient": self.medians("d_quotient"),
            "median_cov_frob_err": self.medians("cov_frob_err"),
            "median_sigma2_hat": self.medians("sigma2_hat"),
            "loglog_slope_d_quotient": self.slope("d_quotient"),
            "loglog_slope_cov_frob_err": self.slope("cov_frob_err"),
            "clamp_total": [int(sum(r.clamp_count for r in by_n[n] if not r.degenerate)) for n in grid],
            "degenerate_count": [int(sum(r.degenerate for r in by_n[n])) for n in grid],
        }


def _one_replication(theta0, ident, cfg, i_n, n, rep) -> ConvergenceRow:
    t0 = time.perf_counter()
    data = sample(theta0, n, cfg.generator, child_seed(cfg.master_seed, "consistency", i_n, rep))
    try:
        fit = mle_fit(data, cfg.q)
    except DegenerateDataError:
        ms = (time.perf_counter() - t0) * 1e3
        nan = float("nan")
        return ConvergenceRow(n, rep, nan, nan, nan, -1, ms, degenerate=True)
    d_q = distance_to_C(fit.theta_hat, ident)
    err = float(np.linalg.norm(fit.covariance() - ident.sigma0_cov.entries))
    ms = (time.perf_counter() - t0) * 1e3
    return ConvergenceRow(n, rep, d_q, err, fit.theta_hat.sigma2, len(fit.clamped), ms)


def run_consistency_experiment(cfg: ExperimentConfig) -> ConvergenceReport:
    """Sample, fit and measure ``d(theta_hat, C)`` and ``||Sigma_hat - Sigma0||_F`` for
    every ``(n, rep)`` pair. Since theta0 lies in C, ``d(theta_hat, C)`` is the
    quotient distance between the classes of theta_hat and theta0.
    """
    theta0 = cfg.theta0()
    ident = IdentifiedSet(theta0)
    jobs = [(i_n, n, rep) for i_n, n in enumerate(cfg.n_grid) for rep in range(cfg.reps)]

    def work(job):
        return _one_replication(theta0, ident, cfg, *job)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            rows = list(pool.map(work, jobs))
    else:
        rows = [work(j) for j in jobs]
    rows.sort(key=lambda r: (r.n, r.rep))
    return ConvergenceReport(cfg, tuple(rows))


# --- likelihood-ratio supremum over S0 -------------------------------------

SUP_RATIO_HEADER = ("n", "sup_log_ratio", "h_hat", "probe_count", "mean_log_ratio")


@dataclass(frozen=True)
class SupRatioRow:
    n: int
    sup_log_ratio: float
    h_hat: float
    probe_count: int
    seed: int
    best_theta: PpcaParams = field(compare=False, repr=False)

    @property
    def mean_log_ratio(self) -> float:
        return self.sup_log_ratio / self.n


@dataclass(frozen=True)
class SupRatioReport:
    config: ExperimentConfig
    rows: tuple


def project_off_C(theta_w, sigma2, ident: IdentifiedSet, eta: float, max_iter: int = 8):
    """Push ``(W, sigma2)`` radially away from its nearest point in C until its
    distance to C is at least ``eta``. Returns a :class:`PpcaParams` or ``None``
    when the result would leave the parameter space (``sigma2 <= 0``).
    """
    w0, s0 = ident.theta0.w, ident.theta0.sigma2
    w = np.asarray(theta_w, dtype=float)
    s = float(sigma2)
    for _ in range(max_iter):
        c_w = w0 @ procrustes_rotation(w, w0)
        dw, ds = w - c_w, s - s0
        dist = math.hypot(float(np.linalg.norm(dw)), ds)
        if dist >= eta * (1 - 1e-12):
            break
        if dist == 0.0:
            dw, ds, dist = np.zeros_like(w), 1.0, 1.0
        w, s = c_w + dw * (eta / dist), s0 + ds * (eta / dist)
    else:
        return None
    if not s > 0:
        return None
    return PpcaParams(w, s)


def estimate_sup_ratio(
    cfg: ExperimentConfig, n: int, seed: int, probes: Sequence[PpcaParams] = ()
) -> SupRatioRow:
    """Lower bound on ``sup_{theta in S0} sum_i log f(x_i; theta) / f(x_i; theta0)``
    with ``S0 = {theta : d(theta, C) >= eta}``.

    Multistart Nelder-Mead over ``(vec W, sigma2)``; every candidate is first
    projected onto S0 with :func:`project_off_C`, so each evaluated value is
    attained inside S0. Starts are the projected MLE, ``cfg.sup_starts`` random
    directions off theta0, and any supplied ``probes``.
    """
    if cfg.p > 6 or cfg.q > 2:
        raise ConfigurationError(f"sup-ratio estimation is limited to p <= 6, q <= 2 (got {cfg.p}, {cfg.q})")
    theta0 = cfg.theta0()
    ident = IdentifiedSet(theta0)
    eta = cfg.eta
    p, q = cfg.p, cfg.q
    data = sample(theta0, n, cfg.generator, seed)
    s = sample_covariance(data).entries
    ll0 = loglik_from_cov(s, n, theta0)

    best = {"value": -math.inf, "theta": None, "count": 0}

    def ratio(theta):
        val = loglik_from_cov(s, n, theta) - ll0
        best["count"] += 1
        if val > best["value"]:
            best["value"], best["theta"] = val, theta
        return val

    def objective(u):
        theta = project_off_C(u[:-1].reshape(p, q), u[-1], ident, eta)
        if theta is None:
            return 1e12
        return -ratio(theta) / n

    starts = []
    for probe in probes:
        if distance_to_C(probe, ident) < eta * (1 - 1e-12):
            raise InvalidInputError("probe lies outside S0")
        starts.append(probe)
    try:
        starts.append(mle_fit(data, q).theta_hat)
    except DegenerateDataError:
        pass
    rng = make_rng(child_seed(seed, "sup-starts"))
    for _ in range(cfg.sup_starts):
        direction = rng.standard_normal(p * q + 1)
        direction *= 0.5 * eta / np.linalg.norm(direction)
        starts.append((theta0.w + direction[:-1].reshape(p, q), theta0.sigma2 + direction[-1]))

    feasible = []
    for st in starts:
        w, s2 = (st.w, st.sigma2) if isinstance(st, PpcaParams) else st
        theta = project_off_C(w, s2, ident, eta)
        if theta is not None:
            feasible.append(theta)
    if not feasible:
        raise ConfigurationError("every start point falls outside the parameter space after projection")

    opts = {"maxfev": 4000, "xatol": 1e-9, "fatol": 1e-12, "adaptive": True}
    for theta in feasible:
        u0 = np.r_[theta.w.ravel(), theta.sigma2]
        minimize(objective, u0, method="Nelder-Mead", options=opts)

    sup = best["value"]
    return SupRatioRow(n, sup, math.exp(sup / n), best["count"], int(seed), best["theta"])


def run_sup_ratio(cfg: ExperimentConfig, n_grid: Optional[Sequence[int]] = None) -> SupRatioReport:
    grid = tuple(cfg.n_grid if n_grid is None else n_grid)
    jobs = [(n, child_seed(cfg.master_seed, "sup-ratio", i)) for i, n in enumerate(grid)]
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            rows = list(pool.map(lambda j: estimate_sup_ratio(cfg, *j), jobs))
    else:
        rows = [estimate_sup_ratio(cfg, *j) for j in jobs]
    return SupRatioReport(cfg, tuple(rows))


# --- diagnostics -----------------------------------------------------------


def wald_decay_diagnostic(theta0: PpcaParams, scale_grid, x, mode: str = "variance") -> list[dict]:
    """Log-density along a diverging path ``theta_t`` next to the bounds used to show it
    vanishes.

    ``mode="variance"`` keeps W and uses ``sigma2 = t * sigma2_1``; ``mode="joint"``
    uses ``(t W, t sigma2_1)``. Columns: ``log_density``; ``gaussian_bound`` =
    ``-(p/2) log 2pi - (1/2) log det``, the density with the quadratic form
    dropped; ``logdet_bound`` = ``-(1/2) sum_j log(sigma2 + lambda_j)``; and
    ``spectral_bound`` = ``-(1/2) log(sigma2 + lambda_max(W W^T))``, which
    dominates ``logdet_bound`` once every ``sigma2 + lambda_j >= 1``.
    """
    grid = np.asarray(scale_grid, dtype=float)
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise InvalidInputError("scale_grid must be positive and strictly ascending")
    if mode not in ("variance", "joint"):
        raise InvalidInputError(f"unknown mode {mode!r}")
    rows = []
    for t in grid:
        t = float(t)
        w = theta0.w * t if mode == "joint" else theta0.w
        theta = PpcaParams(w, theta0.sigma2 * t)
        logdet = lowrank_logdet(theta.w, theta.sigma2)
        rows.append(
            {
                "t": t,
                "sigma2": theta.sigma2,
                "log_density": float(log_density(x, theta)),
                "gaussian_bound": -0.5 * theta.p * LOG_2PI - 0.5 * logdet,
                "logdet_bound": -0.5 * logdet,
                "spectral_bound": -0.5 * math.log(theta.sigma2 + lambda_max_wwt(theta.w)),
            }
        )
    return rows


def _rotation(q: int, angle: float) -> np.ndarray:
    r = np.eye(q)
    if q == 1:
        r[0, 0] = -1.0
    else:
        c, s = math.cos(angle), math.sin(angle)
        r[:2, :2] = [[c, -s], [s, c]]
    return r


def continuity_diagnostic(
    theta0: PpcaParams, i_max: int, x, seed: int = 0, rotate: bool = True, num: int = 60
) -> list[dict]:
    """Sequence ``theta_i = ((W0 + E / i) R_i, sigma0^2 + 1/i)`` on a geometric grid of i.

    ``R_i`` alternates between rotations by pi/2 and pi in the first coordinate
    plane, so theta_i has no limit in the parameter space while its distance to
    C vanishes. O(1) has no such sequence, so for q = 1 the fixed reflection -1
    is used. ``E`` is a fixed Gaussian perturbation from ``seed``, applied before
    the rotation so that the distance to C depends on i only.
    ``rotate=False`` uses ``R_i = I``.
    """
    if i_max < 2:
        raise InvalidInputError(f"i_max must be >= 2, got {i_max}")
    ident = IdentifiedSet(theta0)
    e = make_rng(seed).standard_normal(theta0.w.shape)
    grid = np.unique(np.round(np.logspace(0, math.log10(i_max), num)).astype(int))
    f0 = float(log_density(x, theta0))
    rows = []
    for k, i in enumerate(grid):
        if rotate:
            r = _rotation(theta0.q, math.pi / 2 if k % 2 == 0 else math.pi)
        else:
            r = np.eye(theta0.q)
        theta_i = PpcaParams((theta0.w + e / i) @ r, theta0.sigma2 + 1.0 / i)
        fi = float(log_density(x, theta_i))
        rows.append(
            {
                "i": int(i),
                "distance_to_C": distance_to_C(theta_i, ident),
                "param_distance": param_distance(theta_i, theta0),
                "density_gap": abs(math.exp(fi) - math.exp(f0)),
                "log_density_gap": abs(fi - f0),
            }
        )
    return rows


def weak_lln_diagnostic(cfg: ExperimentConfig, theta: PpcaParams, n_grid: Sequence[int]) -> list[dict]:
    """Running mean of ``log f(x_i; theta) - log f(x_i; theta0)`` over one m-dependent
    sample, with the variance of the mean from autocovariances up to lag m
    (exact for m-dependent sequences).
    """
    if cfg.generator.kind != "m_dependent":
        raise ConfigurationError("weak-law diagnostic needs an m_dependent generator")
    theta0 = cfg.theta0()
    m = cfg.generator.m
    grid = sorted(int(n) for n in n_grid)
    data = sample(theta0, grid[-1], cfg.generator, child_seed(cfg.master_seed, "weak-lln"))
    r = np.asarray(log_density(data.rows, theta) - log_density(data.rows, theta0))
    rows = []
    for n in grid:
        seg = r[:n]
        mean = float(seg.mean())
        c = seg - mean
        lrv = float(c @ c) / n
        for k in range(1, min(m, n - 1) + 1):
            lrv += 2.0 * float(c[:-k] @ c[k:]) / n
        var_mean = max(lrv, 0.0) / n
        rows.append({"n": n, "mean": mean, "var_of_mean": var_mean, "stderr": math.sqrt(var_mean)})
    return rows


def empirical_covariance_error(theta: PpcaParams, data) -> float:
    """Relative Frobenius error of the sample covariance against the model covariance."""
    cov = assemble_covariance(theta).entries
    return float(np.linalg.norm(sample_covariance(data).entries - cov) / np.linalg.norm(cov))
