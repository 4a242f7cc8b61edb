"""Closed-form maximum likelihood for PPCA, plus a brute numerical cross-check.

The closed form takes the top-q eigenpairs of the sample covariance
``S = X^T X / n``: ``sigma2_hat`` is the mean of the trailing ``p - q``
eigenvalues and column j of ``W_hat`` is ``u_j sqrt(delta_j - sigma2_hat)``,
with the rotation fixed to the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.optimize import Bounds, minimize

from .errors import DegenerateDataError, InvalidInputError, OracleConvergenceError
from .model import LOG_2PI, Dataset, PpcaParams, _data_rows
from .numerics import Spectrum, SymMatrix, lowrank_logdet, sym_eig
from .rng import child_seed, make_rng

_EPS = np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class FitResult:
    theta_hat: PpcaParams
    spectrum: Spectrum
    clamped: tuple[int, ...]
    loglik: float
    n: int

    def covariance(self) -> np.ndarray:
        w = self.theta_hat.w
        return w @ w.T + self.theta_hat.sigma2 * np.eye(w.shape[0])

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "q": self.theta_hat.q,
            "theta_hat": self.theta_hat.to_dict(),
            "spectrum": {
                "eigenvalues": self.spectrum.eigenvalues.tolist(),
                "eigenvectors": self.spectrum.eigenvectors.tolist(),
            },
            "clamped": list(self.clamped),
            "loglik": self.loglik,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        spec = d["spectrum"]
        return cls(
            theta_hat=PpcaParams.from_dict(d["theta_hat"]),
            spectrum=Spectrum(np.asarray(spec["eigenvalues"]), np.asarray(spec["eigenvectors"])),
            clamped=tuple(int(j) for j in d["clamped"]),
            loglik=float(d["loglik"]),
            n=int(d["n"]),
        )


def sample_covariance(data) -> SymMatrix:
    """``(1/n) sum_i x_i x_i^T`` (divisor n; the data are taken as centered)."""
    rows = _data_rows(data)
    return SymMatrix(rows.T @ rows / rows.shape[0])


def loglik_from_cov(s, n: int, theta: PpcaParams) -> float:
    """Total log-likelihood of n centered points with sample covariance ``s``.

    Uses ``-n/2 (p log 2pi + log det C + tr(C^{-1} S))`` with the Woodbury form of
    ``C^{-1}``; this equals the sum of per-point log-densities.
    """
    s = np.asarray(s, dtype=float)
    w, s2 = theta.w, theta.sigma2
    inner = la.cho_factor(s2 * np.eye(theta.q) + w.T @ w, lower=True)
    trace_term = (np.trace(s) - np.trace(la.cho_solve(inner, w.T @ s @ w))) / s2
    return float(-0.5 * n * (theta.p * LOG_2PI + lowrank_logdet(w, s2) + trace_term))


def mle_fit(data, q: int) -> FitResult:
    """Closed-form PPCA maximum-likelihood fit of rank ``q``.

    Columns whose eigenvalue does not exceed ``sigma2_hat`` (up to rounding) are
    set to zero and listed in ``clamped``.

    Raises
    ------
    InvalidInputError
        If ``q`` is not in ``[1, p)``.
    DegenerateDataError
        If the trailing eigenvalues average to (numerically) zero.
    """
    rows = _data_rows(data)
    n, p = rows.shape
    if not (1 <= q < p):
        raise InvalidInputError(f"need 1 <= q < p, got q={q}, p={p}")
    s = sample_covariance(rows)
    spec = sym_eig(s)
    delta = spec.eigenvalues
    sigma2 = float(np.mean(delta[q:]))
    scale = max(float(delta[0]), 0.0)
    if not sigma2 > p * _EPS * scale or sigma2 <= 0:
        raise DegenerateDataError(
            f"sigma2_hat = {sigma2:.3e} is not positive: trailing eigenvalues vanish (n={n}, q={q})"
        )
    gap = delta[:q] - sigma2
    tol = 8 * p * _EPS * max(scale, sigma2)
    clamped = tuple(int(j) for j in np.flatnonzero(gap <= tol))
    gap = np.where(gap <= tol, 0.0, gap)
    w = spec.eigenvectors[:, :q] * np.sqrt(gap)
    theta = PpcaParams(w, sigma2)
    return FitResult(theta, spec, clamped, loglik_from_cov(s.entries, n, theta), n)


@dataclass(frozen=True, eq=False)
class OracleFit:
    theta: PpcaParams
    loglik: float
    converged: int
    restarts: int
    history: list = field(default_factory=list, repr=False)


def _dense_neg_mean_loglik(u, s_root, p, q):
    w = u[:-1].reshape(p, q)
    cov = w @ w.T + np.exp(u[-1]) * np.eye(p)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        return np.inf
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    half = la.solve_triangular(chol, s_root, lower=True, check_finite=False)
    return 0.5 * (p * LOG_2PI + logdet + np.sum(half * half))


def numerical_mle_oracle(
    data, q: int, restarts: int = 20, seed: int = 0, maxfev: int = 40_000
) -> OracleFit:
    """Multistart Nelder-Mead maximization of the log-likelihood over ``(vec W, log sigma2)``.

    Shares nothing with :func:`mle_fit` beyond the sample covariance: the
    objective is a dense Cholesky evaluation, and S enters only through a PSD
    square root used for the trace term.
    ``log sigma2`` is bounded to a box around the data scale so degenerate
    data (e.g. n = 1) stop at the boundary instead of diverging.

    Raises
    ------
    InvalidInputError
        Outside the desk-scale guard ``p <= 8, q <= 3`` or ``q >= p``.
    OracleConvergenceError
        If no restart converged within ``maxfev`` evaluations.
    """
    rows = _data_rows(data)
    n, p = rows.shape
    if not (1 <= q < p) or p > 8 or q > 3:
        raise InvalidInputError(f"oracle restricted to 1 <= q < p <= 8, q <= 3; got p={p}, q={q}")
    s = sample_covariance(rows).entries
    scale = float(np.trace(s)) / p
    if scale <= 0:
        scale = 1.0
    log_lo, log_hi = np.log(scale) - 25.0, np.log(scale) + 10.0
    # tr(C^{-1} S) = ||L^{-1} S^{1/2}||_F^2 with C = L L^T; S may be singular.
    vals, vecs = np.linalg.eigh(s)
    s_root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    args = (s_root, p, q)
    bounds = Bounds(np.r_[np.full(p * q, -np.inf), log_lo], np.r_[np.full(p * q, np.inf), log_hi])
    opts = {"maxfev": maxfev, "xatol": 1e-8, "fatol": 1e-12, "adaptive": True}

    results = []
    for r in range(restarts):
        rng = make_rng(child_seed(seed, "oracle", r))
        u0 = np.concatenate(
            [np.sqrt(scale) * rng.standard_normal(p * q), [np.log(scale) + 0.5 * rng.standard_normal()]]
        )
        u0[-1] = np.clip(u0[-1], log_lo, log_hi)
        res = minimize(_dense_neg_mean_loglik, u0, args=args, method="Nelder-Mead", bounds=bounds, options=opts)
        results.append([float(res.fun), res.x, bool(res.success)])

    best = int(np.argmin([f for f, _, _ in results]))
    # Restarting from the winner repairs premature simplex collapse.
    for _ in range(3):
        fun, x, _ = results[best]
        again = minimize(_dense_neg_mean_loglik, x, args=args, method="Nelder-Mead", bounds=bounds, options=opts)
        if again.fun <= fun:
            results[best] = [float(again.fun), again.x, results[best][2] or bool(again.success)]
        if fun - again.fun < 1e-13:
            break
    fun, x, _ = results[best]
    theta = PpcaParams(x[:-1].reshape(p, q), float(np.exp(x[-1])))
    loglik = -n * fun
    n_conv = sum(c for _, _, c in results)
    if n_conv == 0:
        raise OracleConvergenceError(
            f"no restart converged within {maxfev} evaluations", best=theta, best_loglik=loglik
        )
    return OracleFit(theta, loglik, n_conv, restarts, [-n * f for f, _, _ in results])
