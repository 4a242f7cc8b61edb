"""The PPCA generative model ``x = W z + eps``.

Parameters are stored as ``(W, sigma2)``; the marginal law of one observation is
``N(0, W W^T + sigma2 I_p)``. Sampling supports i.i.d. draws and an
m-dependent moving-average construction whose marginals are exactly the model's.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidInputError
from .numerics import (
    SymMatrix,
    _finite_array,
    _frozen,
    dense_logdet,
    dense_quadform,
    lowrank_logdet,
    lowrank_quadform,
)
from .rng import make_rng

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class PpcaParams:
    """A point ``(W, sigma2)`` of the parameter space, with ``W`` of shape (p, q), p > q >= 1."""

    w: np.ndarray
    sigma2: float

    def __post_init__(self):
        w = _finite_array(self.w, "W", ndim=2)
        p, q = w.shape
        if not (p > q >= 1):
            raise InvalidInputError(f"need p > q >= 1, got p={p}, q={q}")
        s = float(self.sigma2)
        if not np.isfinite(s) or s <= 0:
            raise InvalidInputError(f"sigma2 must be positive and finite, got {self.sigma2}")
        object.__setattr__(self, "w", _frozen(w))
        object.__setattr__(self, "sigma2", s)

    @property
    def p(self) -> int:
        return self.w.shape[0]

    @property
    def q(self) -> int:
        return self.w.shape[1]

    def __eq__(self, other):
        if not isinstance(other, PpcaParams):
            return NotImplemented
        return self.sigma2 == other.sigma2 and np.array_equal(self.w, other.w)

    __hash__ = None

    def rotated(self, r) -> "PpcaParams":
        """The rotational translate ``(W R, sigma2)``."""
        return PpcaParams(self.w @ np.asarray(r, dtype=float), self.sigma2)

    def to_dict(self) -> dict:
        return {"w": self.w.tolist(), "sigma2": self.sigma2}

    @classmethod
    def from_dict(cls, d: dict) -> "PpcaParams":
        try:
            return cls(np.asarray(d["w"], dtype=float), float(d["sigma2"]))
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"bad parameter record: {exc}") from exc


def random_params(p: int, q: int, seed: int, scale: float = 1.0, sigma2: float = 1.0) -> PpcaParams:
    """Gaussian loading matrix with entries ``N(0, scale^2)`` and the given noise variance."""
    rng = make_rng(seed)
    return PpcaParams(scale * rng.standard_normal((p, q)), sigma2)


@dataclass(frozen=True)
class GeneratorSpec:
    """Sampling scheme: ``iid`` or ``m_dependent`` with window ``m``."""

    kind: str = "iid"
    m: int = 0

    def __post_init__(self):
        if self.kind not in ("iid", "m_dependent"):
            raise InvalidInputError(f"unknown generator kind {self.kind!r}")
        if self.m < 0 or (self.kind == "iid" and self.m != 0):
            raise InvalidInputError(f"invalid window m={self.m} for generator {self.kind}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "m": self.m} if self.kind == "m_dependent" else {"kind": "iid"}

    @classmethod
    def from_dict(cls, d) -> "GeneratorSpec":
        if isinstance(d, str):
            d = {"kind": d}
        return cls(d.get("kind", "iid"), int(d.get("m", 0)))

    def __str__(self):
        return "iid" if self.kind == "iid" else f"m_dependent({self.m})"


IID = GeneratorSpec()


@dataclass(frozen=True, eq=False)
class Dataset:
    rows: np.ndarray
    generator: GeneratorSpec = IID
    seed: Optional[int] = None
    truth: Optional[PpcaParams] = None

    def __post_init__(self):
        rows = _finite_array(self.rows, "dataset rows", ndim=2)
        if rows.shape[0] < 1:
            raise InvalidInputError("dataset must have at least one row")
        if self.truth is not None and self.truth.p != rows.shape[1]:
            raise InvalidInputError(
                f"truth has p={self.truth.p} but rows have width {rows.shape[1]}"
            )
        object.__setattr__(self, "rows", _frozen(rows))

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]


@dataclass(frozen=True)
class LogLikSummary:
    n: int
    total_loglik: float
    per_point: Optional[np.ndarray] = field(default=None, compare=False)


def assemble_covariance(theta: PpcaParams) -> SymMatrix:
    """``W W^T + sigma2 I_p``."""
    return SymMatrix(theta.w @ theta.w.T + theta.sigma2 * np.eye(theta.p))


def _rows_for(x, theta):
    x = _finite_array(x, "x")
    if x.shape[-1] != theta.p or x.ndim > 2:
        raise InvalidInputError(f"observation width {x.shape[-1]} does not match p={theta.p}")
    return x


def log_density(x, theta: PpcaParams, dense: bool = False):
    """Gaussian log-density ``log f(x; theta)`` of one p-vector or each row of an (n, p) array.

    ``dense=True`` evaluates through the full p x p covariance and exists only as a
    cross-check of the default low-rank path.
    """
    x = _rows_for(x, theta)
    if dense:
        cov = assemble_covariance(theta).entries
        logdet = dense_logdet(cov)
        quad = dense_quadform(cov, x)
    else:
        logdet = lowrank_logdet(theta.w, theta.sigma2)
        quad = lowrank_quadform(theta.w, theta.sigma2, x)
    return -0.5 * (theta.p * LOG_2PI + logdet) - 0.5 * quad


def _data_rows(data):
    return data.rows if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=float))


def log_likelihood(data, theta: PpcaParams, per_point: bool = False) -> LogLikSummary:
    rows = _data_rows(data)
    if rows.shape[1] != theta.p:
        raise InvalidInputError(f"data width {rows.shape[1]} does not match p={theta.p}")
    values = np.atleast_1d(log_density(rows, theta))
    return LogLikSummary(len(values), float(np.sum(values)), values if per_point else None)


def log_likelihood_ratio(data, theta: PpcaParams, theta0: PpcaParams) -> float:
    """``sum_i log f(x_i; theta) - log f(x_i; theta0)``."""
    if theta.p != theta0.p:
        raise InvalidInputError("theta and theta0 have different p")
    return log_likelihood(data, theta).total_loglik - log_likelihood(data, theta0).total_loglik


def _mix(innov: np.ndarray, n: int, m: int) -> np.ndarray:
    # Equal-weight window of m+1 i.i.d. rows, scaled to keep unit covariance.
    out = innov[:n].copy()
    for k in range(1, m + 1):
        out += innov[k : k + n]
    return out / np.sqrt(m + 1.0)


def _draw(theta: PpcaParams, n: int, m: int, seed: int) -> np.ndarray:
    if n < 1:
        raise InvalidInputError(f"n must be >= 1, got {n}")
    rng = make_rng(seed)
    z = rng.standard_normal((n + m, theta.q))
    eps = rng.standard_normal((n + m, theta.p))
    if m:
        z, eps = _mix(z, n, m), _mix(eps, n, m)
    return z @ theta.w.T + np.sqrt(theta.sigma2) * eps


def sample_iid(theta: PpcaParams, n: int, seed: int) -> Dataset:
    return Dataset(_draw(theta, n, 0, seed), IID, int(seed), theta)


def sample_dependent(theta: PpcaParams, n: int, m: int, seed: int) -> Dataset:
    """m-dependent sample: latent and noise sequences are moving averages of
    ``m + 1`` consecutive i.i.d. standard normals, normalized to unit covariance.

    Each ``x_i`` is marginally ``N(0, W W^T + sigma2 I)`` and ``x_i, x_j`` are
    independent when ``|i - j| > m``. With ``m = 0`` the draws coincide with
    :func:`sample_iid` for the same seed.
    """
    if m < 0:
        raise InvalidInputError(f"window m must be >= 0, got {m}")
    gen = GeneratorSpec("m_dependent", int(m))
    return Dataset(_draw(theta, n, int(m), seed), gen, int(seed), theta)


def sample(theta: PpcaParams, n: int, generator: GeneratorSpec, seed: int) -> Dataset:
    if generator.kind == "iid":
        return sample_iid(theta, n, seed)
    return sample_dependent(theta, n, generator.m, seed)
