"""Distances on the parameter space with the identified set collapsed to a point.

For ``p > q`` the set of parameters sharing the covariance of ``theta0`` is the
orbit ``C = {(W0 R, sigma0^2) : R orthogonal}``: a smaller noise variance would
require ``Sigma0 - s I`` to be a rank-q PSD matrix while it has full rank p, and a
larger one makes it indefinite. Distances to C therefore reduce to an orthogonal
Procrustes problem in W plus the variance offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .model import PpcaParams, assemble_covariance
from .numerics import SymMatrix, _finite_array


def _same_shape(a: PpcaParams, b: PpcaParams):
    if a.w.shape != b.w.shape:
        raise InvalidInputError(f"parameter shapes differ: {a.w.shape} vs {b.w.shape}")


def param_distance(a: PpcaParams, b: PpcaParams) -> float:
    """Euclidean distance between ``(vec W, sigma2)`` coordinates."""
    _same_shape(a, b)
    dw = np.linalg.norm(a.w - b.w)
    return float(math.hypot(dw, a.sigma2 - b.sigma2))


def procrustes_rotation(w, w0) -> np.ndarray:
    """Orthogonal ``R`` (reflections allowed) minimizing ``||W - W0 R||_F``."""
    u, _, vt = np.linalg.svd(w0.T @ w)
    return u @ vt


def procrustes_distance(w, w0) -> float:
    """``min_R ||W - W0 R||_F`` over the orthogonal group O(q).

    The minimum equals ``sqrt(||W||^2 + ||W0||^2 - 2 * nuclear(W0^T W))``; it is
    evaluated as the residual at the optimal rotation, which avoids the
    cancellation that expression suffers near the orbit.
    """
    w = _finite_array(w, "W", ndim=2)
    w0 = _finite_array(w0, "W0", ndim=2)
    if w.shape != w0.shape:
        raise InvalidInputError(f"shapes differ: {w.shape} vs {w0.shape}")
    return float(np.linalg.norm(w - w0 @ procrustes_rotation(w, w0)))


@dataclass(frozen=True, eq=False)
class IdentifiedSet:
    """All parameters whose covariance equals that of ``theta0``."""

    theta0: PpcaParams
    sigma0_cov: SymMatrix = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "sigma0_cov", assemble_covariance(self.theta0))

    def nearest(self, theta: PpcaParams) -> PpcaParams:
        """Closest point of the set: ``(W0 R*, sigma0^2)``."""
        _same_shape(theta, self.theta0)
        r = procrustes_rotation(theta.w, self.theta0.w)
        return PpcaParams(self.theta0.w @ r, self.theta0.sigma2)

    def contains(self, theta: PpcaParams, atol: float = 1e-9) -> bool:
        cov = assemble_covariance(theta).entries
        return bool(np.max(np.abs(cov - self.sigma0_cov.entries)) <= atol)


def distance_to_C(theta: PpcaParams, c: IdentifiedSet) -> float:
    """``inf_{phi in C} d(theta, phi)``."""
    _same_shape(theta, c.theta0)
    d_w = procrustes_distance(theta.w, c.theta0.w)
    return float(math.hypot(d_w, theta.sigma2 - c.theta0.sigma2))


@dataclass(frozen=True, eq=False)
class QuotientPoint:
    theta: PpcaParams
    context: IdentifiedSet

    def __post_init__(self):
        _same_shape(self.theta, self.context.theta0)


def _same_context(a: QuotientPoint, b: QuotientPoint) -> bool:
    if a.context is b.context:
        return True
    return a.context.theta0 == b.context.theta0


def quotient_distance(a: QuotientPoint, b: QuotientPoint) -> float:
    """``min(d(a, b), d(a, C) + d(b, C))``: the metric with C collapsed to one point."""
    if not _same_context(a, b):
        raise InvalidInputError("quotient points refer to different identified sets")
    direct = param_distance(a.theta, b.theta)
    via_c = distance_to_C(a.theta, a.context) + distance_to_C(b.theta, b.context)
    return min(direct, via_c)


# --- counterexamples -------------------------------------------------------


def ray_chain_bound(x, y, k: int) -> float:
    """Length of the chain ``x ~ x/k -> y/k ~ y`` under the same-ray equivalence.

    Scaling along a ray stays in the same class, so ``||x - y|| / k`` bounds the
    chain pseudometric between the classes of x and y, and it tends to 0.
    """
    if isinstance(k, bool) or int(k) != k or k < 1:
        raise InvalidInputError(f"k must be a positive integer, got {k!r}")
    x = _finite_array(x, "x", ndim=1)
    y = _finite_array(y, "y", ndim=1)
    for name, v in (("x", x), ("y", y)):
        if v.shape != (2,) or np.any(v < 0) or not np.any(v > 0):
            raise InvalidInputError(f"{name} must be a nonzero 2-vector with nonnegative entries")
    return math.hypot(x[0] - y[0], x[1] - y[1]) / k


def ray_chain_table(x, y, ks) -> list[dict]:
    """Rows ``(k, distance, value)``: the chain bound and the angle between the rays.

    The angle is the distance of the classes in the quotient topology (arc on the
    unit circle); it stays fixed while the chain bound collapses.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    angle = abs(math.atan2(x[1], x[0]) - math.atan2(y[1], y[0]))
    return [{"k": int(k), "distance": ray_chain_bound(x, y, int(k)), "value": angle} for k in ks]


# Intermediate classes used when bounding the chain pseudometric; the chain
# length through class m increases with m^-1, so large m dominate the infimum.
_CHAIN_M = np.unique(np.round(np.logspace(np.log10(2.0), 12.0, 400)))


def _lift_points(n):
    return np.array([1.0 / n, 0.0]), np.array([1.0 / n, 1.0 - 1.0 / n]), np.array([1.0 / n, 1.0])


def lift_discontinuity_sequence(n_max: int) -> list[dict]:
    """Table for the construction ``a_n ~ b_n`` with ``g(c_n) = 1`` and g = 0 elsewhere.

    Columns per ``n = 2..n_max``:

    ``same_index_chain``
        ``min(d(c_n, 0), d(c_n, b_n) + d(a_n, 0))``, the chain through the
        n-th class only (equals ``2/n``).
    ``distance``
        The chain pseudometric from ``[c_n]`` to the origin, minimized over the
        direct link and all one-class chains ``c_n -> b_m ~ a_m -> 0`` and
        ``c_n -> a_m ~ b_m -> 0``. Longer chains must cross between an
        ``a``-point and a ``b``-point of different classes, which costs at least
        ``1/2``. The value tends to ``1/n``.
    ``value``
        The lifted function at ``[c_n]``, identically 1 although ``g(0) = 0``.
    """
    if n_max < 2:
        raise InvalidInputError(f"n_max must be >= 2, got {n_max}")
    origin = np.zeros(2)
    m = _CHAIN_M
    a_m = np.column_stack([1.0 / m, np.zeros_like(m)])
    b_m = np.column_stack([1.0 / m, 1.0 - 1.0 / m])
    rows = []
    for n in range(2, n_max + 1):
        a_n, b_n, c_n = _lift_points(n)
        direct = float(np.linalg.norm(c_n - origin))
        same = min(direct, float(np.linalg.norm(c_n - b_n) + np.linalg.norm(a_n - origin)))
        via_b = np.linalg.norm(c_n - b_m, axis=1) + np.linalg.norm(a_m - origin, axis=1)
        via_a = np.linalg.norm(c_n - a_m, axis=1) + np.linalg.norm(b_m - origin, axis=1)
        chain = min(same, float(via_b.min()), float(via_a.min()))
        g_tilde = 1.0  # g(c_n) = 1 and c_n is alone in its class
        rows.append({"n": n, "distance": chain, "same_index_chain": same, "value": g_tilde})
    return rows
