"""Dense linear-algebra kernels used throughout the package.

Everything here is a pure function of its inputs. Low-rank-plus-diagonal
covariances ``W W^T + s I`` are handled through the matrix determinant lemma
and the Woodbury identity so that only ``q x q`` systems are ever factorized.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import DomainError, InvalidInputError, NumericalError

ORTHONORMALITY_TOL = 1e-10


def _finite_array(a, name="input", ndim=None):
    arr = np.asarray(a, dtype=float)
    if ndim is not None and arr.ndim != ndim:
        raise InvalidInputError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def _frozen(arr):
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SymMatrix:
    """A real symmetric matrix.

    The constructor symmetrizes its input as ``(A + A^T) / 2``, which is exactly
    symmetric in floating point because addition commutes.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = _finite_array(self.entries, "SymMatrix entries", ndim=2)
        if a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise InvalidInputError(f"SymMatrix needs a non-empty square array, got {a.shape}")
        object.__setattr__(self, "entries", _frozen(0.5 * (a + a.T)))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Eigenvalues in descending order with paired orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _frozen(self.eigenvalues))
        object.__setattr__(self, "eigenvectors", _frozen(self.eigenvectors))

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.T


def _as_sym(m) -> SymMatrix:
    return m if isinstance(m, SymMatrix) else SymMatrix(m)


def sym_eig(m) -> Spectrum:
    """Full descending eigendecomposition of a symmetric matrix.

    Sign convention: in every eigenvector the first entry of largest absolute
    value is made nonnegative. Equal eigenvalues keep the solver's column order
    (stable sort), so the output is a deterministic function of the input.

    Raises
    ------
    InvalidInputError
        If the matrix has non-finite entries.
    NumericalError
        If the returned eigenvectors fail the orthonormality check.
    """
    a = _as_sym(m).entries
    vals, vecs = np.linalg.eigh(a)
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    pivots = np.argmax(np.abs(vecs), axis=0)
    signs = np.where(vecs[pivots, np.arange(vecs.shape[1])] < 0, -1.0, 1.0)
    vecs = vecs * signs
    gram_err = np.max(np.abs(vecs.T @ vecs - np.eye(vecs.shape[1])))
    if gram_err > ORTHONORMALITY_TOL:
        raise NumericalError(f"eigenvectors not orthonormal (max deviation {gram_err:.3e})")
    return Spectrum(vals, vecs)


def svd_singular_values(a) -> np.ndarray:
    """Singular values of ``a`` in descending order."""
    arr = _finite_array(a, "matrix", ndim=2)
    if arr.size == 0:
        return np.zeros(0)
    return np.linalg.svd(arr, compute_uv=False)


def _check_lowrank(w, sigma2):
    w = _finite_array(w, "W", ndim=2)
    if not np.isfinite(sigma2):
        raise InvalidInputError("sigma2 must be finite")
    if sigma2 <= 0:
        raise DomainError(f"sigma2 must be positive, got {sigma2}")
    return w, float(sigma2)


def _inner_cholesky(w, sigma2):
    # M = sigma2 I_q + W^T W is SPD whenever sigma2 > 0.
    inner = sigma2 * np.eye(w.shape[1]) + w.T @ w
    try:
        return la.cho_factor(inner, lower=True)
    except la.LinAlgError as exc:  # pragma: no cover - excluded by sigma2 > 0
        raise NumericalError("inner q x q system is singular") from exc


def lowrank_logdet(w, sigma2: float) -> float:
    """``log det(W W^T + sigma2 I_p)`` via the matrix determinant lemma.

    ``log det(W W^T + s I_p) = p log s + log det(I_q + W^T W / s)``.
    """
    w, sigma2 = _check_lowrank(w, sigma2)
    p, q = w.shape
    if q == 0:
        return p * np.log(sigma2)
    small = np.eye(q) + (w.T @ w) / sigma2
    chol = la.cholesky(small, lower=True)
    return float(p * np.log(sigma2) + 2.0 * np.sum(np.log(np.diag(chol))))


def lowrank_quadform(w, sigma2: float, x) -> np.ndarray | float:
    """``x^T (W W^T + sigma2 I_p)^{-1} x`` via the Woodbury identity.

    ``x`` may be a single p-vector or an (n, p) array of row vectors; the
    result is a float or a length-n array respectively, clipped at zero.
    """
    w, sigma2 = _check_lowrank(w, sigma2)
    x = _finite_array(x, "x")
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    if xs.shape[1] != w.shape[0]:
        raise InvalidInputError(f"x has width {xs.shape[1]}, expected {w.shape[0]}")
    sq = np.einsum("ij,ij->i", xs, xs)
    if w.shape[1] == 0:
        out = sq / sigma2
    else:
        proj = xs @ w
        solved = la.cho_solve(_inner_cholesky(w, sigma2), proj.T).T
        out = (sq - np.einsum("ij,ij->i", proj, solved)) / sigma2
    out = np.maximum(out, 0.0)
    return float(out[0]) if single else out


def dense_logdet(cov) -> float:
    """Test oracle: log-determinant of a dense SPD matrix."""
    sign, logdet = np.linalg.slogdet(np.asarray(cov, dtype=float))
    if sign <= 0:
        raise NumericalError("matrix is not positive definite")
    return float(logdet)


def dense_quadform(cov, x) -> np.ndarray | float:
    """Test oracle: ``x^T cov^{-1} x`` by a dense solve."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    out = np.einsum("ij,ij->i", xs, np.linalg.solve(np.asarray(cov, dtype=float), xs.T).T)
    return float(out[0]) if single else out


def lambda_max_wwt(w) -> float:
    """Largest eigenvalue of ``W W^T``, i.e. the square of the usual spectral norm.

    This is the quantity the consistency proofs call the "spectral norm" of W.
    """
    s = svd_singular_values(w)
    return float(s[0] ** 2) if s.size else 0.0


def spectral_norm(w) -> float:
    """Conventional operator 2-norm (largest singular value)."""
    s = svd_singular_values(w)
    return float(s[0]) if s.size else 0.0
