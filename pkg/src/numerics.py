"""Dense complex linear-algebra kernels shared by the precoders, metrics and
   link simulation. Every function accepts numpy "stacks": leading dimensions
   are treated as independent instances of the same problem."""

from typing import Callable, Tuple

import numpy as np
from scipy.linalg import solve_triangular

DEFAULT_EIG_TOL = 1e-12
DEFAULT_EIG_MAX_ITER = 10000

_HERMITIAN_TOL = 1e-12
_PIVOT_TOL = 1e-14
_DEGENERATE_TOL = 1e-14
_ZERO_OPERATOR_TOL = 1e-300


# EXCEPTIONS
class NumericsException(Exception):
    """Numerics module superexception, for catching others"""
    pass


class NonFiniteEntries(NumericsException, ValueError):
    """Thrown when a matrix or vector contains NaN or Inf entries."""
    pass


class NotHermitian(NumericsException):
    """Thrown when a matrix handed to a Hermitian solver is not Hermitian
       within tolerance. Message is the largest asymmetry found."""
    pass


class NotPositiveDefinite(NumericsException):
    """Thrown when a Cholesky factorization meets a non-positive or
       negligible pivot."""
    pass


class DegenerateUpdate(NumericsException):
    """Thrown when the rank-one update denominator 1 + x^H A^-1 x vanishes."""
    pass


class NoConvergence(NumericsException):
    """Thrown when the dominant-eigenvector iteration runs out of iterations.
       Message is the iteration cap."""

    def __init__(self, max_iter: int):
        super().__init__(max_iter)
        self.max_iter = max_iter


class ZeroOperator(NumericsException):
    """Thrown when the operator maps the start vector to (numerically) zero."""
    pass


# CONSTRUCTION AND CHECKS
def as_complex_array(values, min_ndim: int = 1) -> np.ndarray:
    """Converts `values` to a complex128 array and checks that every entry is
       finite."""
    array = np.asarray(values, dtype=np.complex128)
    if array.ndim < min_ndim:
        raise ValueError(f"expected at least {min_ndim} dimension(s), got {array.ndim}")
    if not np.all(np.isfinite(array)):
        raise NonFiniteEntries("array contains NaN or Inf entries")
    return array


def as_scalar(value):
    """Unwraps 0-d arrays so that single-instance calls return plain numbers."""
    value = np.asarray(value)
    return value.item() if value.ndim == 0 else value


def hermitian(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def inner(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Computes u^H v over the last axis."""
    return np.sum(np.conj(u) * v, axis=-1)


def norm(v: np.ndarray) -> np.ndarray:
    """Euclidean norm over the last axis."""
    return np.linalg.norm(v, axis=-1)


def normalize(v: np.ndarray) -> np.ndarray:
    """Scales vectors (last axis) to unit norm."""
    return v / norm(v)[..., np.newaxis]


def gram(m: np.ndarray) -> np.ndarray:
    """Returns m m^H, symmetrized so that it is exactly Hermitian."""
    g = m @ hermitian(m)
    return 0.5 * (g + hermitian(g))


def regularized_gram(m: np.ndarray, shift) -> np.ndarray:
    """Returns shift * I + m m^H for a (stack of) n x c matrices. `shift` is a
       scalar or an array broadcasting against the leading dimensions."""
    n = m.shape[-2]
    shift = np.asarray(shift, dtype=float)[..., np.newaxis, np.newaxis]
    return shift * np.eye(n) + gram(m)


def _check_hermitian(a: np.ndarray):
    # Relative to the largest entry, never tighter than the absolute 1e-12.
    if a.shape[-1] != a.shape[-2]:
        raise ValueError(f"matrix must be square, got shape {a.shape[-2:]}")
    asymmetry = np.max(np.abs(a - hermitian(a)), initial=0.0)
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    if asymmetry > _HERMITIAN_TOL * scale:
        raise NotHermitian(f"max |A_ij - conj(A_ji)| = {asymmetry:.3e}")


# OPERATIONS
def cholesky(a) -> np.ndarray:
    """Lower Cholesky factor of a (stack of) Hermitian positive-definite
       matrices. Raises NotHermitian or NotPositiveDefinite."""
    a = as_complex_array(a, min_ndim=2)
    _check_hermitian(a)
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as e:
        raise NotPositiveDefinite(str(e))

    n = a.shape[-1]
    threshold = _PIVOT_TOL * np.real(np.trace(a, axis1=-2, axis2=-1)) / n
    pivots = np.real(np.diagonal(lower, axis1=-2, axis2=-1)) ** 2
    if np.any(pivots <= threshold[..., np.newaxis]):
        raise NotPositiveDefinite(
            f"pivot {float(np.min(pivots)):.3e} below 1e-14 * trace(A)/n")
    return lower


def _triangular_solve(lower: np.ndarray, b: np.ndarray, trans: str) -> np.ndarray:
    """Solves L y = b (trans 'N') or L^H y = b (trans 'C') for matrix stacks
       (..., n, m), broadcasting the leading dimensions."""
    if lower.ndim == 2 and b.ndim == 2:
        return solve_triangular(lower, b, trans=trans, lower=True, check_finite=False)
    batch = np.broadcast_shapes(lower.shape[:-2], b.shape[:-2])
    lowers = np.broadcast_to(lower, batch + lower.shape[-2:]).reshape((-1,) + lower.shape[-2:])
    rhs = np.broadcast_to(b, batch + b.shape[-2:]).reshape((-1,) + b.shape[-2:])
    out = np.empty(rhs.shape, dtype=np.complex128)
    for i in range(out.shape[0]):
        out[i] = solve_triangular(lowers[i], rhs[i], trans=trans, lower=True, check_finite=False)
    return out.reshape(batch + b.shape[-2:])


def _as_matrix_stack(lower: np.ndarray, b) -> Tuple[np.ndarray, bool]:
    b = np.asarray(b, dtype=np.complex128)
    vector = b.ndim == lower.ndim - 1
    return (b[..., np.newaxis] if vector else b), vector


def whiten(lower: np.ndarray, b) -> np.ndarray:
    """Returns L^-1 b for the lower factor L of A = L L^H, so that
       ||L^-1 b||^2 = b^H A^-1 b. `b` is a vector or matrix stack."""
    b, vector = _as_matrix_stack(lower, b)
    y = _triangular_solve(lower, b, 'N')
    return y[..., 0] if vector else y


def cholesky_solve(lower: np.ndarray, b) -> np.ndarray:
    """Solves (L L^H) x = b given the lower factor L. `b` is a vector stack
       (..., n) or a matrix stack (..., n, m)."""
    b, vector = _as_matrix_stack(lower, b)
    x = _triangular_solve(lower, _triangular_solve(lower, b, 'N'), 'C')
    return x[..., 0] if vector else x


def hpd_solve(a, b) -> np.ndarray:
    """Solves A x = b for Hermitian positive-definite A.

       `a` has shape (..., n, n); `b` has shape (..., n) for a vector
       right-hand side or (..., n, m) for several. The result satisfies
       ||A x - b|| <= 1e-10 (||A||_F ||x|| + ||b||).

       A counts as Hermitian when max |A_ij - conj(A_ji)| <= 1e-12 max(1, max |A_ij|):
       the absolute bound for entries up to 1, relative to the largest entry
       beyond that. NotHermitian is raised otherwise."""
    b = as_complex_array(b)
    return cholesky_solve(cholesky(a), b)


def rank_one_update_solve(
        solve_a: Callable[[np.ndarray], np.ndarray],
        x) -> Tuple[np.ndarray, np.ndarray]:
    """Solves (A + x x^H) y = x from a solver for A alone.

       With u = A^-1 x the matrix inverse identity collapses to
       y = u / (1 + x^H u), so y is collinear with u by construction.
       Returns (y, scale) with scale = 1 / (1 + x^H u)."""
    x = as_complex_array(x)
    u = solve_a(x)
    denominator = 1.0 + inner(x, u)
    if np.any(np.abs(denominator) <= _DEGENERATE_TOL):
        raise DegenerateUpdate(f"|1 + x^H A^-1 x| = {float(np.min(np.abs(denominator))):.3e}")

    # x^H A^-1 x is real for Hermitian A; drop the rounding residue.
    scale = 1.0 / np.real(denominator)
    return u * scale[..., np.newaxis], scale


def dominant_eigvec(
        apply: Callable[[np.ndarray], np.ndarray],
        dim: int,
        start,
        tol: float = DEFAULT_EIG_TOL,
        max_iter: int = DEFAULT_EIG_MAX_ITER) -> Tuple[np.ndarray, np.ndarray]:
    """Power iteration for the dominant eigenpair of the operator `apply`.

       Iterates from `start` until ||M v - lambda v|| <= tol |lambda| for
       every stacked instance, where lambda = v^H M v is the Rayleigh
       quotient of the current unit vector v. Returns (v, lambda).

       For a rank-one operator this terminates on the second application."""
    if dim < 1:
        raise ValueError("dim must be at least 1")
    start = as_complex_array(start)
    if start.shape[-1] != dim:
        raise ValueError(f"start vector has length {start.shape[-1]}, expected {dim}")

    start_norm = norm(start)
    if np.any(start_norm == 0.0):
        raise ZeroOperator("start vector is zero")
    v = start / start_norm[..., np.newaxis]
    for iteration in range(max_iter):
        image = apply(v)
        image_norm = norm(image)
        # ||M start|| = ||M v|| ||start||
        if iteration == 0 and np.any(image_norm * start_norm <= _ZERO_OPERATOR_TOL):
            raise ZeroOperator("operator annihilates the start vector")

        eigenvalue = inner(v, image)
        residual = norm(image - eigenvalue[..., np.newaxis] * v)
        if np.all(residual <= tol * np.abs(eigenvalue)):
            return v, eigenvalue
        v = image / image_norm[..., np.newaxis]

    raise NoConvergence(max_iter)
