"""ZF, RZF and SLNR precoding vectors for single-antenna users.

   The SLNR precoder is available through two independent paths: the closed
   form (sigma2 I + H_-k H_-k^H)^-1 h_k, and the dominant eigenvector of the
   rank-one operator (sigma2 I + H_-k H_-k^H)^-1 h_k h_k^H. With alpha = sigma2
   both coincide with the RZF direction up to a unit-modulus phase, which is
   what `alignment` measures."""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np

import numerics
from channel import ChannelSet, leave_one_out
from numerics import (NumericsException, NotPositiveDefinite, as_complex_array, as_scalar, cholesky,
                      cholesky_solve, gram, hermitian, hpd_solve, inner, norm, normalize,
                      regularized_gram, whiten)

MAX_CONDITION = 1e12
UNIT_NORM_TOL = 1e-9


# EXCEPTIONS
class PrecoderException(Exception):
    """Precoders module superexception, for catching others"""
    pass


class InvalidParameter(PrecoderException, ValueError):
    """Thrown when sigma2 or alpha is out of range."""
    pass


class DimensionMismatch(PrecoderException, ValueError):
    """Thrown when array dimensions do not agree, e.g. ZF with fewer
       antennas than users."""
    pass


class RankDeficient(PrecoderException):
    """Thrown when H^H H is too badly conditioned for zero-forcing."""
    pass


class SingularSystem(PrecoderException):
    """Thrown when unregularized RZF (alpha = 0) meets a singular H H^H."""
    pass


class NotUnitNorm(PrecoderException, ValueError):
    """Thrown when a vector expected to have unit norm does not."""
    pass


class UserPrecoderError(PrecoderException):
    """Wraps a failure while building user `user`'s precoder."""

    def __init__(self, user: int, cause: Exception):
        super().__init__(f"user {user}: {type(cause).__name__}: {cause}")
        self.user = user
        self.cause = cause

    def __reduce__(self):
        return type(self), (self.user, self.cause)


class Method(Enum):
    """Precoder constructions."""
    ZF = 'zf'
    RZF = 'rzf'
    SLNR_CLOSED = 'slnr'
    SLNR_EIG = 'slnr-eig'

    @classmethod
    def parse(cls, value: Union[str, 'Method']) -> 'Method':
        """Parses a method from its CLI name or enum name."""
        if isinstance(value, Method):
            return value
        key = value.strip().lower().replace('_', '-')
        aliases = {m.value: m for m in cls}
        aliases.update({m.name.lower().replace('_', '-'): m for m in cls})
        if key not in aliases:
            raise ValueError(f"unknown precoder method '{value}'")
        return aliases[key]


@dataclass(frozen=True)
class PrecoderMatrix(object):
    """K unit-norm precoding vectors stored as the columns of W (with the
       channel's leading dimensions, if any), plus the parameters that made
       them."""
    method: Method
    W: np.ndarray
    sigma2: float
    alpha: Optional[float] = None

    @property
    def k_users(self) -> int:
        return self.W.shape[-1]

    def column(self, k: int) -> np.ndarray:
        return self.W[..., :, k]


@dataclass(frozen=True)
class SlnrSolution(object):
    """The closed-form SLNR precoder of one user: the unit direction `w`, the
       squared norm `gamma` of the unnormalized direction, and the maximum
       SLNR `lambda_` = h_k^H (sigma2 I + H_-k H_-k^H)^-1 h_k."""
    w: np.ndarray
    gamma: np.ndarray
    lambda_: np.ndarray


# CHECKS
def _check_sigma2(sigma2):
    if not np.all(np.asarray(sigma2) > 0) or not np.all(np.isfinite(sigma2)):
        raise InvalidParameter(f"sigma2 must be positive and finite, got {sigma2}")


def _check_alpha(alpha):
    if not np.all(np.asarray(alpha) >= 0) or not np.all(np.isfinite(alpha)):
        raise InvalidParameter(f"alpha must be non-negative and finite, got {alpha}")


def check_unit_norm(w: np.ndarray, name: str):
    deviation = np.abs(norm(w) - 1.0)
    if np.any(deviation > UNIT_NORM_TOL):
        raise NotUnitNorm(f"{name} deviates from unit norm by {float(np.max(deviation)):.3e}")


# DIRECTIONS
def zf_direction(ch: ChannelSet, k: int) -> np.ndarray:
    """Column k of the pseudo-inverse H (H^H H)^-1, normalized.

       Nulls every other user: h_j^H w = 0 for j != k. With N_t = K this is
       collinear with (H H^H)^-1 h_k."""
    ch.column(k)  # index check
    if ch.nt < ch.k_users:
        raise DimensionMismatch(f"zero-forcing needs nt >= k_users, got nt={ch.nt}, k_users={ch.k_users}")

    H = ch.H
    G = gram(hermitian(H))
    condition = np.linalg.cond(G)
    if np.any(~np.isfinite(condition)) or np.any(condition > MAX_CONDITION):
        raise RankDeficient(f"cond(H^H H) = {float(np.max(condition)):.3e} exceeds {MAX_CONDITION:.0e}")

    e_k = np.zeros(ch.k_users, dtype=np.complex128)
    e_k[k] = 1.0
    e_k = np.broadcast_to(e_k, ch.batch_shape + (ch.k_users,))
    direction = (H @ hpd_solve(G, e_k)[..., np.newaxis])[..., 0]
    return normalize(direction)


def rzf_direction(ch: ChannelSet, k: int, alpha) -> np.ndarray:
    """Unit vector along (alpha I + H H^H)^-1 h_k."""
    _check_alpha(alpha)
    h_k = ch.column(k)
    A = regularized_gram(ch.H, alpha)
    if np.all(np.asarray(alpha) > 0):
        return normalize(hpd_solve(A, h_k))

    if ch.k_users < ch.nt:
        raise SingularSystem(f"H H^H is singular for k_users={ch.k_users} < nt={ch.nt} and alpha=0")
    condition = np.linalg.cond(A)
    if np.any(~np.isfinite(condition)) or np.any(condition > MAX_CONDITION):
        raise SingularSystem(f"cond(H H^H) = {float(np.max(condition)):.3e} with alpha=0")
    try:
        return normalize(hpd_solve(A, h_k))
    except NotPositiveDefinite as e:
        raise SingularSystem(str(e))


def rzf_pushthrough_direction(ch: ChannelSet, k: int, alpha) -> np.ndarray:
    """Column k of H (alpha I + H^H H)^-1, normalized. Algebraically the same
       direction as `rzf_direction`, computed from the K x K Gram matrix."""
    _check_alpha(alpha)
    if not np.all(np.asarray(alpha) > 0):
        raise InvalidParameter("the push-through form needs alpha > 0")
    ch.column(k)  # index check
    e_k = np.zeros(ch.k_users, dtype=np.complex128)
    e_k[k] = 1.0
    e_k = np.broadcast_to(e_k, ch.batch_shape + (ch.k_users,))
    A = regularized_gram(hermitian(ch.H), alpha)
    return normalize((ch.H @ hpd_solve(A, e_k)[..., np.newaxis])[..., 0])


def _leakage_matrix(ch: ChannelSet, k: int, sigma2) -> np.ndarray:
    """sigma2 I + H_-k H_-k^H, Hermitian positive definite for sigma2 > 0."""
    _check_sigma2(sigma2)
    return regularized_gram(leave_one_out(ch, k), sigma2)


def slnr_closed_form(ch: ChannelSet, k: int, sigma2) -> SlnrSolution:
    """The SLNR-maximizing precoder of user k in closed form.

       The direction is (sigma2 I + H_-k H_-k^H)^-1 h_k; it is an eigenvector of
       the rank-one SLNR operator with eigenvalue lambda = h_k^H (...)^-1 h_k."""
    A = _leakage_matrix(ch, k, sigma2)
    h_k = ch.column(k)
    lower = cholesky(A)
    whitened = whiten(lower, h_k)
    direction = cholesky_solve(lower, h_k)
    gamma = np.real(inner(direction, direction))
    # lambda = ||L^-1 h_k||^2 with A = L L^H
    lambda_ = norm(whitened) ** 2
    return SlnrSolution(
        w=direction / np.sqrt(gamma)[..., np.newaxis],
        gamma=as_scalar(gamma),
        lambda_=as_scalar(lambda_))


def slnr_eigenpair(
        ch: ChannelSet,
        k: int,
        sigma2,
        tol: float = numerics.DEFAULT_EIG_TOL,
        max_iter: int = numerics.DEFAULT_EIG_MAX_ITER) -> Tuple[np.ndarray, object]:
    """Dominant eigenpair of v -> (sigma2 I + H_-k H_-k^H)^-1 h_k (h_k^H v),
       found by power iteration started at h_k. Returns (unit vector, real
       eigenvalue)."""
    A = _leakage_matrix(ch, k, sigma2)
    h_k = ch.column(k)
    lower = cholesky(A)

    def apply(v):
        return cholesky_solve(lower, h_k * inner(h_k, v)[..., np.newaxis])

    v, eigenvalue = numerics.dominant_eigvec(apply, ch.nt, h_k, tol=tol, max_iter=max_iter)
    return v, as_scalar(np.real(eigenvalue))


def slnr_eig(ch: ChannelSet, k: int, sigma2) -> np.ndarray:
    """Unit-norm max-SLNR eigenvector of user k."""
    return slnr_eigenpair(ch, k, sigma2)[0]


# PHASE
def alignment(w1, w2):
    """|w1^H w2| for unit vectors: 1 iff equal up to a unit-modulus phase."""
    w1 = as_complex_array(w1)
    w2 = as_complex_array(w2)
    if w1.shape[-1] != w2.shape[-1]:
        raise DimensionMismatch(f"vector lengths differ: {w1.shape[-1]} vs {w2.shape[-1]}")
    check_unit_norm(w1, 'w1')
    check_unit_norm(w2, 'w2')
    return as_scalar(np.minimum(np.abs(inner(w1, w2)), 1.0))


def canonical_phase(w) -> np.ndarray:
    """Rotates w so that its largest-magnitude entry is real and positive.
       The first such entry wins ties. Idempotent."""
    w = as_complex_array(w)
    pivot_index = np.argmax(np.abs(w), axis=-1)[..., np.newaxis]
    pivot = np.take_along_axis(w, pivot_index, axis=-1)
    magnitude = np.abs(pivot)
    rotated = w * (np.conj(pivot) / magnitude)
    # Pin the pivot exactly so that a second rotation is the identity.
    np.put_along_axis(rotated, pivot_index, magnitude.astype(np.complex128), axis=-1)
    return rotated


def canonical_phase_columns(W) -> np.ndarray:
    """Applies `canonical_phase` to every column of W."""
    return np.swapaxes(canonical_phase(np.swapaxes(W, -1, -2)), -1, -2)


# ASSEMBLY
def precoder_direction(ch: ChannelSet, k: int, method: Method, sigma2, alpha=None) -> np.ndarray:
    """User k's unit direction for `method`. RZF defaults to alpha = sigma2."""
    method = Method.parse(method)
    if method is Method.ZF:
        return zf_direction(ch, k)
    elif method is Method.RZF:
        return rzf_direction(ch, k, sigma2 if alpha is None else alpha)
    elif method is Method.SLNR_CLOSED:
        return slnr_closed_form(ch, k, sigma2).w
    elif method is Method.SLNR_EIG:
        return slnr_eig(ch, k, sigma2)
    raise ValueError(f"unhandled method {method}")


def build_precoder_matrix(
        ch: ChannelSet,
        method: Union[Method, str],
        sigma2: float,
        alpha: Optional[float] = None) -> PrecoderMatrix:
    """Assembles the K users' directions into one transmit matrix, each
       column in canonical phase. Per-user failures are re-raised as
       UserPrecoderError carrying the user index."""
    method = Method.parse(method)
    _check_sigma2(sigma2)
    if method is Method.RZF and alpha is None:
        alpha = sigma2

    columns = []
    for k in range(ch.k_users):
        try:
            columns.append(precoder_direction(ch, k, method, sigma2, alpha))
        except (PrecoderException, NumericsException) as e:
            raise UserPrecoderError(k, e) from e

    W = canonical_phase_columns(np.stack(columns, axis=-1))
    W.setflags(write=False)
    return PrecoderMatrix(
        method=method,
        W=W,
        sigma2=sigma2,
        alpha=alpha if method is Method.RZF else None)
