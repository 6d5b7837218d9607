"""Figures of merit: SLNR, per-user SINR of the downlink model and the
   Shannon sum rate."""

from dataclasses import dataclass, field

import numpy as np

from channel import ChannelSet, leave_one_out
from numerics import as_complex_array, as_scalar, hermitian, inner
from precoders import DimensionMismatch, InvalidParameter, PrecoderMatrix, check_unit_norm

_SUM_TOL = 1e-12


def snr_db_to_power(snr_db: float, sigma2: float = 1.0) -> float:
    """Total transmit power P for SNR = 10 log10(P / sigma2)."""
    return sigma2 * 10.0 ** (snr_db / 10.0)


def power_to_snr_db(total_power: float, sigma2: float = 1.0) -> float:
    return 10.0 * np.log10(total_power / sigma2)


@dataclass(frozen=True)
class NoisePowerModel(object):
    """Noise variance sigma2 and the per-user transmit powers p_k, which sum to
       the total power P."""
    sigma2: float
    total_power: float
    powers: np.ndarray = field(compare=False)

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise InvalidParameter(f"sigma2 must be positive, got {self.sigma2}")
        if not self.total_power >= 0:
            raise InvalidParameter(f"total power must be non-negative, got {self.total_power}")
        powers = np.asarray(self.powers, dtype=float)
        if powers.ndim != 1 or np.any(powers < 0):
            raise InvalidParameter("powers must be a vector of non-negative reals")
        if abs(powers.sum() - self.total_power) > _SUM_TOL * max(self.total_power, 1.0):
            raise InvalidParameter(f"powers sum to {powers.sum()}, expected {self.total_power}")
        powers.setflags(write=False)
        object.__setattr__(self, 'powers', powers)

    @classmethod
    def equal(cls, sigma2: float, total_power: float, k_users: int) -> 'NoisePowerModel':
        """Equal allocation p_k = P / K."""
        return cls(sigma2, total_power, np.full(k_users, total_power / k_users))

    @classmethod
    def from_snr_db(cls, snr_db: float, k_users: int, sigma2: float = 1.0) -> 'NoisePowerModel':
        """Equal allocation at SNR = 10 log10(P / sigma2)."""
        return cls.equal(sigma2, snr_db_to_power(snr_db, sigma2), k_users)

    @property
    def k_users(self) -> int:
        return len(self.powers)

    @property
    def snr_db(self) -> float:
        return power_to_snr_db(self.total_power, self.sigma2)

    def regularization(self) -> float:
        """The noise-to-per-user-power ratio K sigma2 / P. Dividing the powered
           SLNR p|h^H w|^2 / (sigma2 + p ||H_-k^H w||^2) through by p shows that
           this is the sigma2 the SLNR and RZF precoders should see."""
        if self.total_power == 0:
            return np.inf
        return self.k_users * self.sigma2 / self.total_power


def slnr_value(ch: ChannelSet, k: int, w, sigma2: float):
    """|h_k^H w|^2 / (sigma2 + ||H_-k^H w||^2): user k's desired power over
       noise plus the power it leaks onto every other user."""
    w = as_complex_array(w)
    check_unit_norm(w, 'w')
    if not sigma2 > 0:
        raise InvalidParameter(f"sigma2 must be positive, got {sigma2}")
    h_k = ch.column(k)
    others = leave_one_out(ch, k)
    signal = np.abs(inner(h_k, w)) ** 2
    leakage = np.sum(np.abs((hermitian(others) @ w[..., np.newaxis])[..., 0]) ** 2, axis=-1)
    return as_scalar(signal / (sigma2 + leakage))


def _gains(ch: ChannelSet, precoder: PrecoderMatrix) -> np.ndarray:
    """G[k, j] = h_k^H w_j."""
    W = precoder.W
    if W.shape[-2] != ch.nt or W.shape[-1] != ch.k_users:
        raise DimensionMismatch(
            f"precoder is {W.shape[-2]}x{W.shape[-1]}, channel is {ch.nt}x{ch.k_users}")
    return hermitian(ch.H) @ W


def sinrs(ch: ChannelSet, precoder: PrecoderMatrix, pw: NoisePowerModel) -> np.ndarray:
    """Every user's SINR p_k |h_k^H w_k|^2 / (sigma2 + sum_{j != k} p_j |h_k^H w_j|^2),
       as the last axis."""
    if pw.k_users != ch.k_users:
        raise DimensionMismatch(f"power model has {pw.k_users} users, channel has {ch.k_users}")
    received = np.abs(_gains(ch, precoder)) ** 2 * pw.powers
    own = np.eye(ch.k_users, dtype=bool)
    desired = np.diagonal(received, axis1=-2, axis2=-1)
    interference = np.where(own, 0.0, received).sum(axis=-1)
    return desired / (pw.sigma2 + interference)


def sinr(ch: ChannelSet, precoder: PrecoderMatrix, pw: NoisePowerModel, k: int):
    """User k's receive SINR."""
    ch.column(k)  # index check
    return as_scalar(sinrs(ch, precoder, pw)[..., k])


def sum_rate(ch: ChannelSet, precoder: PrecoderMatrix, pw: NoisePowerModel):
    """Shannon sum rate in bits: sum_k log2(1 + SINR_k)."""
    return as_scalar(np.sum(np.log2(1.0 + sinrs(ch, precoder, pw)), axis=-1))


@dataclass(frozen=True)
class RateSample(object):
    """One sum-rate observation of a single channel realization."""
    snr_db: float
    per_user_sinr: tuple
    sum_rate_bits: float
    trial_index: int
    seed: int

    @classmethod
    def from_sinrs(cls, snr_db: float, per_user_sinr, trial_index: int, seed: int) -> 'RateSample':
        per_user_sinr = tuple(float(s) for s in per_user_sinr)
        return cls(snr_db, per_user_sinr, float(np.sum(np.log2(1.0 + np.asarray(per_user_sinr)))),
                   trial_index, seed)


def rate_sample(ch: ChannelSet, precoder: PrecoderMatrix, pw: NoisePowerModel,
                trial_index: int = 0, seed: int = 0) -> RateSample:
    """Records the per-user SINRs and sum rate of one unstacked channel."""
    if ch.batch_shape:
        raise DimensionMismatch("rate samples are taken one channel at a time")
    return RateSample.from_sinrs(pw.snr_db, sinrs(ch, precoder, pw), trial_index, seed)
