"""Monte-Carlo QPSK bit-error-rate simulation of the precoded downlink.

   Every block of trials draws, from its own stream and in this order: the
   channels, the data bits, then the receiver noise. None of these depend on
   the precoder, so two methods run with the same seed see exactly the same
   channels, symbols and noise."""

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Tuple, Union

import numpy as np
from scipy.special import erfc
from scipy.stats import norm as normal_dist

from channel import ChannelSet, RngStream, draw_channel
from metrics import NoisePowerModel
from numerics import NumericsException, hermitian
from precoders import Method, PrecoderException, build_precoder_matrix

logger = logging.getLogger(__name__)

BITS_PER_SYMBOL = 2
DEFAULT_MIN_BITS = 100000
DEFAULT_MAX_BITS = 10000000
MIN_ERRORS = 100
DEFAULT_BLOCK_TRIALS = 1024


# EXCEPTIONS
class SimulationError(Exception):
    """Thrown when a simulation block fails. Carries the seed and stream index
       that reproduce the failing channel draws."""

    def __init__(self, seed: int, stream_index: int, cause: Exception):
        super().__init__(f"seed {seed}, block {stream_index}: {cause}")
        self.seed = seed
        self.stream_index = stream_index
        self.cause = cause

    def __reduce__(self):
        return type(self), (self.seed, self.stream_index, self.cause)


class QpskMap(object):
    """Gray-coded, unit-energy QPSK: (b1, b2) -> ((1 - 2 b1) + i (1 - 2 b2)) / sqrt(2).

       Bit one selects the sign of the real part and bit two the sign of the
       imaginary part, so neighbouring points differ in exactly one bit."""

    def __init__(self):
        scale = 1.0 / np.sqrt(2.0)
        self.table = {
            (0, 0): complex(scale, scale),
            (0, 1): complex(scale, -scale),
            (1, 1): complex(-scale, -scale),
            (1, 0): complex(-scale, scale),
        }
        # Indexed by 2 b1 + b2.
        self._symbols = np.array([self.table[(b1, b2)] for b1 in (0, 1) for b2 in (0, 1)])

    def modulate(self, bits) -> np.ndarray:
        """Maps an array of bit pairs (..., 2) to symbols (...)."""
        bits = np.asarray(bits)
        if bits.shape[-1] != BITS_PER_SYMBOL:
            raise ValueError(f"expected bit pairs, got trailing dimension {bits.shape[-1]}")
        if np.any((bits != 0) & (bits != 1)):
            raise ValueError("bits must be 0 or 1")
        return self._symbols[2 * bits[..., 0].astype(int) + bits[..., 1].astype(int)]

    def demodulate(self, y) -> np.ndarray:
        """Hard quadrant decision: b1 = [Re y < 0], b2 = [Im y < 0]. A zero
           component decides bit 0."""
        y = np.asarray(y, dtype=np.complex128)
        return np.stack([(y.real < 0), (y.imag < 0)], axis=-1).astype(np.int8)


QPSK = QpskMap()


def modulate(bits) -> Union[complex, np.ndarray]:
    """Maps one bit pair, or an array of them, to QPSK symbols."""
    symbols = QPSK.modulate(bits)
    return complex(symbols) if np.ndim(symbols) == 0 else symbols


def demodulate(y) -> Union[Tuple[int, int], np.ndarray]:
    """Detects the bit pair(s) of received symbol(s)."""
    bits = QPSK.demodulate(y)
    return tuple(int(b) for b in bits) if bits.ndim == 1 else bits


@dataclass(frozen=True)
class BerEstimate(object):
    """Bit error counters of one (configuration, SNR, method) point."""
    snr_db: float
    method: Method
    bit_errors: int
    bits_sent: int
    nt: int
    k_users: int
    seed: int

    def __post_init__(self):
        if self.bits_sent <= 0 or not 0 <= self.bit_errors <= self.bits_sent:
            raise ValueError(f"invalid counters: {self.bit_errors} errors in {self.bits_sent} bits")

    @property
    def ber(self) -> Fraction:
        """The exact ratio bit_errors / bits_sent."""
        return Fraction(self.bit_errors, self.bits_sent)


@dataclass(frozen=True)
class _Block(object):
    """One block's draws, shared by every precoder."""
    channel: ChannelSet
    bits: np.ndarray
    noise: np.ndarray


def _draw_block(seed: int, index: int, nt: int, k_users: int, trials: int, sigma2: float) -> _Block:
    gen = RngStream(seed, index).generator()
    channel = draw_channel(gen, nt, k_users, size=trials)
    bits = gen.integers(0, 2, size=(trials, k_users, BITS_PER_SYMBOL), dtype=np.int8)
    noise = np.sqrt(sigma2 / 2.0) * (
        gen.standard_normal((trials, k_users)) + 1j * gen.standard_normal((trials, k_users)))
    return _Block(channel, bits, noise)


def _block_gains(block: _Block, method: Method, pw: NoisePowerModel, alpha: Optional[float]) -> np.ndarray:
    """Effective gains G[t, k, j] = h_k^H w_j of a block under `method`."""
    precoder = build_precoder_matrix(block.channel, method, pw.regularization(), alpha)
    return hermitian(block.channel.H) @ precoder.W


def count_block_errors(
        seed: int,
        index: int,
        nt: int,
        k_users: int,
        trials: int,
        method: Method,
        pw: NoisePowerModel,
        alpha: Optional[float] = None) -> int:
    """Simulates one block of the downlink and returns its bit errors.

       y_k = sqrt(p_k) h_k^H w_k s_k + sum_{j != k} sqrt(p_j) h_k^H w_j s_j + n_k,
       equalized by the known gain sqrt(p_k) h_k^H w_k and detected per
       quadrant, with residual interference treated as noise."""
    block = _draw_block(seed, index, nt, k_users, trials, pw.sigma2)
    try:
        gains = _block_gains(block, method, pw, alpha)
    except (PrecoderException, NumericsException) as e:
        raise SimulationError(seed, index, e) from e

    amplitudes = np.sqrt(pw.powers)
    symbols = QPSK.modulate(block.bits)
    received = (gains @ (amplitudes * symbols)[..., np.newaxis])[..., 0] + block.noise
    own_gain = amplitudes * np.diagonal(gains, axis1=-2, axis2=-1)
    detected = QPSK.demodulate(received / own_gain)
    return int(np.count_nonzero(detected != block.bits))


def _keep_going(bits_sent: int, bit_errors: int, min_bits: int, max_bits: int) -> bool:
    if bits_sent >= max_bits:
        return False
    return bits_sent < min_bits or bit_errors < MIN_ERRORS


def simulate_ber_point(
        nt: int,
        k_users: int,
        method: Union[Method, str],
        snr_db: float,
        min_bits: int = DEFAULT_MIN_BITS,
        max_bits: int = DEFAULT_MAX_BITS,
        seed: int = 0,
        sigma2: float = 1.0,
        alpha: Optional[float] = None,
        block_trials: int = DEFAULT_BLOCK_TRIALS,
        executor=None,
        wave: int = 1) -> BerEstimate:
    """Estimates the BER of one precoder at one SNR.

       Runs blocks of `block_trials` channel uses (one QPSK symbol per user per
       channel draw) until at least `min_bits` bits and MIN_ERRORS errors are
       in, or `max_bits` is reached. `alpha` overrides the RZF regularization,
       which otherwise follows the noise-to-power ratio.

       With an `executor`, blocks are evaluated concurrently in waves of
       `wave` blocks; the stopping rule is still applied block by block in
       index order, so the counters match a sequential run."""
    method = Method.parse(method)
    if min_bits < 1 or max_bits < min_bits:
        raise ValueError(f"need 1 <= min_bits <= max_bits, got {min_bits}, {max_bits}")
    if block_trials < 1:
        raise ValueError("block_trials must be positive")
    pw = NoisePowerModel.from_snr_db(snr_db, k_users, sigma2)
    bits_per_block = block_trials * k_users * BITS_PER_SYMBOL

    bit_errors = 0
    bits_sent = 0
    index = 0
    wave = 1 if executor is None else max(1, wave)
    while _keep_going(bits_sent, bit_errors, min_bits, max_bits):
        indices = range(index, index + wave)
        args = [(seed, i, nt, k_users, block_trials, method, pw, alpha) for i in indices]
        if executor is None:
            counts = [count_block_errors(*a) for a in args]
        else:
            counts = list(executor.map(count_block_errors, *zip(*args)))

        for count in counts:
            if not _keep_going(bits_sent, bit_errors, min_bits, max_bits):
                break
            bit_errors += count
            bits_sent += bits_per_block
            index += 1
        logger.debug('%s @ %s dB: %d errors in %d bits after %d blocks',
                     method.value, snr_db, bit_errors, bits_sent, index)

    logger.info('%s @ %s dB (nt=%d, K=%d): ber %.3e over %d bits',
                method.value, snr_db, nt, k_users, bit_errors / bits_sent, bits_sent)
    return BerEstimate(
        snr_db=snr_db,
        method=method,
        bit_errors=bit_errors,
        bits_sent=bits_sent,
        nt=nt,
        k_users=k_users,
        seed=seed)


# ANALYTIC REFERENCE
def qpsk_awgn_ber(gamma_b) -> np.ndarray:
    """Gray-coded QPSK bit error probability Q(sqrt(2 gamma_b)) =
       erfc(sqrt(gamma_b)) / 2 at per-bit SNR gamma_b."""
    return 0.5 * erfc(np.sqrt(gamma_b))


def ber_oracle_point(
        nt: int,
        k_users: int,
        method: Union[Method, str],
        snr_db: float,
        blocks: int,
        seed: int = 0,
        sigma2: float = 1.0,
        alpha: Optional[float] = None,
        block_trials: int = DEFAULT_BLOCK_TRIALS) -> np.ndarray:
    """Per-bit analytic error probabilities for the first `blocks` blocks
       that `simulate_ber_point` would draw with the same arguments.

       Exact for interference-free links (K = 1, or ZF): the equalized noise
       on each quadrant component has variance sigma2 / (2 p_k |h_k^H w_k|^2),
       so gamma_b = p_k |h_k^H w_k|^2 / (2 sigma2). Both bits of a symbol share
       one probability; the array lists each twice."""
    method = Method.parse(method)
    pw = NoisePowerModel.from_snr_db(snr_db, k_users, sigma2)
    probabilities = []
    for index in range(blocks):
        block = _draw_block(seed, index, nt, k_users, block_trials, sigma2)
        gains = np.diagonal(_block_gains(block, method, pw, alpha), axis1=-2, axis2=-1)
        gamma_b = pw.powers * np.abs(gains) ** 2 / (2.0 * sigma2)
        probabilities.append(np.repeat(qpsk_awgn_ber(gamma_b).ravel(), BITS_PER_SYMBOL))
    return np.concatenate(probabilities)


def within_confidence(bit_errors: int, probabilities: Iterable[float], confidence: float = 0.99) -> bool:
    """Tests an observed error count against independent per-bit error
       probabilities, using the normal approximation of their
       Poisson-binomial sum at two-sided `confidence`."""
    probabilities = np.asarray(list(probabilities), dtype=float)
    expected = probabilities.sum()
    spread = np.sqrt(np.sum(probabilities * (1.0 - probabilities)))
    z = normal_dist.ppf(0.5 + confidence / 2.0)
    return abs(bit_errors - expected) <= z * spread
