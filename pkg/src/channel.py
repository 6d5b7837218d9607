"""I.i.d. flat Rayleigh fading channels with reproducible, splittable random
   streams."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from numerics import as_complex_array

_MAX_SEED = 2 ** 64 - 1
_MAX_REDRAWS = 64


# EXCEPTIONS
class ChannelException(Exception):
    """Channel module superexception, for catching others"""
    pass


class InvalidDimension(ChannelException, ValueError):
    """Thrown when an antenna or user count is not positive."""
    pass


class IndexOutOfRange(ChannelException, IndexError):
    """Thrown when a user index does not name a column of the channel."""
    pass


@dataclass(frozen=True)
class RngStream(object):
    """A reproducible random stream keyed by a master seed and a substream
       index. Distinct indices give independent Philox key schedules, so
       streams can be consumed in any order or concurrently."""
    master_seed: int
    stream_index: int = 0

    def __post_init__(self):
        if not 0 <= self.master_seed <= _MAX_SEED:
            raise ValueError(f"master seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if self.stream_index < 0:
            raise ValueError(f"stream index must be non-negative, got {self.stream_index}")

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence([self.master_seed, self.stream_index])

    def generator(self) -> np.random.Generator:
        """Creates a fresh generator positioned at the start of this stream."""
        return np.random.Generator(np.random.Philox(self.seed_sequence()))

    def derive_seed(self) -> int:
        """Derives a new 64-bit master seed from this stream, for nesting
           stream families (one per sweep point, say)."""
        return int(self.seed_sequence().generate_state(1, dtype=np.uint64)[0])


class ChannelSet(object):
    """A downlink channel H whose column k is user k's channel vector h_k.

       H may carry leading dimensions, in which case it is a stack of
       independent channel realizations sharing (nt, k_users)."""

    def __init__(self, H):
        H = as_complex_array(H, min_ndim=2).copy()
        if H.shape[-2] < 1 or H.shape[-1] < 1:
            raise InvalidDimension(f"channel must have at least one antenna and one user, got {H.shape[-2:]}")
        if np.any(np.linalg.norm(H, axis=-2) == 0.0):
            raise InvalidDimension("every user channel must have nonzero norm")
        H.setflags(write=False)
        self._H = H

    @property
    def H(self) -> np.ndarray:
        return self._H

    @property
    def nt(self) -> int:
        return self._H.shape[-2]

    @property
    def k_users(self) -> int:
        return self._H.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self._H.shape[:-2]

    def column(self, k: int) -> np.ndarray:
        """Gets h_k."""
        _check_user(self, k)
        return self._H[..., :, k]

    def __getitem__(self, index) -> 'ChannelSet':
        """Selects realizations from a stacked channel."""
        if not self.batch_shape:
            raise IndexError("channel set is not stacked")
        return ChannelSet(self._H[index])

    def __eq__(self, other):
        return isinstance(other, ChannelSet) and np.array_equal(self._H, other._H)

    def __repr__(self):
        return 'ChannelSet(nt=%d, k_users=%d, batch=%r)' % (self.nt, self.k_users, self.batch_shape)


def _check_user(ch: ChannelSet, k: int):
    if not 0 <= k < ch.k_users:
        raise IndexOutOfRange(f"user {k} outside 0..{ch.k_users - 1}")


def draw_channel(
        gen: np.random.Generator,
        nt: int,
        k_users: int,
        size: Optional[int] = None) -> ChannelSet:
    """Draws CN(0, 1) entries from an existing generator: real and imaginary
       parts are independent N(0, 1/2). With `size`, draws a stack of that
       many realizations."""
    if nt < 1 or k_users < 1:
        raise InvalidDimension(f"need nt >= 1 and k_users >= 1, got nt={nt}, k_users={k_users}")

    shape = (nt, k_users) if size is None else (size, nt, k_users)
    H = (gen.standard_normal(shape) + 1j * gen.standard_normal(shape)) / np.sqrt(2.0)

    # All-zero columns have probability zero; redraw them all the same.
    for _ in range(_MAX_REDRAWS):
        dead = np.linalg.norm(H, axis=-2) == 0.0
        if not np.any(dead):
            return ChannelSet(H)
        redraw = (gen.standard_normal(H.shape) + 1j * gen.standard_normal(H.shape)) / np.sqrt(2.0)
        H = np.where(dead[..., np.newaxis, :], redraw, H)
    raise ChannelException("could not draw a channel with nonzero columns")


def sample_channel(nt: int, k_users: int, stream: RngStream, size: Optional[int] = None) -> ChannelSet:
    """Samples an i.i.d. Rayleigh channel from the start of `stream`."""
    return draw_channel(stream.generator(), nt, k_users, size)


def sample_trials(nt: int, k_users: int, master_seed: int, trials) -> ChannelSet:
    """Stacks one channel per trial index, each drawn from its own stream
       (master_seed, trial). Any subset of trials reproduces the same
       per-trial channels."""
    return ChannelSet(np.stack([
        sample_channel(nt, k_users, RngStream(master_seed, trial)).H
        for trial in trials]))


def leave_one_out(ch: ChannelSet, k: int) -> np.ndarray:
    """Returns H_-k, the channel with user k's column removed, keeping the
       order of the remaining columns. For K = 1 this has zero columns."""
    _check_user(ch, k)
    return np.delete(ch.H, k, axis=-1)
