import math
from typing import List, Sequence

from precoders import Method


def split_into_chunks(items: Sequence, max_length: int) -> List[Sequence]:
    """Splits a sequence (typically a range of trial indices) into
       consecutive chunks of at most `max_length` items. Chunk boundaries
       depend only on the sequence and `max_length`."""
    if max_length < 1:
        raise ValueError("max_length must be positive")
    return [items[start:start + max_length] for start in range(0, len(items), max_length)]


def parse_snr_list(text: str) -> List[float]:
    """Parses an SNR list in dB: either "start:step:stop" (stop inclusive) or
       a comma-separated list."""
    text = text.strip()
    if ':' in text:
        parts = text.split(':')
        if len(parts) != 3:
            raise ValueError(f"expected start:step:stop, got '{text}'")
        start, step, stop = (float(p) for p in parts)
        if step <= 0:
            raise ValueError(f"SNR step must be positive, got {step}")
        if stop < start:
            raise ValueError(f"empty SNR range '{text}'")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        # Multiply rather than accumulate so -5:5:30 gives exact grid points.
        return [start + i * step for i in range(count)]
    return [float(p) for p in text.split(',') if p.strip()]


def parse_methods(text: str) -> List[Method]:
    """Parses a comma-separated precoder list such as "zf,rzf,slnr"."""
    methods = []
    for name in text.split(','):
        if name.strip():
            method = Method.parse(name)
            if method not in methods:
                methods.append(method)
    return methods


def format_float(value: float) -> str:
    """Shortest round-trip text of a float; integral values keep one decimal."""
    return repr(float(value))
