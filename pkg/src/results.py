"""CSV result files with a SHA3-256 digest of their body.

   The digest covers every row after the header, so two runs with the same
   flags can be compared by digest alone. It is stored next to the CSV in a
   `<file>.sha3` sidecar and can be re-checked with `verify_results`."""

import csv
import io
import logging
from typing import Iterable, List, Sequence

from Crypto.Hash import SHA3_256

from utils import format_float

logger = logging.getLogger(__name__)

DIGEST_SUFFIX = '.sha3'


# EXCEPTIONS
class ResultsMismatch(Exception):
    """Thrown when a CSV body no longer matches its recorded digest."""
    pass


def format_cell(value) -> str:
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def format_row(row: Sequence) -> str:
    """Renders one CSV line, newline included."""
    buffer = io.StringIO()
    csv.writer(buffer, lineterminator='\n').writerow([format_cell(v) for v in row])
    return buffer.getvalue()


def compute_hash(lines: Iterable[str]):
    """Computes the SHA3-256 hash of a sequence of text lines."""
    hash_obj = SHA3_256.new()
    for line in lines:
        hash_obj.update(line.encode('utf-8'))
    return hash_obj


class ResultWriter(object):
    """Writes a CSV file row by row while hashing its body."""

    def __init__(self, path: str, header: Sequence[str]):
        self.path = path
        self.header = list(header)
        self.row_count = 0
        self._hash = SHA3_256.new()
        self._file = open(path, 'w', newline='')
        self._file.write(format_row(self.header))

    def __enter__(self):
        return self

    def __exit__(self, type, value, traceback):
        self.close(write_digest=type is None)

    def write_row(self, row: Sequence):
        if len(row) != len(self.header):
            raise ValueError(f"row has {len(row)} cells, header has {len(self.header)}")
        line = format_row(row)
        self._hash.update(line.encode('utf-8'))
        self._file.write(line)
        self.row_count += 1

    def write_rows(self, rows: Iterable[Sequence]):
        for row in rows:
            self.write_row(row)

    def hexdigest(self) -> str:
        return self._hash.hexdigest()

    def close(self, write_digest: bool = True):
        """Closes the CSV file and, unless told otherwise, records its digest."""
        if self._file.closed:
            return
        self._file.close()
        if write_digest:
            with open(self.path + DIGEST_SUFFIX, 'w') as f:
                f.write(self.hexdigest() + '\n')
            logger.info('wrote %d rows to %s (sha3-256 %s)', self.row_count, self.path, self.hexdigest())


def write_results(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Writes a whole CSV file and returns its body digest."""
    with ResultWriter(path, header) as writer:
        writer.write_rows(rows)
    return writer.hexdigest()


def read_body(path: str) -> List[str]:
    """Reads the lines of a CSV file after its header."""
    with open(path, 'r', newline='') as f:
        lines = f.readlines()
    return lines[1:]


def body_digest(path: str) -> str:
    return compute_hash(read_body(path)).hexdigest()


def verify_results(path: str) -> str:
    """Recomputes a CSV file's body digest and checks it against the sidecar.
       Returns the digest; raises ResultsMismatch on disagreement."""
    with open(path + DIGEST_SUFFIX, 'r') as f:
        expected = f.read().strip()
    actual = body_digest(path)
    if actual != expected:
        raise ResultsMismatch(
            "%s: body digest %s does not match recorded digest %s." % (path, actual, expected))
    return actual
