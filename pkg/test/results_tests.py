#!/usr/bin/env python3

import sys
from os import path
sys.path.insert(0, path.join(path.dirname(
    path.dirname(path.abspath(__file__))), 'src'))

import tempfile
import unittest

from Crypto.Hash import SHA3_256

from results import (DIGEST_SUFFIX, ResultWriter, ResultsMismatch, body_digest, format_row, read_body,
                     verify_results, write_results)

HEADER = ('snr_db', 'method', 'trials', 'mean_sum_rate_bits', 'stderr_bits', 'seed')
ROWS = [(-5.0, 'zf', 10, 1.25, 0.1, 0), (0.0, 'zf', 10, 2.5, float('nan'), 0)]


class ResultFileTests(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = path.join(self.tmp.name, 'sumrate.csv')

    def tearDown(self):
        self.tmp.cleanup()

    def test_format_row(self):
        self.assertEqual(format_row(ROWS[0]), '-5.0,zf,10,1.25,0.1,0\n')
        self.assertEqual(format_row(ROWS[1]), '0.0,zf,10,2.5,nan,0\n')

    def test_written_file(self):
        """Tests the CSV layout and the digest sidecar."""
        digest = write_results(self.path, HEADER, ROWS)
        with open(self.path) as f:
            text = f.read()
        self.assertEqual(text, 'snr_db,method,trials,mean_sum_rate_bits,stderr_bits,seed\n'
                               '-5.0,zf,10,1.25,0.1,0\n'
                               '0.0,zf,10,2.5,nan,0\n')
        with open(self.path + DIGEST_SUFFIX) as f:
            self.assertEqual(f.read(), digest + '\n')

        expected = SHA3_256.new(b'-5.0,zf,10,1.25,0.1,0\n0.0,zf,10,2.5,nan,0\n').hexdigest()
        self.assertEqual(digest, expected)
        self.assertEqual(body_digest(self.path), expected)
        self.assertEqual(read_body(self.path), ['-5.0,zf,10,1.25,0.1,0\n', '0.0,zf,10,2.5,nan,0\n'])

    def test_digest_ignores_header(self):
        digest = write_results(self.path, HEADER, ROWS)
        other = path.join(self.tmp.name, 'other.csv')
        self.assertEqual(write_results(other, ('a', 'b', 'c', 'd', 'e', 'f'), ROWS), digest)

    def test_verify(self):
        """Tests that verification catches an edited body."""
        digest = write_results(self.path, HEADER, ROWS)
        self.assertEqual(verify_results(self.path), digest)
        with open(self.path, 'a') as f:
            f.write('5.0,zf,10,3.0,0.1,0\n')
        with self.assertRaises(ResultsMismatch):
            verify_results(self.path)

    def test_missing_digest(self):
        with open(self.path, 'w') as f:
            f.write(','.join(HEADER) + '\n')
        with self.assertRaises(OSError):
            verify_results(self.path)

    def test_failed_write_leaves_no_digest(self):
        with self.assertRaises(ValueError):
            with ResultWriter(self.path, HEADER) as writer:
                writer.write_row(ROWS[0])
                writer.write_row(('too', 'short'))
        self.assertFalse(path.exists(self.path + DIGEST_SUFFIX))
        self.assertEqual(writer.row_count, 1)


if __name__ == '__main__':
    unittest.main()
