#!/usr/bin/env python3

import sys
from os import path
sys.path.insert(0, path.join(path.dirname(
    path.dirname(path.abspath(__file__))), 'src'))

import unittest

import numpy as np
from numpy.testing import assert_array_equal

from channel import (ChannelSet, IndexOutOfRange, InvalidDimension, RngStream, leave_one_out, sample_channel,
                     sample_trials)


class StreamTests(unittest.TestCase):

    def test_same_stream_same_draws(self):
        """Tests that a (seed, index) pair always yields the same channel."""
        first = sample_channel(4, 3, RngStream(42, 5))
        second = sample_channel(4, 3, RngStream(42, 5))
        self.assertEqual(first, second)
        assert_array_equal(first.H, second.H)

    def test_distinct_streams(self):
        self.assertNotEqual(sample_channel(4, 3, RngStream(42, 5)), sample_channel(4, 3, RngStream(42, 6)))
        self.assertNotEqual(sample_channel(4, 3, RngStream(42, 5)), sample_channel(4, 3, RngStream(43, 5)))

    def test_derived_seed(self):
        seed = RngStream(1, 2).derive_seed()
        self.assertEqual(seed, RngStream(1, 2).derive_seed())
        self.assertNotEqual(seed, RngStream(1, 3).derive_seed())
        self.assertTrue(0 <= seed < 2 ** 64)

    def test_invalid_seed(self):
        with self.assertRaises(ValueError):
            RngStream(-1)
        with self.assertRaises(ValueError):
            RngStream(2 ** 64)
        with self.assertRaises(ValueError):
            RngStream(0, -1)

    def test_trials_are_independent_of_grouping(self):
        """Tests that a trial's channel does not depend on which other trials
           are drawn with it."""
        stacked = sample_trials(4, 4, 9, range(10))
        part = sample_trials(4, 4, 9, range(6, 8))
        assert_array_equal(stacked.H[6:8], part.H)
        assert_array_equal(stacked.H[3], sample_channel(4, 4, RngStream(9, 3)).H)


class DistributionTests(unittest.TestCase):

    def test_moments(self):
        """Tests the first two moments of CN(0, 1) entries over 1e5 draws."""
        entries = sample_channel(1, 1, RngStream(2024), size=100000).H.ravel()
        self.assertLessEqual(abs(entries.mean()), 0.02)
        self.assertAlmostEqual(np.mean(np.abs(entries) ** 2), 1.0, delta=0.02)
        self.assertAlmostEqual(np.mean(entries.real ** 2), 0.5, delta=0.02)


class ChannelSetTests(unittest.TestCase):

    def test_shape(self):
        ch = sample_channel(6, 4, RngStream(0))
        self.assertEqual((ch.nt, ch.k_users, ch.batch_shape), (6, 4, ()))
        stacked = sample_channel(6, 4, RngStream(0), size=3)
        self.assertEqual(stacked.batch_shape, (3,))
        self.assertEqual(stacked[1].batch_shape, ())

    def test_read_only_copy(self):
        """Tests that the channel is copied and cannot be modified."""
        H = np.eye(2, dtype=complex)
        ch = ChannelSet(H)
        H[0, 0] = 5
        self.assertEqual(ch.H[0, 0], 1)
        with self.assertRaises(ValueError):
            ch.H[0, 0] = 2

    def test_invalid(self):
        with self.assertRaises(InvalidDimension):
            ChannelSet(np.zeros((2, 0)))
        with self.assertRaises(InvalidDimension):
            ChannelSet([[1, 0], [1, 0]])
        with self.assertRaises(InvalidDimension):
            sample_channel(0, 2, RngStream(0))
        with self.assertRaises(ValueError):
            ChannelSet([1, 2])

    def test_column(self):
        ch = ChannelSet([[1, 2], [3, 4]])
        assert_array_equal(ch.column(1), [2, 4])
        with self.assertRaises(IndexOutOfRange):
            ch.column(2)
        with self.assertRaises(IndexError):
            ch.column(-1)


class LeaveOneOutTests(unittest.TestCase):

    def test_two_users(self):
        ch = ChannelSet([[1, 2], [3, 4]])
        assert_array_equal(leave_one_out(ch, 0), [[2], [4]])

    def test_single_user(self):
        """Tests that removing the only user leaves nt rows and no columns."""
        self.assertEqual(leave_one_out(ChannelSet([[1], [2], [3]]), 0).shape, (3, 0))

    def test_keeps_order(self):
        ch = sample_channel(4, 4, RngStream(3))
        assert_array_equal(leave_one_out(ch, 2), ch.H[:, [0, 1, 3]])

    def test_stacked(self):
        ch = sample_channel(4, 4, RngStream(3), size=5)
        self.assertEqual(leave_one_out(ch, 0).shape, (5, 4, 3))

    def test_out_of_range(self):
        with self.assertRaises(IndexOutOfRange):
            leave_one_out(ChannelSet([[1, 2]]), 2)


if __name__ == '__main__':
    unittest.main()
