#!/usr/bin/env python3

import sys
from os import path
sys.path.insert(0, path.join(path.dirname(
    path.dirname(path.abspath(__file__))), 'src'))

import math
import unittest
from concurrent.futures import ProcessPoolExecutor

from channel import RngStream, sample_channel
from experiments import (CertificationFailed, ConfigException, EquivReport, ExperimentConfig, certify, header_for,
                         point_seed, run_ber, run_equiv, run_experiment, run_sumrate)
from metrics import NoisePowerModel, sum_rate
from precoders import Method, build_precoder_matrix
from presets import PRESETS

ZF, RZF, SLNR = Method.ZF, Method.RZF, Method.SLNR_CLOSED


def by_method(rows):
    """Groups rows into {method: [row per snr]}."""
    grouped = {}
    for row in rows:
        grouped.setdefault(row.method, []).append(row)
    return grouped


class ConfigTests(unittest.TestCase):

    def test_defaults(self):
        config = ExperimentConfig('sumrate').validate()
        self.assertEqual(config.output_path, 'sumrate.csv')
        self.assertEqual(config.block_size, 256)
        self.assertEqual(ExperimentConfig('ber').block_size, 1024)
        self.assertEqual(config.alpha_for(0.25), 0.25)
        self.assertEqual(config.with_changes(alpha_policy=2.0).alpha_for(0.25), 2.0)

    def test_invalid_fields(self):
        """Tests that validation names the offending field."""
        cases = [
            (dict(command='plot'), 'command'),
            (dict(nt=0), 'nt'),
            (dict(snr_db_list=()), 'snr_db_list'),
            (dict(snr_db_list=(5.0, 0.0)), 'snr_db_list'),
            (dict(methods=()), 'methods'),
            (dict(nt=2, k_users=4), 'methods'),
            (dict(trials=0), 'trials'),
            (dict(min_bits=10, max_bits=5), 'min_bits'),
            (dict(alpha_policy='large'), 'alpha_policy'),
            (dict(alpha_policy=-1.0), 'alpha_policy'),
            (dict(sigma2=0.0), 'sigma2'),
            (dict(master_seed=-1), 'master_seed'),
            (dict(workers=0), 'workers'),
            (dict(block_trials=0), 'block_trials'),
        ]
        for changes, field in cases:
            with self.assertRaises(ConfigException) as cm:
                ExperimentConfig('sumrate').with_changes(**changes).validate()
            self.assertEqual(cm.exception.field, field)

    def test_equiv_allows_more_users(self):
        ExperimentConfig('equiv', nt=2, k_users=4).validate()

    def test_headers(self):
        self.assertEqual(','.join(header_for('sumrate')), 'snr_db,method,trials,mean_sum_rate_bits,stderr_bits,seed')
        self.assertEqual(','.join(header_for('ber')), 'snr_db,method,bits_sent,bit_errors,ber,seed')
        self.assertEqual(','.join(header_for('equiv')),
                         'trial,user,alignment_slnr_rzf,alignment_eig_closed,lambda_rel_err,seed')


class SumRateTests(unittest.TestCase):

    def test_single_trial(self):
        """Tests that one trial reproduces a direct sum-rate evaluation."""
        config = ExperimentConfig('sumrate', nt=3, k_users=1, snr_db_list=(0.0, 10.0), trials=1,
                                  methods=(RZF,), master_seed=21)
        rows = run_sumrate(config)
        ch = sample_channel(3, 1, RngStream(21, 0))
        for row, snr_db in zip(rows, (0.0, 10.0)):
            pw = NoisePowerModel.from_snr_db(snr_db, 1)
            expected = sum_rate(ch, build_precoder_matrix(ch, RZF, pw.regularization()), pw)
            self.assertAlmostEqual(row.mean_sum_rate_bits, expected, delta=1e-12)
            self.assertTrue(math.isnan(row.stderr_bits))
            self.assertEqual((row.trials, row.seed, row.method), (1, 21, 'rzf'))

    def test_row_count(self):
        config = ExperimentConfig('sumrate', snr_db_list=(0.0, 10.0, 20.0), trials=10, methods=(ZF, SLNR))
        self.assertEqual(len(run_sumrate(config)), 6)

    def test_preset_orderings(self):
        """Tests the low-SNR advantage and high-SNR convergence of the
           regularized precoders over zero-forcing, for both sum-rate presets."""
        for name in ('fig1a', 'fig1b'):
            config = ExperimentConfig(**PRESETS[name])
            grouped = by_method(run_sumrate(config))
            for slnr, rzf in zip(grouped['slnr'], grouped['rzf']):
                self.assertLessEqual(abs(slnr.mean_sum_rate_bits - rzf.mean_sum_rate_bits), 1e-9)
            for slnr, zf in zip(grouped['slnr'], grouped['zf']):
                if slnr.snr_db <= 5.0:
                    margin = slnr.mean_sum_rate_bits - zf.mean_sum_rate_bits
                    self.assertGreaterEqual(margin, 5 * max(slnr.stderr_bits, zf.stderr_bits))
                if slnr.snr_db == 30.0:
                    gap = slnr.mean_sum_rate_bits - zf.mean_sum_rate_bits
                    self.assertLessEqual(abs(gap), 0.02 * zf.mean_sum_rate_bits)

    def test_workers_do_not_change_output(self):
        config = ExperimentConfig('sumrate', snr_db_list=(0.0, 20.0), trials=50, block_trials=8, master_seed=3)
        with ProcessPoolExecutor(max_workers=2) as executor:
            concurrent = run_sumrate(config.with_changes(workers=2), executor)
        self.assertEqual(run_sumrate(config), concurrent)


class BerTests(unittest.TestCase):

    def test_point_seeds(self):
        self.assertEqual(point_seed(1, 0), RngStream(1, 0).derive_seed())
        self.assertNotEqual(point_seed(1, 0), point_seed(1, 1))

    def test_orderings(self):
        """Tests SLNR/RZF equality, the zero-forcing penalty and the
           diversity gain of extra antennas at mid-range SNR."""
        config = ExperimentConfig('ber', nt=4, k_users=4, snr_db_list=(0.0, 5.0, 10.0),
                                  min_bits=100000, max_bits=400000, methods=(ZF, RZF, SLNR), master_seed=4)
        four = by_method(run_ber(config))
        six = by_method(run_ber(config.with_changes(nt=6)))
        for grouped in (four, six):
            for slnr, rzf in zip(grouped['slnr'], grouped['rzf']):
                self.assertEqual((slnr.bit_errors, slnr.bits_sent), (rzf.bit_errors, rzf.bits_sent))
            for slnr, zf in zip(grouped['slnr'], grouped['zf']):
                if slnr.ber >= 1e-3:
                    self.assertGreaterEqual(zf.ber, slnr.ber)
        for method in ('zf', 'slnr'):
            for row4, row6 in zip(four[method], six[method]):
                self.assertLess(row6.ber, row4.ber)
                self.assertGreaterEqual(row4.bits_sent, 100000)

    def test_six_db_lowers_ber(self):
        """Tests that 6 dB more SNR never raises a measurable bit error rate."""
        config = ExperimentConfig('ber', nt=4, k_users=4, snr_db_list=(0.0, 6.0), min_bits=100000,
                                  max_bits=100000, methods=(SLNR,), master_seed=6)
        low, high = run_ber(config)
        self.assertGreaterEqual(low.bits_sent, 100000)
        self.assertGreaterEqual(low.ber, 1e-3)
        self.assertLessEqual(high.ber, low.ber)

    def test_high_snr_zero_forcing(self):
        config = ExperimentConfig('ber', snr_db_list=(120.0,), min_bits=8192, max_bits=8192, methods=(ZF,),
                                  block_trials=256)
        (row,) = run_ber(config)
        self.assertEqual((row.bit_errors, row.ber), (0, 0.0))

    def test_rows(self):
        config = ExperimentConfig('ber', nt=2, k_users=2, snr_db_list=(0.0, 3.0), min_bits=1000, max_bits=4000,
                                  methods=(ZF, SLNR), master_seed=8, block_trials=64)
        rows = run_ber(config)
        self.assertEqual([(r.snr_db, r.method) for r in rows],
                         [(0.0, 'zf'), (0.0, 'slnr'), (3.0, 'zf'), (3.0, 'slnr')])
        self.assertEqual(rows[0].seed, point_seed(8, 0))
        self.assertEqual(rows[2].seed, point_seed(8, 1))
        self.assertEqual(rows[1].ber, rows[1].bit_errors / rows[1].bits_sent)


class EquivalenceTests(unittest.TestCase):

    def test_certification(self):
        """Tests SLNR = RZF(alpha = sigma2) over 1000 channels per shape."""
        for nt, k_users in ((2, 2), (4, 4), (6, 4), (8, 4), (2, 4)):
            rows, report = run_equiv(ExperimentConfig('equiv', nt=nt, k_users=k_users, trials=1000))
            self.assertTrue(report.passed)
            self.assertEqual(report.exit_status, 0)
            self.assertEqual(len(rows), 1000 * k_users)
            self.assertGreaterEqual(report.min_alignment_slnr_rzf, 1 - 1e-10)
            self.assertGreaterEqual(report.min_alignment_eig_closed, 1 - 1e-10)
            self.assertLessEqual(report.max_lambda_rel_err, 1e-9)
            self.assertLessEqual(report.max_eigenvalue_rel_err, 1e-9)
            self.assertLessEqual(report.max_rank_one_residual, 1e-10)
            certify(report)

    def test_single_user(self):
        rows, report = run_equiv(ExperimentConfig('equiv', nt=4, k_users=1, trials=20))
        for row in rows:
            self.assertAlmostEqual(row.alignment_slnr_rzf, 1.0, delta=1e-12)
            self.assertEqual(row.user, 0)

    def test_rows_follow_trials(self):
        rows, _ = run_experiment(ExperimentConfig('equiv', nt=4, k_users=2, trials=3, master_seed=77))
        self.assertEqual([(r.trial, r.user) for r in rows], [(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)])
        self.assertTrue(all(r.seed == 77 for r in rows))

    def test_failed_report(self):
        """Tests that a failing report raises with its first failing trial and user."""
        report = EquivReport(seed=5, trials=10, min_alignment_slnr_rzf=0.5, min_alignment_eig_closed=1.0,
                             max_lambda_rel_err=0.0, max_eigenvalue_rel_err=0.0, max_rank_one_residual=0.0,
                             first_failure=(4, 2))
        self.assertEqual(report.exit_status, 3)
        with self.assertRaises(CertificationFailed) as cm:
            certify(report)
        self.assertEqual((cm.exception.seed, cm.exception.trial, cm.exception.user), (5, 4, 2))

    def test_fixed_alpha_rejected(self):
        """Tests that equiv refuses an RZF regularization other than sigma2."""
        with self.assertRaises(ConfigException) as cm:
            run_equiv(ExperimentConfig('equiv', nt=4, k_users=4, trials=5, alpha_policy=10.0))
        self.assertEqual(cm.exception.field, 'alpha_policy')

    def test_small_noise_variance(self):
        """Tests certification when the leakage matrix is close to singular."""
        rows, report = run_equiv(ExperimentConfig('equiv', nt=4, k_users=4, trials=1000, sigma2=1e-6))
        self.assertLessEqual(report.max_lambda_rel_err, 1e-9)
        self.assertTrue(report.passed)


if __name__ == '__main__':
    unittest.main()
