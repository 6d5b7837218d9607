"""The three studies behind the command line: the sum-rate sweep, the BER
   sweep and the SLNR/RZF equivalence certification.

   Work is split into blocks of trials whose boundaries depend only on the
   configuration. Blocks may run on an executor; their results are always
   combined in block order, so the output does not depend on `workers`."""

import logging
from collections import namedtuple
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from channel import RngStream, leave_one_out, sample_trials
from linksim import DEFAULT_MAX_BITS, DEFAULT_MIN_BITS, SimulationError, simulate_ber_point
from metrics import NoisePowerModel, slnr_value, sum_rate
from numerics import NumericsException, hpd_solve, rank_one_update_solve, regularized_gram
from precoders import (Method, PrecoderException, alignment, build_precoder_matrix, rzf_direction,
                       slnr_closed_form, slnr_eigenpair)
from utils import split_into_chunks

logger = logging.getLogger(__name__)

COMMANDS = ('sumrate', 'ber', 'equiv')
SIGMA2_POLICY = 'sigma2'
DEFAULT_SNRS = tuple(float(s) for s in range(-5, 31, 5))
DEFAULT_METHODS = (Method.ZF, Method.RZF, Method.SLNR_CLOSED)
DEFAULT_SUMRATE_BLOCK = 256
DEFAULT_BER_BLOCK = 1024

ALIGNMENT_TOL = 1e-10
LAMBDA_TOL = 1e-9

SumRateRow = namedtuple('SumRateRow', 'snr_db method trials mean_sum_rate_bits stderr_bits seed')
BerRow = namedtuple('BerRow', 'snr_db method bits_sent bit_errors ber seed')
EquivRow = namedtuple('EquivRow', 'trial user alignment_slnr_rzf alignment_eig_closed lambda_rel_err seed')


# EXCEPTIONS
class ExperimentException(Exception):
    """Experiments module superexception, for catching others"""
    pass


class ConfigException(ExperimentException, ValueError):
    """Thrown when a configuration is invalid. `field` names the offending
       setting."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class CertificationFailed(ExperimentException):
    """Thrown when the equivalence certification fails. Carries the first
       failing (seed, trial, user)."""

    def __init__(self, seed: int, trial: int, user: int, detail: str = ""):
        super().__init__(f"seed {seed}, trial {trial}, user {user}" + (f": {detail}" if detail else ""))
        self.seed = seed
        self.trial = trial
        self.user = user
        self.detail = detail

    def __reduce__(self):
        return type(self), (self.seed, self.trial, self.user, self.detail)


# CONFIGURATION
@dataclass(frozen=True)
class ExperimentConfig(object):
    """Everything that determines an experiment's output."""
    command: str
    nt: int = 4
    k_users: int = 4
    snr_db_list: Tuple[float, ...] = DEFAULT_SNRS
    trials: int = 1000
    min_bits: int = DEFAULT_MIN_BITS
    max_bits: int = DEFAULT_MAX_BITS
    methods: Tuple[Method, ...] = DEFAULT_METHODS
    alpha_policy: Union[str, float] = SIGMA2_POLICY
    sigma2: float = 1.0
    master_seed: int = 0
    out: Optional[str] = None
    workers: int = 1
    block_trials: Optional[int] = field(default=None)

    @property
    def output_path(self) -> str:
        return self.out if self.out else f"{self.command}.csv"

    @property
    def block_size(self) -> int:
        if self.block_trials is not None:
            return self.block_trials
        return DEFAULT_BER_BLOCK if self.command == 'ber' else DEFAULT_SUMRATE_BLOCK

    def alpha_for(self, regularization: float) -> float:
        """The RZF alpha for a given noise-to-power ratio."""
        if self.alpha_policy == SIGMA2_POLICY:
            return regularization
        return float(self.alpha_policy)

    def with_changes(self, **changes) -> 'ExperimentConfig':
        return replace(self, **changes)

    def validate(self) -> 'ExperimentConfig':
        """Checks every field; raises ConfigException naming the first bad one."""
        if self.command not in COMMANDS:
            raise ConfigException('command', f"must be one of {', '.join(COMMANDS)}")
        if self.nt < 1:
            raise ConfigException('nt', "need at least one transmit antenna")
        if self.k_users < 1:
            raise ConfigException('k_users', "need at least one user")
        if not self.snr_db_list:
            raise ConfigException('snr_db_list', "must not be empty")
        if any(b <= a for a, b in zip(self.snr_db_list, self.snr_db_list[1:])):
            raise ConfigException('snr_db_list', "must be strictly increasing")
        if not self.methods:
            raise ConfigException('methods', "must not be empty")
        if self.command != 'equiv' and Method.ZF in self.methods and self.nt < self.k_users:
            raise ConfigException('methods', f"zf needs nt >= k_users, got nt={self.nt}, k_users={self.k_users}")
        if self.trials < 1:
            raise ConfigException('trials', "must be positive")
        if not 1 <= self.min_bits <= self.max_bits:
            raise ConfigException('min_bits', "need 1 <= min_bits <= max_bits")
        if self.alpha_policy != SIGMA2_POLICY:
            try:
                alpha = float(self.alpha_policy)
            except (TypeError, ValueError):
                raise ConfigException('alpha_policy', f"expected 'sigma2' or a number, got {self.alpha_policy!r}")
            if not alpha >= 0 or not np.isfinite(alpha):
                raise ConfigException('alpha_policy', "alpha must be non-negative and finite")
            if self.command == 'equiv':
                raise ConfigException('alpha_policy', "equiv always compares against RZF with alpha = sigma2")
        if not self.sigma2 > 0 or not np.isfinite(self.sigma2):
            raise ConfigException('sigma2', "must be positive and finite")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigException('master_seed', "must be a 64-bit unsigned integer")
        if self.workers < 1:
            raise ConfigException('workers', "must be positive")
        if self.block_size < 1:
            raise ConfigException('block_trials', "must be positive")
        return self


def _map(func, args: Sequence[tuple], executor=None) -> list:
    """Maps `func` over argument tuples, preserving order."""
    if executor is None:
        return [func(*a) for a in args]
    return list(executor.map(func, *zip(*args)))


# SUM RATE
def _sumrate_block(config: ExperimentConfig, trials: range) -> np.ndarray:
    """Sum rates of one block of trials, shaped (trial, snr, method)."""
    ch = sample_trials(config.nt, config.k_users, config.master_seed, trials)
    rates = np.empty((len(trials), len(config.snr_db_list), len(config.methods)))
    for i, snr_db in enumerate(config.snr_db_list):
        pw = NoisePowerModel.from_snr_db(snr_db, config.k_users, config.sigma2)
        regularization = pw.regularization()
        for j, method in enumerate(config.methods):
            try:
                precoder = build_precoder_matrix(ch, method, regularization, config.alpha_for(regularization))
            except (PrecoderException, NumericsException) as e:
                raise SimulationError(config.master_seed, trials[0], e) from e
            rates[:, i, j] = sum_rate(ch, precoder, pw)
    return rates


def run_sumrate(config: ExperimentConfig, executor=None) -> List[SumRateRow]:
    """Average sum rate per (SNR, method).

       Trial t always uses the channel of stream (master_seed, t), for every
       method and every SNR, so methods are compared on common channels."""
    config.validate()
    chunks = split_into_chunks(range(config.trials), config.block_size)
    blocks = _map(_sumrate_block, [(config, chunk) for chunk in chunks], executor)
    rates = np.concatenate(blocks, axis=0)

    means = rates.mean(axis=0)
    if config.trials > 1:
        stderrs = rates.std(axis=0, ddof=1) / np.sqrt(config.trials)
    else:
        stderrs = np.full(means.shape, np.nan)

    rows = []
    for i, snr_db in enumerate(config.snr_db_list):
        for j, method in enumerate(config.methods):
            rows.append(SumRateRow(
                float(snr_db), method.value, config.trials,
                float(means[i, j]), float(stderrs[i, j]), config.master_seed))
            logger.info('sumrate %s @ %s dB: %.4f +- %.4f bits', method.value, snr_db, means[i, j], stderrs[i, j])
    return rows


# BIT ERROR RATE
def point_seed(master_seed: int, snr_index: int) -> int:
    """The seed of one SNR point, shared by every method at that point."""
    return RngStream(master_seed, snr_index).derive_seed()


def run_ber(config: ExperimentConfig, executor=None) -> List[BerRow]:
    """BER per (SNR, method). All methods at one SNR share the point seed,
       hence the same channels, bits and noise."""
    config.validate()
    alpha = None if config.alpha_policy == SIGMA2_POLICY else float(config.alpha_policy)
    rows = []
    for i, snr_db in enumerate(config.snr_db_list):
        seed = point_seed(config.master_seed, i)
        for method in config.methods:
            estimate = simulate_ber_point(
                config.nt, config.k_users, method, snr_db,
                min_bits=config.min_bits,
                max_bits=config.max_bits,
                seed=seed,
                sigma2=config.sigma2,
                alpha=alpha,
                block_trials=config.block_size,
                executor=executor,
                wave=config.workers)
            rows.append(BerRow(
                float(snr_db), method.value, estimate.bits_sent, estimate.bit_errors,
                float(estimate.ber), seed))
    return rows


# EQUIVALENCE
@dataclass(frozen=True)
class EquivReport(object):
    """Summary of a certification run."""
    seed: int
    trials: int
    min_alignment_slnr_rzf: float
    min_alignment_eig_closed: float
    max_lambda_rel_err: float
    max_eigenvalue_rel_err: float
    max_rank_one_residual: float
    first_failure: Optional[Tuple[int, int]] = None

    @property
    def passed(self) -> bool:
        return self.first_failure is None

    @property
    def exit_status(self) -> int:
        return 0 if self.passed else 3


def _equiv_block(config: ExperimentConfig, trials: range) -> np.ndarray:
    """Per (trial, user) checks of one block, shaped (trial, user, check)
       with checks: SLNR/RZF alignment, eigen/closed alignment, relative
       SLNR-vs-lambda error, relative eigenvalue error, rank-one update residual."""
    ch = sample_trials(config.nt, config.k_users, config.master_seed, trials)
    sigma2 = config.sigma2
    checks = np.empty((len(trials), config.k_users, 5))
    for k in range(config.k_users):
        closed = slnr_closed_form(ch, k, sigma2)
        rzf = rzf_direction(ch, k, sigma2)
        eigvec, eigenvalue = slnr_eigenpair(ch, k, sigma2)
        lambda_ = closed.lambda_

        # (A + h h^H)^-1 h from a solver for A = sigma2 I + H_-k H_-k^H alone.
        h_k = ch.column(k)
        leakage = regularized_gram(leave_one_out(ch, k), sigma2)
        updated, _ = rank_one_update_solve(lambda v: hpd_solve(leakage, v), h_k)
        full = regularized_gram(ch.H, sigma2)
        residual = np.linalg.norm((full @ updated[..., np.newaxis])[..., 0] - h_k, axis=-1)

        checks[:, k, 0] = alignment(closed.w, rzf)
        checks[:, k, 1] = alignment(eigvec, closed.w)
        checks[:, k, 2] = np.abs(slnr_value(ch, k, closed.w, sigma2) - lambda_) / lambda_
        checks[:, k, 3] = np.abs(eigenvalue - lambda_) / lambda_
        checks[:, k, 4] = residual / np.linalg.norm(h_k, axis=-1)
    return checks


def run_equiv(config: ExperimentConfig, executor=None) -> Tuple[List[EquivRow], EquivReport]:
    """Certifies, on `trials` random channels and every user, that the SLNR
       precoder equals RZF(alpha = sigma2) up to phase, that the eigen and
       closed-form SLNR paths agree, and that the SLNR of the solution equals
       its eigenvalue lambda."""
    config.validate()
    chunks = split_into_chunks(range(config.trials), config.block_size)
    checks = np.concatenate(_map(_equiv_block, [(config, chunk) for chunk in chunks], executor), axis=0)

    rows = []
    first_failure = None
    for trial in range(config.trials):
        for user in range(config.k_users):
            slnr_rzf, eig_closed, lambda_err = (float(v) for v in checks[trial, user, :3])
            rows.append(EquivRow(trial, user, slnr_rzf, eig_closed, lambda_err, config.master_seed))
            failed = (slnr_rzf < 1.0 - ALIGNMENT_TOL or eig_closed < 1.0 - ALIGNMENT_TOL
                      or lambda_err > LAMBDA_TOL)
            if failed and first_failure is None:
                first_failure = (trial, user)

    report = EquivReport(
        seed=config.master_seed,
        trials=config.trials,
        min_alignment_slnr_rzf=float(checks[..., 0].min()),
        min_alignment_eig_closed=float(checks[..., 1].min()),
        max_lambda_rel_err=float(checks[..., 2].max()),
        max_eigenvalue_rel_err=float(checks[..., 3].max()),
        max_rank_one_residual=float(checks[..., 4].max()),
        first_failure=first_failure)
    logger.info('equiv nt=%d K=%d over %d trials: min alignment slnr/rzf %.16f, eig/closed %.16f, '
                'max lambda err %.3e, max eigenvalue err %.3e, max rank-one residual %.3e',
                config.nt, config.k_users, config.trials, report.min_alignment_slnr_rzf,
                report.min_alignment_eig_closed, report.max_lambda_rel_err,
                report.max_eigenvalue_rel_err, report.max_rank_one_residual)
    return rows, report


def certify(report: EquivReport):
    """Raises CertificationFailed unless the report passed."""
    if not report.passed:
        trial, user = report.first_failure
        raise CertificationFailed(report.seed, trial, user, "equivalence tolerances violated")


def run_experiment(config: ExperimentConfig, executor=None) -> Tuple[list, Optional[EquivReport]]:
    """Dispatches on `config.command`. Returns (rows, report); report is only
       set for equiv."""
    if config.command == 'sumrate':
        return run_sumrate(config, executor), None
    elif config.command == 'ber':
        return run_ber(config, executor), None
    elif config.command == 'equiv':
        return run_equiv(config, executor)
    raise ConfigException('command', f"unknown command '{config.command}'")


def header_for(command: str) -> Tuple[str, ...]:
    return {'sumrate': SumRateRow, 'ber': BerRow, 'equiv': EquivRow}[command]._fields
