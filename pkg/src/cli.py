#!/usr/bin/env python3
import logging
import sys
from concurrent.futures import ProcessPoolExecutor

import click

from experiments import (CertificationFailed, ConfigException, EquivReport, certify, header_for,
                         run_experiment)
from linksim import SimulationError
from numerics import NumericsException
from precoders import PrecoderException
from presets import PRESETS, build_config
from results import ResultsMismatch, ResultWriter, verify_results

_ver = "1.0.0"
_name = "precoderlab"

EXIT_OK = 0
EXIT_SIMULATION = 1
EXIT_CONFIG = 2
EXIT_CERTIFICATION = 3
EXIT_MISMATCH = 4

logger = logging.getLogger(_name)


def setup_logging(verbose: int):
    level = logging.WARNING
    if verbose == 1:
        level = logging.INFO
    elif verbose > 1:
        level = logging.DEBUG
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def print_report(report: EquivReport):
    print(f"trials:                    {report.trials}")
    print(f"min alignment slnr/rzf:    {report.min_alignment_slnr_rzf!r}")
    print(f"min alignment eig/closed:  {report.min_alignment_eig_closed!r}")
    print(f"max lambda rel. error:     {report.max_lambda_rel_err:.3e}")
    print(f"max eigenvalue rel. error: {report.max_eigenvalue_rel_err:.3e}")
    print(f"max rank-one residual:     {report.max_rank_one_residual:.3e}")
    print("PASS" if report.passed else "FAIL")


def execute(config):
    """Runs one validated configuration and writes its CSV. Returns the exit
       status."""
    logger.info("running %s with %s", config.command, config)
    executor = ProcessPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        rows, report = run_experiment(config, executor)
    finally:
        if executor is not None:
            executor.shutdown()

    with ResultWriter(config.output_path, header_for(config.command)) as writer:
        writer.write_rows(rows)
    print(f"{config.output_path}: {writer.row_count} rows, sha3-256 {writer.hexdigest()}")

    if report is not None:
        print_report(report)
        certify(report)
    return EXIT_OK


def run_command(func, *args, **kwargs) -> int:
    """Runs `func`, mapping failures to an error message and exit status."""
    try:
        return func(*args, **kwargs)
    except ConfigException as e:
        click.echo(f"configuration error: {e}", err=True)
        return EXIT_CONFIG
    except CertificationFailed as e:
        click.echo(f"certification failed at seed {e.seed}, trial {e.trial}, user {e.user}", err=True)
        return EXIT_CERTIFICATION
    except ResultsMismatch as e:
        click.echo(str(e), err=True)
        return EXIT_MISMATCH
    except SimulationError as e:
        click.echo(f"simulation failed: {e}", err=True)
        return EXIT_SIMULATION
    except (PrecoderException, NumericsException) as e:
        click.echo(f"numerical failure: {type(e).__name__}: {e}", err=True)
        return EXIT_SIMULATION
    except OSError as e:
        click.echo(f"i/o error: {e}", err=True)
        return EXIT_SIMULATION


def experiment_options(func):
    """Flags shared by every experiment command. Defaults are None so that
       presets and config files can supply the value."""
    options = [
        click.option("--nt", type=int, help="transmit antennas"),
        click.option("--users", "k_users", type=int, help="number of single-antenna users K"),
        click.option("--snrs", "snr_db_list", help="SNR points in dB: start:step:stop or a comma list"),
        click.option("--trials", type=int, help="channel realizations"),
        click.option("--min-bits", type=int, help="minimum bits per BER point"),
        click.option("--max-bits", type=int, help="maximum bits per BER point"),
        click.option("--methods", help="comma list of zf, rzf, slnr, slnr-eig"),
        click.option("--alpha", "alpha_policy", help="RZF regularization: 'sigma2' or a number"),
        click.option("--sigma2", type=float, help="noise variance"),
        click.option("--seed", "master_seed", type=int, help="master seed"),
        click.option("--out", help="output CSV path"),
        click.option("--workers", type=int, help="worker processes"),
        click.option("--block-trials", type=int, help="trials per work block"),
        click.option("--preset", type=click.Choice(sorted(PRESETS)), help="named experiment preset"),
        click.option("--config", "config_path", type=click.Path(), help="JSON configuration file"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _run(ctx, command, preset, config_path, **overrides):
    def job():
        return execute(build_config(command, preset=preset, config_path=config_path, **overrides))
    ctx.exit(run_command(job))


@click.group()
@click.version_option(_ver, prog_name=_name)
@click.option("-v", "--verbose", count=True, help="-v for progress, -vv for debug output")
def precoderlab(verbose):
    """Monte-Carlo study of ZF, RZF and SLNR downlink precoders."""
    setup_logging(verbose)


@precoderlab.command()
@experiment_options
@click.pass_context
def sumrate(ctx, **kwargs):
    """Average sum rate versus SNR."""
    _run(ctx, 'sumrate', **kwargs)


@precoderlab.command()
@experiment_options
@click.pass_context
def ber(ctx, **kwargs):
    """QPSK bit error rate versus SNR."""
    _run(ctx, 'ber', **kwargs)


@precoderlab.command()
@experiment_options
@click.pass_context
def equiv(ctx, **kwargs):
    """Certify SLNR = RZF(alpha = sigma2) up to phase."""
    _run(ctx, 'equiv', **kwargs)


@precoderlab.command()
@click.argument("path", type=click.Path())
@click.pass_context
def verify(ctx, path):
    """Check a result CSV against its .sha3 digest."""
    def job():
        print(f"{path}: ok, sha3-256 {verify_results(path)}")
        return EXIT_OK
    ctx.exit(run_command(job))


if __name__ == "__main__":
    precoderlab()
