"""Experiment presets and JSON configuration files.

   A configuration is assembled in layers, each overriding the previous one:
   the ExperimentConfig defaults, a named preset, a JSON file, then explicit
   command-line values. Unknown keys in a file are reported and ignored."""

import json
import logging
from typing import Optional

from experiments import COMMANDS, SIGMA2_POLICY, ConfigException, ExperimentConfig
from precoders import Method
from utils import parse_methods, parse_snr_list

logger = logging.getLogger(__name__)

_SWEEP_SNRS = tuple(float(s) for s in range(-5, 31, 5))
_SWEEP_METHODS = (Method.ZF, Method.RZF, Method.SLNR_CLOSED)

PRESETS = {
    'fig1a': dict(command='sumrate', nt=4, k_users=4, snr_db_list=_SWEEP_SNRS,
                  trials=2000, methods=_SWEEP_METHODS),
    'fig1b': dict(command='sumrate', nt=2, k_users=2, snr_db_list=_SWEEP_SNRS,
                  trials=2000, methods=_SWEEP_METHODS),
    'fig2a': dict(command='ber', nt=4, k_users=4, snr_db_list=_SWEEP_SNRS,
                  min_bits=100000, max_bits=10000000, methods=_SWEEP_METHODS),
    'fig2b': dict(command='ber', nt=6, k_users=4, snr_db_list=_SWEEP_SNRS,
                  min_bits=100000, max_bits=10000000, methods=_SWEEP_METHODS),
    'equiv': dict(command='equiv', nt=4, k_users=4, trials=1000),
}

# Alternative spellings accepted in files, mapped to ExperimentConfig fields.
_ALIASES = {
    'users': 'k_users',
    'k': 'k_users',
    'snrs': 'snr_db_list',
    'snr_db': 'snr_db_list',
    'seed': 'master_seed',
    'alpha': 'alpha_policy',
    'min-bits': 'min_bits',
    'max-bits': 'max_bits',
    'block-trials': 'block_trials',
}

_INT_FIELDS = ('nt', 'k_users', 'trials', 'min_bits', 'max_bits', 'master_seed', 'workers', 'block_trials')
_FIELDS = set(ExperimentConfig.__dataclass_fields__) - {'command'}


def read_config(path: str) -> dict:
    """Reads a JSON configuration file holding one object."""
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigException('config', f"cannot read {path}: {e.strerror}")
    except json.JSONDecodeError as e:
        raise ConfigException('config', f"{path} is not valid JSON: {e.msg} (line {e.lineno})")
    if not isinstance(data, dict):
        raise ConfigException('config', f"{path} must hold a JSON object")
    return data


def _coerce(key: str, value):
    """Converts a raw setting (from JSON or a flag) to its field type."""
    try:
        if key == 'snr_db_list':
            if isinstance(value, str):
                return tuple(parse_snr_list(value))
            return tuple(float(v) for v in value)
        if key == 'methods':
            if isinstance(value, str):
                return tuple(parse_methods(value))
            return tuple(dict.fromkeys(Method.parse(v) for v in value))
        if key == 'alpha_policy':
            if isinstance(value, str) and value.strip().lower() == SIGMA2_POLICY:
                return SIGMA2_POLICY
            return float(value)
        if key in _INT_FIELDS:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"expected an integer, got {value}")
            return int(value)
        if key == 'sigma2':
            return float(value)
        if key == 'out':
            return str(value)
    except (TypeError, ValueError) as e:
        raise ConfigException(key, str(e))
    return value


def _layer(settings: dict, source: str) -> dict:
    layer = {}
    for raw_key, value in settings.items():
        key = _ALIASES.get(raw_key, raw_key.replace('-', '_'))
        if key == 'command':
            continue
        if key not in _FIELDS:
            logger.warning('ignoring unknown setting %r in %s', raw_key, source)
            continue
        if value is not None:
            layer[key] = _coerce(key, value)
    return layer


def build_config(
        command: str,
        preset: Optional[str] = None,
        config_path: Optional[str] = None,
        **overrides) -> ExperimentConfig:
    """Builds and validates the configuration of `command`.

       Overrides set to None are treated as absent, so unset command-line
       flags leave the preset and file values in place."""
    if command not in COMMANDS:
        raise ConfigException('command', f"must be one of {', '.join(COMMANDS)}")

    settings = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigException('preset', f"unknown preset '{preset}', expected one of {', '.join(sorted(PRESETS))}")
        if PRESETS[preset]['command'] != command:
            logger.warning('preset %s was made for %s, running it as %s', preset, PRESETS[preset]['command'], command)
        settings.update(_layer(PRESETS[preset], f"preset {preset}"))

    if config_path is not None:
        data = read_config(config_path)
        if 'command' in data and data['command'] != command:
            logger.warning('%s names command %r, running %s', config_path, data['command'], command)
        settings.update(_layer(data, config_path))

    settings.update(_layer(overrides, 'command line'))
    logger.debug('%s settings: %s', command, settings)
    return ExperimentConfig(command=command, **settings).validate()
