"""
Model configuration ingestion
Reads the JSON lattice document, rejects unknown keys, and resolves
broadcast, explicit and random per-site values into a LatticeSpec
"""

import json
import logging
from typing import Any, Dict, Optional

import numpy as np
from decouple import config as env_config

from errors import ConfigError, KerrLatticeError
from model import GAMMA_MINIMUM, ExcessNoise, LatticeSpec, RandomDetuningSpec, sample_detunings

logger = logging.getLogger(__name__)

REQUIRED_KEYS = ('n_sites', 'g', 'kappa', 'beta', 'delta', 'eta', 'gamma', 'drives')
OPTIONAL_KEYS = ('boundary', 'excess_noise', 'rng_seed')
ALLOWED_KEYS = REQUIRED_KEYS + OPTIONAL_KEYS

RANDOM_KEYS = {'low', 'high', 'seed'}
DRIVE_KEYS = {'amplitude', 'phase', 'pattern'}
DRIVE_PATTERNS = ('uniform', 'staggered')

# Offsets decorrelate random arrays that fall back to the global rng_seed
SEED_OFFSETS = {'beta': 1, 'delta': 2, 'eta': 3, 'gamma': 4, 'drives': 5}


class Settings:
    """Process-level defaults, overridable from the environment"""

    LOG_LEVEL = env_config('KERRLAT_LOG_LEVEL', default='INFO')
    LOG_FILE = env_config('KERRLAT_LOG_FILE', default='')
    THREADS = env_config('KERRLAT_THREADS', default=1, cast=int)
    OUT_DIR = env_config('KERRLAT_OUT', default='results')


def load_spec(path: str, seed_override: Optional[int] = None) -> LatticeSpec:
    """Load a LatticeSpec from a JSON file"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}")
    if not text.strip():
        raise ConfigError(f"Config {path} is empty; missing required key '{REQUIRED_KEYS[0]}'",
                          key=REQUIRED_KEYS[0])
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON in {path}: {e.msg}", line=e.lineno, column=e.colno)
    spec = spec_from_dict(data, seed_override=seed_override)
    logger.info(f"Loaded lattice config {path}")
    return spec


def spec_from_dict(data: Dict[str, Any], seed_override: Optional[int] = None) -> LatticeSpec:
    """Build a LatticeSpec from a parsed config document"""
    if not isinstance(data, dict):
        raise ConfigError("Config root must be a JSON object")
    unknown = sorted(set(data) - set(ALLOWED_KEYS))
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}", key=unknown[0])
    for key in REQUIRED_KEYS:
        if key not in data:
            raise ConfigError(f"Missing required key '{key}'", key=key)

    n_sites = data['n_sites']
    if not isinstance(n_sites, int) or isinstance(n_sites, bool) or n_sites < 1:
        raise ConfigError(f"n_sites must be a positive integer, got {n_sites!r}", key='n_sites')
    rng_seed = data.get('rng_seed', 0) if seed_override is None else seed_override
    if not isinstance(rng_seed, int) or rng_seed < 0:
        raise ConfigError(f"rng_seed must be an unsigned integer, got {rng_seed!r}", key='rng_seed')

    boundary = data.get('boundary', 'open')
    if boundary not in ('open', 'periodic'):
        raise ConfigError(f"boundary must be 'open' or 'periodic', got {boundary!r}", key='boundary')

    gamma = data['gamma']
    if isinstance(gamma, str):
        if gamma != GAMMA_MINIMUM:
            raise ConfigError(f"gamma sentinel must be '{GAMMA_MINIMUM}', got {gamma!r}", key='gamma')
    else:
        gamma = _real_array('gamma', gamma, n_sites, rng_seed)

    try:
        return LatticeSpec.create(
            n_sites=n_sites,
            g=_real_scalar('g', data['g']),
            kappa=_real_scalar('kappa', data['kappa']),
            beta=_real_array('beta', data['beta'], n_sites, rng_seed),
            delta=_real_array('delta', data['delta'], n_sites, rng_seed),
            eta=_real_array('eta', data['eta'], n_sites, rng_seed),
            gamma=gamma,
            drives=_drive_array(data['drives'], n_sites, rng_seed),
            boundary=boundary,
            excess_noise=_excess_noise(data.get('excess_noise', [])),
            rng_seed=rng_seed,
        )
    except ConfigError:
        raise
    except KerrLatticeError as e:
        raise ConfigError(str(e))


def spec_to_dict(spec: LatticeSpec) -> Dict[str, Any]:
    """Explicit-array config document that reloads to an identical spec"""
    return {
        'n_sites': spec.n_sites,
        'boundary': spec.boundary,
        'g': spec.g,
        'kappa': spec.kappa,
        'beta': spec.beta.tolist(),
        'delta': spec.delta.tolist(),
        'eta': spec.eta.tolist(),
        'gamma': GAMMA_MINIMUM if spec.gamma_minimum else spec.gamma.tolist(),
        'drives': [[z.real, z.imag] for z in spec.drives],
        'excess_noise': [{'site': e.site, 'db': e.level_db} for e in spec.excess_noise],
        'rng_seed': spec.rng_seed,
    }


def _real_scalar(key: str, value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}", key=key)
    return float(value)


def _random_values(key: str, value: Dict[str, Any], n_sites: int, rng_seed: int) -> np.ndarray:
    extra = sorted(set(value) - RANDOM_KEYS)
    if extra or 'low' not in value or 'high' not in value:
        raise ConfigError(f"{key}: random spec needs exactly low, high and optional seed", key=key)
    seed = value.get('seed', rng_seed + SEED_OFFSETS.get(key, 0))
    sampler = RandomDetuningSpec(low=_real_scalar(key, value['low']),
                                 high=_real_scalar(key, value['high']), seed=int(seed))
    try:
        return sample_detunings(sampler, n_sites)
    except KerrLatticeError as e:
        raise ConfigError(f"{key}: {e}", key=key)


def _real_array(key: str, value: Any, n_sites: int, rng_seed: int) -> np.ndarray:
    """Scalar, explicit list or random-spec object"""
    if isinstance(value, dict):
        return _random_values(key, value, n_sites, rng_seed)
    if isinstance(value, list):
        if len(value) != n_sites:
            raise ConfigError(f"{key} has {len(value)} entries, expected {n_sites}", key=key)
        return np.array([_real_scalar(key, v) for v in value])
    return np.full(n_sites, _real_scalar(key, value))


def _drive_array(value: Any, n_sites: int, rng_seed: int) -> np.ndarray:
    if isinstance(value, dict) and set(value) & DRIVE_KEYS:
        extra = sorted(set(value) - DRIVE_KEYS)
        if extra:
            raise ConfigError(f"drives: unknown keys {', '.join(extra)}", key='drives')
        amplitude = _real_array('drives', value.get('amplitude', 1.0), n_sites, rng_seed)
        phase = _real_scalar('drives', value.get('phase', 0.0))
        pattern = value.get('pattern', 'uniform')
        if pattern not in DRIVE_PATTERNS:
            raise ConfigError(f"drives: pattern must be one of {DRIVE_PATTERNS}, got {pattern!r}",
                              key='drives')
        signs = (-1.0) ** np.arange(n_sites) if pattern == 'staggered' else np.ones(n_sites)
        return signs * amplitude * np.exp(1j * phase)
    if isinstance(value, list):
        if len(value) != n_sites:
            raise ConfigError(f"drives has {len(value)} entries, expected {n_sites}", key='drives')
        out = np.empty(n_sites, dtype=complex)
        for i, entry in enumerate(value):
            if isinstance(entry, list):
                if len(entry) != 2:
                    raise ConfigError(f"drives[{i}] must be a [re, im] pair", key='drives')
                out[i] = complex(_real_scalar('drives', entry[0]), _real_scalar('drives', entry[1]))
            else:
                out[i] = _real_scalar('drives', entry)
        return out
    return _real_array('drives', value, n_sites, rng_seed).astype(complex)


def _excess_noise(value: Any):
    if not isinstance(value, list):
        raise ConfigError("excess_noise must be a list of {site, db} objects", key='excess_noise')
    entries = []
    for item in value:
        if not isinstance(item, dict) or set(item) != {'site', 'db'}:
            raise ConfigError("excess_noise entries need exactly 'site' and 'db'", key='excess_noise')
        site = item['site']
        if not isinstance(site, int) or isinstance(site, bool):
            raise ConfigError(f"excess_noise site must be an integer, got {site!r}", key='excess_noise')
        entries.append(ExcessNoise(site=site, level_db=_real_scalar('excess_noise', item['db'])))
    return entries
