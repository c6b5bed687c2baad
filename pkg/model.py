"""
Lattice model for driven-dissipative non-reciprocal Kerr chains
Holds the lattice description, its validation, random parameter sampling,
and the linear (hopping + loss) part of the dynamics
"""

import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

import numpy as np

from errors import ParameterError, SpecError

logger = logging.getLogger(__name__)

BOUNDARIES = ('open', 'periodic')
GAMMA_MINIMUM = 'minimum'

# Relative to the largest diffusion eigenvalue; γ = 2κ sits exactly on the bound
TOL_PSD = 1e-10


@dataclass(frozen=True)
class ExcessNoise:
    """Phase-insensitive noise injected through the input port of one site"""
    site: int
    level_db: float


@dataclass(frozen=True)
class RandomDetuningSpec:
    """Uniform distribution on [low, high), reproducible from seed"""
    low: float
    high: float
    seed: int = 0


def _readonly(values: np.ndarray) -> np.ndarray:
    values.setflags(write=False)
    return values


def _per_site(name: str, value, n_sites: int, dtype=float) -> np.ndarray:
    """Broadcast a scalar or check an explicit per-site array"""
    arr = np.asarray(value, dtype=dtype)
    if arr.ndim == 0:
        arr = np.full(n_sites, arr, dtype=dtype)
    if arr.shape != (n_sites,):
        raise ParameterError(f"{name} must be a scalar or have length {n_sites}, got shape {arr.shape}")
    return _readonly(arr.copy())


@dataclass(frozen=True, eq=False)
class LatticeSpec:
    """Full physical description of the chain

    All rates are dimensionless multiples of the reference rate. ``gamma`` is
    stored resolved; ``gamma_minimum`` remembers that it tracks 2|kappa|.
    """
    n_sites: int
    boundary: str
    g: float
    kappa: float
    beta: np.ndarray
    delta: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray
    drives: np.ndarray
    excess_noise: Tuple[ExcessNoise, ...] = ()
    rng_seed: int = 0
    gamma_minimum: bool = field(default=False)

    @classmethod
    def create(cls, n_sites: int, g: float, kappa: float, beta, delta, eta,
               gamma: Union[str, float, Sequence[float]], drives,
               boundary: str = 'open',
               excess_noise: Sequence[Union[ExcessNoise, Tuple[int, float]]] = (),
               rng_seed: int = 0) -> 'LatticeSpec':
        """Build a spec from scalars or per-site arrays"""
        if int(n_sites) != n_sites or n_sites < 1:
            raise ParameterError(f"n_sites must be a positive integer, got {n_sites}")
        n_sites = int(n_sites)
        gamma_minimum = isinstance(gamma, str)
        if gamma_minimum:
            if gamma != GAMMA_MINIMUM:
                raise ParameterError(f"Unknown gamma sentinel: {gamma!r}")
            gamma = 2.0 * abs(kappa)
        noise = tuple(
            item if isinstance(item, ExcessNoise) else ExcessNoise(int(item[0]), float(item[1]))
            for item in excess_noise
        )
        return cls(
            n_sites=n_sites,
            boundary=boundary,
            g=float(g),
            kappa=float(kappa),
            beta=_per_site('beta', beta, n_sites),
            delta=_per_site('delta', delta, n_sites),
            eta=_per_site('eta', eta, n_sites),
            gamma=_per_site('gamma', gamma, n_sites),
            drives=_per_site('drives', drives, n_sites, dtype=complex),
            excess_noise=noise,
            rng_seed=int(rng_seed),
            gamma_minimum=gamma_minimum,
        )

    def with_changes(self, **changes) -> 'LatticeSpec':
        """Copy with some fields replaced; a "minimum" gamma follows a new kappa"""
        gamma = changes.pop('gamma', GAMMA_MINIMUM if self.gamma_minimum else self.gamma)
        params = dict(
            n_sites=self.n_sites, g=self.g, kappa=self.kappa, beta=self.beta,
            delta=self.delta, eta=self.eta, drives=self.drives, boundary=self.boundary,
            excess_noise=self.excess_noise, rng_seed=self.rng_seed,
        )
        params.update(changes)
        n_sites = params['n_sites']
        if n_sites != self.n_sites:
            # per-site arrays of the old size cannot follow a resize
            for name in ('beta', 'delta', 'eta', 'drives'):
                value = np.asarray(params[name])
                if value.ndim == 1 and value.shape[0] != n_sites:
                    params[name] = value[0]
            if not isinstance(gamma, str) and np.ndim(gamma) == 1 and len(gamma) != n_sites:
                gamma = gamma[0]
        return LatticeSpec.create(gamma=gamma, **params)

    @property
    def is_periodic(self) -> bool:
        return self.boundary == 'periodic'

    @property
    def gamma_total(self) -> np.ndarray:
        return self.gamma + self.eta

    @property
    def drive_terms(self) -> np.ndarray:
        """Per-site input term sqrt(2 eta_i) s_i of the equation of motion"""
        return np.sqrt(2.0 * self.eta) * self.drives

    @property
    def drive_scale(self) -> float:
        """Scale used for the steady-state tolerances"""
        return max(float(np.max(np.abs(self.drive_terms))), 1.0)


@dataclass(frozen=True)
class UniformParameters:
    """Site-independent parameters of a translation-invariant chain"""
    g: float
    kappa: float
    beta: float
    delta: float
    eta: float
    gamma: float
    drive: complex

    @property
    def gamma_total(self) -> float:
        return self.gamma + self.eta


def _is_uniform(values: np.ndarray) -> bool:
    scale = max(float(np.max(np.abs(values))), 1e-300)
    return float(np.max(np.abs(values - values[0]))) <= 1e-12 * scale


def uniform_parameters(spec: LatticeSpec) -> UniformParameters:
    """Extract uniform parameters, rejecting site-dependent specs"""
    for name in ('beta', 'delta', 'eta', 'gamma', 'drives'):
        if not _is_uniform(getattr(spec, name)):
            raise ParameterError(f"Uniform parameters required, but {name} varies across sites")
    return UniformParameters(
        g=spec.g, kappa=spec.kappa, beta=float(spec.beta[0]), delta=float(spec.delta[0]),
        eta=float(spec.eta[0]), gamma=float(spec.gamma[0]), drive=complex(spec.drives[0]),
    )


def _neighbor_pairs(spec: LatticeSpec) -> List[Tuple[int, int]]:
    """(i, i+1) bonds, including the wrap-around bond under periodic boundaries"""
    n = spec.n_sites
    pairs = [(i, i + 1) for i in range(n - 1)]
    if spec.is_periodic and n > 1:
        pairs.append((n - 1, 0))
    return pairs


def langevin_blocks(spec: LatticeSpec) -> Tuple[np.ndarray, np.ndarray]:
    """White-noise correlators <F F^dag> and <F^dag F> of the Langevin forces

    Vacuum baths give 2(gamma + eta) on the diagonal of <F F^dag>, +2i kappa on
    (i, i+1) and -2i kappa on (i+1, i). Excess noise adds 2 eta n_add to both
    diagonals at the injection site.
    """
    n = spec.n_sites
    ff_dag = np.diag(2.0 * spec.gamma_total).astype(complex)
    fdag_f = np.zeros((n, n), dtype=complex)
    for i, j in _neighbor_pairs(spec):
        ff_dag[i, j] += 2j * spec.kappa
        ff_dag[j, i] -= 2j * spec.kappa
    for injection in spec.excess_noise:
        n_add = excess_noise_occupation(injection.level_db)
        ff_dag[injection.site, injection.site] += 2.0 * spec.eta[injection.site] * n_add
        fdag_f[injection.site, injection.site] += 2.0 * spec.eta[injection.site] * n_add
    return ff_dag, fdag_f


def excess_noise_occupation(level_db: float) -> float:
    """Thermal occupation whose symmetric quadrature noise is level_db above vacuum"""
    return (10.0 ** (level_db / 10.0) - 1.0) / 2.0


def validate(spec: LatticeSpec) -> List[str]:
    """Return every violated invariant; an empty list means the spec is valid"""
    violations = []
    n = spec.n_sites
    if n < 1:
        return [f"n_sites must be >= 1, got {n}"]
    if spec.boundary not in BOUNDARIES:
        violations.append(f"boundary must be one of {BOUNDARIES}, got {spec.boundary!r}")
    for name in ('beta', 'delta', 'eta', 'gamma', 'drives'):
        values = getattr(spec, name)
        if values.shape != (n,):
            violations.append(f"{name} has length {values.shape[0]}, expected {n}")
            return violations
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            violations.append(f"{name} is not finite at sites {_sites(bad)}")
    if not (np.isfinite(spec.g) and np.isfinite(spec.kappa)):
        violations.append("g and kappa must be finite")
    if spec.g < 0:
        violations.append(f"g must be >= 0, got {spec.g}")
    for name in ('eta', 'gamma'):
        bad = np.flatnonzero(getattr(spec, name) < 0)
        if bad.size:
            violations.append(f"{name} < 0 at sites {_sites(bad)}")
    bad = np.flatnonzero(spec.gamma < 2.0 * abs(spec.kappa))
    if bad.size:
        violations.append(f"gamma < 2|kappa| at sites {_sites(bad)}")
    driven = np.flatnonzero((spec.drives != 0) & ~(spec.eta > 0))
    if driven.size:
        violations.append(f"eta must be > 0 on driven sites {_sites(driven)}")
    for injection in spec.excess_noise:
        if not 0 <= injection.site < n:
            violations.append(f"excess noise site {injection.site} outside 0..{n - 1}")
        elif not spec.eta[injection.site] > 0:
            violations.append(f"eta must be > 0 on excess-noise site {injection.site}")
        if not np.isfinite(injection.level_db):
            violations.append(f"excess noise level at site {injection.site} is not finite")
    if violations:
        return violations

    ff_dag, fdag_f = langevin_blocks(spec)
    eigenvalues = np.concatenate([np.linalg.eigvalsh(ff_dag), np.linalg.eigvalsh(fdag_f)])
    scale = max(float(np.max(eigenvalues)), 1e-300)
    if float(np.min(eigenvalues)) < -TOL_PSD * scale:
        violations.append(f"bath correlation matrix has eigenvalue {np.min(eigenvalues):.3e} < 0")
    return violations


def _sites(indices: np.ndarray) -> str:
    return ",".join(str(int(i)) for i in indices)


def require_valid(spec: LatticeSpec) -> None:
    """Raise SpecError when validate() reports violations"""
    violations = validate(spec)
    if violations:
        raise SpecError(violations)


def sample_detunings(spec: RandomDetuningSpec, n: int) -> np.ndarray:
    """Draw n detunings uniformly from [low, high)"""
    if n < 1:
        raise ParameterError(f"n must be >= 1, got {n}")
    if spec.low > spec.high:
        raise ParameterError(f"low ({spec.low}) must not exceed high ({spec.high})")
    if spec.low == spec.high:
        return np.full(n, float(spec.low))
    rng = np.random.default_rng(spec.seed)
    logger.debug(f"Sampling {n} detunings on [{spec.low}, {spec.high}) with seed {spec.seed}")
    return rng.uniform(spec.low, spec.high, size=n)


def linear_hamiltonian(spec: LatticeSpec) -> np.ndarray:
    """Effective non-Hermitian Hamiltonian of the linear dynamics

    da/dt = -i H a + drive, with H_ii = Delta_i - i(gamma_i + eta_i),
    H_{i,i-1} = g - kappa and H_{i,i+1} = g + kappa.
    """
    require_valid(spec)
    n = spec.n_sites
    h = np.diag(spec.delta - 1j * spec.gamma_total).astype(complex)
    for i, j in _neighbor_pairs(spec):
        h[i, j] += spec.g + spec.kappa
        h[j, i] += spec.g - spec.kappa
    return h


def describe(spec: LatticeSpec) -> str:
    """One-line summary for log messages"""
    return (f"N={spec.n_sites} {spec.boundary} g={spec.g:g} kappa={spec.kappa:g} "
            f"beta~{np.mean(spec.beta):g} eta~{np.mean(spec.eta):g} gamma~{np.mean(spec.gamma):g}")
