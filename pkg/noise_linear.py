"""
Linearized quantum noise around a mean-field steady state
Assembles the noise Hamiltonian and the Langevin diffusion matrix, solves the
steady-state Lyapunov equation and turns the moments into noise observables
"""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from errors import DiffusionError, ParameterError, SteadyStateError, UnstableSystemError
from model import ExcessNoise, LatticeSpec, TOL_PSD, langevin_blocks, linear_hamiltonian

if TYPE_CHECKING:
    from meanfield import SteadyState

logger = logging.getLogger(__name__)

STABILITY_MARGIN = 1e-9
TOL_LYAPUNOV = 1e-10
DB_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class NoiseSystem:
    """Drift A = -i H_N and diffusion D of the linear fluctuation dynamics"""
    drift: np.ndarray
    diffusion: np.ndarray
    n_sites: int

    @property
    def noise_hamiltonian(self) -> np.ndarray:
        return 1j * self.drift


@dataclass(frozen=True, eq=False)
class MomentMatrix:
    """Steady-state M = <v v^dag> for v = (da_1..da_N, da_1^dag..da_N^dag)"""
    m: np.ndarray
    residual: float = 0.0

    @property
    def n_sites(self) -> int:
        return self.m.shape[0] // 2

    def commutator_defect(self) -> float:
        """max |M[i][j] - M[N+j][N+i] - delta_ij|"""
        n = self.n_sites
        upper = self.m[:n, :n]
        lower = self.m[n:, n:]
        return float(np.max(np.abs(upper - lower.T - np.eye(n))))


@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    max_im_lambda: float


@dataclass
class NoiseSweep:
    """Per-site noise in dB for each injected level"""
    site: int
    levels_db: np.ndarray
    intensity_db: np.ndarray
    phase_db: np.ndarray


@dataclass
class KappaSweep:
    """Intensity noise versus non-reciprocity, with and without injection"""
    site: int
    level_db: float
    kappas: np.ndarray
    baseline_db: np.ndarray
    injected_db: np.ndarray


def noise_hamiltonian_matrix(spec: LatticeSpec, alpha: np.ndarray,
                             h_lin: Optional[np.ndarray] = None) -> np.ndarray:
    """H_N = [[U, V], [-V*, -U*]] with U = 2 beta |alpha|^2 + H_lin and V = beta alpha^2"""
    if h_lin is None:
        h_lin = linear_hamiltonian(spec)
    alpha = np.asarray(alpha, dtype=complex)
    u = h_lin + np.diag(2.0 * spec.beta * np.abs(alpha) ** 2)
    v = np.diag(spec.beta * alpha ** 2)
    return np.block([[u, v], [-v.conj(), -u.conj()]])


def drift_matrix(spec: LatticeSpec, alpha: np.ndarray, h_lin: Optional[np.ndarray] = None) -> np.ndarray:
    """Jacobian of the mean-field flow in (alpha, alpha*) coordinates"""
    return -1j * noise_hamiltonian_matrix(spec, alpha, h_lin)


def build_diffusion(spec: LatticeSpec) -> np.ndarray:
    """Diffusion matrix of G = (F, F^dag); anomalous blocks vanish for phase-insensitive baths"""
    ff_dag, fdag_f = langevin_blocks(spec)
    n = spec.n_sites
    zero = np.zeros((n, n), dtype=complex)
    diffusion = np.block([[ff_dag, zero], [zero, fdag_f]])
    if not np.allclose(diffusion, diffusion.conj().T, rtol=0, atol=1e-14):
        raise DiffusionError("Diffusion matrix is not Hermitian")
    eigenvalues = np.linalg.eigvalsh(diffusion)
    scale = max(float(np.max(np.abs(eigenvalues))), 1e-300)
    if eigenvalues[0] < -TOL_PSD * scale:
        raise DiffusionError(f"Diffusion matrix has eigenvalue {eigenvalues[0]:.3e} < 0")
    return diffusion


def build_noise_hamiltonian(spec: LatticeSpec, steady: 'SteadyState') -> NoiseSystem:
    """Linearize around a converged steady state"""
    if not steady.converged:
        raise SteadyStateError(f"Steady state did not converge: {steady.diagnostic}")
    return NoiseSystem(
        drift=drift_matrix(spec, steady.alpha),
        diffusion=build_diffusion(spec),
        n_sites=spec.n_sites,
    )


def spectrum(system: NoiseSystem) -> np.ndarray:
    """Eigenvalues of H_N, ordered by real then imaginary part"""
    eigenvalues = np.linalg.eigvals(system.noise_hamiltonian)
    return eigenvalues[np.lexsort((eigenvalues.imag, eigenvalues.real))]


def is_stable(system: NoiseSystem) -> StabilityReport:
    """Stable when every eigenvalue of H_N has Im < -STABILITY_MARGIN"""
    max_im = float(np.max(np.linalg.eigvals(system.noise_hamiltonian).imag))
    return StabilityReport(stable=max_im < -STABILITY_MARGIN, max_im_lambda=max_im)


def solve_lyapunov(system: NoiseSystem) -> MomentMatrix:
    """Solve A M + M A^dag + D = 0 for the steady-state moments"""
    report = is_stable(system)
    if not report.stable:
        raise UnstableSystemError(report.max_im_lambda)
    a = system.drift
    d = system.diffusion
    m = solve_continuous_lyapunov(a, -d)
    m = 0.5 * (m + m.conj().T)

    d_norm = max(float(np.linalg.norm(d)), 1e-300)
    residual = float(np.linalg.norm(a @ m + m @ a.conj().T + d)) / d_norm
    if residual > TOL_LYAPUNOV:
        logger.warning(f"Lyapunov residual {residual:.3e} above {TOL_LYAPUNOV:.0e}")
    logger.info(f"Lyapunov solved for N={system.n_sites}, relative residual {residual:.2e}")
    return MomentMatrix(m=m, residual=residual)


def _quadrature_variance(moments: MomentMatrix, steady: 'SteadyState', site: int, sign: float) -> float:
    n = moments.n_sites
    if not 0 <= site < n:
        raise ParameterError(f"site {site} outside 0..{n - 1}")
    alpha = steady.alpha[site]
    if alpha == 0:
        raise ParameterError(f"Quadrature undefined at site {site}: zero mean-field amplitude")
    m = moments.m
    rotated = np.exp(-2j * np.angle(alpha)) * m[site, n + site]
    return float(np.real(m[site, site] + m[n + site, n + site]) + sign * 2.0 * np.real(rotated))


def _to_db(variance: float) -> float:
    return float(10.0 * np.log10(max(variance, DB_FLOOR)))


def intensity_noise_db(moments: MomentMatrix, steady: 'SteadyState', site: int) -> float:
    """Amplitude-quadrature noise relative to shot noise"""
    return _to_db(_quadrature_variance(moments, steady, site, +1.0))


def phase_noise_db(moments: MomentMatrix, steady: 'SteadyState', site: int) -> float:
    """Phase-quadrature noise relative to shot noise"""
    return _to_db(_quadrature_variance(moments, steady, site, -1.0))


def covariance_map(moments: MomentMatrix, steady: 'SteadyState') -> np.ndarray:
    """Symmetrized intensity covariances <dn_i dn_j> with dn_i = alpha_i* da_i + alpha_i da_i^dag"""
    n = moments.n_sites
    alpha = np.asarray(steady.alpha, dtype=complex)
    if np.any(alpha == 0):
        raise ParameterError("covariance_map needs non-zero amplitudes at every site")
    m = moments.m
    conj = alpha.conj()
    cov = (np.outer(conj, conj) * m[:n, n:]
           + np.outer(conj, alpha) * m[:n, :n]
           + np.outer(alpha, conj) * m[n:, n:]
           + np.outer(alpha, alpha) * m[n:, :n])
    cov = cov.real
    return 0.5 * (cov + cov.T)


def noise_profile(spec: LatticeSpec, steady: 'SteadyState', moments: MomentMatrix) -> List[Dict[str, Any]]:
    """Per-site photon number and quadrature noise"""
    return [
        {
            'site': i,
            'photon_number': float(abs(steady.alpha[i]) ** 2),
            'intensity_db': intensity_noise_db(moments, steady, i),
            'phase_db': phase_noise_db(moments, steady, i),
        }
        for i in range(spec.n_sites)
    ]


def _with_injection(spec: LatticeSpec, site: int, level_db: float) -> LatticeSpec:
    others = [e for e in spec.excess_noise if e.site != site]
    return spec.with_changes(excess_noise=others + [ExcessNoise(site, float(level_db))])


def noise_immunity_sweep(spec: LatticeSpec, steady: 'SteadyState', site: int,
                         levels_db: Sequence[float]) -> NoiseSweep:
    """Intensity and phase noise at every site while the injected level at one site varies"""
    levels = np.asarray(levels_db, dtype=float)
    system = build_noise_hamiltonian(spec, steady)
    intensity = np.empty((levels.size, spec.n_sites))
    phase = np.empty((levels.size, spec.n_sites))
    for row, level in enumerate(levels):
        injected = _with_injection(spec, site, level)
        moments = solve_lyapunov(NoiseSystem(system.drift, build_diffusion(injected), spec.n_sites))
        for i in range(spec.n_sites):
            intensity[row, i] = intensity_noise_db(moments, steady, i)
            phase[row, i] = phase_noise_db(moments, steady, i)
    logger.info(f"Noise immunity sweep at site {site} over {levels.size} levels")
    return NoiseSweep(site, levels, intensity, phase)


def kappa_sweep(spec: LatticeSpec, kappas: Sequence[float], site: int, level_db: float) -> KappaSweep:
    """Intensity noise versus kappa; a "minimum" gamma follows each kappa"""
    from meanfield import find_steady_state

    kappas = np.asarray(kappas, dtype=float)
    baseline = np.empty((kappas.size, spec.n_sites))
    injected = np.empty((kappas.size, spec.n_sites))
    for row, kappa in enumerate(kappas):
        spec_k = spec.with_changes(kappa=float(kappa))
        steady = find_steady_state(spec_k)
        sweep = noise_immunity_sweep(spec_k, steady, site, [0.0, level_db])
        baseline[row] = sweep.intensity_db[0]
        injected[row] = sweep.intensity_db[1]
    return KappaSweep(site, float(level_db), kappas, baseline, injected)
