"""
Monte-Carlo oracle for the Langevin dynamics
Euler-Maruyama ensembles of the linear fluctuation equations (and of the full
nonlinear equations in doubled phase space) with error bars
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np

from errors import DiffusionError, IntegrationError, ParameterError, SteadyStateError, UnstableSystemError
from model import LatticeSpec, TOL_PSD, linear_hamiltonian
from noise_linear import MomentMatrix, NoiseSystem, build_noise_hamiltonian, is_stable

logger = logging.getLogger(__name__)

CHUNK_SIZE = 64
DEFAULT_TRAJECTORIES = 4096
DT_FACTOR = 0.02
MAX_DT_FACTOR = 0.1
RELAX_FACTOR = 10.0
COLLECT_FACTOR = 50.0
RANK_TOL = 1e-12
BASIN_TOL = 0.1
DIVERGENCE_LIMIT = 1e8
SE_FLOOR = 1e-15


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    """Time-and-ensemble averaged second moments with standard errors"""
    moment_estimate: np.ndarray
    standard_errors: np.ndarray
    n_trajectories: int
    seed: int
    dt: float
    t_relax: float
    t_collect: float
    escaped: int = 0
    mean_field: Optional[np.ndarray] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'n_trajectories': self.n_trajectories,
            'seed': self.seed,
            'dt': self.dt,
            't_relax': self.t_relax,
            't_collect': self.t_collect,
            'escaped': self.escaped,
            'moment_estimate': [[[z.real, z.imag] for z in row] for row in self.moment_estimate],
            'standard_errors': self.standard_errors.tolist(),
        }


@dataclass(frozen=True)
class Comparison:
    """Elementwise agreement of an ensemble with a reference moment matrix"""
    max_z: float
    worst_index: Tuple[int, int]
    n_sigma: float

    @property
    def passed(self) -> bool:
        return self.max_z <= self.n_sigma


def noise_factor(diffusion: np.ndarray) -> np.ndarray:
    """Rank-revealing B with B B^dag = D from the Hermitian eigendecomposition"""
    diffusion = np.asarray(diffusion, dtype=complex)
    if not np.allclose(diffusion, diffusion.conj().T, rtol=0, atol=1e-12 * max(np.max(np.abs(diffusion)), 1.0)):
        raise DiffusionError("Diffusion matrix is not Hermitian")
    eigenvalues, vectors = np.linalg.eigh(diffusion)
    scale = max(float(np.max(np.abs(eigenvalues))), 1e-300)
    if eigenvalues[0] < -TOL_PSD * scale:
        raise DiffusionError(f"Diffusion matrix has eigenvalue {eigenvalues[0]:.3e} < 0")
    keep = eigenvalues > RANK_TOL * scale
    if not np.any(keep):
        return np.zeros((diffusion.shape[0], 1), dtype=complex)
    return vectors[:, keep] * np.sqrt(eigenvalues[keep])


def default_timing(drift: np.ndarray) -> Tuple[float, float, float]:
    """dt, t_relax and t_collect scaled to the drift spectrum"""
    eigenvalues = np.linalg.eigvals(drift)
    radius = float(np.max(np.abs(eigenvalues)))
    decay = float(np.min(-eigenvalues.real))
    return DT_FACTOR / radius, RELAX_FACTOR / decay, COLLECT_FACTOR / decay


def _chunks(n_traj: int) -> List[Tuple[int, int]]:
    return [(index, min(CHUNK_SIZE, n_traj - start))
            for index, start in enumerate(range(0, n_traj, CHUNK_SIZE))]


def _run_ensemble(step: Callable, dimension: int, noise: np.ndarray, origin: np.ndarray,
                  dt: float, n_relax: int, n_collect: int, n_traj: int, seed: int,
                  threads: int, basin: Optional[np.ndarray], abort_on_divergence: bool = False):
    """Integrate trajectories chunk by chunk and reduce in chunk order

    With abort_on_divergence the first blown-up trajectory raises IntegrationError;
    otherwise it is reset, marked escaped and left out of the moments.
    """
    rank = noise.shape[1]
    noise_t = noise.T
    amplitude = np.sqrt(dt / 2.0)

    def run_chunk(chunk: Tuple[int, int]):
        index, size = chunk
        rng = np.random.default_rng([seed, index])
        v = np.tile(origin, (size, 1))
        first = np.zeros((size, dimension), dtype=complex)
        second = np.zeros((size, dimension, dimension), dtype=complex)
        alive = np.ones(size, dtype=bool)
        for n in range(n_relax + n_collect):
            dw = amplitude * (rng.standard_normal((size, rank)) + 1j * rng.standard_normal((size, rank)))
            v = step(v) + dw @ noise_t
            blown = ~np.all(np.isfinite(v), axis=1) | (np.max(np.abs(v), axis=1) > DIVERGENCE_LIMIT)
            if np.any(blown & alive):
                if abort_on_divergence:
                    worst = int(np.argmax(blown & alive))
                    raise IntegrationError(f"Trajectory {index * CHUNK_SIZE + worst} diverged "
                                           f"(|v| > {DIVERGENCE_LIMIT:.0e}) with dt={dt:.3g}", (n + 1) * dt)
                alive &= ~blown
                v[blown] = origin
            if n >= n_relax:
                delta = v - origin
                first += delta
                second += delta[:, :, None] * delta[:, None, :].conj()
        return first / n_collect, second / n_collect, alive

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(run_chunk, _chunks(n_traj)))

    firsts = np.concatenate([r[0] for r in results])
    seconds = np.concatenate([r[1] for r in results])
    alive = np.concatenate([r[2] for r in results])
    if basin is not None:
        drift = np.abs(firsts[:, :basin.size])
        alive &= np.all(drift <= BASIN_TOL * basin, axis=1)
    escaped = int(np.count_nonzero(~alive))
    if escaped == n_traj:
        raise IntegrationError("Every trajectory diverged or left the linearization basin",
                               (n_relax + n_collect) * dt)
    return firsts[alive], seconds[alive], escaped


def _moments(firsts: np.ndarray, seconds: np.ndarray, centered: bool):
    count = seconds.shape[0]
    mean = firsts.mean(axis=0)
    estimate = seconds.mean(axis=0)
    if centered:
        estimate = estimate - np.outer(mean, mean.conj())
    if count > 1:
        spread = np.sqrt(seconds.real.var(axis=0, ddof=1) + seconds.imag.var(axis=0, ddof=1))
        errors = spread / np.sqrt(count)
    else:
        errors = np.full(estimate.shape, np.inf)
    return estimate, np.maximum(errors, SE_FLOOR), mean


def _check_timing(drift: np.ndarray, dt, t_relax, t_collect):
    default_dt, default_relax, default_collect = default_timing(drift)
    dt = default_dt if dt is None else float(dt)
    t_relax = default_relax if t_relax is None else float(t_relax)
    t_collect = default_collect if t_collect is None else float(t_collect)
    radius = float(np.max(np.abs(np.linalg.eigvals(drift))))
    if not 0 < dt < MAX_DT_FACTOR / radius:
        raise ParameterError(f"dt must be in (0, {MAX_DT_FACTOR / radius:.4g}), got {dt}")
    if t_relax < 0 or t_collect <= 0:
        raise ParameterError("t_relax must be >= 0 and t_collect > 0")
    return dt, t_relax, t_collect


def simulate_linear(system: NoiseSystem, dt: Optional[float] = None, t_relax: Optional[float] = None,
                    t_collect: Optional[float] = None, n_traj: int = DEFAULT_TRAJECTORIES,
                    seed: int = 0, threads: int = 1) -> EnsembleResult:
    """Euler-Maruyama ensemble of dv = A v dt + B dW started from v = 0"""
    report = is_stable(system)
    if not report.stable:
        raise UnstableSystemError(report.max_im_lambda)
    if n_traj < 2:
        raise ParameterError(f"n_traj must be >= 2, got {n_traj}")
    dt, t_relax, t_collect = _check_timing(system.drift, dt, t_relax, t_collect)
    propagator = (np.eye(2 * system.n_sites) + dt * system.drift).T
    noise = noise_factor(system.diffusion)

    firsts, seconds, escaped = _run_ensemble(
        lambda v: v @ propagator, 2 * system.n_sites, noise,
        np.zeros(2 * system.n_sites, dtype=complex), dt,
        int(np.ceil(t_relax / dt)), int(np.ceil(t_collect / dt)), n_traj, seed, threads, None,
        abort_on_divergence=True)
    estimate, errors, _ = _moments(firsts, seconds, centered=False)
    logger.info(f"Linear ensemble: {firsts.shape[0]} trajectories, dt={dt:.3g}, max SE {np.max(errors):.2e}")
    return EnsembleResult(estimate, errors, n_traj, seed, dt, t_relax, t_collect, escaped)


def simulate_nonlinear(spec: LatticeSpec, steady, dt: Optional[float] = None,
                       t_relax: Optional[float] = None, t_collect: Optional[float] = None,
                       n_traj: int = DEFAULT_TRAJECTORIES, seed: int = 0, threads: int = 1) -> EnsembleResult:
    """Full Kerr Langevin equations for (a, a~) with a~ standing in for a*

    Moments are taken about each trajectory's mean field. Trajectories whose mean
    drifts more than BASIN_TOL |alpha| away from the steady state count as escaped.
    """
    if not steady.converged:
        raise SteadyStateError("simulate_nonlinear needs a converged steady state")
    if n_traj < 2:
        raise ParameterError(f"n_traj must be >= 2, got {n_traj}")
    system = build_noise_hamiltonian(spec, steady)
    dt, t_relax, t_collect = _check_timing(system.drift, dt, t_relax, t_collect)
    n = spec.n_sites
    h = linear_hamiltonian(spec)
    h_t = h.T
    h_conj_t = h.conj().T
    beta = spec.beta
    drive = spec.drive_terms
    origin = np.concatenate([steady.alpha, steady.alpha.conj()])

    def step(v):
        a = v[:, :n]
        a_tilde = v[:, n:]
        product = a * a_tilde
        da = -1j * (a @ h_t) - 1j * beta * product * a + drive
        da_tilde = 1j * (a_tilde @ h_conj_t) + 1j * beta * product * a_tilde + drive.conj()
        return v + dt * np.concatenate([da, da_tilde], axis=1)

    basin = np.abs(steady.alpha)
    firsts, seconds, escaped = _run_ensemble(
        step, 2 * n, noise_factor(system.diffusion), origin, dt,
        int(np.ceil(t_relax / dt)), int(np.ceil(t_collect / dt)), n_traj, seed, threads,
        basin if np.all(basin > 0) else None)
    if escaped:
        logger.warning(f"{escaped} of {n_traj} trajectories left the linearization basin")
    estimate, errors, mean = _moments(firsts, seconds, centered=True)
    logger.info(f"Nonlinear ensemble: {firsts.shape[0]} trajectories kept, max SE {np.max(errors):.2e}")
    return EnsembleResult(estimate, errors, n_traj, seed, dt, t_relax, t_collect, escaped,
                          mean_field=origin[:n] + mean[:n])


def compare_to_moments(ensemble: EnsembleResult, moments: MomentMatrix, n_sigma: float = 4.0) -> Comparison:
    """Largest elementwise |estimate - M| in units of the standard error"""
    reference = moments.m
    atol = 1e-12 * max(float(np.max(np.abs(reference))), 1.0)
    z = np.abs(ensemble.moment_estimate - reference) / (ensemble.standard_errors + atol)
    worst = np.unravel_index(int(np.argmax(z)), z.shape)
    return Comparison(max_z=float(z[worst]), worst_index=(int(worst[0]), int(worst[1])), n_sigma=n_sigma)
