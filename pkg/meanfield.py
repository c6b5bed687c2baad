"""
Mean-field dynamics of the driven Kerr lattice
Integrates the nonlinear equations, finds pump-from-zero steady states,
solves the uniform PBC steady-state cubic, sweeps the input flux, and runs
transient perturbation experiments
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp, trapezoid

from errors import ExceptionalPointError, IntegrationError, ParameterError, SteadyStateError, WindingError
from model import LatticeSpec, linear_hamiltonian, require_valid, uniform_parameters
import noise_linear
import spectral_topology

logger = logging.getLogger(__name__)

RTOL = 1e-8
ATOL = 1e-10
TOL_SS_REL = 1e-6
TOL_NEWTON_REL = 1e-10
MARCH_HORIZON = 1e3
MAX_NEWTON_STEPS = 40


@dataclass(frozen=True, eq=False)
class SteadyState:
    """Mean-field fixed point alpha_i with its convergence record"""
    alpha: np.ndarray
    residual_norm: float
    converged: bool
    diagnostic: str = ''
    march_time: float = 0.0

    @property
    def photon_numbers(self) -> np.ndarray:
        return np.abs(self.alpha) ** 2


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled solution of the deterministic mean-field equations"""
    times: np.ndarray
    states: np.ndarray

    def photon_numbers(self) -> np.ndarray:
        return np.abs(self.states) ** 2


@dataclass(frozen=True, eq=False)
class PerturbationResponse:
    """Fractional photon-number deviation dn_i(t)/n_i(0) after kicking one site"""
    times: np.ndarray
    response: np.ndarray
    site: int
    epsilon: float


@dataclass
class FluxRoot:
    photon_number: float
    stable: bool
    max_im_lambda: float
    braid_degree: Optional[int]


@dataclass
class FluxPoint:
    flux: float
    roots: List[FluxRoot]

    @property
    def pumped(self) -> Optional[FluxRoot]:
        """Root reached by pumping from zero: the lowest stable one"""
        for root in self.roots:
            if root.stable:
                return root
        return None


@dataclass
class BraidTransition:
    flux_before: float
    flux_after: float
    degree_before: int
    degree_after: int
    exceptional_point: spectral_topology.ExceptionalPoint
    on_stable_branch: bool


@dataclass
class FluxSweep:
    points: List[FluxPoint]
    transitions: List[BraidTransition] = field(default_factory=list)

    def degree_sequence(self) -> List[int]:
        """Braid degrees along the pump-from-zero branch, repeats collapsed"""
        sequence = []
        for point in self.points:
            root = point.pumped
            if root is None or root.braid_degree is None:
                continue
            if not sequence or sequence[-1] != root.braid_degree:
                sequence.append(root.braid_degree)
        return sequence


def _rhs_function(spec: LatticeSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Right-hand side with the linear Hamiltonian assembled once"""
    h = linear_hamiltonian(spec)
    beta = spec.beta
    drive = spec.drive_terms

    def rhs(a: np.ndarray) -> np.ndarray:
        return -1j * (h @ a) - 1j * beta * (a.real ** 2 + a.imag ** 2) * a + drive
    return rhs


def meanfield_rhs(spec: LatticeSpec, a: Sequence[complex]) -> np.ndarray:
    """d alpha/dt of the mean-field equations at state a"""
    a = np.asarray(a, dtype=complex)
    if a.shape != (spec.n_sites,):
        raise ParameterError(f"State has shape {a.shape}, expected ({spec.n_sites},)")
    return _rhs_function(spec)(a)


def integrate_transient(spec: LatticeSpec, initial: Sequence[complex], t_end: float,
                        t_eval: Optional[np.ndarray] = None, max_step: float = np.inf,
                        rtol: float = RTOL, atol: float = ATOL) -> Trajectory:
    """Integrate the deterministic equations with adaptive RK45"""
    if not t_end > 0:
        raise ParameterError(f"t_end must be positive, got {t_end}")
    initial = np.asarray(initial, dtype=complex)
    if initial.shape != (spec.n_sites,):
        raise ParameterError(f"Initial state has shape {initial.shape}, expected ({spec.n_sites},)")
    rhs = _rhs_function(spec)
    sol = solve_ivp(lambda t, y: rhs(y), (0.0, t_end), initial, method='RK45',
                    t_eval=t_eval, rtol=rtol, atol=atol, max_step=max_step)
    if sol.status < 0:
        raise IntegrationError(f"Mean-field integration failed: {sol.message}", float(sol.t[-1]))
    return Trajectory(times=sol.t, states=sol.y.T.copy())


def _residual(rhs, a: np.ndarray) -> float:
    return float(np.max(np.abs(rhs(a))))


def _newton_refine(spec: LatticeSpec, rhs, a: np.ndarray, tol: float):
    """Damped Newton on (Re alpha, Im alpha); never accepts a step that raises the residual"""
    n = spec.n_sites
    h = linear_hamiltonian(spec)
    residual = _residual(rhs, a)
    steps = 0
    for steps in range(1, MAX_NEWTON_STEPS + 1):
        f = rhs(a)
        drift = noise_linear.drift_matrix(spec, a, h)
        try:
            delta = np.linalg.solve(drift, -np.concatenate([f, f.conj()]))[:n]
        except np.linalg.LinAlgError:
            logger.debug("Newton Jacobian is singular")
            break
        scale = 1.0
        while scale > 1.0 / 64:
            trial = a + scale * delta
            trial_residual = _residual(rhs, trial)
            if trial_residual < residual:
                a, residual = trial, trial_residual
                break
            scale /= 2
        else:
            break
        if residual < tol * 1e-4:
            break
    logger.debug(f"Newton stopped after {steps} steps, residual {residual:.3e}")
    return a, residual


def find_steady_state(spec: LatticeSpec, initial: Optional[Sequence[complex]] = None,
                      t_max: Optional[float] = None) -> SteadyState:
    """Pump from the ground state (or an explicit initial state) and refine with Newton"""
    require_valid(spec)
    rhs = _rhs_function(spec)
    scale = spec.drive_scale
    tol_ss = TOL_SS_REL * scale
    tol_newton = TOL_NEWTON_REL * scale
    rate = float(np.min(spec.gamma_total))
    if t_max is None:
        t_max = MARCH_HORIZON / rate if rate > 0 else MARCH_HORIZON

    a = np.zeros(spec.n_sites, dtype=complex) if initial is None else np.asarray(initial, dtype=complex)
    if a.shape != (spec.n_sites,):
        raise ParameterError(f"Initial state has shape {a.shape}, expected ({spec.n_sites},)")

    march_time = 0.0
    if _residual(rhs, a) >= tol_ss:
        def settled(t, y):
            return _residual(rhs, y) - tol_ss
        settled.terminal = True
        settled.direction = -1

        sol = solve_ivp(lambda t, y: rhs(y), (0.0, t_max), a, method='RK45',
                        rtol=RTOL, atol=ATOL, events=settled)
        a = sol.y[:, -1]
        march_time = float(sol.t[-1])
        if sol.status < 0:
            message = f"time march failed at t={march_time:.4g}: {sol.message}"
            logger.warning(message)
            return SteadyState(a, _residual(rhs, a), False, message, march_time)
        if sol.status != 1:
            residual = _residual(rhs, a)
            message = (f"no stable steady state: residual {residual:.3e} above {tol_ss:.3e} "
                       f"after t={march_time:.4g}")
            logger.warning(message)
            return SteadyState(a, residual, False, message, march_time)
    logger.debug(f"Time march settled at t={march_time:.4g}")

    a, residual = _newton_refine(spec, rhs, a, tol_newton)
    converged = residual < tol_newton
    diagnostic = '' if converged else f"Newton stalled at residual {residual:.3e}"
    if converged:
        logger.info(f"Steady state found: residual {residual:.2e}, mean n {np.mean(np.abs(a) ** 2):.4g}")
    else:
        logger.warning(diagnostic)
    return SteadyState(a, residual, converged, diagnostic, march_time)


def _cubic_coefficients(spec: LatticeSpec, flux: float):
    p = uniform_parameters(spec)
    shift = p.delta + 2.0 * p.g
    return [p.beta ** 2, 2.0 * p.beta * shift, p.gamma_total ** 2 + shift ** 2, -2.0 * p.eta * flux]


def pbc_photon_number(spec: LatticeSpec, flux: Optional[float] = None) -> List[float]:
    """Non-negative real roots of [gamma_tot^2 + (Delta + beta n + 2g)^2] n = 2 eta |s|^2"""
    if not spec.is_periodic:
        raise ParameterError("pbc_photon_number needs periodic boundary conditions")
    if flux is None:
        flux = abs(uniform_parameters(spec).drive) ** 2
    if flux < 0:
        raise ParameterError(f"flux must be >= 0, got {flux}")
    coeffs = _cubic_coefficients(spec, flux)
    if coeffs[0] == 0:
        if coeffs[2] == 0:
            return []
        return [-coeffs[3] / coeffs[2]]

    polynomial = np.poly1d(coeffs)
    derivative = polynomial.deriv()
    roots = []
    for root in np.roots(coeffs):
        if abs(root.imag) > 1e-6 * max(1.0, abs(root)):
            continue
        n = root.real
        for _ in range(3):
            slope = derivative(n)
            if slope == 0:
                break
            n -= polynomial(n) / slope
        if n < -1e-14:
            continue
        n = max(n, 0.0)
        if all(abs(n - r) > 1e-9 * max(1.0, abs(n)) for r in roots):
            roots.append(n)
    return sorted(roots)


def uniform_steady_state(spec: LatticeSpec, photon_number: float) -> SteadyState:
    """Uniform PBC fixed point belonging to one root of the steady-state cubic"""
    p = uniform_parameters(spec)
    detuning = p.delta + p.beta * photon_number + 2.0 * p.g
    amplitude = np.sqrt(2.0 * p.eta) * p.drive / (p.gamma_total + 1j * detuning)
    alpha = np.full(spec.n_sites, amplitude, dtype=complex)
    residual = _residual(_rhs_function(spec), alpha)
    return SteadyState(alpha, residual, True)


def spec_at_flux(spec: LatticeSpec, flux: float) -> LatticeSpec:
    """Uniform drive with |s|^2 = flux, keeping the drive phase"""
    drive = uniform_parameters(spec).drive
    phase = drive / abs(drive) if drive != 0 else 1.0
    return spec.with_changes(drives=np.sqrt(flux) * phase)


def sweep_flux(spec: LatticeSpec, flux_grid: Sequence[float],
               k_count: int = spectral_topology.DEFAULT_K_COUNT) -> FluxSweep:
    """Roots, stability and braid degree of the uniform PBC chain along a flux grid"""
    flux_grid = np.asarray(flux_grid, dtype=float)
    if flux_grid.size == 0 or np.any(np.diff(flux_grid) <= 0):
        raise ParameterError("flux_grid must be strictly increasing and non-empty")
    params = uniform_parameters(spec)

    points = []
    for flux in flux_grid:
        spec_at = spec_at_flux(spec, float(flux))
        roots = []
        for n in pbc_photon_number(spec_at, float(flux)):
            steady = uniform_steady_state(spec_at, n)
            report = noise_linear.is_stable(noise_linear.build_noise_hamiltonian(spec_at, steady))
            bands = spectral_topology.pbc_bands(params, n, k_count)
            try:
                degree = spectral_topology.braid_degree(bands.bands)
            except (ExceptionalPointError, WindingError) as e:
                logger.warning(f"No braid degree at flux {flux:.6g}, n={n:.6g}: {e}")
                degree = None
            roots.append(FluxRoot(n, report.stable, report.max_im_lambda, degree))
        points.append(FluxPoint(float(flux), roots))

    sweep = FluxSweep(points, _braid_transitions(params, points, k_count))
    logger.info(f"Flux sweep over {len(points)} points: pumped braid sequence {sweep.degree_sequence()}")
    return sweep


def _braid_transitions(params, points: List[FluxPoint], k_count: int) -> List[BraidTransition]:
    """Degree changes between neighbouring roots of consecutive flux points"""
    transitions = []
    for before, after in zip(points, points[1:]):
        for root in after.roots:
            if not before.roots or root.braid_degree is None:
                continue
            match = min(before.roots, key=lambda r: abs(r.photon_number - root.photon_number))
            if match.braid_degree is None or match.braid_degree == root.braid_degree:
                continue
            ep = spectral_topology.locate_exceptional_point(
                params, match.photon_number, root.photon_number, k_count)
            transitions.append(BraidTransition(
                before.flux, after.flux, match.braid_degree, root.braid_degree, ep,
                on_stable_branch=match.stable and root.stable,
            ))
    return transitions


def perturbation_response(spec: LatticeSpec, steady: SteadyState, site: int, epsilon: float,
                          t_end: float, n_samples: int = 401) -> PerturbationResponse:
    """Kick alpha_site by a factor (1 + epsilon) and follow dn_i(t)/n_i(0)"""
    if not steady.converged:
        raise SteadyStateError("perturbation_response needs a converged steady state")
    if not 0 <= site < spec.n_sites:
        raise ParameterError(f"site {site} outside 0..{spec.n_sites - 1}")
    n0 = steady.photon_numbers
    if np.any(n0 <= 0):
        raise ParameterError("every site needs a non-zero photon number")
    initial = steady.alpha.copy()
    initial[site] *= 1.0 + epsilon
    times = np.linspace(0.0, t_end, n_samples)
    trajectory = integrate_transient(spec, initial, t_end, t_eval=times)
    response = (trajectory.photon_numbers() - n0) / n0
    return PerturbationResponse(trajectory.times, response, site, epsilon)


def chirality_ratio(result: PerturbationResponse) -> float:
    """Time-integrated |response| left of the kicked site over the right"""
    integrated = trapezoid(np.abs(result.response), result.times, axis=0)
    left = float(np.sum(integrated[:result.site]))
    right = float(np.sum(integrated[result.site + 1:]))
    if right == 0:
        return np.inf if left > 0 else 1.0
    return left / right
