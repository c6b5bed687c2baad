"""
Momentum-space noise for uniform periodic chains
Frequency-domain Bogoliubov response of each Bloch mode and the real-space
intensity covariances rebuilt from it
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.integrate import quad

from errors import ParameterError, QuadratureError, UnstableSystemError
from model import LatticeSpec, uniform_parameters
from noise_linear import STABILITY_MARGIN
import spectral_topology

logger = logging.getLogger(__name__)

OMEGA_FACTOR = 50.0
QUAD_EPSREL = 1e-11
QUAD_LIMIT = 400
TOL_QUAD = 1e-8
TOL_IMAG = 1e-8


@dataclass(frozen=True, eq=False)
class BogoliubovResponse:
    """Response of da_k to unit forces: mu to F_k, nu the anomalous partner"""
    k: float
    omega_grid: np.ndarray
    mu: np.ndarray
    nu: np.ndarray


def langevin_k_correlator(params, k):
    """<F_k F_k^dag> = 2(gamma_tot + 2 kappa sin k)"""
    p = spectral_topology.as_uniform(params)
    return 2.0 * (p.gamma_total + 2.0 * p.kappa * np.sin(k))


def _stable_bloch(params, n: float, k: float) -> np.ndarray:
    h = spectral_topology.hn_bloch(params, n, k)
    max_im = float(np.max(np.linalg.eigvals(h).imag))
    if max_im >= -STABILITY_MARGIN:
        raise UnstableSystemError(max_im)
    return h


def _response(h: np.ndarray, omega):
    omega = np.asarray(omega, dtype=float)
    det = (omega - h[0, 0]) * (omega - h[1, 1]) - h[0, 1] * h[1, 0]
    if np.any(det == 0):
        raise UnstableSystemError(0.0)
    return 1j * (omega - h[1, 1]) / det, 1j * h[1, 0] / det


def bogoliubov_coefficients(params, n: float, k: float, omega_grid) -> BogoliubovResponse:
    """First column of i(omega - H_N(k))^-1 on a frequency grid"""
    h = _stable_bloch(params, n, k)
    omega_grid = np.asarray(omega_grid, dtype=float)
    mu, nu = _response(h, omega_grid)
    return BogoliubovResponse(k=float(k), omega_grid=omega_grid, mu=mu, nu=nu)


def _frequency_integral(h: np.ndarray, integrand) -> Tuple[float, float]:
    """integral of integrand(omega) d omega / 2 pi with the resonances as breakpoints"""
    eigenvalues = np.linalg.eigvals(h)
    cutoff = OMEGA_FACTOR * max(float(np.max(np.abs(eigenvalues))), 1.0)
    points = sorted(float(x) for x in eigenvalues.real if -cutoff < x < cutoff)
    core, core_err = quad(integrand, -cutoff, cutoff, points=points or None,
                          epsabs=1e-15, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    left, left_err = quad(integrand, -np.inf, -cutoff, epsabs=1e-15, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    right, right_err = quad(integrand, cutoff, np.inf, epsabs=1e-15, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    value = (core + left + right) / (2.0 * np.pi)
    error = (core_err + left_err + right_err) / (2.0 * np.pi)
    logger.debug(f"Frequency integral {value:.12g} +/- {error:.2e}")
    if error > TOL_QUAD * max(abs(value), 1.0):
        raise QuadratureError("Frequency quadrature did not converge", error)
    return value, error


def intensity_spectrum(params, n: float, k: float) -> float:
    """<F_k F_k^dag> times the frequency integral of |mu + nu|^2"""
    h = _stable_bloch(params, n, k)

    def integrand(omega):
        mu, nu = _response(h, omega)
        return float(np.abs(mu + nu) ** 2)

    value, _ = _frequency_integral(h, integrand)
    return float(langevin_k_correlator(params, k)) * value


def k_resolved_occupation(params, n: float, k: float) -> float:
    """<da_k^dag da_k> of one Bloch mode"""
    h = _stable_bloch(params, n, k)

    def integrand(omega):
        mu, _ = _response(h, omega)
        return float(np.abs(mu) ** 2)

    value, _ = _frequency_integral(h, integrand)
    return float(langevin_k_correlator(params, k)) * value - 1.0


def _uniform_pbc(spec: LatticeSpec, steady):
    if not spec.is_periodic:
        raise ParameterError("k-space covariances need periodic boundary conditions")
    if spec.excess_noise:
        # the k-resolved correlator only carries the vacuum input noise
        raise ParameterError("k-space covariances do not support excess_noise; use the Lyapunov map")
    params = uniform_parameters(spec)
    n = np.abs(steady.alpha) ** 2
    if np.max(np.abs(n - n[0])) > 1e-9 * max(n[0], 1e-300):
        raise ParameterError("k-space covariances need a uniform steady state")
    return params, float(n[0])


def _lattice_correlations(params, n: float, n_sites: int) -> np.ndarray:
    """C(l) for l = 0..N-1 from the spectra at the N lattice momenta"""
    ks = 2.0 * np.pi * np.arange(n_sites) / n_sites
    spectra = np.array([intensity_spectrum(params, n, k) for k in ks])
    ells = np.arange(n_sites)
    phases = np.exp(1j * np.outer(ells, ks))
    correlations = n / n_sites * (phases @ spectra)
    scale = max(float(np.max(np.abs(correlations))), 1e-300)
    residue = float(np.max(np.abs(correlations.imag)))
    if residue > TOL_IMAG * scale:
        logger.warning(f"k-space covariance has imaginary residue {residue:.3e}")
    return correlations.real


def covariance_from_k(spec: LatticeSpec, steady, ell: int) -> float:
    """<dn_m dn_{m+l}> of a uniform PBC steady state from its Bloch modes"""
    params, n = _uniform_pbc(spec, steady)
    return float(_lattice_correlations(params, n, spec.n_sites)[ell % spec.n_sites])


def covariance_map_from_k(spec: LatticeSpec, steady) -> np.ndarray:
    """Full circulant N x N covariance map"""
    params, n = _uniform_pbc(spec, steady)
    correlations = _lattice_correlations(params, n, spec.n_sites)
    sites = np.arange(spec.n_sites)
    cov = correlations[(sites[None, :] - sites[:, None]) % spec.n_sites]
    logger.info(f"k-space covariance map built for N={spec.n_sites}")
    return 0.5 * (cov + cov.T)
