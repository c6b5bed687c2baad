"""
Tests for the Monte-Carlo Langevin oracle
"""

import numpy as np
import pytest

import meanfield
import noise_linear
import stochastic
from errors import DiffusionError, IntegrationError, ParameterError, SteadyStateError, UnstableSystemError
from model import LatticeSpec
from noise_linear import MomentMatrix, NoiseSystem


def single_site(beta=0.0, delta=0.0, drive=0.0):
    return LatticeSpec.create(n_sites=1, g=0.0, kappa=0.0, beta=beta, delta=delta,
                              eta=0.5, gamma=0.5, drives=drive)


def linearized(spec):
    steady = meanfield.find_steady_state(spec)
    system = noise_linear.build_noise_hamiltonian(spec, steady)
    return steady, system, noise_linear.solve_lyapunov(system)


def test_noise_factor_reproduces_diffusion():
    diffusion = np.diag([2.0, 0.0, 3.0]).astype(complex)
    factor = stochastic.noise_factor(diffusion)
    assert factor.shape == (3, 2)
    assert np.allclose(factor @ factor.conj().T, diffusion)


def test_noise_factor_of_correlated_diffusion():
    diffusion = np.array([[2.0, 0.4j], [-0.4j, 2.0]])
    factor = stochastic.noise_factor(diffusion)
    assert np.allclose(factor @ factor.conj().T, diffusion)


def test_noise_factor_edge_cases():
    assert np.array_equal(stochastic.noise_factor(np.zeros((2, 2))), np.zeros((2, 1)))
    with pytest.raises(DiffusionError):
        stochastic.noise_factor(np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(DiffusionError):
        stochastic.noise_factor(np.diag([1.0, -1.0]))


def test_default_timing_scales_with_drift():
    drift = np.diag([-1.0 - 1.0j, -2.0 + 0.0j])
    dt, t_relax, t_collect = stochastic.default_timing(drift)
    assert dt == pytest.approx(0.02 / 2.0)
    assert t_relax == pytest.approx(10.0)
    assert t_collect == pytest.approx(50.0)


def test_vacuum_ensemble_matches_lyapunov():
    _, system, moments = linearized(single_site())
    ensemble = stochastic.simulate_linear(system, dt=0.002, t_relax=5.0, t_collect=20.0,
                                          n_traj=256, seed=11)
    comparison = stochastic.compare_to_moments(ensemble, moments)
    assert comparison.passed
    assert ensemble.moment_estimate[0, 0].real == pytest.approx(1.0, abs=0.06)
    assert abs(ensemble.moment_estimate[1, 1]) < 1e-12
    assert ensemble.escaped == 0


def test_kerr_site_ensemble_matches_lyapunov():
    _, system, moments = linearized(single_site(beta=0.1, drive=1.0))
    assert abs(moments.m[0, 1]) > 0.01
    ensemble = stochastic.simulate_linear(system, dt=0.002, t_relax=5.0, t_collect=20.0,
                                          n_traj=256, seed=3)
    assert stochastic.compare_to_moments(ensemble, moments).passed


def test_nonreciprocal_ring_ensemble_matches_lyapunov():
    """Four-site ring with kappa != 0, so the diffusion carries the +-2i kappa neighbour terms"""
    spec = LatticeSpec.create(n_sites=4, g=0.1, kappa=0.05, beta=0.1, delta=0.0, eta=0.2,
                              gamma='minimum', drives=1.0, boundary='periodic')
    _, system, moments = linearized(spec)
    assert np.any(system.diffusion[:4, :4][~np.eye(4, dtype=bool)] != 0)
    ensemble = stochastic.simulate_linear(system, dt=0.01, t_relax=20.0, t_collect=100.0,
                                          n_traj=512, seed=11)
    assert ensemble.escaped == 0
    assert stochastic.compare_to_moments(ensemble, moments).passed


def test_standard_errors_shrink_with_ensemble_size():
    """Doubling the trajectories scales every standard error by about 1/sqrt(2)"""
    _, system, _ = linearized(single_site(beta=0.1, drive=1.0))
    kwargs = dict(dt=0.01, t_relax=5.0, t_collect=20.0, seed=3)
    small = stochastic.simulate_linear(system, n_traj=256, **kwargs)
    large = stochastic.simulate_linear(system, n_traj=512, **kwargs)
    ratio = large.standard_errors / small.standard_errors
    assert np.all((ratio > 0.55) & (ratio < 0.9))
    assert np.mean(ratio) == pytest.approx(1 / np.sqrt(2), abs=0.08)


def test_halving_dt_halves_the_euler_bias():
    """Vacuum site with unit decay: Euler-Maruyama settles at 1 / (1 - dt/2) instead of 1"""
    _, system, moments = linearized(single_site())
    assert moments.m[0, 0].real == pytest.approx(1.0, abs=1e-10)
    biases = []
    for dt, seed in ((0.08, 0), (0.04, 1)):
        ensemble = stochastic.simulate_linear(system, dt=dt, t_relax=5.0, t_collect=50.0,
                                              n_traj=4096, seed=seed)
        estimate = ensemble.moment_estimate[0, 0].real
        assert estimate == pytest.approx(1 / (1 - dt / 2), abs=5 * ensemble.standard_errors[0, 0])
        biases.append(estimate - 1.0)
    assert 0.2 < biases[1] / biases[0] < 0.8


def test_linear_divergence_aborts(monkeypatch):
    monkeypatch.setattr(stochastic, 'DIVERGENCE_LIMIT', 1e-9)
    _, system, _ = linearized(single_site(beta=0.1, drive=1.0))
    with pytest.raises(IntegrationError):
        stochastic.simulate_linear(system, dt=0.01, t_relax=0.1, t_collect=0.1, n_traj=4)


def test_ensemble_is_reproducible_across_thread_counts():
    _, system, _ = linearized(single_site(beta=0.1, drive=1.0))
    kwargs = dict(dt=0.01, t_relax=1.0, t_collect=2.0, n_traj=130)
    first = stochastic.simulate_linear(system, seed=7, threads=1, **kwargs)
    second = stochastic.simulate_linear(system, seed=7, threads=3, **kwargs)
    other = stochastic.simulate_linear(system, seed=8, threads=1, **kwargs)
    assert np.array_equal(first.moment_estimate, second.moment_estimate)
    assert np.array_equal(first.standard_errors, second.standard_errors)
    assert not np.array_equal(first.moment_estimate, other.moment_estimate)


def test_linear_ensemble_arguments():
    _, system, _ = linearized(single_site())
    with pytest.raises(ParameterError):
        stochastic.simulate_linear(system, n_traj=1)
    with pytest.raises(ParameterError):
        stochastic.simulate_linear(system, dt=0.5, n_traj=4)
    unstable = NoiseSystem(np.eye(2, dtype=complex), np.eye(2, dtype=complex), 1)
    with pytest.raises(UnstableSystemError):
        stochastic.simulate_linear(unstable, n_traj=4)


def test_nonlinear_ensemble_without_kerr_is_linear():
    spec = single_site(delta=0.3, drive=30.0)
    steady, _, moments = linearized(spec)
    ensemble = stochastic.simulate_nonlinear(spec, steady, dt=0.002, t_relax=5.0, t_collect=20.0,
                                             n_traj=256, seed=5)
    assert ensemble.escaped == 0
    assert abs(ensemble.mean_field[0] - steady.alpha[0]) < 0.1
    assert stochastic.compare_to_moments(ensemble, moments).passed


def test_weak_kerr_ensemble_agrees_with_linearization():
    """Large photon number and small beta keep the fluctuations in the linear regime"""
    spec = single_site(beta=1e-4, delta=0.3, drive=30.0)
    steady, _, moments = linearized(spec)
    assert spec.beta[0] * steady.photon_numbers[0] > 0.05
    ensemble = stochastic.simulate_nonlinear(spec, steady, dt=0.002, t_relax=5.0, t_collect=20.0,
                                             n_traj=256, seed=9)
    assert ensemble.escaped == 0
    assert stochastic.compare_to_moments(ensemble, moments).passed


def test_nonlinear_needs_converged_state():
    spec = single_site(beta=0.1, drive=1.0)
    with pytest.raises(SteadyStateError):
        stochastic.simulate_nonlinear(spec, meanfield.SteadyState(np.zeros(1, dtype=complex), 1.0, False))


def test_compare_to_moments_counts_standard_errors():
    reference = MomentMatrix(np.array([[1.0, 0.0], [0.0, 0.5]], dtype=complex))
    errors = np.full((2, 2), 0.01)
    estimate = reference.m + np.array([[0.02, 0.0], [0.0, -0.005]])
    ensemble = stochastic.EnsembleResult(estimate, errors, 100, 0, 0.01, 1.0, 2.0)
    comparison = stochastic.compare_to_moments(ensemble, reference)
    assert comparison.max_z == pytest.approx(2.0, rel=1e-6)
    assert comparison.worst_index == (0, 0)
    assert comparison.passed
    assert not stochastic.compare_to_moments(ensemble, reference, n_sigma=1.0).passed


def test_ensemble_to_dict():
    ensemble = stochastic.EnsembleResult(np.eye(2, dtype=complex), np.ones((2, 2)), 8, 4, 0.01, 1.0, 2.0)
    data = ensemble.to_dict()
    assert data['seed'] == 4
    assert data['moment_estimate'][0][0] == [1.0, 0.0]
    assert data['standard_errors'] == [[1.0, 1.0], [1.0, 1.0]]
