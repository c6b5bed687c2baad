"""
Tests for the linearized noise: H_N structure, Lyapunov moments and quadrature noise
"""

import numpy as np
import pytest

import meanfield
import noise_linear
from errors import DiffusionError, ParameterError, SteadyStateError, UnstableSystemError
from model import ExcessNoise, LatticeSpec
from scenarios import load_scenario


def vacuum_site():
    return LatticeSpec.create(n_sites=1, g=0.0, kappa=0.0, beta=0.0, delta=0.2,
                              eta=0.1, gamma=0.4, drives=0.0)


def kerr_chain(**overrides):
    params = dict(n_sites=5, g=0.3, kappa=0.1, beta=0.05, delta=0.1, eta=0.1,
                  gamma='minimum', drives=1.0)
    params.update(overrides)
    return LatticeSpec.create(**params)


def random_spec(rng):
    n_sites = int(rng.integers(1, 5))
    kappa = rng.uniform(-0.5, 0.5)
    noise = []
    if rng.random() < 0.5:
        noise = [(int(rng.integers(0, n_sites)), rng.uniform(0.0, 30.0))]
    return LatticeSpec.create(
        n_sites=n_sites,
        g=rng.uniform(0.0, 1.0),
        kappa=kappa,
        beta=rng.uniform(-0.5, 0.5, n_sites),
        delta=rng.uniform(-1.0, 1.0, n_sites),
        eta=rng.uniform(0.05, 0.5, n_sites),
        gamma=2.0 * abs(kappa) + rng.uniform(0.0, 0.5, n_sites),
        drives=rng.normal(size=n_sites) + 1j * rng.normal(size=n_sites),
        boundary='periodic' if rng.random() < 0.5 else 'open',
        excess_noise=noise,
    )


@pytest.fixture(scope='module')
def kerr_noise():
    spec = kerr_chain()
    steady = meanfield.find_steady_state(spec)
    system = noise_linear.build_noise_hamiltonian(spec, steady)
    return spec, steady, system, noise_linear.solve_lyapunov(system)


@pytest.fixture(scope='module')
def fig2_spec():
    return load_scenario('fig2_immunity').spec


def test_vacuum_moments():
    """<da da^dag> = 1 and <da^dag da> = 0 for an undriven site"""
    spec = vacuum_site()
    steady = meanfield.find_steady_state(spec)
    assert steady.converged
    moments = noise_linear.solve_lyapunov(noise_linear.build_noise_hamiltonian(spec, steady))
    assert np.max(np.abs(moments.m - np.diag([1.0, 0.0]))) < 1e-10
    with pytest.raises(ParameterError):
        noise_linear.intensity_noise_db(moments, steady, 0)


def test_coherent_state_sits_at_shot_noise():
    spec = vacuum_site().with_changes(drives=0.8)
    steady = meanfield.find_steady_state(spec)
    moments = noise_linear.solve_lyapunov(noise_linear.build_noise_hamiltonian(spec, steady))
    assert noise_linear.intensity_noise_db(moments, steady, 0) == pytest.approx(0.0, abs=1e-9)
    assert noise_linear.phase_noise_db(moments, steady, 0) == pytest.approx(0.0, abs=1e-9)


def test_noise_hamiltonian_blocks(kerr_noise):
    spec, steady, system, _ = kerr_noise
    h_n = system.noise_hamiltonian
    n = spec.n_sites
    alpha = steady.alpha
    assert np.allclose(np.diag(h_n[:n, n:]), spec.beta * alpha ** 2)
    assert np.allclose(h_n[n:, n:], -h_n[:n, :n].conj())
    assert np.allclose(h_n[n:, :n], -h_n[:n, n:].conj())
    assert np.allclose(np.diag(h_n[:n, :n]).real, spec.delta + 2 * spec.beta * np.abs(alpha) ** 2)


def test_structural_invariants_on_random_specs():
    """Particle-hole symmetry, PSD diffusion, commutators and uncertainty over random chains"""
    rng = np.random.default_rng(2024)
    stable_cases = 0
    for _ in range(1000):
        spec = random_spec(rng)
        n = spec.n_sites
        alpha = 0.5 * (rng.normal(size=n) + 1j * rng.normal(size=n))
        h_n = noise_linear.noise_hamiltonian_matrix(spec, alpha)
        swap = np.block([[np.zeros((n, n)), np.eye(n)], [np.eye(n), np.zeros((n, n))]])
        assert np.array_equal(swap @ h_n.conj() @ swap, -h_n)

        eigenvalues = np.linalg.eigvals(h_n)
        scale = max(np.max(np.abs(eigenvalues)), 1.0)
        mirrored = -eigenvalues.conj()
        assert np.max(np.min(np.abs(eigenvalues[:, None] - mirrored[None, :]), axis=1)) < 1e-6 * scale

        diffusion = noise_linear.build_diffusion(spec)
        assert np.min(np.linalg.eigvalsh(diffusion)) >= -1e-10 * np.max(np.abs(diffusion))

        system = noise_linear.NoiseSystem(-1j * h_n, diffusion, n)
        if not noise_linear.is_stable(system).stable:
            continue
        stable_cases += 1
        moments = noise_linear.solve_lyapunov(system)
        assert moments.commutator_defect() < 1e-8
        steady = meanfield.SteadyState(alpha, 0.0, True)
        for site in range(n):
            x2 = 10 ** (noise_linear.intensity_noise_db(moments, steady, site) / 10)
            p2 = 10 ** (noise_linear.phase_noise_db(moments, steady, site) / 10)
            assert x2 * p2 >= 1.0 - 1e-9
    assert stable_cases > 100


def test_lyapunov_residual_and_commutator(kerr_noise):
    _, _, system, moments = kerr_noise
    assert moments.residual < noise_linear.TOL_LYAPUNOV
    assert moments.commutator_defect() < 1e-8
    assert np.allclose(moments.m, moments.m.conj().T)


def test_spectrum_is_stable_and_sorted(kerr_noise):
    _, _, system, _ = kerr_noise
    eigenvalues = noise_linear.spectrum(system)
    assert eigenvalues.size == 10
    assert np.all(np.diff(eigenvalues.real) >= 0)
    report = noise_linear.is_stable(system)
    assert report.stable
    assert report.max_im_lambda == pytest.approx(np.max(eigenvalues.imag))


def test_unstable_system_is_rejected():
    system = noise_linear.NoiseSystem(np.eye(2, dtype=complex), np.eye(2, dtype=complex), 1)
    assert not noise_linear.is_stable(system).stable
    with pytest.raises(UnstableSystemError):
        noise_linear.solve_lyapunov(system)


def test_unconverged_steady_state_is_rejected():
    spec = kerr_chain()
    state = meanfield.SteadyState(np.zeros(5, dtype=complex), 1.0, False, 'stalled')
    with pytest.raises(SteadyStateError):
        noise_linear.build_noise_hamiltonian(spec, state)


def test_diffusion_with_excess_noise():
    """20 dB at site 2 adds 2 eta (10^2 - 1)/2 to both diagonal blocks"""
    spec = kerr_chain(excess_noise=[ExcessNoise(2, 20.0)])
    diffusion = noise_linear.build_diffusion(spec)
    assert diffusion[5 + 2, 5 + 2] == pytest.approx(2 * 0.1 * 99 / 2)
    assert diffusion[2, 2] == pytest.approx(2 * 0.3 + 2 * 0.1 * 99 / 2)
    assert np.all(diffusion[:5, 5:] == 0)


def test_negative_diffusion_is_rejected():
    spec = kerr_chain(gamma=0.0, eta=0.0, drives=0.0)
    with pytest.raises(DiffusionError):
        noise_linear.build_diffusion(spec)


def test_covariance_map_is_symmetric(kerr_noise):
    spec, steady, _, moments = kerr_noise
    cov = noise_linear.covariance_map(moments, steady)
    assert cov.shape == (5, 5)
    assert np.array_equal(cov, cov.T)
    # Var(n_i) = n_i <X_i^2>
    x2 = [10 ** (row['intensity_db'] / 10) for row in noise_linear.noise_profile(spec, steady, moments)]
    assert np.allclose(np.diag(cov), steady.photon_numbers * x2)


def test_injected_noise_grows_with_level(kerr_noise):
    spec, steady, _, _ = kerr_noise
    sweep = noise_linear.noise_immunity_sweep(spec, steady, 2, [0.0, 10.0, 20.0, 30.0])
    assert sweep.intensity_db.shape == (4, 5)
    assert np.all(np.diff(sweep.intensity_db[:, 2]) > 0)
    assert np.all(np.diff(sweep.phase_db[:, 2]) > 0)


def test_reciprocal_chain_squeezes_and_spreads_noise(fig2_spec):
    """kappa = 0: about 2 dB of squeezing everywhere, lifted at every site by injection"""
    spec = fig2_spec.with_changes(kappa=0.0)
    steady = meanfield.find_steady_state(spec)
    assert steady.converged
    sweep = noise_linear.noise_immunity_sweep(spec, steady, 15, [0.0, 20.0])
    baseline = sweep.intensity_db[0]
    assert np.all((baseline > -2.3) & (baseline < -1.95))
    assert np.min(sweep.intensity_db[1] - baseline) >= 4.0


def test_nonreciprocal_chain_shields_right_edge(fig2_spec):
    """kappa = 0.04: the rightmost site stays squeezed and flat over 0-40 dB of injection"""
    steady = meanfield.find_steady_state(fig2_spec)
    assert steady.converged
    sweep = noise_linear.noise_immunity_sweep(fig2_spec, steady, 15, [0.0, 20.0, 40.0])
    right = sweep.intensity_db[:, -1]
    assert right[0] == pytest.approx(-2.74, abs=0.05)
    assert np.max(right) - np.min(right) < 1.0
    assert np.all(right < 0.0)


def test_kappa_sweep_tables(fig2_spec):
    table = noise_linear.kappa_sweep(fig2_spec, [0.0, 0.04], 15, 20.0)
    assert table.baseline_db.shape == (2, 30)
    assert np.all(table.injected_db[:, 15] > table.baseline_db[:, 15])
    # only the reciprocal chain lets the injected noise reach the right edge
    assert table.injected_db[0, -1] - table.baseline_db[0, -1] >= 4.0
    assert table.injected_db[1, -1] - table.baseline_db[1, -1] < 1.0
    assert np.all(table.kappas == [0.0, 0.04])
