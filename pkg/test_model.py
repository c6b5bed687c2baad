"""
Tests for the lattice model: validation, sampling and the linear Hamiltonian
"""

import numpy as np
import pytest

from errors import ParameterError, SpecError
from model import (
    ExcessNoise, LatticeSpec, RandomDetuningSpec, excess_noise_occupation, langevin_blocks,
    linear_hamiltonian, require_valid, sample_detunings, uniform_parameters, validate,
)


def make_spec(**overrides):
    params = dict(n_sites=4, g=0.3, kappa=0.1, beta=0.5, delta=0.2, eta=0.1,
                  gamma='minimum', drives=1.0, boundary='open')
    params.update(overrides)
    return LatticeSpec.create(**params)


def test_valid_spec_has_no_violations():
    """A well-formed spec validates cleanly"""
    assert validate(make_spec()) == []
    require_valid(make_spec())


def test_gamma_below_nonreciprocity_is_rejected():
    """gamma < 2|kappa| breaks the positivity of the bath correlators"""
    violations = validate(make_spec(gamma=0.1, kappa=0.1))
    assert any('gamma < 2|kappa|' in v for v in violations)
    with pytest.raises(SpecError) as excinfo:
        require_valid(make_spec(gamma=0.1, kappa=0.1))
    assert excinfo.value.violations == violations


def test_minimum_gamma_sits_on_the_positivity_bound():
    """gamma = 2 kappa leaves <F F^dag> positive semi-definite, with a zero mode under PBC"""
    spec = make_spec(n_sites=4, eta=0.0, drives=0.0, boundary='periodic')
    assert np.allclose(spec.gamma, 0.2)
    assert validate(spec) == []
    ff_dag, _ = langevin_blocks(spec)
    assert np.min(np.linalg.eigvalsh(ff_dag)) == pytest.approx(0.0, abs=1e-12)


def test_driven_site_needs_coupling():
    violations = validate(make_spec(eta=[0.1, 0.0, 0.1, 0.1]))
    assert any('driven sites 1' in v for v in violations)


def test_negative_hopping_and_bad_boundary():
    violations = validate(make_spec(g=-0.1, boundary='twisted'))
    assert any('g must be >= 0' in v for v in violations)
    assert any('boundary' in v for v in violations)


def test_excess_noise_site_out_of_range():
    violations = validate(make_spec(excess_noise=[(7, 20.0)]))
    assert any('excess noise site 7' in v for v in violations)


def test_per_site_length_mismatch_raises():
    with pytest.raises(ParameterError):
        make_spec(delta=[0.1, 0.2])


def test_open_chain_hamiltonian_entries():
    """Diagonal Delta - i gamma_tot, g + kappa above and g - kappa below the diagonal"""
    spec = make_spec(delta=[0.1, 0.2, 0.3, 0.4])
    h = linear_hamiltonian(spec)
    assert np.allclose(np.diag(h), np.array([0.1, 0.2, 0.3, 0.4]) - 1j * 0.3)
    assert np.allclose(np.diag(h, 1), 0.4)
    assert np.allclose(np.diag(h, -1), 0.2)
    assert h[0, 3] == 0 and h[3, 0] == 0


def test_periodic_chain_wraps_around():
    spec = make_spec(boundary='periodic')
    h = linear_hamiltonian(spec)
    assert h[3, 0] == pytest.approx(0.4)
    assert h[0, 3] == pytest.approx(0.2)


def test_two_site_ring_doubles_hopping():
    """Both bonds of an N=2 ring connect the same pair: kappa cancels, 2g remains"""
    spec = make_spec(n_sites=2, boundary='periodic')
    h = linear_hamiltonian(spec)
    assert h[0, 1] == pytest.approx(0.6)
    assert h[1, 0] == pytest.approx(0.6)


def test_linear_hamiltonian_rejects_invalid_spec():
    with pytest.raises(SpecError):
        linear_hamiltonian(make_spec(gamma=0.0))


def test_langevin_blocks_with_excess_noise():
    """20 dB of excess noise is a thermal occupation of 49.5"""
    spec = make_spec(excess_noise=[ExcessNoise(1, 20.0)])
    ff_dag, fdag_f = langevin_blocks(spec)
    assert excess_noise_occupation(20.0) == pytest.approx(49.5)
    assert fdag_f[1, 1] == pytest.approx(2 * 0.1 * 49.5)
    assert ff_dag[1, 1] == pytest.approx(2 * 0.3 + 2 * 0.1 * 49.5)
    assert ff_dag[1, 2] == pytest.approx(0.2j)
    assert ff_dag[2, 1] == pytest.approx(-0.2j)
    assert np.count_nonzero(fdag_f) == 1


def test_excess_noise_at_zero_db_is_vacuum():
    assert excess_noise_occupation(0.0) == 0.0


def test_sample_detunings_reproducible():
    sampler = RandomDetuningSpec(low=-0.5, high=0.5, seed=7)
    first = sample_detunings(sampler, 50)
    assert np.array_equal(first, sample_detunings(sampler, 50))
    assert np.all((first >= -0.5) & (first < 0.5))
    assert not np.array_equal(first, sample_detunings(RandomDetuningSpec(-0.5, 0.5, seed=8), 50))


def test_sample_detunings_degenerate_and_invalid():
    assert np.array_equal(sample_detunings(RandomDetuningSpec(0.2, 0.2), 3), [0.2, 0.2, 0.2])
    with pytest.raises(ParameterError):
        sample_detunings(RandomDetuningSpec(1.0, 0.0), 3)
    with pytest.raises(ParameterError):
        sample_detunings(RandomDetuningSpec(0.0, 1.0), 0)


def test_with_changes_minimum_gamma_follows_kappa():
    spec = make_spec().with_changes(kappa=0.25)
    assert spec.gamma_minimum
    assert np.allclose(spec.gamma, 0.5)
    fixed = make_spec(gamma=0.6).with_changes(kappa=0.25)
    assert np.allclose(fixed.gamma, 0.6)


def test_with_changes_resize_keeps_uniform_values():
    spec = make_spec(delta=[0.2, 0.2, 0.2, 0.2]).with_changes(n_sites=7)
    assert spec.n_sites == 7
    assert np.allclose(spec.delta, 0.2)


def test_uniform_parameters():
    params = uniform_parameters(make_spec())
    assert params.gamma_total == pytest.approx(0.3)
    assert params.drive == 1.0
    with pytest.raises(ParameterError):
        uniform_parameters(make_spec(delta=[0.0, 0.1, 0.0, 0.0]))
