"""
Command-line interface for the Kerr lattice simulator
Exit codes: 0 success, 1 physics or check failure, 2 usage or config error
"""

import functools
import logging
import os
import sys
from typing import Optional

import click
import numpy as np

import artifacts
import kspace
import meanfield
import noise_linear
import scenarios
import spectral_topology
import stochastic
from config import Settings, load_spec
from errors import ConfigError, KerrLatticeError, ParameterError
from logging_setup import configure_logging
from model import describe, uniform_parameters

logger = logging.getLogger('kerrlat')

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def handle_errors(command):
    """Map library errors onto the exit-code contract"""
    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            code = command(*args, **kwargs)
        except ConfigError as e:
            logger.error(f"Configuration error: {e}")
            sys.exit(EXIT_USAGE)
        except (KerrLatticeError, np.linalg.LinAlgError) as e:
            logger.error(f"{type(e).__name__}: {e}")
            sys.exit(EXIT_FAILURE)
        sys.exit(code or EXIT_OK)
    return wrapper


class Context:
    def __init__(self, config: Optional[str], out: str, seed: Optional[int], threads: int, fmt: str):
        self.config = config
        self.out = out
        self.seed = seed
        self.threads = threads
        self.fmt = fmt

    def spec(self):
        if not self.config:
            raise click.UsageError("--config PATH is required for this command")
        spec = load_spec(self.config, seed_override=self.seed)
        logger.info(describe(spec))
        return spec

    def emit(self, artifact: artifacts.Artifact) -> str:
        path = artifacts.emit(artifact, self.out, self.fmt)
        click.echo(path)
        return path


def _parse_complex(text: str) -> complex:
    try:
        re_part, im_part = (float(x) for x in text.split(','))
    except ValueError:
        raise click.BadParameter(f"expected RE,IM, got {text!r}")
    return complex(re_part, im_part)


def _pbc_photon_number(spec, photon_number: Optional[float]) -> float:
    if photon_number is not None:
        return photon_number
    periodic = spec.with_changes(boundary='periodic')
    steady = meanfield.find_steady_state(periodic)
    if not steady.converged:
        raise KerrLatticeError(f"No periodic steady state: {steady.diagnostic}")
    return float(np.mean(steady.photon_numbers))


def _converged(spec):
    steady = meanfield.find_steady_state(spec)
    if not steady.converged:
        raise KerrLatticeError(f"Steady state did not converge: {steady.diagnostic}")
    return steady


@click.group()
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
              help='Model configuration JSON')
@click.option('--out', default=None, help='Output directory')
@click.option('--seed', type=click.IntRange(min=0), default=None, help='Override rng_seed')
@click.option('--threads', type=click.IntRange(min=1), default=None, help='Worker threads')
@click.option('--format', 'fmt', type=click.Choice(artifacts.FORMATS), default='json',
              help='Format of tabular artifacts')
@click.option('--log-level', default=None, help='Logging level')
@click.pass_context
def cli(ctx, config_path, out, seed, threads, fmt, log_level):
    """Driven-dissipative non-reciprocal Kerr lattice simulator"""
    configure_logging(log_level or Settings.LOG_LEVEL, Settings.LOG_FILE or None)
    ctx.obj = Context(config_path, out or Settings.OUT_DIR, seed, threads or Settings.THREADS, fmt)


@cli.command()
@click.pass_obj
@handle_errors
def steady(obj: Context):
    """Pump-from-zero mean-field steady state"""
    state = meanfield.find_steady_state(obj.spec())
    obj.emit(artifacts.steady_state_artifact(state))
    return EXIT_OK if state.converged else EXIT_FAILURE


@cli.command()
@click.option('--flux-min', type=float, required=True)
@click.option('--flux-max', type=float, required=True)
@click.option('--points', type=click.IntRange(min=2), default=101)
@click.option('--k-count', type=click.IntRange(min=spectral_topology.MIN_K_COUNT),
              default=spectral_topology.DEFAULT_K_COUNT)
@click.pass_obj
@handle_errors
def sweep(obj: Context, flux_min, flux_max, points, k_count):
    """Roots, stability and braid degree along an input-flux grid"""
    result = meanfield.sweep_flux(obj.spec(), np.linspace(flux_min, flux_max, points), k_count)
    rows = [(p.flux, i, r.photon_number, r.stable, r.max_im_lambda,
             '' if r.braid_degree is None else r.braid_degree, r is p.pumped)
            for p in result.points for i, r in enumerate(p.roots)]
    obj.emit(artifacts.Artifact('flux_sweep', header=[
        'flux', 'root', 'photon_number', 'stable', 'max_im_lambda', 'braid_degree', 'pumped'], rows=rows))
    obj.emit(artifacts.Artifact('braid_transitions', document=[
        {'flux_before': t.flux_before, 'flux_after': t.flux_after, 'degree_before': t.degree_before,
         'degree_after': t.degree_after, 'photon_number': t.exceptional_point.photon_number,
         'k': t.exceptional_point.k, 'min_gap': t.exceptional_point.min_gap,
         'exceptional_point': t.exceptional_point.flagged, 'stable': t.on_stable_branch}
        for t in result.transitions]))
    click.echo(f"pumped braid sequence: {result.degree_sequence()}")


@cli.command()
@click.option('--t-end', type=float, required=True)
@click.option('--samples', type=click.IntRange(min=2), default=401)
@click.option('--site', type=int, default=None, help='Kick this site of the steady state')
@click.option('--epsilon', type=float, default=1e-3)
@click.pass_obj
@handle_errors
def transient(obj: Context, t_end, samples, site, epsilon):
    """Trajectory from the ground state, or the response to a single-site kick"""
    spec = obj.spec()
    times = np.linspace(0.0, t_end, samples)
    if site is None:
        trajectory = meanfield.integrate_transient(spec, np.zeros(spec.n_sites, dtype=complex), t_end, t_eval=times)
        obj.emit(artifacts.trajectory_artifact(trajectory))
        return
    response = meanfield.perturbation_response(spec, _converged(spec), site, epsilon, t_end, samples)
    obj.emit(artifacts.response_artifact(response))
    click.echo(f"chirality ratio: {meanfield.chirality_ratio(response):.6g}")


@cli.command()
@click.pass_obj
@handle_errors
def noise(obj: Context):
    """Linearized noise: per-site dB, covariance map and H_N spectrum"""
    spec = obj.spec()
    state = _converged(spec)
    system = noise_linear.build_noise_hamiltonian(spec, state)
    moments = noise_linear.solve_lyapunov(system)
    profile = noise_linear.noise_profile(spec, state, moments)
    obj.emit(artifacts.Artifact('noise', document=profile))
    obj.emit(artifacts.covariance_artifact(noise_linear.covariance_map(moments, state)))
    obj.emit(artifacts.spectrum_artifact(noise_linear.spectrum(system), spec.boundary))


@cli.command()
@click.option('--photon-number', type=float, default=None, help='Bloch bands at this n')
@click.option('--k-count', type=click.IntRange(min=spectral_topology.MIN_K_COUNT),
              default=spectral_topology.DEFAULT_K_COUNT)
@click.pass_obj
@handle_errors
def spectrum(obj: Context, photon_number, k_count):
    """H_N eigenvalues of the configured chain, mode localization, and Bloch bands"""
    spec = obj.spec()
    system = noise_linear.build_noise_hamiltonian(spec, _converged(spec))
    eigenvalues, eigenvectors = spectral_topology.obc_spectrum(system.noise_hamiltonian)
    rows = [(z.real, z.imag, spec.boundary) for z in eigenvalues]
    try:
        uniform_parameters(spec)
    except ParameterError:
        logger.info("Site-dependent parameters: skipping Bloch bands")
    else:
        n = _pbc_photon_number(spec, photon_number)
        bands = spectral_topology.pbc_bands(spec, n, k_count)
        rows += [(z.real, z.imag, 'bloch') for z in bands.bands.ravel()]
    obj.emit(artifacts.Artifact('spectrum', header=['re', 'im', 'boundary'], rows=rows))
    metrics = spectral_topology.localization_metrics(eigenvectors)
    obj.emit(artifacts.Artifact('localization', header=['mode', 'center_of_mass', 'ipr'],
                                rows=[list(r.values()) for r in metrics.rows()]))


@cli.command()
@click.option('--ref', 'reference', required=True, help='Reference point RE,IM')
@click.option('--photon-number', type=float, default=None)
@click.option('--k-count', type=click.IntRange(min=spectral_topology.MIN_K_COUNT),
              default=spectral_topology.DEFAULT_K_COUNT)
@click.pass_obj
@handle_errors
def winding(obj: Context, reference, photon_number, k_count):
    """Point-gap winding of the Bloch bands around a reference energy"""
    point = _parse_complex(reference)
    spec = obj.spec()
    n = _pbc_photon_number(spec, photon_number)
    bands = spectral_topology.pbc_bands(spec, n, k_count)
    per_loop = [spectral_topology.winding_number(loop, point) for loop in bands.loops()]
    obj.emit(artifacts.Artifact('winding', document={
        'reference': point, 'photon_number': n, 'per_loop': per_loop, 'winding': sum(per_loop)}))
    click.echo(f"winding: {sum(per_loop)}")


@cli.command()
@click.option('--photon-number', type=float, default=None)
@click.option('--k-count', type=click.IntRange(min=spectral_topology.MIN_K_COUNT),
              default=spectral_topology.DEFAULT_K_COUNT)
@click.pass_obj
@handle_errors
def braid(obj: Context, photon_number, k_count):
    """Braid degree of the two Bloch bands"""
    spec = obj.spec()
    n = _pbc_photon_number(spec, photon_number)
    degree = spectral_topology.braid_degree(spectral_topology.pbc_bands(spec, n, k_count).bands)
    obj.emit(artifacts.Artifact('braid', document={'photon_number': n, 'braid_degree': degree}))
    click.echo(f"braid degree: {degree}")


@cli.command()
@click.option('--method', type=click.Choice(['kspace', 'lyapunov']), default='lyapunov')
@click.pass_obj
@handle_errors
def correlations(obj: Context, method):
    """Intensity covariance map of a uniform periodic chain, cross-checked between methods"""
    spec = obj.spec()
    state = _converged(spec)
    moments = noise_linear.solve_lyapunov(noise_linear.build_noise_hamiltonian(spec, state))
    lyapunov = noise_linear.covariance_map(moments, state)
    from_k = kspace.covariance_map_from_k(spec, state)
    deviation = float(np.max(np.abs(lyapunov - from_k)) / np.max(np.abs(lyapunov)))
    obj.emit(artifacts.covariance_artifact(from_k if method == 'kspace' else lyapunov))
    obj.emit(artifacts.Artifact('correlations_check', document={
        'method': method, 'max_relative_deviation': deviation}))
    click.echo(f"max relative deviation between methods: {deviation:.3e}")


@cli.command()
@click.option('--trajectories', type=click.IntRange(min=2), default=stochastic.DEFAULT_TRAJECTORIES)
@click.option('--dt', type=float, default=None)
@click.option('--t-relax', type=float, default=None)
@click.option('--t-collect', type=float, default=None)
@click.option('--nonlinear', is_flag=True, help='Integrate the full Kerr equations')
@click.option('--sigma', type=float, default=4.0, help='Agreement threshold in standard errors')
@click.pass_obj
@handle_errors
def montecarlo(obj: Context, trajectories, dt, t_relax, t_collect, nonlinear, sigma):
    """Monte-Carlo moments compared against the Lyapunov solution"""
    spec = obj.spec()
    state = _converged(spec)
    system = noise_linear.build_noise_hamiltonian(spec, state)
    seed = spec.rng_seed
    if nonlinear:
        ensemble = stochastic.simulate_nonlinear(spec, state, dt, t_relax, t_collect, trajectories,
                                                 seed, obj.threads)
    else:
        ensemble = stochastic.simulate_linear(system, dt, t_relax, t_collect, trajectories, seed, obj.threads)
    obj.emit(artifacts.Artifact('montecarlo', document=ensemble.to_dict()))
    comparison = stochastic.compare_to_moments(ensemble, noise_linear.solve_lyapunov(system), sigma)
    obj.emit(artifacts.Artifact('montecarlo_check', document={
        'max_z': comparison.max_z, 'worst_index': comparison.worst_index,
        'n_sigma': sigma, 'passed': comparison.passed}))
    click.echo(f"max deviation: {comparison.max_z:.3f} standard errors")
    return EXIT_OK if comparison.passed else EXIT_FAILURE


@cli.command()
@click.argument('name')
@click.pass_obj
@handle_errors
def scenario(obj: Context, name):
    """Run a figure preset (or a config file) with its acceptance checks"""
    result = scenarios.run_scenario(name, obj.out, obj.fmt, obj.seed, obj.threads)
    click.echo(os.path.join(obj.out, result.name, 'summary.json'))
    for check in result.checks:
        click.echo(f"{'PASS' if check.passed else 'FAIL'}  {check.name}: {check.measured}")
    return EXIT_OK if result.passed else EXIT_FAILURE


def main():
    cli(prog_name='kerrlat')


if __name__ == '__main__':
    main()
