"""
Versioned figure presets and their acceptance checks
Each preset runs its pipeline, writes artifacts and a summary.json with the
measured value of every check
"""

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

import artifacts
import kspace
import meanfield
import noise_linear
import spectral_topology
from config import load_spec, spec_from_dict
from errors import ConfigError, KerrLatticeError
from model import LatticeSpec, describe

logger = logging.getLogger(__name__)

PRESET_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), 'presets')
PRESETS = ('fig1_transient', 'fig2_immunity', 'fig3_nhse', 'fig4_phase')
PRESET_KEYS = {'name', 'version', 'pipeline', 'model', 'parameters', 'thresholds'}

TOL_COMMUTATOR = 1e-8
TOL_UNCERTAINTY = 1e-9


@dataclass
class Check:
    name: str
    passed: bool
    measured: Any
    threshold: Any = None

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'passed': bool(self.passed),
                'measured': artifacts.plain(self.measured), 'threshold': artifacts.plain(self.threshold)}


@dataclass
class Scenario:
    """A named pipeline over one lattice spec"""
    name: str
    spec: LatticeSpec
    pipeline: str
    parameters: Dict[str, Any] = field(default_factory=dict)
    thresholds: Dict[str, Any] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)
    checks: List[Check] = field(default_factory=list)

    @property
    def steps(self) -> List[str]:
        return PIPELINE_STEPS[self.pipeline]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str, passed: bool, measured: Any, threshold: Any = None) -> bool:
        self.checks.append(Check(name, bool(passed), measured, threshold))
        level = logging.INFO if passed else logging.WARNING
        logger.log(level, f"[{self.name}] {name}: {'pass' if passed else 'FAIL'} (measured {measured})")
        return bool(passed)

    def summary(self) -> Dict[str, Any]:
        return {
            'scenario': self.name,
            'pipeline': self.pipeline,
            'steps': self.steps,
            'passed': self.passed,
            'checks': [c.to_dict() for c in self.checks],
            'outputs': [os.path.basename(p) for p in self.outputs],
        }


def preset_path(name: str) -> str:
    return os.path.join(PRESET_DIR, f"{name}.json")


def load_scenario(name_or_path: str, seed_override: Optional[int] = None) -> Scenario:
    """Resolve a preset name or a config path into a Scenario"""
    path = preset_path(name_or_path) if name_or_path in PRESETS else name_or_path
    if not os.path.exists(path):
        raise ConfigError(f"Unknown scenario {name_or_path!r}; presets are {', '.join(PRESETS)}")
    with open(path, 'r', encoding='utf-8') as f:
        text = f.read()
    try:
        document = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON in {path}: {e.msg}", line=e.lineno, column=e.colno)

    if isinstance(document, dict) and 'model' in document:
        unknown = sorted(set(document) - PRESET_KEYS)
        if unknown:
            raise ConfigError(f"Unknown preset keys: {', '.join(unknown)}", key=unknown[0])
        pipeline = document.get('pipeline', 'generic')
        if pipeline not in PIPELINES:
            raise ConfigError(f"Unknown pipeline {pipeline!r}", key='pipeline')
        spec = spec_from_dict(document['model'], seed_override=seed_override)
        return Scenario(document.get('name', os.path.splitext(os.path.basename(path))[0]), spec, pipeline,
                        document.get('parameters', {}), document.get('thresholds', {}))
    spec = load_spec(path, seed_override=seed_override)
    return Scenario(os.path.splitext(os.path.basename(path))[0], spec, 'generic')


def run_scenario(name_or_path: str, out_dir: str, fmt: str = 'csv',
                 seed: Optional[int] = None, threads: int = 1) -> Scenario:
    """Run a scenario end to end and write its summary.json"""
    scenario = load_scenario(name_or_path, seed_override=seed)
    logger.info(f"Running scenario {scenario.name}: {describe(scenario.spec)}")
    target = os.path.join(out_dir, scenario.name)

    def emit(artifact: artifacts.Artifact) -> None:
        scenario.outputs.append(artifacts.emit(artifact, target, fmt))

    try:
        PIPELINES[scenario.pipeline](scenario, emit)
    except KerrLatticeError as e:
        scenario.check('pipeline', False, f"{type(e).__name__}: {e}")
    artifacts.write_json(os.path.join(target, 'summary.json'), scenario.summary())
    logger.info(f"Scenario {scenario.name}: {'all checks passed' if scenario.passed else 'checks failed'}")
    return scenario


def _steady(scenario: Scenario, spec: LatticeSpec, label: str) -> Optional[meanfield.SteadyState]:
    steady = meanfield.find_steady_state(spec)
    scenario.check(f"{label}_converged", steady.converged, steady.residual_norm)
    return steady if steady.converged else None


def _linear_noise(scenario: Scenario, spec: LatticeSpec, steady, label: str):
    system = noise_linear.build_noise_hamiltonian(spec, steady)
    report = noise_linear.is_stable(system)
    if not scenario.check(f"{label}_stable", report.stable, report.max_im_lambda, -noise_linear.STABILITY_MARGIN):
        return system, None
    moments = noise_linear.solve_lyapunov(system)
    scenario.check(f"{label}_commutator", moments.commutator_defect() < TOL_COMMUTATOR,
                   moments.commutator_defect(), TOL_COMMUTATOR)
    return system, moments


def _uncertainty(scenario: Scenario, profile: List[Dict[str, Any]], label: str) -> None:
    products = [10 ** ((row['intensity_db'] + row['phase_db']) / 10.0) for row in profile]
    scenario.check(f"{label}_uncertainty", min(products) >= 1.0 - TOL_UNCERTAINTY, min(products), 1.0)


def run_generic(scenario: Scenario, emit: Callable) -> None:
    """steady state, linear noise, spectrum and covariance map"""
    spec = scenario.spec
    steady = _steady(scenario, spec, 'steady')
    if steady is None:
        return
    emit(artifacts.steady_state_artifact(steady))
    system, moments = _linear_noise(scenario, spec, steady, 'noise')
    emit(artifacts.spectrum_artifact(noise_linear.spectrum(system), spec.boundary))
    if moments is None or np.any(steady.alpha == 0):
        return
    profile = noise_linear.noise_profile(spec, steady, moments)
    _uncertainty(scenario, profile, 'noise')
    emit(artifacts.noise_profile_artifact(profile))
    emit(artifacts.covariance_artifact(noise_linear.covariance_map(moments, steady)))


def run_transient(scenario: Scenario, emit: Callable) -> None:
    """pump-from-zero steady state and the chirality of a single-site kick"""
    spec, p, t = scenario.spec, scenario.parameters, scenario.thresholds
    steady = _steady(scenario, spec, 'steady')
    if steady is None:
        return
    emit(artifacts.steady_state_artifact(steady))
    n = steady.photon_numbers
    ratio = float(np.max(n) / np.min(n))
    scenario.check('near_uniform', ratio < t['max_min_ratio'], ratio, t['max_min_ratio'])

    response = meanfield.perturbation_response(spec, steady, p['site'], p['epsilon'], p['t_end'], p['n_samples'])
    emit(artifacts.response_artifact(response))
    chirality = meanfield.chirality_ratio(response)
    scenario.check('chirality', chirality > t['chirality'], chirality, t['chirality'])

    mirror = p['mirror']
    size = mirror['n_sites']
    mirror_spec = spec.with_changes(
        n_sites=size, kappa=mirror['kappa'], delta=mirror['delta'],
        drives=mirror['drive_amplitude'] * (-1.0) ** np.arange(size),
    )
    mirror_steady = _steady(scenario, mirror_spec, 'mirror')
    if mirror_steady is None:
        return
    mirror_response = meanfield.perturbation_response(
        mirror_spec, mirror_steady, mirror['site'], p['epsilon'], p['t_end'], p['n_samples'])
    asymmetry = float(np.max(np.abs(mirror_response.response - mirror_response.response[:, ::-1])))
    scenario.check('mirror_symmetry', asymmetry < t['mirror_tol'], asymmetry, t['mirror_tol'])
    low, high = t['mirror_chirality']
    mirror_chirality = meanfield.chirality_ratio(mirror_response)
    scenario.check('mirror_chirality', low <= mirror_chirality <= high, mirror_chirality, [low, high])


def run_immunity(scenario: Scenario, emit: Callable) -> None:
    """noise tables versus injected level, per kappa, plus the kappa sweep"""
    spec, p, t = scenario.spec, scenario.parameters, scenario.thresholds
    site = p['site']
    levels = p['levels_db']
    sweeps = {}
    for kappa in p['kappas']:
        spec_k = spec.with_changes(kappa=kappa)
        steady = _steady(scenario, spec_k, f"kappa_{kappa:g}")
        if steady is None:
            return
        sweep = noise_linear.noise_immunity_sweep(spec_k, steady, site, levels)
        sweeps[kappa] = sweep
        rows = [(level, i, sweep.intensity_db[r, i], sweep.phase_db[r, i])
                for r, level in enumerate(sweep.levels_db) for i in range(spec.n_sites)]
        emit(artifacts.Artifact(f"immunity_kappa_{kappa:g}",
                                header=['level_db', 'site', 'intensity_db', 'phase_db'], rows=rows))

    reciprocal = sweeps[min(p['kappas'])]
    baseline = reciprocal.intensity_db[0]
    in_band = np.all((baseline >= t['baseline_db_low']) & (baseline <= t['baseline_db_high']))
    scenario.check('reciprocal_squeezing', in_band, [float(baseline.min()), float(baseline.max())],
                   [t['baseline_db_low'], t['baseline_db_high']])
    row_20 = int(np.argmin(np.abs(reciprocal.levels_db - 20.0)))
    rise = float(np.min(reciprocal.intensity_db[row_20] - baseline))
    scenario.check('reciprocal_rise', rise >= t['reciprocal_rise_db'], rise,
                   {'required': t['reciprocal_rise_db'], 'reference': t['reciprocal_rise_reference_db']})

    directional = sweeps[max(p['kappas'])]
    right = directional.intensity_db[:, -1]
    shift = float(abs(directional.intensity_db[row_20, -1] - right[0]))
    scenario.check('right_edge_within_baseline', shift < t['right_edge_tol_db'], shift, t['right_edge_tol_db'])
    flatness = float(np.max(right) - np.min(right))
    scenario.check('rightmost_flatness', flatness < t['flatness_db'], flatness, t['flatness_db'])
    scenario.check('rightmost_squeezed', right[0] < 0.0, float(right[0]), 0.0)

    table = noise_linear.kappa_sweep(spec, p['kappa_sweep'], site, p['kappa_sweep_level_db'])
    rows = [(kappa, i, table.baseline_db[r, i], table.injected_db[r, i])
            for r, kappa in enumerate(table.kappas) for i in range(spec.n_sites)]
    emit(artifacts.Artifact('kappa_sweep', header=['kappa', 'site', 'baseline_db', 'injected_db'], rows=rows))


def _staircase_violations(values: List[float]) -> int:
    """Sites where the noise rises toward the right instead of the left"""
    return sum(1 for left, right in zip(values, values[1:]) if right > left + 1e-9)


def run_topology(scenario: Scenario, emit: Callable) -> None:
    """open-chain noise staircase, skin modes and the point-gap winding of the PBC bands"""
    spec, p, t = scenario.spec, scenario.parameters, scenario.thresholds
    steady = _steady(scenario, spec, 'obc_steady')
    if steady is None:
        return
    emit(artifacts.steady_state_artifact(steady, 'obc_steady_state'))
    system, moments = _linear_noise(scenario, spec, steady, 'obc')
    if moments is None:
        return
    profile = noise_linear.noise_profile(spec, steady, moments)
    emit(artifacts.noise_profile_artifact(profile, 'obc_noise'))
    _uncertainty(scenario, profile, 'obc')
    for key in ('intensity_db', 'phase_db'):
        violations = _staircase_violations([row[key] for row in profile])
        scenario.check(f"staircase_{key}", violations <= t['staircase_violations'],
                       violations, t['staircase_violations'])

    eigenvalues, eigenvectors = spectral_topology.obc_spectrum(system.noise_hamiltonian)
    metrics = spectral_topology.localization_metrics(eigenvectors)
    limit = t['center_of_mass_fraction'] * spec.n_sites
    scenario.check('left_localized', np.max(metrics.center_of_mass) < limit,
                   float(np.max(metrics.center_of_mass)), limit)
    emit(artifacts.Artifact('obc_localization', header=['mode', 'center_of_mass', 'ipr'],
                            rows=[list(r.values()) for r in metrics.rows()]))

    periodic = spec.with_changes(boundary='periodic')
    pbc_steady = _steady(scenario, periodic, 'pbc_steady')
    if pbc_steady is None:
        return
    _, pbc_moments = _linear_noise(scenario, periodic, pbc_steady, 'pbc')
    if pbc_moments is not None:
        pbc_profile = noise_linear.noise_profile(periodic, pbc_steady, pbc_moments)
        emit(artifacts.noise_profile_artifact(pbc_profile, 'pbc_noise'))
        spread = max(float(np.ptp([row[key] for row in pbc_profile])) for key in ('intensity_db', 'phase_db'))
        scenario.check('pbc_profile_uniform', spread < t['pbc_uniform_tol'], spread, t['pbc_uniform_tol'])
    photon_number = float(np.mean(pbc_steady.photon_numbers))
    bands = spectral_topology.pbc_bands(periodic, photon_number, p.get('k_count', spectral_topology.DEFAULT_K_COUNT))
    contained = spectral_topology.pbc_loops_contain(bands, eigenvalues)
    scenario.check('obc_inside_pbc_loops', np.all(contained), int(np.count_nonzero(~contained)), 0)
    windings = sorted({spectral_topology.enclosing_winding(bands, z) for z in eigenvalues})
    scenario.check('winding', windings == [t['winding']], windings, t['winding'])

    emit(artifacts.Artifact('spectrum', header=['re', 'im', 'boundary'], rows=(
        [(z.real, z.imag, 'periodic') for z in bands.bands.ravel()]
        + [(z.real, z.imag, 'open') for z in eigenvalues])))


def _branch_root(spec: LatticeSpec, flux: float, branch: str):
    """Lowest (lower branch) or highest (upper branch) stable root at a flux"""
    spec_f = meanfield.spec_at_flux(spec, flux)
    stable = []
    for n in meanfield.pbc_photon_number(spec_f, flux):
        steady = meanfield.uniform_steady_state(spec_f, n)
        if noise_linear.is_stable(noise_linear.build_noise_hamiltonian(spec_f, steady)).stable:
            stable.append(steady)
    if not stable:
        return spec_f, None
    return spec_f, stable[0] if branch == 'lower' else stable[-1]


def _wrap(k: np.ndarray) -> np.ndarray:
    return np.angle(np.exp(1j * k))


def run_phase(scenario: Scenario, emit: Callable) -> None:
    """flux sweep with braid degrees, then correlations at the marked points"""
    spec, p, t = scenario.spec, scenario.parameters, scenario.thresholds
    k_count = p.get('k_count', spectral_topology.DEFAULT_K_COUNT)
    sweep = meanfield.sweep_flux(spec, p['flux_grid'], k_count)
    rows = []
    for point in sweep.points:
        pumped = point.pumped
        for index, root in enumerate(point.roots):
            rows.append((point.flux, index, root.photon_number, root.stable, root.max_im_lambda,
                         '' if root.braid_degree is None else root.braid_degree, root is pumped))
    emit(artifacts.Artifact('flux_sweep', header=['flux', 'root', 'photon_number', 'stable',
                                                  'max_im_lambda', 'braid_degree', 'pumped'], rows=rows))
    bistable = [point.flux for point in sweep.points if len(point.roots) == t['bistable_roots']]
    scenario.check('bistable_window', bool(bistable),
                   [min(bistable), max(bistable)] if bistable else None, t['bistable_roots'])
    unstable = [(point.flux, root.max_im_lambda) for point in sweep.points for root in point.roots if not root.stable]
    growth = min((rate for _, rate in unstable), default=None)
    scenario.check('unstable_window', bool(unstable) and growth >= 0.0,
                   {'fluxes': sorted({flux for flux, _ in unstable}), 'min_max_im_lambda': growth}, 0.0)

    sequence = sweep.degree_sequence()
    scenario.check('braid_sequence', sequence == t['degree_sequence'], sequence, t['degree_sequence'])
    stable_transitions = [tr for tr in sweep.transitions if tr.on_stable_branch]
    scenario.check('transitions_at_exceptional_points',
                   bool(stable_transitions) and all(tr.exceptional_point.flagged for tr in stable_transitions),
                   [tr.exceptional_point.photon_number for tr in stable_transitions])
    emit(artifacts.Artifact('braid_transitions', header=[
        'flux_before', 'flux_after', 'degree_before', 'degree_after', 'photon_number', 'k', 'min_gap', 'stable'],
        rows=[(tr.flux_before, tr.flux_after, tr.degree_before, tr.degree_after, tr.exceptional_point.photon_number,
               tr.exceptional_point.k, tr.exceptional_point.min_gap, tr.on_stable_branch) for tr in sweep.transitions]))

    n_sites = spec.n_sites
    for label, point in p['points'].items():
        spec_f, steady = _branch_root(spec, point['flux'], point['branch'])
        if not scenario.check(f"{label}_stable_root", steady is not None, point['branch']):
            continue
        system = noise_linear.build_noise_hamiltonian(spec_f, steady)
        moments = noise_linear.solve_lyapunov(system)
        cov = noise_linear.covariance_map(moments, steady)
        cov_k = kspace.covariance_map_from_k(spec_f, steady)
        deviation = float(np.linalg.norm(cov - cov_k) / np.linalg.norm(cov))
        scenario.check(f"{label}_kspace_agreement", deviation < t['kspace_rel_tol'], deviation, t['kspace_rel_tol'])
        emit(artifacts.covariance_artifact(cov, f"covariance_{label}"))

        row = cov[0]
        if point.get('pattern') == 'checkerboard':
            ells = range(0, t['checkerboard_max_ell'] + 1, 2)
            alternating = all(np.sign(row[ell]) == -np.sign(row[ell + 2]) for ell in ells)
            scenario.check(f"{label}_checkerboard", alternating, [float(row[ell]) for ell in range(0, n_sites // 2 + 1)])
        else:
            scenario.check(f"{label}_positive_row", bool(np.all(row > 0)), float(np.min(row)), 0.0)

        photon_number = float(steady.photon_numbers[0])
        ks = _wrap(2.0 * np.pi * np.arange(n_sites) / n_sites)
        occupation = [kspace.k_resolved_occupation(spec_f, photon_number, k) for k in ks]
        emit(artifacts.Artifact(f"k_occupation_{label}", header=['k', 'occupation'],
                                rows=list(zip(ks.tolist(), occupation))))
        peak = float(ks[int(np.argmax(occupation))])
        expected = t['occupation_peak_k'][label]
        step = 2.0 * np.pi / n_sites
        distance = abs(float(_wrap(np.array([peak - expected]))[0]))
        scenario.check(f"{label}_occupation_peak", distance <= step + 1e-12, peak, expected)


PIPELINES: Dict[str, Callable[[Scenario, Callable], None]] = {
    'generic': run_generic,
    'transient': run_transient,
    'immunity': run_immunity,
    'topology': run_topology,
    'phase': run_phase,
}

PIPELINE_STEPS = {
    'generic': ['steady', 'noise', 'spectrum', 'covariance'],
    'transient': ['steady', 'transient', 'mirror'],
    'immunity': ['steady', 'noise_immunity', 'kappa_sweep'],
    'topology': ['steady', 'noise', 'obc_spectrum', 'pbc_bands', 'winding'],
    'phase': ['sweep', 'braid', 'noise', 'correlations', 'k_occupation'],
}
