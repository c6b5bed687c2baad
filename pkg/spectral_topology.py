"""
Band topology of the noise Hamiltonian
Bloch bands under periodic boundaries, open-chain spectra, point-gap winding,
braid degree of the two bands and skin-mode localization
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy.optimize import minimize_scalar

from errors import ExceptionalPointError, ParameterError, WindingError
from model import LatticeSpec, UniformParameters, uniform_parameters

logger = logging.getLogger(__name__)

DEFAULT_K_COUNT = 1024
MIN_K_COUNT = 64
EP_TOL = 1e-9
# a located transition closes the gap only like sqrt(dn)
EP_FLAG_TOL = 1e-6
ON_CURVE_TOL = 1e-9
WINDING_DEFECT = 1e-3
MAX_PHASE_STEP = 0.75 * np.pi
CONTAINMENT_TOL = 1e-6

ParametersLike = Union[LatticeSpec, UniformParameters]


@dataclass(frozen=True, eq=False)
class BandSet:
    """Continuity-ordered Bloch bands, optionally with the open-chain spectrum"""
    k_grid: np.ndarray
    bands: np.ndarray
    min_gap: float
    at_exceptional_point: bool
    obc_eigenvalues: Optional[np.ndarray] = None
    obc_eigenvectors: Optional[np.ndarray] = None

    def loops(self) -> List[np.ndarray]:
        """Closed curves traced by the bands over one Brillouin zone

        Braided bands swap at the zone edge and form a single loop over two passes.
        """
        first, last = self.bands[0], self.bands[-1]
        if abs(last[0] - first[0]) + abs(last[1] - first[1]) <= abs(last[0] - first[1]) + abs(last[1] - first[0]):
            return [self.bands[:, 0], self.bands[:, 1]]
        return [np.concatenate([self.bands[:, 0], self.bands[:, 1]])]


@dataclass(frozen=True)
class ExceptionalPoint:
    photon_number: float
    k: float
    min_gap: float
    flagged: bool


@dataclass(frozen=True, eq=False)
class LocalizationMetrics:
    center_of_mass: np.ndarray
    ipr: np.ndarray

    def rows(self) -> List[dict]:
        return [{'mode': j, 'center_of_mass': float(c), 'ipr': float(p)}
                for j, (c, p) in enumerate(zip(self.center_of_mass, self.ipr))]


def as_uniform(params: ParametersLike) -> UniformParameters:
    return uniform_parameters(params) if isinstance(params, LatticeSpec) else params


def k_grid(k_count: int = DEFAULT_K_COUNT) -> np.ndarray:
    """Uniform momenta in (-pi, pi]"""
    return -np.pi + 2.0 * np.pi * np.arange(1, k_count + 1) / k_count


def bloch_dispersion(params: ParametersLike, k):
    """2g cos k - 2i kappa sin k"""
    p = as_uniform(params)
    k = np.asarray(k, dtype=float)
    return 2.0 * p.g * np.cos(k) - 2j * p.kappa * np.sin(k)


def hn_bloch(params: ParametersLike, n: float, k: float) -> np.ndarray:
    """-i gamma_tot I + i (beta n) sigma_y + (Delta + 2 beta n + dispersion) sigma_z"""
    return _bloch_stack(as_uniform(params), n, np.array([k]))[0]


def _bloch_stack(p: UniformParameters, n: float, ks: np.ndarray) -> np.ndarray:
    shift = p.delta + 2.0 * p.beta * n + bloch_dispersion(p, ks)
    coupling = p.beta * n
    h = np.empty((ks.size, 2, 2), dtype=complex)
    h[:, 0, 0] = shift - 1j * p.gamma_total
    h[:, 0, 1] = coupling
    h[:, 1, 0] = -coupling
    h[:, 1, 1] = -shift - 1j * p.gamma_total
    return h


def _continuity_order(eigenvalues: np.ndarray) -> np.ndarray:
    """Label strands by nearest-neighbour matching; ties keep the current labels"""
    ordered = np.empty_like(eigenvalues)
    first = eigenvalues[0]
    ordered[0] = first[np.lexsort((first.imag, first.real))]
    for j in range(1, len(eigenvalues)):
        prev = ordered[j - 1]
        a, b = eigenvalues[j]
        keep = abs(a - prev[0]) + abs(b - prev[1])
        swap = abs(b - prev[0]) + abs(a - prev[1])
        ordered[j] = (b, a) if swap < keep else (a, b)
    return ordered


def _band_scale(bands: np.ndarray) -> float:
    return max(float(np.max(np.abs(bands))), 1.0)


def pbc_bands(params: ParametersLike, n: float, k_count: int = DEFAULT_K_COUNT) -> BandSet:
    """Eigenvalues of the Bloch noise Hamiltonian over the k grid"""
    if k_count < MIN_K_COUNT:
        raise ParameterError(f"k_count must be >= {MIN_K_COUNT}, got {k_count}")
    p = as_uniform(params)
    ks = k_grid(k_count)
    bands = _continuity_order(np.linalg.eigvals(_bloch_stack(p, n, ks)))
    gap = np.abs(bands[:, 0] - bands[:, 1])
    min_gap = float(np.min(gap))
    at_ep = min_gap <= EP_TOL * _band_scale(bands)
    if at_ep:
        logger.warning(f"Exceptional point on the k grid near k={ks[np.argmin(gap)]:.4f}")
    return BandSet(k_grid=ks, bands=bands, min_gap=min_gap, at_exceptional_point=at_ep)


def obc_spectrum(hn: np.ndarray):
    """Dense eigendecomposition of an open-chain H_N; unit-norm eigenvector columns"""
    hn = np.asarray(hn, dtype=complex)
    if hn.ndim != 2 or hn.shape[0] != hn.shape[1] or hn.shape[0] % 2:
        raise ParameterError(f"H_N must be a square 2N x 2N matrix, got shape {hn.shape}")
    eigenvalues, eigenvectors = np.linalg.eig(hn)
    if not (np.all(np.isfinite(eigenvalues)) and np.all(np.isfinite(eigenvectors))):
        raise np.linalg.LinAlgError("Eigendecomposition produced non-finite values")
    order = np.lexsort((eigenvalues.imag, eigenvalues.real))
    eigenvectors = eigenvectors[:, order]
    eigenvectors = eigenvectors / np.linalg.norm(eigenvectors, axis=0)
    return eigenvalues[order], eigenvectors


def _phase_steps(curve: np.ndarray, reference: complex) -> np.ndarray:
    z = np.asarray(curve, dtype=complex) - reference
    closed = np.append(z, z[0])
    return np.angle(closed[1:] / closed[:-1])


def _curve_scale(curve: np.ndarray) -> float:
    return max(float(np.max(np.abs(curve - np.mean(curve)))), 1e-300)


def winding_number(curve: Sequence[complex], reference: complex = 0.0) -> int:
    """Signed turns of the closed curve around reference, clockwise positive as k increases"""
    curve = np.asarray(curve, dtype=complex)
    distance = float(np.min(np.abs(curve - reference)))
    if distance <= ON_CURVE_TOL * _curve_scale(curve):
        raise WindingError(f"Reference point {reference} lies on the curve (distance {distance:.3e})")
    steps = _phase_steps(curve, reference)
    if np.max(np.abs(steps)) > MAX_PHASE_STEP:
        raise WindingError("Curve is under-resolved around the reference point; refine the k grid")
    turns = -float(np.sum(steps)) / (2.0 * np.pi)
    winding = int(round(turns))
    if abs(turns - winding) > WINDING_DEFECT:
        raise WindingError(f"Winding integral {turns:.6f} is not close to an integer")
    return winding


def braid_degree(bands: np.ndarray) -> int:
    """Winding of the discriminant (lambda_+ - lambda_-)^2 around zero

    Equals the total phase advance of the band separation over pi.
    """
    bands = np.asarray(bands, dtype=complex)
    if bands.ndim != 2 or bands.shape[1] != 2:
        raise ParameterError(f"braid_degree needs two bands, got shape {bands.shape}")
    separation = bands[:, 0] - bands[:, 1]
    gap = np.abs(separation)
    j = int(np.argmin(gap))
    if gap[j] <= EP_TOL * _band_scale(bands):
        raise ExceptionalPointError(float(gap[j]))
    steps = _phase_steps(separation ** 2, 0.0)
    if np.max(np.abs(steps)) > MAX_PHASE_STEP:
        raise WindingError("Band separation is under-resolved; refine the k grid")
    return int(round(-float(np.sum(steps)) / (2.0 * np.pi)))


def localization_metrics(eigenvectors: np.ndarray) -> LocalizationMetrics:
    """Centre of mass and inverse participation ratio of each (u, v) mode over the sites"""
    eigenvectors = np.asarray(eigenvectors)
    n = eigenvectors.shape[0] // 2
    weights = np.abs(eigenvectors[:n]) ** 2 + np.abs(eigenvectors[n:]) ** 2
    weights = weights / np.sum(weights, axis=0)
    sites = np.arange(n)[:, None]
    return LocalizationMetrics(
        center_of_mass=np.sum(sites * weights, axis=0),
        ipr=np.sum(weights ** 2, axis=0),
    )


def _distance_to_polyline(curve: np.ndarray, point: complex) -> float:
    start = curve
    end = np.roll(curve, -1)
    segment = end - start
    length2 = np.abs(segment) ** 2
    safe = np.where(length2 > 0, length2, 1.0)
    t = np.clip(np.real((point - start) * segment.conj()) / safe, 0.0, 1.0)
    return float(np.min(np.abs(start + t * segment - point)))


def pbc_loops_contain(bandset: BandSet, points: Sequence[complex], tol: float = CONTAINMENT_TOL) -> np.ndarray:
    """True where a point lies inside (non-zero winding) or on one of the band loops"""
    points = np.asarray(points, dtype=complex)
    inside = np.zeros(points.size, dtype=bool)
    for loop in bandset.loops():
        scale = _curve_scale(loop)
        for idx, point in enumerate(points):
            if inside[idx]:
                continue
            if _distance_to_polyline(loop, point) <= tol * scale:
                inside[idx] = True
                continue
            inside[idx] = _turns(loop, point) != 0
    return inside


def _turns(loop: np.ndarray, point: complex) -> int:
    return int(round(-float(np.sum(_phase_steps(loop, point))) / (2.0 * np.pi)))


def enclosing_winding(bandset: BandSet, point: complex) -> int:
    """Total winding of the band loops around a point, clockwise positive"""
    return sum(_turns(loop, point) for loop in bandset.loops())


def full_pbc_check(params: ParametersLike, n: float, hn_full: np.ndarray) -> float:
    """Largest distance between Bloch eigenvalues at k = 2 pi m / N and the full PBC spectrum"""
    p = as_uniform(params)
    n_sites = hn_full.shape[0] // 2
    ks = 2.0 * np.pi * np.arange(n_sites) / n_sites
    bloch = np.linalg.eigvals(_bloch_stack(p, n, ks)).ravel()
    full = np.linalg.eigvals(hn_full)
    distance = np.abs(bloch[:, None] - full[None, :])
    return float(max(np.max(np.min(distance, axis=1)), np.max(np.min(distance, axis=0))))


def _min_gap_over_k(p: UniformParameters, n: float, k_count: int):
    ks = k_grid(k_count)

    def gap(k):
        shift = p.delta + 2.0 * p.beta * n + bloch_dispersion(p, k)
        return 2.0 * np.sqrt(abs(shift ** 2 - (p.beta * n) ** 2))

    values = gap(ks)
    j = int(np.argmin(values))
    step = 2.0 * np.pi / k_count
    result = minimize_scalar(gap, bounds=(ks[j] - step, ks[j] + step), method='bounded',
                             options={'xatol': 1e-12})
    if result.fun < values[j]:
        return float(result.x), float(result.fun)
    return float(ks[j]), float(values[j])


def locate_exceptional_point(params: ParametersLike, n_a: float, n_b: float,
                             k_count: int = DEFAULT_K_COUNT) -> ExceptionalPoint:
    """Bisect in photon number for the braid-degree change between n_a and n_b"""
    p = as_uniform(params)
    lo, hi = sorted((float(n_a), float(n_b)))

    def degree(n):
        return braid_degree(pbc_bands(p, n, k_count).bands)

    try:
        d_lo = degree(lo)
    except ExceptionalPointError:
        return _exceptional_point(p, lo, k_count)
    try:
        d_hi = degree(hi)
    except ExceptionalPointError:
        return _exceptional_point(p, hi, k_count)
    if d_lo == d_hi:
        raise ParameterError(f"Braid degree is {d_lo} at both n={lo} and n={hi}")

    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        try:
            d_mid = degree(mid)
        except ExceptionalPointError:
            return _exceptional_point(p, mid, k_count)
        if d_mid == d_lo:
            lo = mid
        else:
            hi = mid
    return _exceptional_point(p, 0.5 * (lo + hi), k_count)


def _exceptional_point(p: UniformParameters, photon_number: float, k_count: int) -> ExceptionalPoint:
    k, gap = _min_gap_over_k(p, photon_number, k_count)
    scale = max(abs(p.delta) + 3.0 * abs(p.beta) * photon_number + 2.0 * (p.g + abs(p.kappa)) + p.gamma_total, 1.0)
    flagged = gap <= EP_FLAG_TOL * scale
    logger.debug(f"Exceptional point at n={photon_number:.12g}, k={k:.6f}, gap {gap:.3e}")
    return ExceptionalPoint(photon_number, k, gap, flagged)
