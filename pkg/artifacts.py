"""
Artifact serialization
Atomic JSON and CSV writers plus the fixed layouts of every table the CLI emits
"""

import csv
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence

import numpy as np

from errors import ArtifactError

logger = logging.getLogger(__name__)

FORMATS = ('json', 'csv')
FLOAT_FORMAT = '.17g'


@dataclass
class Artifact:
    """A named output: a JSON document, a table, or both"""
    name: str
    document: Optional[Any] = None
    header: Optional[List[str]] = None
    rows: List[Sequence[Any]] = field(default_factory=list)

    @property
    def is_table(self) -> bool:
        return self.header is not None


def plain(value: Any) -> Any:
    """Convert numpy scalars/arrays and complex numbers into JSON-ready values"""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return [float(value.real), float(value.imag)]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), FLOAT_FORMAT)
    return str(value)


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
        fd, temp_path = tempfile.mkstemp(prefix='.tmp-', dir=directory)
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(temp_path, path)
    except OSError as e:
        raise ArtifactError(f"Cannot write {path}: {e}")


def write_json(path: str, document: Any) -> str:
    _write_atomic(path, json.dumps(plain(document), indent=2) + '\n')
    return path


def write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    _write_atomic(path, buffer.getvalue())
    return path


def emit(artifact: Artifact, out_dir: str, fmt: str = 'json') -> str:
    """Write an artifact under out_dir; tables follow fmt, documents are always JSON"""
    if fmt not in FORMATS:
        raise ArtifactError(f"Unknown format {fmt!r}; expected one of {FORMATS}")
    if artifact.is_table and fmt == 'csv':
        path = write_csv(os.path.join(out_dir, f"{artifact.name}.csv"), artifact.header, artifact.rows)
    elif artifact.is_table:
        document = {'columns': artifact.header, 'rows': [list(r) for r in artifact.rows]}
        path = write_json(os.path.join(out_dir, f"{artifact.name}.json"), document)
    else:
        path = write_json(os.path.join(out_dir, f"{artifact.name}.json"), artifact.document)
    logger.debug(f"Wrote {path}")
    return path


def steady_state_artifact(steady, name: str = 'steady_state') -> Artifact:
    return Artifact(name, document={
        'alpha': [[float(z.real), float(z.imag)] for z in steady.alpha],
        'n': [float(x) for x in steady.photon_numbers],
        'residual': float(steady.residual_norm),
        'converged': bool(steady.converged),
        'diagnostic': steady.diagnostic,
    })


def covariance_artifact(cov: np.ndarray, name: str = 'covariance') -> Artifact:
    n = cov.shape[0]
    rows = [(i, j, float(cov[i, j])) for i in range(n) for j in range(n)]
    return Artifact(name, header=['i', 'j', 'cov'], rows=rows)


def spectrum_artifact(eigenvalues: Sequence[complex], boundary: str, name: str = 'spectrum') -> Artifact:
    rows = [(float(z.real), float(z.imag), boundary) for z in eigenvalues]
    return Artifact(name, header=['re', 'im', 'boundary'], rows=rows)


def trajectory_artifact(trajectory, name: str = 'trajectory') -> Artifact:
    """time, then re/im of every site"""
    n_sites = trajectory.states.shape[1]
    header = ['time'] + [f"{part}{i}" for i in range(n_sites) for part in ('re', 'im')]
    rows = []
    for t, state in zip(trajectory.times, trajectory.states):
        row = [float(t)]
        for z in state:
            row.extend((float(z.real), float(z.imag)))
        rows.append(row)
    return Artifact(name, header=header, rows=rows)


def response_artifact(response, name: str = 'response') -> Artifact:
    n_sites = response.response.shape[1]
    header = ['time'] + [f"site{i}" for i in range(n_sites)]
    rows = [[float(t)] + [float(x) for x in values] for t, values in zip(response.times, response.response)]
    return Artifact(name, header=header, rows=rows)


def noise_profile_artifact(profile: List[dict], name: str = 'noise') -> Artifact:
    header = ['site', 'photon_number', 'intensity_db', 'phase_db']
    rows = [[row[key] for key in header] for row in profile]
    return Artifact(name, header=header, rows=rows)
