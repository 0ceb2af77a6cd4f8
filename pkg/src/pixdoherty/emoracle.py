"""Quasi-static nodal-admittance model of a pixelated microstrip region.

Every metal cell is a node with a shunt ``G + jwC`` to ground; neighbouring
metal cells (including diagonal neighbours) are joined by a series
``R + jwL`` branch, the diagonal ones scaled by ``diagonal_impedance_scale``.
The four feeds are current-injection ports referenced to ground.  This is
the pipeline's ground truth: fast, reciprocal, passive, and exactly
symmetric under the square symmetries of the grid.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import pixelgrid as pg
from .errors import ConnectivityStarvation, IoFailure, PixDohertyError, SingularMesh
from .netalg import Kind, NetworkMatrix, gamma_of_load, terminate_port, z_to_s

# port numbers (1-based) in the canonical 4-port ordering
OUTPUT_PORT = 3
SPARE_PORT = 4


@dataclass(frozen=True)
class OracleParams:
    series_inductance_per_cell: float = 0.6e-9
    series_resistance_per_cell: float = 0.05
    shunt_capacitance_per_cell: float = 0.12e-12
    shunt_conductance_per_cell: float = 1e-6
    diagonal_impedance_scale: float = math.sqrt(2.0)
    z_ref: float = 50.0

    def __post_init__(self):
        if self.series_inductance_per_cell <= 0 or self.shunt_capacitance_per_cell <= 0:
            raise ValueError("L and C per cell must be positive")
        if self.series_resistance_per_cell < 0 or self.shunt_conductance_per_cell < 0:
            raise ValueError("R and G per cell must be non-negative")
        if self.diagonal_impedance_scale <= 0 or self.z_ref <= 0:
            raise ValueError("diagonal scale and z_ref must be positive")


@dataclass(frozen=True)
class FrequencyGrid:
    start_hz: float = 2.55e9
    stop_hz: float = 2.95e9
    n_points: int = 13

    def __post_init__(self):
        if self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if self.n_points > 1 and not self.start_hz < self.stop_hz:
            raise ValueError("start_hz must be below stop_hz")

    @property
    def freqs(self) -> np.ndarray:
        if self.n_points == 1:
            return np.array([self.start_hz])
        return np.linspace(self.start_hz, self.stop_hz, self.n_points)


def _mesh(cells: np.ndarray, ports, diag_scale: float):
    """Node numbering, weighted branch list and shunt multiplicities.

    Feed cells of one port share a node.  Returns ``(n_nodes, i, j, w,
    shunt_count, port_nodes)`` with branch weights ``w`` in units of the
    orthogonal branch admittance.
    """
    rows, cols = cells.shape
    metal = cells.astype(bool)
    node = np.full(cells.shape, -1, dtype=np.int64)
    node[metal] = np.arange(int(metal.sum()))
    for p in ports:
        first = node[p.cells[0]]
        for rc in p.cells[1:]:
            node[rc] = first
    # renumber densely after merging
    used, dense = np.unique(node[metal], return_inverse=True)
    node[metal] = dense
    n = used.size
    ii, jj, ww = [], [], []
    wd = 1.0 / diag_scale
    for dr, dc, w in ((0, 1, 1.0), (1, 0, 1.0), (1, 1, wd), (1, -1, wd)):
        r0, r1 = 0, rows - dr
        c0, c1 = max(0, -dc), cols - max(0, dc)
        a = node[r0:r1, c0:c1]
        b = node[r0 + dr : r1 + dr, c0 + dc : c1 + dc]
        m = (a >= 0) & (b >= 0) & (a != b)
        ii.append(a[m])
        jj.append(b[m])
        ww.append(np.full(int(m.sum()), w))
    i = np.concatenate(ii)
    j = np.concatenate(jj)
    w = np.concatenate(ww)
    shunt = np.bincount(node[metal], minlength=n).astype(float)
    port_nodes = np.array([node[p.cells[0]] for p in ports])
    return n, i, j, w, shunt, port_nodes


def port_impedance(layout: pg.PixelLayout, freqs, params: OracleParams = OracleParams()) -> np.ndarray:
    """Open-circuit 4-port impedance matrix, shape (F, 4, 4)."""
    if not layout.ports_metal():
        raise PixDohertyError("feed cells must be metal")
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    n, i, j, w, shunt, pn = _mesh(layout.cells, layout.ports, params.diagonal_impedance_scale)
    # keep only components that touch a feed; the rest do not couple to the ports
    adj = coo_matrix((np.ones_like(w), (i, j)), shape=(n, n))
    _, comp = connected_components(adj, directed=False)
    keep = np.isin(comp, comp[pn])
    remap = np.cumsum(keep) - 1
    sel = keep[i] & keep[j]
    i, j, w = remap[i[sel]], remap[j[sel]], w[sel]
    shunt = shunt[keep]
    pn = remap[pn]
    m = int(keep.sum())
    lap = np.zeros((m, m))
    np.add.at(lap, (i, j), -w)
    np.add.at(lap, (j, i), -w)
    np.add.at(lap, (i, i), w)
    np.add.at(lap, (j, j), w)
    omega = 2.0 * np.pi * freqs
    y_s = 1.0 / (params.series_resistance_per_cell + 1j * omega * params.series_inductance_per_cell)
    y_g = params.shunt_conductance_per_cell + 1j * omega * params.shunt_capacitance_per_cell
    y = y_s[:, None, None] * lap[None] + (y_g[:, None] * shunt[None])[:, :, None] * np.eye(m)[None]
    rhs = np.zeros((m, 4), dtype=complex)
    rhs[pn, np.arange(4)] = 1.0
    try:
        v = np.linalg.solve(y, np.broadcast_to(rhs, (freqs.size, m, 4)))
    except np.linalg.LinAlgError as exc:
        raise SingularMesh(f"nodal matrix is singular: {exc}") from exc
    z = v[:, pn, :]
    if not np.all(np.isfinite(z)):
        raise SingularMesh("nodal solve produced non-finite port impedances")
    return z


def simulate(layout: pg.PixelLayout, freqs: FrequencyGrid | np.ndarray = FrequencyGrid(),
             params: OracleParams = OracleParams()) -> NetworkMatrix:
    """4-port scattering matrix of ``layout`` at ``params.z_ref``."""
    f = freqs.freqs if isinstance(freqs, FrequencyGrid) else np.atleast_1d(np.asarray(freqs, float))
    z = port_impedance(layout, f, params)
    return z_to_s(NetworkMatrix(Kind.IMPEDANCE, f, z), params.z_ref)


def combiner_two_port(s4: NetworkMatrix, r_load: float | None = None) -> NetworkMatrix:
    """Main/aux two-port: spare port left open, output port loaded.

    The output load defaults to the reference impedance (matched).
    """
    r_load = s4.z_ref if r_load is None else r_load
    s3 = terminate_port(s4, SPARE_PORT, gamma_of_load(math.inf))
    return terminate_port(s3, OUTPUT_PORT, gamma_of_load(r_load, s4.z_ref))


PARAM_ORDER = ("S11", "S12", "S22")


def two_port_vector(s2: NetworkMatrix) -> np.ndarray:
    """Frequency-major [Re S11, Im S11, Re S12, Im S12, Re S22, Im S22] vector."""
    if s2.nports != 2:
        raise ValueError("expected a two-port")
    d = s2.data
    vals = np.stack([d[:, 0, 0], d[:, 0, 1], d[:, 1, 1]], axis=1)
    return np.stack([vals.real, vals.imag], axis=2).reshape(-1)


def vector_to_two_port(vec, freqs, z_ref=50.0) -> NetworkMatrix:
    vec = np.asarray(vec, dtype=float)
    freqs = np.atleast_1d(np.asarray(freqs, float))
    if vec.size != 6 * freqs.size:
        raise ValueError(f"vector of length {vec.size} does not match {freqs.size} frequencies")
    v = vec.reshape(freqs.size, 3, 2)
    c = v[..., 0] + 1j * v[..., 1]
    data = np.empty((freqs.size, 2, 2), dtype=complex)
    data[:, 0, 0] = c[:, 0]
    data[:, 0, 1] = data[:, 1, 0] = c[:, 1]
    data[:, 1, 1] = c[:, 2]
    return NetworkMatrix(Kind.SCATTERING, freqs, data, z_ref)


def split_vector(vec, n_freqs: int) -> dict[str, np.ndarray]:
    """Complex S11/S12/S22 arrays from a packed vector."""
    v = np.asarray(vec, dtype=float).reshape(n_freqs, 3, 2)
    c = v[..., 0] + 1j * v[..., 1]
    return {name: c[:, k] for k, name in enumerate(PARAM_ORDER)}


def oracle_evaluator(freqs=FrequencyGrid(), params: OracleParams = OracleParams()):
    """Layout -> packed two-port vector, using the mesh model."""
    def evaluate(layout):
        return two_port_vector(combiner_two_port(simulate(layout, freqs, params)))
    return evaluate


# --- dataset ----------------------------------------------------------------
@dataclass(frozen=True)
class DatasetConfig:
    rows: int = 15
    cols: int = 15
    density_mean: float = 0.5
    density_std: float = 0.15
    freqs: FrequencyGrid = FrequencyGrid()
    params: OracleParams = OracleParams()


STARVATION_WINDOW = 1000
STARVATION_MIN_ACCEPT = 10  # fewer accepts than this in a window is > 99 % rejection


def _flat(s: NetworkMatrix) -> list[float]:
    return np.stack([s.data.real, s.data.imag], axis=-1).reshape(-1).tolist()


def unflatten(flat, n_freqs: int, nports: int = 4) -> np.ndarray:
    a = np.asarray(flat, dtype=float).reshape(n_freqs, nports, nports, 2)
    return a[..., 0] + 1j * a[..., 1]


def _structure(args):
    index, base_seed, cfg = args
    seed = base_seed + index
    rng = np.random.default_rng(seed)
    draws = 0
    while True:
        draws += 1
        lay = pg.random_layout(cfg.rows, cfg.cols, cfg.density_mean, cfg.density_std, rng)
        if pg.is_connected(lay):
            break
        if draws >= STARVATION_WINDOW:
            raise ConnectivityStarvation(
                f"structure {index}: {draws} consecutive disconnected draws; density settings infeasible"
            )
    s4 = simulate(lay, cfg.freqs, cfg.params)
    freqs = cfg.freqs.freqs.tolist()
    lines = []
    for lay_k, s_k, k in pg.augment(lay, s4):
        rec = {
            "layout_text": pg.to_text(lay_k),
            "freqs_hz": freqs,
            "z_ref": cfg.params.z_ref,
            "s_params_real_imag_flat": _flat(s_k),
            "provenance": {"seed": seed, "structure": index, "augment_element": k, "draws": draws},
        }
        lines.append(json.dumps(rec, separators=(",", ":")))
    return draws, lines


def generate_dataset(n_samples: int, cfg: DatasetConfig = DatasetConfig(), base_seed: int = 0,
                     out_path=None, jobs: int = 1) -> dict:
    """Simulate ``n_samples`` connected random structures, write 8 records each.

    Structure ``i`` uses seed ``base_seed + i`` so the file does not depend on
    ``jobs``.  Returns summary statistics (also written next to the dataset
    as ``<out>.stats.json``).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    out_path = Path(out_path)
    t0 = time.perf_counter()
    tasks = [(i, base_seed, cfg) for i in range(n_samples)]
    tmp = None
    draws_total = 0
    window: list[int] = []
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=out_path.parent, prefix=out_path.name, suffix=".part")
        with os.fdopen(fd, "w") as fh:
            if jobs > 1:
                pool = ProcessPoolExecutor(max_workers=jobs)
                results = pool.map(_structure, tasks, chunksize=max(1, n_samples // (4 * jobs)))
            else:
                pool = None
                results = map(_structure, tasks)
            try:
                for draws, lines in results:
                    draws_total += draws
                    window.extend([0] * (draws - 1) + [1])
                    if len(window) > STARVATION_WINDOW:
                        window = window[-STARVATION_WINDOW:]
                    if len(window) == STARVATION_WINDOW and sum(window) < STARVATION_MIN_ACCEPT:
                        raise ConnectivityStarvation("over 99% of the last 1000 draws were disconnected")
                    fh.write("\n".join(lines) + "\n")
            finally:
                if pool is not None:
                    pool.shutdown(cancel_futures=True)
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)  # mkstemp creates 0600
        os.replace(tmp, out_path)
        tmp = None
    except OSError as exc:
        raise IoFailure(f"writing dataset {out_path}: {exc}") from exc
    finally:
        if tmp is not None and os.path.exists(tmp):
            os.unlink(tmp)
    elapsed = time.perf_counter() - t0
    stats = {
        "n_structures": n_samples,
        "n_records": 8 * n_samples,
        "n_draws": draws_total,
        "rejection_rate": 1.0 - n_samples / draws_total,
        "elapsed_s": elapsed,
        "samples_per_s": n_samples / elapsed if elapsed > 0 else math.inf,
        "config": {"rows": cfg.rows, "cols": cfg.cols, "density_mean": cfg.density_mean,
                   "density_std": cfg.density_std, "freqs": asdict(cfg.freqs), "params": asdict(cfg.params),
                   "base_seed": base_seed},
    }
    try:
        Path(str(out_path) + ".stats.json").write_text(json.dumps(stats, indent=2))
    except OSError as exc:
        raise IoFailure(f"writing stats: {exc}") from exc
    return stats


@dataclass
class DatasetRecord:
    layout: pg.PixelLayout
    s4: NetworkMatrix
    provenance: dict


def parse_record(line: str, lineno: int = 0) -> DatasetRecord:
    try:
        d = json.loads(line)
        freqs = np.asarray(d["freqs_hz"], dtype=float)
        lay = pg.from_text(d["layout_text"])
        data = unflatten(d["s_params_real_imag_flat"], freqs.size)
        s4 = NetworkMatrix(Kind.SCATTERING, freqs, data, d.get("z_ref", 50.0))
    except (KeyError, ValueError, TypeError) as exc:
        raise PixDohertyError(f"bad dataset record on line {lineno}: {exc}") from exc
    return DatasetRecord(lay, s4, d.get("provenance", {}))


def read_dataset(path):
    """Yield :class:`DatasetRecord` objects from a JSON-lines file."""
    try:
        fh = open(path)
    except OSError as exc:
        raise IoFailure(f"reading dataset {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                yield parse_record(line, lineno)


def dataset_arrays(path) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Inputs (N, rows, cols), two-port targets (N, 6F), frequencies, structure ids."""
    xs, ys, groups = [], [], []
    freqs = None
    for rec in read_dataset(path):
        xs.append(rec.layout.cells.astype(float))
        ys.append(two_port_vector(combiner_two_port(rec.s4)))
        groups.append(rec.provenance.get("structure", len(groups)))
        freqs = rec.s4.freqs
    if not xs:
        raise PixDohertyError(f"dataset {path} is empty")
    return np.stack(xs), np.stack(ys), freqs, np.asarray(groups)
