"""Genetic-algorithm search for pixel layouts that match a combiner target.

Fitness compares packed two-port vectors (see
:func:`pixdoherty.emoracle.two_port_vector`): the error ``e`` is the larger
of the summed absolute real-part and imaginary-part deviations over every
parameter and frequency, and ``F = 1 / (e + epsilon)``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import pixelgrid as pg
from .emoracle import FrequencyGrid, split_vector
from .errors import (
    ConnectivityStarvation,
    DimMismatch,
    EvaluatorFailure,
    GridMismatch,
    IoFailure,
    PixDohertyError,
)
from .netalg import Kind, NetworkMatrix, z_to_s

log = logging.getLogger(__name__)

PASSIVE_SLACK = 1e-6


# --- target -----------------------------------------------------------------
@dataclass(frozen=True)
class CombinerTarget:
    freqs: np.ndarray
    s11: np.ndarray
    s12: np.ndarray
    s22: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        f = np.atleast_1d(np.asarray(self.freqs, dtype=float))
        vals = [np.atleast_1d(np.asarray(getattr(self, k), dtype=complex)) for k in ("s11", "s12", "s22")]
        if any(v.shape != f.shape for v in vals):
            raise GridMismatch("s11/s12/s22 must have one value per frequency")
        peak = max(float(np.max(np.abs(v))) for v in vals)
        if peak > 1.0 + PASSIVE_SLACK:
            raise ValueError(f"target is not passive: |S| reaches {peak:.6g}")
        for name, v in zip(("freqs", "s11", "s12", "s22"), [f, *vals]):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def n_freqs(self) -> int:
        return self.freqs.size

    def vector(self) -> np.ndarray:
        v = np.stack([self.s11, self.s12, self.s22], axis=1)
        return np.stack([v.real, v.imag], axis=2).reshape(-1)

    @classmethod
    def from_vector(cls, vec, freqs, provenance=None) -> "CombinerTarget":
        freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
        vec = np.asarray(vec, dtype=float)
        if vec.size != 6 * freqs.size:
            raise GridMismatch(f"vector of length {vec.size} does not match {freqs.size} frequencies")
        parts = split_vector(vec, freqs.size)
        return cls(freqs, parts["S11"], parts["S12"], parts["S22"], dict(provenance or {}))

    def to_dict(self) -> dict:
        d = {"freqs_hz": self.freqs.tolist()}
        for name in ("s11", "s12", "s22"):
            v = getattr(self, name)
            d[name] = {"re": v.real.tolist(), "im": v.imag.tolist()}
        d["provenance"] = self.provenance
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CombinerTarget":
        try:
            vals = {k: np.asarray(d[k]["re"], float) + 1j * np.asarray(d[k]["im"], float)
                    for k in ("s11", "s12", "s22")}
            return cls(np.asarray(d["freqs_hz"], float), provenance=d.get("provenance", {}), **vals)
        except (KeyError, TypeError) as exc:
            raise PixDohertyError(f"malformed combiner target: {exc}") from exc


def combiner_target_from_z2p(z2p, freqs=None, z_ref=50.0, provenance=None) -> CombinerTarget:
    """Target S-parameters of a frequency-flat two-port impedance matrix.

    The synthesized matrix is a single-frequency design value, so the same
    S-matrix is required at every point of the optimization band.
    """
    freqs = FrequencyGrid().freqs if freqs is None else np.atleast_1d(np.asarray(freqs, float))
    z = np.broadcast_to(np.asarray(z2p, dtype=complex), (freqs.size, 2, 2)).copy()
    s = z_to_s(NetworkMatrix(Kind.IMPEDANCE, freqs, z), z_ref).data
    prov = {"z_ref": z_ref, **(provenance or {})}
    return CombinerTarget(freqs, s[:, 0, 0], s[:, 0, 1], s[:, 1, 1], prov)


def save_target(target: CombinerTarget, path) -> Path:
    path = Path(path)
    try:
        path.write_text(json.dumps(target.to_dict(), indent=2))
    except OSError as exc:
        raise IoFailure(f"writing target {path}: {exc}") from exc
    check = load_target(path)
    if not np.array_equal(check.vector(), target.vector()):
        raise IoFailure(f"target {path} did not round-trip")
    return path


def load_target(path) -> CombinerTarget:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IoFailure(f"reading target {path}: {exc}") from exc
    return CombinerTarget.from_dict(d)


# --- fitness ------------------------------------------------------------------
def error_terms(pred, target_vec) -> np.ndarray:
    """Error ``e`` for one packed vector or a batch of them (rows)."""
    pred = np.asarray(pred, dtype=float)
    target_vec = np.asarray(target_vec, dtype=float)
    if pred.shape[-1] != target_vec.size or target_vec.size % 2:
        raise GridMismatch(f"prediction length {pred.shape[-1]} does not match target length {target_vec.size}")
    d = np.abs(pred - target_vec)
    re = d[..., 0::2].sum(axis=-1)
    im = d[..., 1::2].sum(axis=-1)
    return np.maximum(re, im)


def fitness(pred, target: CombinerTarget, epsilon=1e-5) -> dict:
    """``{"f": F, "e": e}`` for a packed vector or a predicted two-port network."""
    if isinstance(pred, NetworkMatrix):
        if pred.freqs.shape != target.freqs.shape or not np.allclose(pred.freqs, target.freqs, rtol=1e-12):
            raise GridMismatch("prediction and target frequency grids differ")
        d = pred.data
        pred = np.stack([np.stack([x.real, x.imag], 1) for x in (d[:, 0, 0], d[:, 0, 1], d[:, 1, 1])], 1).reshape(-1)
    e = float(error_terms(pred, target.vector()))
    return {"f": 1.0 / (e + epsilon), "e": e}


# --- operators ------------------------------------------------------------------
def draw_cut(rows: int, rng) -> int:
    return int(rng.integers(1, rows))


def crossover(parent_a: pg.PixelLayout, parent_b: pg.PixelLayout, rng, cut: int | None = None) -> pg.PixelLayout:
    """Rows ``[0, cut)`` from ``parent_a`` and ``[cut, rows)`` from ``parent_b``."""
    if parent_a.shape != parent_b.shape:
        raise DimMismatch(f"parents of shape {parent_a.shape} and {parent_b.shape}")
    cut = draw_cut(parent_a.rows, rng) if cut is None else cut
    if not 1 <= cut < parent_a.rows:
        raise ValueError(f"cut must lie in 1..{parent_a.rows - 1}")
    cells = np.concatenate([parent_a.cells[:cut], parent_b.cells[cut:]])
    return parent_a.with_cells(cells)


def draw_flips(shape, rng, rate_range=(0.01, 0.10)) -> np.ndarray:
    """Flat indices of ``ceil(rate * cells)`` distinct cells, rate ~ U(rate_range)."""
    lo, hi = rate_range
    if not 0.0 < lo <= hi < 1.0:
        raise ValueError("rate_range must satisfy 0 < lo <= hi < 1")
    n = int(np.prod(shape))
    rate = rng.uniform(lo, hi) if hi > lo else lo
    k = max(1, math.ceil(rate * n - 1e-9))
    return rng.choice(n, size=k, replace=False)


def apply_flips(layout: pg.PixelLayout, flips) -> pg.PixelLayout:
    cells = layout.cells.copy().reshape(-1)
    cells[np.asarray(flips)] ^= 1
    return layout.with_cells(cells.reshape(layout.shape))


def mutate(layout: pg.PixelLayout, rng, rate_range=(0.01, 0.10)) -> pg.PixelLayout:
    """Flip a random fraction of cells, then re-force the feeds to metal."""
    return apply_flips(layout, draw_flips(layout.shape, rng, rate_range))


def tournament(fit: np.ndarray, rng, size=3) -> int:
    """Index of the fittest of ``size`` individuals drawn with replacement."""
    idx = rng.integers(0, fit.size, size=size)
    return int(idx[np.argmax(fit[idx])])


# --- GA -------------------------------------------------------------------------
@dataclass(frozen=True)
class GaConfig:
    population: int = 4000
    max_iters: int = 240
    elite_count: int = 10
    random_injection_max_fraction: float = 0.30
    tournament_size: int = 3
    mutation_rate_range: tuple[float, float] = (0.01, 0.10)
    epsilon: float = 1e-5
    fitness_target: float | None = None
    rng_seed: int = 0
    rows: int = 15
    cols: int = 15
    density_mean: float = 0.5
    density_std: float = 0.15
    repair_attempts: int = 5
    checkpoint_every: int = 0
    checkpoint_path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "mutation_rate_range", tuple(float(x) for x in self.mutation_rate_range))
        lo, hi = self.mutation_rate_range
        if not 0 <= self.elite_count < self.population:
            raise ValueError("need 0 <= elite_count < population")
        if not 0.0 < lo <= hi < 1.0:
            raise ValueError("mutation_rate_range must lie inside (0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0.0 <= self.random_injection_max_fraction <= 1.0:
            raise ValueError("random_injection_max_fraction must lie in [0, 1]")
        if self.max_iters < 1 or self.tournament_size < 1:
            raise ValueError("max_iters and tournament_size must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mutation_rate_range"] = list(self.mutation_rate_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GaConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def target_reached(best_f: float, fitness_target) -> bool:
    """Early-exit test, tolerant to rounding: 1/(0 + 1e-5) is 99999.99999999999 in binary."""
    if fitness_target is None:
        return False
    return best_f >= fitness_target or math.isclose(best_f, fitness_target, rel_tol=1e-12)


def injection_fraction(cfg: GaConfig, iteration: int) -> float:
    """Linear decay from the configured maximum at iteration 0 to 0 at max_iters."""
    return cfg.random_injection_max_fraction * (1.0 - iteration / cfg.max_iters)


@dataclass
class EvolveResult:
    best_layout: pg.PixelLayout
    best_fitness: float
    best_e: float
    history: list[dict]
    generations: int
    early_exit: bool
    n_evaluations: int


class SurrogateEvaluator:
    """Wraps a trained surrogate as a batch evaluator."""

    def __init__(self, model, batch_size=1024):
        self.model = model
        self.batch_size = batch_size

    def __call__(self, layout):
        return self.model.predict(layout)

    def batch(self, layouts):
        return self.model.predict(np.stack([lay.cells for lay in layouts]), self.batch_size)


def random_connected(cfg: GaConfig, rng, max_draws=1000) -> pg.PixelLayout:
    for _ in range(max_draws):
        lay = pg.random_layout(cfg.rows, cfg.cols, cfg.density_mean, cfg.density_std, rng)
        if pg.is_connected(lay):
            return lay
    raise ConnectivityStarvation(f"{max_draws} consecutive disconnected random layouts")


def _evaluate(pop, evaluator, cache, target_vec, generation):
    todo = [i for i, lay in enumerate(pop) if lay.key() not in cache]
    seen = {}
    todo = [i for i in todo if seen.setdefault(pop[i].key(), i) == i]
    if todo:
        if hasattr(evaluator, "batch"):
            try:
                preds = np.asarray(evaluator.batch([pop[i] for i in todo]), dtype=float)
            except Exception as exc:  # noqa: BLE001 - surfaced with context
                raise EvaluatorFailure(f"batch evaluation failed: {exc}", generation, None) from exc
        else:
            preds = []
            for i in todo:
                try:
                    preds.append(np.asarray(evaluator(pop[i]), dtype=float))
                except Exception as exc:  # noqa: BLE001
                    raise EvaluatorFailure(f"evaluation failed: {exc}", generation, i) from exc
            preds = np.stack(preds)
        if preds.shape != (len(todo), target_vec.size) or not np.all(np.isfinite(preds)):
            bad = next((k for k in range(len(todo)) if preds.ndim != 2 or not np.all(np.isfinite(preds[k]))), 0)
            raise EvaluatorFailure(f"evaluator returned shape {preds.shape} or non-finite values",
                                   generation, todo[bad] if todo else None)
        for i, e in zip(todo, error_terms(preds, target_vec)):
            cache[pop[i].key()] = float(e)
    return np.array([cache[lay.key()] for lay in pop])


def _offspring(pop, fit, cfg, rng):
    a = pop[tournament(fit, rng, cfg.tournament_size)]
    b = pop[tournament(fit, rng, cfg.tournament_size)]
    child = crossover(a, b, rng)
    for _ in range(cfg.repair_attempts):
        mutant = mutate(child, rng, cfg.mutation_rate_range)
        if pg.is_connected(mutant):
            return mutant
    return random_connected(cfg, rng)


def _save_checkpoint(path, generation, pop, rng, history, best, n_eval):
    best_layout, best_f, best_e = best
    header = {
        "generation": generation,
        "rng_state": rng.bit_generator.state,
        "history": history,
        "best_f": best_f,
        "best_e": best_e,
        "n_evaluations": n_eval,
        "best_text": pg.to_text(best_layout) if best_layout is not None else None,
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".part")
    with open(tmp, "wb") as fh:
        np.savez(fh, header=np.array(json.dumps(header)), cells=np.stack([p.cells for p in pop]))
    tmp.replace(path)


def load_checkpoint(path) -> dict:
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            header["cells"] = z["cells"]
    except (OSError, KeyError, ValueError) as exc:
        raise IoFailure(f"reading checkpoint {path}: {exc}") from exc
    return header


def evolve(target: CombinerTarget, evaluator, cfg: GaConfig, resume_from=None, on_generation=None) -> EvolveResult:
    """Evolve connected layouts toward ``target``.

    ``evaluator`` maps a layout to a packed two-port vector; if it has a
    ``batch`` method, the population is evaluated in one call.  Each
    generation is scored, the best ``elite_count`` are carried over, a
    decaying fraction of fresh random layouts is injected, and the rest is
    filled by tournament selection, row crossover and mutation (with up to
    ``repair_attempts`` re-drawn mutations before falling back to a fresh
    layout when the feeds come apart).

    History rows hold the generation's best and mean fitness and the
    injection fraction used to build the next generation.
    """
    target_vec = target.vector()
    cache: dict[bytes, float] = {}
    if resume_from is not None:
        ck = load_checkpoint(resume_from)
        rng = np.random.default_rng()
        rng.bit_generator.state = ck["rng_state"]
        proto = pg.PixelLayout(np.ones((cfg.rows, cfg.cols), np.uint8))
        pop = [proto.with_cells(c) for c in ck["cells"]]
        start = ck["generation"]
        history = ck["history"]
        best = (pg.from_text(ck["best_text"]) if ck["best_text"] else None, ck["best_f"], ck["best_e"])
        n_eval = ck["n_evaluations"]
    else:
        rng = np.random.default_rng(cfg.rng_seed)
        pop = [random_connected(cfg, rng) for _ in range(cfg.population)]
        start, history, n_eval = 0, [], 0
        best = (None, -math.inf, math.inf)
    early = False
    it = start
    for it in range(start, cfg.max_iters):
        if cfg.checkpoint_every and cfg.checkpoint_path and it > start and it % cfg.checkpoint_every == 0:
            _save_checkpoint(cfg.checkpoint_path, it, pop, rng, history, best, n_eval)
        before = len(cache)
        e = _evaluate(pop, evaluator, cache, target_vec, it)
        n_eval += len(cache) - before
        fit = 1.0 / (e + cfg.epsilon)
        k = int(np.argmax(fit))
        if fit[k] > best[1]:
            best = (pop[k], float(fit[k]), float(e[k]))
        frac = injection_fraction(cfg, it + 1)
        row = {"generation": it, "best_f": float(fit[k]), "best_e": float(e[k]),
               "mean_f": float(fit.mean()), "injected_fraction": frac}
        history.append(row)
        if on_generation is not None:
            on_generation(row)
        if target_reached(best[1], cfg.fitness_target):
            early = True
            break
        if it == cfg.max_iters - 1:
            break
        order = np.argsort(-fit, kind="stable")
        nxt = [pop[i] for i in order[: cfg.elite_count]]
        n_inject = min(int(round(frac * cfg.population)), cfg.population - len(nxt))
        nxt.extend(random_connected(cfg, rng) for _ in range(n_inject))
        while len(nxt) < cfg.population:
            nxt.append(_offspring(pop, fit, cfg, rng))
        pop = nxt
    return EvolveResult(best[0], best[1], best[2], history, len(history), early, n_eval)


HISTORY_COLUMNS = ["generation", "best_f", "best_e", "mean_f", "injected_fraction"]


def write_history_csv(history, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, HISTORY_COLUMNS)
        w.writeheader()
        for row in history:
            w.writerow({k: repr(float(row[k])) if k != "generation" else row[k] for k in HISTORY_COLUMNS})
    return path


def read_history_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: (int(v) if k == "generation" else float(v)) for k, v in row.items()}
                for row in csv.DictReader(fh)]


# --- final verification ---------------------------------------------------------
OVERLAY_COLUMNS = ["freq", "param", "re_pred", "im_pred", "re_oracle", "im_oracle"]


@dataclass
class Verification:
    e_pred: float
    f_pred: float
    e_oracle: float
    f_oracle: float
    mad: float
    overlay: list[dict]

    def summary(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k != "overlay"}


def verify_candidate(layout, pred_vec, oracle_vec, target: CombinerTarget, epsilon=1e-5) -> Verification:
    """Score one layout under both evaluators and tabulate the overlay.

    ``mad`` is the mean absolute surrogate-vs-oracle deviation over every
    real component of the packed vector.
    """
    del layout
    pred_vec = np.asarray(pred_vec, float)
    oracle_vec = np.asarray(oracle_vec, float)
    fp = fitness(pred_vec, target, epsilon)
    fo = fitness(oracle_vec, target, epsilon)
    p = split_vector(pred_vec, target.n_freqs)
    o = split_vector(oracle_vec, target.n_freqs)
    rows = []
    for k, f in enumerate(target.freqs):
        for name in p:
            rows.append({"freq": float(f), "param": name, "re_pred": p[name][k].real, "im_pred": p[name][k].imag,
                         "re_oracle": o[name][k].real, "im_oracle": o[name][k].imag})
    mad = float(np.mean(np.abs(pred_vec - oracle_vec)))
    return Verification(fp["e"], fp["f"], fo["e"], fo["f"], mad, rows)


def write_overlay_csv(ver: Verification, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, OVERLAY_COLUMNS)
        w.writeheader()
        for row in ver.overlay:
            w.writerow({k: (row[k] if k == "param" else repr(float(row[k]))) for k in OVERLAY_COLUMNS})
    return path


def read_overlay_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: (v if k == "param" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)]


def overlay_mad(rows) -> float:
    """Mean absolute deviation recomputed from overlay rows."""
    d = [abs(r["re_pred"] - r["re_oracle"]) for r in rows] + [abs(r["im_pred"] - r["im_oracle"]) for r in rows]
    return float(np.mean(d))

