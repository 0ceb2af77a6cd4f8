"""Command-line entry point: ``pixdoherty <subcommand> ...``.

Exit codes: 0 success, 1 internal error, 2 infeasible ideal theory,
3 load-pull power mismatch, 4 no phase solution.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import doherty, emoracle, inverse, loadpull, netalg, pixelgrid, surrogate, touchstone
from .errors import NoRealSolution, NoSolution, PixDohertyError, PowerMismatch

log = logging.getLogger("pixdoherty")

OUT_ENV = "PIXDOHERTY_OUT"
EXIT_INFEASIBLE = 2
EXIT_POWER = 3
EXIT_NO_SOLUTION = 4


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "pixdoherty_out"))


@contextlib.contextmanager
def outputs():
    """Collects paths written by a command and deletes them if it fails."""
    made: list[Path] = []
    try:
        yield made
    except BaseException:
        for p in made:
            with contextlib.suppress(OSError):
                Path(p).unlink()
        raise


def _emit(obj, as_json=False):
    print(json.dumps(obj, indent=2) if as_json else obj)


# --- pipeline configuration ---------------------------------------------------
@dataclass
class PipelineConfig:
    profile: str = "paper"
    rows: int = 15
    cols: int = 15
    density_mean: float = 0.5
    density_std: float = 0.15
    freqs: emoracle.FrequencyGrid = field(default_factory=emoracle.FrequencyGrid)
    oracle: emoracle.OracleParams = field(default_factory=emoracle.OracleParams)
    n_structures: int = 9625
    arch: str = "paper"
    val_fraction: float = 0.1
    train: surrogate.TrainConfig = field(default_factory=surrogate.TrainConfig)
    ga: inverse.GaConfig = field(default_factory=inverse.GaConfig)
    dataset_seed: int = 0
    loadpull: str | None = None
    jobs: int = 1

    def architecture(self) -> surrogate.SurrogateArchitecture:
        out = 6 * self.freqs.n_points
        builders = {"paper": surrogate.full_architecture, "desk": surrogate.desk_architecture,
                    "tiny": surrogate.tiny_architecture}
        if self.arch not in builders:
            raise PixDohertyError(f"unknown architecture {self.arch!r}; choose from {sorted(builders)}")
        return builders[self.arch](self.rows, self.cols, out)

    def dataset_config(self) -> emoracle.DatasetConfig:
        return emoracle.DatasetConfig(self.rows, self.cols, self.density_mean, self.density_std,
                                      self.freqs, self.oracle)

    def ga_config(self) -> inverse.GaConfig:
        return replace(self.ga, rows=self.rows, cols=self.cols, density_mean=self.density_mean,
                       density_std=self.density_std)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ga"] = self.ga.to_dict()
        return d

    def merged(self, d: dict) -> "PipelineConfig":
        """Copy with values from a (possibly partial) nested dictionary."""
        known = set(self.__dataclass_fields__)
        if unknown := set(d) - known:
            raise PixDohertyError(f"unknown config keys {sorted(unknown)}")
        kw = {}
        for k, v in d.items():
            cur = getattr(self, k)
            if isinstance(cur, (emoracle.FrequencyGrid, emoracle.OracleParams, surrogate.TrainConfig,
                                inverse.GaConfig)):
                base = cur.to_dict() if hasattr(cur, "to_dict") else asdict(cur)
                bad = set(v) - set(base)
                if bad:
                    raise PixDohertyError(f"unknown keys in config section {k!r}: {sorted(bad)}")
                base.update(v)
                v = type(cur).from_dict(base) if hasattr(type(cur), "from_dict") else type(cur)(**base)
            kw[k] = v
        return replace(self, **kw)


def profile_config(name: str) -> PipelineConfig:
    if name == "paper":
        return PipelineConfig()
    if name == "desk":
        return PipelineConfig(
            profile="desk", rows=8, cols=8, n_structures=1000, arch="desk",
            train=surrogate.TrainConfig(epochs=60, batch_size=64),
            ga=inverse.GaConfig(population=200, max_iters=60),
        )
    raise PixDohertyError(f"unknown profile {name!r}")


def load_config(profile: str, path=None) -> PipelineConfig:
    cfg = profile_config(profile)
    if path:
        try:
            cfg = cfg.merged(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise PixDohertyError(f"reading config {path}: {exc}") from exc
    return cfg


# --- theory -------------------------------------------------------------------------
def cmd_theory(args) -> int:
    try:
        sols = doherty.theta_solutions(args.beta_b, args.alpha)
    except NoRealSolution as exc:
        print(f"error: no real θ: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _, gamma_db = doherty.backoff_gamma(args.beta_b, args.alpha)
    theta = math.radians(args.theta_deg) if args.theta_deg is not None else sols[0]
    cfg = doherty.IdealDohertyConfig(args.beta_b, args.alpha, theta, args.r_opt)
    sweep = doherty.drive_sweep(cfg, args.sweep_points)
    out = Path(args.out) if args.out else default_out_dir() / "theory_sweep.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    with outputs() as made:
        made.append(doherty.write_sweep_csv(sweep, out))
        if not args.no_plot:
            from . import plotting

            made.append(plotting.plot_theory_sweep(sweep, out.with_suffix(".png"),
                                                   f"beta_B={args.beta_b:g}, alpha={args.alpha:g}"))
    peaks = doherty.efficiency_peaks(sweep["eff"])
    _emit({
        "gamma_db": gamma_db,
        "theta_deg": [math.degrees(t) for t in sols],
        "theta_used_deg": math.degrees(theta),
        "z2p": _cplx_matrix(doherty.ideal_combiner_z(cfg)),
        "efficiency_peaks": [{"beta": float(sweep["beta"][k]), "eff": float(sweep["eff"][k])} for k in peaks],
        "csv": str(out),
    }, as_json=True)
    return 0


def _cplx_matrix(m):
    return [[{"re": float(x.real), "im": float(x.imag)} for x in row] for row in np.asarray(m)]


# --- synthesize ---------------------------------------------------------------------
def _load_loadpull(spec):
    if spec in (None, "reference"):
        return loadpull.input_from_dict(loadpull.REFERENCE_LOADPULL)
    return loadpull.load_input(spec)


def synthesis_report(inp, res, target) -> str:
    z = res.z2p
    lines = [
        "Combiner synthesis report",
        f"power balance: main-backoff + gamma_B = {res.balance.lhs_dbm:.4f} dBm, "
        f"main+aux peak = {res.balance.rhs_dbm:.4f} dBm, delta = {res.balance.delta_db:+.4f} dB",
        f"aux off-state termination seen by the combiner: {inp.aux_off_termination:.4f} ohm "
        f"(convention: {inp.aux_off_convention})",
        "theta roots:",
    ]
    for r in res.roots:
        mark = "  <- selected" if abs(r.theta - res.theta) < 1e-12 else ""
        lines.append(f"  theta = {r.theta_deg:10.5f} deg   residual = {r.residual:.3e}{mark}")
    lines.append(f"selection rule: {res.selection}")
    lines.append(f"alpha = {abs(res.alpha):.6f} at {math.degrees(np.angle(res.alpha)):.4f} deg")
    lines.append("Z2P (ohm):")
    for row in z:
        lines.append("  " + "   ".join(f"{x.real:+10.5f} {x.imag:+10.5f}j" for x in row))
    lines.append(f"losslessness residual: {netalg.losslessness_residual(z, tol=1e-6):.4e}")
    for k, v in loadpull.implied_loads(z, inp, res.theta).items():
        lines.append(f"implied {k} load: {v.real:.5f} {v.imag:+.5f}j ohm")
    lines.append(f"target band: {target.freqs[0] / 1e9:.4f}-{target.freqs[-1] / 1e9:.4f} GHz, "
                 f"{target.n_freqs} points, z_ref = {target.provenance.get('z_ref')} ohm")
    return "\n".join(lines) + "\n"


def run_synthesis(inp, freqs, z_ref=50.0, strategy="ideal-branch", alpha_square="complex"):
    res = loadpull.synthesize(inp, strategy=strategy, alpha_square=alpha_square)
    prov = {"theta": res.theta, "theta_deg": math.degrees(res.theta), "alpha": abs(res.alpha),
            "gamma_b_db": inp.gamma_b_db, "r_opt": inp.main_peak.z_opt.real, "z_ref": z_ref,
            "z2p": _cplx_matrix(res.z2p), "selection": strategy, "alpha_square": alpha_square}
    target = inverse.combiner_target_from_z2p(res.z2p, freqs, z_ref, prov)
    return res, target


def cmd_synthesize(args) -> int:
    inp = _load_loadpull(args.loadpull)
    if args.gamma_b_db is not None:
        inp = inp.replace(gamma_b_db=args.gamma_b_db)
    grid = emoracle.FrequencyGrid(args.freq_start, args.freq_stop, args.freq_points)
    try:
        res, target = run_synthesis(inp, grid.freqs, args.z_ref, args.strategy, args.alpha_square)
    except PowerMismatch as exc:
        print(f"error: power mismatch: {exc}", file=sys.stderr)
        return EXIT_POWER
    except NoSolution as exc:
        print(f"error: no theta solution: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    out = Path(args.out) if args.out else default_out_dir() / "target.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    report = synthesis_report(inp, res, target)
    with outputs() as made:
        made.append(inverse.save_target(target, out))
        rpt = out.with_name(out.stem + "_report.txt")
        rpt.write_text(report)
        made.append(rpt)
    print(report, end="")
    return 0


# --- dataset / train ----------------------------------------------------------------
def cmd_gen_dataset(args) -> int:
    cfg = emoracle.DatasetConfig(args.rows, args.cols, args.density_mean, args.density_std,
                                 emoracle.FrequencyGrid(args.freq_start, args.freq_stop, args.freq_points))
    out = Path(args.out) if args.out else default_out_dir() / "dataset.jsonl"
    stats = emoracle.generate_dataset(args.n_structures, cfg, args.seed, out, args.jobs)
    _emit({"dataset": str(out), **{k: v for k, v in stats.items() if k != "config"}}, as_json=True)
    return 0


def _arch_for(name, rows, cols, out_dim):
    return replace(PipelineConfig(rows=rows, cols=cols, arch=name,
                                  freqs=emoracle.FrequencyGrid(n_points=out_dim // 6))).architecture()


def train_stage(dataset, model_path, history_path, arch_name, tcfg, val_fraction, split_seed=0, plot=True):
    x, y, freqs, groups = emoracle.dataset_arrays(dataset)
    arch = _arch_for(arch_name, x.shape[1], x.shape[2], y.shape[1])
    train_idx, val_idx = surrogate.split_indices(groups, val_fraction, split_seed) if val_fraction > 0 \
        else (np.arange(len(x)), np.array([], dtype=int))
    model = surrogate.SurrogateModel(arch, seed=tcfg.rng_seed)
    baseline = math.nan
    if val_idx.size:
        mean = y[train_idx].mean(axis=0)
        baseline = surrogate.loss_mae(np.broadcast_to(mean, y[val_idx].shape), y[val_idx])
    t0 = time.perf_counter()
    history = surrogate.train(
        model, x[train_idx], y[train_idx], tcfg,
        x[val_idx] if val_idx.size else None, y[val_idx] if val_idx.size else None,
        on_epoch=lambda r: log.info("epoch %d lr %.3g train %.4f val %.4f", r["epoch"], r["lr"],
                                    r["train_mae"], r["val_mae"]))
    with outputs() as made:
        made.append(model.save(model_path))
        check = surrogate.SurrogateModel.load(model_path)
        if any(not np.array_equal(check.params[k], model.params[k]) for k in model.params):
            raise PixDohertyError(f"model file {model_path} did not round-trip")
        made.append(surrogate.write_history_csv(history, history_path))
        if plot and history:
            from . import plotting

            made.append(plotting.plot_loss_history(history, Path(history_path).with_suffix(".png")))
    return {"model": str(model_path), "history": str(history_path), "epochs": len(history),
            "final_train_mae": history[-1]["train_mae"] if history else math.nan,
            "final_val_mae": history[-1]["val_mae"] if history else math.nan,
            "baseline_val_mae": baseline, "n_train": int(train_idx.size), "n_val": int(val_idx.size),
            "elapsed_s": time.perf_counter() - t0}


def cmd_train(args) -> int:
    tcfg = surrogate.TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size,
                                 rng_seed=args.seed)
    out_dir = default_out_dir()
    model = Path(args.out) if args.out else out_dir / "model.npz"
    hist = Path(args.history) if args.history else model.with_name(model.stem + "_loss.csv")
    model.parent.mkdir(parents=True, exist_ok=True)
    info = train_stage(args.dataset, model, hist, args.arch, tcfg, args.val_fraction, args.seed, not args.no_plot)
    _emit(info, as_json=True)
    return 0


# --- invert / verify ----------------------------------------------------------------
def _target_for(args):
    if getattr(args, "from_record", None) is not None:
        if not args.dataset:
            raise PixDohertyError("--from-record needs --dataset")
        for k, rec in enumerate(emoracle.read_dataset(args.dataset)):
            if k == args.from_record:
                vec = emoracle.two_port_vector(emoracle.combiner_two_port(rec.s4))
                return inverse.CombinerTarget.from_vector(vec, rec.s4.freqs, {"dataset_record": k}), rec.layout
        raise PixDohertyError(f"dataset has no record {args.from_record}")
    return inverse.load_target(args.target), None


def invert_stage(target, evaluator, ga_cfg, out_dir, plot=True, tag="ga"):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    res = inverse.evolve(target, evaluator, ga_cfg,
                         on_generation=lambda r: log.info("gen %d best e %.4f", r["generation"], r["best_e"]))
    with outputs() as made:
        made.append(inverse.write_history_csv(res.history, out_dir / f"{tag}_history.csv"))
        lay_path = out_dir / "best_layout.txt"
        lay_path.write_text(pixelgrid.to_text(res.best_layout))
        made.append(lay_path)
        if pixelgrid.from_text(lay_path.read_text()) != res.best_layout:
            raise PixDohertyError("best layout did not round-trip")
        if plot:
            from . import plotting

            made.append(plotting.plot_ga_history(res.history, out_dir / f"{tag}_history.png"))
            made.append(plotting.plot_layout(res.best_layout, out_dir / "best_layout.png",
                                             f"best e = {res.best_e:.4f}"))
    return res, {"best_layout": str(lay_path), "best_f": res.best_fitness, "best_e": res.best_e,
                 "generations": res.generations, "early_exit": res.early_exit,
                 "n_evaluations": res.n_evaluations}


def cmd_invert(args) -> int:
    target, _ = _target_for(args)
    cfg = inverse.GaConfig(population=args.population, max_iters=args.iters, elite_count=args.elite,
                           fitness_target=args.fitness_target, rng_seed=args.seed, rows=args.rows, cols=args.cols,
                           checkpoint_every=args.checkpoint_every,
                           checkpoint_path=str(Path(args.out_dir or default_out_dir()) / "ga_checkpoint.npz")
                           if args.checkpoint_every else None)
    if args.evaluator == "oracle":
        evaluator = emoracle.oracle_evaluator(target.freqs)
    else:
        if not args.model:
            raise PixDohertyError("--model is required with the surrogate evaluator")
        evaluator = inverse.SurrogateEvaluator(surrogate.SurrogateModel.load(args.model))
    _, info = invert_stage(target, evaluator, cfg, args.out_dir or default_out_dir(), not args.no_plot)
    _emit(info, as_json=True)
    return 0


def verify_stage(layout, model, target, overlay_path, plot=True):
    pred = model.predict(layout)
    oracle = emoracle.oracle_evaluator(target.freqs)(layout)
    ver = inverse.verify_candidate(layout, pred, oracle, target)
    with outputs() as made:
        made.append(inverse.write_overlay_csv(ver, overlay_path))
        summary = Path(overlay_path).with_name(Path(overlay_path).stem + "_summary.json")
        summary.write_text(json.dumps(ver.summary(), indent=2))
        made.append(summary)
        if plot:
            from . import plotting

            made.append(plotting.plot_overlay(ver.overlay, Path(overlay_path).with_suffix(".png"),
                                              f"surrogate vs oracle, MAD = {ver.mad:.4f}"))
    return ver


def cmd_verify(args) -> int:
    layout = pixelgrid.from_text(Path(args.layout).read_text())
    model = surrogate.SurrogateModel.load(args.model)
    target = inverse.load_target(args.target)
    out = Path(args.out) if args.out else default_out_dir() / "overlay.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    ver = verify_stage(layout, model, target, out, not args.no_plot)
    _emit({"overlay": str(out), **ver.summary()}, as_json=True)
    return 0


# --- touchstone ---------------------------------------------------------------------
def cmd_export_touchstone(args) -> int:
    grid = emoracle.FrequencyGrid(args.freq_start, args.freq_stop, args.freq_points)
    if args.layout:
        lay = pixelgrid.from_text(Path(args.layout).read_text())
        net = emoracle.simulate(lay, grid)
        if args.two_port:
            net = emoracle.combiner_two_port(net)
    elif args.target:
        t = inverse.load_target(args.target)
        net = emoracle.vector_to_two_port(t.vector(), t.freqs, t.provenance.get("z_ref", 50.0))
    else:
        raise PixDohertyError("give --layout or --target")
    out = Path(args.out) if args.out else default_out_dir() / f"network.s{net.nports}p"
    out.parent.mkdir(parents=True, exist_ok=True)
    with outputs() as made:
        made.append(touchstone.write_touchstone(net, out, args.fmt))
        back = touchstone.read_touchstone(out)
        if np.max(np.abs(back.data - net.data)) > 1e-9:
            raise PixDohertyError(f"{out} did not round-trip")
    _emit({"touchstone": str(out), "nports": net.nports, "n_freqs": int(net.freqs.size)}, as_json=True)
    return 0


# --- pipeline -----------------------------------------------------------------------
def run_pipeline(cfg: PipelineConfig, out_dir, plot=True) -> dict:
    """Synthesize, build a dataset, train, invert and verify; returns the summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    timings = {}
    (out / "pipeline_config.json").write_text(json.dumps(cfg.to_dict(), indent=2, default=str))

    t = time.perf_counter()
    inp = _load_loadpull(cfg.loadpull)
    res, target = run_synthesis(inp, cfg.freqs.freqs, cfg.oracle.z_ref)
    inverse.save_target(target, out / "target.json")
    (out / "target_report.txt").write_text(synthesis_report(inp, res, target))
    timings["synthesize"] = time.perf_counter() - t

    t = time.perf_counter()
    ds = out / "dataset.jsonl"
    stats = emoracle.generate_dataset(cfg.n_structures, cfg.dataset_config(), cfg.dataset_seed, ds, cfg.jobs)
    timings["gen_dataset"] = time.perf_counter() - t

    t = time.perf_counter()
    tinfo = train_stage(ds, out / "model.npz", out / "loss_history.csv", cfg.arch, cfg.train,
                        cfg.val_fraction, cfg.train.rng_seed, plot)
    timings["train"] = time.perf_counter() - t

    t = time.perf_counter()
    model = surrogate.SurrogateModel.load(out / "model.npz")
    gres, ginfo = invert_stage(target, inverse.SurrogateEvaluator(model), cfg.ga_config(), out, plot)
    timings["invert"] = time.perf_counter() - t

    t = time.perf_counter()
    ver = verify_stage(gres.best_layout, model, target, out / "overlay.csv", plot)
    s4 = emoracle.simulate(gres.best_layout, cfg.freqs, cfg.oracle)
    touchstone.write_touchstone(s4, out / "best_layout.s4p")
    touchstone.write_touchstone(emoracle.combiner_two_port(s4), out / "best_layout.s2p")
    timings["verify"] = time.perf_counter() - t
    timings["total"] = time.perf_counter() - t0

    summary = {
        "profile": cfg.profile,
        "theta_deg": math.degrees(res.theta),
        "dataset": {k: v for k, v in stats.items() if k != "config"},
        "train": tinfo,
        "invert": ginfo,
        "verify": ver.summary(),
        "timings_s": timings,
    }
    (out / "pipeline_summary.json").write_text(json.dumps(summary, indent=2))
    return summary


def cmd_pipeline(args) -> int:
    cfg = load_config(args.profile, args.config)
    over = {}
    if args.seed is not None:
        over.update(dataset_seed=args.seed)
        cfg = replace(cfg, train=replace(cfg.train, rng_seed=args.seed), ga=replace(cfg.ga, rng_seed=args.seed))
    if args.jobs is not None:
        over["jobs"] = args.jobs
    if args.n_structures is not None:
        over["n_structures"] = args.n_structures
    if args.epochs is not None:
        cfg = replace(cfg, train=replace(cfg.train, epochs=args.epochs))
    if args.loadpull is not None:
        over["loadpull"] = args.loadpull
    cfg = replace(cfg, **over)
    summary = run_pipeline(cfg, args.out_dir or default_out_dir(), not args.no_plot)
    _emit(summary, as_json=True)
    return 0


# --- parser ---------------------------------------------------------------------------
def _freq_args(p):
    g = emoracle.FrequencyGrid()
    p.add_argument("--freq-start", type=float, default=g.start_hz, help="first frequency in Hz")
    p.add_argument("--freq-stop", type=float, default=g.stop_hz, help="last frequency in Hz")
    p.add_argument("--freq-points", type=int, default=g.n_points)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pixdoherty", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("theory", help="ideal Doherty drive sweep and phase solutions")
    p.add_argument("--beta-b", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--theta-deg", type=float, default=None, help="phase delay; default: smallest solution")
    p.add_argument("--r-opt", type=float, default=50.0)
    p.add_argument("--sweep-points", type=int, default=201)
    p.add_argument("--out", default=None, help="sweep CSV path")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("synthesize", help="combiner target from load-pull data")
    p.add_argument("--loadpull", default="reference", help="load-pull JSON path, or 'reference'")
    p.add_argument("--gamma-b-db", type=float, default=None, help="override the back-off level")
    p.add_argument("--strategy", choices=["ideal-branch", "min-residual"], default="ideal-branch")
    p.add_argument("--alpha-square", choices=["complex", "magnitude"], default="complex")
    p.add_argument("--z-ref", type=float, default=50.0)
    _freq_args(p)
    p.add_argument("--out", default=None, help="target JSON path")
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("gen-dataset", help="simulate random layouts into a JSON-lines dataset")
    p.add_argument("--n-structures", type=int, required=True)
    p.add_argument("--rows", type=int, default=15)
    p.add_argument("--cols", type=int, default=15)
    p.add_argument("--density-mean", type=float, default=0.5)
    p.add_argument("--density-std", type=float, default=0.15)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    _freq_args(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gen_dataset)

    dflt = surrogate.TrainConfig()
    p = sub.add_parser("train", help="train the surrogate")
    p.add_argument("--dataset", required=True)
    p.add_argument("--arch", choices=["paper", "desk", "tiny"], default="paper")
    p.add_argument("--epochs", type=int, default=dflt.epochs)
    p.add_argument("--batch-size", type=int, default=dflt.batch_size)
    p.add_argument("--lr", type=float, default=dflt.learning_rate)
    p.add_argument("--val-fraction", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="model .npz path")
    p.add_argument("--history", default=None, help="loss history CSV path")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_train)

    gdf = inverse.GaConfig()
    p = sub.add_parser("invert", help="genetic-algorithm layout search")
    p.add_argument("--target", default=None, help="target JSON")
    p.add_argument("--dataset", default=None)
    p.add_argument("--from-record", type=int, default=None, help="use dataset record N as the target")
    p.add_argument("--model", default=None)
    p.add_argument("--evaluator", choices=["surrogate", "oracle"], default="surrogate")
    p.add_argument("--rows", type=int, default=15)
    p.add_argument("--cols", type=int, default=15)
    p.add_argument("--population", type=int, default=gdf.population)
    p.add_argument("--iters", type=int, default=gdf.max_iters)
    p.add_argument("--elite", type=int, default=gdf.elite_count)
    p.add_argument("--fitness-target", type=float, default=None)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("verify", help="re-simulate a layout and overlay it on the surrogate")
    p.add_argument("--layout", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", default=None, help="overlay CSV path")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("export-touchstone", help="write a layout or target as Touchstone")
    p.add_argument("--layout", default=None)
    p.add_argument("--two-port", action="store_true", help="export the terminated two-port")
    p.add_argument("--target", default=None)
    p.add_argument("--fmt", choices=["RI", "MA"], default="RI")
    _freq_args(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export_touchstone)

    p = sub.add_parser("pipeline", help="end-to-end run")
    p.add_argument("--profile", choices=["desk", "paper"], default="desk")
    p.add_argument("--config", default=None, help="JSON overrides for the profile")
    p.add_argument("--loadpull", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--n-structures", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_pipeline)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NoRealSolution as exc:
        print(f"error: no real θ: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except PowerMismatch as exc:
        print(f"error: power mismatch: {exc}", file=sys.stderr)
        return EXIT_POWER
    except NoSolution as exc:
        print(f"error: no solution: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION
    except PixDohertyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.debug("internal error", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
