"""Experiment runner: INI configs in, per-seed CSV traces, aggregates, SVG plots and profiles out.

Config layout::

    [experiment]
    output = results          ; relative paths resolve against the config file
    cache = vae_cache         ; overridden by $LATENTBO_CACHE
    workers = 1
    train = yes               ; pre-train VAEs on a cache miss
    log_y = no

    [run:ackley10-sdr]
    algorithm = bo_sdr
    function = ackley
    dim = 10
    budget = 150
    seeds = 0 1 2 3 4

Trace CSV columns are ``iteration,eval_count,f_observed,f_best,gap`` followed
by ``region_lo_i`` and ``region_hi_i`` for each search coordinate.  Rows with
``iteration == 0`` are the initial design.  Floats use ``repr`` precision so
files round-trip exactly.  Per-evaluation wall-clock goes to a separate
``*.timing.csv`` so the trace files stay byte-reproducible.
"""
from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import logging
import math
import os
import platform
import re
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy

from . import __version__
from .acquisition import AcqConfig
from .algorithms import ALGORITHMS, RunConfig, RunTrace, run_algorithm
from .dml import DMLConfig
from .profiles import SolverRecord, data_profile, performance_profile, solved_fraction
from .sdr import SDRParams
from .testbed import get_function, low_rank_problem, scale_domain
from .vae import (
    PRETRAIN_PRESETS,
    RETRAIN_PRESETS,
    VAE_PRESETS,
    BetaSchedule,
    TrainConfig,
    VAEModel,
    generate_training_data,
    load_vae,
    save_vae,
    train,
)

__all__ = [
    "ConfigError",
    "RunSpec",
    "ExperimentConfig",
    "AggregateCurve",
    "load_config",
    "run_experiment",
    "pretrain_all",
    "write_trace_csv",
    "read_trace_csv",
    "aggregate",
    "aggregate_dir",
    "render_convergence",
    "plot_dir",
    "profile_report",
    "write_manifest",
    "CACHE_ENV",
]

log = logging.getLogger(__name__)

CACHE_ENV = "LATENTBO_CACHE"
_RUN_ID = re.compile(r"^[A-Za-z0-9_.-]+$")
# row order of the solved-instances table
TABLE_ORDER = ["BO-SDR", "V-BOVAE", "S-BOVAE", "R-BOVAE", "REMBO", "BO"]
VAE_ALGORITHMS = ("v_bovae", "r_bovae", "s_bovae")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunSpec:
    run_id: str
    label: str
    problem: str
    function: str
    dim: Optional[int]
    domain: Optional[Tuple[float, float]]
    low_rank: bool
    d_e: int
    problem_seed: int
    seeds: Tuple[int, ...]
    config: RunConfig
    vae: Optional[str] = None
    pool: Optional[int] = None
    vae_seed: int = 0
    pretrain_epochs: Optional[int] = None

    def objective(self):
        if self.low_rank:
            return low_rank_problem(self.function, self.dim, self.problem_seed, self.d_e)
        spec = get_function(self.function, self.dim)
        if self.domain is not None:
            n = spec.dim
            spec = scale_domain(spec, np.full(n, self.domain[0]), np.full(n, self.domain[1]))
        return spec


@dataclass
class ExperimentConfig:
    path: Path
    text: str
    output: Path
    cache: Path
    workers: int = 1
    train: bool = True
    log_y: bool = False
    runs: List[RunSpec] = field(default_factory=list)

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()


def _get(sec, key, conv, default=None):
    if key not in sec:
        return default
    raw = sec[key].strip()
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key} = {raw!r}: {exc}") from None


def _bool(raw: str) -> bool:
    v = raw.lower()
    if v in ("1", "yes", "true", "on"):
        return True
    if v in ("0", "no", "false", "off"):
        return False
    raise ValueError("expected yes/no")


def _ints(raw: str) -> Tuple[int, ...]:
    return tuple(int(t) for t in re.split(r"[,\s]+", raw) if t)


def _pair(raw: str) -> Tuple[float, float]:
    lo, hi = (float(t) for t in raw.split(","))
    if not hi > lo:
        raise ValueError("domain upper bound must exceed lower bound")
    return lo, hi


def _parse_run(sec) -> RunSpec:
    run_id = sec.name.split(":", 1)[1].strip()
    if not _RUN_ID.match(run_id):
        raise ConfigError(f"run id {run_id!r} may only contain letters, digits, '.', '_' and '-'")
    algo = _get(sec, "algorithm", str)
    if algo not in ALGORITHMS:
        raise ConfigError(f"[{sec.name}] unknown algorithm {algo!r}; choose from {sorted(ALGORITHMS)}")
    function = _get(sec, "function", str)
    if function is None:
        raise ConfigError(f"[{sec.name}] missing 'function'")
    dim = _get(sec, "dim", int)
    domain = _get(sec, "domain", _pair)
    low_rank = _get(sec, "low_rank", _bool, False)
    d_e = _get(sec, "d_e", int, 4)
    problem_seed = _get(sec, "problem_seed", int, 0)
    if low_rank and (dim is None or domain is not None):
        raise ConfigError(f"[{sec.name}] low-rank problems need 'dim' and take no 'domain'")
    try:
        probe = RunSpec(run_id, "", "", function, dim, domain, low_rank, d_e, problem_seed, (0,), RunConfig())
        obj = probe.objective()
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"[{sec.name}] bad problem definition: {exc}") from None
    D = len(obj.lower)

    seeds = _get(sec, "seeds", _ints)
    if seeds is None:
        reps = _get(sec, "repetitions", int, 1)
        first = _get(sec, "seed", int, 0)
        if reps < 1:
            raise ConfigError(f"[{sec.name}] repetitions must be >= 1")
        seeds = tuple(range(first, first + reps))
    if len(set(seeds)) != len(seeds) or not seeds:
        raise ConfigError(f"[{sec.name}] seeds must be distinct and non-empty")

    sdr = None
    if _get(sec, "sdr", _bool, algo != "bo"):
        sdr = SDRParams(
            gamma_o=_get(sec, "sdr_gamma_o", float, 0.7),
            gamma_p=_get(sec, "sdr_gamma_p", float, 1.0),
            eta=_get(sec, "sdr_eta", float, 0.9),
            t=_get(sec, "sdr_t", float, 0.5),
            xi=_get(sec, "sdr_xi", int, 1),
        )
    dml = DMLConfig(
        eta=_get(sec, "dml_eta", float, 0.01),
        nu=_get(sec, "dml_nu", float, 0.2),
        rho=_get(sec, "dml_rho", float, 0.1),
        triplets_per_batch=_get(sec, "dml_triplets", int, 64),
    )
    acq = AcqConfig(n_raw=_get(sec, "acq_raw", int, 512), n_refine=_get(sec, "acq_refine", int, 8))

    vae = _get(sec, "vae", str)
    pool = _get(sec, "pool", int)
    retrain_cfg = TrainConfig(epochs=2, batch=256, lr=1e-3)
    if algo in VAE_ALGORITHMS:
        if vae is None:
            raise ConfigError(f"[{sec.name}] {algo} needs a 'vae' preset")
        vae = vae.lower()
        if vae not in VAE_PRESETS:
            raise ConfigError(f"[{sec.name}] unknown VAE preset {vae!r}; choose from {sorted(VAE_PRESETS)}")
        if VAE_PRESETS[vae][0][0] != D:
            raise ConfigError(f"[{sec.name}] {vae} expects D = {VAE_PRESETS[vae][0][0]}, problem has D = {D}")
        pool = pool or PRETRAIN_PRESETS[vae]["M"]
        retrain_cfg = TrainConfig(**RETRAIN_PRESETS[vae])
    elif vae is not None:
        raise ConfigError(f"[{sec.name}] 'vae' only applies to {VAE_ALGORITHMS}")

    budget = _get(sec, "budget", int, 350)
    try:
        cfg = RunConfig(
            algorithm=algo,
            budget=budget,
            n_initial=_get(sec, "n_initial", int),
            q=_get(sec, "q", int, max(1, min(50, budget))),
            sdr=sdr,
            dml=dml,
            retrain=retrain_cfg,
            acq=acq,
            gp_restarts=_get(sec, "gp_restarts", int, 5),
            latent_bound=_get(sec, "latent_bound", float, 5.0),
            d_e=d_e if algo == "rembo" else None,
        )
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {exc}") from None
    if cfg.q > max(cfg.budget, 1):
        raise ConfigError(f"[{sec.name}] q must not exceed the budget")

    default_problem = f"{'lowrank-' if low_rank else ''}{function}-D{D}"
    if domain is not None:
        default_problem += f"[{domain[0]:g},{domain[1]:g}]"
    return RunSpec(
        run_id=run_id,
        label=_get(sec, "label", str, ALGORITHMS[algo]),
        problem=_get(sec, "problem", str, default_problem),
        function=function,
        dim=dim,
        domain=domain,
        low_rank=low_rank,
        d_e=d_e,
        problem_seed=problem_seed,
        seeds=tuple(seeds),
        config=cfg,
        vae=vae,
        pool=pool,
        vae_seed=_get(sec, "vae_seed", int, 0),
        pretrain_epochs=_get(sec, "pretrain_epochs", int),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    if "experiment" not in parser:
        raise ConfigError("missing [experiment] section")
    exp = parser["experiment"]
    base = path.resolve().parent
    cache = os.environ.get(CACHE_ENV) or _get(exp, "cache", str, "vae_cache")
    cfg = ExperimentConfig(
        path=path,
        text=text,
        output=base / _get(exp, "output", str, "results"),
        cache=base / cache,
        workers=_get(exp, "workers", int, 1),
        train=_get(exp, "train", _bool, True),
        log_y=_get(exp, "log_y", _bool, False),
    )
    for name in parser.sections():
        if name == "experiment":
            continue
        if not name.startswith("run:"):
            raise ConfigError(f"unexpected section [{name}]")
        try:
            cfg.runs.append(_parse_run(parser[name]))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"[{name}] {exc}") from None
    seen = {}
    for r in cfg.runs:
        for s in r.seeds:
            key = (r.problem, s, r.label)
            if key in seen:
                raise ConfigError(f"runs {seen[key]!r} and {r.run_id!r} share problem, seed and label")
            seen[key] = r.run_id
    return cfg


# ---------------------------------------------------------------------------
# VAE cache
# ---------------------------------------------------------------------------


def _pretrain_settings(run: RunSpec):
    preset = dict(PRETRAIN_PRESETS[run.vae])
    if run.pretrain_epochs is not None:
        preset["epochs"] = run.pretrain_epochs
    obj = run.objective()
    lower = np.asarray(obj.lower, dtype=float)
    upper = np.asarray(obj.upper, dtype=float)
    key = dict(
        preset=run.vae,
        M=run.pool,
        seed=run.vae_seed,
        epochs=preset["epochs"],
        batch=preset["batch"],
        lr=preset["lr"],
        schedule=[preset["schedule"].beta_i, preset["schedule"].beta_f, preset["schedule"].beta_s, preset["schedule"].beta_a],
        lower=lower.tolist(),
        upper=upper.tolist(),
    )
    digest = hashlib.sha256(json.dumps(key, sort_keys=True).encode()).hexdigest()[:16]
    return key, digest, lower, upper


def _training_pool(run: RunSpec):
    key, _, lower, upper = _pretrain_settings(run)
    return generate_training_data(lower.shape[0], key["M"], lower, upper, seed=key["seed"])


def _atomic_write(target: Path, writer):
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=target.name + ".", suffix=".tmp")
    os.close(fd)
    try:
        writer(Path(tmp))
        os.chmod(tmp, 0o644)  # mkstemp creates 0600
        os.replace(tmp, target)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def cached_vae(run: RunSpec, cache: Path, allow_train: bool = True) -> VAEModel:
    """Load the pre-trained VAE for ``run`` from the cache, training it on a miss."""
    key, digest, lower, upper = _pretrain_settings(run)
    path = Path(cache) / f"{run.vae}-{digest}.mlps"
    if path.exists():
        return load_vae(path)
    if not allow_train:
        raise FileNotFoundError(f"no cached VAE at {path} and training is disabled")
    log.info("pre-training %s on %d points -> %s", run.vae, key["M"], path)
    pool = _training_pool(run)
    s = key["schedule"]
    cfg = TrainConfig(key["epochs"], key["batch"], key["lr"], key["seed"], BetaSchedule(*s))
    model = train(VAEModel.from_preset(run.vae, seed=key["seed"]), pool, cfg)

    def write(tmp):
        save_vae(tmp, model, **key)
        os.replace(str(tmp) + ".json", str(path) + ".json")

    _atomic_write(path, write)
    return load_vae(path)


def pretrain_all(cfg: ExperimentConfig) -> List[Path]:
    done = []
    for run in cfg.runs:
        if run.vae is not None:
            cached_vae(run, cfg.cache, allow_train=True)
            done.append(cfg.cache / f"{run.vae}-{_pretrain_settings(run)[1]}.mlps")
    return sorted(set(done))


# ---------------------------------------------------------------------------
# trace files
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def write_trace_csv(path, trace: RunTrace):
    recs = trace.records
    m = recs[0].lower.shape[0] if recs else 0
    header = ["iteration", "eval_count", "f_observed", "f_best", "gap"]
    header += [f"region_lo_{i}" for i in range(m)] + [f"region_hi_{i}" for i in range(m)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in recs:
        w.writerow(
            [r.iteration, r.eval_count, _fmt(r.f), _fmt(r.f_best), _fmt(r.gap)]
            + [_fmt(v) for v in r.lower]
            + [_fmt(v) for v in r.upper]
        )
    Path(path).write_text(buf.getvalue())


def _write_timing(path, trace: RunTrace):
    lines = ["iteration,eval_count,wall_seconds"]
    lines += [f"{r.iteration},{r.eval_count},{r.wall:.6f}" for r in trace.records]
    Path(path).write_text("\n".join(lines) + "\n")


def read_trace_csv(path) -> Dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    cols = np.array(body, dtype=float).reshape(len(body), len(header))
    out = {h: cols[:, i] for i, h in enumerate(header) if not h.startswith("region_")}
    out["region_lo"] = cols[:, [i for i, h in enumerate(header) if h.startswith("region_lo_")]]
    out["region_hi"] = cols[:, [i for i, h in enumerate(header) if h.startswith("region_hi_")]]
    out["iteration"] = out["iteration"].astype(int)
    out["eval_count"] = out["eval_count"].astype(int)
    return out


def incumbent_series(trace: Dict[str, np.ndarray]) -> np.ndarray:
    """Best value after the initial design, then after each BO iteration."""
    it, best = trace["iteration"], trace["f_best"]
    last = np.flatnonzero(np.r_[it[1:] != it[:-1], True])
    return best[last]


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------


def _run_one(run: RunSpec, seed: int, out_dir: str, cache: str, allow_train: bool):
    cfg = replace(run.config, seed=seed)
    model = pool = None
    if run.vae is not None:
        model = cached_vae(run, Path(cache), allow_train)
        pool = _training_pool(run)
    trace = run_algorithm(run.objective(), cfg, model=model, pool=pool)
    d = Path(out_dir) / run.run_id
    d.mkdir(parents=True, exist_ok=True)
    stem = f"seed{seed}"
    write_trace_csv(d / f"{stem}.csv", trace)
    _write_timing(d / f"{stem}.timing.csv", trace)
    D = len(trace.records[0].x)
    meta = dict(
        run=run.run_id,
        label=run.label,
        algorithm=run.config.algorithm,
        problem=run.problem,
        seed=seed,
        n_p=D,
        n_initial=trace.n_initial,
        budget=cfg.budget,
        f_star=trace.f_star,
        f0_best=trace.f0_best,
        final_best=trace.best,
    )
    (d / f"{stem}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return run.run_id, seed, trace.best


def run_experiment(config_path, workers: Optional[int] = None) -> Path:
    """Execute every (run, seed) of the config; returns the results directory."""
    cfg = load_config(config_path)
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.text)
    # pre-train once per architecture/pool/seed before fanning out
    for run in cfg.runs:
        if run.vae is not None:
            cached_vae(run, cfg.cache, cfg.train)
    tasks = [(run, s, str(out), str(cfg.cache), cfg.train) for run in cfg.runs for s in run.seeds]
    n = workers if workers is not None else cfg.workers
    if n > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=n) as ex:
            for run_id, seed, best in ex.map(_run_one, *zip(*tasks)):
                log.info("%s seed %d: best %.6g", run_id, seed, best)
    else:
        for t in tasks:
            run_id, seed, best = _run_one(*t)
            log.info("%s seed %d: best %.6g", run_id, seed, best)
    write_manifest(out, cfg)
    return out


def _versions():
    return {
        "latentbo": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def write_manifest(results_dir, cfg: Optional[ExperimentConfig] = None) -> Path:
    """(Re)write ``manifest.json`` listing every file under ``results_dir`` with its sha256."""
    results_dir = Path(results_dir)
    path = results_dir / "manifest.json"
    info = {}
    if path.exists():
        info = json.loads(path.read_text())
    if cfg is not None:
        info["config_sha256"] = cfg.sha256
        info["runs"] = {r.run_id: {"label": r.label, "problem": r.problem, "seeds": list(r.seeds)} for r in cfg.runs}
    info.setdefault("runs", {})
    info["versions"] = _versions()
    files = {}
    for p in sorted(results_dir.rglob("*")):
        if p.is_file() and p != path:
            files[p.relative_to(results_dir).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
    info["files"] = files
    path.write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")
    return path


def _load_results(results_dir):
    """Yield ``(meta, trace)`` for every trace in ``results_dir``."""
    for meta_path in sorted(Path(results_dir).glob("*/*.meta.json")):
        meta = json.loads(meta_path.read_text())
        csv_path = meta_path.with_name(meta_path.name.replace(".meta.json", ".csv"))
        yield meta, read_trace_csv(csv_path)


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AggregateCurve:
    iteration: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    per_seed: np.ndarray


def aggregate(traces: Sequence[Sequence[float]]) -> AggregateCurve:
    """Pointwise mean and population standard deviation across seeds."""
    if not traces:
        raise ValueError("nothing to aggregate")
    lengths = {len(t) for t in traces}
    n = min(lengths)
    if len(lengths) > 1:
        warnings.warn(f"traces differ in length {sorted(lengths)}; truncating to {n}", stacklevel=2)
    Y = np.array([np.asarray(t, dtype=float)[:n] for t in traces])
    return AggregateCurve(np.arange(n), Y.mean(axis=0), Y.std(axis=0), Y)


def aggregate_dir(results_dir) -> Dict[str, AggregateCurve]:
    """Aggregate incumbent curves per run and write ``<run>/aggregate.csv``."""
    groups: Dict[str, list] = {}
    for meta, trace in _load_results(results_dir):
        groups.setdefault(meta["run"], []).append((meta["seed"], incumbent_series(trace)))
    out = {}
    for run, items in sorted(groups.items()):
        items.sort()
        agg = aggregate([s for _, s in items])
        out[run] = agg
        lines = ["iteration,mean,std," + ",".join(f"seed_{s}" for s, _ in items)]
        for i in range(len(agg.iteration)):
            vals = [agg.mean[i], agg.std[i], *agg.per_seed[:, i]]
            lines.append(f"{i}," + ",".join(_fmt(v) for v in vals))
        (Path(results_dir) / run / "aggregate.csv").write_text("\n".join(lines) + "\n")
    return out


# ---------------------------------------------------------------------------
# SVG rendering
# ---------------------------------------------------------------------------

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


@dataclass(frozen=True)
class Frame:
    """Maps data coordinates to SVG pixels."""

    x0: float
    x1: float
    y0: float
    y1: float
    log_y: bool = False
    width: float = 640.0
    height: float = 400.0
    margin: float = 60.0

    def _ty(self, y):
        return np.log10(y) if self.log_y else np.asarray(y, dtype=float)

    def px(self, x):
        span = (self.x1 - self.x0) or 1.0
        return self.margin + (np.asarray(x, dtype=float) - self.x0) / span * (self.width - 2 * self.margin)

    def py(self, y):
        lo, hi = self._ty(self.y0), self._ty(self.y1)
        span = (hi - lo) or 1.0
        return self.height - self.margin - (self._ty(y) - lo) / span * (self.height - 2 * self.margin)

    def data_y(self, py):
        lo, hi = self._ty(self.y0), self._ty(self.y1)
        span = (hi - lo) or 1.0
        t = (self.height - self.margin - np.asarray(py, dtype=float)) / (self.height - 2 * self.margin) * span + lo
        return 10.0**t if self.log_y else t


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def _points(xs, ys) -> str:
    return " ".join(f"{x:.4f},{y:.4f}" for x, y in zip(xs, ys))


def render_convergence(aggregates: Dict[str, AggregateCurve], path=None, title: str = "", log_y: bool = False,
                       ylabel: str = "best f") -> str:
    """Mean lines with shaded +-1 std bands; returns the SVG text and writes it when ``path`` is given."""
    if not aggregates:
        raise ValueError("no curves to plot")
    lows, highs = [], []
    for a in aggregates.values():
        lows.append(np.min(a.mean - a.std))
        highs.append(np.max(a.mean + a.std))
    y0, y1 = float(min(lows)), float(max(highs))
    if log_y:
        positive = [np.min(np.where(a.mean - a.std > 0, a.mean - a.std, np.inf)) for a in aggregates.values()]
        floor = float(min(min(positive), y1)) if np.isfinite(min(positive)) else 1e-12
        y0, y1 = max(y0, floor), max(y1, floor * 10)
    elif y1 == y0:
        y0, y1 = y0 - 1.0, y1 + 1.0
    x1 = max(float(a.iteration[-1]) for a in aggregates.values())
    fr = Frame(0.0, x1, y0, y1, log_y)

    def clamp(v):
        return np.maximum(v, y0) if log_y else v

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{fr.width:g}" height="{fr.height:g}" '
        f'viewBox="0 0 {fr.width:g} {fr.height:g}">',
        f'<rect width="{fr.width:g}" height="{fr.height:g}" fill="white"/>',
    ]
    L, B = fr.margin, fr.height - fr.margin
    R, T = fr.width - fr.margin, fr.margin
    parts.append(f'<path d="M{L},{T} L{L},{B} L{R},{B}" stroke="black" fill="none"/>')
    for xt in np.linspace(0.0, x1, 6):
        parts.append(f'<text x="{fr.px(xt):.2f}" y="{B + 16:.2f}" font-size="11" text-anchor="middle">{xt:g}</text>')
    yticks = (10.0 ** np.arange(math.floor(math.log10(y0)), math.ceil(math.log10(y1)) + 1)
              if log_y else np.linspace(y0, y1, 5))
    for yt in yticks:
        if y0 <= yt <= y1:
            parts.append(f'<text x="{L - 6:.2f}" y="{fr.py(yt) + 4:.2f}" font-size="11" text-anchor="end">{yt:.3g}</text>')
    parts.append(f'<text x="{(L + R) / 2:.2f}" y="{fr.height - 16:.2f}" font-size="12" text-anchor="middle">iteration</text>')
    parts.append(f'<text x="16" y="{(T + B) / 2:.2f}" font-size="12" text-anchor="middle" '
                 f'transform="rotate(-90 16 {(T + B) / 2:.2f})">{_esc(ylabel)}</text>')
    if title:
        parts.append(f'<text x="{(L + R) / 2:.2f}" y="24" font-size="14" text-anchor="middle">{_esc(title)}</text>')
    for i, (name, a) in enumerate(aggregates.items()):
        colour = _PALETTE[i % len(_PALETTE)]
        xs = fr.px(a.iteration)
        upper = fr.py(clamp(a.mean + a.std))
        lower = fr.py(clamp(a.mean - a.std))
        band = _points(np.r_[xs, xs[::-1]], np.r_[upper, lower[::-1]])
        parts.append(f'<polygon class="band" data-run="{_esc(name)}" points="{band}" fill="{colour}" '
                     f'fill-opacity="0.2" stroke="none"/>')
        parts.append(f'<polyline class="mean" data-run="{_esc(name)}" points="{_points(xs, fr.py(clamp(a.mean)))}" '
                     f'fill="none" stroke="{colour}" stroke-width="1.5"/>')
        ly = T + 14 * (i + 1)
        parts.append(f'<line x1="{R - 150}" y1="{ly - 4}" x2="{R - 130}" y2="{ly - 4}" stroke="{colour}" stroke-width="2"/>')
        parts.append(f'<text x="{R - 125}" y="{ly}" font-size="11">{_esc(name)}</text>')
    parts.append("</svg>")
    text = "\n".join(parts) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def plot_dir(results_dir, log_y: Optional[bool] = None) -> List[Path]:
    """One convergence SVG per problem, one curve per run."""
    results_dir = Path(results_dir)
    if log_y is None:
        cfg_path = results_dir / "config.ini"
        log_y = False
        if cfg_path.exists():
            p = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
            p.read_string(cfg_path.read_text())
            log_y = _bool(p.get("experiment", "log_y", fallback="no"))
    by_problem: Dict[str, Dict[str, list]] = {}
    for meta, trace in _load_results(results_dir):
        series = incumbent_series(trace)
        if log_y:
            series = series - meta["f_star"]
        by_problem.setdefault(meta["problem"], {}).setdefault(meta["label"], []).append((meta["seed"], series))
    written = []
    plots = results_dir / "plots"
    plots.mkdir(exist_ok=True)
    for problem, runs in sorted(by_problem.items()):
        aggs = {label: aggregate([s for _, s in sorted(items)]) for label, items in sorted(runs.items())}
        safe = re.sub(r"[^A-Za-z0-9_.-]+", "_", problem)
        path = plots / f"{safe}.svg"
        render_convergence(aggs, path, title=problem, log_y=log_y, ylabel="optimality gap" if log_y else "best f")
        written.append(path)
    write_manifest(results_dir)
    return written


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------


def profile_records(results_dir) -> List[SolverRecord]:
    """One record per (solver, problem, seed), with a common starting value per instance.

    Solvers draw different initial designs, so the instance's ``f0`` is the
    largest of their initial-design best values.
    """
    by_instance: Dict[str, list] = {}
    for meta, trace in _load_results(results_dir):
        f_star = meta.get("f_star")
        if f_star is None or not np.isfinite(f_star):
            warnings.warn(f"{meta.get('run')} seed {meta.get('seed')}: no f_star, excluded from profiles", stacklevel=2)
            continue
        inst = f"{meta['problem']}#seed{meta['seed']}"
        by_instance.setdefault(inst, []).append((meta, trace))
    records = []
    for inst, items in sorted(by_instance.items()):
        f0 = max(m["f0_best"] for m, _ in items)
        for meta, trace in items:
            records.append(SolverRecord(meta["label"], inst, meta["n_p"], trace["f_best"], meta["f_star"], f0))
    return records


def _profile_csv(path, curves):
    lines = ["solver,alpha,fraction"]
    for c in curves:
        lines += [f"{c.solver},{a:g},{_fmt(v)}" for a, v in zip(c.alpha, c.fraction)]
    Path(path).write_text("\n".join(lines) + "\n")


def _profile_svg(path, curves, title, xlabel, log2_x=False):
    xs_all = [np.log2(c.alpha) if log2_x else c.alpha for c in curves]
    x1 = max(float(np.max(x)) for x in xs_all) or 1.0
    fr = Frame(0.0, x1, 0.0, 1.0)
    L, B, R, T = fr.margin, fr.height - fr.margin, fr.width - fr.margin, fr.margin
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{fr.width:g}" height="{fr.height:g}" '
        f'viewBox="0 0 {fr.width:g} {fr.height:g}">',
        f'<rect width="{fr.width:g}" height="{fr.height:g}" fill="white"/>',
        f'<path d="M{L},{T} L{L},{B} L{R},{B}" stroke="black" fill="none"/>',
        f'<text x="{(L + R) / 2:.2f}" y="24" font-size="14" text-anchor="middle">{_esc(title)}</text>',
        f'<text x="{(L + R) / 2:.2f}" y="{fr.height - 16:.2f}" font-size="12" text-anchor="middle">{_esc(xlabel)}</text>',
    ]
    for yt in (0.0, 0.5, 1.0):
        parts.append(f'<text x="{L - 6:.2f}" y="{fr.py(yt) + 4:.2f}" font-size="11" text-anchor="end">{yt:g}</text>')
    for xt in np.linspace(0.0, x1, 5):
        parts.append(f'<text x="{fr.px(xt):.2f}" y="{B + 16:.2f}" font-size="11" text-anchor="middle">{xt:.3g}</text>')
    for i, (c, xs) in enumerate(zip(curves, xs_all)):
        colour = _PALETTE[i % len(_PALETTE)]
        sx = np.repeat(xs, 2)[1:]
        sy = np.repeat(c.fraction, 2)[:-1]
        parts.append(f'<polyline data-solver="{_esc(c.solver)}" points="{_points(fr.px(sx), fr.py(sy))}" '
                     f'fill="none" stroke="{colour}" stroke-width="1.5"/>')
        ly = T + 14 * (i + 1)
        parts.append(f'<text x="{R - 110}" y="{ly}" font-size="11" fill="{colour}">{_esc(c.solver)}</text>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n")


def _order(solvers):
    known = [s for s in TABLE_ORDER if s in solvers]
    return known + sorted(s for s in solvers if s not in TABLE_ORDER)


def profile_report(results_dir, taus: Sequence[float] = (1e-1, 1e-3), N_g: int = 20) -> Dict[float, Dict[str, float]]:
    """Performance/data profiles per tau plus a solved-percentage table.

    Returns ``{tau: {solver: solved fraction}}``.
    """
    results_dir = Path(results_dir)
    records = profile_records(results_dir)
    if not records:
        raise ValueError(f"no usable traces under {results_dir}")
    out_dir = results_dir / "profiles"
    out_dir.mkdir(exist_ok=True)
    table = {}
    for tau in taus:
        tag = f"tau_{tau:g}"
        perf = performance_profile(records, tau)
        data = data_profile(records, tau, N_g)
        _profile_csv(out_dir / f"{tag}_performance.csv", perf)
        _profile_csv(out_dir / f"{tag}_data.csv", data)
        _profile_svg(out_dir / f"{tag}_performance.svg", perf, f"performance profile, tau = {tau:g}", "log2 alpha", True)
        _profile_svg(out_dir / f"{tag}_data.svg", data, f"data profile, tau = {tau:g}", "alpha (budget / (n_p + 1))")
        table[tau] = solved_fraction(records, tau)
    solvers = _order({s for t in table.values() for s in t})
    n_inst = len({r.problem for r in records})
    lines = ["solver," + ",".join(f"tau={t:g}" for t in taus)]
    md = ["| Solver | " + " | ".join(f"τ = {t:g}" for t in taus) + " |", "|---" * (len(taus) + 1) + "|"]
    for s in solvers:
        vals = [table[t].get(s, 0.0) for t in taus]
        lines.append(s + "," + ",".join(f"{100 * v:.0f}%" for v in vals))
        md.append(f"| {s} | " + " | ".join(f"{100 * v:.0f}%" for v in vals) + " |")
    (out_dir / "solved.csv").write_text("\n".join(lines) + "\n")
    (out_dir / "solved.md").write_text(f"Solved instances ({n_inst} instances)\n\n" + "\n".join(md) + "\n")
    write_manifest(results_dir)
    return table
