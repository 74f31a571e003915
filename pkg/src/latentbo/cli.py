"""Command-line harness: ``run``, ``profile`` and ``plot``.

Configs are JSON::

    {
      "defaults": {"dim": 20, "budget": 100, "unlabelled": 5000},
      "runs": [
        {"problem": ["ackley", "rosenbrock"], "algorithm": ["v_bovae", "v_bovae_nosdr"],
         "repeats": 5}
      ],
      "plots": true,
      "checkpoints": "checkpoints"
    }

Each run entry expands to the product of its problems, algorithms and seeds
(``seeds`` list, or ``seed`` + ``0..repeats-1``). Every other key is a
:class:`~latentbo.algorithms.RunConfig` field. ``--config preset:NAME`` loads
one of the bundled presets.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import itertools
import json
import logging
import os
import platform
import re
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .algorithms import ALGORITHMS, RunConfig, checkpoint_name, pretrained_vae, run, uses_vae
from .errors import ConfigError, InputError, LatentBOError
from .evaluation import (
    SolveRecord,
    data_alphas,
    data_profile,
    n_to_solve,
    performance_alphas,
    performance_profile,
    solved_fraction,
)
from .plotting import plot_convergence, plot_profile
from .testbed import FULL_RANK, LOW_RANK, make_problem
from .trace import read_trace

log = logging.getLogger("latentbo")

SEED_OFFSET_ENV = "LATENTBO_SEED_OFFSET"
EXIT_USAGE = 2

_RUN_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}
_ENTRY_KEYS = (_RUN_FIELDS - {"problem", "algorithm"}) | {
    "problem", "problems", "algorithm", "algorithms", "seeds", "repeats",
}
_TOP_KEYS = {"runs", "defaults", "repeats", "out", "plots", "checkpoints", "description"}


@dataclass
class ExperimentConfig:
    runs: list[RunConfig]
    repeats: int = 1
    out: Optional[str] = None
    plots: bool = True
    checkpoints: Optional[str] = None
    source: dict = dataclasses.field(default_factory=dict)


def _line_of(text: str, token) -> str:
    needle = json.dumps(token)
    for lineno, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return f"line {lineno}: "
    return ""


def _as_list(value):
    return list(value) if isinstance(value, (list, tuple)) else [value]


def parse_config(text: str, seed_offset: int = 0) -> ExperimentConfig:
    """Parse and validate an experiment config; errors name the offending key."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}: invalid JSON: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key in raw:
        if key not in _TOP_KEYS:
            raise ConfigError(f"{_line_of(text, key)}unknown top-level key {key!r}")
    entries = raw.get("runs")
    if not isinstance(entries, list) or not entries:
        raise ConfigError(f"{_line_of(text, 'runs')}'runs' must be a non-empty list")
    defaults = raw.get("defaults", {})
    repeats = int(raw.get("repeats", 1))
    if repeats < 1:
        raise ConfigError(f"{_line_of(text, 'repeats')}'repeats' must be at least 1")

    runs: list[RunConfig] = []
    for i, entry in enumerate(entries):
        merged = {**defaults, **entry}
        for key in merged:
            if key not in _ENTRY_KEYS:
                raise ConfigError(f"{_line_of(text, key)}runs[{i}]: unknown key {key!r}")
        problems = _as_list(merged.pop("problems", merged.pop("problem", None)))
        algorithms = _as_list(merged.pop("algorithms", merged.pop("algorithm", None)))
        if problems == [None]:
            raise ConfigError(f"runs[{i}]: missing key 'problem'")
        if algorithms == [None]:
            raise ConfigError(f"runs[{i}]: missing key 'algorithm'")
        n_rep = int(merged.pop("repeats", repeats))
        seed0 = int(merged.pop("seed", 0))
        seeds = [int(s) for s in merged.pop("seeds", [seed0 + r for r in range(n_rep)])]
        for name in problems:
            if name not in FULL_RANK and name not in LOW_RANK:
                raise ConfigError(f"{_line_of(text, name)}runs[{i}].problem: unknown problem {name!r}")
        for alg in algorithms:
            if alg not in ALGORITHMS:
                raise ConfigError(f"{_line_of(text, alg)}runs[{i}].algorithm: unknown algorithm {alg!r}")
        for name, alg, seed in itertools.product(problems, algorithms, seeds):
            if alg == "rembo" and not name.startswith("lr_"):
                raise ConfigError(f"{_line_of(text, name)}runs[{i}]: rembo needs a low-rank problem, got {name!r}")
            try:
                runs.append(RunConfig.from_dict({**merged, "problem": name, "algorithm": alg,
                                                 "seed": seed + seed_offset}))
            except TypeError as exc:
                raise ConfigError(f"runs[{i}]: {exc}") from None
            except ConfigError as exc:
                raise ConfigError(f"runs[{i}]: {exc}") from None
            except InputError as exc:
                raise ConfigError(f"runs[{i}]: {exc}") from None
    return ExperimentConfig(runs, repeats, raw.get("out"), bool(raw.get("plots", True)),
                            raw.get("checkpoints"), raw)


def load_config_text(spec: str) -> str:
    if spec.startswith("preset:"):
        name = spec.split(":", 1)[1]
        try:
            return resources.files("latentbo.presets").joinpath(f"{name}.json").read_text()
        except FileNotFoundError:
            raise ConfigError(f"unknown preset {name!r}") from None
    return Path(spec).read_text()


def seed_offset() -> int:
    raw = os.environ.get(SEED_OFFSET_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_OFFSET_ENV} must be an integer, got {raw!r}") from None


def job_stem(cfg: RunConfig) -> str:
    return f"{cfg.problem}_{cfg.algorithm}_{cfg.seed}"


_STEM = re.compile(r"^(?P<rest>.+)_(?P<seed>-?\d+)$")


def parse_stem(stem: str):
    """Split ``{problem}_{algorithm}_{seed}``; algorithm names may contain underscores."""
    m = _STEM.match(stem)
    if not m:
        return None
    rest = m.group("rest")
    for alg in sorted(ALGORITHMS, key=len, reverse=True):
        if rest.endswith("_" + alg):
            return rest[: -len(alg) - 1], alg, int(m.group("seed"))
    return None


def _run_job(args):
    cfg, out_dir, ckpt_dir = args
    stem = job_stem(cfg)
    try:
        trace = run(cfg, cache_dir=ckpt_dir)
    except Exception as exc:  # job failures are recorded, not fatal
        return {"job": stem, "problem": cfg.problem, "algorithm": cfg.algorithm, "seed": cfg.seed,
                "status": "failed", "error": f"{type(exc).__name__}: {exc}"}
    path = Path(out_dir) / f"{stem}.csv"
    tmp = path.with_suffix(".csv.tmp")
    trace.write(tmp)
    tmp.replace(path)
    meta = {k: v for k, v in trace.meta.items()}
    (Path(out_dir) / f"{stem}.meta.json").write_text(json.dumps(meta, indent=1, default=float))
    return {"job": stem, "problem": cfg.problem, "algorithm": cfg.algorithm, "seed": cfg.seed,
            "status": "aborted" if "aborted" in meta else "ok", "file": path.name,
            "evaluations": len(trace), "best": trace.best, "wall_time": meta.get("wall_time")}


def _pretrain_job(args):
    cfg, ckpt_dir = args
    pretrained_vae(cfg, ckpt_dir)
    return checkpoint_name(cfg)


def _versions() -> dict:
    import matplotlib
    import scipy

    return {"latentbo": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "matplotlib": matplotlib.__version__}


def execute(exp: ExperimentConfig, out_dir: Path, resume: bool = False, workers: int = 1) -> list[dict]:
    """Run every job of ``exp`` and write traces plus ``manifest.json``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt = Path(exp.checkpoints) if exp.checkpoints else out_dir / "checkpoints"
    if not ckpt.is_absolute() and exp.checkpoints:
        ckpt = out_dir / ckpt

    previous = {}
    manifest_path = out_dir / "manifest.json"
    if resume and manifest_path.exists():
        previous = {j["job"]: j for j in json.loads(manifest_path.read_text()).get("jobs", [])}

    todo, results = [], []
    for cfg in exp.runs:
        stem = job_stem(cfg)
        if resume and (out_dir / f"{stem}.csv").exists():
            results.append({**previous.get(stem, {"job": stem, "problem": cfg.problem,
                                                  "algorithm": cfg.algorithm, "seed": cfg.seed,
                                                  "file": f"{stem}.csv", "status": "ok"}),
                            "resumed": True})
            continue
        todo.append(cfg)

    vae_cfgs = {checkpoint_name(c): c for c in todo if uses_vae(c.algorithm)}
    missing = [c for name, c in vae_cfgs.items() if not (ckpt / name).exists()]
    if missing:
        log.info("pre-training %d VAE(s)", len(missing))
        _map(_pretrain_job, [(c, ckpt) for c in missing], workers)

    for res in _map(_run_job, [(c, out_dir, ckpt) for c in todo], workers):
        results.append(res)
        log.info("%s: %s", res["job"], res["status"])

    order = {job_stem(c): i for i, c in enumerate(exp.runs)}
    results.sort(key=lambda r: order.get(r["job"], len(order)))
    manifest = {
        "config": exp.source,
        "versions": _versions(),
        "seed_offset": seed_offset(),
        "jobs": [{**r, "config": next((c.to_dict() for c in exp.runs if job_stem(c) == r["job"]), None)}
                 for r in results],
    }
    manifest_path.write_text(json.dumps(manifest, indent=1, default=float))

    if exp.plots:
        panels = _collect_convergence(out_dir)
        if panels:
            plot_convergence(panels, out_dir / "convergence.svg")
    return results


def _map(fn, items, workers):
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _collect_convergence(trace_dir: Path):
    panels: dict[str, dict[str, list]] = {}
    for path in sorted(trace_dir.glob("*.csv")):
        parsed = parse_stem(path.stem)
        if parsed is None:
            continue
        problem, alg, _ = parsed
        try:
            tr = read_trace(path)
        except InputError:
            continue
        panels.setdefault(problem, {}).setdefault(alg, []).append(tr.best_f)
    return panels


# ---------------------------------------------------------------------------
# profiles

def collect_records(trace_dir: Path, tau: float) -> list[SolveRecord]:
    """One solve record per trace; each (problem, seed) pair is its own problem."""
    records = []
    for path in sorted(trace_dir.glob("*.csv")):
        parsed = parse_stem(path.stem)
        if parsed is None:
            continue
        problem, alg, seed = parsed
        tr = read_trace(path)
        dim = tr.x[0].size
        try:
            f_star = make_problem(problem, dim, seed=seed).f_star
        except LatentBOError:
            warnings.warn(f"skipping {path.name}: unknown problem {problem!r}")
            continue
        records.append(SolveRecord(f"{problem}_{seed}", alg, n_to_solve(tr.best_f, f_star, tau), dim, len(tr)))
    return records


def _write_curves(path: Path, tau: float, alphas, curves) -> None:
    solvers = sorted(curves)
    buf = io.StringIO()
    buf.write(f"# tau={tau!r}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha"] + solvers)
    for i, a in enumerate(alphas):
        w.writerow([repr(float(a))] + [repr(float(curves[s][i])) for s in solvers])
    path.write_text(buf.getvalue())


def write_profiles(records: list[SolveRecord], tau: float, out_dir: Path) -> dict[str, float]:
    out_dir.mkdir(parents=True, exist_ok=True)
    pa = performance_alphas(records)
    perf = performance_profile(records, pa)
    da = data_alphas(records)
    data = data_profile(records, da)
    _write_curves(out_dir / "performance_profile.csv", tau, pa, perf)
    _write_curves(out_dir / "data_profile.csv", tau, da, data)
    solved = solved_fraction(records)
    buf = io.StringIO()
    buf.write(f"# tau={tau!r}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["solver", "percent_solved", "problems"])
    n_problems = len({r.problem for r in records})
    for s in sorted(solved):
        w.writerow([s, f"{100.0 * solved[s]:.1f}", n_problems])
    (out_dir / "summary.csv").write_text(buf.getvalue())
    plot_profile(pa, perf, out_dir / "performance_profile.svg", xlabel="performance ratio",
                 title=f"performance profile, tau={tau:g}")
    plot_profile(da, data, out_dir / "data_profile.svg", xlabel="budget / (n_p + 1)",
                 title=f"data profile, tau={tau:g}")
    return solved


def read_curves(path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows or rows[0][0] != "alpha" or len(rows[0]) < 2:
        raise InputError(f"{path}: expected a header 'alpha,<solver>...'")
    header = rows[0]
    try:
        arr = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] != len(header):
        raise InputError(f"{path}: malformed profile table")
    return arr[:, 0], {h: arr[:, i] for i, h in enumerate(header) if i > 0}


# ---------------------------------------------------------------------------
# commands

def cmd_run(args) -> int:
    text = load_config_text(args.config)
    exp = parse_config(text, seed_offset())
    out_dir = Path(args.out or exp.out or "results")
    results = execute(exp, out_dir, resume=args.resume, workers=args.workers)
    failed = [r for r in results if r.get("status") == "failed"]
    for r in failed:
        print(f"job {r['job']} failed: {r.get('error')}", file=sys.stderr)
    print(f"{len(results) - len(failed)}/{len(results)} jobs completed; traces in {out_dir}")
    return 1 if failed else 0


def cmd_profile(args) -> int:
    trace_dir = Path(args.traces)
    if not trace_dir.is_dir() or not any(trace_dir.glob("*.csv")):
        print(f"no trace CSVs found in {trace_dir}", file=sys.stderr)
        return EXIT_USAGE
    records = collect_records(trace_dir, args.tau)
    if not records:
        print(f"no usable traces in {trace_dir}", file=sys.stderr)
        return EXIT_USAGE
    solved = write_profiles(records, args.tau, Path(args.out))
    print(f"tau = {args.tau:g}")
    for s in sorted(solved):
        print(f"{s:>14s}  {100.0 * solved[s]:5.1f}% solved")
    return 0


def cmd_plot(args) -> int:
    src = Path(args.input)
    if args.kind == "profile":
        alphas, curves = read_curves(src)
        plot_profile(alphas, curves, args.out)
        return 0
    if src.is_dir():
        panels = _collect_convergence(src)
    else:
        tr = read_trace(src)
        parsed = parse_stem(src.stem)
        problem, alg = (parsed[0], parsed[1]) if parsed else (src.stem, "trace")
        panels = {problem: {alg: [tr.best_f]}}
    if not panels:
        raise InputError(f"no traces found under {src}")
    plot_convergence(panels, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latentbo", description="Latent-space Bayesian optimisation experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute an experiment config")
    p.add_argument("--config", required=True, help="JSON config path or preset:NAME")
    p.add_argument("--out", help="output directory (default: config 'out' or ./results)")
    p.add_argument("--resume", action="store_true", help="skip jobs whose trace already exists")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("profile", help="performance and data profiles from traces")
    p.add_argument("--traces", required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--out", required=True, help="output directory for CSVs and SVGs")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("plot", help="render an SVG from traces or a profile CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--kind", choices=("convergence", "profile"), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
