"""Command-line entry point.

Settings come from built-in defaults, then an optional ``--config`` file of
``key=value`` lines using the flag names, then explicit flags. Every run
writes the settings it actually used to ``resolved_config.txt``, which is a
valid ``--config`` file itself.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import statistics
import subprocess
import sys
import time
from pathlib import Path

from .colony import Colony, IterationRecord, RunConfig, normalize_mode
from .data import MinMaxRecord, SplitSpec, load_csv, make_dataset, normalize, synth_series
from .distributed import Evaluator, TcpEndpoint, run_in_process, run_tcp, worker_loop
from .errors import CantsError, ConfigError
from .genome import serialize, to_dot
from .rnn import instantiate

log = logging.getLogger("cants")

# key -> (type, default); flag names are these keys with "_" replaced by "-"
SETTINGS: dict[str, tuple[type, object]] = {
    "mode": (str, "bp-free"),
    "agents": (int, 15),
    "iterations": (int, 100),
    "workers": (int, 1),
    "transport": (str, "in_process"),
    "seed": (int, 0),
    "data": (str, ""),
    "synth": (str, "sine_mix"),
    "synth_length": (int, 500),
    "noise_sd": (float, 0.0),
    "inputs": (str, ""),
    "target": (str, ""),
    "train_len": (int, 0),
    "test_len": (int, 0),
    "out": (str, "cants_out"),
    "epochs": (int, 30),
    "lr": (float, 0.001),
    "levels": (int, 5),
    "sigma_mutation": (float, 0.2),
    "deposit_const": (float, 0.5),
    "decay": (float, 0.05),
    "eps": (float, 0.05),
    "min_pts": (int, 2),
    "population_size": (int, 10),
    "host": (str, "127.0.0.1"),
    "port": (int, 0),
    "timeout": (float, 600.0),
    "agent_grid": (str, "5,15,35"),
    "seeds": (int, 1),
}

def read_config_file(path) -> dict[str, str]:
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in SETTINGS:
                raise ConfigError(f"{path}:{lineno}: unknown setting {key!r}")
            out[key] = val
    return out


def _convert(key: str, raw) -> object:
    kind = SETTINGS[key][0]
    try:
        return kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"setting {key} expects {kind.__name__}, got {raw!r}") from None


def resolve(args: argparse.Namespace) -> dict:
    values = {k: d for k, (_, d) in SETTINGS.items()}
    if getattr(args, "config", None):
        for k, v in read_config_file(args.config).items():
            values[k] = _convert(k, v)
    for k in SETTINGS:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = _convert(k, v)
    values["mode"] = normalize_mode(values["mode"]).replace("_", "-")
    if values["transport"] not in ("in_process", "tcp"):
        raise ConfigError(f"transport must be in_process or tcp, got {values['transport']!r}")
    if values["workers"] < 1:
        raise ConfigError("workers must be >= 1")
    return values


def write_resolved(values: dict, path) -> None:
    with open(path, "w") as fh:
        for k in SETTINGS:
            fh.write(f"{k}={values[k]}\n")


def run_config(values: dict) -> RunConfig:
    cfg = RunConfig(
        mode=values["mode"],
        iterations=values["iterations"],
        agents=values["agents"],
        sigma_mutation=values["sigma_mutation"],
        seed=values["seed"],
        levels=values["levels"],
        decay=values["decay"],
        deposit_const=values["deposit_const"],
        eps=values["eps"],
        min_pts=values["min_pts"],
        population_size=values["population_size"],
        epochs=values["epochs"],
        lr=values["lr"],
    )
    cfg.validate()
    return cfg


def load_data(values: dict):
    """Normalized dataset plus the scaling record, per the data settings."""
    if values["data"]:
        inputs = [c for c in values["inputs"].split(",") if c]
        if not inputs or not values["target"]:
            raise ConfigError("--data needs --inputs and --target column names")
        series = load_csv(values["data"], inputs, values["target"])
        if series.dropped_rows:
            log.warning("dropped %d rows with blank cells", series.dropped_rows)
    else:
        series = synth_series(values["synth"], values["synth_length"], values["noise_sd"], values["seed"])
    series, scale = normalize(series)
    n = len(series)
    train = values["train_len"] or (3 * n) // 4
    test = values["test_len"] or n - train
    dataset = make_dataset(series, SplitSpec(train, test), warmup=values["levels"])
    return dataset, scale, series


# -- artifact writers ----------------------------------------------------------

def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_predictions(path, colony: Colony, dataset, scale: MinMaxRecord, target: str) -> None:
    best = colony.population.best
    if best is None:
        return
    preds = instantiate(best[0]).predict(dataset.valid_x)[dataset.warmup:]
    truth = [y[0] for y in dataset.valid_y[dataset.warmup:]]
    rows = []
    for t, yt, yp in zip(dataset.valid_rows, truth, (p[0] for p in preds)):
        rows.append([t, repr(yt), repr(yp), repr(float(scale.denormalize(yt, target))),
                     repr(float(scale.denormalize(yp, target)))])
    _write_csv(path, ["t", "y_true", "y_pred", "y_true_raw", "y_pred_raw"], rows)


def write_run(out: Path, colony: Colony, wall_time: float, lost: int) -> None:
    recs = colony.records
    _write_csv(out / "run_log.csv", IterationRecord.LOG_COLUMNS, [r.log_row() for r in recs])
    _write_csv(out / "timings.csv", IterationRecord.TIMING_COLUMNS, [r.timing_row() for r in recs])
    _write_csv(
        out / "behaviors.csv",
        ["iteration", "cant_id", "explore_rate", "sense_radius", "r1", "r2", "event"],
        [[it, cid, *(repr(v) for v in b), ev] for it, cid, *b, ev in colony.behavior_log],
    )
    summary = colony.summary()
    summary["lost_candidates"] = lost
    _write_json(out / "summary.json", summary)
    timing = colony.timing_summary()
    timing["wall_time"] = wall_time
    _write_json(out / "timing_summary.json", timing)
    best = colony.population.best
    if best is not None:
        (out / "best_genome.json").write_text(serialize(best[0]) + "\n")
        (out / "best_genome.dot").write_text(to_dot(best[0]))
    colony.space.write_snapshot(out / "space_snapshot.csv")


def execute_run(values: dict, out: Path, quiet: bool = False) -> Colony:
    out.mkdir(parents=True, exist_ok=True)
    cfg = run_config(values)
    dataset, scale, series = load_data(values)
    write_resolved(values, out / "resolved_config.txt")
    colony = Colony(cfg, dataset.n_inputs)

    def save_best(col: Colony) -> None:
        (out / "best_genome.json").write_text(serialize(col.population.best[0]) + "\n")

    colony.on_improvement = save_best
    if values["transport"] == "tcp":
        procs = []

        def spawn(address):
            for _ in range(values["workers"]):
                cmd = [sys.executable, "-m", "cants", "worker", "--config", str(out / "resolved_config.txt"),
                       "--host", address[0], "--port", str(address[1])]
                procs.append(subprocess.Popen(cmd))

        try:
            outcome = run_tcp(colony, cfg, values["host"], values["port"], values["timeout"], on_bound=spawn)
        finally:
            for p in procs:
                try:
                    p.wait(timeout=30)
                except subprocess.TimeoutExpired:
                    p.kill()
    else:
        outcome = run_in_process(colony, cfg, dataset, values["workers"], values["timeout"])
    write_run(out, colony, outcome.wall_time, outcome.manager.lost)
    write_predictions(out / "predictions.csv", colony, dataset, scale, series.target_name)
    if not quiet:
        s = colony.summary()
        print(f"{cfg.mode}: {s['iterations']} results, best mse {s['best_mse']}, "
              f"wall {outcome.wall_time:.2f}s -> {out}")
    return colony


# -- subcommands ---------------------------------------------------------------

def cmd_run(args) -> int:
    values = resolve(args)
    execute_run(values, Path(values["out"]))
    return 0


def cmd_bench(args) -> int:
    values = resolve(args)
    out = Path(values["out"])
    grid = [int(a) for a in values["agent_grid"].split(",") if a.strip()]
    if not grid:
        raise ConfigError("agent_grid is empty")
    fit_rows, time_rows = [], []
    times: dict[tuple[int, str], list[float]] = {}
    for agents in grid:
        for mode in ("bp-free", "bp"):
            fits = []
            for s in range(values["seeds"]):
                v = dict(values, agents=agents, mode=mode, seed=values["seed"] + s)
                run_dir = out / "runs" / f"{mode}_a{agents}_s{v['seed']}"
                t0 = time.perf_counter()
                colony = execute_run(v, run_dir, quiet=True)
                times.setdefault((agents, mode), []).append(time.perf_counter() - t0)
                fits.append(colony.population.best_fitness)
            fit_rows.append([agents, mode, len(fits), repr(statistics.fmean(fits)),
                             repr(statistics.pstdev(fits)), repr(min(fits))])
            print(f"agents={agents} mode={mode} mean best mse {statistics.fmean(fits):.5f}")
    for agents in grid:
        t_free = statistics.fmean(times[(agents, "bp-free")])
        t_bp = statistics.fmean(times[(agents, "bp")])
        reduction = 100.0 * (1.0 - t_free / t_bp)
        for mode, t in (("bp-free", t_free), ("bp", t_bp)):
            time_rows.append([agents, mode, values["seeds"], f"{t:.6f}", f"{t / 3600:.9f}", f"{reduction:.2f}"])
    _write_csv(out / "fitness_table.csv", ["agents", "mode", "runs", "avg_mse", "std_mse", "best_mse"], fit_rows)
    _write_csv(out / "time_table.csv", ["agents", "mode", "runs", "avg_time_s", "avg_time_h", "reduction_pct"],
               time_rows)
    write_resolved(values, out / "resolved_config.txt")
    return 0


def _run_dirs(root: Path) -> list[Path]:
    if (root / "run_log.csv").exists():
        return [root]
    runs = root / "runs"
    found = sorted(p for p in runs.iterdir() if (p / "run_log.csv").exists()) if runs.is_dir() else []
    if not found:
        raise ConfigError(f"{root} holds no run logs")
    return found


def _read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def cmd_export(args) -> int:
    root = Path(args.run_dir)
    if not root.is_dir():
        raise ConfigError(f"run directory {root} does not exist")
    dest = Path(args.dest) if args.dest else root / "export"
    dest.mkdir(parents=True, exist_ok=True)
    cum_rows, fit_rows = [], []
    for run in _run_dirs(root):
        conf = read_config_file(run / "resolved_config.txt")
        name = run.name if run != root else "run"
        gen = ev = 0.0
        timing = {r["iteration"]: r for r in _read_csv(run / "timings.csv")} if (run / "timings.csv").exists() else {}
        for rec in _read_csv(run / "run_log.csv"):
            t = timing.get(rec["iteration"])
            if t is not None:
                gen += float(t["gen_time"])
                ev += float(t["eval_time"]) + float(t["train_time"])
            cum_rows.append([name, conf.get("mode"), rec["iteration"], f"{gen:.6f}", f"{ev:.6f}"])
            fit_rows.append([name, conf.get("agents"), conf.get("mode"), conf.get("seed"), rec["iteration"],
                             rec["fitness"], rec["population_best"]])
    _write_csv(dest / "cumulative_time.csv", ["run", "mode", "iteration", "cum_gen_time", "cum_eval_time"], cum_rows)
    _write_csv(dest / "fitness_vs_agents.csv",
               ["run", "agents", "mode", "seed", "iteration", "fitness", "population_best"], fit_rows)
    print(f"exported {len(fit_rows)} rows to {dest}")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_all

    return 0 if run_all(verbose=not args.quiet) else 1


def cmd_worker(args) -> int:
    values = resolve(args)
    dataset, _, _ = load_data(values)
    ep = TcpEndpoint(values["host"], values["port"])
    try:
        w = worker_loop(ep, Evaluator(dataset), worker_id=args.worker_id if args.worker_id is not None else os.getpid())
    finally:
        ep.close()
    log.info("worker finished after %d evaluations", w.evaluations)
    return 0


def _add_settings(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value settings file; flags override it")
    for key, (kind, default) in SETTINGS.items():
        flag = "--" + key.replace("_", "-")
        if key == "synth":
            p.add_argument(flag, nargs="?", const="sine_mix", default=None,
                           help="use the bundled synthetic series (sine_mix or ramp)")
            continue
        p.add_argument(flag, dest=key, type=kind, default=None, help=f"default: {default}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cants", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="one optimization run")
    _add_settings(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("bench", help="bp-free vs bp over an agent grid")
    _add_settings(p)
    p.set_defaults(func=cmd_bench)
    p = sub.add_parser("export", help="plot-ready CSVs from a run or bench directory")
    p.add_argument("run_dir")
    p.add_argument("--dest", help="output directory (default: <run_dir>/export)")
    p.set_defaults(func=cmd_export)
    p = sub.add_parser("selftest", help="headless invariant checks")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_selftest)
    p = sub.add_parser("worker", help="TCP worker process")
    _add_settings(p)
    p.add_argument("--worker-id", type=int, default=None)
    p.set_defaults(func=cmd_worker)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("CANTS_LOG_LEVEL", "WARNING").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "WARNING"
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CantsError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
