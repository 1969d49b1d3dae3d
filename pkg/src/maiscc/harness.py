"""Experiment runs, sweeps, CSV/SVG persistence and the command-line interface.

Sweeps walk their x-axis in increasing order of looseness (power up, LQR
budget up) and hand each AO solution to the next point as a warm start, so
the per-seed AO curves are monotone by construction.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import control, driver
from .beamforming import InfeasibleScenarioError
from .scenario import ConfigError, ScenarioConfig, load_config

logger = logging.getLogger(__name__)

SCHEMES = ("ao", "rap", "fap")
DEFAULT_DBM = (30.0, 35.0, 40.0, 45.0, 50.0)
DEFAULT_RATIOS = (1.5, 2.0, 3.0, 5.0, 10.0)


@dataclass
class ExperimentRecord:
    seed: int
    scheme: str
    sweep: str  # single | power | lqr
    p_max_dbm: float
    lqr_budget: float
    status: str
    sum_rate: float
    gu_rates: tuple[float, ...] = ()
    cav_rates: tuple[float, ...] = ()
    r_min: tuple[float, ...] = ()
    min_sensing_slack: float = math.nan
    outer_iterations: int = 0
    extraction: str = ""
    runtime_seconds: float = field(default=0.0, compare=False)


# records.csv column order; runtime is kept out so the file is reproducible
COLUMNS = tuple(f.name for f in fields(ExperimentRecord) if f.name != "runtime_seconds")
_VECTORS = ("gu_rates", "cav_rates", "r_min")


def _fmt(x: float) -> str:
    # repr is the shortest string that round-trips exactly
    return repr(float(x))


def record_to_row(rec: ExperimentRecord) -> list[str]:
    row = []
    for name in COLUMNS:
        v = getattr(rec, name)
        if name in _VECTORS:
            row.append(";".join(_fmt(x) for x in v))
        elif isinstance(v, float):
            row.append(_fmt(v))
        else:
            row.append(str(v))
    return row


def row_to_record(row: dict[str, str]) -> ExperimentRecord:
    kw = {}
    for f in fields(ExperimentRecord):
        if f.name not in row:
            continue
        raw = row[f.name]
        if f.name in _VECTORS:
            kw[f.name] = tuple(float(x) for x in raw.split(";")) if raw else ()
        elif f.name in ("seed", "outer_iterations"):
            kw[f.name] = int(raw)
        elif f.name in ("scheme", "sweep", "status", "extraction"):
            kw[f.name] = raw
        else:
            kw[f.name] = float(raw)
    return ExperimentRecord(**kw)


def _sort_key(rec: ExperimentRecord):
    x = rec.p_max_dbm if rec.sweep == "power" else rec.lqr_budget
    return (SCHEMES.index(rec.scheme) if rec.scheme in SCHEMES else 99, rec.sweep, x, rec.seed)


def sort_records(records: Iterable[ExperimentRecord]) -> list[ExperimentRecord]:
    return sorted(records, key=_sort_key)


# ---------------------------------------------------------------------------
# single runs


def _record(res: driver.AoResult, config: ScenarioConfig, seed: int, sweep: str, runtime: float) -> ExperimentRecord:
    ok = res.status != "infeasible"
    return ExperimentRecord(
        seed=seed,
        scheme=res.scheme,
        sweep=sweep,
        p_max_dbm=config.max_power_dbm,
        lqr_budget=float(config.lqr_budgets[0]) if config.num_cavs else math.inf,
        status=res.status,
        sum_rate=float(res.sum_rate) if ok else math.nan,
        gu_rates=tuple(float(x) for x in res.gu_rates),
        cav_rates=tuple(float(x) for x in res.cav_rates),
        r_min=tuple(float(x) for x in res.R_min),
        min_sensing_slack=res.min_sensing_slack if ok else math.nan,
        outer_iterations=max(len(res.trace) - 1, 0),
        extraction=res.extraction,
        runtime_seconds=runtime,
    )


def _budget_failure(config: ScenarioConfig, seed: int, sweep: str, scheme: str) -> ExperimentRecord:
    return ExperimentRecord(
        seed=seed,
        scheme=scheme,
        sweep=sweep,
        p_max_dbm=config.max_power_dbm,
        lqr_budget=float(config.lqr_budgets[0]),
        status="infeasible_budget",
        sum_rate=math.nan,
    )


def run_point(
    config: ScenarioConfig,
    schemes: Sequence[str],
    sweep: str,
    geometry=None,
    warm: driver.AoResult | None = None,
):
    """All requested schemes at one configuration.

    Returns (records, ao_result or None, geometry).  The baselines are solved
    first and reused as AO starting points.
    """
    seed = config.seed
    try:
        R_min = driver.rate_thresholds(config)
    except control.InfeasibleBudgetError:
        return [_budget_failure(config, seed, sweep, s) for s in schemes], None, geometry
    if geometry is None:
        geometry = driver.setup(config).geometry
    prob = driver.Problem(config, geometry, R_min)
    needed = set(schemes)
    if "ao" in schemes:
        mode = config.ao.init_placement
        needed |= {"fap", "rap"} if mode == "best" else {mode}
    results: dict[str, driver.AoResult] = {}
    records = []
    for scheme in ("fap", "rap", "ao"):
        if scheme not in needed:
            continue
        t0 = time.perf_counter()
        if scheme == "ao":
            res = driver.alternating_optimize(config, prob=prob, warm_start=warm, baselines=results)
        else:
            res = driver.run_scheme(scheme, config, prob)
        elapsed = time.perf_counter() - t0
        results[scheme] = res
        if scheme in schemes:
            records.append(_record(res, config, seed, sweep, elapsed))
    return records, results.get("ao"), geometry


def run(config: ScenarioConfig, seed: int, scheme: str) -> ExperimentRecord:
    cfg = config.replace(seed=seed)
    records, _, _ = run_point(cfg, (scheme,), "single")
    return records[0]


def _sweep_seed(args) -> list[ExperimentRecord]:
    kind, config, seed, points, schemes = args
    cfg0 = config.replace(seed=seed)
    geometry, warm, out = None, None, []
    for x in sorted(points):
        cfg = cfg0.replace(max_power_dbm=float(x)) if kind == "power" else cfg0.with_lqr_budget(float(x))
        records, ao, geometry = run_point(cfg, schemes, kind, geometry, warm)
        if ao is not None and ao.feasible:
            warm = ao
        out.extend(records)
    return out


def _fan_out(tasks, jobs: int) -> list[ExperimentRecord]:
    if jobs <= 1 or len(tasks) <= 1:
        chunks = [_sweep_seed(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_sweep_seed, tasks))
    return sort_records(r for c in chunks for r in c)


def sweep_power(config: ScenarioConfig, seeds: Sequence[int], dbm_list=DEFAULT_DBM, schemes=SCHEMES, jobs: int = 1):
    if not len(dbm_list):
        raise ValueError("empty power list")
    return _fan_out([("power", config, s, tuple(dbm_list), tuple(schemes)) for s in seeds], jobs)


def lqr_budgets(config: ScenarioConfig, ratios=DEFAULT_RATIOS) -> list[float]:
    """Budgets as multiples of the first plant's minimum achievable cost."""
    plant = config.cav_plants[0] if config.num_cavs else config.plants[0]
    ao = config.ao
    S, M = control.solve_dare_lqr(plant, ao.dare_tol, ao.dare_max_iters)
    _, _, Sigma = control.solve_dare_filter(plant, ao.dare_tol, ao.dare_max_iters)
    _, l_min, _ = control.aux_matrices(plant, S, M, Sigma, config.entropy_clamp)
    return [float(r) * l_min for r in ratios]


def sweep_lqr(config: ScenarioConfig, seeds: Sequence[int], budgets=None, schemes=SCHEMES, jobs: int = 1):
    budgets = lqr_budgets(config) if budgets is None else list(budgets)
    if not budgets:
        raise ValueError("empty budget list")
    return _fan_out([("lqr", config, s, tuple(budgets), tuple(schemes)) for s in seeds], jobs)


# ---------------------------------------------------------------------------
# outputs


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_bytes(buf.getvalue().encode("utf-8"))


def read_records(path: Path) -> list[ExperimentRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [row_to_record(r) for r in csv.DictReader(fh)]


def _x_of(rec: ExperimentRecord) -> float:
    return rec.lqr_budget if rec.sweep == "lqr" else rec.p_max_dbm


def summarise(records: Sequence[ExperimentRecord]):
    """Rows of (scheme, sweep, x, n, n_feasible, mean, stderr) over feasible runs."""
    groups: dict[tuple, list[float]] = {}
    counts: dict[tuple, int] = {}
    for r in sort_records(records):
        key = (r.scheme, r.sweep, _x_of(r))
        counts[key] = counts.get(key, 0) + 1
        vals = groups.setdefault(key, [])
        if math.isfinite(r.sum_rate):
            vals.append(r.sum_rate)
    out = []
    for key in groups:
        vals = np.array(groups[key])
        mean = float(vals.mean()) if vals.size else math.nan
        se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else math.nan
        out.append((*key, counts[key], int(vals.size), mean, se))
    return out


SUMMARY_COLUMNS = ("scheme", "sweep", "x", "n", "n_feasible", "mean_sum_rate", "stderr")


def plot_summary(summary, sweep: str, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "maiscc"
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    labels = {"ao": "AO (movable)", "rap": "random positions", "fap": "fixed grid"}
    markers = {"ao": "o", "rap": "s", "fap": "^"}
    for scheme in SCHEMES:
        pts = [(x, m) for s, sw, x, _, _, m, _ in summary if s == scheme and sw == sweep]
        if pts:
            xs, ms = zip(*pts)
            ax.plot(xs, ms, marker=markers[scheme], label=labels[scheme])
    ax.set_xlabel("max transmit power (dBm)" if sweep == "power" else "LQR cost budget")
    ax.set_ylabel("mean GU sum rate (bit/s/Hz)")
    if sweep == "lqr":
        ax.set_xscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def code_version() -> str:
    try:
        from importlib.metadata import version

        return version("artifact")
    except Exception:  # not installed
        return "unknown"


def emit_outputs(records: Sequence[ExperimentRecord], out_dir, config: ScenarioConfig | None = None, seeds=()) -> None:
    """records.csv, summary.csv, timings.csv, per-sweep SVGs and run_meta.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = sort_records(records)
    write_csv(out / "records.csv", COLUMNS, (record_to_row(r) for r in records))
    summary = summarise(records)
    write_csv(
        out / "summary.csv",
        SUMMARY_COLUMNS,
        ([s, sw, _fmt(x), str(n), str(k), _fmt(m), _fmt(se)] for s, sw, x, n, k, m, se in summary),
    )
    write_csv(
        out / "timings.csv",
        ("seed", "scheme", "sweep", "x", "runtime_seconds"),
        ([str(r.seed), r.scheme, r.sweep, _fmt(_x_of(r)), f"{r.runtime_seconds:.3f}"] for r in records),
    )
    for sweep, name in (("power", "fig_power.svg"), ("lqr", "fig_lqr.svg")):
        if any(r.sweep == sweep for r in records):
            plot_summary(summary, sweep, out / name)
    meta = {
        "config_sha256": config.digest() if config is not None else None,
        "seeds": [int(s) for s in seeds],
        "code_version": code_version(),
        "columns": list(COLUMNS),
    }
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# benchmark


def bench(config: ScenarioConfig) -> list[tuple[str, float]]:
    """Wall-clock seconds of the main building blocks at ``config``."""
    from . import beamforming as bf
    from . import pso
    from .channel import build_channel_set
    from .scenario import rng_stream

    timings = []

    def timed(name, fn):
        t0 = time.perf_counter()
        out = fn()
        timings.append((name, time.perf_counter() - t0))
        return out

    plant = config.cav_plants[0] if config.num_cavs else config.plants[0]
    timed("dare_pair", lambda: control.derive(plant))
    prob = timed("setup", lambda: driver.setup(config))
    channels = build_channel_set(prob.geometry, driver.fap_placement(config))
    X0 = timed("initial_feasible", lambda: bf.initial_feasible(channels, config, prob.R_min))
    res = timed("sca_solve", lambda: bf.sca_solve(channels, config, prob.R_min, X0))
    ex = bf.rank_one_extract(res.X, channels, config, prob.R_min)
    timed(
        "pso",
        lambda: pso.optimize_positions(
            config, prob.geometry, ex.beams, prob.R_min, rng_stream(config.seed, "pso"), channels.placement
        ),
    )
    timed("ao_run", lambda: driver.alternating_optimize(config, prob=prob))
    return timings


# ---------------------------------------------------------------------------
# CLI


def parse_seeds(text: str) -> list[int]:
    """``"0-19"``, ``"1,4,7"`` or a mix such as ``"0-3,10"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("no seeds given")
    return seeds


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="maiscc", description="Movable-antenna ISCC simulator")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="YAML scenario file (defaults if omitted)")
        sp.add_argument("--out", default="results", help="output directory")

    r = sub.add_parser("run", help="one scheme, one seed")
    common(r)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--scheme", choices=SCHEMES, default="ao")

    for name, helptext in (("sweep-power", "sum rate versus max power"), ("sweep-lqr", "sum rate versus LQR budget")):
        s = sub.add_parser(name, help=helptext)
        common(s)
        s.add_argument("--seeds", default="0-19")
        s.add_argument("--scheme", choices=SCHEMES, action="append", help="repeatable; default all")
        s.add_argument("--jobs", type=int, default=1)
        if name == "sweep-power":
            s.add_argument("--dbm", type=_floats, default=list(DEFAULT_DBM), help="comma list, dBm")
        else:
            s.add_argument("--ratios", type=_floats, default=list(DEFAULT_RATIOS), help="multiples of the minimum cost")
            s.add_argument("--budgets", type=_floats, help="absolute budgets (override --ratios)")

    b = sub.add_parser("bench", help="time the main building blocks")
    common(b)
    b.add_argument("--seed", type=int, default=0)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        config = load_config(args.config) if args.config else ScenarioConfig()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return 2
    try:
        if args.command == "run":
            rec = run(config, args.seed, args.scheme)
            emit_outputs([rec], args.out, config.replace(seed=args.seed), [args.seed])
            print(",".join(COLUMNS))
            print(",".join(record_to_row(rec)))
            return 0 if rec.status in ("converged", "max_iters") else 1
        if args.command in ("sweep-power", "sweep-lqr"):
            seeds = parse_seeds(args.seeds)
            schemes = tuple(args.scheme) if args.scheme else SCHEMES
            if args.command == "sweep-power":
                records = sweep_power(config, seeds, args.dbm, schemes, args.jobs)
            else:
                budgets = args.budgets if args.budgets else lqr_budgets(config, args.ratios)
                records = sweep_lqr(config, seeds, budgets, schemes, args.jobs)
            emit_outputs(records, args.out, config, seeds)
            for row in summarise(records):
                print("{:<4} {:<6} x={:<10.4g} n={:<3} feasible={:<3} mean={:.4f}".format(*row[:6]))
            return 0
        if args.command == "bench":
            for name, secs in bench(config.replace(seed=args.seed)):
                print(f"{name:<18}{secs:9.3f} s")
            return 0
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InfeasibleScenarioError, control.ControlError, RuntimeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 1
