"""Parameter sweeps over protocol x n_nodes x n_senders x pa x seed."""
from __future__ import annotations

import csv
import dataclasses
import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Iterable, Optional, TextIO

from .config import ConfigError, SweepSpec
from .engine import ScenarioConfig, run
from .metrics import CSV_FIELDS, MetricsReport, collect, csv_row, mean_std, relative_messages

SUMMARY_METRICS = ("msgs_total", "delivery_ratio", "far_edge_delay_ms", "coverage_time_ms",
                   "relative_pct")
SUMMARY_HEADER = "# relative_pct is seed-paired: each run is divided by the baseline run with the same n_nodes, n_senders and seed"


def cell_configs(spec: SweepSpec) -> list[ScenarioConfig]:
    out = []
    for proto, n, k, pa, seed in itertools.product(
            spec.protocol, spec.n_nodes, spec.n_senders, spec.pa, spec.seeds):
        params = dataclasses.replace(spec.base.params, pa=pa)
        out.append(spec.base.replace(protocol=proto, n_nodes=n, n_senders=k,
                                     params=params, seed=seed))
    return out


def run_one(cfg: ScenarioConfig) -> tuple[MetricsReport, dict]:
    log = run(cfg)
    return collect(log), log.meta


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CTDSIM_THREADS", "1")))
    except ValueError:
        return 1


def run_sweep(spec: SweepSpec, workers: Optional[int] = None) -> list[dict]:
    """Execute every cell and return CSV rows in axis order."""
    spec.validate()
    configs = cell_configs(spec)
    # baseline ignores pa, so its runs are shared across pa values
    unique: dict = {}
    for cfg in configs:
        unique.setdefault(_run_id(cfg), cfg)
    workers = workers or _threads()
    todo = list(unique.values())
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, todo))
    else:
        results = [run_one(c) for c in todo]
    done = {_run_id(c): r for c, r in zip(todo, results)}

    rows = []
    for cfg in configs:
        report, meta = done[_run_id(cfg)]
        meta = dict(meta, pa=cfg.params.pa)
        rel = None
        if spec.wants_relative:
            base = done.get(_baseline_id(cfg))
            if base is None:
                raise ConfigError(f"no baseline run for n_nodes={cfg.n_nodes}, "
                                  f"n_senders={cfg.n_senders}, seed={cfg.seed}")
            if base[0].msgs_total > 0:
                rel = relative_messages(report, base[0])
        rows.append(csv_row(report, meta, rel))
    return rows


def _run_id(cfg: ScenarioConfig) -> tuple:
    pa = None if cfg.protocol == "baseline" else cfg.params.pa
    return (cfg.protocol, cfg.n_nodes, cfg.n_senders, pa, cfg.seed)


def _baseline_id(cfg: ScenarioConfig) -> tuple:
    return ("baseline", cfg.n_nodes, cfg.n_senders, None, cfg.seed)


def _num(v: str) -> Optional[float]:
    return None if v == "" else float(v)


def summarize(rows: Iterable[dict]) -> list[dict]:
    """Mean and sample stddev of each metric per (protocol, n_nodes, n_senders, pa) cell.

    ``relative_pct`` is recomputed from the rows themselves, pairing each
    run with the baseline row of the same ``n_nodes``, ``n_senders`` and
    ``seed``.
    """
    rows = list(rows)
    baselines = {(r["n_nodes"], r["n_senders"], r["seed"]): r
                 for r in rows if r["protocol"] == "baseline"}
    cells: dict = {}
    for r in rows:
        cells.setdefault((r["protocol"], r["n_nodes"], r["n_senders"], r["pa"]), []).append(r)
    out = []
    for (proto, n, k, pa), members in cells.items():
        summary = {"protocol": proto, "n_nodes": n, "n_senders": k, "pa": pa,
                   "n_runs": len(members)}
        rel = []
        if baselines:
            for r in members:
                b = baselines.get((r["n_nodes"], r["n_senders"], r["seed"]))
                if b is None:
                    raise ValueError(f"unpaired row: no baseline for n_nodes={n}, "
                                     f"n_senders={k}, seed={r['seed']}")
                if float(b["msgs_total"]) > 0:
                    rel.append(100.0 * float(r["msgs_total"]) / float(b["msgs_total"]))
        for m in SUMMARY_METRICS:
            if m == "relative_pct":
                vals = rel
            else:
                vals = [x for x in (_num(r[m]) for r in members) if x is not None]
            mean, sd = mean_std(vals)
            summary[f"{m}_mean"] = mean
            summary[f"{m}_sd"] = sd
        summary["disseminated_rate"] = sum(r["disseminated"] == "1" for r in members) / len(members)
        summary["far_edge_reached_rate"] = sum(r["far_edge_delay_ms"] != "" for r in members) / len(members)
        out.append(summary)
    return out


SUMMARY_FIELDS = (
    ["protocol", "n_nodes", "n_senders", "pa", "n_runs"]
    + [f"{m}_{s}" for m in SUMMARY_METRICS for s in ("mean", "sd")]
    + ["disseminated_rate", "far_edge_reached_rate"]
)


def write_rows(rows: list[dict], stream: TextIO, fields=CSV_FIELDS, header: Optional[str] = None) -> None:
    if header:
        stream.write(header + "\n")
    w = csv.DictWriter(stream, fieldnames=list(fields), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _cell(r[k]) for k in fields})


def read_rows(stream: TextIO) -> list[dict]:
    lines = [ln for ln in stream if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _cell(v) -> str:
    if isinstance(v, float):
        return "" if v != v else f"{v:.6g}"
    return str(v)


def format_table(summary: list[dict]) -> str:
    """Fixed-width text table of the headline metrics."""
    head = ("protocol", "nodes", "senders", "pa", "runs", "msgs", "rel%", "ratio",
            "far_ms", "cover_ms", "diss")
    lines = ["{:<12}{:>6}{:>8}{:>6}{:>5}{:>10}{:>8}{:>7}{:>9}{:>10}{:>6}".format(*head)]
    for s in summary:
        def f(m, fmt):
            v = s[f"{m}_mean"]
            return "-" if v != v else format(v, fmt)
        lines.append("{:<12}{:>6}{:>8}{:>6}{:>5}{:>10}{:>8}{:>7}{:>9}{:>10}{:>6}".format(
            s["protocol"], s["n_nodes"], s["n_senders"], s["pa"], s["n_runs"],
            f("msgs_total", ".1f"), f("relative_pct", ".1f"), f("delivery_ratio", ".3f"),
            f("far_edge_delay_ms", ".0f"), f("coverage_time_ms", ".0f"),
            format(s["disseminated_rate"], ".2f")))
    return "\n".join(lines)
