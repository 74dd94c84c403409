"""Ablation runs: every (variant, seed, episode) cell, raw CSV, aggregated report.

Aggregation follows the table layout: Non-Mem SR averages steps 1-3,
Memory SR steps 4-5. Means are taken per seed first; the headline std is
over those per-seed means (population std). The std over all individual
episodes is reported alongside.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from ..env import MEMORY_STEPS, N_STEPS, run_episode
from .config import RunConfig

log = logging.getLogger(__name__)

CSV_FIELDS = ("variant", "seed", "episode", "step", "success", "final_distance_m")
NON_MEMORY_STEPS = tuple(s for s in range(1, N_STEPS + 1) if s not in MEMORY_STEPS)


@dataclass(frozen=True)
class Row:
    variant: str
    seed: int
    episode: int
    step: int
    success: bool
    final_distance_m: float


def _run_cell(args: tuple[RunConfig, str, int, int]) -> tuple[str, int, int, Optional[list[Row]], Optional[str]]:
    cfg, variant, seed, episode = args
    try:
        rec = run_episode(variant, seed, episode, cfg.task, cfg.agent, cfg.chain)
    except Exception as exc:  # flagged in the report, the rest of the run continues
        return variant, seed, episode, None, f"{type(exc).__name__}: {exc}"
    rows = [Row(variant, seed, episode, s.step, s.success, s.final_distance) for s in rec.steps]
    return variant, seed, episode, rows, None


def run_cells(cfg: RunConfig) -> tuple[list[Row], list[dict]]:
    cells = [(cfg, v, s, e) for v in cfg.variants for s in cfg.seeds for e in range(cfg.episodes)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_cell, cells, chunksize=max(1, len(cells) // (4 * cfg.workers))))
    else:
        results = [_run_cell(c) for c in cells]
    rows: list[Row] = []
    failed = []
    # pool.map preserves submission order, so output never depends on scheduling
    for variant, seed, episode, cell_rows, error in results:
        if error is not None:
            log.error("cell %s/%s/%s failed: %s", variant, seed, episode, error)
            failed.append({"variant": variant, "seed": seed, "episode": episode, "error": error})
        else:
            rows.extend(cell_rows)
    return rows, failed


def rows_to_csv(rows: Iterable[Row]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for r in rows:
        writer.writerow([r.variant, r.seed, r.episode, r.step, int(r.success), repr(r.final_distance_m)])
    return buf.getvalue()


def rows_from_csv(text: str) -> list[Row]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_FIELDS:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    return [
        Row(r["variant"], int(r["seed"]), int(r["episode"]), int(r["step"]), r["success"] == "1", float(r["final_distance_m"]))
        for r in reader
    ]


def _std(values: list[float]) -> float:
    return float(np.std(values)) if len(values) > 1 else 0.0


def aggregate(rows: list[Row], variants: Optional[list[str]] = None, seeds: Optional[list[int]] = None) -> dict:
    """Table-style summary computed from raw per-step rows only."""
    variants = variants or list(dict.fromkeys(r.variant for r in rows))
    seeds = seeds or sorted({r.seed for r in rows})
    # success[variant][seed][episode] -> {step: bool}
    table: dict = {}
    for r in rows:
        table.setdefault(r.variant, {}).setdefault(r.seed, {}).setdefault(r.episode, {})[r.step] = r.success
    out = []
    for v in variants:
        by_seed = table.get(v, {})
        seed_rows = {}
        non_mem_seed, mem_seed, ep_non_mem, ep_mem = [], [], [], []
        step_hits = {s: [] for s in range(1, N_STEPS + 1)}
        for seed in seeds:
            episodes = by_seed.get(seed, {})
            if not episodes:
                continue
            eps = [episodes[e] for e in sorted(episodes)]
            per_ep_nm = [float(np.mean([ep[s] for s in NON_MEMORY_STEPS])) for ep in eps]
            per_ep_m = [float(np.mean([ep[s] for s in MEMORY_STEPS])) for ep in eps]
            nm, m = float(np.mean(per_ep_nm)), float(np.mean(per_ep_m))
            non_mem_seed.append(nm)
            mem_seed.append(m)
            ep_non_mem.extend(per_ep_nm)
            ep_mem.extend(per_ep_m)
            for s in step_hits:
                step_hits[s].extend(float(ep[s]) for ep in eps)
            seed_rows[str(seed)] = {
                "non_mem_sr": nm,
                "memory_sr": m,
                "per_step_sr": [float(np.mean([ep[s] for ep in eps])) for s in range(1, N_STEPS + 1)],
                "episodes": len(eps),
            }
        if not seed_rows:
            continue
        per_step = [float(np.mean(step_hits[s])) for s in range(1, N_STEPS + 1)]
        out.append(
            {
                "variant": v,
                "non_mem_sr": {"mean": float(np.mean(non_mem_seed)), "std": _std(non_mem_seed), "std_episodes": _std(ep_non_mem)},
                "memory_sr": {"mean": float(np.mean(mem_seed)), "std": _std(mem_seed), "std_episodes": _std(ep_mem)},
                "step5_sr": per_step[N_STEPS - 1],
                "per_step_sr": per_step,
                "per_seed": seed_rows,
            }
        )
    greedy = next((r for r in out if r["variant"] == "greedy"), None)
    for r in out:
        r["delta_vs_greedy"] = None if greedy is None else r["memory_sr"]["mean"] - greedy["memory_sr"]["mean"]
    return {
        "std_convention": "std over per-seed means (ddof=0); std_episodes is over all episodes",
        "seeds": list(seeds),
        "variants": out,
    }


def summary_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        ["variant", "non_mem_sr_mean", "non_mem_sr_std", "memory_sr_mean", "memory_sr_std", "delta_vs_greedy", "step5_sr"]
        + [f"step{s}_sr" for s in range(1, N_STEPS + 1)]
    )
    for r in report["variants"]:
        delta = "" if r["delta_vs_greedy"] is None else f"{r['delta_vs_greedy']:.3f}"
        w.writerow(
            [r["variant"], f"{r['non_mem_sr']['mean']:.3f}", f"{r['non_mem_sr']['std']:.3f}", f"{r['memory_sr']['mean']:.3f}",
             f"{r['memory_sr']['std']:.3f}", delta, f"{r['step5_sr']:.3f}"]
            + [f"{v:.3f}" for v in r["per_step_sr"]]
        )
    return buf.getvalue()


def format_table(report: dict) -> str:
    lines = [f"{'variant':<10} {'Non-Mem SR':>15} {'Memory SR':>15} {'delta':>8} {'Step 5':>7}"]
    for r in report["variants"]:
        nm, m = r["non_mem_sr"], r["memory_sr"]
        delta = "---" if r["delta_vs_greedy"] is None or r["variant"] == "greedy" else f"{r['delta_vs_greedy']:+.3f}"
        lines.append(
            f"{r['variant']:<10} {nm['mean']:>7.3f} ± {nm['std']:.3f} {m['mean']:>7.3f} ± {m['std']:.3f} {delta:>8} {r['step5_sr']:>7.3f}"
        )
    return "\n".join(lines)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def run_ablation(cfg: RunConfig, out_dir: Optional[Path] = None) -> dict:
    """Run all cells, write ``raw.csv``, ``report.json`` and ``summary.csv``; return the report."""
    rows, failed = run_cells(cfg)
    report = aggregate(rows, list(cfg.variants), list(cfg.seeds))
    report["episodes_per_seed"] = cfg.episodes
    report["failed_cells"] = failed
    report["blend_active"] = cfg.agent.oracle == "pixel" or cfg.agent.scorer == "hybrid+overlap"
    report["config"] = cfg.metadata()
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "raw.csv").write_text(rows_to_csv(rows))
        (out_dir / "report.json").write_text(dump_json(report))
        (out_dir / "summary.csv").write_text(summary_csv(report))
    return report
