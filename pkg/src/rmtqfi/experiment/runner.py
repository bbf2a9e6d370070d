"""Run orchestration: worker pool, deterministic merge, CSV and manifest output."""
from __future__ import annotations

import csv
import json
import logging
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, is_dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from .config import ExperimentConfig, with_model_value
from .scenarios import RealizationResult, run_realization

log = logging.getLogger(__name__)

FAILURE_FRACTION = 0.2
WORKERS_ENV = "RMTQFI_WORKERS"
FLOAT_FMT = "%.16e"


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return FLOAT_FMT % float(v)


def write_csv(path: Path, table: dict[str, np.ndarray]) -> None:
    """UTF-8, LF endings, header row, 17 significant digits."""
    cols = list(table)
    arrays = [np.asarray(table[c]) for c in cols]
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise ValueError(f"ragged table for {path.name}")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i in range(n):
            w.writerow([_fmt(a[i]) for a in arrays])


def read_csv(path: Path) -> dict[str, np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {c: np.array([float(r[j]) for r in body]) for j, c in enumerate(header)}


def aggregate(results: list[RealizationResult], key: str) -> dict[str, np.ndarray]:
    """Mean and standard error per row across successful realizations."""
    ok = [r for r in results if r.ok]
    if not ok:
        return {}
    base = ok[0].table
    out = {key: np.asarray(base[key])}
    for c in base:
        if c == key:
            continue
        stack = np.vstack([r.table[c] for r in ok])
        out[f"mean_{c}"] = stack.mean(axis=0)
        out[f"stderr_{c}"] = (stack.std(axis=0, ddof=1) / np.sqrt(len(ok))) if len(ok) > 1 \
            else np.full(stack.shape[1], np.nan)
    if "dpsi_norm2" in base:
        n2 = np.vstack([r.table["dpsi_norm2"] for r in ok]).mean(axis=0)
        ov = (np.vstack([r.table["overlap_re"] for r in ok]) + 1j * np.vstack([r.table["overlap_im"] for r in ok]))
        out["F_Q_exact_from_mean_terms"] = 4.0 * (n2 - np.abs(ov.mean(axis=0)) ** 2)
    return out


def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _key_column(scenario: str) -> str:
    return {"rmt-microcanonical": "index", "correlators": "delta_E"}.get(scenario, "t")


def _mean_derived(results: list[RealizationResult]) -> dict[str, float]:
    ok = [r for r in results if r.ok]
    out = {}
    if not ok:
        return out
    for name, val in ok[0].derived.items():
        if isinstance(val, (int, float, np.floating, np.integer)) and not isinstance(val, bool):
            vals = np.array([float(r.derived[name]) for r in ok])
            out[name] = float(vals.mean())
            if len(vals) > 1:
                out[f"{name}_stderr"] = float(vals.std(ddof=1) / np.sqrt(len(vals)))
        else:
            out[name] = val
    return out


def _base_manifest(cfg: ExperimentConfig) -> dict:
    return {
        "scenario": cfg.scenario,
        "config": cfg.raw,
        "resolved": {
            "model": _jsonable(cfg.model),
            "times": _jsonable(cfg.times),
            "initial_state": _jsonable(cfg.initial_state),
            "options": _jsonable(cfg.options),
            "n_realizations": cfg.n_realizations,
            "master_seed": cfg.seed,
            "sweep_probe_time": cfg.sweep_probe_time,
        },
        "seeds": [{"realization": k, "entropy": cfg.seed, "spawn_key": [k]} for k in range(cfg.n_realizations)],
        "software": {"rmtqfi": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "started": datetime.now(timezone.utc).isoformat(),
    }


def _write_manifest(path: Path, manifest: dict) -> None:
    with open(path / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=False)
        fh.write("\n")


def execute(cfg: ExperimentConfig, workers: int) -> list[RealizationResult]:
    """Run all realizations; results come back ordered by realization index."""
    ks = range(cfg.n_realizations)
    if workers <= 1 or cfg.n_realizations == 1:
        results = [run_realization(cfg, k) for k in ks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_realization, [cfg] * cfg.n_realizations, ks))
    return sorted(results, key=lambda r: r.index)


def run(cfg: ExperimentConfig, *, dry_run: bool = False, workers: int | None = None,
        output_dir: str | Path | None = None) -> int:
    """Execute ``cfg`` and write its outputs. Returns the process exit code."""
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _base_manifest(cfg)
    if dry_run:
        manifest["dry_run"] = True
        _write_manifest(out, manifest)
        return 0
    nw = workers or cfg.workers or default_workers()
    t0 = time.perf_counter()
    results = execute(cfg, nw)
    wall = time.perf_counter() - t0
    key = _key_column(cfg.scenario)
    for r in results:
        if r.ok:
            write_csv(out / f"realization_{r.index:03d}.csv", r.table)
            for name, tab in r.extra_tables.items():
                write_csv(out / f"{name}_{r.index:03d}.csv", tab)
        else:
            log.warning("realization %d failed: %s", r.index, r.error.splitlines()[0])
    agg = aggregate(results, key)
    if agg:
        write_csv(out / "aggregate.csv", agg)
    failed = [r.index for r in results if not r.ok]
    manifest.update(
        workers=nw,
        wall_clock_seconds=wall,
        finished=datetime.now(timezone.utc).isoformat(),
        realizations=[{"index": r.index, "status": "ok" if r.ok else "failed", "derived": r.derived,
                       **({"error": r.error} if r.error else {})} for r in results],
        derived=_mean_derived(results),
        failed=failed,
    )
    _write_manifest(out, manifest)
    if cfg.emit_plots and agg:
        emit_plot_script(out, cfg.scenario, key)
    frac = len(failed) / len(results)
    return 1 if frac > FAILURE_FRACTION else 0


def _monotone(vals, increasing: bool) -> bool:
    v = np.asarray(vals, dtype=float)
    if np.any(~np.isfinite(v)):
        return False
    d = np.diff(v)
    return bool(np.all(d > 0) if increasing else np.all(d < 0))


def sweep(cfg: ExperimentConfig, *, dry_run: bool = False, workers: int | None = None,
          output_dir: str | Path | None = None) -> int:
    """One run per axis value plus ``summary.csv`` and a monotonicity report."""
    if cfg.sweep is None:
        raise ValueError("config has no sweep section")
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    sp = cfg.sweep
    codes = []
    rows = []
    for i, value in enumerate(sp.values):
        sub = out / f"point_{i:02d}"
        point = with_model_value(cfg, sp.parameter, value, str(sub))
        codes.append(run(point, dry_run=dry_run, workers=workers))
        if dry_run:
            continue
        derived = json.loads((sub / "manifest.json").read_text())["derived"]
        rows.append({
            "value": float(value),
            "F_Q_probe": derived.get("F_Q_probe", np.nan),
            "F_Q_rmt_probe": derived.get("F_Q_rmt_probe", np.nan),
            "gamma_hat": derived.get("gamma_hat", derived.get("gamma", np.nan)),
            "median_rel_dev": derived.get("median_rel_dev", np.nan),
        })
    report = {"parameter": sp.parameter, "values": list(sp.values), "probe_time": sp.probe_time,
              "exit_codes": codes, "dry_run": dry_run}
    if rows:
        table = {k: np.array([float(r[k]) if not isinstance(r[k], str) else np.nan for r in rows]) for k in rows[0]}
        write_csv(out / "summary.csv", table)
        report["monotonicity"] = {
            "gamma_hat_increasing": _monotone(table["gamma_hat"], True),
            "F_Q_probe_decreasing": _monotone(table["F_Q_probe"], False),
            "median_rel_dev_decreasing": _monotone(table["median_rel_dev"], False),
        }
        report["summary"] = rows
    with open(out / "sweep.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(report), fh, indent=2)
        fh.write("\n")
    return max(codes) if codes else 0


def report(run_dir: str | Path) -> str:
    """Human-readable summary of a finished run or sweep directory."""
    d = Path(run_dir)
    lines = []
    if (d / "sweep.json").exists():
        sw = json.loads((d / "sweep.json").read_text())
        lines.append(f"sweep over {sw['parameter']}: {sw['values']}")
        for k, v in sw.get("monotonicity", {}).items():
            lines.append(f"  {k}: {v}")
        for row in sw.get("summary", []):
            lines.append("  " + ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                                          for k, v in row.items()))
        return "\n".join(lines)
    m = json.loads((d / "manifest.json").read_text())
    lines.append(f"scenario: {m['scenario']}")
    if m.get("dry_run"):
        lines.append("dry run: no computation")
        return "\n".join(lines)
    n = len(m["realizations"])
    lines.append(f"realizations: {n} ({len(m['failed'])} failed), wall clock {m['wall_clock_seconds']:.1f} s")
    for k, v in m["derived"].items():
        lines.append(f"  {k}: {v:.6g}" if isinstance(v, float) else f"  {k}: {v}")
    return "\n".join(lines)


_PLOT_TEMPLATE = '''"""Plot {csv} from this run directory. Needs matplotlib."""
import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
with open(here / "{csv}", newline="") as fh:
    rows = list(csv.DictReader(fh))
x = [float(r["{key}"]) for r in rows]
fig, ax = plt.subplots()
for col in rows[0]:
    if col.startswith("mean_"):
        ax.plot(x, [float(r[col]) for r in rows], label=col[5:])
{scales}ax.set_xlabel("{key}")
ax.legend()
fig.savefig(here / "{stem}.png", dpi=150)
if "--show" in sys.argv:
    plt.show()
'''


def emit_plot_script(out: Path, scenario: str, key: str) -> None:
    scales = 'ax.set_xscale("log")\nax.set_yscale("log")\n' if key == "t" else ""
    text = _PLOT_TEMPLATE.format(csv="aggregate.csv", key=key, stem=f"plot_{scenario}", scales=scales)
    (out / "plot_aggregate.py").write_text(text, encoding="utf-8")
