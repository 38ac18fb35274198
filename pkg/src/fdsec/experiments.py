"""Batch experiment runner: seed/power sweeps, mode comparison, QoS runs.

One row is produced per (seed, power, mode, qos target).  Rows carry the
achieved max-min secrecy rate, per-user rates, the time split, iteration
and timing counters, and the outcome of the re-verification checks.
Results are written as a CSV table plus a JSON summary whose aggregates
are recomputed from the very rows written to disk, so re-deriving them
from the CSV reproduces the summary exactly.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import channels, optimizer
from .config import SystemConfig, config_from_mapping, parse_kv_file
from .rates import NATS_TO_BPS

DEFAULT_SWEEP_DBM = (10.0, 14.0, 18.0, 22.0, 26.0, 30.0)


@dataclass
class ExperimentSpec:
    """One batch: a power sweep crossed with seeds, modes and QoS targets."""

    base: SystemConfig = field(default_factory=SystemConfig)
    pbs_dbm_sweep: tuple[float, ...] = DEFAULT_SWEEP_DBM
    seeds: tuple[int, ...] = tuple(range(20))
    modes: tuple[str, ...] = ("proposed-fd",)
    qos_bps: tuple[float, ...] = ()
    out_dir: str = "results"
    workers: int = 1
    max_iters: int = 50
    rel_tol: float = 1e-4
    mc_samples: int = 10_000

    def __post_init__(self) -> None:
        if not self.pbs_dbm_sweep or not self.seeds:
            raise ValueError("sweep and seed lists must be nonempty")
        for m in self.modes:
            if m not in optimizer.MODES:
                raise ValueError(f"unknown mode {m!r}")


@dataclass
class ResultRow:
    seed: int
    mode: str
    pbs_dbm: float
    qos_bps: float | None
    maxmin_sr_bps: float
    sr_dl: dict
    sr_ul: dict
    tau1: float
    tau2: float
    iters: int
    ms: float
    outage_ok: bool
    status: str = "ok"


def spec_from_file(path: str) -> ExperimentSpec:
    kv = parse_kv_file(Path(path).read_text(encoding="utf-8"))
    spec_keys = {
        "pbs_dbm_sweep", "seeds", "modes", "qos_bps", "out_dir", "workers",
        "max_iters", "rel_tol", "mc_samples",
    }
    spec_kv = {k: v for k, v in kv.items() if k in spec_keys}
    cfg_kv = {k: v for k, v in kv.items() if k not in spec_keys}
    base = config_from_mapping(cfg_kv)
    updates: dict = {"base": base}
    for key in ("out_dir",):
        if key in spec_kv:
            updates[key] = str(spec_kv[key])
    for key in ("workers", "max_iters", "mc_samples"):
        if key in spec_kv:
            updates[key] = int(spec_kv[key])
    if "rel_tol" in spec_kv:
        updates["rel_tol"] = float(spec_kv["rel_tol"])
    if "pbs_dbm_sweep" in spec_kv:
        v = spec_kv["pbs_dbm_sweep"]
        updates["pbs_dbm_sweep"] = tuple(float(x) for x in (v if isinstance(v, list) else [v]))
    if "seeds" in spec_kv:
        v = spec_kv["seeds"]
        updates["seeds"] = tuple(int(x) for x in (v if isinstance(v, list) else [v]))
    if "modes" in spec_kv:
        v = spec_kv["modes"]
        updates["modes"] = tuple(str(x) for x in (v if isinstance(v, list) else [v]))
    if "qos_bps" in spec_kv:
        v = spec_kv["qos_bps"]
        updates["qos_bps"] = tuple(float(x) for x in (v if isinstance(v, list) else [v]))
    return ExperimentSpec(**updates)


def run_single(
    config: SystemConfig,
    seed: int,
    mode: str,
    qos_bps: float | None = None,
    *,
    max_iters: int = 50,
    rel_tol: float = 1e-4,
    mc_samples: int = 10_000,
):
    """One full design on one channel realization; returns (row, report)."""
    cfg = config.with_seed(seed)
    t0 = time.perf_counter()
    topo, ch = channels.generate(cfg)
    hd_ch = None
    if mode == "hd":
        hd_ch = channels.draw_channels(
            channels.hd_config(cfg), topo, np.random.default_rng((seed, 1))
        )
    opts = optimizer.SolverOptions(
        mode=mode,
        qos_ul_bps=qos_bps,
        max_iters=max_iters,
        rel_tol=rel_tol,
        mc_samples=mc_samples,
        validate_outage=mc_samples > 0,
    )
    design, trace, report = optimizer.run(cfg, ch, opts, hd_channels=hd_ch)
    ms = (time.perf_counter() - t0) * 1e3
    taus = list(report.tau) + [0.0]
    row = ResultRow(
        seed=seed,
        mode=mode,
        pbs_dbm=round(10.0 * math.log10(cfg.p_bs_max) + 30.0, 9),
        qos_bps=qos_bps,
        maxmin_sr_bps=float(report.maxmin_sr_bps),
        sr_dl={k: float(v) * NATS_TO_BPS for k, v in report.sr_dl.items()},
        sr_ul={k: float(v) * NATS_TO_BPS for k, v in report.sr_ul.items()},
        tau1=float(taus[0]),
        tau2=float(taus[1]),
        iters=report.iterations,
        ms=float(ms),
        outage_ok=report.outage.all_ok() if report.outage is not None else True,
        status="ok" if report.converged else "max-iters",
    )
    return row, report


def _row_task(args):
    config, seed, mode, qos, max_iters, rel_tol, mc_samples = args
    try:
        row, _ = run_single(
            config, seed, mode, qos,
            max_iters=max_iters, rel_tol=rel_tol, mc_samples=mc_samples,
        )
        return row
    except Exception as exc:  # keep the sweep alive, record the failure
        k, l = config.n_dl, config.n_ul
        return ResultRow(
            seed=seed,
            mode=mode,
            pbs_dbm=round(10.0 * math.log10(config.p_bs_max) + 30.0, 9),
            qos_bps=qos,
            maxmin_sr_bps=float("nan"),
            sr_dl={(i, kk): float("nan") for i in range(2) for kk in range(k)},
            sr_ul={(i, ll): float("nan") for i in range(2) for ll in range(l)},
            tau1=float("nan"),
            tau2=float("nan"),
            iters=0,
            ms=0.0,
            outage_ok=False,
            status=f"error: {type(exc).__name__}: {exc}",
        )


def _tasks(spec: ExperimentSpec, qos_list):
    for pbs in spec.pbs_dbm_sweep:
        cfg = spec.base.with_bs_power_dbm(pbs)
        for seed in spec.seeds:
            for mode in spec.modes:
                for qos in qos_list:
                    yield (cfg, seed, mode, qos, spec.max_iters, spec.rel_tol, spec.mc_samples)


def run_experiment(spec: ExperimentSpec) -> list[ResultRow]:
    """Power sweep without QoS targets; writes CSV + JSON summary."""
    rows = _run_rows(spec, [None])
    write_results(spec, rows)
    return rows


def run_qos_experiment(spec: ExperimentSpec) -> list[ResultRow]:
    """Power sweep with per-uplink-user secrecy-rate requirements."""
    if not spec.qos_bps:
        raise ValueError("spec.qos_bps must be nonempty for a QoS experiment")
    if any(q < 0 for q in spec.qos_bps):
        raise ValueError("QoS targets must be nonnegative")
    rows = _run_rows(spec, list(spec.qos_bps))
    write_results(spec, rows)
    return rows


def _run_rows(spec: ExperimentSpec, qos_list) -> list[ResultRow]:
    tasks = list(_tasks(spec, qos_list))
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(_row_task, tasks))
    else:
        rows = [_row_task(t) for t in tasks]
    rows.sort(key=lambda r: (r.pbs_dbm, r.mode, -1.0 if r.qos_bps is None else r.qos_bps, r.seed))
    return rows


# ---------------------------------------------------------------------------
# Output files.


def _user_columns(rows: list[ResultRow]) -> tuple[list, list]:
    dl_refs = sorted({ref for r in rows for ref in r.sr_dl})
    ul_refs = sorted({ref for r in rows for ref in r.sr_ul})
    return dl_refs, ul_refs


def csv_header(dl_refs, ul_refs) -> list[str]:
    cols = ["seed", "mode", "pbs_dbm", "qos_bps", "maxmin_sr_bps"]
    cols += [f"sr_dl_{i + 1}_{k + 1}" for (i, k) in dl_refs]
    cols += [f"sr_ul_{i + 1}_{l + 1}" for (i, l) in ul_refs]
    cols += ["tau1", "tau2", "iters", "ms", "outage_ok", "status"]
    return cols


def rows_to_csv(rows: list[ResultRow], path: Path) -> None:
    dl_refs, ul_refs = _user_columns(rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(csv_header(dl_refs, ul_refs))
        for r in rows:
            rec = [r.seed, r.mode, repr(r.pbs_dbm), "" if r.qos_bps is None else repr(r.qos_bps)]
            rec.append(repr(r.maxmin_sr_bps))
            rec += [repr(r.sr_dl.get(ref, float("nan"))) for ref in dl_refs]
            rec += [repr(r.sr_ul.get(ref, float("nan"))) for ref in ul_refs]
            rec += [repr(r.tau1), repr(r.tau2), r.iters, repr(r.ms), int(r.outage_ok), r.status]
            writer.writerow(rec)


def summarize(rows: list[ResultRow]) -> list[dict]:
    """Mean and normal-approximation CI per (power, mode, qos) cell."""
    cells: dict = {}
    for r in rows:
        cells.setdefault((r.pbs_dbm, r.mode, r.qos_bps), []).append(r.maxmin_sr_bps)
    out = []
    for (pbs, mode, qos), vals in sorted(
        cells.items(), key=lambda kv: (kv[0][0], kv[0][1], -1.0 if kv[0][2] is None else kv[0][2])
    ):
        arr = np.array([v for v in vals if not math.isnan(v)])
        n = arr.size
        mean = float(arr.mean()) if n else float("nan")
        std = float(arr.std(ddof=1)) if n > 1 else 0.0
        out.append(
            {
                "pbs_dbm": pbs,
                "mode": mode,
                "qos_bps": qos,
                "n": int(n),
                "n_failed": len(vals) - int(n),
                "mean_maxmin_sr_bps": mean,
                "ci95_halfwidth": 1.96 * std / math.sqrt(n) if n > 1 else 0.0,
            }
        )
    return out


def write_results(spec: ExperimentSpec, rows: list[ResultRow]) -> tuple[Path, Path]:
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    json_path = out / "summary.json"
    rows_to_csv(rows, csv_path)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump({"summary": summarize(rows)}, fh, indent=2)
    return csv_path, json_path


def read_rows_csv(path: Path) -> list[ResultRow]:
    """Parse a results CSV back into rows (floats round-trip exactly)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dl_cols = [(j, _ref_of(c)) for j, c in enumerate(header) if c.startswith("sr_dl_")]
        ul_cols = [(j, _ref_of(c)) for j, c in enumerate(header) if c.startswith("sr_ul_")]
        idx = {c: j for j, c in enumerate(header)}
        rows = []
        for rec in reader:
            rows.append(
                ResultRow(
                    seed=int(rec[idx["seed"]]),
                    mode=rec[idx["mode"]],
                    pbs_dbm=float(rec[idx["pbs_dbm"]]),
                    qos_bps=None if rec[idx["qos_bps"]] == "" else float(rec[idx["qos_bps"]]),
                    maxmin_sr_bps=float(rec[idx["maxmin_sr_bps"]]),
                    sr_dl={ref: float(rec[j]) for j, ref in dl_cols},
                    sr_ul={ref: float(rec[j]) for j, ref in ul_cols},
                    tau1=float(rec[idx["tau1"]]),
                    tau2=float(rec[idx["tau2"]]),
                    iters=int(rec[idx["iters"]]),
                    ms=float(rec[idx["ms"]]),
                    outage_ok=bool(int(rec[idx["outage_ok"]])),
                    status=rec[idx["status"]],
                )
            )
    return rows


def _ref_of(col: str) -> tuple[int, int]:
    parts = col.split("_")
    return (int(parts[2]) - 1, int(parts[3]) - 1)
