"""Command-line front end.

Subcommands:

* ``run``      - execute an experiment spec file (power/seed/mode sweep),
  writing ``results.csv`` and ``summary.json``.
* ``single``   - solve one instance and dump the full iteration trace
  plus the resulting design as JSON.
* ``validate`` - re-verify a saved design: exact power/time feasibility
  and the Monte Carlo eavesdropper outage check.

The exit code is nonzero whenever a re-verification check fails.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import channels, experiments, optimizer, outage
from .config import SystemConfig, load_config, watts_to_dbm


def _complex_to_lists(arr) -> list:
    a = np.asarray(arr)
    return [a.real.tolist(), a.imag.tolist()]


def _complex_from_lists(pair) -> np.ndarray:
    return np.asarray(pair[0], dtype=float) + 1j * np.asarray(pair[1], dtype=float)


def design_to_json(design: optimizer.ModeDesign, config: SystemConfig, seed: int) -> dict:
    return {
        "mode": design.mode,
        "seed": seed,
        "eta_nats": design.eta,
        "config": {
            "n_dl": config.n_dl,
            "n_ul": config.n_ul,
            "n_eves": config.n_eves,
            "n_tx": config.n_tx,
            "n_rx": config.n_rx,
            "eve_antennas": list(config.eve_antennas),
            "p_bs_max_dbm": watts_to_dbm(config.p_bs_max),
            "p_ul_max_dbm": watts_to_dbm(config.p_ul_max[0][0]),
            "sigma_si_db": 10.0 * math.log10(config.sigma_si) if config.sigma_si > 0 else -300.0,
            "rician_k_db": config.rician_k_db,
            "noise_psd_dbm_hz": config.noise_psd_dbm_hz,
            "bandwidth_hz": config.bandwidth_hz,
            "cell_radius_m": config.cell_radius_m,
            "inner_radius_m": config.inner_radius_m,
            "min_bs_distance_m": config.min_bs_distance_m,
            "epsilon_dl": [list(row) for row in config.epsilon_dl],
            "epsilon_ul": [list(row) for row in config.epsilon_ul],
        },
        "slots": [
            {
                "w": _complex_to_lists(s.w),
                "v": None if s.v is None else _complex_to_lists(s.v),
                "rho": np.asarray(s.rho).tolist(),
                "alpha": s.alpha,
                "tau": s.tau,
                "beta_dl": np.asarray(s.beta_dl).tolist(),
                "beta_ul": np.asarray(s.beta_ul).tolist(),
                "gamma_dl": np.asarray(s.gamma_dl).tolist(),
                "gamma_ul": np.asarray(s.gamma_ul).tolist(),
                "dl_refs": [list(r) for r in s.dl_refs],
                "ul_refs": [list(r) for r in s.ul_refs],
            }
            for s in design.slots
        ],
    }


def design_from_json(doc: dict) -> tuple[optimizer.ModeDesign, SystemConfig, int]:
    c = doc["config"]
    from .config import config_from_mapping

    config = config_from_mapping(
        {
            "n_dl": c["n_dl"],
            "n_ul": c["n_ul"],
            "n_eves": c["n_eves"],
            "n_tx": c["n_tx"],
            "n_rx": c["n_rx"],
            "eve_antennas": c["eve_antennas"],
            "p_bs_max_dbm": c["p_bs_max_dbm"],
            "p_ul_max_dbm": c["p_ul_max_dbm"],
            "sigma_si_db": c["sigma_si_db"],
            "rician_k_db": c["rician_k_db"],
            "noise_psd_dbm_hz": c["noise_psd_dbm_hz"],
            "bandwidth_hz": c["bandwidth_hz"],
            "cell_radius_m": c["cell_radius_m"],
            "inner_radius_m": c["inner_radius_m"],
            "min_bs_distance_m": c["min_bs_distance_m"],
            "epsilon_dl": [e for row in c["epsilon_dl"] for e in row],
            "epsilon_ul": [e for row in c["epsilon_ul"] for e in row],
        }
    )
    slots = [
        optimizer.SlotDesign(
            w=_complex_from_lists(s["w"]),
            v=None if s["v"] is None else _complex_from_lists(s["v"]),
            rho=np.asarray(s["rho"], dtype=float),
            alpha=float(s["alpha"]),
            tau=float(s["tau"]),
            beta_dl=np.asarray(s["beta_dl"], dtype=float),
            beta_ul=np.asarray(s["beta_ul"], dtype=float),
            gamma_dl=np.asarray(s["gamma_dl"], dtype=float),
            gamma_ul=np.asarray(s["gamma_ul"], dtype=float),
            dl_refs=[tuple(r) for r in s["dl_refs"]],
            ul_refs=[tuple(r) for r in s["ul_refs"]],
        )
        for s in doc["slots"]
    ]
    design = optimizer.ModeDesign(mode=doc["mode"], slots=slots, eta=float(doc["eta_nats"]))
    return design, config, int(doc["seed"])


def _design_layouts(design: optimizer.ModeDesign, config: SystemConfig, seed: int):
    from .surrogates import proposed_layouts

    cfg = config.with_seed(seed)
    topo, ch = channels.generate(cfg)
    if design.mode == "proposed-fd":
        return proposed_layouts(ch.normalized(), cfg)
    if design.mode == "conventional-fd":
        return [optimizer.conventional_layout(ch.normalized(), cfg)]
    hd_ch = channels.draw_channels(
        channels.hd_config(cfg), topo, np.random.default_rng((seed, 1))
    )
    return list(optimizer.hd_layouts(hd_ch.normalized(), cfg))


def verify_design(design: optimizer.ModeDesign, config: SystemConfig, seed: int,
                  mc_samples: int = 10_000) -> dict:
    """Exact feasibility plus Monte Carlo outage for a saved design."""
    from .rates import group_tx_power

    layouts = _design_layouts(design, config, seed)
    bs_power = sum(s.tau * group_tx_power(s.w, s.v) for s in design.slots)
    tau_sum = sum(s.tau for s in design.slots)
    ul_ok = True
    for s, lay in zip(design.slots, layouts):
        for l in range(len(s.rho)):
            if s.tau * s.rho[l] ** 2 > lay.p_ul[l] * (1 + 1e-6):
                ul_ok = False
    rng = np.random.default_rng((seed, 0xABCD))
    out = outage.validate_design(design, layouts, mc_samples, rng)
    return {
        "bs_power_w": bs_power,
        "bs_budget_w": config.p_bs_max,
        "bs_power_ok": bs_power <= config.p_bs_max * (1 + 1e-6),
        "ul_power_ok": ul_ok,
        "tau_sum": tau_sum,
        "tau_ok": tau_sum <= 1 + 1e-9,
        "outage_ok": out.all_ok(),
        "outage_worst_prob": min((c.prob for c in out.checks), default=1.0),
        "outage_checks": [
            {
                "kind": c.kind,
                "ref": list(c.ref),
                "epsilon": c.epsilon,
                "prob": c.prob,
                "halfwidth": c.halfwidth,
            }
            for c in out.checks
        ],
    }


def cmd_run(args) -> int:
    from dataclasses import replace

    spec = experiments.spec_from_file(args.spec)
    if args.out_dir:
        spec = replace(spec, out_dir=args.out_dir)
    if args.workers:
        spec = replace(spec, workers=args.workers)
    if args.seeds:
        spec = replace(spec, seeds=tuple(args.seeds))
    if args.rel_tol is not None:
        spec = replace(spec, rel_tol=args.rel_tol)
    if args.max_iters is not None:
        spec = replace(spec, max_iters=args.max_iters)
    rows = (
        experiments.run_qos_experiment(spec) if spec.qos_bps else experiments.run_experiment(spec)
    )
    bad = [r for r in rows if r.status.startswith("error") or not r.outage_ok]
    print(f"{len(rows)} rows -> {Path(spec.out_dir) / 'results.csv'}")
    for cell in experiments.summarize(rows):
        qos = "" if cell["qos_bps"] is None else f" qos={cell['qos_bps']}"
        print(
            f"  pbs={cell['pbs_dbm']:>5.1f} dBm mode={cell['mode']:<15s}{qos} "
            f"mean SR={cell['mean_maxmin_sr_bps']:.3f} bps/Hz "
            f"(+-{cell['ci95_halfwidth']:.3f}, n={cell['n']})"
        )
    if bad:
        print(f"{len(bad)} rows failed re-verification", file=sys.stderr)
        return 1
    return 0


def cmd_single(args) -> int:
    config = load_config(args.config) if args.config else SystemConfig()
    config = config.with_seed(args.seed)
    if args.pbs_dbm is not None:
        config = config.with_bs_power_dbm(args.pbs_dbm)
    row, report = experiments.run_single(
        config,
        args.seed,
        args.mode,
        args.qos_bps,
        max_iters=args.max_iters,
        mc_samples=args.mc_samples,
    )
    print(f"mode={args.mode} seed={args.seed} pbs={row.pbs_dbm:.1f} dBm")
    for rec in report.records:
        tag = f"init[{rec.phase}]" if rec.kappa < 0 else f"k={rec.kappa:<3d}"
        print(
            f"  {tag} eta={rec.eta:+.6f} {rec.status:<15s} "
            f"resub={rec.resub_violation:.1e} {rec.wall_ms:7.1f} ms"
        )
    print(f"converged={report.converged} iterations={report.iterations}")
    print(f"max-min SR = {report.maxmin_sr_bps:.4f} bps/Hz  tau={[round(t, 4) for t in report.tau]}")
    print(f"BS power {report.bs_power:.4g} W of {report.bs_power_budget:.4g} W; "
          f"power_ok={report.power_ok()} tau_ok={report.tau_ok()}")
    if report.outage is not None:
        print(f"outage_ok={report.outage.all_ok()} "
              f"worst Prob(cap holds)={min(c.prob for c in report.outage.checks):.4f}")
    if args.out:
        topo, ch = channels.generate(config)
        design = None
        # re-run returns the design; run_single does not keep it, so redo cheaply
        hd_ch = None
        if args.mode == "hd":
            hd_ch = channels.draw_channels(
                channels.hd_config(config), topo, np.random.default_rng((args.seed, 1))
            )
        opts = optimizer.SolverOptions(
            mode=args.mode, qos_ul_bps=args.qos_bps, max_iters=args.max_iters,
            validate_outage=False,
        )
        design, _, _ = optimizer.run(config, ch, opts, hd_channels=hd_ch)
        doc = design_to_json(design, config, args.seed)
        Path(args.out).write_text(json.dumps(doc, indent=2), encoding="utf-8")
        print(f"design written to {args.out}")
    ok = report.power_ok() and report.tau_ok() and (
        report.outage is None or report.outage.all_ok()
    )
    return 0 if ok else 1


def cmd_validate(args) -> int:
    doc = json.loads(Path(args.design).read_text(encoding="utf-8"))
    design, config, seed = design_from_json(doc)
    result = verify_design(design, config, seed, mc_samples=args.mc_samples)
    print(json.dumps(result, indent=2))
    ok = result["bs_power_ok"] and result["ul_power_ok"] and result["tau_ok"] and result["outage_ok"]
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fdsec", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="run an experiment spec file")
    pr.add_argument("spec", help="experiment spec (flat key = value file)")
    pr.add_argument("--out-dir", default=None)
    pr.add_argument("--workers", type=int, default=None)
    pr.add_argument("--seeds", type=int, nargs="+", default=None, help="override the seed list")
    pr.add_argument("--rel-tol", type=float, default=None, help="convergence tolerance override")
    pr.add_argument("--max-iters", type=int, default=None)
    pr.set_defaults(func=cmd_run)

    ps = sub.add_parser("single", help="solve one instance with a full trace")
    ps.add_argument("--config", default=None, help="scenario config file")
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--mode", default="proposed-fd", choices=optimizer.MODES)
    ps.add_argument("--pbs-dbm", type=float, default=None)
    ps.add_argument("--qos-bps", type=float, default=None)
    ps.add_argument("--max-iters", type=int, default=50)
    ps.add_argument("--mc-samples", type=int, default=10_000)
    ps.add_argument("--out", default=None, help="write the design as JSON")
    ps.set_defaults(func=cmd_single)

    pv = sub.add_parser("validate", help="re-verify a saved design")
    pv.add_argument("design", help="design JSON written by 'single --out'")
    pv.add_argument("--mc-samples", type=int, default=10_000)
    pv.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
