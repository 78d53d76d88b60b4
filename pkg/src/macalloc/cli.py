"""Command-line front end: ``macalloc <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import baselines, bench
from .channel import Scenario, generate_channels, load_channels, save_channels
from .errors import MacallocError
from .minpmac import mbps_to_bits, solve_min_energy


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _write_json(path, obj) -> None:
    text = json.dumps(obj, indent=2, default=bench._json_default)
    if path in (None, "-"):
        print(text)
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text + "\n")


def _targets(ch, args):
    r = np.asarray(_floats(args.rth_mbps))
    if len(r) != ch.num_users:
        raise MacallocError(f"--rth-mbps has {len(r)} values for {ch.num_users} users")
    return mbps_to_bits(ch, r)


def _alpha(ch, args):
    if args.alpha is None:
        return None
    a = np.asarray(_floats(args.alpha))
    if len(a) != ch.num_users:
        raise MacallocError(f"--alpha has {len(a)} values for {ch.num_users} users")
    return a


def solution_json(ch, sol) -> dict:
    mb = ch.mbps_per_bit()
    out = {
        "powers": sol.alloc.powers.tolist(),
        "alpha": sol.alloc.alpha.tolist(),
        "theta": sol.duals.tolist(),
        "clusters": [list(c) for c in sol.clusters],
        "targets_bits": sol.targets.tolist(),
        "achieved_bits": sol.achieved.tolist(),
        "achieved_mbps": (sol.achieved * mb).tolist(),
        "objective": sol.objective,
        "diagnostics": sol.diagnostics,
    }
    if sol.timeshare is not None:
        out["timeshare"] = {"schedule": sol.timeshare.schedule(), "achieved_bits": sol.timeshare.achieved.tolist()}
    return out


# --- subcommands ---------------------------------------------------------------------


def cmd_gen_channels(args):
    dist = _floats(args.dist) if args.dist else [3.0] * args.users
    sc = Scenario(args.users, args.tones, args.rx_antennas, 1, args.bandwidth, args.carrier, tuple(dist),
                  target_receive_snr_db=args.snr_db, seed=args.seed)
    save_channels(generate_channels(sc), args.out)
    return 0


def cmd_solve(args):
    ch = load_channels(args.channels)
    sol = solve_min_energy(ch, _targets(ch, args), _alpha(ch, args))
    _write_json(args.out, solution_json(ch, sol))
    return 0


def cmd_baseline(args):
    ch = load_channels(args.channels)
    r, alpha = _targets(ch, args), _alpha(ch, args)
    if args.method == "oma":
        res = baselines.oma_allocate(ch, r, alpha)
        out = {"powers": res.alloc.powers.tolist(), "shares": res.shares.tolist(), "rates_bits": res.rates.tolist()}
    elif args.method == "noma":
        res = baselines.noma_heuristic_allocate(ch, r, alpha)
        out = {"powers": res.alloc.powers.tolist(), "orders": [list(o) for o in res.orders],
               "rates_bits": res.rates.tolist()}
    else:
        p_max = args.grid_max if args.grid_max else baselines.feasible_grid_bound(ch, r, alpha)
        res = baselines.brute_force_min_energy(ch, r, baselines.GridSpec(args.levels, p_max), alpha)
        out = {"powers": res.alloc.powers.tolist(), "level_index": list(map(int, res.level_index)),
               "grid_max": p_max, "levels": args.levels, "evaluated": res.evaluated, "rates_bits": r.tolist()}
    out["method"] = args.method
    out["objective"] = float(res.alloc.objective)
    out["rates_mbps"] = (np.asarray(out["rates_bits"]) * ch.mbps_per_bit()).tolist()
    _write_json(args.out, out)
    return 0


def _env_config(args, channels=None):
    from .drl.env import EnvConfig

    raw = {}
    if args.env_config:
        import yaml

        raw = yaml.safe_load(Path(args.env_config).read_text()) or {}
    if args.steps is not None:
        raw["horizon"] = args.steps
    if args.no_fairness:
        w = list(raw.get("weights", (1.0, 1.0, 1.0, 1.0)))
        w[3] = 0.0
        raw["weights"] = tuple(w)
    cfg = EnvConfig(**raw)
    if channels is not None:
        cfg = replace(cfg, channels=channels, num_users=channels.num_users,
                      num_subcarriers=channels.num_subcarriers, rx_antennas=channels.rx_antennas)
    return cfg


def cmd_train(args):
    from .drl.checkpoint import save_checkpoint
    from .drl.ppo import PpoConfig
    from .drl.train import CURVE_COLUMNS, train

    ch = load_channels(args.channels) if args.channels else None
    env_cfg = _env_config(args, ch)
    ppo = PpoConfig(**{**(json.loads(args.ppo) if args.ppo else {}), "seed": args.seed})
    res = train(env_cfg, ppo, episodes=args.episodes, seed=args.seed, log_every=args.log_every)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(res.model, args.out, replace(env_cfg, channels=None),
                    extra={"episodes": args.episodes, "seed": args.seed, "seconds": res.seconds,
                           "fixed_channels": args.channels})
    rows = [dict(zip(CURVE_COLUMNS, row)) for row in res.curve]
    for r in rows:
        r["episode"] = int(r["episode"])
    curve_path = Path(str(args.out) + ".curve.csv")
    bench.export_results(rows, curve_path)
    bench.emit_plot_script(curve_path, curve_path.with_suffix(".py"), kind="curve")
    print(f"trained {args.episodes} episodes in {res.seconds:.1f} s; checkpoint {args.out}")
    return 0


def cmd_eval(args):
    from .drl.checkpoint import load_checkpoint
    from .drl.train import evaluate

    model, env_cfg, _ = load_checkpoint(args.ckpt)
    if env_cfg is None:
        raise MacallocError(f"{args.ckpt} carries no environment config")
    channel_sets = [load_channels(p) for p in args.channels]
    metrics = evaluate(model, env_cfg, channel_sets, steps=args.steps)
    _write_json(args.out, metrics)
    return 0


def _bench_config(args):
    cfg = bench.load_config(args.config)
    if getattr(args, "out_dir", None):
        cfg = replace(cfg, out_dir=args.out_dir)
    return cfg


def _finish(cfg, name, rows, plot_kind=None, **extra):
    out = Path(cfg.out_dir)
    data = bench.export_results(rows, out / f"{name}.csv")
    if plot_kind:
        bench.emit_plot_script(data, out / f"plot_{name}.py", kind=plot_kind)
    bench.write_manifest(out / f"{name}_manifest.json", cfg, **extra)
    bad = [r for r in rows if r.get("status", "ok") not in ("ok", "infeasible")]
    for r in bad:
        print(f"incomplete cell: {r['method']} snr={r['snr_db']} seed={r['seed']} ({r['status']})", file=sys.stderr)
    return 0 if not bad else 1


def cmd_sweep(args):
    cfg = _bench_config(args)
    rows = bench.sweep_snr(cfg)
    means = {f"{m}@{s}": v for (m, s), v in bench.summarize(rows).items()}
    for k, v in means.items():
        print(f"{k}: {v:.3f} Mbps")
    return _finish(cfg, "sweep", rows, "sweep", mean_sum_rate_mbps=means)


def cmd_outage(args):
    cfg = _bench_config(args)
    rows = bench.outage_curve(cfg, args.floor_mbps)
    viol = bench.monotonicity_violations(rows)
    for r in rows:
        print(f"{r['method']} snr={r['snr_db']}: outage {r['outage']:.3f}")
    for m, pts in viol.items():
        if pts:
            print(f"warning: {m} outage rises at SNR {pts}", file=sys.stderr)
    # agents whose label contains "nofair" were trained without the fairness term
    drl = list(cfg.drl_checkpoints) if "drl" in cfg.methods else []
    groups = {"fair": [k for k in drl if "nofair" not in k], "nofair": [k for k in drl if "nofair" in k]}
    means = {side: bench.group_outage(rows, labels) for side, labels in groups.items() if labels}
    for side, curve in means.items():
        print(f"mean outage, {side} agents: " + ", ".join(f"{s:g} dB {v:.3f}" for s, v in curve.items()))
    return _finish(cfg, "outage", rows, "outage", monotonicity_violations=viol, group_outage=means)


def cmd_timing(args):
    cfg = _bench_config(args)
    rows = bench.timing_compare(cfg)
    for r in rows:
        print(f"{r['method']}: {r['seconds'] * 1e3:.3f} ms per decision, speedup vs minpmac {r['speedup_vs_minpmac']:.1f}x")
    return _finish(cfg, "timing", rows, None, timing=rows, reference_speedup=5.0)


def cmd_fairness(args):
    cfg = _bench_config(args)
    res = bench.fairness_ablation(cfg, args.fair, args.nofair)
    print(json.dumps(res["summary"], indent=2))
    return _finish(cfg, "fairness", res["rows"], None, fairness=res["summary"])


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="macalloc", description="Uplink NOMA power allocation tools")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen-channels", help="draw a channel set and write it to a file")
    p.add_argument("--users", type=int, default=3)
    p.add_argument("--tones", type=int, default=4)
    p.add_argument("--rx-antennas", type=int, default=1)
    p.add_argument("--dist", help="comma-separated user distances in metres")
    p.add_argument("--snr-db", type=float, default=None, help="calibrate noise to this receive SNR at 1 W")
    p.add_argument("--bandwidth", type=float, default=80e6)
    p.add_argument("--carrier", type=float, default=2.49e9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_channels)

    for name, func, text in (("solve", cmd_solve, "least-energy allocation meeting per-user rate targets"),
                             ("baseline", cmd_baseline, "OMA, channel-gain NOMA or grid search for the same targets")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--channels", required=True)
        p.add_argument("--rth-mbps", required=True, help="comma-separated targets in Mbps")
        p.add_argument("--alpha", help="comma-separated energy weights")
        p.add_argument("--out", default="-")
        if name == "baseline":
            p.add_argument("--method", choices=("oma", "noma", "brute"), required=True)
            p.add_argument("--levels", type=int, default=300, help="brute-force grid levels")
            p.add_argument("--grid-max", type=float, default=None, help="brute-force grid top (W)")
        p.set_defaults(func=func)

    p = sub.add_parser("train", help="train the PPO agent")
    p.add_argument("--channels", help="fixed channel file (otherwise channels are redrawn per episode)")
    p.add_argument("--env-config", help="YAML/JSON file of environment fields")
    p.add_argument("--ppo", help="JSON object of PPO fields")
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--steps", type=int, default=None, help="steps per episode")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-fairness", action="store_true", help="set the fairness weight to zero")
    p.add_argument("--log-every", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--channels", nargs="+", required=True)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_eval)

    for name, func, text in (("sweep", cmd_sweep, "sum rate of each method over an SNR grid"),
                             ("outage", cmd_outage, "fraction of draws with a user below the rate floor"),
                             ("timing", cmd_timing, "median time per decision against a minPMAC solve"),
                             ("fairness-ablation", cmd_fairness, "rate spread and sum rate with and without fairness")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="experiment YAML file")
        p.add_argument("--out-dir")
        if name == "outage":
            p.add_argument("--floor-mbps", type=float, default=None)
        if name == "fairness-ablation":
            p.add_argument("--fair", nargs="+", required=True, help="checkpoint labels trained with fairness")
            p.add_argument("--nofair", nargs="+", required=True, help="checkpoint labels trained without fairness")
        p.set_defaults(func=func)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MacallocError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
