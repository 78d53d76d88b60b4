"""Experiment harness: SNR sweeps, outage curves, timing and fairness ablations.

Every table cell is a function of the experiment config and one seed, so
any row can be regenerated on its own.  Rates are kept in bits per tone-use
internally and converted to Mbps (``B / S`` per tone) only in the output.
"""

from __future__ import annotations

import csv
import json
import math
import os
import platform
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import baselines, capacity
from .channel import ChannelSet, Scenario, generate_channels
from .errors import ConfigError, InfeasibleError, MacallocError, SizeError
from .lp import simplex
from .minpmac import max_sum_rate, solve_min_energy

METHODS = ("minpmac", "timeshare", "oma", "noma", "brute", "drl")
MODES = ("budget", "target")


@dataclass
class ExperimentConfig:
    methods: tuple = ("minpmac", "oma", "noma")
    snr_db: tuple = (-10.0, 0.0, 10.0, 20.0)
    seeds: tuple = tuple(range(50))
    mode: str = "budget"
    num_users: int = 3
    num_subcarriers: int = 4
    rx_antennas: int = 1
    user_distances: tuple = (3.0, 3.0, 3.0)
    bandwidth_hz: float = 80e6
    carrier_hz: float = 2.49e9
    budget: float | None = None  # weighted energy per allocation; default N (1 W per user)
    targets_mbps: tuple | None = None  # per-user targets for target mode
    rate_floor_mbps: float = 200.0  # outage floor on the worst user
    brute_levels: int = 40
    timing_repeats: int = 20
    # label -> checkpoint path; a label containing "nofair" marks the w4 = 0 agent
    drl_checkpoints: dict = field(default_factory=dict)
    drl_steps: int = 20  # greedy steps per evaluation episode
    out_dir: str = "results"

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.snr_db = tuple(float(s) for s in self.snr_db)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.user_distances = tuple(float(d) for d in self.user_distances)
        if not self.methods:
            raise ConfigError("the method set is empty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; choose from {METHODS}")
        if not self.snr_db:
            raise ConfigError("the SNR grid is empty")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if len(self.user_distances) != self.num_users:
            raise ConfigError(f"need {self.num_users} user distances")
        if self.mode == "target":
            if self.targets_mbps is None or len(self.targets_mbps) != self.num_users:
                raise ConfigError("target mode needs one rate target per user")
            self.targets_mbps = tuple(float(t) for t in self.targets_mbps)
        if self.budget is not None and not self.budget > 0:
            raise ConfigError("budget must be positive")
        if "drl" in self.methods and not self.drl_checkpoints:
            raise ConfigError("the drl method needs at least one checkpoint")

    @property
    def energy_budget(self) -> float:
        return float(self.budget) if self.budget is not None else float(self.num_users)

    def scenario(self, snr_db: float, seed: int) -> Scenario:
        return Scenario(
            self.num_users, self.num_subcarriers, self.rx_antennas, 1, self.bandwidth_hz,
            self.carrier_hz, self.user_distances, target_receive_snr_db=float(snr_db), seed=int(seed),
        )

    def channels(self, snr_db: float, seed: int) -> ChannelSet:
        return generate_channels(self.scenario(snr_db, seed))


def load_config(path) -> ExperimentConfig:
    """Read a YAML (or JSON) experiment file; unknown keys are an error."""
    import yaml

    try:
        raw = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    known = {f.name for f in fields(ExperimentConfig)}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"{path}: unknown keys {sorted(extra)}")
    return ExperimentConfig(**raw)


# --- per-cell evaluation ---------------------------------------------------------


def fair_timeshare(R: np.ndarray) -> tuple[np.ndarray, float]:
    """Weights over vertex rate vectors maximizing the smallest user rate.

    Solves  max t  s.t.  R^T w >= t,  sum w = 1,  w >= 0.
    """
    K, N = R.shape
    # variables: w (K), t, slack (N)
    A = np.zeros((N + 1, K + 1 + N))
    A[:N, :K] = R.T
    A[:N, K] = -1.0
    A[:N, K + 1:] = -np.eye(N)
    A[N, :K] = 1.0
    b = np.concatenate([np.zeros(N), [1.0]])
    c = np.zeros(K + 1 + N)
    c[K] = -1.0
    res = simplex(c, A, b)
    w = np.clip(res.x[:K], 0.0, None)
    w /= w.sum()
    return w, float(res.x[K])


def _drl_agents(config: ExperimentConfig):
    from .drl.checkpoint import load_checkpoint

    agents = {}
    for label, path in config.drl_checkpoints.items():
        if not Path(path).exists():
            raise ConfigError(f"missing checkpoint for {label}: {path}")
        model, env_cfg, _ = load_checkpoint(path)
        if env_cfg is None:
            raise ConfigError(f"checkpoint {path} has no environment config")
        agents[label] = (model, env_cfg)
    return agents


def _drl_cell(model, env_cfg, ch: ChannelSet, steps: int):
    from .drl.train import greedy_allocation

    cfg = replace(env_cfg, channels=None)
    state, _, _ = greedy_allocation(model, cfg, ch, steps)
    bits = state.rates / ch.mbps_per_bit()
    return bits, state.powers


def _labels(config: ExperimentConfig):
    out = []
    for m in config.methods:
        if m == "drl":
            out += list(config.drl_checkpoints)
        else:
            out.append(m)
    return out


def evaluate_cell(config: ExperimentConfig, method: str, ch: ChannelSet, agents=None) -> dict:
    """Rates (bits/tone-use per user) and energy of one method on one channel draw."""
    N = ch.num_users
    B = config.energy_budget
    if method in (agents or {}):
        model, env_cfg = agents[method]
        bits, p = _drl_cell(model, env_cfg, ch, config.drl_steps)
        return {"rates": bits, "energy": float(p.sum())}
    if config.mode == "budget":
        if method == "minpmac":
            sol = max_sum_rate(ch, B)
            return {"rates": sol.rates, "energy": sol.alloc.total_energy}
        if method == "timeshare":
            sol = max_sum_rate(ch, B)
            orders = capacity.enumerate_orders(N)
            R = np.array([capacity.sic_rates(ch, sol.alloc, o) for o in orders])
            w, _ = fair_timeshare(R)
            return {"rates": R.T @ w, "energy": sol.alloc.total_energy, "support": int(np.sum(w > 1e-12))}
        if method == "oma":
            res = baselines.oma_fixed_budget(ch, B)
            return {"rates": res.rates, "energy": res.alloc.total_energy}
        if method == "noma":
            res = baselines.noma_fixed_budget(ch, B)
            return {"rates": res.rates, "energy": res.alloc.total_energy}
        if method == "brute":
            grid = baselines.GridSpec(config.brute_levels, B)
            res = baselines.brute_force_max_sum_rate(ch, B, grid)
            rates = np.mean([capacity.sic_rates(ch, res.alloc, o) for o in capacity.enumerate_orders(N)], axis=0)
            return {"rates": rates, "energy": res.alloc.total_energy}
    else:
        r = np.asarray(config.targets_mbps) / ch.mbps_per_bit()
        if method in ("minpmac", "timeshare"):
            sol = solve_min_energy(ch, r)
            out = {"rates": sol.achieved, "energy": sol.objective}
            if sol.timeshare is not None:
                out["support"] = sol.timeshare.support
            return out
        if method == "oma":
            res = baselines.oma_allocate(ch, r)
            return {"rates": res.rates, "energy": res.alloc.total_energy}
        if method == "noma":
            res = baselines.noma_heuristic_allocate(ch, r)
            return {"rates": res.rates, "energy": res.alloc.total_energy}
        if method == "brute":
            res = baselines.brute_force_min_energy(ch, r, baselines.GridSpec(config.brute_levels,
                                                   baselines.feasible_grid_bound(ch, r)))
            return {"rates": r.copy(), "energy": res.objective}
    raise ConfigError(f"unknown method {method}")


def _row(method, snr, seed, ch, status, cell=None, N=0):
    row = {"method": method, "snr_db": float(snr), "seed": int(seed), "status": status}
    if cell is None:
        row.update({"sum_rate_mbps": math.nan, "min_user_mbps": math.nan, "energy": math.nan})
        row.update({f"rate{i}_mbps": math.nan for i in range(N)})
        return row
    mb = np.asarray(cell["rates"], dtype=float) * ch.mbps_per_bit()
    row.update({
        "sum_rate_mbps": float(mb.sum()),
        "min_user_mbps": float(mb.min()),
        "energy": float(cell["energy"]),
    })
    row.update({f"rate{i}_mbps": float(v) for i, v in enumerate(mb)})
    return row


def sweep_snr(config: ExperimentConfig, agents=None) -> list[dict]:
    """One row per (method, SNR, seed); solver failures are recorded, not raised."""
    if agents is None and "drl" in config.methods:
        agents = _drl_agents(config)
    rows = []
    N = config.num_users
    for snr in config.snr_db:
        for seed in config.seeds:
            ch = config.channels(snr, seed)
            for m in _labels(config):
                try:
                    cell = evaluate_cell(config, m, ch, agents)
                    rows.append(_row(m, snr, seed, ch, "ok", cell, N))
                except InfeasibleError:
                    rows.append(_row(m, snr, seed, ch, "infeasible", None, N))
                except SizeError:
                    rows.append(_row(m, snr, seed, ch, "skipped", None, N))
                except MacallocError as e:
                    row = _row(m, snr, seed, ch, "error", None, N)
                    row["error"] = str(e)
                    rows.append(row)
    return rows


def summarize(rows: list[dict], key: str = "sum_rate_mbps") -> dict:
    """Mean of ``key`` over ok rows, per (method, SNR)."""
    out: dict = {}
    for r in rows:
        if r["status"] != "ok":
            continue
        out.setdefault((r["method"], r["snr_db"]), []).append(r[key])
    return {k: float(np.mean(v)) for k, v in out.items()}


# --- outage ---------------------------------------------------------------------


def _outage_event(config: ExperimentConfig, method, ch, floor_mbps, agents) -> bool:
    """True when the worst user falls below the floor."""
    if floor_mbps <= 0:
        return False
    if not math.isfinite(floor_mbps):
        return True
    N = ch.num_users
    if method in ("minpmac", "timeshare"):
        # the optimum serves every user at the floor iff its least energy fits the budget
        r = np.full(N, floor_mbps / ch.mbps_per_bit())
        try:
            sol = solve_min_energy(ch, r)
        except InfeasibleError:
            return True
        return sol.objective > config.energy_budget * (1 + 1e-9)
    if method == "brute":
        r = np.full(N, floor_mbps / ch.mbps_per_bit())
        try:
            grid = baselines.GridSpec(config.brute_levels, config.energy_budget)
            res = baselines.brute_force_min_energy(ch, r, grid)
        except InfeasibleError:
            return True
        return res.objective > config.energy_budget * (1 + 1e-9)
    budget_cfg = replace(config, mode="budget")
    cell = evaluate_cell(budget_cfg, method, ch, agents)
    return float(np.min(cell["rates"])) * ch.mbps_per_bit() < floor_mbps


def outage_curve(config: ExperimentConfig, rate_floor_mbps: float | None = None, agents=None) -> list[dict]:
    """Fraction of seeds whose worst user is below the floor, per method and SNR."""
    floor = config.rate_floor_mbps if rate_floor_mbps is None else float(rate_floor_mbps)
    if not config.seeds:
        raise ConfigError("outage needs at least one seed")
    if agents is None and "drl" in config.methods:
        agents = _drl_agents(config)
    rows = []
    for m in _labels(config):
        for snr in config.snr_db:
            events, failed = [], 0
            for seed in config.seeds:
                ch = config.channels(snr, seed)
                try:
                    events.append(_outage_event(config, m, ch, floor, agents))
                except SizeError:
                    failed += 1
            n = len(events)
            rows.append({
                "method": m, "snr_db": float(snr), "floor_mbps": floor,
                "outage": float(np.mean(events)) if n else math.nan, "seeds": n, "skipped": failed,
            })
    return rows


def monotonicity_violations(rows: list[dict]) -> dict:
    """Per method, the SNR points where outage rises above the previous point."""
    out = {}
    for m in dict.fromkeys(r["method"] for r in rows):
        pts = sorted((r["snr_db"], r["outage"]) for r in rows if r["method"] == m)
        out[m] = [pts[k][0] for k in range(1, len(pts)) if pts[k][1] > pts[k - 1][1] + 1e-12]
    return out


# --- timing -----------------------------------------------------------------------


def _median_time(fn, repeats):
    fn()  # warm-up, not counted
    ts = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        ts.append(time.perf_counter() - t)
    return float(np.median(ts))


def timing_compare(config: ExperimentConfig, agents=None, snr_db: float | None = None, seed: int | None = None) -> list[dict]:
    """Median wall-clock per allocation decision for each method on one scenario."""
    from .drl.train import decision_time

    if agents is None and "drl" in config.methods:
        agents = _drl_agents(config)
    snr = config.snr_db[-1] if snr_db is None else snr_db
    seed = config.seeds[0] if seed is None and config.seeds else (seed or 0)
    ch = config.channels(snr, seed)
    reps = max(int(config.timing_repeats), 1)
    rows = []
    for m in _labels(config):
        if m in (agents or {}):
            model, env_cfg = agents[m]
            from .drl.env import env_reset, env_step
            from .drl.ppo import greedy_action

            cfg = replace(env_cfg, channels=None)
            st = env_reset(cfg, 0, ch)
            st, _ = env_step(st, greedy_action(model, st.observation()))
            sec = decision_time(model, cfg, st.observation(), reps)
        else:
            sec = _median_time(lambda: evaluate_cell(config, m, ch, agents), reps)
        rows.append({"method": m, "seconds": sec, "repeats": reps, "snr_db": snr, "seed": seed})
    ref = {r["method"]: r["seconds"] for r in rows}
    for r in rows:
        r["speedup_vs_minpmac"] = ref["minpmac"] / r["seconds"] if "minpmac" in ref and r["seconds"] > 0 else math.nan
    return rows


# --- fairness ablation --------------------------------------------------------------


def spread(rates) -> float:
    """``(max - min) / mean`` of a rate vector; 0 for an all-zero vector."""
    r = np.asarray(rates, dtype=float)
    m = r.mean()
    return float((r.max() - r.min()) / m) if m > 0 else 0.0


def fairness_ablation(config: ExperimentConfig, fair_labels, nofair_labels, agents=None) -> dict:
    """Sum rate and rate spread of agents trained with and without the fairness term.

    Either side may be one label or a list of labels (agents from different
    training seeds); statistics pool every agent and channel seed of a side.
    """
    groups = {
        "fair": [fair_labels] if isinstance(fair_labels, str) else list(fair_labels),
        "nofair": [nofair_labels] if isinstance(nofair_labels, str) else list(nofair_labels),
    }
    if not groups["fair"] or not groups["nofair"]:
        raise ConfigError("both sides of the ablation need at least one agent")
    if agents is None:
        agents = _drl_agents(config)
    rows = []
    for snr in config.snr_db:
        for seed in config.seeds:
            ch = config.channels(snr, seed)
            for side, labels in groups.items():
                for label in labels:
                    model, env_cfg = agents[label]
                    bits, p = _drl_cell(model, env_cfg, ch, config.drl_steps)
                    mb = bits * ch.mbps_per_bit()
                    rows.append({"method": label, "side": side, "snr_db": snr, "seed": seed,
                                 "sum_rate_mbps": float(mb.sum()), "spread": spread(mb),
                                 "min_user_mbps": float(mb.min()), "energy": float(p.sum())})
    stats = {}
    for side, labels in groups.items():
        sel = [r for r in rows if r["side"] == side]
        stats[side] = {
            "agents": labels,
            "mean_sum_rate_mbps": float(np.mean([r["sum_rate_mbps"] for r in sel])) if sel else math.nan,
            "mean_spread": float(np.mean([r["spread"] for r in sel])) if sel else math.nan,
            "mean_energy": float(np.mean([r["energy"] for r in sel])) if sel else math.nan,
        }
    summary = {
        "stats": stats,
        "spread_decreases": stats["fair"]["mean_spread"] < stats["nofair"]["mean_spread"],
        "sum_rate_not_higher": stats["fair"]["mean_sum_rate_mbps"] <= stats["nofair"]["mean_sum_rate_mbps"],
    }
    return {"rows": rows, "summary": summary}


def group_outage(rows: list[dict], labels) -> dict:
    """Mean outage over several agents' curves, per SNR."""
    out = {}
    for r in rows:
        if r["method"] in labels:
            out.setdefault(r["snr_db"], []).append(r["outage"])
    return {snr: float(np.mean(v)) for snr, v in sorted(out.items())}


# --- persistence ---------------------------------------------------------------------


def _columns(rows):
    cols = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    return cols


def export_results(rows: list[dict], path, fmt: str = "csv") -> Path:
    """Write rows with a header; floats keep full precision so a re-read is exact."""
    path = Path(path)
    delim = {"csv": ",", "tsv": "\t"}.get(fmt)
    if delim is None:
        raise ConfigError(f"unknown export format {fmt!r}")
    cols = _columns(rows)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, delimiter=delim, lineterminator="\n")
            w.writerow(cols)
            for r in rows:
                w.writerow([_fmt(r.get(c, "")) for c in cols])
    except OSError as e:
        raise MacallocError(f"cannot write results to {path}: {e}") from e
    return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return json.dumps([float(x) for x in v])
    return v


def _parse(s: str):
    if s in ("True", "False"):
        return s == "True"
    for cast in (int, float):
        try:
            return cast(s)
        except ValueError:
            pass
    return s


def read_results(path, fmt: str = "csv") -> list[dict]:
    delim = {"csv": ",", "tsv": "\t"}[fmt]
    try:
        with Path(path).open(newline="") as fh:
            return [{k: _parse(v) for k, v in r.items()} for r in csv.DictReader(fh, delimiter=delim)]
    except OSError as e:
        raise MacallocError(f"cannot read results from {path}: {e}") from e


_PLOTS = {
    "sweep": ("snr_db", "sum_rate_mbps", "Receive SNR [dB]", "Sum rate [Mbps]"),
    "outage": ("snr_db", "outage", "Receive SNR [dB]", "Outage probability"),
    "curve": ("episode", "reward", "Episode", "Mean step reward"),
}


def emit_plot_script(data_path, script_path, kind: str = "sweep") -> Path:
    """A standalone matplotlib script that plots the data file next to it."""
    if kind not in _PLOTS:
        raise ConfigError(f"unknown plot kind {kind!r}")
    x, y, xl, yl = _PLOTS[kind]
    data_path, script_path = Path(data_path), Path(script_path)
    rel = Path(os.path.relpath(data_path.resolve(), script_path.parent.resolve())).as_posix()
    group = "method" if kind != "curve" else None
    text = f'''"""Plot {rel}; run from any directory."""
import csv
from collections import defaultdict
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
rows = list(csv.DictReader(open(here / "{rel}")))
series = defaultdict(lambda: defaultdict(list))
for r in rows:
    if r.get("status", "ok") != "ok" or r["{y}"] in ("", "nan"):
        continue
    series[r.get("{group or ''}", "{y}")][float(r["{x}"])].append(float(r["{y}"]))
fig, ax = plt.subplots(figsize=(6, 4))
for name, pts in sorted(series.items()):
    xs = sorted(pts)
    ax.plot(xs, [sum(pts[v]) / len(pts[v]) for v in xs], marker="o", label=name)
ax.set_xlabel("{xl}")
ax.set_ylabel("{yl}")
ax.grid(True, alpha=0.3)
ax.legend()
fig.tight_layout()
fig.savefig(here / "{Path(rel).stem}.png", dpi=150)
'''
    try:
        script_path.parent.mkdir(parents=True, exist_ok=True)
        script_path.write_text(text)
    except OSError as e:
        raise MacallocError(f"cannot write plot script {script_path}: {e}") from e
    return script_path


def write_manifest(path, config: ExperimentConfig | None = None, **results) -> Path:
    """Run metadata: config, seeds, library versions and headline numbers."""
    import scipy

    from . import __version__

    meta = {
        "created_unix": time.time(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "macalloc": __version__,
        "config": asdict(config) if config is not None else None,
    }
    meta.update(results)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_json_default))
    except OSError as e:
        raise MacallocError(f"cannot write manifest {path}: {e}") from e
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, tuple):
        return list(o)
    return str(o)
