"""Result aggregation: summary tables, training-curve figures, dominance check.

Reads the run directories produced by the CLI (agent runs carry
``eval_report.csv`` plus per-seed ``curve.csv`` files; oracle runs carry
``oracle_summary.csv``), emits a results table as CSV and markdown, and
renders an SVG training-curve figure with mean +/- one standard deviation
bands per run and horizontal reference lines for oracle returns.

Whenever an oracle result exists for the same input data (matched by content
hash), every reported agent return is asserted to stay at or below the
oracle return.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd
import yaml

from .data import DataError

TABLE_COLUMNS = ["name", "algo", "episodic_reward_mean", "episodic_reward_std",
                 "gt_starts", "gt_hours", "p2g_hours", "bes_charge_steps",
                 "bes_discharge_steps"]

DOMINANCE_TOLERANCE = 1e-6


@dataclass
class AgentRun:
    path: Path
    name: str
    algo: str
    per_seed: pd.DataFrame         # rows indexed by seed
    aggregate: dict[str, float]    # column -> mean / std values
    curves: dict[int, pd.DataFrame] = field(default_factory=dict)
    instance_hash: str | None = None


@dataclass
class OracleRun:
    path: Path
    name: str
    variant: str                   # full | bes_only
    total_return: float
    instance_hash: str | None = None


def _read_instance_hash(run_dir: Path) -> str | None:
    hash_file = run_dir / "instance.hash"
    if hash_file.exists():
        return hash_file.read_text().strip()
    return None


def _load_agent_run(run_dir: Path) -> AgentRun:
    table = pd.read_csv(run_dir / "eval_report.csv", dtype={"seed": str})
    seed_rows = table[~table["seed"].isin(["mean", "std"])].copy()
    seed_rows["seed"] = seed_rows["seed"].astype(int)
    seed_rows = seed_rows.set_index("seed")
    mean_row = table[table["seed"] == "mean"].iloc[0]
    std_row = table[table["seed"] == "std"].iloc[0]

    name, algo = run_dir.name, ""
    cfg_path = run_dir / "resolved_config.yaml"
    if cfg_path.exists():
        with cfg_path.open() as fh:
            cfg = yaml.safe_load(fh)
        name = cfg.get("name", name)
        algo = cfg.get("agent", {}).get("algo", "")

    curves = {}
    for curve_path in sorted(run_dir.glob("seed_*/curve.csv")):
        seed = int(curve_path.parent.name.split("_")[1])
        curves[seed] = pd.read_csv(curve_path)

    aggregate = {
        "episodic_reward_mean": float(mean_row["episodic_reward"]),
        "episodic_reward_std": float(std_row["episodic_reward"]),
        "gt_starts": float(mean_row["gt_starts"]),
        "gt_hours": float(mean_row["gt_hours"]),
        "p2g_hours": float(mean_row["p2g_hours"]),
        "bes_charge_steps": float(mean_row["bes_charge_steps"]),
        "bes_discharge_steps": float(mean_row["bes_discharge_steps"]),
    }
    return AgentRun(run_dir, name, algo, seed_rows, aggregate, curves,
                    _read_instance_hash(run_dir))


def _load_oracle_runs(run_dir: Path) -> list[OracleRun]:
    summary = pd.read_csv(run_dir / "oracle_summary.csv")
    name = run_dir.name
    cfg_path = run_dir / "resolved_config.yaml"
    if cfg_path.exists():
        with cfg_path.open() as fh:
            name = yaml.safe_load(fh).get("name", name)
    return [OracleRun(run_dir, name, str(row["variant"]),
                      float(row["total_return"]), _read_instance_hash(run_dir))
            for _, row in summary.iterrows()]


def load_runs(runs_dir: str | Path) -> tuple[list[AgentRun], list[OracleRun]]:
    runs_dir = Path(runs_dir)
    agent_runs: list[AgentRun] = []
    oracle_runs: list[OracleRun] = []
    candidates = [runs_dir, *sorted(p for p in runs_dir.glob("**/") if p != runs_dir)]
    for run_dir in candidates:
        if (run_dir / "eval_report.csv").exists():
            agent_runs.append(_load_agent_run(run_dir))
        if (run_dir / "oracle_summary.csv").exists():
            oracle_runs.extend(_load_oracle_runs(run_dir))
    if not agent_runs and not oracle_runs:
        raise DataError(f"no runs found under {runs_dir}")
    return agent_runs, oracle_runs


def check_dominance(agent_runs: list[AgentRun],
                    oracle_runs: list[OracleRun]) -> None:
    """Assert every agent return <= the oracle return on the same input data."""
    full = [o for o in oracle_runs if o.variant == "full" and o.instance_hash]
    for run in agent_runs:
        if run.instance_hash is None:
            continue
        for oracle in full:
            if oracle.instance_hash != run.instance_hash:
                continue
            for seed, row in run.per_seed.iterrows():
                reward = float(row["episodic_reward"])
                if reward > oracle.total_return + DOMINANCE_TOLERANCE:
                    raise RuntimeError(
                        f"dominance violated: run '{run.name}' seed {seed} "
                        f"reports {reward:.3f} C$, above the oracle return "
                        f"{oracle.total_return:.3f} C$ from '{oracle.name}'")


def write_table(agent_runs: list[AgentRun], out_dir: Path) -> tuple[Path, Path]:
    rows = []
    for run in sorted(agent_runs, key=lambda r: r.name):
        rows.append({"name": run.name, "algo": run.algo, **run.aggregate})
    table = pd.DataFrame(rows, columns=TABLE_COLUMNS)
    csv_path = out_dir / "table.csv"
    table.to_csv(csv_path, index=False, float_format="%.3f")

    md_path = out_dir / "table.md"
    with md_path.open("w") as fh:
        fh.write("| " + " | ".join(TABLE_COLUMNS) + " |\n")
        fh.write("|" + "|".join("---" for _ in TABLE_COLUMNS) + "|\n")
        for _, row in table.iterrows():
            cells = [str(row["name"]), str(row["algo"])]
            cells += [f"{row[c]:.1f}" for c in TABLE_COLUMNS[2:]]
            fh.write("| " + " | ".join(cells) + " |\n")
    return csv_path, md_path


def render_curves(agent_runs: list[AgentRun], oracle_runs: list[OracleRun],
                  out_path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(8.0, 5.0))
    for run in sorted(agent_runs, key=lambda r: r.name):
        if not run.curves:
            continue
        merged = None
        for seed, curve in sorted(run.curves.items()):
            series = curve.set_index("step")["return_economic"]
            series.name = f"seed{seed}"
            merged = series.to_frame() if merged is None \
                else merged.join(series, how="outer")
        merged = merged.sort_index().ffill().dropna()
        mean = merged.mean(axis=1)
        std = merged.std(axis=1, ddof=0)
        line, = ax.plot(mean.index, mean.values / 1e3, label=run.name)
        ax.fill_between(mean.index, (mean - std).values / 1e3,
                        (mean + std).values / 1e3,
                        alpha=0.2, color=line.get_color())

    seen = set()
    for oracle in oracle_runs:
        key = (oracle.variant, round(oracle.total_return, 6))
        if key in seen:
            continue
        seen.add(key)
        style = "--" if oracle.variant == "full" else ":"
        label = "oracle (DP)" if oracle.variant == "full" else "oracle (BES only)"
        ax.axhline(oracle.total_return / 1e3, linestyle=style, color="black",
                   linewidth=1.2, label=label)

    ax.set_xlabel("environment steps")
    ax.set_ylabel("episodic return [kC$]")
    ax.legend(loc="lower right", fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path


def build_report(runs_dir: str | Path, out_dir: str | Path) -> dict[str, Path]:
    """Load runs, enforce oracle dominance, and emit table + figure files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    agent_runs, oracle_runs = load_runs(runs_dir)
    check_dominance(agent_runs, oracle_runs)
    outputs: dict[str, Path] = {}
    if agent_runs:
        csv_path, md_path = write_table(agent_runs, out_dir)
        outputs["table_csv"] = csv_path
        outputs["table_md"] = md_path
    svg = render_curves(agent_runs, oracle_runs, out_dir / "training_curves.svg")
    outputs["curves_svg"] = svg
    return outputs
