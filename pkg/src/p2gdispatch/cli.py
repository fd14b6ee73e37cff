"""Command-line entry points: generate, train, oracle, report.

Every run writes a self-describing output directory: the fully resolved
configuration, the episode data with a content hash, per-seed artifacts, and
deterministic aggregate CSVs (identical config and seeds reproduce them
byte for byte).

Exit codes: 0 on success, 2 for configuration errors, 3 for data errors,
4 for runtime failures.
"""

from __future__ import annotations

import functools
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click

from . import __version__
from .agents import (EvalReport, TrainResult, aggregate_reports, cem_train,
                     dqn_train, evaluate, ppo_train)
from .config import (ConfigError, ExperimentConfig, build_instance,
                     config_from_dict, load_config, make_env, resolved_dict,
                     save_resolved)
from .data import DataError, content_hash, generate_cs1, generate_cs2, write_csv
from .oracle import (DpGrid, OracleBudgetError, bes_only_solve, dp_solve,
                     sell_only_return)
from . import report as report_mod

log = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4

TRAINERS = {"dqn": dqn_train, "ppo": ppo_train, "cem": cem_train}


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"config error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)
        except DataError as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA)
        except (OracleBudgetError, RuntimeError, ValueError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_RUNTIME)
    return wrapper


@click.group()
@click.version_option(version=__version__, prog_name="p2gdispatch")
def main() -> None:
    """Dispatch lab for a wind/battery/power-to-gas/gas-turbine plant."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")


# ---------------------------------------------------------------------------
# generate


@main.command()
@click.option("--case", type=click.Choice(["cs1", "cs2"]), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--median-price", type=float, default=84.0, show_default=True)
@click.option("--spike-multiplier", type=float, default=8.0, show_default=True)
@_guarded
def generate(case: str, seed: int, out: str, median_price: float,
             spike_multiplier: float) -> None:
    """Write a synthetic episode instance as CSV."""
    generator = generate_cs1 if case == "cs1" else generate_cs2
    instance = generator(seed, median_price=median_price,
                         spike_multiplier=spike_multiplier)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(instance, out)
    click.echo(f"wrote {len(instance)} rows to {out}")


# ---------------------------------------------------------------------------
# train


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def _write_eval_report(path: Path, seeds: list[int],
                       reports: list[EvalReport]) -> None:
    lines = ["seed," + ",".join(EvalReport.FIELDS)]
    for seed, rep in zip(seeds, reports):
        lines.append(",".join([
            str(seed), _fmt(rep.episodic_reward), str(rep.gt_starts),
            str(rep.gt_hours), str(rep.p2g_hours), str(rep.bes_charge_steps),
            str(rep.bes_discharge_steps)]))
    agg = aggregate_reports(reports)
    for which, pos in (("mean", 0), ("std", 1)):
        lines.append(which + "," + ",".join(
            _fmt(agg[name][pos]) for name in EvalReport.FIELDS))
    path.write_text("\n".join(lines) + "\n")


def _write_curve(path: Path, curve: list[dict]) -> None:
    columns = ["step", "episode", "return_economic", "return_shaped",
               "loss", "exploration"]
    lines = [",".join(columns)]
    for row in curve:
        lines.append(",".join(
            str(row[c]) if isinstance(row[c], int) else _fmt(float(row[c]))
            for c in columns))
    path.write_text("\n".join(lines) + "\n")


def _write_oracle_summary(path: Path, variant: str, result,
                          grid_value: float | None = None) -> None:
    counts = result.log.counts()
    header = ("variant,total_return,grid_value,gt_starts,gt_hours,p2g_hours,"
              "bes_charge_steps,bes_discharge_steps")
    grid_val = result.grid_value if grid_value is None else grid_value
    row = ",".join([
        variant, _fmt(result.total_return),
        _fmt(grid_val) if grid_val is not None else "",
        str(counts["gt_starts"]), str(counts["gt_hours"]),
        str(counts["p2g_hours"]), str(counts["bes_charge_steps"]),
        str(counts["bes_discharge_steps"])])
    path.write_text(header + "\n" + row + "\n")


def train_one_seed(cfg: ExperimentConfig, seed: int,
                   out_dir: Path) -> EvalReport:
    """Train one seed, evaluate greedily, and write per-seed artifacts."""
    instance = build_instance(cfg)
    trainer = TRAINERS[cfg.algo]
    result: TrainResult = trainer(
        lambda training: make_env(instance, cfg, training),
        cfg.agent_config(), seed)
    report, dispatch_log = evaluate(result.policy, make_env(instance, cfg, False))
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_curve(out_dir / "curve.csv", result.curve)
    dispatch_log.to_csv(out_dir / "dispatch_log.csv")
    for name, net in result.nets.items():
        net.save(out_dir / f"{name}.npz")
    return report


def _seed_worker(resolved_cfg: dict, seed: int, seed_dir: str):
    cfg = config_from_dict(resolved_cfg)
    report = train_one_seed(cfg, seed, Path(seed_dir))
    return seed, report


def run_training(cfg: ExperimentConfig, oracle_check: bool | None = None) -> Path:
    """Run all configured seeds, aggregate, and check oracle dominance."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_resolved(cfg, out / "resolved_config.yaml")
    instance = build_instance(cfg)
    write_csv(instance, out / "instance.csv")
    (out / "instance.hash").write_text(
        content_hash((out / "instance.csv").read_bytes()) + "\n")

    seeds = sorted(cfg.train.seeds)
    resolved = resolved_dict(cfg)
    jobs = [(resolved, seed, str(out / f"seed_{seed}")) for seed in seeds]
    if cfg.train.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.train.workers) as pool:
            results = list(pool.map(_seed_worker, *zip(*jobs)))
    else:
        results = [_seed_worker(*job) for job in jobs]
    results.sort(key=lambda pair: pair[0])
    reports = [rep for _, rep in results]
    _write_eval_report(out / "eval_report.csv", seeds, reports)

    do_check = cfg.train.oracle_check if oracle_check is None else oracle_check
    if do_check:
        try:
            oracle = dp_solve(instance, cfg.plant, cfg.env.action_spec,
                              cfg.oracle_grid)
        except OracleBudgetError as exc:
            log.info("skipping oracle dominance check: %s", exc)
        else:
            _write_oracle_summary(out / "oracle_summary.csv", "full", oracle)
            for seed, rep in zip(seeds, reports):
                if rep.episodic_reward > oracle.total_return + 1e-6:
                    raise RuntimeError(
                        f"seed {seed} return {rep.episodic_reward:.3f} exceeds "
                        f"the oracle return {oracle.total_return:.3f}")
    return out


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=False),
              required=True)
@click.option("--algo", type=click.Choice(["dqn", "ppo", "cem"]), default=None,
              help="Override the configured algorithm.")
@click.option("--seeds", default=None,
              help="Comma-separated seed list overriding the config.")
@click.option("--out", default=None, help="Override the output directory.")
@click.option("--workers", type=int, default=None,
              help="Parallel per-seed worker processes.")
@click.option("--oracle-check/--no-oracle-check", default=None,
              help="Force or skip the post-training dominance check.")
@_guarded
def train(config_path: str, algo: str | None, seeds: str | None,
          out: str | None, workers: int | None,
          oracle_check: bool | None) -> None:
    """Train the configured agent over all seeds and aggregate the results."""
    cfg = load_config(config_path)
    if algo:
        cfg.algo = algo
    if seeds:
        try:
            cfg.train.seeds = tuple(int(s) for s in seeds.split(","))
        except ValueError:
            raise ConfigError(f"invalid --seeds list: {seeds!r}") from None
    if out:
        cfg.output_dir = out
    if workers:
        cfg.train.workers = workers
    out_dir = run_training(cfg, oracle_check=oracle_check)
    click.echo(f"training outputs in {out_dir}")


# ---------------------------------------------------------------------------
# oracle


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=False),
              required=True)
@click.option("--bes-only", is_flag=True, default=False,
              help="Mask GT and P2G actions (battery-only benchmark).")
@click.option("--force", is_flag=True, default=False,
              help="Run even when the sweep exceeds the configured budget.")
@click.option("--out", default=None, help="Override the output directory.")
@_guarded
def oracle(config_path: str, bes_only: bool, force: bool,
           out: str | None) -> None:
    """Solve the configured instance with the dynamic-programming benchmark."""
    cfg = load_config(config_path)
    out_dir = Path(out) if out else Path(cfg.output_dir + "-oracle"
                                         + ("-bes-only" if bes_only else ""))
    out_dir.mkdir(parents=True, exist_ok=True)
    save_resolved(cfg, out_dir / "resolved_config.yaml")
    instance = build_instance(cfg)
    write_csv(instance, out_dir / "instance.csv")
    (out_dir / "instance.hash").write_text(
        content_hash((out_dir / "instance.csv").read_bytes()) + "\n")

    solver = bes_only_solve if bes_only else dp_solve
    result = solver(instance, cfg.plant, cfg.env.action_spec, cfg.oracle_grid,
                    enforce_budget=not force)
    variant = "bes_only" if bes_only else "full"
    _write_oracle_summary(out_dir / "oracle_summary.csv", variant, result)
    result.log.to_csv(out_dir / "schedule.csv")
    click.echo(f"{variant} oracle return: {result.total_return:.2f} C$ "
               f"(sell-only baseline {sell_only_return(instance):.2f} C$)")
    click.echo(f"oracle outputs in {out_dir}")


# ---------------------------------------------------------------------------
# report


@main.command("report")
@click.option("--runs", "runs_dir", type=click.Path(exists=False), required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@_guarded
def report_cmd(runs_dir: str, out_dir: str) -> None:
    """Aggregate runs into a results table and training-curve figure."""
    outputs = report_mod.build_report(runs_dir, out_dir)
    for kind, path in outputs.items():
        click.echo(f"{kind}: {path}")


if __name__ == "__main__":
    main()
