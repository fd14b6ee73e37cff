"""Episodic dispatch environment for the hybrid plant.

One step works through a fixed pipeline: decode the discrete action into MW
setpoints, project the setpoints onto the feasible set (P2G first, then BES,
then GT, each reduced toward zero), advance the device models, settle the
power balance against the grid, and hand the agent the economic reward plus
any training-time shaping delta.  Selling is the only grid interaction;
storage and conversion may only consume renewable power, and the GT burns
fuel held in the gas store at the start of the step.

The environment is deterministic: the same instance and action sequence
always produce the same rewards.  One instance of :class:`DispatchEnv` is
single-threaded; create one per worker for parallel training runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import plant
from .data import EpisodeInstance
from .plant import GtMode, GtStatus, PlantParams
from .shaping import (AttributionLedger, RunningMeanPrice, ShapingConfig,
                      attribution_on_charge, attribution_on_discharge,
                      inactivity_penalty_step, soc_penalty)

TEMPORAL_FEATURE_PERIODS = {
    "hour_of_day": 24.0,
    "week_of_year": 52.0,
    "month_of_year": 12.0,
}


@dataclass(frozen=True)
class ActionSpec:
    """Discrete setpoint levels for the three action dimensions.

    Levels are normalized so that index 0 of every dimension is the least
    active option: GT ascending from 0, P2G starting at 0 with magnitude
    ascending, BES ascending from full charge to full discharge.  The joint
    index enumerates (GT, P2G, BES) with BES fastest.
    """

    gt_levels: tuple[float, ...] = (0.0, 32.6)
    p2g_levels: tuple[float, ...] = (0.0, -30.0)
    bes_levels: tuple[float, ...] = (-20.0, 0.0, 20.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "gt_levels", tuple(sorted(self.gt_levels)))
        object.__setattr__(self, "p2g_levels",
                           tuple(sorted(self.p2g_levels, reverse=True)))
        object.__setattr__(self, "bes_levels", tuple(sorted(self.bes_levels)))
        for name in ("gt_levels", "p2g_levels", "bes_levels"):
            levels = getattr(self, name)
            if len(levels) < 2:
                raise ValueError(f"{name} needs at least two entries")
            if 0.0 not in levels:
                raise ValueError(f"{name} must include 0")

    @property
    def head_sizes(self) -> tuple[int, int, int]:
        return len(self.gt_levels), len(self.p2g_levels), len(self.bes_levels)

    @property
    def n_actions(self) -> int:
        n_gt, n_p2g, n_bes = self.head_sizes
        return n_gt * n_p2g * n_bes

    def joint_index(self, i_gt: int, i_p2g: int, i_bes: int) -> int:
        n_gt, n_p2g, n_bes = self.head_sizes
        if not (0 <= i_gt < n_gt and 0 <= i_p2g < n_p2g and 0 <= i_bes < n_bes):
            raise IndexError(f"head indices ({i_gt}, {i_p2g}, {i_bes}) out of range")
        return (i_gt * n_p2g + i_p2g) * n_bes + i_bes

    def decode_joint(self, index: int) -> tuple[float, float, float]:
        if not 0 <= index < self.n_actions:
            raise IndexError(f"action index {index} out of range "
                             f"[0, {self.n_actions})")
        _, n_p2g, n_bes = self.head_sizes
        i_bes = index % n_bes
        rest = index // n_bes
        return (self.gt_levels[rest // n_p2g],
                self.p2g_levels[rest % n_p2g],
                self.bes_levels[i_bes])

    def decode_heads(self, i_gt: int, i_p2g: int, i_bes: int) -> tuple[float, float, float]:
        return self.decode_joint(self.joint_index(i_gt, i_p2g, i_bes))

    def total_abs_power(self, index: int) -> float:
        gt, p2g, bes = self.decode_joint(index)
        return abs(gt) + abs(p2g) + abs(bes)

    def validate_against(self, params: PlantParams) -> None:
        if any(not 0.0 <= p <= params.gt_power_max_mw for p in self.gt_levels):
            raise ValueError("gt_levels outside [0, gt_power_max]")
        if any(p != 0.0 and not params.p2g_power_max_mw <= p <= params.p2g_power_min_mw
               for p in self.p2g_levels):
            raise ValueError("nonzero p2g_levels outside the admissible band")
        if any(not params.bes_power_min_mw <= p <= params.bes_power_max_mw
               for p in self.bes_levels):
            raise ValueError("bes_levels outside the BES power limits")


def decode_action(action, spec: ActionSpec) -> tuple[float, float, float]:
    """Decode a joint index (int) or per-head index triple into MW setpoints."""
    if isinstance(action, (int, np.integer)):
        return spec.decode_joint(int(action))
    i_gt, i_p2g, i_bes = (int(a) for a in action)
    return spec.decode_heads(i_gt, i_p2g, i_bes)


@dataclass(frozen=True)
class EnvConfig:
    """Observation and action-space wiring of the environment."""

    action_spec: ActionSpec = field(default_factory=ActionSpec)
    wind_capacity_mw: float = 31.5
    price_scale: float = 1000.0
    # Gas-store SOC divisor for the observation.  One charging hour moves the
    # SOC by ~0.003, far too little for a network input in [0, 1]; desk-scale
    # configs set this near the episode's reachable maximum.
    p2g_soc_scale: float = 1.0
    temporal_features: tuple[str, ...] = ()
    forecast_horizons: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        unknown = set(self.temporal_features) - set(TEMPORAL_FEATURE_PERIODS)
        if unknown:
            raise ValueError(f"unknown temporal features: {sorted(unknown)}")
        if any(h < 1 for h in self.forecast_horizons):
            raise ValueError("forecast horizons must be >= 1 step")

    @property
    def observation_size(self) -> int:
        return 5 + 2 * len(self.temporal_features) + len(self.forecast_horizons)


@dataclass(frozen=True)
class PlantState:
    """Joint storage/turbine state carried between steps."""

    bes_soc: float
    p2g_soc: float
    gt: GtStatus

    def key(self) -> tuple:
        return (self.bes_soc, self.p2g_soc, self.gt.mode.value, self.gt.run_hours)


# ---------------------------------------------------------------------------
# Safety projection: reduce each requested setpoint toward zero until the
# joint dispatch is feasible.  Order P2G -> BES -> GT resolves the coupling
# through the renewable-power budget deterministically.


def project_p2g(requested_mw: float, p_re_mw: float, p2g_soc: float,
                params: PlantParams) -> float:
    if requested_mw == 0.0:
        return 0.0
    min_mag = -params.p2g_power_min_mw
    max_mag = -params.p2g_power_max_mw
    mag = min(max(-requested_mw, min_mag), max_mag, p_re_mw)
    conv = params.eta_p2g * params.alpha_p2g_lbs_per_mwh
    room_mag = (1.0 - p2g_soc) * params.p2g_capacity_lbs / (conv * params.dt_hours)
    mag = min(mag, room_mag)
    if mag < min_mag:
        return 0.0
    return -mag


def project_bes(requested_mw: float, p_re_mw: float, p2g_projected_mw: float,
                bes_soc: float, params: PlantParams) -> float:
    if requested_mw == 0.0:
        return 0.0
    cap, dt = params.bes_capacity_mwh, params.dt_hours
    if requested_mw < 0.0:
        # Charging is limited to renewable power left over after P2G.
        power = max(requested_mw, params.bes_power_min_mw,
                    -(p_re_mw + p2g_projected_mw))
        room = (params.bes_soc_max - bes_soc) * cap / (params.eta_ch * dt)
        return min(max(power, -room), 0.0)
    headroom = (bes_soc - params.bes_soc_min) * cap / dt
    return max(min(requested_mw, params.bes_power_max_mw, headroom), 0.0)


def project_gt(requested_mw: float, status: GtStatus, fuel_stock_lbs: float,
               params: PlantParams) -> float:
    if requested_mw <= 0.0:
        return 0.0
    dt = params.dt_hours
    if status.mode == GtMode.OFF:
        su = params.startup_hours
        budget_rate = (fuel_stock_lbs
                       - params.startup_fuel_rate_lbs_per_h * su) / (dt - su)
    else:
        budget_rate = fuel_stock_lbs / dt
    power = min(requested_mw, params.gt_power_max_mw,
                plant.gt_max_power_for_rate(budget_rate, params))
    return max(power, 0.0)


def project_setpoints(setpoints: tuple[float, float, float], state: PlantState,
                      p_re_mw: float, params: PlantParams) -> tuple[float, float, float]:
    """Project requested (GT, P2G, BES) setpoints onto the feasible set.

    Always succeeds; the all-zero action is feasible in every state.  The
    result satisfies the sell-only grid constraint and the renewable-power
    budget by construction.
    """
    p_gt_req, p_p2g_req, p_bes_req = setpoints
    p_p2g = project_p2g(p_p2g_req, p_re_mw, state.p2g_soc, params)
    p_bes = project_bes(p_bes_req, p_re_mw, p_p2g, state.bes_soc, params)
    fuel_stock = state.p2g_soc * params.p2g_capacity_lbs
    p_gt = project_gt(p_gt_req, state.gt, fuel_stock, params)
    return p_gt, p_p2g, p_bes


# ---------------------------------------------------------------------------
# One simulation step


@dataclass(frozen=True)
class StepRecord:
    """Everything that happened in one step, for logs and reward bookkeeping.

    Economic fields always reflect the true plant economics; reward shaping
    only ever shows up in ``shaping_delta`` (zero in evaluation mode), so
    ``reward = revenue - c_bes - c_gt - c_p2g + shaping_delta`` holds in both
    modes.
    """

    t: int
    action_index: int
    p_gt_set: float
    p_p2g_set: float
    p_bes_set: float
    p_gt_eff: float
    p_p2g_eff: float
    p_bes_eff: float
    p_re: float
    p_grid: float
    price: float
    revenue: float
    c_bes: float
    c_gt: float
    c_p2g: float
    fuel_generated_lbs: float
    fuel_burned_lbs: float
    shaping_delta: float
    reward: float
    done: bool

    @property
    def economic_reward(self) -> float:
        return self.revenue - self.c_bes - self.c_gt - self.c_p2g


CSV_FIELDS = [f for f in StepRecord.__dataclass_fields__]


class DispatchLog:
    """Per-step dispatch records of one episode plus summary statistics."""

    def __init__(self, records: list[StepRecord] | None = None):
        self.records: list[StepRecord] = records or []

    def append(self, record: StepRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def reward_total(self) -> float:
        return sum(r.reward for r in self.records)

    def economic_total(self) -> float:
        return sum(r.economic_reward for r in self.records)

    def counts(self) -> dict[str, int]:
        """Dispatch statistics over the episode (start/operating-hour counts)."""
        gt_on = [r.p_gt_eff > 0.0 for r in self.records]
        starts = sum(1 for i, on in enumerate(gt_on)
                     if on and (i == 0 or not gt_on[i - 1]))
        return {
            "gt_starts": starts,
            "gt_hours": sum(gt_on),
            "p2g_hours": sum(1 for r in self.records if r.p_p2g_eff < 0.0),
            "bes_charge_steps": sum(1 for r in self.records if r.p_bes_eff < 0.0),
            "bes_discharge_steps": sum(1 for r in self.records if r.p_bes_eff > 0.0),
        }

    def to_csv(self, path: str | Path) -> None:
        import csv as _csv
        with Path(path).open("w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(CSV_FIELDS)
            for r in self.records:
                writer.writerow([getattr(r, f) for f in CSV_FIELDS])


def simulate_step(state: PlantState, setpoints: tuple[float, float, float],
                  p_re_mw: float, price: float, params: PlantParams,
                  t: int = 0, action_index: int = -1,
                  done: bool = False) -> tuple[PlantState, StepRecord]:
    """Project setpoints, advance all devices, and settle the grid exchange.

    Pure function of its inputs; the returned record carries the unshaped
    economic reward (``shaping_delta`` 0).
    """
    p_gt, p_p2g, p_bes = project_setpoints(setpoints, state, p_re_mw, params)

    fuel_stock = state.p2g_soc * params.p2g_capacity_lbs
    p2g_out = plant.p2g_step(state.p2g_soc, p_p2g, params)
    bes_out = plant.bes_step(state.bes_soc, p_bes, params)
    gt_out = plant.gt_step(state.gt, p_gt, fuel_stock, params)

    p2g_soc = p2g_out.new_soc - gt_out.fuel_lbs / params.p2g_capacity_lbs
    p2g_soc = min(max(p2g_soc, 0.0), 1.0)
    new_state = PlantState(bes_out.new_soc, p2g_soc, gt_out.new_status)

    p_grid = (p_re_mw + bes_out.effective_power_mw + gt_out.effective_power_mw
              + p2g_out.effective_power_mw)
    revenue = p_grid * price * params.dt_hours
    reward = revenue - bes_out.cost - gt_out.cost - p2g_out.cost

    record = StepRecord(
        t=t, action_index=action_index,
        p_gt_set=p_gt, p_p2g_set=p_p2g, p_bes_set=p_bes,
        p_gt_eff=gt_out.effective_power_mw,
        p_p2g_eff=p2g_out.effective_power_mw,
        p_bes_eff=bes_out.effective_power_mw,
        p_re=p_re_mw, p_grid=p_grid, price=price,
        revenue=revenue, c_bes=bes_out.cost, c_gt=gt_out.cost,
        c_p2g=p2g_out.cost,
        fuel_generated_lbs=p2g_out.fuel_lbs, fuel_burned_lbs=gt_out.fuel_lbs,
        shaping_delta=0.0, reward=reward, done=done,
    )
    return new_state, record


# ---------------------------------------------------------------------------


class DispatchEnv:
    """Gym-style episodic environment over one :class:`EpisodeInstance`.

    ``training=True`` applies the configured reward shaping; in evaluation
    mode the reward equals the raw economics and the dispatch log is
    identical for identical action sequences regardless of shaping.
    """

    def __init__(self, instance: EpisodeInstance,
                 params: PlantParams | None = None,
                 config: EnvConfig | None = None,
                 shaping_config: ShapingConfig | None = None,
                 training: bool = False):
        if len(instance) < 1:
            raise ValueError("episode instance must contain at least one step")
        self.instance = instance
        self.params = params or PlantParams()
        self.params.validate()
        self.config = config or EnvConfig()
        self.config.action_spec.validate_against(self.params)
        self.shaping = shaping_config or ShapingConfig()
        self.shaping.validate()
        self.training = training

        self._ledger = AttributionLedger()
        self._price_mean = RunningMeanPrice()
        self._state: PlantState | None = None
        self._t = 0
        self._done = False
        self.log = DispatchLog()

    @property
    def spec(self) -> ActionSpec:
        return self.config.action_spec

    @property
    def n_actions(self) -> int:
        return self.spec.n_actions

    @property
    def observation_size(self) -> int:
        return self.config.observation_size

    @property
    def state(self) -> PlantState:
        if self._state is None:
            raise RuntimeError("reset() must be called before reading state")
        return self._state

    @property
    def t(self) -> int:
        return self._t

    def initial_state(self) -> PlantState:
        return PlantState(self.params.bes_soc_min, 0.0, GtStatus.off())

    def reset(self) -> np.ndarray:
        self._state = self.initial_state()
        self._t = 0
        self._done = False
        self.log = DispatchLog()
        self._ledger.reset()
        seed = self.shaping.inactivity_penalty.initial_mean
        if seed is None:
            first_day = self.instance.prices[: min(24, len(self.instance))]
            seed = float(np.mean(first_day))
        self._price_mean.mean = seed
        return self.build_observation(self._state, 0)

    def step(self, action) -> tuple[np.ndarray, float, bool, StepRecord]:
        if self._state is None:
            raise RuntimeError("reset() must be called before step()")
        if self._done:
            raise RuntimeError("step() called after the episode ended")

        t = self._t
        setpoints = decode_action(action, self.spec)
        if isinstance(action, (int, np.integer)):
            action_index = int(action)
        else:
            action_index = self.spec.joint_index(*(int(a) for a in action))
        p_re = float(self.instance.wind_mw[t])
        price = float(self.instance.prices[t])
        done = t + 1 >= len(self.instance)

        prev_soc_p2g = self._state.p2g_soc
        new_state, record = simulate_step(
            self._state, setpoints, p_re, price, self.params,
            t=t, action_index=action_index, done=done)

        delta = 0.0
        if self.training and self.shaping.any_enabled():
            if self.shaping.cost_attribution.enabled:
                if record.p_p2g_eff < 0.0:
                    d, _ = attribution_on_charge(
                        record.c_p2g, record.p_p2g_eff, price,
                        self.params.dt_hours, self._ledger)
                    delta += d
                if record.fuel_burned_lbs > 0.0:
                    d, _ = attribution_on_discharge(
                        prev_soc_p2g, new_state.p2g_soc, self._ledger)
                    delta += d
            if self.shaping.soc_penalty.enabled:
                delta -= soc_penalty(new_state.p2g_soc, self.shaping.soc_penalty)
            if self.shaping.inactivity_penalty.enabled:
                delta -= inactivity_penalty_step(
                    price, record.p_p2g_eff, p_re, self._price_mean,
                    self.shaping.inactivity_penalty,
                    self.params.p2g_power_min_mw)

        if delta != 0.0:
            record = StepRecord(**{
                **{f: getattr(record, f) for f in CSV_FIELDS},
                "shaping_delta": delta,
                "reward": record.reward + delta,
            })

        self._state = new_state
        self._t = t + 1
        self._done = done
        self.log.append(record)
        obs = self.build_observation(new_state, self._t)
        return obs, record.reward, done, record

    def project(self, setpoints: tuple[float, float, float]) -> tuple[float, float, float]:
        """Project raw setpoints in the environment's current state."""
        p_re = float(self.instance.wind_mw[min(self._t, len(self.instance) - 1)])
        return project_setpoints(setpoints, self.state, p_re, self.params)

    def build_observation(self, state: PlantState, t: int) -> np.ndarray:
        """Assemble and scale the observation vector for time step ``t``.

        Past the final step the exogenous features are held at their last
        value (the terminal observation is never used for bootstrapping).
        """
        n = len(self.instance)
        tt = min(t, n - 1)
        cfg = self.config
        feats = [
            float(self.instance.wind_mw[tt]) / cfg.wind_capacity_mw,
            float(self.instance.prices[tt]) / cfg.price_scale,
            state.bes_soc,
            state.p2g_soc / cfg.p2g_soc_scale,
            state.gt.mode.value / 2.0,
        ]
        if cfg.temporal_features:
            ts = self.instance.timestamp(tt)
            for name in cfg.temporal_features:
                period = TEMPORAL_FEATURE_PERIODS[name]
                if name == "hour_of_day":
                    counter = float(ts.hour)
                elif name == "week_of_year":
                    counter = float(ts.isocalendar()[1] - 1)
                else:  # month_of_year
                    counter = float(ts.month - 1)
                angle = 2.0 * math.pi * counter / period
                feats.append(math.sin(angle))
                feats.append(math.cos(angle))
        for h in cfg.forecast_horizons:
            feats.append(float(self.instance.prices[min(tt + h, n - 1)])
                         / cfg.price_scale)
        return np.array(feats, dtype=float)
