"""Optimal-dispatch benchmarks: gridded dynamic programming and brute force.

``dp_solve`` runs backward induction over a discretized storage state
(battery SOC x gas-store SOC x GT run-hour counter) and the same discrete
action set the agents use.  Transitions replicate the environment's
projection and device arithmetic in vectorized form; successor battery SOCs
are snapped to the nearest grid point while the continuation value is
interpolated linearly along the gas-store axis (one gas-store cell is
smaller than a single charging step, so nearest-point snapping there badly
misprices fuel).  The returned schedule is extracted by a forward pass that
re-simulates candidate actions in the exact environment (so the reported
return carries no grid bias) and breaks value ties toward the
least-intervention action (smallest total |setpoint|, then lowest index).

``brute_force`` exhaustively searches all action sequences through the
exact scalar environment step, with the same tie-breaking order.  Identical
action prefixes reach bit-identical plant states, so results are memoized
on (step, state) — a pure speed-up that cannot change the outcome because
the step function is a pure function of (state, action, step); set
``memoize=False`` to run the plain tree search.

The gas-store axis of the DP grid spans only the range reachable within the
episode (full-power charging every step), which keeps the snap error small
on short instances.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import EpisodeInstance
from .env import ActionSpec, DispatchLog, PlantState, simulate_step
from .plant import GtStatus, PlantParams


class OracleBudgetError(RuntimeError):
    """Raised when an oracle run would exceed its configured budget."""


@dataclass(frozen=True)
class DpGrid:
    """Resolution of the dynamic-programming state grid."""

    bes_points: int = 101
    p2g_points: int = 201
    gt_hour_cap: int = 9       # run-hour counter saturates here (cost is stationary)
    workers: int = 1
    max_cells: float = 2.0e9   # budget on steps x states x actions

    def validate(self) -> None:
        if self.bes_points < 2 or self.p2g_points < 2 or self.gt_hour_cap < 1:
            raise ValueError("grid resolutions must be positive")


@dataclass
class OracleResult:
    """Outcome of an oracle run: exact re-simulated return plus the schedule."""

    total_return: float
    schedule: list[int]
    log: DispatchLog
    grid_value: float | None = None   # DP value at the initial grid state


def sell_only_return(instance: EpisodeInstance, dt_hours: float = 1.0) -> float:
    """Return from selling all renewable power immediately (no storage, no GT)."""
    return float(np.sum(instance.wind_mw * instance.prices) * dt_hours)


def canonical_action_order(spec: ActionSpec,
                           allowed_actions: list[int] | None = None) -> list[int]:
    """Joint indices sorted by (total |setpoint| power, index)."""
    indices = range(spec.n_actions) if allowed_actions is None else allowed_actions
    return sorted(indices, key=lambda a: (spec.total_abs_power(a), a))


def bes_only_actions(spec: ActionSpec) -> list[int]:
    """Joint indices that keep both GT and P2G at zero."""
    out = []
    for a in range(spec.n_actions):
        gt, p2g, _ = spec.decode_joint(a)
        if gt == 0.0 and p2g == 0.0:
            out.append(a)
    return out


# ---------------------------------------------------------------------------
# Vectorized transition kernel.  These mirror the scalar projection/device
# code in env.py and plant.py operation for operation; keep them in sync.


def _p2g_arrays(requested: float, p_re: float, soc_g: np.ndarray,
                params: PlantParams):
    """Projected P2G power, generated fuel, cost, and post-charge SOC per grid SOC."""
    ng = soc_g.shape[0]
    zeros = np.zeros(ng)
    min_mag = -params.p2g_power_min_mw
    if requested == 0.0 or p_re < min_mag:
        return zeros, zeros, zeros, soc_g.copy()
    cap, dt = params.p2g_capacity_lbs, params.dt_hours
    conv = params.eta_p2g * params.alpha_p2g_lbs_per_mwh
    max_mag = -params.p2g_power_max_mw
    mag0 = min(max(-requested, min_mag), max_mag, p_re)
    room_mag = (1.0 - soc_g) * cap / (conv * dt)
    mag = np.minimum(mag0, room_mag)
    on = mag >= min_mag
    power = np.where(on, -mag, 0.0)
    fuel = -power * conv * dt
    headroom = (1.0 - soc_g) * cap
    over = fuel > headroom
    fuel = np.where(over, headroom, fuel)
    power = np.where(over, -fuel / (conv * dt), power)
    forced_off = over & (-power < min_mag)
    on = on & ~forced_off
    power = np.where(on, power, 0.0)
    fuel = np.where(on, fuel, 0.0)
    cost = np.where(
        on, params.k_p2g_fix + fuel * params.kg_per_lb * params.k_p2g_var_per_kg, 0.0)
    new_soc = np.minimum(soc_g + fuel / cap, 1.0)
    return power, fuel, cost, new_soc


def _bes_arrays(requested: float, p_re: float, p2g_power: np.ndarray,
                soc_b: np.ndarray, params: PlantParams):
    """Effective BES power, cost, and new SOC over (bes SOC, p2g SOC) grids."""
    nb, ng = soc_b.shape[0], p2g_power.shape[0]
    col = soc_b[:, None]
    if requested == 0.0:
        zeros = np.zeros((nb, ng))
        return zeros, zeros, np.broadcast_to(col, (nb, ng)).copy()
    cap, dt = params.bes_capacity_mwh, params.dt_hours
    if requested < 0.0:
        power = np.maximum.reduce([
            np.full((1, ng), requested),
            np.full((1, ng), params.bes_power_min_mw),
            -(p_re + p2g_power)[None, :],
        ])
        room = (params.bes_soc_max - col) * cap / (params.eta_ch * dt)
        power = np.minimum(np.maximum(power, -room), 0.0)
        dsoc = -params.eta_ch * power * dt / cap
        new_soc = col + dsoc
        over = new_soc > params.bes_soc_max
        new_soc = np.where(over, params.bes_soc_max, new_soc)
        dsoc = np.where(over, params.bes_soc_max - col, dsoc)
        effective = -dsoc * cap / (params.eta_ch * dt)
    else:
        headroom = (col - params.bes_soc_min) * cap / dt
        power = np.maximum(
            np.minimum(np.minimum(requested, params.bes_power_max_mw), headroom), 0.0)
        deduction = power * dt / cap
        max_deduction = col - params.bes_soc_min
        deduction = np.where(deduction > max_deduction, max_deduction, deduction)
        new_soc = col - deduction
        under = new_soc < params.bes_soc_min
        new_soc = np.where(under, params.bes_soc_min, new_soc)
        deduction = np.where(under, col - params.bes_soc_min, deduction)
        effective = deduction * cap * params.eta_dis / dt
    kp = params.peukert_kp
    dod_term = np.abs((1.0 - new_soc) ** kp - (1.0 - col) ** kp)
    cost = dod_term / (2.0 * params.cycles_to_failure) * params.bes_investment_total
    effective = np.broadcast_to(effective, (nb, ng))
    new_soc = np.broadcast_to(new_soc, (nb, ng))
    cost = np.broadcast_to(cost, (nb, ng))
    return effective, cost, new_soc


def _gt_max_power_for_rate(budget_rate: np.ndarray, params: PlantParams) -> np.ndarray:
    bp = params.fuel_curve_breakpoint_mw
    low_max = params.fuel_curve_low_slope * bp + params.fuel_curve_low_intercept
    high_min = params.fuel_curve_high_slope * bp + params.fuel_curve_high_intercept
    p_high = np.minimum(
        (budget_rate - params.fuel_curve_high_intercept) / params.fuel_curve_high_slope,
        params.gt_power_max_mw)
    p_low = np.maximum(
        (budget_rate - params.fuel_curve_low_intercept) / params.fuel_curve_low_slope,
        0.0)
    return np.where(budget_rate >= high_min, p_high,
                    np.where(budget_rate >= low_max, bp, p_low))


def _gt_fuel_rate(power: np.ndarray, params: PlantParams) -> np.ndarray:
    low = params.fuel_curve_low_slope * power + params.fuel_curve_low_intercept
    high = params.fuel_curve_high_slope * power + params.fuel_curve_high_intercept
    return np.where(power == 0.0, 0.0,
                    np.where(power <= params.fuel_curve_breakpoint_mw, low, high))


def _gt_arrays(requested: float, stock: np.ndarray, n_run: np.ndarray,
               params: PlantParams):
    """Effective GT power, fuel burned, cost, and new run counter over (p2g SOC, n)."""
    ng, nn = stock.shape[0], n_run.shape[0]
    if requested == 0.0:
        zeros = np.zeros((ng, nn))
        return zeros, zeros, zeros, np.zeros((ng, nn), dtype=np.intp)
    dt = params.dt_hours
    su = params.startup_hours
    run_h = dt - su
    startup_fuel = params.startup_fuel_rate_lbs_per_h * su
    starting = (n_run == 0)[None, :]
    stock_col = stock[:, None]
    budget_rate = np.where(starting, (stock_col - startup_fuel) / run_h,
                           stock_col / dt)
    power = np.minimum(requested, _gt_max_power_for_rate(budget_rate, params))
    on = power > 0.0
    power = np.where(on, power, 0.0)
    rate = _gt_fuel_rate(power, params)
    fuel = np.where(starting, startup_fuel + rate * run_h, rate * dt)
    effective = np.where(starting, power * run_h / dt, power)
    fuel = np.where(on, fuel, 0.0)
    effective = np.where(on, effective, 0.0)
    n_new = np.where(on, np.where(starting, 1, n_run[None, :] + 1), 0)
    threshold = params.gt_long_run_threshold
    cost = np.where(on & starting, params.k_cycle,
                    np.where(on & (n_new > threshold), params.k_oper, 0.0))
    return effective, fuel, cost, n_new.astype(np.intp)


def _snap_indices(values: np.ndarray, lo: float, cell: float, n: int) -> np.ndarray:
    idx = np.rint((values - lo) / cell).astype(np.intp)
    return np.clip(idx, 0, n - 1)


class _DpKernel:
    """Precomputed grids plus the per-(step, action) Bellman evaluation."""

    def __init__(self, instance: EpisodeInstance, params: PlantParams,
                 spec: ActionSpec, grid: DpGrid):
        self.instance = instance
        self.params = params
        self.spec = spec
        self.grid = grid
        self.soc_b = np.linspace(params.bes_soc_min, params.bes_soc_max,
                                 grid.bes_points)
        conv = params.eta_p2g * params.alpha_p2g_lbs_per_mwh
        max_charge = -params.p2g_power_max_mw * conv * params.dt_hours
        reach = min(1.0, len(instance) * max_charge / params.p2g_capacity_lbs)
        self.soc_g = np.linspace(0.0, reach, grid.p2g_points)
        self.n_run = np.arange(grid.gt_hour_cap + 1)
        self.cell_b = self.soc_b[1] - self.soc_b[0]
        self.cell_g = self.soc_g[1] - self.soc_g[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        return len(self.soc_b), len(self.soc_g), len(self.n_run)

    def value_at(self, values_t: np.ndarray, state: PlantState) -> float:
        """Continuation value of one exact state: bes snap, p2g interpolation."""
        ib = int(np.clip(round((state.bes_soc - self.soc_b[0]) / self.cell_b),
                         0, len(self.soc_b) - 1))
        im = min(state.gt.run_hours, self.grid.gt_hour_cap)
        pos = min(max(state.p2g_soc / self.cell_g, 0.0),
                  float(len(self.soc_g) - 1))
        ig0 = min(int(pos), len(self.soc_g) - 2)
        w = pos - ig0
        return float((1.0 - w) * values_t[ib, ig0, im]
                     + w * values_t[ib, ig0 + 1, im])

    def action_q(self, action: int, t: int, v_next: np.ndarray) -> np.ndarray:
        """Reward plus snapped continuation value for one action at step t."""
        params = self.params
        p_gt, p_p2g, p_bes = self.spec.decode_joint(action)
        p_re = float(self.instance.wind_mw[t])
        price = float(self.instance.prices[t])

        pp_power, pp_fuel, pp_cost, pp_soc = _p2g_arrays(
            p_p2g, p_re, self.soc_g, params)
        pb_eff, pb_cost, pb_soc = _bes_arrays(
            p_bes, p_re, pp_power, self.soc_b, params)
        stock = self.soc_g * params.p2g_capacity_lbs
        pg_eff, pg_fuel, pg_cost, pg_n = _gt_arrays(
            p_gt, stock, self.n_run, params)

        new_soc_g = np.clip(
            pp_soc[:, None] - pg_fuel / params.p2g_capacity_lbs, 0.0, 1.0)

        p_grid = ((p_re + pb_eff)[:, :, None] + pg_eff[None, :, :]
                  + pp_power[None, :, None])
        reward = (p_grid * price * params.dt_hours
                  - pb_cost[:, :, None] - pg_cost[None, :, :]
                  - pp_cost[None, :, None])

        ib = _snap_indices(pb_soc, self.soc_b[0], self.cell_b, len(self.soc_b))
        ng = len(self.soc_g)
        pos = np.clip(new_soc_g / self.cell_g, 0.0, float(ng - 1))
        ig0 = np.minimum(pos.astype(np.intp), ng - 2)
        w = pos - ig0
        im = np.minimum(pg_n, self.grid.gt_hour_cap)
        ib_b = ib[:, :, None]
        ig0_b, w_b, im_b = ig0[None, :, :], w[None, :, :], im[None, :, :]
        v_interp = ((1.0 - w_b) * v_next[ib_b, ig0_b, im_b]
                    + w_b * v_next[ib_b, ig0_b + 1, im_b])
        return reward + v_interp


def dp_solve(instance: EpisodeInstance, params: PlantParams | None = None,
             spec: ActionSpec | None = None, grid: DpGrid | None = None,
             allowed_actions: list[int] | None = None,
             enforce_budget: bool = True) -> OracleResult:
    """Exact-over-the-grid optimal dispatch via backward induction.

    The reported return comes from re-simulating the extracted schedule in
    the exact environment, not from the gridded value function.
    """
    params = params or PlantParams()
    spec = spec or ActionSpec()
    grid = grid or DpGrid()
    grid.validate()
    order = canonical_action_order(spec, allowed_actions)
    kernel = _DpKernel(instance, params, spec, grid)

    T = len(instance)
    nb, ng, nn = kernel.shape
    cells = float(T) * nb * ng * nn * len(order)
    if enforce_budget and cells > grid.max_cells:
        raise OracleBudgetError(
            f"DP sweep needs {cells:.2e} cell evaluations, over the budget of "
            f"{grid.max_cells:.2e}; use a coarser grid, a shorter instance, "
            "or force the run")

    values = np.zeros((T + 1, nb, ng, nn))
    for t in range(T - 1, -1, -1):
        v_next = values[t + 1]
        v = values[t]
        v.fill(-np.inf)
        if grid.workers > 1:
            with ThreadPoolExecutor(max_workers=grid.workers) as pool:
                for q in pool.map(lambda a: kernel.action_q(a, t, v_next), order):
                    np.maximum(v, q, out=v)
        else:
            for a in order:
                np.maximum(v, kernel.action_q(a, t, v_next), out=v)

    # Forward pass: greedy on exact rewards + gridded continuation values.
    state = PlantState(params.bes_soc_min, 0.0, GtStatus.off())
    schedule: list[int] = []
    log = DispatchLog()
    for t in range(T):
        p_re = float(instance.wind_mw[t])
        price = float(instance.prices[t])
        best = None
        for a in order:
            s2, rec = simulate_step(state, spec.decode_joint(a), p_re, price,
                                    params, t=t, action_index=a, done=t + 1 == T)
            q = rec.reward + kernel.value_at(values[t + 1], s2)
            if best is None or q > best[0]:
                best = (q, a, s2, rec)
        _, a, state, rec = best
        schedule.append(a)
        log.append(rec)

    start = PlantState(params.bes_soc_min, 0.0, GtStatus.off())
    return OracleResult(log.economic_total(), schedule, log,
                        grid_value=kernel.value_at(values[0], start))


def bes_only_solve(instance: EpisodeInstance, params: PlantParams | None = None,
                   spec: ActionSpec | None = None, grid: DpGrid | None = None,
                   enforce_budget: bool = True) -> OracleResult:
    """dp_solve with GT and P2G masked to zero (battery-only benchmark)."""
    spec = spec or ActionSpec()
    return dp_solve(instance, params, spec, grid,
                    allowed_actions=bes_only_actions(spec),
                    enforce_budget=enforce_budget)


def brute_force(instance: EpisodeInstance, params: PlantParams | None = None,
                spec: ActionSpec | None = None,
                allowed_actions: list[int] | None = None,
                memoize: bool = True,
                max_sequences: float = 1e7) -> OracleResult:
    """Exhaustive search over action sequences through the exact environment.

    Ties are broken lexicographically over the canonical action order
    (least intervention first), matching dp_solve's forward pass.
    """
    params = params or PlantParams()
    spec = spec or ActionSpec()
    order = canonical_action_order(spec, allowed_actions)
    T = len(instance)
    if len(order) ** T > max_sequences:
        raise OracleBudgetError(
            f"{len(order)}^{T} action sequences exceed the brute-force budget")

    setpoints = {a: spec.decode_joint(a) for a in order}
    wind = [float(w) for w in instance.wind_mw]
    prices = [float(p) for p in instance.prices]
    memo: dict[tuple, tuple[float, int]] = {}

    def visit(t: int, state: PlantState) -> float:
        if t == T:
            return 0.0
        key = (t, state.key())
        if memoize:
            hit = memo.get(key)
            if hit is not None:
                return hit[0]
        best_v, best_a = -np.inf, -1
        for a in order:
            s2, rec = simulate_step(state, setpoints[a], wind[t], prices[t], params)
            v = rec.reward + visit(t + 1, s2)
            if v > best_v:
                best_v, best_a = v, a
        memo[key] = (best_v, best_a)
        return best_v

    start = PlantState(params.bes_soc_min, 0.0, GtStatus.off())
    if memoize:
        search_value = visit(0, start)
        # Replay the memoized decisions to extract the schedule.
        schedule, log = [], DispatchLog()
        state = start
        for t in range(T):
            _, a = memo[(t, state.key())]
            state, rec = simulate_step(state, setpoints[a], wind[t], prices[t],
                                       params, t=t, action_index=a,
                                       done=t + 1 == T)
            schedule.append(a)
            log.append(rec)
    else:
        def visit_naive(t: int, state: PlantState) -> tuple[float, tuple[int, ...]]:
            if t == T:
                return 0.0, ()
            best = None
            for a in order:
                s2, rec = simulate_step(state, setpoints[a], wind[t], prices[t],
                                        params)
                v, tail = visit_naive(t + 1, s2)
                v += rec.reward
                if best is None or v > best[0]:
                    best = (v, (a,) + tail)
            return best

        search_value, sched = visit_naive(0, start)
        schedule, log = list(sched), DispatchLog()
        state = start
        for t, a in enumerate(schedule):
            state, rec = simulate_step(state, setpoints[a], wind[t], prices[t],
                                       params, t=t, action_index=a,
                                       done=t + 1 == T)
            log.append(rec)

    return OracleResult(log.economic_total(), schedule, log,
                        grid_value=float(search_value))


def snap_error_bound(instance: EpisodeInstance, params: PlantParams,
                     grid: DpGrid) -> float:
    """Loose upper bound (C$) on the value error introduced by SOC snapping.

    Half a grid cell per storage axis and step, priced at the maximum
    observed price via the marginal energy content of each store.
    """
    kernel = _DpKernel(instance, params, ActionSpec(), grid)
    max_price = float(np.max(np.abs(instance.prices)))
    per_step = (0.5 * kernel.cell_b * params.bes_capacity_mwh * params.eta_dis
                + 0.5 * kernel.cell_g * params.p2g_capacity_lbs
                / params.fuel_curve_high_slope) * max_price
    return len(instance) * per_step
