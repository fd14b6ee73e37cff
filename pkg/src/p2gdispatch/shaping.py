"""Reward modifications that make delayed gas-storage payoffs learnable.

Three independently toggleable mechanisms, applied during training only:

* a penalty proportional to how far the gas-store SOC sits below a small
  threshold, nudging the agent to keep fuel available for price spikes;
* a penalty for leaving the P2G system idle while electricity is cheap
  (current price below a running-mean-derived threshold) and enough wind is
  available to run it;
* re-attribution of P2G operating cost and lost renewable sales from the
  hours when fuel is produced to the hours when it is burned, proportional
  to the fraction of the store drained each step.

All mechanisms only alter the reward handed to the agent; logged economics
stay untouched, and the re-attribution telescopes so the episode reward sum
is unchanged whenever the store ends the episode empty.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class SocPenaltyConfig:
    enabled: bool = False
    weight: float = 1000.0
    soc_max: float = 0.01      # no penalty at or above this SOC


@dataclass
class InactivityPenaltyConfig:
    enabled: bool = False
    weight: float = 1000.0
    threshold: float = 0.7     # penalty band as a fraction of the mean price
    mean_lr: float = 0.02      # exponential running-mean update rate
    initial_mean: float | None = None  # None: seed from the first day at reset


@dataclass
class CostAttributionConfig:
    enabled: bool = False


@dataclass
class ShapingConfig:
    soc_penalty: SocPenaltyConfig = field(default_factory=SocPenaltyConfig)
    inactivity_penalty: InactivityPenaltyConfig = field(
        default_factory=InactivityPenaltyConfig)
    cost_attribution: CostAttributionConfig = field(
        default_factory=CostAttributionConfig)

    def validate(self) -> None:
        if self.soc_penalty.weight < 0 or self.inactivity_penalty.weight < 0:
            raise ValueError("penalty weights must be non-negative")
        if not 0.0 < self.soc_penalty.soc_max <= 1.0:
            raise ValueError("soc_penalty.soc_max must lie in (0, 1]")
        if not 0.0 < self.inactivity_penalty.threshold <= 1.0:
            raise ValueError("inactivity threshold must lie in (0, 1]")
        if not 0.0 < self.inactivity_penalty.mean_lr <= 1.0:
            raise ValueError("inactivity mean_lr must lie in (0, 1]")

    def any_enabled(self) -> bool:
        return (self.soc_penalty.enabled or self.inactivity_penalty.enabled
                or self.cost_attribution.enabled)


@dataclass
class AttributionLedger:
    """Withheld P2G cost and lost-sales compensation awaiting release."""

    sum_cost: float = 0.0
    sum_lost_sales: float = 0.0

    def reset(self) -> None:
        self.sum_cost = 0.0
        self.sum_lost_sales = 0.0


@dataclass
class RunningMeanPrice:
    """Exponential running mean of the wholesale price."""

    mean: float = 0.0

    def update(self, price: float, lr: float) -> float:
        self.mean = self.mean + lr * (price - self.mean)
        return self.mean


def soc_penalty(soc_p2g: float, config: SocPenaltyConfig) -> float:
    """Penalty (>= 0) for a gas-store SOC below the configured threshold."""
    return config.weight * max((config.soc_max - soc_p2g) / config.soc_max, 0.0)


def inactivity_penalty_step(price: float, p_p2g_mw: float, p_re_mw: float,
                            state: RunningMeanPrice,
                            config: InactivityPenaltyConfig,
                            p2g_min_power_mw: float) -> float:
    """One penalty evaluation; call exactly once per training step.

    The running mean is updated with the current price on every call, before
    the threshold comparison.  The full weight is returned when the price is
    at or below the threshold, the P2G system is idle, and enough renewable
    power is available to run it at minimum power.
    """
    mean = state.update(price, config.mean_lr)
    threshold = mean * config.threshold
    if price <= threshold and p_p2g_mw == 0.0 and p_re_mw >= -p2g_min_power_mw:
        return config.weight
    return 0.0


def attribution_on_charge(c_p2g: float, p_p2g_mw: float, price: float,
                          dt_hours: float,
                          ledger: AttributionLedger) -> tuple[float, float]:
    """Withhold P2G cost and compensate lost sales while fuel is produced.

    Returns ``(reward_delta, internal_c_p2g)``: the delta refunds the step's
    P2G cost and adds the lost-sales compensation; the internal cost view is
    zero for the step.  No-op when the P2G system is idle.
    """
    if p_p2g_mw >= 0.0:
        return 0.0, c_p2g
    compensation = -p_p2g_mw * price * dt_hours
    ledger.sum_cost += c_p2g
    ledger.sum_lost_sales += compensation
    return c_p2g + compensation, 0.0


def attribution_on_discharge(soc_prev: float, soc_new: float,
                             ledger: AttributionLedger) -> tuple[float, float]:
    """Release withheld cost and compensation in proportion to fuel drawn.

    ``rho`` is the fraction of the stored fuel consumed this step; that share
    of both ledger accumulators is charged against the reward.  Returns
    ``(reward_delta, assigned_c_p2g)``.
    """
    assert soc_prev > 0.0, "fuel drawn from an empty store"
    rho = (soc_prev - soc_new) / soc_prev
    assigned_cost = ledger.sum_cost * rho
    assigned_compensation = ledger.sum_lost_sales * rho
    ledger.sum_cost -= assigned_cost
    ledger.sum_lost_sales -= assigned_compensation
    return -(assigned_cost + assigned_compensation), assigned_cost
