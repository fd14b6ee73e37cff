"""Dispatch laboratory for a wind / battery / power-to-gas / gas-turbine plant.

The package simulates hourly economic dispatch of a hybrid plant selling
power to the grid at wholesale prices, trains DQN / PPO / CEM agents on it,
provides reward-shaping helpers for the delayed payoff of gas storage, and
benchmarks everything against an exact dynamic-programming dispatcher.
"""

__version__ = "0.1.0"
