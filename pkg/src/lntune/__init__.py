"""Simulated L-network impedance tuning with a Double-DQN agent and classic baselines."""

__version__ = "0.1.0"

PF = 1e-12
