"""Covariance-based asynchronous activity detection for cell-free massive MIMO."""
from .model import (
    ReceivedData,
    Scenario,
    SystemConfig,
    generate_scenario,
    simulate_trial,
    synthesize_received,
    true_indicator,
)

__version__ = "0.1.0"

__all__ = [
    "ReceivedData",
    "Scenario",
    "SystemConfig",
    "generate_scenario",
    "simulate_trial",
    "synthesize_received",
    "true_indicator",
]
