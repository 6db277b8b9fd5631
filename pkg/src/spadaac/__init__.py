"""Photon-counting SPAD receiver model with automatic attenuation control."""
__version__ = "0.1.0"

from .aac import (
    AacSolution,
    Algorithm,
    SolverSettings,
    attenuation_from_targets,
    no_attenuation,
    solve,
    solve_rate_max,
    solve_trigger_criterion,
)
from .channel import (
    ChannelEstimate,
    Constellation,
    CountModel,
    ReceiverConfig,
    count_pmf,
    k_max,
    square_root_constellation,
    trigger_probability,
)
from .rate import achievable_rate, concavity_scan, rate_report
from .ser import DecisionRule, SerReport, ml_thresholds, ser_at, symbol_error_rate
from .simulator import (
    EmpiricalCounts,
    SimulationMode,
    SimulationPlan,
    simulate_counts,
    simulate_ser,
)

__all__ = [
    "AacSolution", "Algorithm", "SolverSettings", "attenuation_from_targets", "no_attenuation",
    "solve", "solve_rate_max", "solve_trigger_criterion",
    "ChannelEstimate", "Constellation", "CountModel", "ReceiverConfig", "count_pmf", "k_max",
    "square_root_constellation", "trigger_probability",
    "achievable_rate", "concavity_scan", "rate_report",
    "DecisionRule", "SerReport", "ml_thresholds", "ser_at", "symbol_error_rate",
    "EmpiricalCounts", "SimulationMode", "SimulationPlan", "simulate_counts", "simulate_ser",
]
