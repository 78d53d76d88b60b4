"""Power allocation and SIC decode orders for multi-carrier uplink NOMA."""

from .capacity import PowerAllocation, check_polymatroid, sic_rates, subset_capacity
from .channel import ChannelSet, Scenario, generate_channels, load_channels, save_channels
from .minpmac import SolverOptions, max_sum_rate, solve_min_energy, verify_solution

__version__ = "0.1.0"

__all__ = [
    "ChannelSet",
    "PowerAllocation",
    "Scenario",
    "SolverOptions",
    "check_polymatroid",
    "generate_channels",
    "load_channels",
    "max_sum_rate",
    "save_channels",
    "sic_rates",
    "solve_min_energy",
    "subset_capacity",
    "verify_solution",
]
