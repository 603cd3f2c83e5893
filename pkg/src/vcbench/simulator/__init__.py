from .config import Background, Burst, Client, Feedback, SimConfig
from .engine import GroundTruth, SessionOutput, SimulationResult, regional_lb_scenario, simulate
from .writer import wire_length, write_capture

__all__ = [
    "Background", "Burst", "Client", "Feedback", "GroundTruth", "SessionOutput", "SimConfig",
    "SimulationResult", "regional_lb_scenario", "simulate", "wire_length", "write_capture",
]
