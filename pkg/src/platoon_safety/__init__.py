"""Platoon emergency-braking simulator with infrastructure-assisted warnings."""
from .scenario import Scenario, load_scenario
from .engine import run, SimTrace, RunSummary, detect_collision

__all__ = ["Scenario", "load_scenario", "run", "SimTrace", "RunSummary", "detect_collision"]
__version__ = "0.1.0"
