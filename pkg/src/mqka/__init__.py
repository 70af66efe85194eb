"""Simulator for circle-type multiparty quantum key agreement under collusion."""

from mqka.adversary import (
    CoalitionSpec,
    flip_feasibility,
    known_final_key_period,
    liu_distance_set,
)
from mqka.harness import Scenario, run_scenario, sweep
from mqka.protocol import (
    ProtocolConfig,
    build_topology,
    cabello_efficiency,
    qubit_efficiency,
    run_session,
)

__all__ = [
    "CoalitionSpec",
    "ProtocolConfig",
    "Scenario",
    "build_topology",
    "cabello_efficiency",
    "flip_feasibility",
    "known_final_key_period",
    "liu_distance_set",
    "qubit_efficiency",
    "run_scenario",
    "run_session",
    "sweep",
]
