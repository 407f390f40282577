"""Distributed blind quantum computation over a network of single-qubit servers."""

from .network import Network, star_topology, line_topology, parse_topology
from .pauli import PauliString, StabilizerCode, steane_code
from .protocols import LogicalGate, encode_distributed, execute_logical_sequence, parse_gates

__version__ = "0.1.0"

__all__ = [
    "LogicalGate",
    "Network",
    "PauliString",
    "StabilizerCode",
    "encode_distributed",
    "execute_logical_sequence",
    "line_topology",
    "parse_gates",
    "parse_topology",
    "star_topology",
    "steane_code",
]
