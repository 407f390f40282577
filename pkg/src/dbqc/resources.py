"""Analytic resource model and reconciliation against a session ledger.

Setup: one Bell pair per non-identity factor of every encoded operator, two
classical bits per pair plus one correction bit per data qubit. Compute:
transversal single-block gates are free; each logical two-block gate and each
T gate is priced as one non-local controlled gate between two leaves (3 pairs,
4 bits in a star); T also uses one magic state. Verify: 2 pairs and 1 readout
bit per trap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .network import PHASES, ResourceLedger
from .pauli import PauliString, StabilizerCode, validate_code, weight
from .protocols import LogicalGate, UnsupportedGateError

STAR_CNOT_COST = (3, 4)


@dataclass(frozen=True)
class CostPrediction:
    setup: tuple[int, int] = (0, 0)
    compute: tuple[int, int] = (0, 0)
    verify: tuple[int, int] = (0, 0)
    magic_states: int = 0
    extended: bool = False

    @property
    def totals(self) -> tuple[int, int]:
        return (self.setup[0] + self.compute[0] + self.verify[0],
                self.setup[1] + self.compute[1] + self.verify[1])

    def phase(self, name: str) -> tuple[int, int]:
        return getattr(self, name)

    def as_dict(self) -> dict:
        return {
            "setup": {"bell": self.setup[0], "classical": self.setup[1]},
            "compute": {"bell": self.compute[0], "classical": self.compute[1]},
            "verify": {"bell": self.verify[0], "classical": self.verify[1]},
            "totals": {"bell": self.totals[0], "classical": self.totals[1]},
            "magic_states": self.magic_states,
            "model": "extended" if self.extended else "star",
        }


def predict_encoding(operators: Sequence[PauliString]) -> tuple[int, int]:
    """Cost of distributed encoding of an arbitrary operator set over a star."""
    bell = sum(weight(op) for op in operators)
    n = operators[0].n if operators else 0
    return bell, 2 * bell + n


def predict_setup(code: StabilizerCode) -> tuple[int, int]:
    problems = validate_code(code)
    if problems:
        raise ValueError("invalid code: " + "; ".join(problems))
    return predict_encoding(code.operators)


def alg2_cost(hops: int) -> tuple[int, int]:
    """Non-local controlled gate across a route of the given hop count.

    The swap uses one elementary pair per hop and two bits per intermediary;
    a swapped link is charged once more when the gate consumes it.
    """
    if hops < 1:
        raise ValueError("hop count must be positive")
    return hops + (1 if hops >= 2 else 0), 2 * (hops - 1) + 2


def predict_compute(gates: Sequence[LogicalGate], code: StabilizerCode | None = None,
                    cnot_cost: tuple[int, int] = STAR_CNOT_COST) -> tuple[int, int]:
    bell = bits = 0
    for g in gates:
        if g.kind in ("I", "H", "S"):
            continue
        if g.kind in ("CNOT", "CZ", "T"):
            bell += cnot_cost[0]
            bits += cnot_cost[1]
        else:
            raise UnsupportedGateError(g.kind)
    return bell, bits


def magic_states_needed(gates: Sequence[LogicalGate]) -> int:
    return sum(1 for g in gates if g.kind == "T")


def predict_verify(k_trap: int) -> tuple[int, int]:
    if k_trap < 0:
        raise ValueError("trap count must be non-negative")
    return 2 * k_trap, k_trap


def predict_session(code: StabilizerCode, gates: Sequence[LogicalGate], k_trap: int,
                    blocks: int = 1) -> CostPrediction:
    sb, sc = predict_setup(code)
    return CostPrediction(
        setup=(sb * blocks, sc * blocks),
        compute=predict_compute(gates, code),
        verify=predict_verify(k_trap),
        magic_states=magic_states_needed(gates),
    )


@dataclass
class Reconciliation:
    predicted: CostPrediction
    observed: dict[str, tuple[int, int]]
    deltas: dict[str, tuple[int, int]]
    physical: dict[str, tuple[int, int]]
    outside_model: tuple[int, int]
    flags: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flags

    @property
    def observed_totals(self) -> tuple[int, int]:
        return (sum(v[0] for v in self.observed.values()), sum(v[1] for v in self.observed.values()))

    def as_dict(self) -> dict:
        return {
            "predicted": self.predicted.as_dict(),
            "observed_model": {k: list(v) for k, v in self.observed.items()},
            "observed_model_totals": list(self.observed_totals),
            "deltas": {k: list(v) for k, v in self.deltas.items()},
            "physical_per_phase": {k: list(v) for k, v in self.physical.items()},
            "outside_model": list(self.outside_model),
            "flags": self.flags,
            "match": self.ok,
        }


def reconcile(prediction: CostPrediction, ledger: ResourceLedger) -> Reconciliation:
    """Compare predicted per-phase costs with the ledger's cost-model view."""
    observed = ledger.model_by_phase()
    deltas = {}
    flags = []
    for ph in PHASES:
        want = prediction.phase(ph)
        got = observed[ph]
        d = (got[0] - want[0], got[1] - want[1])
        deltas[ph] = d
        if d != (0, 0):
            flags.append(f"{ph}: {d[0]:+d} Bell pairs, {d[1]:+d} classical bits")
    if ledger.magic_states != prediction.magic_states:
        flags.append(f"magic states: {ledger.magic_states - prediction.magic_states:+d}")
    return Reconciliation(prediction, observed, deltas, ledger.by_phase(), ledger.outside_model(), flags)
