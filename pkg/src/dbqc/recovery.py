"""Node-failure recovery for Clifford computations.

The client tracks the signed stabilizer generators of the encoded state as
logical Clifford gates run. If server nodes fail, the lost blocks are prepared
again on fresh nodes by encoding the tracked operators, with negative signs
turned into flipped target syndromes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .network import Network
from .pauli import PauliError, PauliString, StabilizerCode, embed, gf2_rank
from .protocols import (
    EncodedBlock,
    LogicalGate,
    ProtocolError,
    encode_operators,
    logical_plan,
)
from .statesim import NonCliffordError, Tableau, tableau_conjugate


class RecoveryError(RuntimeError):
    pass


class CheckpointRequired(NonCliffordError):
    """Raised for gates the stabilizer tracker cannot follow."""


@dataclass(frozen=True)
class Checkpoint:
    code: StabilizerCode
    tableau: Tableau
    gate_index: int
    nodes: tuple[tuple[str, ...], ...]

    @property
    def blocks(self) -> int:
        return len(self.nodes)

    @property
    def operators(self) -> tuple[PauliString, ...]:
        return self.tableau.generators

    def serialize(self) -> str:
        """Plain text: header line, node lines, one signed Pauli per line."""
        lines = [f"checkpoint {self.code.name} {self.code.n} {self.blocks} {self.gate_index}"]
        lines += ["nodes " + " ".join(ns) for ns in self.nodes]
        lines += [str(g) for g in self.tableau.generators]
        return "\n".join(lines) + "\n"


def parse_checkpoint(text: str, code: StabilizerCode) -> Checkpoint:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    try:
        tag, name, n, blocks, index = lines[0].split()
        n, blocks, index = int(n), int(blocks), int(index)
    except ValueError as exc:
        raise RecoveryError("bad checkpoint header") from exc
    if tag != "checkpoint" or n != code.n or name != code.name:
        raise RecoveryError("checkpoint does not belong to this code")
    nodes = []
    for ln in lines[1:1 + blocks]:
        tag, *names = ln.split()
        if tag != "nodes" or len(names) != n:
            raise RecoveryError(f"bad node line {ln!r}")
        nodes.append(tuple(names))
    try:
        gens = tuple(PauliString.parse(ln) for ln in lines[1 + blocks:])
    except PauliError as exc:
        raise RecoveryError(str(exc)) from exc
    if len(gens) != n * blocks or any(g.n != n * blocks for g in gens):
        raise RecoveryError("wrong number or size of tracked operators")
    return Checkpoint(code, Tableau(gens), index, tuple(nodes))


def initial_checkpoint(code: StabilizerCode, blocks: Sequence[EncodedBlock] | Sequence[Sequence[str]]) -> Checkpoint:
    """Tracked group of freshly encoded |0_L...0_L>: generators and logical Z of every block."""
    node_lists = tuple(tuple(b.nodes) if isinstance(b, EncodedBlock) else tuple(b) for b in blocks)
    if any(len(ns) != code.n for ns in node_lists):
        raise RecoveryError("every block needs n nodes")
    total = code.n * len(node_lists)
    gens = []
    for b in range(len(node_lists)):
        qubits = list(range(b * code.n, (b + 1) * code.n))
        gens += [embed(op, total, qubits) for op in code.operators]
    return Checkpoint(code, Tableau(tuple(gens)), 0, node_lists)


def physical_expansion(code: StabilizerCode, gate: LogicalGate) -> list[tuple[str, tuple[int, ...]]]:
    """Physical Clifford layer (qubit indices across all blocks) realizing a logical gate."""
    plan = logical_plan(code)
    n = code.n
    if gate.kind == "T":
        raise CheckpointRequired("T is not Clifford: stabilizer tracking cannot follow it, checkpointing required")
    if gate.kind in ("I", "H", "S"):
        (b,) = gate.operands
        return [(g, tuple(t + b * n for t in ts)) for g, ts in plan.single[gate.kind]]
    a, b = gate.operands
    cz = [("CZ", (i + a * n, j + b * n)) for i, j in plan.cz_pairs]
    if gate.kind == "CZ":
        return cz
    h = [(g, tuple(t + b * n for t in ts)) for g, ts in plan.single["H"]]
    return h + cz + h


def track(checkpoint: Checkpoint, gate: LogicalGate) -> Checkpoint:
    """Advance the tracked group by one logical Clifford gate."""
    if any(o >= checkpoint.blocks for o in gate.operands):
        raise RecoveryError(f"operand out of range in {gate}")
    t = checkpoint.tableau
    for g, targets in physical_expansion(checkpoint.code, gate):
        t = tableau_conjugate(t, g, targets)
    return Checkpoint(checkpoint.code, t, checkpoint.gate_index + 1, checkpoint.nodes)


def track_all(checkpoint: Checkpoint, gates: Sequence[LogicalGate]) -> Checkpoint:
    for g in gates:
        checkpoint = track(checkpoint, g)
    return checkpoint


def _check_tracked(ops: Sequence[PauliString]) -> None:
    for i, a in enumerate(ops):
        if a.phase % 2:
            raise RecoveryError(f"tracked operator {a} is not Hermitian")
        for b in ops[i + 1:]:
            if bin((a.x & b.z) ^ (a.z & b.x)).count("1") % 2:
                raise RecoveryError("tracked operators do not commute")
    if gf2_rank(op.symplectic() for op in ops) != len(ops):
        raise RecoveryError("tracked operators are not independent")


def recover(checkpoint: Checkpoint, fresh_nodes: Sequence[str], net: Network,
            failed: Sequence[int] | None = None) -> list[EncodedBlock]:
    """Destroy the old blocks and prepare the tracked state on fresh nodes.

    failed lists the qubit ids of the lost blocks; all of their qubits are
    destroyed first. Blocks entangled by two-block gates are recovered
    together, so fresh_nodes must cover every block.
    """
    n = checkpoint.code.n
    need = n * checkpoint.blocks
    fresh_nodes = list(fresh_nodes)
    if len(fresh_nodes) < need:
        raise RecoveryError(f"need {need} fresh nodes, got {len(fresh_nodes)}")
    fresh_nodes = fresh_nodes[:need]
    if len(set(fresh_nodes)) != need:
        raise RecoveryError("fresh nodes must be distinct")
    for node in fresh_nodes:
        if net.topology.roles.get(node) != "server":
            raise RecoveryError(f"{node} is not a server")
    ops = list(checkpoint.operators)
    _check_tracked(ops)
    for q in failed or ():
        if q in net.location:
            net.discard(q)
    for ns in checkpoint.nodes:
        for node in ns:
            net.fail_node(node)
    targets = [0 if op.sign == 1 else 1 for op in ops]
    try:
        data = encode_operators(net, [op.unsigned() for op in ops], targets, fresh_nodes)
    except ProtocolError as exc:
        raise RecoveryError(str(exc)) from exc
    return [EncodedBlock(checkpoint.code, data[b * n:(b + 1) * n], fresh_nodes[b * n:(b + 1) * n])
            for b in range(checkpoint.blocks)]


def tracked_expectations(checkpoint: Checkpoint, net: Network, blocks: Sequence[EncodedBlock]) -> list[float]:
    qubits = [q for b in blocks for q in b.data]
    return [net.state.expectation(op, qubits) for op in checkpoint.operators]
