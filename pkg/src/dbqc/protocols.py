"""Distributed protocols: gate teleportation, distributed encoding, non-local
controlled gates and logical gate execution on encoded blocks."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .network import BellPair, Network, NetworkError, shortest_path
from .pauli import (
    PauliError,
    PauliString,
    StabilizerCode,
    gf2_solve,
    multiply,
    solve_correction,
    tensor,
    validate_code,
)
from .statesim import GATES, NonCliffordError, conjugate

LOGICAL_KINDS = {"I": 1, "H": 1, "S": 1, "T": 1, "CNOT": 2, "CZ": 2}


class ProtocolError(RuntimeError):
    pass


class UnsupportedGateError(ProtocolError):
    pass


@dataclass(frozen=True)
class LogicalGate:
    kind: str
    operands: tuple[int, ...]

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "operands", tuple(int(o) for o in self.operands))
        if kind not in LOGICAL_KINDS:
            raise UnsupportedGateError(f"unknown logical gate {kind}")
        if len(self.operands) != LOGICAL_KINDS[kind]:
            raise ProtocolError(f"{kind} takes {LOGICAL_KINDS[kind]} operand(s)")
        if len(set(self.operands)) != len(self.operands):
            raise ProtocolError(f"{kind} operands must be distinct")

    def __str__(self) -> str:
        return " ".join([self.kind, *map(str, self.operands)])


def parse_gates(text: str) -> list[LogicalGate]:
    """Gate file: one gate per line such as "H 0" or "CNOT 0 1"; '#' starts a comment."""
    gates = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *ops = line.split()
        try:
            gates.append(LogicalGate(kind, tuple(int(o) for o in ops)))
        except ValueError as exc:
            raise ProtocolError(f"bad gate line {raw!r}") from exc
    return gates


@dataclass
class EncodedBlock:
    code: StabilizerCode
    data: list[int]
    nodes: list[str]
    client_held: bool = False

    def __post_init__(self):
        if len(self.data) != self.code.n or len(self.nodes) != self.code.n:
            raise ProtocolError("a block needs exactly n data qubits")
        # server blocks spread one qubit per node; client-held ancillas sit on one node
        if not self.client_held and len(set(self.nodes)) != len(self.nodes):
            raise ProtocolError("a block needs n distinct host nodes")


# ---------------------------------------------------------------- SCST


def _controlled_local(net: Network, u, control: int, target: int) -> None:
    """Controlled-u between two qubits at the same node."""
    st = net.state
    if isinstance(u, str):
        name = u.upper()
        if name == "I":
            return
        if name == "Y":
            # controlled-Y = S_t . CX . Sdg_t
            st.apply("SDG", target)
            st.apply("CNOT", control, target)
            st.apply("S", target)
            return
        u = GATES[name]
    st.apply_controlled(np.asarray(u, dtype=complex), [control], target)


def scst(net: Network, control: int, target: int, u, pair: BellPair, kind: str = "scst") -> None:
    """Teleported controlled-u from control (node A) to target (node B) over one Bell pair.

    A: CNOT(control -> A_e), measure A_e in Z, send m1.
    B: X^m1 on B_e, controlled-u(B_e -> target), measure B_e in X, send m2.
    A: Z^m2 on control.
    """
    node_a, node_b = net.node_of(control), net.node_of(target)
    if node_a == node_b:
        raise ProtocolError("SCST endpoints must be on different nodes")
    if {pair.node_a, pair.node_b} != {node_a, node_b}:
        raise NetworkError("Bell pair endpoints do not match the control/target nodes")
    a_e, b_e = (pair.a, pair.b) if pair.node_a == node_a else (pair.b, pair.a)
    net.consume_pair(pair)
    if pair.long_distance:
        # the swapped pair is charged when it is used
        net.charge("long_pair", bell=1, nodes=(node_a, node_b))
    st = net.state
    st.apply("CNOT", control, a_e)
    m1 = st.measure(a_e, retire=True)
    net.location.pop(a_e, None)
    net.send_classical(node_a, node_b, (m1,), kind=kind)
    if m1:
        st.apply("X", b_e)
    _controlled_local(net, u, b_e, target)
    m2 = st.measure(b_e, basis="X", retire=True)
    net.location.pop(b_e, None)
    net.send_classical(node_b, node_a, (m2,), kind=kind)
    if m2:
        st.apply("Z", control)
    net.rounds += 1


def link(net: Network, a: str, b: str, kind: str = "pair") -> BellPair:
    """Bell pair between two nodes: elementary if adjacent, else by swapping along the shortest path."""
    if net.topology.adjacent(a, b):
        return net.create_bell_pair(a, b, kind=kind)
    return net.swap_entanglement_along(shortest_path(net.topology, a, b), kind="swap")


def distributed_cu(net: Network, control: int, target: int, u, route: Sequence[str] | None = None,
                   kind: str = "scst") -> None:
    """Controlled-u between qubits on distinct nodes: swap along the route, then SCST."""
    a, c = net.node_of(control), net.node_of(target)
    if a == c:
        raise ProtocolError("distributed_cu needs qubits on different nodes")
    route = list(route) if route is not None else shortest_path(net.topology, a, c)
    if route[0] != a or route[-1] != c:
        raise ProtocolError("route does not connect the two qubits")
    if len(route) == 2:
        pair = net.create_bell_pair(a, c, kind="pair")
    else:
        pair = net.swap_entanglement_along(route, kind="swap")
    scst(net, control, target, u, pair, kind=kind)


# ---------------------------------------------------------------- encoding


def initial_bits(operators: Sequence[PauliString], targets: Sequence[int]) -> int:
    """Computational basis start state |b> for the encoder.

    Products of operators whose X parts cancel are Z-type and keep their value
    on |b> through the whole encoding, so b must give each of them its target
    eigenvalue. Z-type corrections cannot change these values afterwards.
    """
    if not operators:
        return 0
    n = operators[0].n
    basis: list[tuple[int, int]] = []  # (x part, combination of operators)
    rows, rhs = [], []
    for i, op in enumerate(operators):
        x, combo = op.x, 1 << i
        for bx, bc in basis:
            if x ^ bx < x:
                x, combo = x ^ bx, combo ^ bc
        if x:
            basis.append((x, combo))
            basis.sort(reverse=True)
            continue
        prod = PauliString.identity(n)
        parity = 0
        for j, o in enumerate(operators):
            if (combo >> j) & 1:
                prod = multiply(prod, o)
                parity ^= targets[j] & 1
        if prod.phase % 2:
            raise ProtocolError("operators do not commute")
        # prod = (-1)^(phase/2) Z^z has value (-1)^(phase/2 + b.z) on |b>
        rows.append(prod.z)
        rhs.append(parity ^ (prod.phase // 2))
    sol = gf2_solve(rows, rhs, n)
    if sol is None:
        raise ProtocolError("targets are inconsistent: the requested state does not exist")
    return sol[0]


def encode_operators(net: Network, operators: Sequence[PauliString], targets: Sequence[int],
                     nodes: Sequence[str]) -> list[int]:
    """Prepare the common eigenstate of commuting operators on data qubits held at nodes.

    targets[i] = 0 asks for eigenvalue +1 of operators[i], 1 for -1. Each operator is
    measured through a client syndrome qubit in |+> and one SCST per non-identity
    factor; the outcomes then fix a Z-type correction sent as one bit per node.
    """
    n = len(nodes)
    if any(op.n != n for op in operators):
        raise ProtocolError("operator size does not match node count")
    if len(targets) != len(operators):
        raise ProtocolError("one target per operator")
    # fold operator signs into the targets; the SCSTs measure the unsigned strings
    targets = [(t & 1) ^ (op.sign == -1) for op, t in zip(operators, targets)]
    operators = [op.unsigned() for op in operators]
    start = initial_bits(operators, targets)
    client = net.client
    data = [net.allocate(node, "1" if (start >> j) & 1 else "0") for j, node in enumerate(nodes)]
    syndrome = []
    for op in operators:
        q = net.allocate(client, "+")
        for j in op.support:
            pair = link(net, client, nodes[j])
            scst(net, q, data[j], op.letter(j), pair)
        # nothing touches q after its last SCST, so it can be read out right away
        syndrome.append(net.state.measure(q, basis="X", retire=True))
        net.location.pop(q, None)
    flips = [m ^ t for m, t in zip(syndrome, targets)]
    # from the chosen start state a Z-type correction always exists: outcomes of
    # Z-type products are fixed and already match their targets, the rest are
    # set independently by Z flips
    corr = solve_correction(list(operators), flips, z_only=True)
    for j, node in enumerate(nodes):
        bit = (corr.z >> j) & 1
        net.send_classical(client, node, (bit,), kind="correction")
        if bit:
            net.state.apply("Z", data[j])
    net.last_syndrome = tuple(syndrome)
    return data


def encode_distributed(code: StabilizerCode, nodes: Sequence[str], net: Network) -> EncodedBlock:
    if len(nodes) != code.n:
        raise ProtocolError(f"code needs {code.n} nodes, got {len(nodes)}")
    problems = validate_code(code)
    if problems:
        raise ProtocolError("invalid code: " + "; ".join(problems))
    for node in nodes:
        if net.topology.roles.get(node) != "server":
            raise ProtocolError(f"{node} is not a server")
    data = encode_operators(net, code.operators, [0] * code.n, nodes)
    return EncodedBlock(code, data, list(nodes))


# ---------------------------------------------------------------- logical plans


def _group_sign(p: PauliString, group: Sequence[PauliString]) -> int | None:
    """If p = s * prod(subset of group) for a sign s in {+1, -1}, return s; else None."""
    n = p.n
    rows = []
    for c in range(2 * n):
        row = 0
        for i, g in enumerate(group):
            if (g.symplectic() >> c) & 1:
                row |= 1 << i
        rows.append(row)
    target = [(p.symplectic() >> c) & 1 for c in range(2 * n)]
    sol = gf2_solve(rows, target, len(group))
    if sol is None:
        return None
    prod = PauliString.identity(n)
    for i, g in enumerate(group):
        if (sol[0] >> i) & 1:
            prod = multiply(prod, g)
    rel = (p.phase - prod.phase) % 4
    if rel == 0:
        return 1
    if rel == 2:
        return -1
    return None


def _conjugate_layer(p: PauliString, layer: Sequence[tuple[str, tuple[int, ...]]]) -> PauliString:
    for gate, targets in layer:
        p = conjugate(p, gate, targets)
    return p


@dataclass
class LogicalPlan:
    """Physical realization of logical gates for one code with k = 1.

    Each single-block entry is a list of (gate, local qubit indices); the
    two-block CZ entry lists pairs of local indices joined by physical CZ.
    """

    code: StabilizerCode
    single: dict[str, list[tuple[str, tuple[int, ...]]]] = field(default_factory=dict)
    cz_pairs: list[tuple[int, int]] = field(default_factory=list)
    notes: dict[str, str] = field(default_factory=dict)


def _pauli_layer(p: PauliString) -> list[tuple[str, tuple[int, ...]]]:
    return [(p.letter(j), (j,)) for j in p.support]


def logical_plan(code: StabilizerCode) -> LogicalPlan:
    """Cached transversal plan for the code; see _build_logical_plan."""
    return _build_logical_plan(code)


@lru_cache(maxsize=32)
def _build_logical_plan(code: StabilizerCode) -> LogicalPlan:
    """Find transversal realizations of H_L, S_L and CZ_L by tableau conjugation.

    A candidate layer is accepted when it maps every generator into the
    stabilizer group with sign +1 and maps the logical operators to the
    required images up to a sign; wrong signs are repaired by appending a
    logical Pauli.
    """
    if code.k != 1:
        raise UnsupportedGateError("logical gate plans are implemented for k = 1 codes")
    n = code.n
    gens = list(code.generators)
    zl, xl = code.logical_z[0], code.logical_x[0]
    # Y_L = i X_L Z_L
    yl = multiply(xl, zl)
    yl = PauliString(n, yl.x, yl.z, yl.phase + 1)
    plan = LogicalPlan(code)

    def check(layer, wanted_z, wanted_x):
        for g in gens:
            if _group_sign(_conjugate_layer(g, layer), gens) != 1:
                return None
        sz = _group_sign(multiply(_conjugate_layer(zl, layer), wanted_z), gens)
        sx = _group_sign(multiply(_conjugate_layer(xl, layer), wanted_x), gens)
        if sz is None or sx is None:
            return None
        # repair signs with a logical Pauli: X_L flips Z_L, Z_L flips X_L
        fix = []
        if sz == -1 and sx == -1:
            fix = _pauli_layer(yl.unsigned())
        elif sz == -1:
            fix = _pauli_layer(xl.unsigned())
        elif sx == -1:
            fix = _pauli_layer(zl.unsigned())
        return layer + fix

    def transversal(gate):
        return [(gate, (j,)) for j in range(n)]

    for name, wz, wx, candidates in (
        ("H", xl, zl, ["H"]),
        ("S", zl, yl, ["S", "SDG"]),
    ):
        found = [(cand, check(transversal(cand), wz, wx)) for cand in candidates]
        found = [(len(layer), cand, layer) for cand, layer in found if layer is not None]
        if found:
            # prefer a layer that needs no sign repair
            _, cand, layer = min(found, key=lambda t: t[0])
            plan.single[name] = layer
            plan.notes[name] = f"{cand} on every qubit" + (" plus a logical Pauli" if len(layer) > n else "")
    plan.single["I"] = []
    # transversal CZ between two copies of the block
    big_gens = [tensor(g, PauliString.identity(n)) for g in gens] + [tensor(PauliString.identity(n), g) for g in gens]
    layer = [("CZ", (j, n + j)) for j in range(n)]
    ok = all(_group_sign(_conjugate_layer(g, layer), big_gens) == 1 for g in big_gens)
    eye = PauliString.identity(n)
    images = {
        tensor(xl, eye): tensor(xl, zl),
        tensor(eye, xl): tensor(zl, xl),
        tensor(zl, eye): tensor(zl, eye),
        tensor(eye, zl): tensor(eye, zl),
    }
    for src, dst in images.items():
        if _group_sign(multiply(_conjugate_layer(src, layer), dst), big_gens) != 1:
            ok = False
    if ok:
        plan.cz_pairs = [(j, j) for j in range(n)]
        plan.notes["CZ"] = "CZ between corresponding qubits of the two blocks"
    return plan


# ---------------------------------------------------------------- logical states


def apply_pauli_to_vector(p: PauliString, vec: np.ndarray) -> np.ndarray:
    """p|v> for a 2^n vector with qubit 0 least significant."""
    idx = np.arange(vec.size)
    zpar = np.zeros(vec.size, dtype=np.int64)
    zm = p.z
    j = 0
    while zm:
        if zm & 1:
            zpar ^= (idx >> j) & 1
        zm >>= 1
        j += 1
    ny = bin(p.x & p.z).count("1")
    coeff = (1j ** (p.phase + ny)) * np.where(zpar, -1.0, 1.0)
    out = np.empty_like(vec)
    out[idx ^ p.x] = coeff * vec
    return out


def logical_basis(code: StabilizerCode) -> np.ndarray:
    """Columns |0_L>, |1_L> as 2^n vectors (k = 1 codes)."""
    if code.k != 1:
        raise UnsupportedGateError("logical basis is implemented for k = 1 codes")
    dim = 2 ** code.n
    rng = np.random.default_rng(12345)
    vec = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    for g in code.operators:
        vec = 0.5 * (vec + apply_pauli_to_vector(g, vec))
    vec /= np.linalg.norm(vec)
    # fix the global phase so the largest amplitude is real and positive
    k = int(np.argmax(np.abs(vec)))
    vec *= np.abs(vec[k]) / vec[k]
    one = apply_pauli_to_vector(code.logical_x[0], vec)
    return np.stack([vec, one], axis=1)


def logical_density(net: Network, blocks: Sequence[EncodedBlock]) -> np.ndarray:
    """Reduced state of the blocks projected onto their joint logical basis (block 0 least significant)."""
    qubits = [q for b in blocks for q in b.data]
    basis = np.ones((1, 1), dtype=complex)
    for b in blocks:
        basis = np.kron(logical_basis(b.code), basis)
    return net.state.project(qubits, basis)


# ---------------------------------------------------------------- magic states


@dataclass
class MagicStateFactory:
    """Ideal client-side supplier of encoded |T> ancillas (no ledger cost)."""

    code: StabilizerCode
    issued: int = 0

    def fresh_zero(self, net: Network) -> EncodedBlock:
        nodes = [net.client] * self.code.n
        vec = logical_basis(self.code)[:, 0]
        data = net.allocate_block(nodes, vec)
        return EncodedBlock(self.code, data, nodes, client_held=True)

    def prepare(self, net: Network) -> EncodedBlock:
        return inject_magic_state(self.fresh_zero(net), net, factory=self)


def inject_magic_state(block: EncodedBlock, net: Network, factory: MagicStateFactory | None = None) -> EncodedBlock:
    """Turn an encoded |0_L> into |T_L> = (|0_L> + e^{i pi/4}|1_L>)/sqrt(2) by an ideal logical unitary."""
    code = block.code
    for g in code.operators:
        if net.state.expectation(g, block.data) < 1 - 1e-9:
            raise ProtocolError("ancilla block is not in |0_L>")
    basis = logical_basis(code)
    u = GATES["T"] @ GATES["H"]
    proj = basis @ basis.conj().T
    w = basis @ u @ basis.conj().T + (np.eye(basis.shape[0]) - proj)
    net.state.apply_matrix(w, block.data)
    if factory is not None:
        factory.issued += 1
    net.charge("magic_state", magic=1, physical=False, model=True)
    return block


# ---------------------------------------------------------------- execution


def model_cnot_cost(net: Network, a_node: str, b_node: str) -> tuple[int, int, bool]:
    """Cost-model price of one logical two-block gate: (pairs, bits, extended?)."""
    if net.topology.star:
        return 3, 4, False
    m = len(shortest_path(net.topology, a_node, b_node)) - 1
    return m + (1 if m >= 2 else 0), 2 * (m - 1) + 2, True


def _apply_layer(net: Network, block: EncodedBlock, layer) -> None:
    for gate, targets in layer:
        net.state.apply(gate, *[block.data[t] for t in targets])


def _logical_cz(net: Network, plan: LogicalPlan, a: EncodedBlock, b: EncodedBlock) -> None:
    if not plan.cz_pairs:
        raise UnsupportedGateError(f"no transversal CZ for code {plan.code.name}")
    for i, j in plan.cz_pairs:
        qa, qb = a.data[i], b.data[j]
        if net.node_of(qa) == net.node_of(qb):
            net.state.apply("CZ", qa, qb)
        else:
            distributed_cu(net, qa, qb, "Z")


def _single(plan: LogicalPlan, kind: str):
    if kind not in plan.single:
        raise UnsupportedGateError(f"no transversal {kind}_L for code {plan.code.name}")
    return plan.single[kind]


def execute_logical_sequence(blocks: Sequence[EncodedBlock], gates: Sequence[LogicalGate], net: Network,
                             magic_source: MagicStateFactory | None = None,
                             plan: LogicalPlan | None = None) -> None:
    """Run logical gates on encoded blocks.

    Transversal single-block gates are local. CZ_L runs as physical CZs between
    corresponding qubits, each teleported with distributed_cu. CNOT_L is
    H_L(target) CZ_L H_L(target). T_L consumes a client-held |T_L> ancilla:
    CNOT_L(data -> ancilla), logical Z readout of the ancilla, then S_L on the
    data when the outcome is 1.

    Physical traffic is recorded outside the cost model; each logical two-block
    gate is charged once at the cost model's price.
    """
    if not blocks:
        if gates:
            raise ProtocolError("no blocks to act on")
        return
    plan = plan or logical_plan(blocks[0].code)
    for g in gates:
        for o in g.operands:
            if not 0 <= o < len(blocks):
                raise ProtocolError(f"operand {o} out of range in {g}")
    for g in gates:
        if g.kind in ("I", "H", "S"):
            _apply_layer(net, blocks[g.operands[0]], _single(plan, g.kind))
        elif g.kind in ("CZ", "CNOT"):
            a, b = (blocks[o] for o in g.operands)
            with net.accounting(pairs=False, bits=False):
                if g.kind == "CNOT":
                    _apply_layer(net, b, _single(plan, "H"))
                _logical_cz(net, plan, a, b)
                if g.kind == "CNOT":
                    _apply_layer(net, b, _single(plan, "H"))
            pairs, bits, ext = model_cnot_cost(net, a.nodes[0], b.nodes[0])
            net.charge("logical_" + g.kind.lower() + ("_extended" if ext else ""), bell=pairs, bits=bits,
                       physical=False, model=True)
        elif g.kind == "T":
            _magic_t(net, plan, blocks[g.operands[0]], magic_source or MagicStateFactory(blocks[0].code))
        else:
            raise UnsupportedGateError(g.kind)


def _magic_t(net: Network, plan: LogicalPlan, data: EncodedBlock, factory: MagicStateFactory) -> None:
    code = data.code
    h = _single(plan, "H")
    s = _single(plan, "S")
    anc = factory.prepare(net)
    with net.accounting(pairs=False, bits=False):
        _apply_layer(net, anc, h)
        _logical_cz(net, plan, data, anc)
        _apply_layer(net, anc, h)
        outcomes = [net.state.measure(q, retire=True) for q in anc.data]
        for q in anc.data:
            net.location.pop(q, None)
        zl = code.logical_z[0]
        m = sum(outcomes[j] for j in zl.support) % 2
        # every data node learns whether to apply its share of S_L
        for node in data.nodes:
            net.send_classical(net.client, node, (m,), kind="msi_correction")
        if m:
            _apply_layer(net, data, s)
    # priced as one logical CNOT
    pairs, bits, ext = model_cnot_cost(net, data.nodes[0], net.client)
    net.charge("logical_t" + ("_extended" if ext else ""), bell=pairs, bits=bits, physical=False, model=True)


def oracle_logical_state(gates: Sequence[LogicalGate], k: int, initial: np.ndarray | None = None) -> np.ndarray:
    """Direct simulation of the logical circuit on k qubits (qubit 0 least significant)."""
    vec = np.zeros(2 ** k, dtype=complex)
    vec[0] = 1
    if initial is not None:
        vec = np.asarray(initial, dtype=complex)
    for g in gates:
        if g.kind == "I":
            continue
        if g.kind in ("H", "S", "T"):
            (q,) = g.operands
            t = vec.reshape((2,) * k)
            axis = k - 1 - q
            t = np.moveaxis(np.tensordot(GATES[g.kind], t, axes=([1], [axis])), 0, axis)
            vec = t.reshape(-1)
        else:
            c, t_ = g.operands
            idx = np.arange(vec.size)
            cbit = (idx >> c) & 1
            if g.kind == "CNOT":
                out = vec.copy()
                sel = cbit == 1
                out[idx[sel] ^ (1 << t_)] = vec[idx[sel]]
                vec = out
            else:
                tbit = (idx >> t_) & 1
                vec = vec * np.where(cbit & tbit, -1, 1)
    return vec
