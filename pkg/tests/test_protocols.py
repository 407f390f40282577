import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import unitary_group

from dbqc.network import Network, line_topology, star_topology
from dbqc.pauli import PauliString, make_code, steane_code
from dbqc.protocols import (
    LogicalGate,
    ProtocolError,
    UnsupportedGateError,
    distributed_cu,
    encode_distributed,
    encode_operators,
    execute_logical_sequence,
    initial_bits,
    logical_basis,
    logical_density,
    logical_plan,
    oracle_logical_state,
    parse_gates,
    scst,
)
from dbqc.statesim import GATES, trace_distance

STEANE = steane_code()


def controlled_dense(u: np.ndarray) -> np.ndarray:
    """Controlled-u on (control, target), control least significant."""
    m = np.eye(4, dtype=complex)
    # indices with control bit set: 1 (t=0) and 3 (t=1)
    m[np.ix_([1, 3], [1, 3])] = u
    return m


def random_vec(rng, dim):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def run_teleported(seed: int, hops: int):
    """Controlled-U from v0 to v{hops} with a reference qubit entangled with both."""
    rng = np.random.default_rng(seed)
    u = unitary_group.rvs(2, random_state=rng)
    psi = random_vec(rng, 8)
    net = Network(line_topology(hops + 1), seed)
    ref, c, t = net.allocate_block(["v0", "v0", f"v{hops}"], psi)
    route = [f"v{i}" for i in range(hops + 1)]
    distributed_cu(net, c, t, u, route=route)
    # ref is the least significant qubit, then control, then target
    want = np.kron(controlled_dense(u), np.eye(2)) @ psi
    return net.state.fidelity([ref, c, t], want), net


@pytest.mark.parametrize("hops", [1, 2, 3])
@pytest.mark.parametrize("seed", range(5))
def test_distributed_controlled_u_matches_oracle(hops, seed):
    fid, _ = run_teleported(seed, hops)
    assert fid >= 1 - 1e-9


@pytest.mark.parametrize("hops,cost", [(1, (1, 2)), (2, (3, 4)), (3, (4, 6))])
def test_distributed_cost(hops, cost):
    _, net = run_teleported(0, hops)
    assert (net.ledger.bell_pairs, net.ledger.classical_bits) == cost


@pytest.mark.parametrize("letter", ["I", "X", "Y", "Z"])
def test_scst_pauli_targets(letter):
    rng = np.random.default_rng(11)
    psi = random_vec(rng, 4)
    net = Network(star_topology(1), 3)
    c, t = net.allocate_block(["C", "S0"], psi)
    pair = net.create_bell_pair("C", "S0")
    scst(net, c, t, letter, pair)
    assert net.state.fidelity([c, t], controlled_dense(GATES[letter]) @ psi) >= 1 - 1e-9
    assert net.log.total_bits == 2


def test_scst_rejects_colocated_qubits():
    net = Network(star_topology(1), 0)
    a, b = net.allocate("S0"), net.allocate("S0")
    pair = net.create_bell_pair("C", "S0")
    with pytest.raises(ProtocolError):
        scst(net, a, b, "X", pair)


@pytest.mark.parametrize("seed", range(10))
def test_steane_encoding(seed):
    net = Network(star_topology(7), seed)
    block = encode_distributed(STEANE, net.topology.servers, net)
    for op in STEANE.operators:
        assert net.state.expectation(op, block.data) == pytest.approx(1, abs=1e-9)
    half = np.eye(2) / 2
    for q in block.data:
        assert trace_distance(net.state.reduced_density(q), half) <= 1e-9
    assert net.ledger.model_by_phase()["setup"] == (31, 69)


def test_encoding_peak_factor_stays_small():
    net = Network(star_topology(7), 0)
    encode_distributed(STEANE, net.topology.servers, net)
    assert net.state.peak_factor <= 18


def test_x_type_syndrome_bits_are_uniform():
    trials = 2000
    counts = np.zeros(7)
    for seed in range(trials):
        net = Network(star_topology(7), seed)
        encode_distributed(STEANE, net.topology.servers, net)
        counts += net.last_syndrome
    sigma = np.sqrt(0.25 / trials)
    x_type = [i for i, op in enumerate(STEANE.operators) if op.x]
    for i in x_type:
        assert abs(counts[i] / trials - 0.5) <= 3 * sigma
    # Z-type operators already hold on |0...0>, so their bits never fire
    for i in set(range(7)) - set(x_type):
        assert counts[i] == 0


def test_encode_with_negative_targets():
    net = Network(star_topology(7), 4)
    ops = list(STEANE.operators)
    targets = [0] * 6 + [1]
    data = encode_operators(net, ops, targets, net.topology.servers)
    assert net.state.expectation(PauliString.parse("-ZZZZZZZ"), data) == pytest.approx(1)


def test_initial_bits_fix_z_type_signs():
    ops = [PauliString.parse("ZZ"), PauliString.parse("ZI")]
    # want ZZ = -1 and ZI = +1: start from |01>
    assert initial_bits(ops, [1, 0]) == 0b10


def test_initial_bits_rejects_impossible_targets():
    ops = [PauliString.parse("ZZ"), PauliString.parse("ZI"), PauliString.parse("IZ")]
    with pytest.raises(ProtocolError):
        initial_bits(ops, [1, 0, 0])


def test_two_qubit_code_encoding():
    code = make_code(["ZZ"], ["ZI"], ["XX"], name="rep2")
    net = Network(star_topology(2), 0)
    block = encode_distributed(code, net.topology.servers, net)
    assert net.state.expectation(PauliString.parse("ZZ"), block.data) == pytest.approx(1)
    assert net.ledger.model_by_phase()["setup"] == (3, 8)


def test_parse_gates():
    gates = parse_gates("H 0\n# comment\ncnot 0 1  # trailing\nT 1\n")
    assert [str(g) for g in gates] == ["H 0", "CNOT 0 1", "T 1"]


@pytest.mark.parametrize("text", ["H", "CNOT 0", "CNOT 1 1", "FOO 0", "H x"])
def test_parse_gates_errors(text):
    with pytest.raises(ProtocolError):
        parse_gates(text)


def test_logical_plan_steane():
    plan = logical_plan(STEANE)
    assert plan.single["H"] == [("H", (j,)) for j in range(7)]
    assert plan.single["S"] == [("SDG", (j,)) for j in range(7)]
    assert plan.cz_pairs == [(j, j) for j in range(7)]


def test_logical_basis_is_codespace():
    basis = logical_basis(STEANE)
    assert np.allclose(basis.conj().T @ basis, np.eye(2))


def encoded_run(gates, blocks=1, seed=0):
    net = Network(star_topology(7 * blocks), seed)
    srv = net.topology.servers
    bl = [encode_distributed(STEANE, srv[7 * b:7 * b + 7], net) for b in range(blocks)]
    execute_logical_sequence(bl, gates, net)
    return net, bl


@pytest.mark.parametrize("text", ["H 0", "H 0\nS 0", "H 0\nT 0", "H 0\nT 0\nH 0", "S 0\nH 0\nT 0\nT 0"])
def test_single_block_sequences_match_oracle(text):
    gates = parse_gates(text)
    net, bl = encoded_run(gates)
    rho = logical_density(net, bl)
    psi = oracle_logical_state(gates, 1)
    assert np.real(np.vdot(psi, rho @ psi)) >= 1 - 1e-9


@pytest.mark.parametrize("text", ["H 0\nCNOT 0 1", "H 0\nH 1\nCZ 0 1", "H 1\nCNOT 1 0\nS 0"])
def test_two_block_sequences_match_oracle(text):
    gates = parse_gates(text)
    net, bl = encoded_run(gates, blocks=2)
    rho = logical_density(net, bl)
    psi = oracle_logical_state(gates, 2)
    assert np.real(np.vdot(psi, rho @ psi)) >= 1 - 1e-9


def test_logical_cnot_model_cost():
    net, _ = encoded_run(parse_gates("CNOT 0 1"), blocks=2)
    assert net.ledger.model_by_phase()["setup"] == (3 + 62, 4 + 138)


def test_t_gate_cost_and_magic_state():
    net, _ = encoded_run(parse_gates("H 0\nT 0"))
    assert net.ledger.model_by_phase()["setup"] == (31 + 3, 69 + 4)
    assert net.ledger.magic_states == 1


def test_execute_rejects_bad_operands():
    net = Network(star_topology(7), 0)
    block = encode_distributed(STEANE, net.topology.servers, net)
    with pytest.raises(ProtocolError):
        execute_logical_sequence([block], [LogicalGate("H", (1,))], net)


def test_unknown_gate_kind():
    with pytest.raises(UnsupportedGateError):
        LogicalGate("SWAP", (0, 1))


@settings(max_examples=15, deadline=None)
@given(st.lists(st.sampled_from(["H", "S", "T"]), max_size=5), st.integers(0, 1000))
def test_random_single_block_circuits(kinds, seed):
    gates = [LogicalGate(k, (0,)) for k in kinds]
    net, bl = encoded_run(gates, seed=seed)
    rho = logical_density(net, bl)
    psi = oracle_logical_state(gates, 1)
    assert np.real(np.vdot(psi, rho @ psi)) >= 1 - 1e-9
