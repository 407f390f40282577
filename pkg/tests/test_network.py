import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dbqc.network import (
    Network,
    NetworkError,
    Topology,
    format_topology,
    is_phi_plus,
    line_topology,
    parse_topology,
    shortest_path,
    star_topology,
)


def test_star_topology():
    t = star_topology(3)
    assert t.client == "C"
    assert t.servers == ["S0", "S1", "S2"]
    assert t.star
    assert t.adjacent("C", "S1") and not t.adjacent("S0", "S1")


def test_servers_sort_numerically():
    assert star_topology(12).servers[:3] == ["S0", "S1", "S2"]
    assert star_topology(12).servers[-1] == "S11"


def test_topology_validation():
    with pytest.raises(NetworkError):
        Topology({"A": "client", "B": "client"}, {frozenset(("A", "B"))})
    with pytest.raises(NetworkError):
        Topology({"A": "client", "B": "server", "C": "server"}, {frozenset(("A", "B"))})


def test_topology_file_roundtrip():
    text = "client: C\n# ring\nC a\na b\nb C\n"
    t = parse_topology(text)
    assert not t.star
    assert parse_topology(format_topology(t)).edges == t.edges


def test_topology_file_errors():
    with pytest.raises(NetworkError):
        parse_topology("C a\n")
    with pytest.raises(NetworkError):
        parse_topology("client: C\nC a b\n")


def test_shortest_path_on_line():
    t = line_topology(5)
    assert shortest_path(t, "v0", "v4") == ["v0", "v1", "v2", "v3", "v4"]
    assert shortest_path(t, "v3", "v1") == ["v3", "v2", "v1"]


def test_shortest_path_star_goes_through_client():
    assert shortest_path(star_topology(4), "S0", "S3") == ["S0", "C", "S3"]


def test_bell_pair_is_phi_plus():
    net = Network(star_topology(1), 0)
    pair = net.create_bell_pair("C", "S0")
    assert is_phi_plus(net.state, pair.a, pair.b) == pytest.approx(1)
    assert net.ledger.bell_pairs == 1


def test_pairs_only_between_neighbours():
    net = Network(star_topology(2), 0)
    with pytest.raises(NetworkError):
        net.create_bell_pair("S0", "S1")


@pytest.mark.parametrize("m", [1, 2, 3, 4, 5])
def test_swap_cost_and_fidelity(m):
    net = Network(line_topology(m + 1), m)
    path = [f"v{i}" for i in range(m + 1)]
    pair = net.swap_entanglement_along(path)
    assert is_phi_plus(net.state, pair.a, pair.b) == pytest.approx(1, abs=1e-9)
    assert net.ledger.bell_pairs == m
    assert net.log.total_bits == 2 * (m - 1)
    assert (pair.node_a, pair.node_b) == ("v0", f"v{m}")


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 6), st.integers(0, 10 ** 6))
def test_swap_always_yields_phi_plus(m, seed):
    net = Network(line_topology(m + 1), seed)
    pair = net.swap_entanglement_along([f"v{i}" for i in range(m + 1)])
    assert is_phi_plus(net.state, pair.a, pair.b) > 1 - 1e-9
    # intermediate halves are gone: only the two end qubits stay live
    assert len(net.location) == 2


def test_leaf_messages_are_relayed_in_star():
    net = Network(star_topology(2), 0)
    net.send_classical("S0", "S1", (1,))
    assert net.log.records[0].relay == "C"
    net.send_classical("C", "S1", (0,))
    assert net.log.records[1].relay is None


def test_empty_message_rejected():
    net = Network(star_topology(1), 0)
    with pytest.raises(NetworkError):
        net.send_classical("C", "S0", ())


def test_ledger_bits_equal_log_bits():
    net = Network(line_topology(4), 0)
    net.swap_entanglement_along(["v0", "v1", "v2", "v3"])
    net.send_classical("v0", "v3", (1, 0, 1))
    assert net.ledger.classical_bits == net.log.total_bits == 7


def test_accounting_override_keeps_log_kind():
    net = Network(star_topology(1), 0)
    with net.accounting(phase="verify", bits=False, kind="pad"):
        net.send_classical("C", "S0", (1,), kind="scst")
    assert net.log.records[0].kind == "scst"
    assert net.log.records[0].phase == "setup"
    entry = net.ledger.entries[0]
    assert (entry.phase, entry.kind, entry.model) == ("verify", "pad", False)
    assert net.ledger.outside_model() == (0, 1)


def test_fail_node_destroys_qubits():
    net = Network(star_topology(2), 0)
    q = net.allocate("S0", "+")
    net.allocate("S1")
    assert net.fail_node("S0") == 1
    assert q not in net.location
    assert "S0" not in net.location.values()


def test_seed_determinism():
    logs = []
    for _ in range(2):
        net = Network(line_topology(5), 42)
        net.swap_entanglement_along([f"v{i}" for i in range(5)])
        logs.append(net.log.bitstream())
    assert logs[0] == logs[1]


def test_set_phase_validation():
    net = Network(star_topology(1), 0)
    with pytest.raises(NetworkError):
        net.set_phase("lunch")
