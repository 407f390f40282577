import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dbqc.network import Network, star_topology
from dbqc.pauli import steane_code
from dbqc.protocols import parse_gates
from dbqc.verification import (
    AbortedOutputError,
    AdversaryStrategy,
    InsufficientNodesError,
    LeakageMismatchError,
    SessionTask,
    TrapConfig,
    VerificationError,
    bb84_average,
    bitstream_tests,
    blindness_probe,
    default_task,
    detection_experiment,
    exact_undetected_rate,
    parse_adversary,
    prepare_traps,
    run_session,
    run_verified_session,
    trap_check,
)

STEANE = steane_code()


def test_prepare_traps_all_positions():
    t = prepare_traps(5, 5, np.random.default_rng(0))
    assert t.positions == (0, 1, 2, 3, 4)


def test_prepare_traps_rejects_too_many():
    with pytest.raises(VerificationError):
        prepare_traps(3, 4, np.random.default_rng(0))


def test_trap_config_invariants():
    with pytest.raises(VerificationError):
        TrapConfig(4, 1, (9,), ("0",))
    with pytest.raises(VerificationError):
        TrapConfig(4, 1, (0,), ("y",))


def test_trap_placement_and_state_frequencies():
    rng = np.random.default_rng(1)
    N, k, trials = 10, 3, 5000
    pos = np.zeros(N)
    states = {s: 0 for s in "01+-"}
    for _ in range(trials):
        t = prepare_traps(N, k, rng)
        pos[list(t.positions)] += 1
        for s in t.states:
            states[s] += 1
    p = k / N
    assert np.all(np.abs(pos / trials - p) <= 3 * np.sqrt(p * (1 - p) / trials))
    total = trials * k
    for c in states.values():
        assert abs(c / total - 0.25) <= 3 * np.sqrt(0.25 * 0.75 / total)


@pytest.mark.parametrize("label,letter,passes", [
    ("0", "X", False), ("1", "X", False), ("+", "X", True), ("-", "X", True),
    ("0", "Z", True), ("+", "Z", False), ("0", "Y", False), ("+", "Y", False),
])
def test_trap_check_truth_table(label, letter, passes):
    assert trap_check(label, [letter], np.random.default_rng(0)) is passes


def test_bb84_average_is_maximally_mixed():
    assert np.allclose(bb84_average(), np.eye(2) / 2, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_honest_session_accepts(seed):
    r = run_session(default_task(parse_gates("H 0\nT 0")), 3, seed)
    assert r.accepted
    assert r.fidelity >= 1 - 1e-9
    assert all(t["passed"] for t in r.trap_results)
    assert r.reconciliation["match"]


def test_messages_per_position_equal():
    r = run_session(default_task(parse_gates("H 0\nT 0")), 5, 3)
    assert len(set(r.messages_per_position.values())) == 1


def test_x_attack_on_z_trap_aborts():
    net = Network(star_topology(8), 0)
    traps = TrapConfig(8, 1, (7,), ("0",))
    r = run_verified_session(default_task(), traps, AdversaryStrategy.fixed_pauli_attack([7], ["X"]), net)
    assert r.verdict == "aborted"
    assert r.fidelity is None
    with pytest.raises(AbortedOutputError):
        r.output


def test_x_attack_on_plus_trap_passes():
    net = Network(star_topology(8), 0)
    traps = TrapConfig(8, 1, (7,), ("+",))
    r = run_verified_session(default_task(), traps, AdversaryStrategy.fixed_pauli_attack([7], ["X"]), net)
    assert r.accepted


def test_attack_after_compute_is_caught():
    net = Network(star_topology(8), 0)
    traps = TrapConfig(8, 1, (0,), ("1",))
    adv = AdversaryStrategy.fixed_pauli_attack([0], ["Y"], phase="compute")
    r = run_verified_session(default_task(parse_gates("H 0")), traps, adv, net)
    assert not r.accepted


def test_lying_server_aborts():
    r = run_session(default_task(), 4, 0, AdversaryStrategy.lying_measurement(1.0))
    assert r.verdict == "aborted"


def test_insufficient_nodes():
    net = Network(star_topology(7), 0)
    with pytest.raises(InsufficientNodesError):
        run_verified_session(default_task(), TrapConfig(8, 1, (0,), ("0",)), AdversaryStrategy.honest(), net)


def test_trap_secrets_never_logged():
    net = Network(star_topology(10), 5)
    traps = prepare_traps(10, 3, net.client_rng)
    run_verified_session(default_task(), traps, AdversaryStrategy.honest(), net)
    setup_compute = [m for m in net.log.records if m.phase != "verify"]
    kinds = {m.kind for m in setup_compute}
    assert kinds <= {"scst", "correction", "pair", "msi_correction"}


def test_adversary_parsing():
    assert parse_adversary("honest").kind == "honest"
    assert parse_adversary("random:3").d == 3
    a = parse_adversary("fixed:1=x,4=Z")
    assert a.positions == (1, 4) and a.paulis == ("X", "Z")
    assert parse_adversary("lie:0.5").flip_probability == 0.5
    for bad in ("random:0", "fixed:1=Q", "lie:2", "nope"):
        with pytest.raises(VerificationError):
            parse_adversary(bad)


def test_detection_no_traps():
    r = detection_experiment(10, 0, 1, 1000, np.random.default_rng(0))
    assert r["empirical_rate"] == 1.0 and r["bound_placement"] == 1.0


def test_detection_all_traps_fixed_flip():
    r = detection_experiment(10, 10, 1, 4000, np.random.default_rng(1), letter="X")
    assert r["bound_placement"] == 0 and r["bound_vacuous"]
    assert abs(r["empirical_rate"] - 0.5) <= 3 * np.sqrt(0.25 / 4000)


def test_detection_requires_trials():
    with pytest.raises(VerificationError):
        detection_experiment(10, 2, 1, 10, np.random.default_rng(0))


@pytest.mark.parametrize("N,k,d", [(47, 40, 1), (20, 10, 2), (30, 15, 3), (12, 6, 4)])
def test_detection_matches_exact_rate(N, k, d):
    trials = 4000
    r = detection_experiment(N, k, d, trials, np.random.default_rng(N + d))
    p = exact_undetected_rate(N, k, d)
    assert abs(r["empirical_rate"] - p) <= 4 * np.sqrt(p * (1 - p) / trials)
    assert set(r) >= {"N", "k_trap", "d", "trials", "undetected_count", "empirical_rate",
                      "bound_placement", "bound_exponential", "verdict"}


@settings(max_examples=30)
@given(st.integers(1, 30), st.data())
def test_exact_rate_at_least_placement_bound(N, data):
    k = data.draw(st.integers(0, N))
    d = data.draw(st.integers(1, N))
    # surviving attacks include every attack that misses all traps
    assert exact_undetected_rate(N, k, d) >= (1 - k / N) ** d - 1e-12 or d > N - k


def test_bitstream_tests_reject_length_mismatch():
    with pytest.raises(LeakageMismatchError):
        bitstream_tests([[0, 1]], [[0, 1, 1]])


def test_bitstream_tests_on_identical_sources():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 2, size=(300, 40))
    b = rng.integers(0, 2, size=(300, 40))
    r = bitstream_tests(a, b)
    assert min(r["frequency_p"], r["runs_p"], r["positional_p"]) > 1e-3


def test_bitstream_tests_detect_bias():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 2, size=(300, 40))
    b = (rng.random(size=(300, 40)) < 0.7).astype(int)
    assert bitstream_tests(a, b)["frequency_p"] < 1e-3


def test_blindness_probe_small():
    r = blindness_probe(default_task(parse_gates("H 0")), default_task(parse_gates("S 0")), 40, 2)
    assert r["passed"]
    assert r["leaf_trace_distance_max"] <= 1e-9


def test_blindness_probe_leakage_mismatch():
    with pytest.raises(LeakageMismatchError):
        blindness_probe(default_task(parse_gates("H 0")), default_task(parse_gates("H 0\nS 0")), 2, 1)
