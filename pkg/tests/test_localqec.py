import numpy as np
import pytest

from dbqc.localqec import (
    FLAG_SYNDROME,
    METHOD1_TABLE,
    METHOD2_TABLE,
    BiasedNoiseChannel,
    compare_tables,
    format_table,
    logical_failure_rate,
    qec4_round,
    qec6_round,
    run_circuit,
    sample_noise,
    simulate_table,
)
from dbqc.statesim import SimState


def random_qubit(rng):
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    return v / np.linalg.norm(v)


def test_table_shapes():
    assert len(METHOD1_TABLE.entries) == 12
    assert len(METHOD2_TABLE.entries) == 18
    assert all(len(s) == 3 for _, s in METHOD1_TABLE.entries.values())
    assert all(len(s) == 5 for _, s in METHOD2_TABLE.entries.values())
    assert all(METHOD2_TABLE[("Z", p)][1] == FLAG_SYNDROME for p in range(1, 7))


@pytest.mark.parametrize("method,table", [(1, METHOD1_TABLE), (2, METHOD2_TABLE)])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_simulated_tables_match_reference(method, table, seed):
    got = simulate_table(method, np.random.default_rng(seed))
    assert compare_tables(got, table) == []


def test_no_error_gives_trivial_syndrome():
    rng = np.random.default_rng(0)
    for method, n in ((1, 3), (2, 5)):
        psi = random_qubit(rng)
        st = SimState(rng)
        q = st.allocate(psi)
        assert run_circuit(st, q, method) == "0" * n
        assert st.fidelity([q], psi) == pytest.approx(1)


@pytest.mark.parametrize("letter", ["X", "Y", "Z"])
def test_method1_data_errors_corrected(letter):
    rng = np.random.default_rng(5)
    for _ in range(20):
        psi = random_qubit(rng)
        st = SimState(rng)
        q = st.allocate(psi)
        qec4_round(st, q, (letter, 1))
        assert st.fidelity([q], psi) >= 1 - 1e-9


@pytest.mark.parametrize("letter", ["X", "Y"])
@pytest.mark.parametrize("pos", range(1, 7))
def test_method2_bit_flip_errors_corrected(letter, pos):
    rng = np.random.default_rng(pos)
    psi = random_qubit(rng)
    st = SimState(rng)
    q = st.allocate(psi)
    r = qec6_round(st, q, (letter, pos))
    assert not r.flag
    assert st.fidelity([q], psi) >= 1 - 1e-9


@pytest.mark.parametrize("pos", range(1, 7))
def test_method2_phase_errors_flagged(pos):
    rng = np.random.default_rng(10 + pos)
    for _ in range(10):
        st = SimState(rng)
        q = st.allocate(random_qubit(rng))
        r = qec6_round(st, q, ("Z", pos))
        assert r.flag and r.syndrome == FLAG_SYNDROME


def test_error_position_validation():
    st = SimState()
    q = st.allocate()
    with pytest.raises(ValueError):
        run_circuit(st, q, 1, [("X", 5)])
    with pytest.raises(ValueError):
        run_circuit(st, q, 1, [("W", 1)])


def test_format_table_layout():
    text = format_table(METHOD1_TABLE)
    lines = text.splitlines()
    assert lines[0].split("\t") == ["Error", "q1", "q2", "q3", "q4"]
    assert lines[2].split("\t")[3] == "X/010"


def test_noise_channel_validation():
    with pytest.raises(ValueError):
        BiasedNoiseChannel(0.6, 0.3, 0.2)


def test_sample_noise_rates():
    ch = BiasedNoiseChannel(0.0, 0.0, 0.3)
    rng = np.random.default_rng(4)
    hits = sum(len(sample_noise(ch, 6, rng)) for _ in range(2000))
    sigma = np.sqrt(12000 * 0.3 * 0.7)
    assert abs(hits - 3600) <= 3 * sigma
    assert all(l == "Z" for l, _ in sample_noise(ch, 6, rng))


def test_noiseless_channel_never_fails():
    failures, flagged = logical_failure_rate(BiasedNoiseChannel(0, 0, 0), 50, np.random.default_rng(0))
    assert failures == flagged == 0
