"""Trap-based verification of a delegated session, adversary strategies, and the
statistical experiments for completeness, blindness and detection.

Traps are single qubits in secret BB84 states placed on randomly chosen server
positions. To keep trap positions hidden, every position receives the same
message pattern in each phase: nodes with fewer teleported-gate rounds get
dummy rounds (controlled-identity), and missing one-bit instructions are filled
with random bits. The first two dummy rounds on each trap are the ones the
cost model attributes to verification; all other padding is outside the model.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .network import Network, NetworkError, star_topology
from .pauli import StabilizerCode, steane_code
from .protocols import (
    EncodedBlock,
    LogicalGate,
    MagicStateFactory,
    encode_distributed,
    execute_logical_sequence,
    logical_density,
    logical_plan,
    oracle_logical_state,
    scst,
)
from .resources import predict_session, reconcile
from .statesim import GATES, SimState, trace_distance

BB84_STATES = ("0", "1", "+", "-")
BASIS = {"0": "Z", "1": "Z", "+": "X", "-": "X"}
EXPECTED = {"0": 0, "1": 1, "+": 0, "-": 1}
VERIFY_DUMMIES_PER_TRAP = 2


class VerificationError(RuntimeError):
    pass


class InsufficientNodesError(VerificationError):
    pass


class LeakageMismatchError(VerificationError):
    pass


class AbortedOutputError(VerificationError):
    pass


# ---------------------------------------------------------------- traps


@dataclass(frozen=True)
class TrapConfig:
    N: int
    k_trap: int
    positions: tuple[int, ...]
    states: tuple[str, ...]

    def __post_init__(self):
        if not 0 <= self.k_trap <= self.N:
            raise VerificationError("need 0 <= k_trap <= N")
        if len(self.positions) != self.k_trap or len(self.states) != self.k_trap:
            raise VerificationError("trap list length differs from k_trap")
        if len(set(self.positions)) != self.k_trap or any(not 0 <= p < self.N for p in self.positions):
            raise VerificationError("trap positions must be distinct and in range")
        if any(s not in BB84_STATES for s in self.states):
            raise VerificationError("trap states must be BB84 states")

    def state_at(self, position: int) -> str | None:
        try:
            return self.states[self.positions.index(position)]
        except ValueError:
            return None

    def basis(self, position: int) -> str | None:
        s = self.state_at(position)
        return None if s is None else BASIS[s]


def prepare_traps(N: int, k_trap: int, rng: np.random.Generator) -> TrapConfig:
    if not 0 <= k_trap <= N:
        raise VerificationError(f"k_trap={k_trap} not in 0..{N}")
    positions = tuple(sorted(int(p) for p in rng.choice(N, size=k_trap, replace=False)))
    states = tuple(BB84_STATES[int(i)] for i in rng.integers(0, 4, size=k_trap))
    return TrapConfig(N, k_trap, positions, states)


def measure_trap(state: SimState, q: int, label: str) -> tuple[int, bool]:
    """Measure a trap in its secret basis; returns (outcome, passed)."""
    outcome = state.measure(q, basis=BASIS[label], retire=True)
    return outcome, outcome == EXPECTED[label]


def trap_check(label: str, paulis: Sequence[str], rng: np.random.Generator) -> bool:
    """Prepare a lone trap, let the given Paulis act on it, and check it."""
    st = SimState(rng)
    q = st.allocate(label)
    for letter in paulis:
        if letter != "I":
            st.apply(letter, q)
    return measure_trap(st, q, label)[1]


# ---------------------------------------------------------------- adversaries


@dataclass(frozen=True)
class AdversaryStrategy:
    kind: str = "honest"
    positions: tuple[int, ...] = ()
    paulis: tuple[str, ...] = ()
    d: int = 0
    flip_probability: float = 0.0
    phase: str = "setup"

    def __post_init__(self):
        if self.kind not in ("honest", "fixed_pauli", "random_pauli", "lying_measurement"):
            raise VerificationError(f"unknown adversary {self.kind}")
        if self.kind == "fixed_pauli":
            if not self.positions or len(self.positions) != len(self.paulis):
                raise VerificationError("fixed attack needs matching positions and Paulis")
            if any(p not in "XYZ" or len(p) != 1 for p in self.paulis):
                raise VerificationError("attack Paulis must be X, Y or Z")
        if self.kind == "random_pauli" and self.d < 1:
            raise VerificationError("random attack needs d >= 1")
        if not 0 <= self.flip_probability <= 1:
            raise VerificationError("flip probability must lie in [0, 1]")
        if self.phase not in ("setup", "compute"):
            raise VerificationError("attacks happen after setup or after compute")

    @classmethod
    def honest(cls) -> "AdversaryStrategy":
        return cls()

    @classmethod
    def fixed_pauli_attack(cls, positions: Sequence[int], paulis: Sequence[str], phase: str = "setup"):
        return cls("fixed_pauli", tuple(positions), tuple(paulis), len(positions), 0.0, phase)

    @classmethod
    def random_pauli_attack(cls, d: int, phase: str = "setup") -> "AdversaryStrategy":
        return cls("random_pauli", d=d, phase=phase)

    @classmethod
    def lying_measurement(cls, flip_probability: float) -> "AdversaryStrategy":
        return cls("lying_measurement", flip_probability=flip_probability)

    def targets(self, N: int, rng: np.random.Generator) -> list[tuple[int, str]]:
        """(position, Pauli) pairs this strategy attacks in one session."""
        if self.kind == "fixed_pauli":
            if any(not 0 <= p < N for p in self.positions):
                raise VerificationError("attack position out of range")
            return list(zip(self.positions, self.paulis))
        if self.kind == "random_pauli":
            if self.d > N:
                raise VerificationError("d exceeds the number of positions")
            pos = rng.choice(N, size=self.d, replace=False)
            letters = rng.integers(0, 3, size=self.d)
            return [(int(p), "XYZ"[int(l)]) for p, l in zip(pos, letters)]
        return []


def parse_adversary(text: str) -> AdversaryStrategy:
    """CLI form: honest | random:D | fixed:POS=P,POS=P | lie:PROB."""
    text = text.strip()
    if text == "honest":
        return AdversaryStrategy.honest()
    kind, _, arg = text.partition(":")
    try:
        if kind == "random":
            return AdversaryStrategy.random_pauli_attack(int(arg))
        if kind == "fixed":
            items = [item.split("=") for item in arg.split(",") if item]
            return AdversaryStrategy.fixed_pauli_attack([int(p) for p, _ in items], [l.upper() for _, l in items])
        if kind == "lie":
            return AdversaryStrategy.lying_measurement(float(arg))
    except ValueError as exc:
        raise VerificationError(f"bad adversary description {text!r}") from exc
    raise VerificationError(f"bad adversary description {text!r}")


class AdversaryView:
    """What a cheating server coalition can touch: server-held qubits and the classical log."""

    def __init__(self, net: Network, positions: Sequence[str]):
        self._net = net
        self.positions = list(positions)
        self.log = tuple(net.log.records)

    def apply_pauli(self, position: int, letter: str) -> None:
        node = self.positions[position]
        qubits = [q for q, n in self._net.location.items() if n == node]
        for q in qubits:
            self._net.state.apply(letter, q)


# ---------------------------------------------------------------- sessions


@dataclass(frozen=True)
class SessionTask:
    code: StabilizerCode
    gates: tuple[LogicalGate, ...] = ()
    blocks: int = 1

    @property
    def n_data(self) -> int:
        return self.code.n * self.blocks


@dataclass
class SessionReport:
    verdict: str
    seed: object
    trap_results: list[dict]
    ledger: dict
    reconciliation: dict
    peak_live_qubits: int
    peak_dense_qubits: int
    messages_per_position: dict[str, int]
    data_positions: list[str] = field(repr=False, default_factory=list)
    _fidelity: float | None = field(repr=False, default=None)
    _output: np.ndarray | None = field(repr=False, default=None)

    @property
    def accepted(self) -> bool:
        return self.verdict == "accepted"

    @property
    def fidelity(self) -> float | None:
        return self._fidelity if self.accepted else None

    @property
    def output(self) -> np.ndarray:
        """Logical density matrix of the result; an aborted session releases nothing."""
        if not self.accepted:
            raise AbortedOutputError("session aborted: no output is released")
        return self._output

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "fidelity": self.fidelity,
            "seed": self.seed,
            "traps": self.trap_results,
            "ledger": self.ledger,
            "costs": self.reconciliation,
            "peak_live_qubits": self.peak_live_qubits,
            "peak_dense_qubits": self.peak_dense_qubits,
            "messages_per_position": self.messages_per_position,
        }


def _dummy_round(net: Network, node: str, target: int) -> None:
    """Teleported controlled-identity from a fresh client |+> qubit to a server qubit."""
    ctrl = net.allocate(net.client, "+")
    pair = net.create_bell_pair(net.client, node)
    scst(net, ctrl, target, "I", pair)
    net.discard(ctrl)


def _profile(net: Network, start: int, positions: Sequence[str]) -> dict[str, Counter]:
    prof = {p: Counter() for p in positions}
    for m in net.log.records[start:]:
        if m.sender in prof:
            prof[m.sender][("from", len(m.bits), m.kind)] += 1
        if m.receiver in prof:
            prof[m.receiver][("to", len(m.bits), m.kind)] += 1
    return prof


def _pad_phase(net: Network, start: int, positions: Sequence[str], held: dict[str, int],
               trap_nodes: set[str], verify_budget: dict[str, int], min_rounds: int = 0) -> None:
    """Equalize this phase's per-position message pattern."""
    prof = _profile(net, start, positions)
    key = ("from", 1, "scst")
    rounds = max([min_rounds] + [c[key] for c in prof.values()])
    for node in positions:
        for _ in range(rounds - prof[node][key]):
            if node in trap_nodes and verify_budget[node] > 0:
                verify_budget[node] -= 1
                ctx = net.accounting(phase="verify", pairs=True, bits=False, kind="verify_dummy")
            else:
                ctx = net.accounting(pairs=False, bits=False, kind="blinding_dummy")
            with ctx:
                _dummy_round(net, node, held[node])
    prof = _profile(net, start, positions)
    keys = sorted({k for c in prof.values() for k in c})
    for k in keys:
        target = max(c[k] for c in prof.values())
        direction, width, kind = k
        for node in positions:
            for _ in range(target - prof[node][k]):
                bits = tuple(int(b) for b in net.client_rng.integers(0, 2, size=width))
                with net.accounting(pairs=False, bits=False, kind="blinding_pad"):
                    if direction == "to":
                        net.send_classical(net.client, node, bits, kind=kind)
                    else:
                        net.send_classical(node, net.client, bits, kind=kind)


def run_verified_session(task: SessionTask, traps: TrapConfig, adversary: AdversaryStrategy,
                         net: Network) -> SessionReport:
    """Encode, compute and check traps; abort on any trap mismatch."""
    servers = net.topology.servers
    N = traps.N
    if len(servers) < N:
        raise InsufficientNodesError(f"need {N} servers, topology has {len(servers)}")
    if N != task.n_data + traps.k_trap:
        raise InsufficientNodesError(f"N={N} must equal {task.n_data} data positions + {traps.k_trap} traps")
    if task.code.k != 1:
        raise VerificationError("sessions use k = 1 codes")
    positions = servers[:N]
    trap_nodes = {positions[p] for p in traps.positions}
    data_nodes = [v for v in positions if v not in trap_nodes]
    plan = logical_plan(task.code)
    factory = MagicStateFactory(task.code)

    # setup: traps delivered, data blocks encoded
    net.set_phase("setup")
    start = len(net.log)
    held: dict[str, int] = {}
    for p, label in zip(traps.positions, traps.states):
        held[positions[p]] = net.allocate(positions[p], label)
    blocks: list[EncodedBlock] = []
    n = task.code.n
    for b in range(task.blocks):
        nodes = data_nodes[b * n:(b + 1) * n]
        block = encode_distributed(task.code, nodes, net)
        blocks.append(block)
        held.update(dict(zip(nodes, block.data)))
    budget = {v: VERIFY_DUMMIES_PER_TRAP for v in trap_nodes}
    _pad_phase(net, start, positions, held, trap_nodes, budget,
               min_rounds=VERIFY_DUMMIES_PER_TRAP if trap_nodes else 0)
    view_targets = adversary.targets(N, net.adversary_rng)
    if adversary.phase == "setup":
        _attack(net, positions, view_targets)

    net.set_phase("compute")
    start = len(net.log)
    execute_logical_sequence(blocks, task.gates, net, factory, plan)
    _pad_phase(net, start, positions, held, trap_nodes, budget)
    if adversary.phase == "compute":
        _attack(net, positions, view_targets)

    # verification: traps report their measurement outcomes
    net.set_phase("verify")
    results = []
    for p, label in zip(traps.positions, traps.states):
        node = positions[p]
        outcome, _ = measure_trap(net.state, held[node], label)
        net.location.pop(held[node], None)
        reported = outcome
        if adversary.kind == "lying_measurement" and net.adversary_rng.random() < adversary.flip_probability:
            reported ^= 1
        net.send_classical(node, net.client, (reported,), kind="trap_readout")
        results.append({"position": p, "node": node, "state": label, "basis": BASIS[label],
                        "outcome": reported, "passed": reported == EXPECTED[label]})
    accepted = all(r["passed"] for r in results)

    prediction = predict_session(task.code, task.gates, traps.k_trap, task.blocks)
    rec = reconcile(prediction, net.ledger)
    fidelity = output = None
    if accepted:
        output = logical_density(net, blocks)
        psi = oracle_logical_state(task.gates, task.blocks)
        fidelity = float(np.real(np.vdot(psi, output @ psi)))
    counts = net.messages_per_node(phases=("setup", "compute"))
    return SessionReport(
        verdict="accepted" if accepted else "aborted",
        seed=_seed_repr(net),
        trap_results=results,
        ledger=net.ledger.snapshot(),
        reconciliation=rec.as_dict(),
        peak_live_qubits=net.state.peak_live,
        peak_dense_qubits=net.state.peak_factor,
        messages_per_position={v: counts[v] for v in positions},
        data_positions=data_nodes,
        _fidelity=fidelity,
        _output=output,
    )


def _seed_repr(net: Network):
    ent = net.seed_sequence.entropy
    return int(ent) if isinstance(ent, (int, np.integer)) else str(ent)


def _attack(net: Network, positions: Sequence[str], targets: Sequence[tuple[int, str]]) -> None:
    view = AdversaryView(net, positions)
    for pos, letter in targets:
        view.apply_pauli(pos, letter)


def run_session(task: SessionTask, k_trap: int, seed, adversary: AdversaryStrategy | None = None,
                topology=None) -> SessionReport:
    """Convenience driver: star topology sized to the task, traps drawn from the client stream."""
    N = task.n_data + k_trap
    net = Network(topology or star_topology(N), seed)
    traps = prepare_traps(N, k_trap, net.client_rng)
    return run_verified_session(task, traps, adversary or AdversaryStrategy.honest(), net)


# ---------------------------------------------------------------- detection experiment


def per_hit_pass_probability(letter: str | None = None) -> float:
    """Chance that a trap hit by the Pauli still passes, averaged over the random BB84 state.

    None means a uniformly random non-identity Pauli.
    """
    if letter is None:
        return 1 / 3
    return {"X": 0.5, "Z": 0.5, "Y": 0.0}[letter]


def exact_undetected_rate(N: int, k_trap: int, d: int, letter: str | None = None) -> float:
    """P(all traps pass) when d distinct uniform positions are attacked."""
    q = per_hit_pass_probability(letter)
    hits = stats.hypergeom(N, k_trap, d)
    return float(sum(hits.pmf(j) * q ** j for j in range(0, min(d, k_trap) + 1)))


def detection_experiment(N: int, k_trap: int, d: int, trials: int, rng: np.random.Generator,
                         letter: str | None = None, min_trials: int = 1000) -> dict:
    """Monte Carlo of undetected cheating against the trap layer.

    Each trial draws a fresh trap configuration and attacks d distinct uniform
    positions with uniform non-identity Paulis (or a fixed letter). A trial is
    undetected when every trap passes its check.
    """
    if trials < min_trials:
        raise VerificationError(f"need at least {min_trials} trials")
    if not 1 <= d <= N or not 0 <= k_trap <= N:
        raise VerificationError("invalid (N, k_trap, d)")
    adversary = (AdversaryStrategy.random_pauli_attack(d) if letter is None
                 else AdversaryStrategy.fixed_pauli_attack(list(range(d)), [letter] * d))
    undetected = harmful = 0
    for _ in range(trials):
        traps = prepare_traps(N, k_trap, rng)
        if letter is None:
            targets = adversary.targets(N, rng)
        else:
            targets = [(int(p), letter) for p in rng.choice(N, size=d, replace=False)]
        passed = True
        hit_data = False
        for pos, p in targets:
            label = traps.state_at(pos)
            if label is None:
                hit_data = True
            elif not trap_check(label, [p], rng):
                passed = False
        undetected += passed
        harmful += passed and hit_data
    rate = undetected / trials
    bound = (1 - k_trap / N) ** d
    sigma = float(np.sqrt(bound * (1 - bound) / trials))
    return {
        "N": N,
        "k_trap": k_trap,
        "d": d,
        "trials": trials,
        "undetected_count": undetected,
        "empirical_rate": rate,
        "bound_placement": bound,
        "bound_exponential": float(np.exp(-d * k_trap / N)),
        "verdict": "pass" if rate <= bound + 3 * sigma else "fail",
        "sigma": sigma,
        "exact_rate": exact_undetected_rate(N, k_trap, d, letter),
        "harmful_undetected_count": harmful,
        "bound_vacuous": k_trap == N,
        "attack": "uniform non-identity Pauli" if letter is None else letter,
    }


# ---------------------------------------------------------------- blindness


def leaf_trace_distances(net: Network, block: EncodedBlock) -> list[float]:
    half = np.eye(2) / 2
    return [trace_distance(net.state.reduced_density(q), half) for q in block.data]


def bb84_average() -> np.ndarray:
    rhos = []
    for label in BB84_STATES:
        st = SimState()
        q = st.allocate(label)
        rhos.append(st.reduced_density(q))
    return sum(rhos) / len(rhos)


def _runs(bits: np.ndarray) -> int:
    return int(1 + np.count_nonzero(bits[1:] != bits[:-1])) if bits.size else 0


def bitstream_tests(streams_a: Sequence[Sequence[int]], streams_b: Sequence[Sequence[int]]) -> dict:
    """Two-sample tests on per-session classical-log bitstreams of two tasks."""
    a = np.array([list(s) for s in streams_a], dtype=np.int8)
    b = np.array([list(s) for s in streams_b], dtype=np.int8)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise LeakageMismatchError("transcripts differ in length: the tasks leak different information")
    ones_a, ones_b = int(a.sum()), int(b.sum())
    table = [[ones_a, a.size - ones_a], [ones_b, b.size - ones_b]]
    freq_p = float(stats.chi2_contingency(table)[1])
    runs_a = [_runs(r) for r in a]
    runs_b = [_runs(r) for r in b]
    runs_p = float(stats.mannwhitneyu(runs_a, runs_b, alternative="two-sided").pvalue)
    # per-position marginals, Bonferroni-corrected
    length = a.shape[1]
    pos_ps = []
    for j in range(length):
        ca, cb = int(a[:, j].sum()), int(b[:, j].sum())
        t = [[ca, len(a) - ca], [cb, len(b) - cb]]
        if (ca + cb) in (0, len(a) + len(b)):
            pos_ps.append(1.0)
        else:
            pos_ps.append(float(stats.chi2_contingency(t)[1]))
    positional = min(1.0, min(pos_ps) * length) if pos_ps else 1.0
    return {"frequency_p": freq_p, "runs_p": runs_p, "positional_p": positional,
            "sessions": (len(a), len(b)), "length": length}


def blindness_probe(task_a: SessionTask, task_b: SessionTask, sessions: int, k_trap: int,
                    seed: int = 0, alpha: float = 1e-3) -> dict:
    """Run sessions of two equal-leakage tasks and test their transcripts and trap secrecy."""
    if (task_a.code.n, task_a.code.k, len(task_a.gates), task_a.blocks) != \
            (task_b.code.n, task_b.code.k, len(task_b.gates), task_b.blocks):
        raise LeakageMismatchError("tasks differ in permitted leakage")
    streams = {"a": [], "b": []}
    secrecy_ok = True
    root = np.random.SeedSequence(seed)
    seeds = root.spawn(2 * sessions)
    for i in range(sessions):
        for tag, task, ss in (("a", task_a, seeds[2 * i]), ("b", task_b, seeds[2 * i + 1])):
            report, log = _session_with_log(task, k_trap, ss)
            streams[tag].append(log.bitstream())
            if len(set(report.messages_per_position.values())) != 1:
                secrecy_ok = False
    tests = bitstream_tests(streams["a"], streams["b"])
    # a fresh encoding for the per-leaf check
    net = Network(star_topology(task_a.code.n), seed)
    block = encode_distributed(task_a.code, net.topology.servers, net)
    leaf = leaf_trace_distances(net, block)
    bb84 = trace_distance(bb84_average(), np.eye(2) / 2)
    passed = (min(tests["frequency_p"], tests["runs_p"], tests["positional_p"]) > alpha
              and max(leaf) <= 1e-9 and bb84 <= 1e-9 and secrecy_ok)
    return {"tests": tests, "leaf_trace_distance_max": max(leaf), "bb84_trace_distance": bb84,
            "trap_secrecy": secrecy_ok, "passed": passed}


def _session_with_log(task: SessionTask, k_trap: int, seed):
    N = task.n_data + k_trap
    net = Network(star_topology(N), seed)
    traps = prepare_traps(N, k_trap, net.client_rng)
    report = run_verified_session(task, traps, AdversaryStrategy.honest(), net)
    return report, net.log


def default_task(gates: Sequence[LogicalGate] = ()) -> SessionTask:
    return SessionTask(steane_code(), tuple(gates))
