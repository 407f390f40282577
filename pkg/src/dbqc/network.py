"""Network substrate: topology, Bell pairs, classical log, resource ledger, swapping.

The ClassicalLog is everything the servers collectively see on the classical
side. The ResourceLedger counts physical resources per protocol phase and, for
each entry, whether it belongs to the analytic cost model (the "model" view)
or is extra traffic such as blinding padding.
"""

from __future__ import annotations

from collections import deque
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .statesim import SimState

PHASES = ("setup", "compute", "verify")
CLIENT_ROLE, SERVER_ROLE = "client", "server"


class NetworkError(RuntimeError):
    pass


@dataclass
class Topology:
    roles: dict[str, str]
    edges: set[frozenset]
    star: bool = False

    def __post_init__(self):
        clients = [n for n, r in self.roles.items() if r == CLIENT_ROLE]
        if len(clients) != 1:
            raise NetworkError(f"expected exactly one client, found {len(clients)}")
        for e in self.edges:
            if len(e) != 2 or not e <= self.roles.keys():
                raise NetworkError(f"bad edge {sorted(e)}")
        if not self._connected():
            raise NetworkError("topology is not connected")

    @property
    def client(self) -> str:
        return next(n for n, r in self.roles.items() if r == CLIENT_ROLE)

    @property
    def servers(self) -> list[str]:
        return sorted((n for n, r in self.roles.items() if r == SERVER_ROLE), key=_node_key)

    def neighbors(self, node: str) -> list[str]:
        out = [m for e in self.edges if node in e for m in e if m != node]
        return sorted(out, key=_node_key)

    def adjacent(self, a: str, b: str) -> bool:
        return frozenset((a, b)) in self.edges

    def _connected(self) -> bool:
        nodes = list(self.roles)
        if not nodes:
            return False
        seen = {nodes[0]}
        frontier = [nodes[0]]
        adj: dict[str, set[str]] = {n: set() for n in nodes}
        for e in self.edges:
            a, b = tuple(e)
            adj[a].add(b)
            adj[b].add(a)
        while frontier:
            for m in adj[frontier.pop()]:
                if m not in seen:
                    seen.add(m)
                    frontier.append(m)
        return len(seen) == len(nodes)


def _node_key(name: str) -> tuple:
    # numeric suffixes sort numerically so S2 < S10
    head = name.rstrip("0123456789")
    tail = name[len(head):]
    return (head, int(tail) if tail else -1, name)


def star_topology(n_servers: int, client: str = "C", prefix: str = "S") -> Topology:
    roles = {client: CLIENT_ROLE}
    edges = set()
    for i in range(n_servers):
        roles[f"{prefix}{i}"] = SERVER_ROLE
        edges.add(frozenset((client, f"{prefix}{i}")))
    return Topology(roles, edges, star=True)


def line_topology(n_nodes: int, client_index: int = 0, prefix: str = "v") -> Topology:
    roles = {f"{prefix}{i}": SERVER_ROLE for i in range(n_nodes)}
    roles[f"{prefix}{client_index}"] = CLIENT_ROLE
    edges = {frozenset((f"{prefix}{i}", f"{prefix}{i + 1}")) for i in range(n_nodes - 1)}
    return Topology(roles, edges)


def parse_topology(text: str) -> Topology:
    """Topology file: header "client: <id>", then one "nodeA nodeB" edge per line."""
    client = None
    edges = set()
    nodes: set[str] = set()
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.lower().startswith("client:"):
            client = line.split(":", 1)[1].strip()
            continue
        parts = line.split()
        if len(parts) != 2 or parts[0] == parts[1]:
            raise NetworkError(f"bad edge line {raw!r}")
        edges.add(frozenset(parts))
        nodes.update(parts)
    if client is None:
        raise NetworkError("missing 'client: <id>' header")
    nodes.add(client)
    roles = {n: (CLIENT_ROLE if n == client else SERVER_ROLE) for n in nodes}
    star = all(client in e for e in edges)
    return Topology(roles, edges, star=star)


def format_topology(t: Topology) -> str:
    lines = [f"client: {t.client}"]
    for e in sorted(tuple(sorted(e, key=_node_key)) for e in t.edges):
        lines.append(f"{e[0]} {e[1]}")
    return "\n".join(lines) + "\n"


def shortest_path(t: Topology, a: str, c: str) -> list[str]:
    """Minimum-hop path from a to c; among those, the lexicographically smallest by node order."""
    if a == c:
        raise NetworkError("endpoints coincide")
    for v in (a, c):
        if v not in t.roles:
            raise NetworkError(f"unknown node {v}")
    dist = {c: 0}
    queue = deque([c])
    while queue:
        v = queue.popleft()
        for m in t.neighbors(v):
            if m not in dist:
                dist[m] = dist[v] + 1
                queue.append(m)
    if a not in dist:
        raise NetworkError(f"no route from {a} to {c}")
    path = [a]
    while path[-1] != c:
        here = path[-1]
        path.append(min((m for m in t.neighbors(here) if dist.get(m) == dist[here] - 1), key=_node_key))
    return path


# ---------------------------------------------------------------- records


@dataclass(frozen=True)
class Message:
    sender: str
    receiver: str
    bits: tuple[int, ...]
    phase: str
    kind: str
    relay: str | None = None


@dataclass
class ClassicalLog:
    records: list[Message] = field(default_factory=list)

    def append(self, msg: Message) -> None:
        self.records.append(msg)

    @property
    def total_bits(self) -> int:
        return sum(len(m.bits) for m in self.records)

    def bitstream(self) -> list[int]:
        return [b for m in self.records for b in m.bits]

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class LedgerEntry:
    phase: str
    kind: str
    bell: int = 0
    bits: int = 0
    model: bool = True
    magic: int = 0
    nodes: tuple[str, ...] = ()
    physical: bool = True


@dataclass
class ResourceLedger:
    entries: list[LedgerEntry] = field(default_factory=list)

    def add(self, entry: LedgerEntry) -> None:
        if entry.bell < 0 or entry.bits < 0 or entry.magic < 0:
            raise NetworkError("ledger counters are monotone")
        self.entries.append(entry)

    def _sum(self, pred) -> tuple[int, int]:
        es = [e for e in self.entries if pred(e)]
        return sum(e.bell for e in es), sum(e.bits for e in es)

    @property
    def bell_pairs(self) -> int:
        """Physical Bell pairs counted so far."""
        return self._sum(lambda e: e.physical)[0]

    @property
    def classical_bits(self) -> int:
        """Physical classical bits sent so far (equals the log's bit count)."""
        return self._sum(lambda e: e.physical)[1]

    @property
    def magic_states(self) -> int:
        return sum(e.magic for e in self.entries)

    def by_phase(self) -> dict[str, tuple[int, int]]:
        return {ph: self._sum(lambda e, ph=ph: e.physical and e.phase == ph) for ph in PHASES}

    def model_by_phase(self) -> dict[str, tuple[int, int]]:
        return {ph: self._sum(lambda e, ph=ph: e.model and e.phase == ph) for ph in PHASES}

    def by_kind(self) -> dict[str, tuple[int, int]]:
        kinds = sorted({e.kind for e in self.entries if e.physical})
        return {k: self._sum(lambda e, k=k: e.physical and e.kind == k) for k in kinds}

    def model_totals(self) -> tuple[int, int]:
        return self._sum(lambda e: e.model)

    def outside_model(self) -> tuple[int, int]:
        """Physical traffic the cost model does not price (blinding padding, dummy-round bits, ...)."""
        return self._sum(lambda e: e.physical and not e.model)

    def snapshot(self) -> dict:
        return {
            "bell_pairs": self.bell_pairs,
            "classical_bits": self.classical_bits,
            "magic_states": self.magic_states,
            "per_phase": {k: list(v) for k, v in self.by_phase().items()},
            "per_kind": {k: list(v) for k, v in self.by_kind().items()},
            "model_per_phase": {k: list(v) for k, v in self.model_by_phase().items()},
            "model_totals": list(self.model_totals()),
            "outside_model": list(self.outside_model()),
        }


@dataclass
class BellPair:
    a: int
    b: int
    node_a: str
    node_b: str
    long_distance: bool = False


# ---------------------------------------------------------------- network


class Network:
    """One session's network: topology, simulator, qubit locations, pairs, log, ledger."""

    def __init__(self, topology: Topology, seed: int | np.random.SeedSequence | None = 0):
        self.topology = topology
        ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        self.seed_sequence = ss
        quantum, client, adversary = ss.spawn(3)
        self.state = SimState(np.random.default_rng(quantum))
        self.client_rng = np.random.default_rng(client)
        self.adversary_rng = np.random.default_rng(adversary)
        self.location: dict[int, str] = {}
        self.pairs: dict[int, BellPair] = {}
        self.log = ClassicalLog()
        self.ledger = ResourceLedger()
        self.phase = "setup"
        self._acct = {"phase": None, "pairs": True, "bits": True, "kind": None}
        self.rounds = 0
        self.last_syndrome: tuple[int, ...] = ()
        self.pair_use: dict[str, int] = {}

    @property
    def client(self) -> str:
        return self.topology.client

    def set_phase(self, phase: str) -> None:
        if phase not in PHASES:
            raise NetworkError(f"unknown phase {phase}")
        self.phase = phase

    @contextmanager
    def accounting(self, phase: str | None = None, pairs: bool | None = None, bits: bool | None = None,
                   kind: str | None = None):
        """Override how ledger entries are attributed inside the block.

        phase sets the ledger phase and kind the ledger label; the log keeps the real
        protocol phase and message kind, so servers see no difference. pairs / bits
        say whether Bell pairs / classical bits count toward the cost model.
        """
        saved = dict(self._acct)
        if kind is not None:
            self._acct["kind"] = kind
        if phase is not None:
            self._acct["phase"] = phase
        if pairs is not None:
            self._acct["pairs"] = pairs
        if bits is not None:
            self._acct["bits"] = bits
        try:
            yield
        finally:
            self._acct = saved

    # ------------------------------------------------------------ qubits

    def allocate(self, node: str, state: str | np.ndarray = "0") -> int:
        if node not in self.topology.roles:
            raise NetworkError(f"unknown node {node}")
        q = self.state.allocate(state)
        self.location[q] = node
        return q

    def allocate_block(self, nodes: Sequence[str], vector: np.ndarray) -> list[int]:
        refs = self.state.allocate_block(vector, len(nodes))
        for q, node in zip(refs, nodes):
            self.location[q] = node
        return refs

    def node_of(self, q: int) -> str:
        return self.location[q]

    def server_qubits(self) -> list[int]:
        c = self.client
        return [q for q, n in self.location.items() if n != c and q in self.state._where]

    def discard(self, q: int) -> None:
        """Trace out a qubit (measure and forget): used for ancillas and failed nodes."""
        self.state.measure(q, retire=True)
        self.location.pop(q, None)

    def release(self, q: int) -> None:
        """Retire a qubit that has already been measured or is disentangled."""
        self.state.retire(q)
        self.location.pop(q, None)

    def fail_node(self, node: str) -> int:
        """Simulate catastrophic loss: every qubit held at the node is destroyed."""
        lost = [q for q, n in list(self.location.items()) if n == node]
        for q in lost:
            self.discard(q)
        return len(lost)

    # ------------------------------------------------------------ entanglement

    def create_bell_pair(self, a: str, b: str, kind: str = "pair") -> BellPair:
        if not self.topology.adjacent(a, b):
            raise NetworkError(f"{a} and {b} are not adjacent")
        qa = self.allocate(a, "+")
        qb = self.allocate(b, "0")
        self.state.apply("CNOT", qa, qb)
        pair = BellPair(qa, qb, a, b)
        self.pairs[qa] = pair
        self.pairs[qb] = pair
        self.charge(kind, bell=1, nodes=(a, b))
        for v in (a, b):
            self.pair_use[v] = self.pair_use.get(v, 0) + 1
        return pair

    def consume_pair(self, pair: BellPair) -> None:
        if pair.a not in self.pairs or pair.b not in self.pairs:
            raise NetworkError("pair already consumed")
        del self.pairs[pair.a]
        del self.pairs[pair.b]

    def swap_entanglement_along(self, path: Sequence[str], kind: str = "swap") -> BellPair:
        """Establish a Phi+ pair between the path endpoints by chained Bell measurements."""
        path = list(path)
        if len(path) < 2:
            raise NetworkError("path needs at least two nodes")
        for u, v in zip(path, path[1:]):
            if not self.topology.adjacent(u, v):
                raise NetworkError(f"{u} and {v} are not adjacent")
        link = self.create_bell_pair(path[0], path[1], kind=kind)
        for i in range(1, len(path) - 1):
            mid, nxt = path[i], path[i + 1]
            fresh = self.create_bell_pair(mid, nxt, kind=kind)
            # Bell measurement at mid on (its half of the long link, its half of the fresh pair)
            b1, b2 = link.b, fresh.a
            self.state.apply("CNOT", b1, b2)
            self.state.apply("H", b1)
            m1 = self.state.measure(b1, retire=True)
            m2 = self.state.measure(b2, retire=True)
            for q in (b1, b2):
                self.location.pop(q, None)
            self.consume_pair(link)
            self.consume_pair(fresh)
            self.send_classical(mid, nxt, (m1, m2), kind=kind)
            end = fresh.b
            if m2:
                self.state.apply("X", end)
            if m1:
                self.state.apply("Z", end)
            link = BellPair(link.a, end, path[0], nxt, long_distance=True)
            self.pairs[link.a] = link
            self.pairs[link.b] = link
            self.rounds += 1
        return link

    # ------------------------------------------------------------ classical

    def send_classical(self, sender: str, receiver: str, bits: Iterable[int], kind: str = "msg") -> None:
        bits = tuple(int(b) & 1 for b in bits)
        if not bits:
            raise NetworkError("empty classical message")
        for v in (sender, receiver):
            if v not in self.topology.roles:
                raise NetworkError(f"unknown node {v}")
        relay = None
        client = self.client
        if self.topology.star and sender != client and receiver != client:
            # leaves never talk directly; the client forwards the message
            relay = client
        self.log.append(Message(sender, receiver, bits, self.phase, kind, relay))
        self.charge(kind, bits=len(bits), nodes=(sender, receiver))

    def charge(self, kind: str, bell: int = 0, bits: int = 0, magic: int = 0,
               nodes: tuple[str, ...] = (), physical: bool = True, model: bool | None = None) -> None:
        """Record resources. Physical entries follow the accounting context; model-only
        entries (physical=False) price a logical operation in the cost model."""
        phase = self._acct["phase"] or self.phase
        if physical:
            kind = self._acct["kind"] or kind
        if model is None:
            model = self._acct["pairs"] if bell else self._acct["bits"]
            if bell and bits:
                raise NetworkError("charge pairs and bits separately")
        self.ledger.add(LedgerEntry(phase, kind, bell, bits, model, magic, nodes, physical))

    def messages_per_node(self, phases: Sequence[str] | None = None) -> dict[str, int]:
        counts = {s: 0 for s in self.topology.servers}
        for m in self.log.records:
            if phases is not None and m.phase not in phases:
                continue
            for v in (m.sender, m.receiver):
                if v in counts:
                    counts[v] += 1
        return counts


def is_phi_plus(state: SimState, a: int, b: int) -> float:
    phi = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
    return state.fidelity([a, b], phi)
