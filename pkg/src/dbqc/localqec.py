"""Node-local error correction: the 4-qubit scheme (method 1) and the 6-qubit
biased-noise scheme (method 2).

Qubit q1 holds the data, the others are fresh ancillas. Each circuit spreads
the data, leaves a slot where a single error may strike, undoes the spreading
and ends with a CNOT/Toffoli layer that corrects the data coherently. The
ancilla readout (q2 first) is the syndrome. Positions are 1-based as in the
tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .statesim import GATES, SimState

ERROR = "ERROR"

# ("H", q) | ("X", controls..., target) with 0-based qubits | ERROR
METHOD1_CIRCUIT = (
    ("X", 0, 2),
    ("H", 0), ("H", 2),
    ("X", 0, 1), ("X", 2, 3),
    ERROR,
    ("X", 0, 1), ("X", 2, 3),
    ("X", 1, 0), ("X", 3, 2),
    ("H", 0), ("H", 2),
    ("X", 0, 2),
    ("X", 2, 0),
    ("X", 2, 3, 0),
)

METHOD2_CIRCUIT = (
    ("X", 0, 3),
    ("H", 0), ("H", 3),
    ("X", 0, 1), ("X", 3, 4),
    ("X", 0, 2), ("X", 3, 5),
    ERROR,
    ("X", 0, 1), ("X", 3, 4),
    ("X", 0, 2), ("X", 3, 5),
    ("X", 1, 2, 0), ("X", 4, 5, 3),
    ("H", 0), ("H", 3),
    ("X", 0, 3),
    ("X", 3, 0),
    ("X", 3, 4, 5, 0),
    ("X", 3, 5, 0),
    ("X", 3, 4, 0),
)

CIRCUITS = {1: (4, METHOD1_CIRCUIT), 2: (6, METHOD2_CIRCUIT)}
FLAG_SYNDROME = "00100"


@dataclass(frozen=True)
class SyndromeTable:
    method: int
    n_qubits: int
    # (error kind, 1-based position) -> (residual on the data qubit or None, syndrome)
    entries: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.entries[key]


def _table(method: int, n: int, rows: dict[str, list[str]]) -> SyndromeTable:
    entries = {}
    for kind, cells in rows.items():
        for pos, cell in enumerate(cells, start=1):
            residual, syndrome = cell.split("/")
            entries[(kind, pos)] = (None if residual == "-" else residual, syndrome)
    return SyndromeTable(method, n, entries)


# reference tables; "-" means no residual error on the data qubit
METHOD1_TABLE = _table(1, 4, {
    "X": ["-/100", "Z/100", "-/001", "Z/001"],
    "Z": ["-/010", "-/010", "X/010", "X/010"],
    "Y": ["-/110", "Z/110", "-/011", "Z/011"],
})
METHOD2_TABLE = _table(2, 6, {
    "X": ["-/11000", "-/10000", "-/01000", "-/00011", "-/00010", "-/00001"],
    "Z": ["-/00100", "-/00100", "-/00100", "X/00100", "X/00100", "X/00100"],
    "Y": ["-/11100", "-/10100", "-/01100", "-/00111", "-/00110", "-/00101"],
})


def syndrome_tables() -> tuple[SyndromeTable, SyndromeTable]:
    return METHOD1_TABLE, METHOD2_TABLE


@dataclass
class RoundResult:
    syndrome: str
    flag: bool = False
    corrected: bool = True


def run_circuit(state: SimState, data: int, method: int, errors=()) -> str:
    """Run one round on a data qubit with fresh ancillas; errors are (Pauli, 1-based position)."""
    n, circuit = CIRCUITS[method]
    for letter, pos in errors:
        if not 1 <= pos <= n:
            raise ValueError(f"error position {pos} outside 1..{n}")
        if letter not in ("I", "X", "Y", "Z"):
            raise ValueError(f"unknown Pauli {letter}")
    qubits = [data] + [state.allocate("0") for _ in range(n - 1)]
    for op in circuit:
        if op == ERROR:
            for letter, pos in errors:
                if letter != "I":
                    state.apply(letter, qubits[pos - 1])
        elif op[0] == "H":
            state.apply("H", qubits[op[1]])
        else:
            *controls, target = op[1:]
            state.apply_controlled(GATES["X"], [qubits[c] for c in controls], qubits[target])
    return "".join(str(state.measure(q, retire=True)) for q in qubits[1:])


def qec4_round(state: SimState, data: int, error: tuple[str, int] | None = None) -> RoundResult:
    """One method-1 round. The circuit's last layer already restores the data, so
    every syndrome maps to the identity correction."""
    syndrome = run_circuit(state, data, 1, [error] if error else [])
    return RoundResult(syndrome)


def qec6_round(state: SimState, data: int, error: tuple[str, int] | None = None) -> RoundResult:
    """One method-2 round. Syndrome 00100 flags a phase error that this round leaves
    for higher-level handling."""
    syndrome = run_circuit(state, data, 2, [error] if error else [])
    flag = syndrome == FLAG_SYNDROME
    return RoundResult(syndrome, flag=flag, corrected=not flag)


def _residual(state: SimState, data: int, psi: np.ndarray) -> str | None:
    for letter in ("I", "X", "Y", "Z"):
        if state.fidelity([data], GATES[letter] @ psi) > 1 - 1e-9:
            return None if letter == "I" else letter
    return "?"


def simulate_table(method: int, rng: np.random.Generator | None = None) -> SyndromeTable:
    """Simulate every (error, position) cell on a random data state."""
    rng = rng or np.random.default_rng(0)
    n, _ = CIRCUITS[method]
    entries = {}
    for kind in ("X", "Z", "Y"):
        for pos in range(1, n + 1):
            psi = rng.normal(size=2) + 1j * rng.normal(size=2)
            psi /= np.linalg.norm(psi)
            st = SimState(rng)
            q = st.allocate(psi)
            syndrome = run_circuit(st, q, method, [(kind, pos)])
            entries[(kind, pos)] = (_residual(st, q, psi), syndrome)
    return SyndromeTable(method, n, entries)


def compare_tables(got: SyndromeTable, want: SyndromeTable) -> list[tuple]:
    """Cells where syndrome or residual differ."""
    return [(k, got.entries.get(k), v) for k, v in want.entries.items() if got.entries.get(k) != v]


def format_table(table: SyndromeTable) -> str:
    """Plain-text grid: one row per error kind, one column per qubit, cells residual/syndrome."""
    head = ["Error"] + [f"q{p}" for p in range(1, table.n_qubits + 1)]
    lines = ["\t".join(head)]
    for kind in ("X", "Z", "Y"):
        cells = []
        for pos in range(1, table.n_qubits + 1):
            residual, syndrome = table.entries[(kind, pos)]
            cells.append(f"{'N.E.' if residual is None else residual}/{syndrome}")
        lines.append("\t".join([kind] + cells))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- noise


@dataclass(frozen=True)
class BiasedNoiseChannel:
    p_x: float
    p_y: float
    p_z: float

    def __post_init__(self):
        ps = (self.p_x, self.p_y, self.p_z)
        if any(p < 0 or p > 1 for p in ps) or sum(ps) > 1 + 1e-12:
            raise ValueError(f"invalid probabilities {ps}")


def sample_noise(ch: BiasedNoiseChannel, qubits, rng: np.random.Generator) -> list[tuple[str, int]]:
    """Independent per-qubit Pauli errors; qubits is a count (positions 1..count) or a list of positions."""
    positions = list(range(1, qubits + 1)) if isinstance(qubits, int) else list(qubits)
    probs = [1 - ch.p_x - ch.p_y - ch.p_z, ch.p_x, ch.p_y, ch.p_z]
    probs[0] = max(probs[0], 0.0)
    draws = rng.choice(4, size=len(positions), p=np.array(probs) / sum(probs))
    return [("IXYZ"[d], pos) for d, pos in zip(draws, positions) if d]


def logical_failure_rate(ch: BiasedNoiseChannel, trials: int, rng: np.random.Generator,
                         method: int = 2) -> tuple[int, int]:
    """Monte Carlo: count rounds whose data qubit does not come back intact, and flagged rounds."""
    n, _ = CIRCUITS[method]
    failures = flagged = 0
    for _ in range(trials):
        errors = sample_noise(ch, n, rng)
        if not errors:
            continue
        psi = rng.normal(size=2) + 1j * rng.normal(size=2)
        psi /= np.linalg.norm(psi)
        st = SimState(rng)
        q = st.allocate(psi)
        syndrome = run_circuit(st, q, method, errors)
        flagged += syndrome == FLAG_SYNDROME
        failures += st.fidelity([q], psi) < 1 - 1e-9
    return failures, flagged
