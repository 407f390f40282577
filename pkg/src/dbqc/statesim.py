"""Statevector simulation with dynamic qubit allocation and a Clifford tableau tracker.

SimState keeps the global state as a product of dense factors. Each factor is a
tensor with one axis per qubit; qubits only share a factor once an entangling
gate has touched them, and measured qubits are split back out. This keeps the
largest dense tensor small when many short-lived ancillas come and go.

Qubit handles are plain integers issued by ``allocate``. When a state is
flattened to a vector (dumps, fidelity references), the first qubit in the
requested order is the least significant bit of the basis index.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .pauli import PauliError, PauliString, multiply

TOL = 1e-9
_S2 = 1 / np.sqrt(2)

GATES = {
    "I": np.eye(2, dtype=complex),
    "H": np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "S": np.diag([1, 1j]).astype(complex),
    "SDG": np.diag([1, -1j]).astype(complex),
    "T": np.diag([1, np.exp(1j * np.pi / 4)]).astype(complex),
    "TDG": np.diag([1, np.exp(-1j * np.pi / 4)]).astype(complex),
}
# two-qubit gates: controlled versions of a single-qubit Pauli
CONTROLLED = {"CNOT": "X", "CX": "X", "CY": "Y", "CZ": "Z"}
CLIFFORD_1Q = {"I", "H", "X", "Y", "Z", "S", "SDG"}


class SimError(RuntimeError):
    pass


class _Factor:
    __slots__ = ("qubits", "tensor")

    def __init__(self, qubits: list[int], tensor: np.ndarray):
        self.qubits = qubits
        self.tensor = tensor


def _basis_vector(bits: int) -> np.ndarray:
    v = np.zeros(2, dtype=complex)
    v[bits] = 1
    return v


class SimState:
    def __init__(self, rng: np.random.Generator | None = None):
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._where: dict[int, _Factor] = {}
        self._next = 0
        self.peak_live = 0
        self.peak_factor = 0
        self.transcript: list[int] = []

    # ------------------------------------------------------------ allocation

    @property
    def live(self) -> list[int]:
        return sorted(self._where)

    def allocate(self, state: str | np.ndarray = "0") -> int:
        """Allocate one qubit in |0>, |1>, |+>, |->, or an explicit 2-vector."""
        if isinstance(state, str):
            vecs = {"0": _basis_vector(0), "1": _basis_vector(1),
                    "+": np.array([_S2, _S2], dtype=complex),
                    "-": np.array([_S2, -_S2], dtype=complex)}
            vec = vecs[state]
        else:
            vec = np.asarray(state, dtype=complex)
            if vec.shape != (2,):
                raise SimError("single-qubit state must have 2 amplitudes")
            vec = vec / np.linalg.norm(vec)
        return self.allocate_block(vec, 1)[0]

    def allocate_block(self, vector: np.ndarray, count: int) -> list[int]:
        """Allocate count qubits jointly in the given state (first qubit least significant)."""
        vector = np.asarray(vector, dtype=complex)
        if vector.size != 2 ** count:
            raise SimError("amplitude count does not match qubit count")
        norm = np.linalg.norm(vector)
        if abs(norm - 1) > 1e-6:
            raise SimError("state vector is not normalized")
        refs = list(range(self._next, self._next + count))
        self._next += count
        # reshape gives the most significant qubit on axis 0; reverse to refs order
        tensor = vector.reshape((2,) * count).transpose(tuple(reversed(range(count)))) if count else vector
        factor = _Factor(refs, np.ascontiguousarray(tensor / norm))
        for r in refs:
            self._where[r] = factor
        self.peak_live = max(self.peak_live, len(self._where))
        self.peak_factor = max(self.peak_factor, count)
        return refs

    def _factor(self, q: int) -> _Factor:
        try:
            return self._where[q]
        except KeyError:
            raise SimError(f"qubit {q} is not allocated") from None

    def _check_targets(self, qubits: Sequence[int]) -> None:
        if len(set(qubits)) != len(qubits):
            raise SimError(f"duplicate targets {qubits}")
        for q in qubits:
            self._factor(q)

    def _merge(self, qubits: Sequence[int]) -> _Factor:
        factors = []
        for q in qubits:
            f = self._factor(q)
            if all(f is not g for g in factors):
                factors.append(f)
        if len(factors) == 1:
            return factors[0]
        tensor = factors[0].tensor
        refs = list(factors[0].qubits)
        for f in factors[1:]:
            tensor = np.multiply.outer(tensor, f.tensor)
            refs += f.qubits
        merged = _Factor(refs, tensor)
        for r in refs:
            self._where[r] = merged
        self.peak_factor = max(self.peak_factor, len(refs))
        return merged

    def retire(self, q: int) -> None:
        """Remove a qubit that is in a product state with everything else."""
        f = self._factor(q)
        if len(f.qubits) > 1:
            rho = self.reduced_density(q)
            purity = np.real(np.trace(rho @ rho))
            if purity < 1 - TOL:
                raise SimError(f"qubit {q} is entangled (purity {purity:.3g}); measure it first")
            self._split(q)
        del self._where[q]

    def _split(self, q: int) -> None:
        f = self._factor(q)
        axis = f.qubits.index(q)
        t = np.moveaxis(f.tensor, axis, 0)
        rest_shape = t.shape[1:]
        m = t.reshape(2, -1)
        # the qubit is in a product state, so m has rank one: take the dominant row
        row = int(np.argmax(np.linalg.norm(m, axis=1)))
        rest = m[row] / np.linalg.norm(m[row])
        qvec = m @ rest.conj()
        qvec = qvec / np.linalg.norm(qvec)
        f.tensor = rest.reshape(rest_shape)
        f.qubits = [r for r in f.qubits if r != q]
        single = _Factor([q], qvec)
        self._where[q] = single

    # ------------------------------------------------------------ gates

    def apply(self, gate: str, *targets: int) -> None:
        """Apply a named gate. Two-qubit names take (control, target)."""
        gate = gate.upper()
        if gate in GATES:
            if len(targets) != 1:
                raise SimError(f"{gate} takes one target")
            self.apply_unitary(GATES[gate], targets[0])
        elif gate in CONTROLLED:
            if len(targets) != 2:
                raise SimError(f"{gate} takes control and target")
            self.apply_controlled(GATES[CONTROLLED[gate]], [targets[0]], targets[1])
        elif gate in ("CCX", "TOFFOLI"):
            self.apply_controlled(GATES["X"], list(targets[:-1]), targets[-1])
        else:
            raise SimError(f"unknown gate {gate}")

    def apply_unitary(self, u: np.ndarray, q: int) -> None:
        f = self._factor(q)
        axis = f.qubits.index(q)
        t = np.tensordot(u, f.tensor, axes=([1], [axis]))
        f.tensor = np.moveaxis(t, 0, axis)

    def apply_controlled(self, u: np.ndarray, controls: Sequence[int], target: int) -> None:
        """Apply u to target on the branch where every control is |1>."""
        qubits = list(controls) + [target]
        self._check_targets(qubits)
        f = self._merge(qubits)
        idx: list = [slice(None)] * len(f.qubits)
        for c in controls:
            idx[f.qubits.index(c)] = 1
        idx = tuple(idx)
        sub = f.tensor[idx]
        remaining = [r for r in f.qubits if r not in controls]
        axis = remaining.index(target)
        sub = np.moveaxis(np.tensordot(u, sub, axes=([1], [axis])), 0, axis)
        tensor = f.tensor.copy()
        tensor[idx] = sub
        f.tensor = tensor

    def apply_matrix(self, u: np.ndarray, qubits: Sequence[int]) -> None:
        """Apply a 2^k x 2^k unitary; qubits[0] is the least significant index bit."""
        k = len(qubits)
        self._check_targets(qubits)
        if u.shape != (2 ** k, 2 ** k):
            raise SimError("matrix size does not match qubit count")
        f = self._merge(qubits)
        axes = [f.qubits.index(q) for q in reversed(qubits)]
        ut = u.reshape((2,) * (2 * k))
        t = np.tensordot(ut, f.tensor, axes=(list(range(k, 2 * k)), axes))
        f.tensor = np.moveaxis(t, list(range(k)), axes)

    def apply_pauli(self, p: PauliString, qubits: Sequence[int]) -> None:
        """Apply a Pauli string (phase included) to the listed qubits."""
        if p.n != len(qubits):
            raise SimError("Pauli size does not match qubit list")
        for j, q in enumerate(qubits):
            letter = p.letter(j)
            if letter != "I":
                self.apply_unitary(GATES[letter], q)
        if p.phase and qubits:
            f = self._factor(qubits[0])
            f.tensor = f.tensor * (1j ** p.phase)

    # ------------------------------------------------------------ measurement

    def measure(self, q: int, basis: str = "Z", retire: bool = False) -> int:
        """Projective measurement; 0 is the +1 eigenvalue. Optionally retire q afterwards."""
        basis = basis.upper()
        if basis not in ("Z", "X"):
            raise SimError(f"unsupported basis {basis}")
        if basis == "X":
            self.apply_unitary(GATES["H"], q)
        f = self._factor(q)
        axis = f.qubits.index(q)
        t = np.moveaxis(f.tensor, axis, 0)
        p1 = float(np.sum(np.abs(t[1]) ** 2))
        p0 = float(np.sum(np.abs(t[0]) ** 2))
        total = p0 + p1
        p1 /= total
        if p1 < 1e-12:
            p1 = 0.0
        elif p1 > 1 - 1e-12:
            p1 = 1.0
        outcome = int(self.rng.random() < p1)
        prob = p1 if outcome else 1 - p1
        if prob <= 0:
            raise SimError("selected a zero-probability branch")
        rest = t[outcome] / np.sqrt(prob * total)
        f.tensor = rest
        f.qubits = [r for r in f.qubits if r != q]
        vec = _basis_vector(outcome)
        if basis == "X":
            vec = GATES["H"] @ vec
        self._where[q] = _Factor([q], vec)
        self.transcript.append(outcome)
        if retire:
            del self._where[q]
        return outcome

    # ------------------------------------------------------------ observables

    def expectation(self, p: PauliString, qubits: Sequence[int]) -> float:
        """<psi| p |psi> where p acts on the listed qubits (p must be Hermitian)."""
        if p.n != len(qubits):
            raise SimError("Pauli size does not match qubit list")
        self._check_targets(qubits)
        if p.phase % 2:
            raise PauliError("expectation needs a Hermitian Pauli string")
        groups: dict[int, tuple[_Factor, list[tuple[int, str]]]] = {}
        for j, q in enumerate(qubits):
            letter = p.letter(j)
            if letter == "I":
                continue
            f = self._factor(q)
            groups.setdefault(id(f), (f, []))[1].append((q, letter))
        value = complex(1 if p.phase == 0 else -1)
        for f, items in groups.values():
            t = f.tensor
            for q, letter in items:
                axis = f.qubits.index(q)
                t = np.moveaxis(np.tensordot(GATES[letter], t, axes=([1], [axis])), 0, axis)
            value *= np.vdot(f.tensor, t)
        return float(np.real(value))

    def density(self, qubits: Sequence[int]) -> np.ndarray:
        """Reduced density matrix of the listed qubits (qubits[0] least significant)."""
        self._check_targets(qubits)
        k = len(qubits)
        groups: dict[int, tuple[_Factor, list[int]]] = {}
        for q in qubits:
            f = self._factor(q)
            groups.setdefault(id(f), (f, []))[1].append(q)
        order: list[int] = []
        rho = np.ones((1, 1), dtype=complex)
        for f, keep in groups.values():
            keep_axes = [f.qubits.index(q) for q in keep]
            other = [a for a in range(len(f.qubits)) if a not in keep_axes]
            m = np.transpose(f.tensor, keep_axes + other).reshape(2 ** len(keep), -1)
            # keep[0] ends up most significant within this block
            rho = np.kron(rho, m @ m.conj().T)
            order += keep
        pos = [order.index(q) for q in reversed(qubits)]
        rho = rho.reshape((2,) * (2 * k)).transpose(pos + [k + p for p in pos])
        return rho.reshape(2 ** k, 2 ** k)

    def project(self, qubits: Sequence[int], basis: np.ndarray) -> np.ndarray:
        """B^dagger rho B for the reduced state of the listed qubits, without forming rho.

        basis has 2^k rows (qubits[0] least significant); the cost grows with the
        factors touching the qubits rather than with 4^k.
        """
        self._check_targets(qubits)
        k = len(qubits)
        basis = np.asarray(basis, dtype=complex)
        if basis.ndim != 2 or basis.shape[0] != 2 ** k:
            raise SimError("basis dimension mismatch")
        factors = []
        for q in qubits:
            f = self._factor(q)
            if all(f is not g for g in factors):
                factors.append(f)
        tensor = np.ones((), dtype=complex)
        order: list[int] = []
        for f in factors:
            tensor = np.multiply.outer(tensor, f.tensor)
            order += f.qubits
        keep = [order.index(q) for q in reversed(qubits)]
        other = [a for a in range(len(order)) if a not in keep]
        m = np.transpose(tensor, keep + other).reshape(2 ** k, -1)
        amp = basis.conj().T @ m
        return amp @ amp.conj().T

    def reduced_density(self, q: int) -> np.ndarray:
        return self.density([q])

    def fidelity(self, qubits: Sequence[int], reference: np.ndarray) -> float:
        """<ref| rho |ref> for the reduced state of the listed qubits."""
        reference = np.asarray(reference, dtype=complex)
        if reference.size != 2 ** len(qubits):
            raise SimError("reference dimension mismatch")
        nrm = np.linalg.norm(reference)
        if abs(nrm - 1) > 1e-6:
            raise SimError("reference state is not normalized")
        return float(np.real(self.project(qubits, reference.reshape(-1, 1))[0, 0]))

    def vector(self, qubits: Sequence[int]) -> np.ndarray:
        """Pure-state amplitudes of a set of qubits that forms a closed product block."""
        self._check_targets(qubits)
        factors = []
        for q in qubits:
            f = self._factor(q)
            if all(f is not g for g in factors):
                factors.append(f)
        covered = {r for f in factors for r in f.qubits}
        if covered != set(qubits):
            raise SimError("qubits are entangled with qubits outside the requested set")
        tensor = np.ones((), dtype=complex)
        order: list[int] = []
        for f in factors:
            tensor = np.multiply.outer(tensor, f.tensor)
            order += f.qubits
        pos = [order.index(q) for q in reversed(qubits)]
        return np.transpose(tensor, pos).reshape(-1)

    def norm(self) -> float:
        total = 1.0
        seen = set()
        for f in self._where.values():
            if id(f) not in seen:
                seen.add(id(f))
                total *= float(np.sum(np.abs(f.tensor) ** 2))
        return total

    def largest_factor(self) -> int:
        return max((len(f.qubits) for f in self._where.values()), default=0)

    def dump(self, qubits: Sequence[int] | None = None) -> str:
        """Debug snapshot: one "index real imag" line per amplitude above 1e-12."""
        qubits = list(qubits) if qubits is not None else self.live
        vec = self.vector(qubits)
        lines = [f"{i} {a.real:.12g} {a.imag:.12g}" for i, a in enumerate(vec) if abs(a) >= 1e-12]
        return "\n".join(lines)


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(a - b))))


# ---------------------------------------------------------------- tableau


class NonCliffordError(ValueError):
    pass


def _gate_images(gate: str, n: int, targets: Sequence[int]) -> dict[tuple[str, int], PauliString]:
    return _gate_images_cached(gate.upper(), n, tuple(targets))


@lru_cache(maxsize=4096)
def _gate_images_cached(gate: str, n: int, targets: tuple[int, ...]) -> dict[tuple[str, int], PauliString]:
    """Images of X_q and Z_q under conjugation U P U^dagger for the touched qubits."""
    def single(q: int, letter: str, phase: int = 0) -> PauliString:
        p = PauliString.single(n, q, letter)
        return PauliString(n, p.x, p.z, phase)

    def pair(q1: int, l1: str, q2: int, l2: str) -> PauliString:
        return PauliString.from_letters({q1: l1, q2: l2}, n)

    gate = gate.upper()
    if gate in CLIFFORD_1Q:
        (q,) = targets
        table = {
            "I": (single(q, "X"), single(q, "Z")),
            "H": (single(q, "Z"), single(q, "X")),
            "X": (single(q, "X"), single(q, "Z", 2)),
            "Y": (single(q, "X", 2), single(q, "Z", 2)),
            "Z": (single(q, "X", 2), single(q, "Z")),
            "S": (single(q, "Y"), single(q, "Z")),
            "SDG": (single(q, "Y", 2), single(q, "Z")),
        }
        ix, iz = table[gate]
        return {("X", q): ix, ("Z", q): iz}
    if gate in ("CNOT", "CX"):
        c, t = targets
        return {("X", c): pair(c, "X", t, "X"), ("Z", c): single(c, "Z"),
                ("X", t): single(t, "X"), ("Z", t): pair(c, "Z", t, "Z")}
    if gate == "CZ":
        c, t = targets
        return {("X", c): pair(c, "X", t, "Z"), ("Z", c): single(c, "Z"),
                ("X", t): pair(c, "Z", t, "X"), ("Z", t): single(t, "Z")}
    raise NonCliffordError(f"{gate} is not a supported Clifford gate")


def conjugate(p: PauliString, gate: str, targets: Sequence[int]) -> PauliString:
    """U p U^dagger for a Clifford gate on the given targets."""
    if len(set(targets)) != len(targets):
        raise SimError("duplicate targets")
    images = _gate_images(gate, p.n, targets)
    touched = set(targets)
    # p = i^(phase + #Y) * prod_j X_j^x_j Z_j^z_j; conjugate factor by factor
    ny = bin(p.x & p.z).count("1")
    rest_x = p.x & ~sum(1 << q for q in touched)
    rest_z = p.z & ~sum(1 << q for q in touched)
    ny_rest = bin(rest_x & rest_z).count("1")
    out = PauliString(p.n, rest_x, rest_z, p.phase + ny - ny_rest)
    for q in sorted(touched):
        if (p.x >> q) & 1:
            out = multiply(out, images[("X", q)])
        if (p.z >> q) & 1:
            out = multiply(out, images[("Z", q)])
    return out


@dataclass(frozen=True)
class Tableau:
    """Signed generators of a tracked stabilizer group."""

    generators: tuple[PauliString, ...]

    @property
    def n(self) -> int:
        return self.generators[0].n if self.generators else 0

    @property
    def phases(self) -> tuple[int, ...]:
        return tuple(g.sign for g in self.generators)


def tableau_conjugate(t: Tableau, gate: str, targets: Sequence[int]) -> Tableau:
    return Tableau(tuple(conjugate(g, gate, targets) for g in t.generators))


def basis_state_tableau(n: int) -> Tableau:
    return Tableau(tuple(PauliString.single(n, q, "Z") for q in range(n)))
