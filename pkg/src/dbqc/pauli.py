"""Pauli strings over GF(2), stabilizer codes and syndrome-to-correction solving.

A Pauli string on n qubits is stored as two integer bitmasks (bit j belongs to
qubit j) plus a phase exponent p, meaning i**p times the tensor product of the
single-qubit letters. The letter on qubit j is I, X, Z or Y for (x, z) bits
(0,0), (1,0), (0,1), (1,1). Y is the Hermitian Y, not XZ.

In text form qubit 0 is the leftmost letter, so "IIIXXXX" acts on qubits 3..6.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

_PHASE_TOKENS = {"": 0, "+": 0, "+i": 1, "i": 1, "-": 2, "-i": 3}
_PHASE_TEXT = {0: "", 1: "+i", 2: "-", 3: "-i"}
_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Z": (0, 1), "Y": (1, 1)}


class PauliError(ValueError):
    pass


def _popcount(v: int) -> int:
    return bin(v).count("1")


@dataclass(frozen=True)
class PauliString:
    n: int
    x: int
    z: int
    phase: int = 0

    def __post_init__(self):
        mask = (1 << self.n) - 1
        if self.n < 0 or self.x & ~mask or self.z & ~mask:
            raise PauliError("bit masks exceed qubit count")
        object.__setattr__(self, "phase", self.phase % 4)

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(n, 0, 0, 0)

    @classmethod
    def from_bits(cls, x_bits: Sequence[int], z_bits: Sequence[int], phase: int = 0) -> "PauliString":
        if len(x_bits) != len(z_bits):
            raise PauliError("x and z bit vectors differ in length")
        x = sum(1 << j for j, b in enumerate(x_bits) if b)
        z = sum(1 << j for j, b in enumerate(z_bits) if b)
        return cls(len(x_bits), x, z, phase)

    @classmethod
    def single(cls, n: int, qubit: int, letter: str) -> "PauliString":
        bx, bz = _LETTER_BITS[letter]
        return cls(n, bx << qubit, bz << qubit)

    @classmethod
    def from_letters(cls, letters: dict[int, str], n: int) -> "PauliString":
        x = z = 0
        for q, letter in letters.items():
            bx, bz = _LETTER_BITS[letter]
            x |= bx << q
            z |= bz << q
        return cls(n, x, z)

    @classmethod
    def parse(cls, text: str) -> "PauliString":
        text = text.strip()
        i = 0
        while i < len(text) and text[i] not in _LETTER_BITS:
            i += 1
        token, body = text[:i], text[i:]
        if token not in _PHASE_TOKENS:
            raise PauliError(f"bad phase token {token!r}")
        if not body or any(c not in _LETTER_BITS for c in body):
            raise PauliError(f"bad Pauli string {text!r}")
        x_bits = [_LETTER_BITS[c][0] for c in body]
        z_bits = [_LETTER_BITS[c][1] for c in body]
        return cls.from_bits(x_bits, z_bits, _PHASE_TOKENS[token])

    def __str__(self) -> str:
        return _PHASE_TEXT[self.phase] + self.letters()

    def letters(self) -> str:
        return "".join(self.letter(j) for j in range(self.n))

    def letter(self, j: int) -> str:
        return "IXZY"[((self.x >> j) & 1) | (((self.z >> j) & 1) << 1)]

    @property
    def x_bits(self) -> tuple[int, ...]:
        return tuple((self.x >> j) & 1 for j in range(self.n))

    @property
    def z_bits(self) -> tuple[int, ...]:
        return tuple((self.z >> j) & 1 for j in range(self.n))

    @property
    def support(self) -> list[int]:
        s = self.x | self.z
        return [j for j in range(self.n) if (s >> j) & 1]

    @property
    def sign(self) -> int:
        """+1 or -1 for Hermitian strings."""
        if self.phase % 2:
            raise PauliError(f"{self} is not Hermitian")
        return 1 if self.phase == 0 else -1

    def unsigned(self) -> "PauliString":
        return PauliString(self.n, self.x, self.z, 0)

    def negate(self) -> "PauliString":
        return PauliString(self.n, self.x, self.z, self.phase + 2)

    def symplectic(self) -> int:
        """Symplectic vector x | z << n as a single integer."""
        return self.x | (self.z << self.n)

    def __mul__(self, other: "PauliString") -> "PauliString":
        return multiply(self, other)

    def to_matrix(self) -> np.ndarray:
        """Dense 2^n x 2^n matrix, qubit 0 least significant in the basis index."""
        mats = {
            "I": np.eye(2, dtype=complex),
            "X": np.array([[0, 1], [1, 0]], dtype=complex),
            "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
            "Z": np.array([[1, 0], [0, -1]], dtype=complex),
        }
        out = np.ones((1, 1), dtype=complex)
        for j in range(self.n):
            out = np.kron(mats[self.letter(j)], out)
        return (1j ** self.phase) * out


def _check_sizes(p: PauliString, q: PauliString) -> None:
    if p.n != q.n:
        raise PauliError(f"size mismatch: {p.n} vs {q.n}")


def multiply(p: PauliString, q: PauliString) -> PauliString:
    """Operator product p*q, with the phase from letter-by-letter products."""
    _check_sizes(p, q)
    px, py, pz = p.x & ~p.z, p.x & p.z, p.z & ~p.x
    qx, qy, qz = q.x & ~q.z, q.x & q.z, q.z & ~q.x
    # XY = iZ, YZ = iX, ZX = iY and the reversed orders give -i
    plus = _popcount((px & qy) | (py & qz) | (pz & qx))
    minus = _popcount((py & qx) | (pz & qy) | (px & qz))
    return PauliString(p.n, p.x ^ q.x, p.z ^ q.z, p.phase + q.phase + plus - minus)


def inverse(p: PauliString) -> PauliString:
    # every letter squares to I, so only the phase needs inverting
    return PauliString(p.n, p.x, p.z, -p.phase)


def commutes(p: PauliString, q: PauliString) -> bool:
    _check_sizes(p, q)
    return _popcount((p.x & q.z) ^ (p.z & q.x)) % 2 == 0


def weight(p: PauliString) -> int:
    return _popcount(p.x | p.z)


def tensor(*parts: PauliString) -> PauliString:
    """Tensor product; the first factor occupies the lowest qubit indices."""
    n = x = z = phase = 0
    for part in parts:
        x |= part.x << n
        z |= part.z << n
        phase += part.phase
        n += part.n
    return PauliString(n, x, z, phase)


def embed(p: PauliString, n: int, qubits: Sequence[int]) -> PauliString:
    """Place p on the given qubits of an n-qubit register."""
    if len(qubits) != p.n:
        raise PauliError("qubit list does not match operator size")
    x = z = 0
    for j, q in enumerate(qubits):
        x |= ((p.x >> j) & 1) << q
        z |= ((p.z >> j) & 1) << q
    return PauliString(n, x, z, p.phase)


# ---------------------------------------------------------------- GF(2) helpers


def gf2_rank(rows: Iterable[int]) -> int:
    """Rank of a set of GF(2) row vectors given as integers."""
    basis: list[int] = []
    for r in rows:
        for b in basis:
            r = min(r, r ^ b)
        if r:
            basis.append(r)
    return len(basis)


def gf2_solve(rows: Sequence[int], rhs: Sequence[int], ncols: int) -> tuple[int, list[int]] | None:
    """Solve A v = rhs over GF(2).

    Row i of A is the integer rows[i] (bit c = column c). Returns a particular
    solution and a basis of the null space, or None if inconsistent.
    """
    aug = [(r, b & 1) for r, b in zip(rows, rhs)]
    pivots: list[tuple[int, int, int]] = []  # (column, row bits, rhs)
    for r, b in aug:
        for col, pr, pb in pivots:
            if (r >> col) & 1:
                r ^= pr
                b ^= pb
        if r == 0:
            if b:
                return None
            continue
        col = r.bit_length() - 1
        new = []
        for pc, pr, pb in pivots:
            if (pr >> col) & 1:
                pr ^= r
                pb ^= b
            new.append((pc, pr, pb))
        pivots = new + [(col, r, b)]
    particular = 0
    for col, _, b in pivots:
        if b:
            particular |= 1 << col
    pivot_cols = {col for col, _, _ in pivots}
    null = []
    for free in range(ncols):
        if free in pivot_cols:
            continue
        v = 1 << free
        for col, r, _ in pivots:
            if (r >> free) & 1:
                v |= 1 << col
        null.append(v)
    return particular, null


# ---------------------------------------------------------------- codes


@dataclass(frozen=True)
class StabilizerCode:
    n: int
    k: int
    generators: tuple[PauliString, ...]
    logical_z: tuple[PauliString, ...]
    logical_x: tuple[PauliString, ...]
    name: str = "code"
    distance: int | None = field(default=None, compare=False)

    @property
    def operators(self) -> tuple[PauliString, ...]:
        """Generators followed by logical Z operators: the set measured by the encoder."""
        return self.generators + self.logical_z


def make_code(generators: Iterable[str], logical_z: Iterable[str], logical_x: Iterable[str],
              name: str = "code", distance: int | None = None) -> StabilizerCode:
    gens = tuple(PauliString.parse(g) for g in generators)
    lz = tuple(PauliString.parse(g) for g in logical_z)
    lx = tuple(PauliString.parse(g) for g in logical_x)
    sizes = {p.n for p in gens + lz + lx}
    if len(sizes) != 1:
        raise PauliError("operators of different sizes")
    n = sizes.pop()
    return StabilizerCode(n, len(lz), gens, lz, lx, name, distance)


def steane_code() -> StabilizerCode:
    return make_code(
        ["IIIXXXX", "IXXIIXX", "XIXIXIX", "IIIZZZZ", "IZZIIZZ", "ZIZIZIZ"],
        ["ZZZZZZZ"],
        ["XXXXXXX"],
        name="steane",
        distance=3,
    )


def validate_code(code: StabilizerCode) -> list[str]:
    """Return the list of violated code invariants; an empty list means valid."""
    problems = []
    ops = list(code.generators) + list(code.logical_z) + list(code.logical_x)
    for p in ops:
        if p.n != code.n:
            problems.append(f"operator {p} has {p.n} qubits, expected {code.n}")
    if problems:
        return problems
    if len(code.generators) != code.n - code.k:
        problems.append(f"expected {code.n - code.k} generators, got {len(code.generators)}")
    if len(code.logical_z) != code.k or len(code.logical_x) != code.k:
        problems.append("logical operator count differs from k")
    for i, g in enumerate(code.generators):
        if g.phase != 0:
            problems.append(f"generator {i} ({g}) has non-+1 phase")
        if weight(g) == 0:
            problems.append(f"generator {i} is the identity")
    for i, j in itertools.combinations(range(len(code.generators)), 2):
        if not commutes(code.generators[i], code.generators[j]):
            problems.append(f"generators {i} and {j} anticommute")
    for i, g in enumerate(code.generators):
        for kind, group in (("logical Z", code.logical_z), ("logical X", code.logical_x)):
            for j, op in enumerate(group):
                if not commutes(g, op):
                    problems.append(f"generator {i} anticommutes with {kind} {j}")
    rank = gf2_rank(g.symplectic() for g in code.generators)
    if rank != len(code.generators):
        problems.append(f"generators are dependent (rank {rank} < {len(code.generators)})")
    for i, zi in enumerate(code.logical_z):
        for j, xj in enumerate(code.logical_x):
            if commutes(zi, xj) != (i != j):
                problems.append(f"logical Z {i} / logical X {j} commutation is wrong")
    for i, j in itertools.combinations(range(code.k), 2):
        if not commutes(code.logical_z[i], code.logical_z[j]):
            problems.append(f"logical Z {i} and {j} anticommute")
        if not commutes(code.logical_x[i], code.logical_x[j]):
            problems.append(f"logical X {i} and {j} anticommute")
    return problems


def syndrome_of(p: PauliString, operators: Sequence[PauliString]) -> tuple[int, ...]:
    return tuple(0 if commutes(p, o) else 1 for o in operators)


def _sort_key(p: PauliString) -> tuple:
    return (weight(p), p.x_bits + p.z_bits)


def solve_correction(operators: Sequence[PauliString], syndrome: Sequence[int],
                     z_only: bool = False, max_weight: int | None = None) -> PauliString:
    """Minimum-weight Pauli with the given commutation pattern against operators.

    Ties are broken by the lexicographically smallest x_bits + z_bits tuple.
    With z_only the search is restricted to Z-type operators. When the coset
    is small it is enumerated exhaustively; otherwise candidates up to
    max_weight are searched and any valid solution is the fallback.
    """
    if len(syndrome) != len(operators):
        raise PauliError("syndrome length differs from operator count")
    n = operators[0].n
    if z_only:
        # unknown z vector (n bits); commutation with o is z . x_o
        rows = [o.x for o in operators]
        ncols = n
    else:
        # unknown (x, z) as x | z << n; commutation with o is x . z_o + z . x_o
        rows = [o.z | (o.x << n) for o in operators]
        ncols = 2 * n
    sol = gf2_solve(rows, syndrome, ncols)
    if sol is None:
        raise PauliError("no correction exists for this syndrome")
    base, null = sol

    def to_pauli(v: int) -> PauliString:
        if z_only:
            return PauliString(n, 0, v)
        return PauliString(n, v & ((1 << n) - 1), v >> n)

    if len(null) <= 16:
        best = None
        for combo in range(1 << len(null)):
            v = base
            for i, b in enumerate(null):
                if (combo >> i) & 1:
                    v ^= b
            cand = to_pauli(v)
            if best is None or _sort_key(cand) < _sort_key(best):
                best = cand
        return best
    target = tuple(syndrome)
    limit = max_weight if max_weight is not None else 2
    letters = "Z" if z_only else "XYZ"
    for w in range(limit + 1):
        found = []
        for qubits in itertools.combinations(range(n), w):
            for choice in itertools.product(letters, repeat=w):
                cand = PauliString.from_letters(dict(zip(qubits, choice)), n)
                if syndrome_of(cand, operators) == target:
                    found.append(cand)
        if found:
            return min(found, key=_sort_key)
    return to_pauli(base)


def find_correction(code: StabilizerCode, syndrome: Sequence[int], z_only: bool = False) -> PauliString:
    """Correction for a syndrome over code.generators + code.logical_z."""
    if len(syndrome) != code.n:
        raise PauliError(f"syndrome must have {code.n} bits")
    limit = None
    if code.distance is not None:
        limit = (code.distance - 1) // 2 + 1
    return solve_correction(code.operators, syndrome, z_only=z_only, max_weight=limit)


# ---------------------------------------------------------------- code files


def parse_code_text(text: str, name: str = "custom") -> StabilizerCode:
    """Parse the code-file format: header "n k", then n-k generators, k logical Z, k logical X."""
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise PauliError("empty code file")
    try:
        n, k = (int(v) for v in lines[0].split())
    except ValueError as exc:
        raise PauliError(f"bad header {lines[0]!r}; expected 'n k'") from exc
    body = lines[1:]
    if len(body) != n + k:
        raise PauliError(f"expected {n + k} operator lines, got {len(body)}")
    code = make_code(body[: n - k], body[n - k: n], body[n:], name=name)
    if code.n != n:
        raise PauliError(f"operators have {code.n} qubits, header says {n}")
    return code


def format_code_text(code: StabilizerCode) -> str:
    lines = [f"{code.n} {code.k}"]
    lines += [str(p) for p in code.generators + code.logical_z + code.logical_x]
    return "\n".join(lines) + "\n"
