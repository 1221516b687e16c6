"""Dense state-vector simulation on named qubits.

Two containers are provided:

- `StateRegister`: one dense tensor over an ordered list of qubit ids.
- `QuantumStore`: a factorised collection of registers, merged only when a
  multi-qubit gate spans two factors. Controlled-Z gates can be queued lazily
  and are flushed the first time one of their qubits is touched, which keeps
  the live register small for graph states that are consumed by measurement.

Qubit ids are arbitrary hashable labels. Measurement bases are 2x2 unitaries
whose columns are the basis vectors for outcomes 0 and 1.
"""

from __future__ import annotations

from collections.abc import Callable, Hashable, Iterable, Sequence

import numpy as np

QubitId = Hashable

DEFAULT_QUBIT_CAP = 24
DEGENERATE_BRANCH = 1e-14

SQRT2 = np.sqrt(2.0)
I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / SQRT2
CZ = np.diag([1, 1, 1, -1]).astype(complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}

KET0 = np.array([1, 0], dtype=complex)
KET1 = np.array([0, 1], dtype=complex)
PLUS = np.array([1, 1], dtype=complex) / SQRT2


class QubitCapExceeded(RuntimeError):
    """Raised when a merged register would exceed the configured qubit cap."""


def zrot(k: int) -> np.ndarray:
    """Return Z(k*pi/4) = diag(1, exp(i k pi/4))."""
    return np.diag([1.0, np.exp(1j * np.pi * (k % 8) / 4)]).astype(complex)


def plus_state(k: int) -> np.ndarray:
    """Return |+_k> = (|0> + exp(i k pi/4)|1>)/sqrt(2)."""
    return np.array([1.0, np.exp(1j * np.pi * (k % 8) / 4)], dtype=complex) / SQRT2


def xy_basis(k: int) -> np.ndarray:
    """Measurement basis {|+_k>, |-_k>} in the X-Y plane."""
    p = plus_state(k)
    m = p.copy()
    m[1] = -m[1]
    return np.column_stack([p, m])


Z_BASIS = np.eye(2, dtype=complex)


def pauli_word(kx: int, kz: int) -> np.ndarray:
    """Matrix of X^kx Z^kz."""
    return np.linalg.matrix_power(X, kx % 2) @ np.linalg.matrix_power(Z, kz % 2)


def fidelity(target: np.ndarray, rho: np.ndarray) -> float:
    """Fidelity <psi|rho|psi> of a pure target against a state.

    ``rho`` may be a state vector or a density matrix.
    """
    psi = np.asarray(target, dtype=complex).reshape(-1)
    psi = psi / np.linalg.norm(psi)
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        return float(abs(np.vdot(psi, rho / np.linalg.norm(rho))) ** 2)
    return float(np.real(np.vdot(psi, rho @ psi)))


def mixed_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 of two density matrices."""
    w, v = np.linalg.eigh(np.asarray(rho, dtype=complex))
    root = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    inner = root @ np.asarray(sigma, dtype=complex) @ root
    ev = np.linalg.eigvalsh((inner + inner.conj().T) / 2)
    return float(np.sum(np.sqrt(np.clip(ev, 0, None))) ** 2)


def partial_trace(rho: np.ndarray, n: int, keep: Sequence[int]) -> np.ndarray:
    """Reduce an n-qubit density matrix to the qubits at positions ``keep``."""
    t = np.asarray(rho, dtype=complex).reshape([2] * (2 * n))
    drop = [i for i in range(n) if i not in keep]
    for count, i in enumerate(sorted(drop, reverse=True)):
        m = n - count
        t = np.trace(t, axis1=i, axis2=i + m)
    k = len(keep)
    order = sorted(keep)
    perm = [order.index(q) for q in keep]
    t = np.transpose(t, perm + [p + k for p in perm])
    return t.reshape(2**k, 2**k)


def equal_up_to_phase(a: np.ndarray, b: np.ndarray, atol: float = 1e-9) -> bool:
    """True when two vectors or operators differ only by a global phase."""
    a = np.asarray(a, dtype=complex).reshape(-1)
    b = np.asarray(b, dtype=complex).reshape(-1)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < atol or nb < atol:
        return na < atol and nb < atol
    return abs(abs(np.vdot(a, b)) / (na * nb) - 1.0) <= atol


def phase_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Operator-norm distance between a and b minimised over a global phase."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    inner = np.vdot(b.reshape(-1), a.reshape(-1))
    phase = inner / abs(inner) if abs(inner) > 1e-15 else 1.0
    return float(np.linalg.norm(a - phase * b, ord=2))


def identify_pauli(op: np.ndarray, atol: float = 1e-9) -> tuple[int, int] | None:
    """Return (kx, kz) with op proportional to X^kx Z^kz, or None."""
    for kx in (0, 1):
        for kz in (0, 1):
            if phase_distance(op, pauli_word(kx, kz)) <= atol:
                return kx, kz
    return None


class StateRegister:
    """Dense pure state over an ordered list of qubit ids.

    Mutating methods return ``self`` so calls can be chained. Use `copy` to
    fork a register.
    """

    def __init__(self, cap: int = DEFAULT_QUBIT_CAP) -> None:
        self.cap = cap
        self._ids: list[QubitId] = []
        self._psi = np.ones((), dtype=complex)

    # -- bookkeeping -------------------------------------------------------

    @property
    def qubits(self) -> list[QubitId]:
        return list(self._ids)

    def __len__(self) -> int:
        return len(self._ids)

    def __contains__(self, qid: QubitId) -> bool:
        return qid in self._ids

    def copy(self) -> StateRegister:
        reg = StateRegister(self.cap)
        reg._ids = list(self._ids)
        reg._psi = self._psi.copy()
        return reg

    def _axis(self, qid: QubitId) -> int:
        try:
            return self._ids.index(qid)
        except ValueError:
            raise KeyError(f"qubit {qid!r} not in register") from None

    # -- construction ------------------------------------------------------

    def alloc(self, qid: QubitId, state: Sequence[complex] | None = None) -> StateRegister:
        """Append a fresh qubit in ``state`` (default |0>)."""
        if qid in self._ids:
            raise ValueError(f"qubit {qid!r} already allocated")
        if len(self._ids) + 1 > self.cap:
            raise QubitCapExceeded(f"register would hold {len(self._ids) + 1} qubits (cap {self.cap})")
        vec = KET0 if state is None else np.asarray(state, dtype=complex).reshape(2)
        vec = vec / np.linalg.norm(vec)
        self._psi = np.multiply.outer(self._psi, vec)
        self._ids.append(qid)
        return self

    def absorb(self, other: StateRegister) -> StateRegister:
        """Tensor another register onto this one (other is left untouched)."""
        clash = set(self._ids) & set(other._ids)
        if clash:
            raise ValueError(f"qubits {clash} present in both registers")
        if len(self._ids) + len(other._ids) > self.cap:
            raise QubitCapExceeded(
                f"register would hold {len(self._ids) + len(other._ids)} qubits (cap {self.cap})"
            )
        self._psi = np.multiply.outer(self._psi, other._psi)
        self._ids.extend(other._ids)
        return self

    @classmethod
    def from_vector(cls, qids: Sequence[QubitId], vec: np.ndarray, cap: int = DEFAULT_QUBIT_CAP) -> StateRegister:
        reg = cls(cap)
        vec = np.asarray(vec, dtype=complex).reshape([2] * len(qids))
        reg._ids = list(qids)
        reg._psi = vec / np.linalg.norm(vec)
        return reg

    # -- evolution ---------------------------------------------------------

    def apply(self, matrix: np.ndarray, qids: Sequence[QubitId] | QubitId) -> StateRegister:
        """Apply a 2^k x 2^k unitary to the listed qubits (first id is the MSB)."""
        if not isinstance(qids, (list, tuple)):
            qids = [qids]
        if len(set(qids)) != len(qids):
            raise ValueError(f"coincident targets {qids!r}")
        k = len(qids)
        axes = [self._axis(q) for q in qids]
        op = np.asarray(matrix, dtype=complex).reshape([2] * (2 * k))
        moved = np.tensordot(op, self._psi, axes=(list(range(k, 2 * k)), axes))
        self._psi = np.moveaxis(moved, list(range(k)), axes)
        return self

    def cz(self, a: QubitId, b: QubitId) -> StateRegister:
        """Controlled-Z, done as a sign flip on the |11> slice."""
        if a == b:
            raise ValueError(f"coincident targets {a!r}")
        ia, ib = self._axis(a), self._axis(b)
        index = [slice(None)] * len(self._ids)
        index[ia] = 1
        index[ib] = 1
        self._psi[tuple(index)] *= -1
        return self

    # -- measurement -------------------------------------------------------

    def _project(self, qid: QubitId, basis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ax = self._axis(qid)
        rotated = np.tensordot(np.asarray(basis, dtype=complex).conj().T, self._psi, axes=([1], [ax]))
        return rotated[0], rotated[1]

    def probabilities(self, qid: QubitId, basis: np.ndarray = Z_BASIS) -> tuple[float, float]:
        a0, a1 = self._project(qid, basis)
        p0 = float(np.vdot(a0, a0).real)
        p1 = float(np.vdot(a1, a1).real)
        total = p0 + p1
        return p0 / total, p1 / total

    def measure(
        self,
        qid: QubitId,
        basis: np.ndarray = Z_BASIS,
        rng: np.random.Generator | None = None,
        outcome: int | None = None,
    ) -> tuple[int, float]:
        """Measure and remove ``qid``. Returns (outcome, probability).

        Either ``rng`` samples the outcome or ``outcome`` forces it.
        """
        a0, a1 = self._project(qid, basis)
        p0 = float(np.vdot(a0, a0).real)
        p1 = float(np.vdot(a1, a1).real)
        total = p0 + p1
        p0, p1 = p0 / total, p1 / total
        if outcome is None:
            if rng is None:
                raise ValueError("measure needs an rng or a forced outcome")
            outcome = int(rng.random() < p1)
        prob = p1 if outcome else p0
        if prob < DEGENERATE_BRANCH:
            raise ValueError(f"forced outcome {outcome} on {qid!r} has probability {prob:.3g}")
        kept = a1 if outcome else a0
        self._psi = kept / np.sqrt(prob * total)
        self._ids.remove(qid)
        return int(outcome), prob

    def branch(self, qid: QubitId, basis: np.ndarray = Z_BASIS) -> list[tuple[int, float, StateRegister]]:
        """Both measurement branches with probability above the degeneracy cut."""
        out = []
        a0, a1 = self._project(qid, basis)
        total = float(np.vdot(a0, a0).real + np.vdot(a1, a1).real)
        ids = [q for q in self._ids if q != qid]
        for bit, amp in ((0, a0), (1, a1)):
            p = float(np.vdot(amp, amp).real) / total
            if p < DEGENERATE_BRANCH:
                continue
            reg = StateRegister(self.cap)
            reg._ids = list(ids)
            reg._psi = amp / np.sqrt(p * total)
            out.append((bit, p, reg))
        return out

    # -- inspection --------------------------------------------------------

    def vector(self, order: Sequence[QubitId] | None = None) -> np.ndarray:
        """Flat state vector with qubits in ``order`` (default register order)."""
        if order is None:
            return self._psi.reshape(-1).copy()
        if sorted(map(repr, order)) != sorted(map(repr, self._ids)):
            raise ValueError("order must list every qubit exactly once")
        axes = [self._axis(q) for q in order]
        return np.transpose(self._psi, axes).reshape(-1).copy()

    def density(self, qids: Sequence[QubitId]) -> np.ndarray:
        """Reduced density matrix of ``qids`` (in that order)."""
        keep = [self._axis(q) for q in qids]
        rest = [i for i in range(len(self._ids)) if i not in keep]
        psi = np.transpose(self._psi, keep + rest).reshape(2 ** len(keep), -1)
        return psi @ psi.conj().T


MeasureChooser = Callable[[QubitId, float, float], int]


class QuantumStore:
    """Factorised pure state over many named qubits.

    Each qubit lives in exactly one `StateRegister` factor. Factors are merged
    when a gate spans them. ``cz_lazy`` queues an entangling gate that is applied
    only when one of its endpoints is next touched, so a qubit measured early
    never has to share a register with the far side of the graph.
    """

    def __init__(self, cap: int = DEFAULT_QUBIT_CAP) -> None:
        self.cap = cap
        self._where: dict[QubitId, StateRegister] = {}
        self._pending: dict[QubitId, set[QubitId]] = {}
        self.peak = 0

    def copy(self) -> QuantumStore:
        new = QuantumStore(self.cap)
        mapping: dict[int, StateRegister] = {}
        for qid, reg in self._where.items():
            if id(reg) not in mapping:
                mapping[id(reg)] = reg.copy()
            new._where[qid] = mapping[id(reg)]
        new._pending = {q: set(s) for q, s in self._pending.items()}
        new.peak = self.peak
        return new

    def __deepcopy__(self, memo: dict) -> QuantumStore:
        return self.copy()

    def __contains__(self, qid: QubitId) -> bool:
        return qid in self._where

    @property
    def qubits(self) -> list[QubitId]:
        return list(self._where)

    def factor_of(self, qid: QubitId) -> StateRegister:
        return self._where[qid]

    def alloc(self, qid: QubitId, state: Sequence[complex] | None = None) -> None:
        if qid in self._where:
            raise ValueError(f"qubit {qid!r} already allocated")
        reg = StateRegister(self.cap).alloc(qid, state)
        self._where[qid] = reg
        self.peak = max(self.peak, 1)

    def alloc_register(self, reg: StateRegister) -> None:
        """Insert an existing register (its qubit ids must be fresh)."""
        for q in reg.qubits:
            if q in self._where:
                raise ValueError(f"qubit {q!r} already allocated")
        reg = reg.copy()
        reg.cap = self.cap
        for q in reg.qubits:
            self._where[q] = reg
        self.peak = max(self.peak, len(reg))

    def _merge(self, qids: Iterable[QubitId]) -> StateRegister:
        regs: list[StateRegister] = []
        for q in qids:
            reg = self._where[q]
            if all(reg is not r for r in regs):
                regs.append(reg)
        base = regs[0]
        for other in regs[1:]:
            base.absorb(other)
            for q in other.qubits:
                self._where[q] = base
        self.peak = max(self.peak, len(base))
        return base

    def _flush(self, qid: QubitId) -> None:
        for other in sorted(self._pending.pop(qid, ()), key=repr):
            self._pending[other].discard(qid)
            if not self._pending[other]:
                del self._pending[other]
            reg = self._merge([qid, other])
            reg.cz(qid, other)

    def cz_lazy(self, a: QubitId, b: QubitId) -> None:
        """Queue CZ(a, b); toggles off if queued twice."""
        if a not in self._where or b not in self._where:
            raise KeyError("both qubits must be allocated")
        sa = self._pending.setdefault(a, set())
        sb = self._pending.setdefault(b, set())
        if b in sa:
            sa.discard(b)
            sb.discard(a)
        else:
            sa.add(b)
            sb.add(a)
        for q in (a, b):
            if not self._pending[q]:
                del self._pending[q]

    def apply(self, matrix: np.ndarray, qids: Sequence[QubitId] | QubitId) -> None:
        if not isinstance(qids, (list, tuple)):
            qids = [qids]
        for q in qids:
            self._flush(q)
        reg = self._merge(qids)
        reg.apply(matrix, qids)

    def cz(self, a: QubitId, b: QubitId) -> None:
        self._flush(a)
        self._flush(b)
        self._merge([a, b]).cz(a, b)

    def probabilities(self, qid: QubitId, basis: np.ndarray = Z_BASIS) -> tuple[float, float]:
        self._flush(qid)
        return self._where[qid].probabilities(qid, basis)

    def measure(
        self,
        qid: QubitId,
        basis: np.ndarray = Z_BASIS,
        rng: np.random.Generator | None = None,
        outcome: int | None = None,
        chooser: MeasureChooser | None = None,
    ) -> tuple[int, float]:
        """Measure and remove ``qid``.

        ``chooser`` receives (qid, p0, p1) and returns the outcome; it is how
        branch enumeration steers a run.
        """
        self._flush(qid)
        reg = self._where[qid]
        if chooser is not None and outcome is None:
            p0, p1 = reg.probabilities(qid, basis)
            outcome = chooser(qid, p0, p1)
        bit, prob = reg.measure(qid, basis, rng=rng, outcome=outcome)
        del self._where[qid]
        return bit, prob

    def rename(self, qid: QubitId, new: QubitId) -> None:
        """Give a qubit a new id, keeping its state and pending gates."""
        if new in self._where:
            raise ValueError(f"qubit {new!r} already allocated")
        self._flush(qid)
        reg = self._where.pop(qid)
        reg._ids[reg._ids.index(qid)] = new
        self._where[new] = reg

    def discard(self, qid: QubitId, rng: np.random.Generator) -> None:
        """Trace a qubit out by measuring it in the computational basis."""
        self.measure(qid, Z_BASIS, rng=rng)

    def density(self, qids: Sequence[QubitId]) -> np.ndarray:
        """Reduced density matrix of ``qids``; flushes pending gates on them."""
        for q in qids:
            self._flush(q)
        groups: list[tuple[StateRegister, list[QubitId]]] = []
        for q in qids:
            reg = self._where[q]
            for r, members in groups:
                if r is reg:
                    members.append(q)
                    break
            else:
                groups.append((reg, [q]))
        rho = np.ones((1, 1), dtype=complex)
        order: list[QubitId] = []
        for reg, members in groups:
            rho = np.kron(rho, reg.density(members))
            order.extend(members)
        if order != list(qids):
            n = len(qids)
            perm = [order.index(q) for q in qids]
            rho = rho.reshape([2] * (2 * n))
            rho = np.transpose(rho, perm + [p + n for p in perm]).reshape(2**n, 2**n)
        return rho

    def vector(self, qids: Sequence[QubitId]) -> np.ndarray:
        """State vector of ``qids`` when they form a pure, closed subsystem."""
        for q in qids:
            self._flush(q)
        vec = np.ones(1, dtype=complex)
        order: list[QubitId] = []
        seen: list[StateRegister] = []
        for q in qids:
            reg = self._where[q]
            if any(reg is r for r in seen):
                continue
            members = reg.qubits
            if not set(members) <= set(qids):
                raise ValueError("requested qubits are entangled with others")
            seen.append(reg)
            vec = np.kron(vec, reg.vector(members))
            order.extend(members)
        return StateRegister.from_vector(order, vec, cap=max(len(order), 1)).vector(list(qids))


def qotp_apply(
    target: StateRegister | QuantumStore, qid: QubitId, kx: int, kz: int, decrypt: bool = False
) -> None:
    """Quantum one-time pad with key (kx, kz).

    Encryption applies Z^kz X^kx, decryption applies X^kx Z^kz. The two are
    inverse to each other exactly, not just up to phase.
    """
    xs = np.linalg.matrix_power(X, kx % 2)
    zs = np.linalg.matrix_power(Z, kz % 2)
    op = xs @ zs if decrypt else zs @ xs
    target.apply(op, [qid])


def pauli_group(n: int) -> list[np.ndarray]:
    """All 4^n n-qubit Pauli words without phases, I/X/Y/Z per qubit."""
    words = [np.eye(1, dtype=complex)]
    for _ in range(n):
        words = [np.kron(w, p) for w in words for p in (I2, X, Y, Z)]
    return words


def qotp_twirl(rho: np.ndarray) -> np.ndarray:
    """Average of X^kx Z^kz rho Z^kz X^kx over the four one-qubit keys."""
    out = np.zeros_like(rho, dtype=complex)
    for kx in (0, 1):
        for kz in (0, 1):
            p = pauli_word(kx, kz)
            out += p @ rho @ p.conj().T
    return out / 4


def pauli_twirl_cross(rho: np.ndarray, q: np.ndarray, q_prime: np.ndarray) -> np.ndarray:
    """Sum over Pauli words P of P Q P rho P Q' P (P is Hermitian)."""
    n = int(round(np.log2(rho.shape[0])))
    out = np.zeros_like(rho, dtype=complex)
    for p in pauli_group(n):
        out += p @ q @ p @ rho @ p @ q_prime.conj().T @ p
    return out
