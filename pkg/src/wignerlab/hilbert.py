"""Finite-dimensional state machinery: registers, pure states, operators,
projective measurements and Born-rule sampling.

Index convention: a register's joint basis is enumerated row-major with the
first declared subsystem varying slowest, so on ``[(A, 2), (B, 3)]`` the
basis index of ``|a, b>`` is ``3 * a + b``. The same convention applies to
any ordered list of targets.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .errors import (
    DimTooSmall,
    DuplicateLabel,
    InvalidBasis,
    LabelClash,
    LengthMismatch,
    NotHermitian,
    NotUnitary,
    TooLarge,
    UnknownTarget,
    ZeroVector,
)

EPS_NORM = 1e-9
MAX_DIM = 2**14
# Inputs already normalized to double precision are stored untouched, which
# keeps parse/serialize round trips bit-exact.
RENORM_SLACK = 1e-14
# Outcomes at or below this probability are never selected by sampling and
# are dropped from branch enumeration.
PRUNE = 1e-14
EIGEN_GAP = 1e-8

_LABEL_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class Register:
    subsystems: tuple[tuple[str, int], ...]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(dim for _, dim in self.subsystems)

    @property
    def total_dim(self) -> int:
        return math.prod(self.dims)

    def __contains__(self, label: object) -> bool:
        return label in self.labels

    def __len__(self) -> int:
        return len(self.subsystems)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise UnknownTarget(f"unknown subsystem {label!r}") from None

    def dim(self, label: str) -> int:
        return self.subsystems[self.index(label)][1]

    def sub(self, labels: Iterable[str]) -> "Register":
        """Register over ``labels`` in the order given."""
        return Register(tuple((label, self.dim(label)) for label in labels))

    def check_targets(self, targets: Sequence[str]) -> tuple[str, ...]:
        targets = tuple(targets)
        if not targets:
            raise UnknownTarget("empty target list")
        if len(set(targets)) != len(targets):
            raise DuplicateLabel(f"repeated target in {targets}")
        for t in targets:
            self.index(t)
        return targets


def make_register(specs: Iterable[tuple[str, int]]) -> Register:
    subsystems = []
    seen = set()
    for label, dim in specs:
        if not isinstance(label, str) or not _LABEL_RE.match(label):
            raise ValueError(f"invalid subsystem label {label!r}")
        if label in seen:
            raise DuplicateLabel(f"duplicate subsystem label {label!r}")
        if int(dim) != dim or dim < 2:
            raise DimTooSmall(f"subsystem {label!r} has dim {dim}; need >= 2")
        seen.add(label)
        subsystems.append((label, int(dim)))
    if not subsystems:
        raise ValueError("a register needs at least one subsystem")
    reg = Register(tuple(subsystems))
    if reg.total_dim > MAX_DIM:
        raise TooLarge(f"total dimension {reg.total_dim} exceeds {MAX_DIM}")
    return reg


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PureState:
    register: Register
    amps: np.ndarray
    renormalized: bool = False

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def tensor(self) -> np.ndarray:
        return self.amps.reshape(self.register.dims)

    def __repr__(self) -> str:
        return f"PureState({self.register.labels}, {np.round(self.amps, 6).tolist()})"


def from_amplitudes(register: Register, amps) -> PureState:
    """Build a normalized state.

    ``renormalized`` on the result is True when the input norm was off by
    more than ``EPS_NORM``.
    """
    v = np.array(amps, dtype=complex).reshape(-1)
    if v.shape[0] != register.total_dim:
        raise LengthMismatch(f"{v.shape[0]} amplitudes for total_dim {register.total_dim}")
    n2 = float(np.vdot(v, v).real)
    if not np.isfinite(n2) or n2 == 0.0:
        raise ZeroVector("cannot normalize a zero (or non-finite) vector")
    renormalized = abs(math.sqrt(n2) - 1.0) > EPS_NORM
    if abs(n2 - 1.0) > RENORM_SLACK:
        v = v / math.sqrt(n2)
    return PureState(register, _frozen(v), renormalized)


def basis_state(register: Register, digits: Sequence[int]) -> PureState:
    if len(digits) != len(register):
        raise LengthMismatch(f"{len(digits)} digits for {len(register)} subsystems")
    idx = int(np.ravel_multi_index(tuple(digits), register.dims))
    v = np.zeros(register.total_dim, dtype=complex)
    v[idx] = 1.0
    return PureState(register, _frozen(v))


def tensor_product(s1: PureState, s2: PureState) -> PureState:
    clash = set(s1.register.labels) & set(s2.register.labels)
    if clash:
        raise LabelClash(f"registers share labels {sorted(clash)}")
    reg = make_register(s1.register.subsystems + s2.register.subsystems)
    return PureState(reg, _frozen(np.kron(s1.amps, s2.amps)))


# -- target-axis plumbing ---------------------------------------------------


def to_target_matrix(columns: np.ndarray, register: Register, targets: Sequence[str]) -> np.ndarray:
    """Reshape a ``(total_dim, k)`` block so target indices run down the rows.

    Returns a ``(d_targets, rest * k)`` matrix; the column order is the
    remaining subsystems (register order) followed by the original columns.
    """
    k = columns.shape[1]
    axes = [register.index(t) for t in targets]
    rest = [i for i in range(len(register)) if i not in axes]
    t = columns.reshape(register.dims + (k,))
    t = np.transpose(t, axes + rest + [len(register)])
    d_t = math.prod(register.dims[i] for i in axes)
    return t.reshape(d_t, -1)


def from_target_matrix(m: np.ndarray, register: Register, targets: Sequence[str], k: int = 1) -> np.ndarray:
    """Inverse of ``to_target_matrix``."""
    axes = [register.index(t) for t in targets]
    rest = [i for i in range(len(register)) if i not in axes]
    order = axes + rest
    shape = [register.dims[i] for i in order] + [k]
    t = m.reshape(shape)
    inverse = np.argsort(order + [len(register)])
    return np.transpose(t, inverse).reshape(register.total_dim, k)


# -- operators --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Operator:
    register: Register
    matrix: np.ndarray
    unitary: bool = False
    hermitian: bool = False
    name: str = ""

    @classmethod
    def from_matrix(cls, register: Register, matrix, name: str = "") -> "Operator":
        m = np.array(matrix, dtype=complex)
        d = register.total_dim
        if m.shape != (d, d):
            raise LengthMismatch(f"matrix shape {m.shape} does not match dimension {d}")
        unitary = bool(np.allclose(m.conj().T @ m, np.eye(d), rtol=0, atol=EPS_NORM))
        hermitian = bool(np.allclose(m, m.conj().T, rtol=0, atol=EPS_NORM))
        return cls(register, _frozen(m), unitary, hermitian, name)


def make_unitary(register: Register, matrix, name: str = "") -> Operator:
    op = Operator.from_matrix(register, matrix, name)
    if not op.unitary:
        raise NotUnitary(f"{name or 'matrix'}: U^dagger U != I within {EPS_NORM}")
    return op


def make_hermitian(register: Register, matrix, name: str = "") -> Operator:
    op = Operator.from_matrix(register, matrix, name)
    if not op.hermitian:
        raise NotHermitian(f"{name or 'matrix'}: M != M^dagger within {EPS_NORM}")
    return op


NAMED_UNITARIES = ("IDENT", "HADAMARD", "CORRELATE", "FLIP")
# dense gates only; a 1024 x 1024 complex matrix is 16 MiB
MAX_GATE_DIM = 2**10


def named_unitary(name: str, register: Register) -> Operator:
    """Built-in gates.

    IDENT is the identity; HADAMARD is the discrete Fourier transform on one
    subsystem (the usual Hadamard for a qubit); FLIP is the cyclic shift
    ``|k> -> |k+1 mod d>`` on one subsystem; CORRELATE acts on an
    equal-dimension (control, target) pair as ``|i, j> -> |i, i+j mod d>``,
    i.e. CNOT for qubits.
    """
    dims = register.dims
    if register.total_dim > MAX_GATE_DIM:
        raise TooLarge(f"{name} on dimension {register.total_dim} exceeds {MAX_GATE_DIM}")
    if name == "IDENT":
        m = np.eye(register.total_dim, dtype=complex)
    elif name == "HADAMARD":
        if len(dims) != 1:
            raise ValueError("HADAMARD acts on exactly one subsystem")
        d = dims[0]
        jk = np.outer(np.arange(d), np.arange(d))
        m = np.exp(2j * np.pi * jk / d) / math.sqrt(d)
        if d == 2:
            m = m.real.astype(complex)
    elif name == "FLIP":
        if len(dims) != 1:
            raise ValueError("FLIP acts on exactly one subsystem")
        m = np.roll(np.eye(dims[0], dtype=complex), 1, axis=0)
    elif name == "CORRELATE":
        if len(dims) != 2 or dims[0] != dims[1]:
            raise ValueError("CORRELATE needs a (control, target) pair of equal dimension")
        d = dims[0]
        m = np.zeros((d * d, d * d), dtype=complex)
        for i in range(d):
            for j in range(d):
                m[i * d + (i + j) % d, i * d + j] = 1.0
    else:
        raise ValueError(f"unknown unitary {name!r}")
    return make_unitary(register, m, name)


def apply_unitary(state: PureState, U: Operator, targets: Sequence[str]) -> PureState:
    if not U.unitary:
        raise NotUnitary("operator is not unitary-tagged")
    targets = state.register.check_targets(targets)
    if state.register.sub(targets).dims != U.register.dims:
        raise LengthMismatch(
            f"operator dims {U.register.dims} do not match targets {targets} "
            f"with dims {state.register.sub(targets).dims}"
        )
    m = to_target_matrix(state.amps.reshape(-1, 1), state.register, targets)
    out = from_target_matrix(U.matrix @ m, state.register, targets).reshape(-1)
    return PureState(state.register, _frozen(out))


# -- measurement bases ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MeasurementBasis:
    """Complete projective measurement on an ordered list of targets.

    Each outcome is an isometry ``V`` (columns spanning its eigenspace, so the
    projector is ``V V^dagger``). ``None`` marks the single optional
    complement outcome ``I - sum(others)``. ``diagonal=True`` means outcome
    ``i`` is the computational basis vector ``i`` and no isometries are stored.
    """

    targets: tuple[str, ...]
    dims: tuple[int, ...]
    labels: tuple[str, ...]
    blocks: tuple[np.ndarray | None, ...] | None = None
    diagonal: bool = False
    name: str = ""

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    def __len__(self) -> int:
        return len(self.labels)

    def isometry(self, i: int) -> np.ndarray:
        if self.diagonal:
            v = np.zeros((self.dim, 1), dtype=complex)
            v[i, 0] = 1.0
            return v
        block = self.blocks[i]
        if block is not None:
            return block
        proj = self.projector(i)
        w, vecs = np.linalg.eigh(proj)
        return vecs[:, w > 0.5]

    def projector(self, i: int) -> np.ndarray:
        if self.diagonal or self.blocks[i] is not None:
            v = self.isometry(i)
            return v @ v.conj().T
        rest = np.eye(self.dim, dtype=complex)
        for j, b in enumerate(self.blocks):
            if j != i:
                rest -= b @ b.conj().T
        return rest

    def coefficients(self, m: np.ndarray) -> list[np.ndarray | None]:
        """Per-outcome ``V^dagger m``; ``None`` for the complement outcome."""
        if self.diagonal:
            return [m[i : i + 1] for i in range(self.dim)]
        return [None if b is None else b.conj().T @ m for b in self.blocks]

    def weights(self, m: np.ndarray) -> np.ndarray:
        """Unclamped ``||P_i m||_F^2`` for each outcome."""
        if self.diagonal:
            return np.einsum("ij,ij->i", m.conj(), m).real
        coeffs = self.coefficients(m)
        w = np.array([0.0 if c is None else float(np.vdot(c, c).real) for c in coeffs])
        if any(c is None for c in coeffs):
            total = float(np.vdot(m, m).real)
            w[[c is None for c in coeffs]] = total - w.sum()
        return w

    def project(self, i: int, m: np.ndarray) -> np.ndarray:
        """``P_i m`` without materializing ``P_i``."""
        if self.diagonal:
            out = np.zeros_like(m)
            out[i] = m[i]
            return out
        b = self.blocks[i]
        if b is not None:
            return b @ (b.conj().T @ m)
        out = m.copy()
        for b in self.blocks:
            if b is not None:
                out -= b @ (b.conj().T @ m)
        return out


def _check_isometries(dims, labels, blocks, name):
    d = math.prod(dims)
    if len(set(labels)) != len(labels):
        raise InvalidBasis(f"basis {name!r} has repeated outcome labels")
    if sum(b is None for b in blocks) > 1:
        raise InvalidBasis("at most one complement outcome is allowed")
    explicit = [b for b in blocks if b is not None]
    for b in explicit:
        if b.ndim != 2 or b.shape[0] != d or b.shape[1] == 0:
            raise InvalidBasis(f"outcome block of shape {b.shape} in dimension {d}")
    stacked = np.hstack(explicit) if explicit else np.zeros((d, 0), dtype=complex)
    gram = stacked.conj().T @ stacked
    if not np.allclose(gram, np.eye(stacked.shape[1]), rtol=0, atol=EPS_NORM):
        raise InvalidBasis(f"basis {name!r} outcomes are not orthonormal / mutually orthogonal")
    has_complement = len(explicit) != len(blocks)
    if has_complement:
        if stacked.shape[1] >= d:
            raise InvalidBasis("complement outcome would be empty")
    elif stacked.shape[1] != d:
        raise InvalidBasis(f"basis {name!r} is incomplete: rank {stacked.shape[1]} of {d}")


def basis_from_isometries(
    targets: Sequence[str],
    dims: Sequence[int],
    outcomes: Sequence[tuple[str, np.ndarray | None]],
    name: str = "",
) -> MeasurementBasis:
    labels = tuple(label for label, _ in outcomes)
    blocks = []
    for _, b in outcomes:
        if b is None:
            blocks.append(None)
            continue
        b = np.array(b, dtype=complex)
        blocks.append(_frozen(b.reshape(-1, 1) if b.ndim == 1 else b))
    _check_isometries(tuple(dims), labels, blocks, name)
    return MeasurementBasis(tuple(targets), tuple(dims), labels, tuple(blocks), False, name)


def basis_from_projectors(
    targets: Sequence[str], dims: Sequence[int], outcomes: Sequence[tuple[str, np.ndarray]], name: str = ""
) -> MeasurementBasis:
    """Build a basis from explicit projector matrices, checking P^2 = P and P = P^dagger."""
    converted = []
    for label, p in outcomes:
        p = np.array(p, dtype=complex)
        if not np.allclose(p, p.conj().T, rtol=0, atol=EPS_NORM) or not np.allclose(
            p @ p, p, rtol=0, atol=EPS_NORM
        ):
            raise InvalidBasis(f"outcome {label!r} is not a Hermitian idempotent")
        w, v = np.linalg.eigh(p)
        converted.append((label, v[:, w > 0.5]))
    return basis_from_isometries(targets, dims, converted, name)


def _digit_label(digits: Sequence[int], dims: Sequence[int]) -> str:
    if all(d <= 10 for d in dims):
        return "".join(str(x) for x in digits)
    return ".".join(str(x) for x in digits)


def computational_basis(register: Register, targets: Sequence[str]) -> MeasurementBasis:
    targets = register.check_targets(targets)
    dims = register.sub(targets).dims
    labels = tuple(_digit_label(ix, dims) for ix in np.ndindex(*dims))
    return MeasurementBasis(targets, dims, labels, None, True, "computational")


def spin_vectors(theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvectors of cos(theta) sz + sin(theta) sx, with |up> = |0>, |down> = |1>."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([c, s], dtype=complex), np.array([-s, c], dtype=complex)


def spin_basis(target: str, theta: float) -> MeasurementBasis:
    up, down = spin_vectors(theta)
    return basis_from_isometries((target,), (2,), [("up", up), ("down", down)], f"spin({theta!r})")


def bell_basis(targets: Sequence[str]) -> MeasurementBasis:
    """Bell basis on two qubits; Bell sector on three or more.

    On two qubits the outcomes are PhiPlus, PhiMinus, PsiPlus, PsiMinus. On
    n >= 3 qubits they are the GHZ pair ``(|0..0> +/- |1..1>)/sqrt 2``,
    still labelled PhiPlus / PhiMinus, plus the complement ``Other``.
    """
    targets = tuple(targets)
    n = len(targets)
    if n < 2:
        raise InvalidBasis("bell basis needs at least two qubits")
    d = 2**n
    r = 1 / math.sqrt(2)

    def ghz(x: int, sign: int) -> np.ndarray:
        v = np.zeros(d, dtype=complex)
        v[x] = r
        v[(d - 1) ^ x] = sign * r
        return v

    outcomes = [("PhiPlus", ghz(0, 1)), ("PhiMinus", ghz(0, -1))]
    if n == 2:
        outcomes += [("PsiPlus", ghz(1, 1)), ("PsiMinus", ghz(1, -1))]
    else:
        outcomes.append(("Other", None))
    return basis_from_isometries(targets, (2,) * n, outcomes, "bell")


def product_basis(factors: Sequence[MeasurementBasis]) -> MeasurementBasis:
    """Tensor product of per-target bases; labels joined with '.'."""
    targets: tuple[str, ...] = ()
    dims: tuple[int, ...] = ()
    outcomes = [("", np.ones((1, 1), dtype=complex))]
    for f in factors:
        if set(targets) & set(f.targets):
            raise InvalidBasis("product factors overlap")
        targets += f.targets
        dims += f.dims
        nxt = []
        for label, v in outcomes:
            for i, flabel in enumerate(f.labels):
                nxt.append((f"{label}.{flabel}" if label else flabel, np.kron(v, f.isometry(i))))
        outcomes = nxt
    return basis_from_isometries(targets, dims, outcomes, "*".join(f.name for f in factors))


def eigenspaces(matrix: np.ndarray) -> list[tuple[float, np.ndarray]]:
    """Group eigenvectors of a Hermitian matrix by eigenvalue (gap ``EIGEN_GAP``)."""
    w, v = np.linalg.eigh(matrix)
    groups: list[tuple[float, np.ndarray]] = []
    start = 0
    for i in range(1, len(w) + 1):
        if i == len(w) or w[i] - w[i - 1] > EIGEN_GAP:
            groups.append((float(np.mean(w[start:i])), v[:, start:i]))
            start = i
    return groups


def spectral_basis(
    obs: Operator, targets: Sequence[str], label: Callable[[float], str] | None = None
) -> MeasurementBasis:
    if not obs.hermitian:
        raise NotHermitian("observable is not Hermitian-tagged")
    label = label or (lambda x: format(round(x, 9) + 0.0, "g"))
    outcomes = [(label(val), vecs) for val, vecs in eigenspaces(obs.matrix)]
    return basis_from_isometries(targets, obs.register.dims, outcomes, obs.name or "spectral")


# -- spin observables -------------------------------------------------------

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _total_spin_component(n: int, axis: str) -> np.ndarray:
    total = np.zeros((2**n, 2**n), dtype=complex)
    for k in range(n):
        term = np.eye(1, dtype=complex)
        for j in range(n):
            term = np.kron(term, _PAULI[axis] / 2 if j == k else np.eye(2))
        total += term
    return total


def total_spin_squared(register: Register) -> Operator:
    """S^2 for a register of spin-1/2 subsystems (hbar = 1); eigenvalues s(s+1)."""
    if any(d != 2 for d in register.dims):
        raise ValueError("total spin is defined here for qubit registers only")
    n = len(register)
    m = sum(np.linalg.matrix_power(_total_spin_component(n, a), 2) for a in "xyz")
    return make_hermitian(register, m, "S2")


def total_spin_z(register: Register) -> Operator:
    if any(d != 2 for d in register.dims):
        raise ValueError("total spin is defined here for qubit registers only")
    return make_hermitian(register, _total_spin_component(len(register), "z"), "SZ")


def spin_quantum_number(s2_eigenvalue: float) -> float:
    """Invert s(s+1) = lambda."""
    return (-1.0 + math.sqrt(1.0 + 4.0 * max(s2_eigenvalue, 0.0))) / 2.0


def total_spin_basis(register: Register) -> MeasurementBasis:
    """Eigenbasis of S^2 with outcomes labelled ``s=<value>``."""
    return spectral_basis(
        total_spin_squared(register),
        register.labels,
        lambda lam: "s=" + format(round(spin_quantum_number(lam), 9) + 0.0, "g"),
    )


# -- Born rule --------------------------------------------------------------


def _check_basis_on(register: Register, basis: MeasurementBasis) -> None:
    register.check_targets(basis.targets)
    if register.sub(basis.targets).dims != basis.dims:
        raise InvalidBasis(f"basis dims {basis.dims} do not match targets {basis.targets}")


def clamp_probabilities(w: np.ndarray) -> np.ndarray:
    return np.clip(w, 0.0, 1.0)


def born_probabilities(state: PureState, basis: MeasurementBasis) -> np.ndarray:
    _check_basis_on(state.register, basis)
    m = to_target_matrix(state.amps.reshape(-1, 1), state.register, basis.targets)
    return clamp_probabilities(basis.weights(m))


def born_distribution(state: PureState, basis: MeasurementBasis) -> list[tuple[str, float]]:
    """``[(label, <psi|P_i|psi>)]`` in outcome order, clamped to [0, 1]."""
    p = born_probabilities(state, basis)
    return [(label, float(x)) for label, x in zip(basis.labels, p)]


def collapse(state: PureState, basis: MeasurementBasis, i: int) -> PureState:
    """``P_i |psi> / ||P_i |psi>||``."""
    _check_basis_on(state.register, basis)
    m = to_target_matrix(state.amps.reshape(-1, 1), state.register, basis.targets)
    out = from_target_matrix(basis.project(i, m), state.register, basis.targets).reshape(-1)
    n = float(np.linalg.norm(out))
    if n == 0.0:
        raise ZeroVector(f"outcome {basis.labels[i]!r} has zero probability")
    return PureState(state.register, _frozen(out / n))


def alive_mask(probs) -> list[bool]:
    return [p > PRUNE for p in probs]


def sample_outcome(state: PureState, basis: MeasurementBasis, rng) -> tuple[str, PureState]:
    """Draw one outcome per the Born rule and return the collapsed state.

    Consumes exactly one ``rng.uniform()``.
    """
    probs = [float(x) for x in born_probabilities(state, basis)]
    i = kernels.pick(probs, alive_mask(probs), rng.uniform())
    return basis.labels[i], collapse(state, basis, i)
