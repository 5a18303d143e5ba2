"""Density operators that remember where they came from.

A density operator built from an ensemble (a proper mixture) and one
obtained by tracing out part of an entangled pure state (an improper
mixture) can have the same matrix. The provenance tag keeps them apart, and
nothing in this module compares two density operators by matrix alone
without saying so in the name.

Internally a density operator is stored as a square-root factor ``G`` with
``rho = G G^dagger``. Hermiticity and positivity then hold by construction,
and large registers never need a dense ``d x d`` matrix unless one is asked
for.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import (
    NotHermitian,
    NothingKept,
    ProbabilitySumInvalid,
    RegisterMismatch,
    UnknownTarget,
)
from .hilbert import (
    EPS_NORM,
    MeasurementBasis,
    Operator,
    PureState,
    Register,
    _check_basis_on,
    clamp_probabilities,
    eigenspaces,
    to_target_matrix,
)

# -- provenance -------------------------------------------------------------


@dataclass(frozen=True)
class Pure:
    kind = "pure"

    def describe(self) -> str:
        return "pure"


@dataclass(frozen=True, eq=False)
class ProperFromEnsemble:
    ensemble: "Ensemble"
    kind = "proper"

    def describe(self) -> str:
        return f"proper mixture of {len(self.ensemble.entries)} states"


@dataclass(frozen=True)
class ImproperFromTrace:
    parent: str
    discarded: tuple[str, ...]
    kind = "improper"

    def describe(self) -> str:
        return f"improper: trace over {','.join(self.discarded)} of [{self.parent}]"


Provenance = Union[Pure, ProperFromEnsemble, ImproperFromTrace]


@dataclass(frozen=True, eq=False)
class Ensemble:
    entries: tuple[tuple[float, PureState], ...]

    def __post_init__(self):
        if not self.entries:
            raise ProbabilitySumInvalid("an ensemble needs at least one entry")
        reg = self.entries[0][1].register
        total = 0.0
        for p, psi in self.entries:
            if psi.register != reg:
                raise RegisterMismatch("ensemble members live on different registers")
            if p < -EPS_NORM:
                raise ProbabilitySumInvalid(f"negative probability {p}")
            total += p
        if abs(total - 1.0) > EPS_NORM:
            raise ProbabilitySumInvalid(f"probabilities sum to {total!r}, not 1")

    @property
    def register(self) -> Register:
        return self.entries[0][1].register

    @property
    def probabilities(self) -> list[float]:
        return [p for p, _ in self.entries]


# -- density operators ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DensityOperator:
    register: Register
    factor: np.ndarray
    provenance: Provenance = Pure()

    @functools.cached_property
    def matrix(self) -> np.ndarray:
        m = self.factor @ self.factor.conj().T
        m.setflags(write=False)
        return m

    def trace(self) -> float:
        return float(np.vdot(self.factor, self.factor).real)

    def purity(self) -> float:
        g = self.factor.conj().T @ self.factor
        return float(np.vdot(g, g).real)

    def matrix_close(self, other: "DensityOperator", atol: float = EPS_NORM) -> bool:
        """Matrix-level comparison that deliberately ignores provenance."""
        if self.register != other.register:
            return False
        return bool(np.allclose(self.matrix, other.matrix, rtol=0, atol=atol))

    def equivalent(self, other: "DensityOperator", atol: float = EPS_NORM) -> bool:
        """Same matrix and same kind of provenance."""
        return self.provenance.kind == other.provenance.kind and self.matrix_close(other, atol)

    def __repr__(self) -> str:
        return f"DensityOperator({self.register.labels}, {self.provenance.describe()})"


Source = Union[PureState, DensityOperator]


def _as_factor(source: Source) -> tuple[Register, np.ndarray, Provenance]:
    if isinstance(source, PureState):
        return source.register, source.amps.reshape(-1, 1), Pure()
    return source.register, source.factor, source.provenance


def _compress(g: np.ndarray) -> np.ndarray:
    d, k = g.shape
    if k <= 2 * d:
        return g
    w, v = np.linalg.eigh(g @ g.conj().T)
    keep = w > 0
    return v[:, keep] * np.sqrt(w[keep])


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def density_from_pure(state: PureState) -> DensityOperator:
    return DensityOperator(state.register, _frozen(state.amps.reshape(-1, 1).copy()), Pure())


def density_from_matrix(register: Register, matrix, provenance: Provenance = Pure()) -> DensityOperator:
    """Validate and wrap an explicit matrix (Hermitian, unit trace, PSD within EPS_NORM)."""
    m = np.array(matrix, dtype=complex)
    d = register.total_dim
    if m.shape != (d, d):
        raise RegisterMismatch(f"matrix shape {m.shape} vs dimension {d}")
    if not np.allclose(m, m.conj().T, rtol=0, atol=EPS_NORM):
        raise NotHermitian("density matrix is not Hermitian")
    if abs(np.trace(m).real - 1.0) > EPS_NORM:
        raise ProbabilitySumInvalid(f"trace {np.trace(m).real!r} != 1")
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    if w.min() < -EPS_NORM:
        raise ValueError(f"density matrix has negative eigenvalue {w.min()!r}")
    keep = w > 0
    rho = DensityOperator(register, _frozen(v[:, keep] * np.sqrt(w[keep])), provenance)
    m.setflags(write=False)
    # keep the caller's exact matrix rather than the eigen round-trip
    rho.__dict__["matrix"] = m
    return rho


def reduce_to(source: Source, keep: Sequence[str]) -> DensityOperator:
    """Reduced state on ``keep``, in the order given.

    With nothing discarded this is only a reordering and the provenance is
    carried over; otherwise the result is an improper mixture.
    """
    register, g, prov = _as_factor(source)
    keep = register.check_targets(keep)
    discarded = tuple(label for label in register.labels if label not in keep)
    sub = register.sub(keep)
    gt = _compress(to_target_matrix(g, register, keep))
    if not discarded:
        return DensityOperator(sub, _frozen(gt), prov)
    return DensityOperator(sub, _frozen(gt), ImproperFromTrace(prov.describe(), discarded))


def partial_trace(source: Source, discard: Sequence[str]) -> DensityOperator:
    register, _, _ = _as_factor(source)
    discard = tuple(discard)
    if not discard:
        raise ValueError("partial_trace needs at least one label to discard")
    for label in discard:
        if label not in register:
            raise UnknownTarget(f"unknown subsystem {label!r}")
    keep = [label for label in register.labels if label not in discard]
    if not keep:
        raise NothingKept("discarding every subsystem leaves nothing")
    return reduce_to(source, keep)


def proper_mixture_from_ensemble(e: Ensemble) -> DensityOperator:
    cols = [math.sqrt(max(p, 0.0)) * psi.amps for p, psi in e.entries]
    g = _compress(np.stack(cols, axis=1))
    return DensityOperator(e.register, _frozen(g), ProperFromEnsemble(e))


def trace_distance(a: DensityOperator, b: DensityOperator) -> float:
    """Half the sum of absolute eigenvalues of ``a - b``, clipped to [0, 1]."""
    if a.register != b.register:
        raise RegisterMismatch(f"{a.register.labels} vs {b.register.labels}")
    x, y = a.matrix, b.matrix
    if x.tobytes() > y.tobytes():
        # canonical operand order makes the result exactly symmetric
        x, y = y, x
    w = np.linalg.eigvalsh(x - y)
    return float(min(max(0.5 * np.abs(w).sum(), 0.0), 1.0))


def probabilities(source: Source, basis: MeasurementBasis) -> list[tuple[str, float]]:
    """Born distribution ``Tr(P_i rho)`` of a pure or mixed state."""
    register, g, _ = _as_factor(source)
    _check_basis_on(register, basis)
    p = clamp_probabilities(basis.weights(to_target_matrix(g, register, basis.targets)))
    return [(label, float(x)) for label, x in zip(basis.labels, p)]


@dataclass(frozen=True)
class Definite:
    value: float


@dataclass(frozen=True)
class Undefined:
    pass


UNDEFINED = Undefined()


def definite_value(state: Source, obs: Operator) -> Definite | Undefined:
    """Sharp value of ``obs`` if the state lies in one of its eigenspaces."""
    if not obs.hermitian:
        raise NotHermitian("observable is not Hermitian-tagged")
    register, g, _ = _as_factor(state)
    if obs.register != register:
        raise RegisterMismatch(f"observable on {obs.register.labels}, state on {register.labels}")
    total = float(np.vdot(g, g).real)
    for value, vecs in eigenspaces(obs.matrix):
        c = vecs.conj().T @ g
        if float(np.vdot(c, c).real) >= total - EPS_NORM:
            return Definite(value)
    return UNDEFINED


def interference_witness(rho: Source, basis: MeasurementBasis) -> float:
    """Largest coherence between distinct outcome blocks.

    ``max_{i != j} || V_i^dagger rho V_j ||_2`` over the basis outcomes. Zero
    exactly when the state is block-diagonal in the basis.
    """
    register, _, _ = _as_factor(rho)
    if set(basis.targets) != set(register.labels) or len(basis.targets) != len(register):
        raise RegisterMismatch(f"basis on {basis.targets} does not span {register.labels}")
    ordered = reduce_to(rho, basis.targets)
    g = ordered.factor
    if basis.diagonal:
        m = g @ g.conj().T
        off = np.abs(m - np.diag(np.diag(m)))
        return float(off.max()) if off.size else 0.0
    coeffs = [basis.isometry(i).conj().T @ g for i in range(len(basis))]
    best = 0.0
    for i in range(len(coeffs)):
        for j in range(i + 1, len(coeffs)):
            block = coeffs[i] @ coeffs[j].conj().T
            if block.size:
                best = max(best, float(np.linalg.norm(block, 2)))
    return best
