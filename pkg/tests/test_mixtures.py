import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from wignerlab.errors import NotHermitian, NothingKept, ProbabilitySumInvalid, RegisterMismatch, UnknownTarget
from wignerlab.hilbert import (
    apply_unitary,
    basis_state,
    bell_basis,
    collapse,
    computational_basis,
    from_amplitudes,
    make_hermitian,
    make_unitary,
    make_register,
    named_unitary,
    product_basis,
    spin_basis,
    spin_vectors,
    tensor_product,
    total_spin_squared,
)
from wignerlab.mixtures import (
    Definite,
    Ensemble,
    Undefined,
    definite_value,
    density_from_matrix,
    density_from_pure,
    interference_witness,
    partial_trace,
    probabilities,
    proper_mixture_from_ensemble,
    reduce_to,
    trace_distance,
)
from wignerlab.policies import UnitaryOnly, evolve
from wignerlab.scenarios import build_decoherence_demo

R = math.sqrt(0.5)
AB = make_register([("A", 2), ("B", 2)])
PHI = from_amplitudes(AB, [1, 0, 0, 1])
TRIPLET = from_amplitudes(AB, [0, 1, 1, 0])


def _half_half():
    return proper_mixture_from_ensemble(
        Ensemble(((0.5, basis_state(AB, [0, 1])), (0.5, basis_state(AB, [1, 0]))))
    )


def test_density_from_pure():
    up = basis_state(make_register([("A", 2)]), [0])
    assert np.allclose(density_from_pure(up).matrix, np.diag([1, 0]))
    rho = density_from_pure(PHI)
    assert np.allclose(rho.matrix[[0, 0, 3, 3], [0, 3, 0, 3]], 0.5)
    assert rho.trace() == pytest.approx(1.0, abs=1e-12)
    assert rho.purity() == pytest.approx(1.0, abs=1e-12)
    assert rho.provenance.kind == "pure"


def test_partial_trace_examples():
    assert np.allclose(partial_trace(PHI, ["B"]).matrix, np.eye(2) / 2)
    prod = tensor_product(basis_state(make_register([("A", 2)]), [0]), basis_state(make_register([("B", 2)]), [1]))
    r = partial_trace(prod, ["B"])
    assert r.purity() == pytest.approx(1.0)
    assert np.allclose(r.matrix, np.diag([1, 0]))
    assert r.provenance.kind == "improper"
    with pytest.raises(UnknownTarget):
        partial_trace(PHI, ["Z"])
    with pytest.raises(NothingKept):
        partial_trace(PHI, ["A", "B"])


def test_proper_mixture_examples():
    rho = _half_half()
    assert np.allclose(rho.matrix, np.diag([0, 0.5, 0.5, 0]))
    assert rho.provenance.kind == "proper"
    single = proper_mixture_from_ensemble(Ensemble(((1.0, TRIPLET),)))
    assert single.matrix_close(density_from_pure(TRIPLET))
    assert single.provenance.kind != density_from_pure(TRIPLET).provenance.kind
    with pytest.raises(ProbabilitySumInvalid):
        Ensemble(((0.45, TRIPLET), (0.45, PHI)))


def test_trace_distance_examples():
    rho = density_from_pure(TRIPLET)
    assert trace_distance(rho, rho) == 0.0
    assert trace_distance(rho, _half_half()) == pytest.approx(0.5, abs=1e-12)
    q = make_register([("A", 2)])
    assert trace_distance(density_from_pure(basis_state(q, [0])), density_from_pure(basis_state(q, [1]))) == pytest.approx(1.0)
    with pytest.raises(RegisterMismatch):
        trace_distance(rho, density_from_pure(basis_state(q, [0])))


def test_definite_value_examples():
    S2 = total_spin_squared(AB)
    assert definite_value(TRIPLET, S2) == Definite(pytest.approx(2.0))
    up_z, _ = spin_vectors(0.0)
    up_t, _ = spin_vectors(math.pi / 2)
    prod = from_amplitudes(AB, np.kron(up_z, up_t))
    assert isinstance(definite_value(prod, S2), Undefined)
    # oracle: the product state has weight on both s=0 and s=1 sectors
    w1 = oracles.born(prod.amps, [oracles.eigenprojector(oracles.total_spin_squared(2), 2.0)])[0]
    assert 0.1 < w1 < 0.9
    for digits in [(0, 0), (1, 0)]:
        v = basis_state(AB, digits)
        P = make_hermitian(AB, np.outer(v.amps, v.amps.conj()))
        assert definite_value(v, P) == Definite(pytest.approx(1.0))
    with pytest.raises(NotHermitian):
        definite_value(TRIPLET, make_unitary(AB, np.diag([1, 1j, 1, 1])))


def test_definite_value_on_mixtures():
    S2 = total_spin_squared(AB)
    # both members in the triplet sector
    mix = proper_mixture_from_ensemble(Ensemble(((0.5, basis_state(AB, [0, 0])), (0.5, basis_state(AB, [1, 1])))))
    assert definite_value(mix, S2) == Definite(pytest.approx(2.0))
    assert isinstance(definite_value(_half_half(), S2), Undefined)


def test_witness_examples():
    comp = computational_basis(AB, ["A", "B"])
    assert interference_witness(density_from_pure(PHI), comp) == pytest.approx(0.5)
    assert interference_witness(_half_half(), comp) == 0.0
    assert interference_witness(density_from_pure(PHI), bell_basis(["A", "B"])) == pytest.approx(0.0, abs=1e-15)


def test_witness_under_environment():
    s = build_decoherence_demo(8)
    rho = evolve(s, UnitaryOnly()).global_state(1 + 8)
    ab = reduce_to(rho, ["A", "B"])
    assert interference_witness(ab, computational_basis(ab.register, ["A", "B"])) < 1e-12
    glob = interference_witness(rho, computational_basis(s.register, s.register.labels))
    assert glob == pytest.approx(0.5, abs=1e-12)


def test_witness_register_mismatch():
    with pytest.raises(RegisterMismatch):
        interference_witness(density_from_pure(PHI), computational_basis(AB, ["A"]))


def test_bell_family_divergence():
    for phase in (1, -1):
        psi = from_amplitudes(AB, [1, 0, 0, phase])
        comp = computational_basis(AB, ["A", "B"])
        members = []
        for i, (_, p) in enumerate(probabilities(psi, comp)):
            if p > 0:
                members.append((p, collapse(psi, comp, i)))
        mix = proper_mixture_from_ensemble(Ensemble(tuple(members)))
        label = "PhiPlus" if phase == 1 else "PhiMinus"
        gap = dict(probabilities(psi, bell_basis(["A", "B"])))[label] - dict(probabilities(mix, bell_basis(["A", "B"])))[label]
        assert gap == pytest.approx(0.5, abs=1e-9)


# -- properties -------------------------------------------------------------


@st.composite
def mixed_states(draw, max_total=16):
    n = draw(st.integers(1, 4))
    dims = draw(st.lists(st.integers(2, 4), min_size=n, max_size=n).filter(lambda d: math.prod(d) <= max_total))
    reg = make_register([(f"X{k}", d) for k, d in enumerate(dims)])
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    m = draw(st.integers(1, 4))
    w = rng.random(m) + 0.05
    w = w / w.sum()
    members = tuple(
        (float(p), from_amplitudes(reg, rng.normal(size=reg.total_dim) + 1j * rng.normal(size=reg.total_dim)))
        for p in w
    )
    return reg, members


def _is_state(rho, atol=1e-10):
    m = rho.matrix
    assert abs(np.trace(m).real - 1.0) < atol
    assert np.allclose(m, m.conj().T, atol=atol)
    assert np.linalg.eigvalsh(m).min() > -atol


@given(mixed_states(), st.data())
def test_trace_hermitian_psd_preserved(sample, data):
    reg, members = sample
    rho = proper_mixture_from_ensemble(Ensemble(members))
    _is_state(rho)
    dense = sum(p * np.outer(s.amps, s.amps.conj()) for p, s in members)
    assert np.allclose(rho.matrix, dense, atol=1e-12)
    if len(reg) > 1:
        k = data.draw(st.integers(1, len(reg) - 1))
        discard = list(data.draw(st.permutations(reg.labels)))[:k]
        red = partial_trace(rho, discard)
        _is_state(red)
        keep = [x for x in reg.labels if x not in discard]
        assert np.allclose(red.matrix, oracles.partial_trace(dense, reg.labels, reg.dims, keep), atol=1e-10)


@given(mixed_states(), st.integers(0, 2**32 - 1))
def test_trace_distance_metric(a, seed):
    reg, ma = a
    rng = np.random.default_rng(seed)
    x = proper_mixture_from_ensemble(Ensemble(ma))
    y = density_from_pure(from_amplitudes(reg, rng.normal(size=reg.total_dim) + 0j))
    z = density_from_pure(from_amplitudes(reg, rng.normal(size=reg.total_dim) + 1j * rng.normal(size=reg.total_dim)))
    assert trace_distance(x, y) == trace_distance(y, x)
    assert trace_distance(x, z) <= trace_distance(x, y) + trace_distance(y, z) + 1e-9
    assert 0.0 <= trace_distance(x, y) <= 1.0
    assert trace_distance(x, y) == pytest.approx(oracles.trace_distance(x.matrix, y.matrix), abs=1e-9)


@given(st.integers(1, 4), st.integers(0, 2**32 - 1), st.data())
def test_proper_improper_agree_on_diagonal_observables(n, seed, data):
    reg = make_register([(f"Q{k}", 2) for k in range(n)])
    rng = np.random.default_rng(seed)
    psi = from_amplitudes(reg, rng.normal(size=reg.total_dim) + 1j * rng.normal(size=reg.total_dim))
    thetas = data.draw(st.lists(st.floats(0, math.pi), min_size=n, max_size=n))
    M = product_basis([spin_basis(label, t) for label, t in zip(reg.labels, thetas)])
    members = []
    for i, (_, p) in enumerate(probabilities(psi, M)):
        if p > 1e-14:
            members.append((p, collapse(psi, M, i)))
    total = sum(p for p, _ in members)
    mix = proper_mixture_from_ensemble(Ensemble(tuple((p / total, s) for p, s in members)))
    # M itself, and coarse-grainings of it (marginals on each qubit)
    assert np.allclose([p for _, p in probabilities(psi, M)], [p for _, p in probabilities(mix, M)], atol=1e-9)
    for label, t in zip(reg.labels, thetas):
        b = spin_basis(label, t)
        assert np.allclose([p for _, p in probabilities(psi, b)], [p for _, p in probabilities(mix, b)], atol=1e-9)


def test_density_from_matrix_rejects_non_state():
    q = make_register([("A", 2)])
    with pytest.raises(ValueError):
        density_from_matrix(q, np.diag([1.5, -0.5]))
    with pytest.raises(ValueError):
        density_from_matrix(q, np.diag([0.5, 0.4]))


def test_reduce_reorders_without_tracing():
    psi = from_amplitudes(AB, [0.1, 0.7, 0.2j, 0.3])
    swapped = reduce_to(psi, ["B", "A"])
    assert swapped.provenance.kind == "pure"
    ref = oracles.partial_trace(np.outer(psi.amps, psi.amps.conj()), AB.labels, AB.dims, ["B", "A"])
    assert np.allclose(swapped.matrix, ref)


def test_unitary_then_trace_matches_oracle():
    reg = make_register([("A", 2), ("B", 3), ("C", 2)])
    rng = np.random.default_rng(3)
    psi = from_amplitudes(reg, rng.normal(size=12) + 1j * rng.normal(size=12))
    psi = apply_unitary(psi, named_unitary("HADAMARD", reg.sub(["B"])), ["B"])
    got = partial_trace(psi, ["B"]).matrix
    ref = oracles.partial_trace(np.outer(psi.amps, psi.amps.conj()), reg.labels, reg.dims, ["A", "C"])
    assert np.allclose(got, ref, atol=1e-12)
