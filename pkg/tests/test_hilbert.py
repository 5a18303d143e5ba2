import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from wignerlab.errors import (
    DimTooSmall,
    DuplicateLabel,
    LabelClash,
    LengthMismatch,
    NotUnitary,
    TooLarge,
    UnknownTarget,
    ZeroVector,
)
from wignerlab.hilbert import (
    EPS_NORM,
    MAX_DIM,
    apply_unitary,
    basis_from_isometries,
    basis_state,
    bell_basis,
    born_distribution,
    collapse,
    computational_basis,
    from_amplitudes,
    make_register,
    make_unitary,
    named_unitary,
    product_basis,
    sample_outcome,
    spin_basis,
    spin_vectors,
    tensor_product,
    total_spin_basis,
)
from wignerlab.rng import SplitMix64

R = math.sqrt(0.5)


# -- examples ---------------------------------------------------------------


def test_register_total_dim():
    assert make_register([("A", 2), ("B", 2)]).total_dim == 4
    assert make_register([("S", 2), ("D", 2), ("F", 2)]).total_dim == 8
    assert make_register([("A", 2), ("B", 3)]).dims == (2, 3)


def test_register_errors():
    with pytest.raises(DuplicateLabel):
        make_register([("A", 2), ("A", 2)])
    with pytest.raises(DimTooSmall):
        make_register([("A", 1)])
    with pytest.raises(TooLarge):
        make_register([(f"Q{k}", 2) for k in range(15)])
    assert make_register([(f"Q{k}", 2) for k in range(14)]).total_dim == MAX_DIM


def test_from_amplitudes_normalizes():
    reg = make_register([("A", 2), ("B", 2)])
    s = from_amplitudes(reg, [0, 1, 1, 0])
    assert s.norm() == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(s.amps, [0, R, R, 0])
    with pytest.raises(ZeroVector):
        from_amplitudes(reg, [0, 0, 0, 0])
    with pytest.raises(LengthMismatch):
        from_amplitudes(reg, [1, 0, 0])


def test_basis_state_row_major():
    reg = make_register([("A", 2), ("B", 3)])
    s = basis_state(reg, [1, 2])
    assert int(np.argmax(np.abs(s.amps))) == 1 * 3 + 2
    assert s.tensor().shape == (2, 3)


def test_tensor_product():
    a = make_register([("A", 2)])
    b = make_register([("B", 2)])
    up, down = basis_state(a, [0]), basis_state(b, [1])
    t = tensor_product(up, down)
    assert t.register.labels == ("A", "B")
    assert np.allclose(t.amps, [0, 1, 0, 0])

    c = make_register([("C", 3)])
    assert tensor_product(up, basis_state(c, [2])).register.total_dim == 6
    with pytest.raises(LabelClash):
        tensor_product(up, basis_state(a, [1]))


def test_molecule_preparation_and_bell_state():
    a = from_amplitudes(make_register([("A", 2)]), [1, 1])
    b = basis_state(make_register([("B", 2)]), [0])
    c = basis_state(make_register([("C", 2)]), [0])
    psi = tensor_product(tensor_product(a, b), c)
    assert np.allclose(psi.amps, [R, 0, 0, 0, R, 0, 0, 0])
    cnot = named_unitary("CORRELATE", psi.register.sub(["A", "B"]))
    out = apply_unitary(psi, cnot, ["A", "B"])
    assert np.allclose(out.amps, [R, 0, 0, 0, 0, 0, R, 0])
    assert dict(born_distribution(out, bell_basis(["A", "B"])))["PhiPlus"] == pytest.approx(1.0)


def test_identity_unchanged_and_not_unitary():
    reg = make_register([("A", 3)])
    s = from_amplitudes(reg, [1, 2j, -0.5])
    out = apply_unitary(s, named_unitary("IDENT", reg), ["A"])
    assert np.max(np.abs(out.amps - s.amps)) < 1e-12
    with pytest.raises(NotUnitary):
        make_unitary(reg, np.diag([1, 1, 2]))
    with pytest.raises(UnknownTarget):
        apply_unitary(s, named_unitary("IDENT", reg.sub(["A"])), ["Z"])


def test_named_unitaries_qubit_forms():
    q = make_register([("A", 2)])
    assert np.allclose(named_unitary("HADAMARD", q).matrix, np.array([[1, 1], [1, -1]]) * R)
    assert np.allclose(named_unitary("FLIP", q).matrix, [[0, 1], [1, 0]])
    pair = make_register([("A", 2), ("B", 2)])
    cnot = np.eye(4)[[0, 1, 3, 2]]
    assert np.allclose(named_unitary("CORRELATE", pair).matrix, cnot)
    with pytest.raises(ValueError):
        named_unitary("CORRELATE", make_register([("A", 2), ("B", 3)]))
    with pytest.raises(ValueError):
        named_unitary("NOPE", q)


def test_born_examples():
    reg = make_register([("A", 2), ("B", 2)])
    triplet = from_amplitudes(reg, [0, 1, 1, 0])
    assert dict(born_distribution(triplet, total_spin_basis(reg)))["s=1"] == pytest.approx(1.0, abs=1e-12)
    upup = basis_state(reg, [0, 0])
    assert dict(born_distribution(upup, bell_basis(["A", "B"])))["PhiPlus"] == pytest.approx(0.5, abs=1e-12)


def test_spin_vectors_match_numerical_eigenvector():
    for theta in np.linspace(-3, 3, 13):
        up, down = spin_vectors(theta)
        assert abs(np.vdot(up, oracles.spin_up(theta))) == pytest.approx(1.0, abs=1e-12)
        assert abs(np.vdot(up, down)) < 1e-15
        assert up[0] == pytest.approx(math.cos(theta / 2))


def test_sample_eigenstate_is_deterministic():
    reg = make_register([("A", 2), ("B", 2)])
    phi = from_amplitudes(reg, [1, 0, 0, 1])
    rng = SplitMix64.for_run(5)
    for _ in range(50):
        label, post = sample_outcome(phi, bell_basis(["A", "B"]), rng)
        assert label == "PhiPlus"
        assert np.allclose(post.amps, phi.amps)


def test_sample_frequency_and_post_state():
    reg = make_register([("A", 2)])
    plus = from_amplitudes(reg, [1, 1])
    basis = computational_basis(reg, ["A"])
    rng = SplitMix64.for_run(11)
    n = 10_000
    zeros = 0
    for _ in range(n):
        label, post = sample_outcome(plus, basis, rng)
        zeros += label == "0"
        i = basis.labels.index(label)
        projected = basis.projector(i) @ post.amps
        assert np.allclose(projected, post.amps, atol=EPS_NORM)
    sigma = math.sqrt(0.25 / n)
    assert abs(zeros / n - 0.5) <= 3 * sigma


def test_collapse_zero_probability():
    reg = make_register([("A", 2)])
    with pytest.raises(ZeroVector):
        collapse(basis_state(reg, [0]), computational_basis(reg, ["A"]), 1)


# -- properties -------------------------------------------------------------


@st.composite
def registers(draw, max_total=16):
    n = draw(st.integers(1, 4))
    dims = draw(st.lists(st.integers(2, 4), min_size=n, max_size=n).filter(lambda d: math.prod(d) <= max_total))
    return make_register([(f"X{k}", d) for k, d in enumerate(dims)])


@st.composite
def states(draw, reg):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    v = rng.normal(size=reg.total_dim) + 1j * rng.normal(size=reg.total_dim)
    return from_amplitudes(reg, v)


def _random_unitary(seed, d):
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


@given(st.data())
def test_norm_preservation(data):
    reg = data.draw(registers())
    psi = data.draw(states(reg))
    k = data.draw(st.integers(1, len(reg)))
    targets = list(data.draw(st.permutations(reg.labels)))[:k]
    sub = reg.sub(targets)
    U = make_unitary(sub, _random_unitary(data.draw(st.integers(0, 10**6)), sub.total_dim))
    out = apply_unitary(psi, U, targets)
    assert abs(np.linalg.norm(out.amps) - 1.0) < 1e-10
    # against the dense embedding
    full = oracles.embed(U.matrix, reg.labels, reg.dims, targets)
    assert np.allclose(out.amps, full @ psi.amps, atol=1e-10)


def _bases(reg, targets):
    yield computational_basis(reg, targets)
    if all(reg.dim(t) == 2 for t in targets):
        yield product_basis([spin_basis(t, 0.3 * (i + 1)) for i, t in enumerate(targets)])
        if len(targets) >= 2:
            yield bell_basis(targets)
        yield total_spin_basis(reg.sub(targets))


@given(st.data())
def test_basis_completeness(data):
    reg = data.draw(registers())
    psi = data.draw(states(reg))
    k = data.draw(st.integers(1, len(reg)))
    targets = list(data.draw(st.permutations(reg.labels)))[:k]
    for basis in _bases(reg, targets):
        total = sum(basis.projector(i) for i in range(len(basis)))
        assert np.allclose(total, np.eye(total.shape[0]), atol=1e-10)
        assert sum(p for _, p in born_distribution(psi, basis)) == pytest.approx(1.0, abs=1e-10)


@given(st.data())
def test_born_matches_dense_projectors(data):
    reg = data.draw(registers())
    psi = data.draw(states(reg))
    k = data.draw(st.integers(1, len(reg)))
    targets = list(data.draw(st.permutations(reg.labels)))[:k]
    for basis in _bases(reg, targets):
        full = [oracles.embed(basis.projector(i), reg.labels, reg.dims, targets) for i in range(len(basis))]
        ref = oracles.born(psi.amps, full)
        got = [p for _, p in born_distribution(psi, basis)]
        assert np.allclose(got, ref, atol=1e-9, rtol=0)


def test_bell_basis_against_explicit_vectors():
    reg = make_register([("A", 2), ("B", 2)])
    vecs = {
        "PhiPlus": [R, 0, 0, R],
        "PhiMinus": [R, 0, 0, -R],
        "PsiPlus": [0, R, R, 0],
        "PsiMinus": [0, R, -R, 0],
    }
    basis = bell_basis(["A", "B"])
    for label, v in vecs.items():
        P = oracles.projector_from_vectors([v])
        assert np.allclose(basis.projector(basis.labels.index(label)), P)
    psi = from_amplitudes(reg, [0.3, 0.1j, -0.5, 0.8])
    full = [oracles.projector_from_vectors([vecs[label]]) for label in basis.labels]
    assert np.allclose([p for _, p in born_distribution(psi, basis)], oracles.born(psi.amps, full))


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_sampling_chi_squared(seed):
    scipy_stats = pytest.importorskip("scipy.stats")
    reg = make_register([("A", 3), ("B", 2)])
    psi = from_amplitudes(reg, np.random.default_rng(seed).normal(size=6) + 0.2j)
    basis = computational_basis(reg, ["A", "B"])
    probs = np.array([p for _, p in born_distribution(psi, basis)])
    rng = SplitMix64.for_run(seed)
    counts = np.zeros(len(probs))
    n = 10_000
    for _ in range(n):
        label, _ = sample_outcome(psi, basis, rng)
        counts[basis.labels.index(label)] += 1
    keep = probs > 0
    assert scipy_stats.chisquare(counts[keep], probs[keep] * n).pvalue > 0.001


def test_custom_isometry_basis_validation():
    from wignerlab.errors import InvalidBasis

    good = basis_from_isometries(("A",), (2,), [("x", np.array([1, 0])), ("y", np.array([0, 1]))])
    assert good.labels == ("x", "y")
    with pytest.raises(InvalidBasis):
        basis_from_isometries(("A",), (2,), [("x", np.array([1, 0])), ("y", np.array([1, 0]))])
