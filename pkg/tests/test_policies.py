import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gen import random_scenario
from wignerlab.consistency import total_variation
from wignerlab.errors import InvalidPolicy, InvalidScenario, PolicyHasNoOutcomes
from wignerlab.hilbert import basis_state, bell_basis, computational_basis, from_amplitudes
from wignerlab.mixtures import density_from_pure, probabilities, proper_mixture_from_ensemble, trace_distance
from wignerlab.policies import (
    CollapseAt,
    UnitaryOnly,
    assign_states,
    ensemble_over_runs,
    evolve,
    exact_ensemble,
    parse_policies,
    parse_policy,
    run_trajectory,
    sample_runs,
)
from wignerlab.scenarios import (
    BUILTINS,
    build_epr_bell,
    build_molecule_toy,
    build_wigners_friend,
)

R = math.sqrt(0.5)


def test_parse_policy():
    assert parse_policy("unitary_only") == UnitaryOnly()
    p = parse_policy("collapse_at:Alice,Bob")
    assert isinstance(p, CollapseAt) and p.collapses("Bob") and not p.collapses("W")
    assert str(p) == "collapse_at:Alice,Bob"
    for bad in ("", "collapse", "collapse_at:", "collapse_at:A,,B", "unitary"):
        with pytest.raises(InvalidPolicy):
            parse_policy(bad)


def test_parse_policy_lists():
    got = [str(p) for p in parse_policies("unitary_only,collapse_at:Alice,Bob")]
    assert got == ["unitary_only", "collapse_at:Alice,Bob"]
    got = [str(p) for p in parse_policies("collapse_at:F;collapse_at:W")]
    assert got == ["collapse_at:F", "collapse_at:W"]
    with pytest.raises(InvalidPolicy):
        parse_policies("unitary_only,F")


def test_policy_with_undeclared_agent():
    with pytest.raises(InvalidPolicy):
        run_trajectory(build_molecule_toy(), "collapse_at:Nobody", 0)


def test_invalid_scenario_rejected():
    from dataclasses import replace

    from wignerlab.scenarios import GateSpec, SignalEvent

    s = build_molecule_toy()
    bad = replace(s, events=s.events + (SignalEvent("nope", "0", GateSpec("FLIP"), ("C",)),))
    with pytest.raises(InvalidScenario):
        run_trajectory(bad, "unitary_only", 0)


# -- state assignments --------------------------------------------------------


def test_molecule_unitary_assignment_is_bell_state():
    s = build_molecule_toy()
    views = assign_states(s, "unitary_only")
    w = views["W"]
    expected = np.zeros(8)
    expected[0] = expected[6] = R
    assert np.allclose(w.states[1].matrix, np.outer(expected, expected), atol=1e-12)
    assert w.records == ()
    assert views["F"].fictional is not None


def test_molecule_collapse_ensemble():
    s = build_molecule_toy()
    evo = evolve(s, CollapseAt(("F",)))
    after_f = evo.steps[2]
    assert len(after_f) == 2
    assert sorted(b.prob for b in after_f) == pytest.approx([0.5, 0.5])
    states = {b.records: b.state for b in after_f}
    assert np.allclose(np.abs(states[(("mF", "00"),)].amps), np.abs(basis_state(s.register, [0, 0, 0]).amps))
    assert np.allclose(np.abs(states[(("mF", "11"),)].amps), np.abs(basis_state(s.register, [1, 1, 0]).amps))
    f = assign_states(s, "collapse_at:F")["F"]
    assert f.records == ("mF",)
    assert f.final.provenance.kind == "proper"


def test_friend_marginal_is_mixed_under_unitary_only():
    s = build_wigners_friend()
    f = assign_states(s, "unitary_only")["F"]
    assert np.allclose(f.final.matrix, np.eye(2) / 2, atol=1e-12)
    assert f.final.provenance.kind == "improper"
    # the fictional collapsed view is an ignorance mixture with the same matrix
    assert f.fictional[-1].provenance.kind == "proper"


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_assignments_unit_trace(name):
    s = BUILTINS[name].build()
    for policy in BUILTINS[name].default_policies:
        for view in assign_states(s, policy).values():
            for rho in view.states:
                assert rho.trace() == pytest.approx(1.0, abs=1e-9)


def test_known_records_only_own_measurements():
    s = build_molecule_toy()
    t = run_trajectory(s, "collapse_at:F,W", 3)
    assert dict(t.known["F"]).keys() >= {"mF"}
    assert "mW" not in dict(t.known["F"])
    assert "mW" in dict(t.known["W"])
    # both observe C, so both see the photon signal
    assert any(k.startswith("signal[") for k, _ in t.known["F"])


# -- trajectories -------------------------------------------------------------


def test_unitary_only_every_run_excites_c():
    s = build_molecule_toy()
    for seed in range(50):
        t = run_trajectory(s, "unitary_only", seed)
        assert t.records == ()
        assert t.readout(0) == "C==1"


def test_outcomes_only_from_active_measurements():
    s = build_molecule_toy()
    assert dict(run_trajectory(s, "collapse_at:F", 0).records).keys() == {"mF"}
    assert dict(run_trajectory(s, "collapse_at:W", 0).records).keys() == {"mW"}
    assert dict(run_trajectory(s, "collapse_at:W,F", 0).records).keys() == {"mF", "mW"}


def test_collapse_frequency():
    s = build_molecule_toy()
    n = 10_000
    batch = sample_runs(s, "collapse_at:F", n, seed=17)
    freq = np.mean(batch.readouts[:, 0] == 0)
    assert abs(freq - 0.5) <= 3 * math.sqrt(0.25 / n)


def test_epr_anticorrelated_at_zero():
    s = build_epr_bell(0.0)
    batch = sample_runs(s, "collapse_at:Alice,Bob", 2000, seed=4)
    for r in range(0, 2000, 13):
        rec = dict(batch.trajectory(r).records)
        assert (rec["mA"], rec["mB"]) in {("up", "down"), ("down", "up")}
    for seed in range(20):
        rec = dict(run_trajectory(s, "collapse_at:Alice,Bob", seed).records)
        assert rec["mA"] != rec["mB"]


def test_seed_determinism():
    s = build_epr_bell(1.3)
    a = [run_trajectory(s, "collapse_at:Alice,Bob", 77, r) for r in range(30)]
    b = [run_trajectory(s, "collapse_at:Alice,Bob", 77, r) for r in range(30)]
    for x, y in zip(a, b):
        assert x.records == y.records and x.readouts == y.readouts
        assert x.final_state.amps.tobytes() == y.final_state.amps.tobytes()
    b1 = sample_runs(s, "collapse_at:Alice,Bob", 500, 77)
    b2 = sample_runs(s, "collapse_at:Alice,Bob", 500, 77)
    assert b1.leaves.tobytes() == b2.leaves.tobytes() and b1.readouts.tobytes() == b2.readouts.tobytes()


def test_batch_offsets_are_consistent():
    s = build_molecule_toy()
    whole = sample_runs(s, "collapse_at:F", 100, 9)
    tail = sample_runs(s, "collapse_at:F", 60, 9, start=40)
    assert np.array_equal(whole.leaves[40:], tail.leaves)


# -- ensembles ----------------------------------------------------------------


def test_unitary_only_has_no_outcomes():
    s = build_molecule_toy()
    with pytest.raises(PolicyHasNoOutcomes):
        exact_ensemble(s, "unitary_only")
    with pytest.raises(PolicyHasNoOutcomes):
        ensemble_over_runs(s, UnitaryOnly(), 10, 0)


def test_epr_exact_ensemble_is_product_states():
    theta = 1.1
    s = build_epr_bell(theta)
    ens = exact_ensemble(s, "collapse_at:Alice,Bob")
    assert len(ens.entries) == 4
    for _, psi in ens.entries:
        m = psi.amps.reshape(2, 2)
        assert np.linalg.matrix_rank(m, tol=1e-9) == 1


def test_exact_ensemble_trace_distance_half():
    s = build_epr_bell(0.0)
    mix = proper_mixture_from_ensemble(exact_ensemble(s, "collapse_at:Alice,Bob"))
    assert trace_distance(mix, density_from_pure(s.initial_state())) == pytest.approx(0.5, abs=1e-9)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_empirical_ensemble_converges(seed):
    s = build_epr_bell(0.9)
    exact = exact_ensemble(s, "collapse_at:Alice,Bob")
    emp = ensemble_over_runs(s, "collapse_at:Alice,Bob", 10_000, seed)
    key = lambda psi: tuple(np.round(psi.amps, 9))
    p = [(str(key(psi)), w) for w, psi in exact.entries]
    q = [(str(key(psi)), w) for w, psi in emp.entries]
    assert total_variation(p, q) < 0.05


def test_coherent_divergence_on_molecule():
    s = build_molecule_toy()
    bell = bell_basis(["A", "B"])
    uo = evolve(s, UnitaryOnly()).global_state(2)
    cf = evolve(s, CollapseAt(("F",))).global_state(2)
    gap = dict(probabilities(uo, bell))["PhiPlus"] - dict(probabilities(cf, bell))["PhiPlus"]
    assert gap == pytest.approx(0.5, abs=1e-9)


@settings(max_examples=40)
@given(st.integers(0, 10**6))
def test_marginal_agreement_on_random_scenarios(seed):
    # every measurement collapsed by a single agent agrees with unitary_only
    # on observables diagonal in its basis, at the step right after it
    s = random_scenario(seed, max_systems=4, max_events=6)
    uo = evolve(s, UnitaryOnly())
    for agent in s.agent_names:
        evo = evolve(s, CollapseAt((agent,)))
        for k, ev in enumerate(s.events):
            if getattr(ev, "agent", None) != agent:
                continue
            if any(getattr(e, "agent", None) == agent for e in s.events[:k]):
                break  # earlier collapses can legitimately change later statistics
            basis = ev.basis.build(s.register, ev.targets)
            a = probabilities(evo.global_state(k + 1), basis)
            b = probabilities(uo.global_state(k + 1), basis)
            assert max(abs(x - y) for (_, x), (_, y) in zip(a, b)) < 1e-9


def test_fictional_matches_collapse_policy_view():
    s = build_molecule_toy()
    fict = assign_states(s, "unitary_only")["F"].fictional
    real = assign_states(s, "collapse_at:F")["F"].states
    for x, y in zip(fict, real):
        assert x.matrix_close(y)


def test_computational_readout_of_uo_state():
    s = build_wigners_friend()
    rho = evolve(s, UnitaryOnly()).global_state()
    assert dict(probabilities(rho, computational_basis(s.register, ["S"]))) == pytest.approx({"0": 0.5, "1": 0.5})
    assert from_amplitudes(s.register, np.ones(8)).norm() == pytest.approx(1.0)
