"""Scenario document parsing: strictness of the error paths and lossless
round trips through dicts and JSON files.

Every rejection test asserts on the path carried in the message, since that
path is what a user sees when a hand-written file is off by one key.
"""

import dataclasses
import json

import numpy as np
import pytest

from containctl.scenario import (
    ScenarioError,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)

from helpers import pair_scenario, scalar_scenario


def _assert_same(a, b):
    assert a.graph.n_followers == b.graph.n_followers
    assert a.graph.m_leaders == b.graph.m_leaders
    assert a.graph.edges == b.graph.edges
    assert np.array_equal(a.leader.S, b.leader.S)
    assert np.array_equal(a.leader.D, b.leader.D)
    for wa, wb in zip(a.leader_init, b.leader_init):
        assert np.array_equal(wa, wb)
    for fa, fb in zip(a.followers, b.followers):
        assert np.array_equal(fa.A, fb.A)
        assert np.array_equal(fa.B, fb.B)
        assert np.array_equal(fa.C, fb.C)
        assert fa.label == fb.label
    for xa, xb in zip(a.follower_init, b.follower_init):
        assert (xa is None) == (xb is None)
        if xa is not None:
            assert np.array_equal(xa, xb)
    oa, ob = a.observers, b.observers
    assert oa.mu == ob.mu
    for group in ("E", "R"):
        for ma, mb in zip(getattr(oa, group), getattr(ob, group)):
            assert np.array_equal(ma, mb)
    assert (oa.beta, oa.beta1, oa.beta2, oa.beta3) == (ob.beta, ob.beta1, ob.beta2, ob.beta3)
    assert oa.leader_estimator == ob.leader_estimator
    for field in ("init_xi", "init_eta", "init_S", "init_D"):
        ga, gb = getattr(oa, field), getattr(ob, field)
        assert (ga is None) == (gb is None)
        if ga is not None:
            for ma, mb in zip(ga, gb):
                assert np.array_equal(ma, mb)
    for qa, qb in zip(a.weights.Q, b.weights.Q):
        assert np.array_equal(qa, qb)
    for wa, wb in zip(a.weights.W, b.weights.W):
        assert np.array_equal(wa, wb)
    assert a.weights.gamma == b.weights.gamma
    assert (a.sim.step, a.sim.t_final, a.sim.seed) == (b.sim.step, b.sim.t_final, b.sim.seed)
    la, lb = a.learner, b.learner
    assert la.window == lb.window
    assert la.samples == lb.samples
    assert la.tolerance == lb.tolerance
    assert la.max_iterations == lb.max_iterations
    assert la.noise_amplitude == lb.noise_amplitude
    assert la.noise_seed == lb.noise_seed
    assert la.gate == lb.gate
    assert (la.initial_gain is None) == (lb.initial_gain is None)
    if la.initial_gain is not None:
        for ka, kb in zip(la.initial_gain, lb.initial_gain):
            assert np.array_equal(ka, kb)


def _pinned_scenario():
    """pair_scenario with every optional field populated, so the round trip
    exercises observer initial states and behaviour gains too."""
    scn = pair_scenario()
    observers = dataclasses.replace(
        scn.observers,
        init_xi=(np.array([0.1, -0.2]), np.array([0.3, 0.4])),
        init_eta=(np.array([1.0, 0.0]), np.array([0.0, 1.0])),
        init_S=(np.eye(2) * 0.5, np.array([[0.0, 1.0], [-1.0, 0.0]])),
        init_D=(np.eye(2), np.zeros((2, 2))),
    )
    learner = dataclasses.replace(
        scn.learner,
        samples=(12, 12),
        initial_gain=(
            np.arange(8, dtype=float).reshape(2, 4) / 7.0,
            -np.ones((2, 4)),
        ),
    )
    return dataclasses.replace(scn, observers=observers, learner=learner)


def test_dict_round_trip_is_lossless():
    scn = _pinned_scenario()
    _assert_same(scn, scenario_from_dict(scenario_to_dict(scn)))


def test_file_round_trip_is_lossless(tmp_path):
    # json floats are written with shortest round-trip repr, so binary64
    # values survive the file exactly
    scn = _pinned_scenario()
    path = tmp_path / "scenario.json"
    save_scenario(scn, path)
    _assert_same(scn, load_scenario(path))


def test_omitted_optionals_stay_omitted_through_a_round_trip():
    scn = scalar_scenario()
    again = scenario_from_dict(scenario_to_dict(scn))
    assert again.observers.init_xi is None
    assert again.learner.samples is None
    doc = scenario_to_dict(scn)
    assert "initial" not in doc["observers"]
    assert "K0" not in doc["learner"]


def test_sparse_documents_fall_back_to_defaults():
    doc = {
        "graph": {"n": 1, "m": 1, "edges": [[2, 1, 1.0]]},
        "leader": {"S": [[0.0]], "D": [[1.0]], "initial_states": [[1.0]]},
        "followers": [{"A": [[0.0]], "B": [[1.0]], "C": [[1.0]]}],
        "observers": {"mu": [1.0], "E": [[[1.0]]], "R": [[[1.0]]]},
        "weights": {"Q": [[[1.0]]], "W": [[[1.0]]], "gamma": [0.01]},
        "sim": {},
    }
    scn = scenario_from_dict(doc)
    assert scn.follower_init == (None,)
    assert (scn.sim.step, scn.sim.t_final, scn.sim.seed) == (1e-3, 40.0, 0)
    obs = scn.observers
    assert (obs.beta, obs.beta1, obs.beta2, obs.beta3) == (1.0, 1.0, 1.0, 1.0)
    assert obs.leader_estimator == "adaptive"
    lrn = scn.learner
    assert lrn.window == 0.5
    assert lrn.samples is None
    assert lrn.tolerance == 1e-4
    assert lrn.max_iterations == 30
    assert lrn.noise_amplitude == 1.0
    assert lrn.noise_seed == 0
    assert lrn.gate == 1e-3
    assert lrn.initial_gain is None


def test_flat_lists_are_accepted_as_row_matrices():
    doc = scenario_to_dict(scalar_scenario())
    doc["learner"]["K0"] = [[-1.0, 0.5]]
    scn = scenario_from_dict(doc)
    assert scn.learner.initial_gain[0].shape == (1, 2)


@pytest.mark.parametrize(
    "section", ["graph", "leader", "followers", "observers", "weights", "sim"]
)
def test_missing_sections_are_named(section):
    doc = scenario_to_dict(pair_scenario())
    del doc[section]
    with pytest.raises(ScenarioError, match=f"{section}: missing section"):
        scenario_from_dict(doc)


@pytest.mark.parametrize(
    "section, key",
    [("graph", "n"), ("graph", "edges"), ("leader", "S"),
     ("leader", "initial_states"), ("observers", "mu"), ("weights", "gamma")],
)
def test_missing_keys_carry_the_path(section, key):
    doc = scenario_to_dict(pair_scenario())
    del doc[section][key]
    with pytest.raises(ScenarioError, match=rf"{section}\.{key}: missing"):
        scenario_from_dict(doc)


def test_graph_errors_are_prefixed_with_the_section():
    doc = scenario_to_dict(pair_scenario())
    doc["graph"]["edges"] = [[1, 1, 1.0], [3, 2, 1.0]]
    with pytest.raises(ScenarioError, match=r"graph: edge \(1, 1\): self-loop"):
        scenario_from_dict(doc)


def test_non_numeric_matrices_are_rejected():
    doc = scenario_to_dict(pair_scenario())
    doc["leader"]["S"] = [["fast", "slow"], ["up", "down"]]
    with pytest.raises(ScenarioError, match=r"leader\.S: not a numeric matrix"):
        scenario_from_dict(doc)


def test_three_dimensional_matrices_are_rejected():
    doc = scenario_to_dict(pair_scenario())
    doc["followers"][0]["A"] = [[[1.0]]]
    with pytest.raises(
        ScenarioError, match=r"followers\[0\]\.A: expected a matrix, got 3 dimensions"
    ):
        scenario_from_dict(doc)


def test_vectors_must_be_flat():
    doc = scenario_to_dict(pair_scenario())
    doc["leader"]["initial_states"] = [[[1.0, 0.5]]]
    with pytest.raises(
        ScenarioError, match=r"leader\.initial_states\[0\]: expected a flat list"
    ):
        scenario_from_dict(doc)


def test_observer_initial_block_must_be_an_object():
    doc = scenario_to_dict(pair_scenario())
    doc["observers"]["initial"] = [[0.0, 0.0]]
    with pytest.raises(ScenarioError, match=r"observers\.initial: expected an object"):
        scenario_from_dict(doc)


def test_learner_noise_must_be_an_object():
    doc = scenario_to_dict(pair_scenario())
    doc["learner"]["noise"] = "loud"
    with pytest.raises(ScenarioError, match=r"learner\.noise: expected an object"):
        scenario_from_dict(doc)


@pytest.mark.parametrize("key, value", [("h", 0.0), ("t_final", -1.0)])
def test_nonpositive_sim_settings_are_rejected(key, value):
    doc = scenario_to_dict(pair_scenario())
    doc["sim"][key] = value
    with pytest.raises(ScenarioError, match=rf"sim\.{key}: must be positive"):
        scenario_from_dict(doc)


def test_unknown_estimator_names_are_rejected():
    doc = scenario_to_dict(pair_scenario())
    doc["observers"]["leader_estimator"] = "kalman"
    with pytest.raises(
        ScenarioError,
        match="leader_estimator must be 'adaptive' or 'static', got 'kalman'",
    ):
        scenario_from_dict(doc)


def test_follower_count_must_match_the_graph():
    doc = scenario_to_dict(pair_scenario())
    doc["followers"] = doc["followers"][:1]
    with pytest.raises(ScenarioError, match="followers: expected 2 entries, got 1"):
        scenario_from_dict(doc)


def test_leader_initial_state_length_is_checked():
    doc = scenario_to_dict(pair_scenario())
    doc["leader"]["initial_states"] = [[1.0, 0.5, 0.3]]
    with pytest.raises(
        ScenarioError, match=r"leader\.initial\[0\]: expected 2 values, got shape \(3,\)"
    ):
        scenario_from_dict(doc)


def test_follower_initial_state_length_is_checked():
    doc = scenario_to_dict(pair_scenario())
    doc["followers"][0]["initial_state"] = [1.0]
    with pytest.raises(
        ScenarioError,
        match=r"followers\[0\]\.initial_state: expected 2 values, got shape \(1,\)",
    ):
        scenario_from_dict(doc)


def test_observer_initial_groups_are_counted_and_shaped():
    doc = scenario_to_dict(pair_scenario())
    doc["observers"]["initial"] = {"xi": [[0.0, 0.0]]}
    with pytest.raises(
        ScenarioError, match=r"observers\.initial\.xi: expected 2 entries, got 1"
    ):
        scenario_from_dict(doc)
    doc["observers"]["initial"] = {"S": [[[1.0, 0.0]], [[0.0, 1.0]]]}
    with pytest.raises(
        ScenarioError, match=r"observers\.initial\.S\[0\]: expected shape \(2, 2\)"
    ):
        scenario_from_dict(doc)


def test_behavior_gain_count_and_shape_are_checked():
    doc = scenario_to_dict(scalar_scenario())
    doc["learner"]["K0"] = []
    with pytest.raises(ScenarioError, match=r"learner\.K0: expected 1 entries, got 0"):
        scenario_from_dict(doc)
    doc["learner"]["K0"] = [[1.0, 2.0, 3.0]]
    with pytest.raises(
        ScenarioError,
        match=r"learner\.K0\[0\]: expected shape \(1, 2\), got \(1, 3\)",
    ):
        scenario_from_dict(doc)


def test_invalid_json_reports_the_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "graph": oops\n}\n')
    with pytest.raises(ScenarioError, match="invalid JSON at line 2"):
        load_scenario(path)


def test_missing_files_raise_scenario_errors(tmp_path):
    with pytest.raises(ScenarioError, match="nope.json"):
        load_scenario(tmp_path / "nope.json")


def test_top_level_must_be_an_object(tmp_path):
    path = tmp_path / "list.json"
    path.write_text("[1, 2]\n")
    with pytest.raises(ScenarioError, match="top level must be an object"):
        load_scenario(path)


def test_load_errors_carry_the_file_name(tmp_path):
    doc = scenario_to_dict(pair_scenario())
    del doc["leader"]
    path = tmp_path / "noleader.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(ScenarioError, match="noleader.json: leader: missing section"):
        load_scenario(path)
