import math
import os
import pathlib

import numpy as np
import pytest

import gocmpc

ROOT = pathlib.Path(os.environ.get("GOCMPC_SOURCE_DIR", pathlib.Path(__file__).resolve().parents[2]))
SIX_NODE_EDGES = [(0, 1), (0, 2), (1, 3), (2, 4), (3, 4), (3, 5), (4, 5)]


def test_bundled_scenario_loads():
    s = gocmpc.load_scenario(str(ROOT / "scenarios" / "stacking_2agent.scn"))
    assert s.subtask_count == 3
    assert s.num_nodes == 6
    assert s.num_agents == 2


def test_scenario_round_trip():
    s = gocmpc.generate_stacking_scenario(3, 2, 4)
    text = s.to_json()
    assert gocmpc.serialize_scenario(gocmpc.parse_scenario(text)) == text


def test_parse_errors_carry_paths():
    with pytest.raises(gocmpc.ParseError, match="goc.edges"):
        text = gocmpc.generate_parallel_pickup_scenario(0).to_json()
        gocmpc.parse_scenario(text.replace('"to": 1', '"to": 9', 1))
    with pytest.raises(gocmpc.Error):
        gocmpc.parse_scenario("")


def test_graph_queries():
    assert sorted(gocmpc.cut_edges(6, SIX_NODE_EDGES, {2, 3, 4, 5})) == [(0, 2), (1, 3)]
    assert gocmpc.frontier(6, SIX_NODE_EDGES, {2, 3, 4, 5}) == [2, 3]
    assert gocmpc.linearize_order(6, SIX_NODE_EDGES) == [0, 1, 2, 3, 4, 5]
    with pytest.raises(gocmpc.CycleDetected):
        gocmpc.validate_goc(2, [(0, 1), (1, 0)])


def test_qp_box():
    # min (x - 2)^2 subject to x <= 1.
    res = gocmpc.solve_qp(np.array([[2.0]]), np.array([-4.0]), np.array([[1.0]]), np.array([-np.inf]), np.array([1.0]))
    assert res["status"] == "optimal"
    assert abs(res["x"][0] - 1.0) < 1e-6


def test_spline_midpoint():
    pos, vel = gocmpc.eval_spline([np.zeros(2), np.ones(2)], [np.zeros(2), np.zeros(2)], [1.0], 0.5)
    assert np.allclose(pos, [0.5, 0.5])
    assert np.allclose(vel, [1.5, 1.5])


def test_episode_runs_and_renders():
    s = gocmpc.generate_parallel_pickup_scenario(0)
    rep = gocmpc.run_episode(s)
    assert rep["success"]
    assert rep["backtracks"] == 0
    assert rep["trajectory"].shape == (len(rep["times"]), s.x0.size)
    base = gocmpc.run_episode(s, method="baseline", record_trajectory=False)
    assert base["method"] == "linearized-baseline"
    assert rep["first_makespan_s"] < base["first_makespan_s"]
    svg = gocmpc.render_svg(gocmpc.trajectory_csv(s), "xy")
    assert svg.count("<polyline") == 2
    assert math.isfinite(rep["total_length_m"])
