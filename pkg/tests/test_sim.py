import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cornergraph.extended import NodeMismatch
from cornergraph.frames import build_scene_graph
from cornergraph.graphs import ActorCategory
from cornergraph.scenarios import ScenarioTemplate, generate, ground_truth_graph
from cornergraph.sim import (
    BODY_SIZES,
    COLLISION_IOU,
    NEAR_MISS_CLEARANCE,
    AdversaryPlan,
    ControllerProfile,
    EpisodeResult,
    ExecutableScenario,
    Outcome,
    PROFILES,
    box_corners,
    box_iou,
    format_scr_table,
    intersection_area,
    polygon_area,
    polygon_clearance,
    realize,
    run_episode,
    scr_report,
    simulate_batch,
    write_trace_csv,
)


# --- geometry --------------------------------------------------------------


def test_box_corners_axis_aligned():
    poly = box_corners(0.0, 0.0, 0.0, 4.0, 2.0)
    xs = sorted(p[0] for p in poly)
    ys = sorted(p[1] for p in poly)
    # heading 0 points along +y, so length spans y and width spans x
    assert xs == pytest.approx([-1.0, -1.0, 1.0, 1.0])
    assert ys == pytest.approx([-2.0, -2.0, 2.0, 2.0])
    assert polygon_area(poly) == pytest.approx(8.0)


def test_box_corners_rotation():
    poly = box_corners(0.0, 0.0, math.pi / 2, 4.0, 2.0)
    xs = sorted(p[0] for p in poly)
    ys = sorted(p[1] for p in poly)
    assert xs == pytest.approx([-2.0, -2.0, 2.0, 2.0])
    assert ys == pytest.approx([-1.0, -1.0, 1.0, 1.0])
    assert polygon_area(poly) == pytest.approx(8.0)


def test_iou_identity_and_disjoint():
    a = box_corners(0.0, 0.0, 0.3, 4.5, 2.0)
    assert box_iou(a, a) == pytest.approx(1.0)
    b = box_corners(50.0, 0.0, 0.0, 4.5, 2.0)
    assert box_iou(a, b) == 0.0
    assert intersection_area(a, b) == 0.0


def test_iou_analytic_overlap():
    # intersection 1x4, union 8+8-4: exactly one third
    a = box_corners(0.0, 0.0, 0.0, 4.0, 2.0)
    b = box_corners(1.0, 0.0, 0.0, 4.0, 2.0)
    assert box_iou(a, b) == pytest.approx(1.0 / 3.0, abs=1e-12)
    # quarter area overlap: inter 1x2, union 16-2
    c = box_corners(1.0, 2.0, 0.0, 4.0, 2.0)
    assert box_iou(a, c) == pytest.approx(2.0 / 14.0, abs=1e-12)


boxes = st.tuples(
    st.floats(-20, 20), st.floats(-20, 20), st.floats(-math.pi, math.pi),
    st.floats(0.5, 6.0), st.floats(0.5, 3.0),
)


@settings(max_examples=80, deadline=None)
@given(boxes, boxes)
def test_iou_symmetric_and_bounded(pa, pb):
    a = box_corners(*pa)
    b = box_corners(*pb)
    iou = box_iou(a, b)
    assert 0.0 <= iou <= 1.0 + 1e-12
    assert iou == pytest.approx(box_iou(b, a), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(boxes, boxes, st.floats(-math.pi, math.pi), st.floats(-30, 30), st.floats(-30, 30))
def test_iou_invariant_under_rigid_motion(pa, pb, rot, tx, ty):
    iou0 = box_iou(box_corners(*pa), box_corners(*pb))

    def moved(params):
        cx, cy, heading, length, width = params
        c, s = math.cos(rot), math.sin(rot)
        nx = c * cx - s * cy + tx
        ny = s * cx + c * cy + ty
        # the pose angle is measured clockwise from +y, so a CCW rotation of
        # the plane subtracts from it
        return box_corners(nx, ny, heading - rot, length, width)

    iou1 = box_iou(moved(pa), moved(pb))
    assert iou1 == pytest.approx(iou0, abs=1e-9)


def test_clearance_cases():
    a = box_corners(0.0, 0.0, 0.0, 1.0, 1.0)
    b = box_corners(3.0, 0.0, 0.0, 1.0, 1.0)
    assert polygon_clearance(a, b) == pytest.approx(2.0)
    overlapping = box_corners(0.5, 0.0, 0.0, 1.0, 1.0)
    assert polygon_clearance(a, overlapping) == 0.0
    inner = box_corners(0.0, 0.0, 0.0, 0.2, 0.2)
    assert polygon_clearance(a, inner) == 0.0
    diagonal = box_corners(2.0, 2.0, 0.0, 1.0, 1.0)
    # nearest corners at (0.5, 0.5) and (1.5, 1.5)
    assert polygon_clearance(a, diagonal) == pytest.approx(math.sqrt(2.0))


# --- plans -----------------------------------------------------------------


def test_plan_sampling_linear_and_park():
    plan = AdversaryPlan(
        category=ActorCategory.CAR,
        heading0=0.0,
        waypoints=((0.0, 0.0, 0.0), (2.0, 0.0, 10.0), (4.0, 2.0, 10.0)),
        post_mode="park",
    )
    x, y, vx, vy, heading = plan.sample(1.0)
    assert (x, y) == pytest.approx((0.0, 5.0))
    assert (vx, vy) == pytest.approx((0.0, 5.0))
    assert heading == pytest.approx(0.0)

    x, y, vx, vy, heading = plan.sample(3.0)
    assert (x, y) == pytest.approx((1.0, 10.0))
    assert (vx, vy) == pytest.approx((1.0, 0.0))
    assert heading == pytest.approx(math.pi / 2)

    x, y, vx, vy, _ = plan.sample(10.0)
    assert (x, y) == pytest.approx((2.0, 10.0))
    assert (vx, vy) == (0.0, 0.0)


def test_plan_cruise_continues_and_heading_falls_back():
    plan = AdversaryPlan(
        category=ActorCategory.CAR,
        heading0=1.0,
        waypoints=((0.0, 5.0, 5.0),),
        post_mode="cruise",
        post_velocity=(0.0, 8.0),
    )
    x, y, vx, vy, heading = plan.sample(2.0)
    assert (x, y) == pytest.approx((5.0, 21.0))
    assert (vx, vy) == (0.0, 8.0)
    assert heading == pytest.approx(0.0)

    parked = AdversaryPlan(
        category=ActorCategory.CAR,
        heading0=1.0,
        waypoints=((0.0, 5.0, 5.0),),
        post_mode="park",
    )
    assert parked.sample(3.0)[4] == pytest.approx(1.0)


# --- realization -----------------------------------------------------------


def test_identity_prediction_continues_current_motion():
    scn = generate(ScenarioTemplate.ONCOMING_CYCLIST_CUT_IN, 1, 1)[0]
    g = build_scene_graph(scn.frames[0])
    ex = realize(g, g, scn.layout, scenario_id=scn.id)
    assert ex.scenario_id == scn.id
    assert ex.source_frame == 0
    assert ex.ego_from_rest is False
    assert ex.infeasible is False
    assert ex.fidelity == (0, 0)
    assert len(ex.plans) == 1
    plan = ex.plans[0]
    assert plan.perturbed is False
    assert plan.post_mode == "linear"
    state = scn.frames[0].actors[1].state
    x, y, vx, vy, _ = plan.sample(1.0)
    assert (vx, vy) == pytest.approx(state.velocity)
    assert x == pytest.approx(state.location[0] + state.velocity[0])


def test_corner_prediction_builds_cut_plan():
    scn = generate(ScenarioTemplate.ONCOMING_CYCLIST_CUT_IN, 1, 1)[0]
    g = build_scene_graph(scn.frames[0])
    ex = realize(g, ground_truth_graph(scn), scn.layout, scenario_id=scn.id)
    plan = ex.plans[0]
    assert plan.perturbed is True
    assert plan.post_mode == "park"
    assert len(plan.waypoints) == 3
    # the prescribed relations must replay exactly
    assert ex.fidelity == (3, 3)
    # terminal lateral position sits in the ego lane
    assert abs(plan.waypoints[-1][1] - (-1.75)) <= 1.75


def test_motorway_realization_sets_from_rest():
    scn = generate(ScenarioTemplate.MOTORWAY_MERGE, 2, 1)[0]
    g = build_scene_graph(scn.frames[0])
    ex = realize(g, ground_truth_graph(scn), scn.layout)
    assert ex.ego_from_rest is True


def test_statics_carry_traffic_lights():
    scn = generate(ScenarioTemplate.RED_LIGHT_RUNNER, 2, 1)[0]
    g = build_scene_graph(scn.frames[0])
    ex = realize(g, g, scn.layout)
    assert len(ex.statics) == 1
    assert ex.statics[0].category is ActorCategory.TRAFFIC_LIGHT
    # the runner is a moving car, so exactly one adversary plan
    assert len(ex.plans) == 1


def test_realize_rejects_mismatched_nodes():
    a = generate(ScenarioTemplate.ONCOMING_CYCLIST_CUT_IN, 1, 1)[0]
    b = generate(ScenarioTemplate.MOTORWAY_MERGE, 1, 1)[0]
    with pytest.raises(NodeMismatch):
        realize(
            build_scene_graph(a.frames[0]),
            build_scene_graph(b.frames[0]),
            a.layout,
        )


# --- episodes --------------------------------------------------------------


def executable(plans, ego_speed=10.0, from_rest=False, statics=()):
    return ExecutableScenario(
        scenario_id="unit",
        source_frame=0,
        ego_start=(-1.75, 0.0),
        ego_target_speed=ego_speed,
        ego_from_rest=from_rest,
        plans=tuple(plans),
        statics=tuple(statics),
        infeasible=False,
        fidelity=(0, 0),
    )


def parked_car(x, y):
    return AdversaryPlan(
        category=ActorCategory.CAR,
        heading0=0.0,
        waypoints=((0.0, x, y),),
        post_mode="park",
    )


def test_basic_driver_collides_with_parked_car_ahead():
    scn = executable([parked_car(-1.75, 40.0)])
    result = run_episode(scn, PROFILES["Basic"])
    assert result.outcome is Outcome.COLLISION
    assert result.min_clearance == 0.0
    assert result.t_final < 10.0


def test_reactive_driver_stops_short():
    scn = executable([parked_car(-1.75, 40.0)])
    for name in ("Normal", "Cautious"):
        result = run_episode(scn, PROFILES[name])
        assert result.outcome is Outcome.NO_COLLISION, name
        assert result.min_clearance > NEAR_MISS_CLEARANCE


def test_close_lateral_pass_is_a_near_miss():
    # surface gap 3.3 - 1.0 - 1.0 = 1.3, under the near-miss clearance but
    # outside the reaction corridor
    scn = executable([parked_car(-1.75 + 3.3, 40.0)])
    result = run_episode(scn, PROFILES["Normal"])
    assert result.outcome is Outcome.NEAR_MISS
    assert 0.0 < result.min_clearance < NEAR_MISS_CLEARANCE


def test_wide_lateral_pass_is_clean():
    scn = executable([parked_car(-1.75 + 4.0, 40.0)])
    result = run_episode(scn, PROFILES["Normal"])
    assert result.outcome is Outcome.NO_COLLISION
    assert result.min_clearance > NEAR_MISS_CLEARANCE


def test_gated_start_reports_unsafe_maneuver():
    scn = executable([parked_car(-1.75, 20.0)], from_rest=True)
    cautious = run_episode(scn, PROFILES["Cautious"])
    assert cautious.gated_start is True
    assert cautious.outcome is Outcome.UNSAFE_MANEUVER
    assert cautious.max_ego_speed < 0.5

    # the hazard sits beyond the aggressive profile's perception range, so
    # that driver pulls away and tailgates to a stop instead of freezing
    aggressive = run_episode(scn, PROFILES["Aggressive"])
    assert aggressive.gated_start is False
    assert aggressive.outcome in (Outcome.NO_COLLISION, Outcome.NEAR_MISS)
    assert aggressive.max_ego_speed > 0.5


def test_collision_takes_precedence_over_near_miss():
    # the impact run also passes through the near-miss band on approach
    scn = executable([parked_car(-1.75, 40.0)])
    result = run_episode(scn, PROFILES["Basic"])
    assert result.outcome is Outcome.COLLISION


def test_episode_determinism_and_trace(tmp_path):
    scn = executable([parked_car(-1.75, 40.0)])
    a = run_episode(scn, PROFILES["Normal"], record=True)
    b = run_episode(scn, PROFILES["Normal"], record=True)
    assert a == b
    assert len(a.trace) > 0
    path = tmp_path / "trace.csv"
    write_trace_csv(path, a)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "agent,t,x,y,heading,speed"
    assert len(lines) == len(a.trace) + 1


def test_batch_report_and_table():
    scn = executable([parked_car(-1.75, 40.0)])
    results = simulate_batch([scn, scn], profiles=[PROFILES["Basic"], PROFILES["Normal"]])
    report = scr_report(results)
    assert set(report) == {"Basic", "Normal"}
    for row in report.values():
        assert sum(row.values()) == pytest.approx(100.0)
    assert report["Basic"][Outcome.COLLISION.value] == pytest.approx(100.0)
    assert report["Normal"][Outcome.NO_COLLISION.value] == pytest.approx(100.0)

    table = format_scr_table(report)
    assert "Basic" in table and "Normal" in table
    assert Outcome.COLLISION.value in table.split("\n")[0]

    with pytest.raises(ValueError):
        scr_report({"Empty": []})


def test_profile_table_is_complete():
    assert set(PROFILES) == {"Basic", "Normal", "Cautious", "Aggressive"}
    assert PROFILES["Basic"].reactive is False
    for profile in PROFILES.values():
        assert profile.brake_rate > 0
