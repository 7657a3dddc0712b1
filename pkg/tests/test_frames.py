import math

import pytest

from cornergraph.frames import (
    FrameSnapshot,
    InvalidFrame,
    PlacedActor,
    RoadLayout,
    Strip,
    actor_node_count,
    build_scene_graph,
    road_node_id,
    strip_node_id,
)
from cornergraph.graphs import (
    ActorCategory,
    AgentState,
    Edge,
    LightState,
    RelationCategory,
    validate_grammar,
)
from cornergraph.relations import stopping_distance


def ego(x=-1.75, y=0.0, v=12.0):
    return PlacedActor(
        ActorCategory.EGO,
        AgentState(location=(x, y), heading=0.0, velocity=(0.0, v), braking=False),
    )


def test_strip_requires_positive_width():
    with pytest.raises(ValueError):
        Strip(ActorCategory.LANE, center=0.0, width=0.0)


def test_strip_must_be_a_strip_category():
    with pytest.raises(ValueError):
        Strip(ActorCategory.CAR, center=0.0, width=2.0)


def test_strip_index_at_picks_nearest_containing(two_lane_layout):
    assert two_lane_layout.strip_index_at(-1.75) == 1
    assert two_lane_layout.strip_index_at(1.0) == 2
    assert two_lane_layout.strip_index_at(-4.0) == 0
    assert two_lane_layout.strip_index_at(4.9) == 3
    assert two_lane_layout.strip_index_at(9.0) is None


def test_strip_boundary_belongs_to_either_side(two_lane_layout):
    # x = 0 touches both lanes; the resolution must be deterministic
    idx = two_lane_layout.strip_index_at(0.0)
    assert idx in (1, 2)
    assert two_lane_layout.strip_index_at(0.0) == idx


def test_layout_round_trip(two_lane_layout):
    back = RoadLayout.from_json(two_lane_layout.to_json())
    assert back == two_lane_layout


def test_node_ordering_contract(simple_frame):
    g = build_scene_graph(simple_frame)
    # actors in placement order, then strips in layout order, then the road
    cats = [n.category for n in g.nodes]
    assert cats[0] is ActorCategory.EGO
    assert cats[1] is ActorCategory.BICYCLE
    assert cats[2:6] == [
        ActorCategory.PAVEMENT,
        ActorCategory.LANE,
        ActorCategory.LANE,
        ActorCategory.PAVEMENT,
    ]
    assert cats[6] is ActorCategory.ROAD
    assert [n.id for n in g.nodes] == list(range(7))
    assert actor_node_count(simple_frame) == 2
    assert strip_node_id(simple_frame, 0) == 2
    assert road_node_id(simple_frame) == 6


def test_scene_graph_is_grammatical(simple_frame):
    g = build_scene_graph(simple_frame)
    assert validate_grammar(g) == []


def test_self_state_edges_for_stateful_actors(simple_frame):
    g = build_scene_graph(simple_frame)
    self_edges = [e for e in g.edges if e.relation is RelationCategory.SELF_STATE]
    assert {(e.head, e.tail) for e in self_edges} == {(0, 0), (1, 1)}


def test_strips_relate_to_road(simple_frame):
    g = build_scene_graph(simple_frame)
    road = road_node_id(simple_frame)
    strip_isin = {
        e.head
        for e in g.edges
        if e.relation is RelationCategory.IS_IN and e.tail == road
    }
    assert strip_isin == {2, 3, 4, 5}


def test_adversary_relations_use_ego_speed(two_lane_layout):
    # separation 30 straddles the two stopping distances: safe at 12 m/s
    # (stopping 27.6), unsafe at 18 m/s (stopping 36.8)
    for v, rel in (
        (12.0, RelationCategory.SAFE_DISTANCE),
        (18.0, RelationCategory.UNSAFE_DISTANCE),
    ):
        assert (30.0 > stopping_distance(v)) == (rel is RelationCategory.SAFE_DISTANCE)
        frame = FrameSnapshot(
            index=0,
            is_corner_case=False,
            layout=two_lane_layout,
            actors=(
                ego(v=v),
                PlacedActor(
                    ActorCategory.CAR,
                    AgentState(
                        location=(-1.75, 30.0),
                        heading=0.0,
                        velocity=(0.0, 1.0),
                        braking=False,
                    ),
                ),
            ),
        )
        g = build_scene_graph(frame)
        assert g.has_edge(1, rel, 0)
        assert g.has_edge(1, RelationCategory.IN_FRONT_OF, 0)


def test_quadrant_edges_reflect_bearing(two_lane_layout):
    positions = {
        (-1.75, 25.0): RelationCategory.IN_FRONT_OF,
        (-1.75, -25.0): RelationCategory.AT_REAR_OF,
        (1.75, 0.05): RelationCategory.TO_RIGHT_OF,
        (-4.0, -0.05): RelationCategory.TO_LEFT_OF,
    }
    for (x, y), rel in positions.items():
        frame = FrameSnapshot(
            index=0,
            is_corner_case=False,
            layout=two_lane_layout,
            actors=(
                ego(),
                PlacedActor(
                    ActorCategory.PEDESTRIAN,
                    AgentState(location=(x, y), heading=0.0, velocity=(1.0, 0.0)),
                ),
            ),
        )
        g = build_scene_graph(frame)
        assert g.has_edge(1, rel, 0), (x, y, rel)


def test_ego_tracks_objects_but_objects_have_no_bearing(two_lane_layout):
    frame = FrameSnapshot(
        index=0,
        is_corner_case=False,
        layout=two_lane_layout,
        actors=(
            ego(),
            PlacedActor(
                ActorCategory.OBJECT, AgentState(location=(1.75, 10.0), heading=0.0)
            ),
        ),
    )
    g = build_scene_graph(frame)
    dist = [
        e
        for e in g.edges
        if e.relation
        in (RelationCategory.SAFE_DISTANCE, RelationCategory.UNSAFE_DISTANCE)
    ]
    assert [(e.head, e.tail) for e in dist] == [(0, 1)]
    assert not any(
        e.relation
        in (
            RelationCategory.IN_FRONT_OF,
            RelationCategory.AT_REAR_OF,
            RelationCategory.TO_LEFT_OF,
            RelationCategory.TO_RIGHT_OF,
        )
        for e in g.edges
    )


def test_traffic_light_gets_self_state_and_containment(two_lane_layout):
    frame = FrameSnapshot(
        index=0,
        is_corner_case=False,
        layout=two_lane_layout,
        actors=(
            ego(),
            PlacedActor(
                ActorCategory.TRAFFIC_LIGHT,
                AgentState(location=(4.5, 20.0), heading=0.0, light_state=LightState.RED),
            ),
        ),
    )
    g = build_scene_graph(frame)
    assert g.has_edge(1, RelationCategory.SELF_STATE, 1)
    assert g.has_edge(1, RelationCategory.IS_IN, 5)
    assert validate_grammar(g) == []


def test_actor_off_every_strip_is_invalid(two_lane_layout):
    frame = FrameSnapshot(
        index=0,
        is_corner_case=False,
        layout=two_lane_layout,
        actors=(
            ego(),
            PlacedActor(
                ActorCategory.CAR,
                AgentState(location=(40.0, 0.0), heading=0.0, velocity=(0.0, 1.0), braking=False),
            ),
        ),
    )
    with pytest.raises(InvalidFrame):
        build_scene_graph(frame)


def test_first_actor_must_be_the_ego(two_lane_layout):
    frame = FrameSnapshot(
        index=0,
        is_corner_case=False,
        layout=two_lane_layout,
        actors=(
            PlacedActor(
                ActorCategory.CAR,
                AgentState(location=(-1.75, 0.0), heading=0.0, velocity=(0.0, 1.0), braking=False),
            ),
        ),
    )
    with pytest.raises(InvalidFrame):
        build_scene_graph(frame)


def test_exactly_one_ego(two_lane_layout):
    frame = FrameSnapshot(
        index=0,
        is_corner_case=False,
        layout=two_lane_layout,
        actors=(ego(), ego(x=1.75)),
    )
    with pytest.raises(InvalidFrame):
        build_scene_graph(frame)


def test_frame_metadata_carries_over(two_lane_layout):
    frame = FrameSnapshot(
        index=5, is_corner_case=True, layout=two_lane_layout, actors=(ego(),)
    )
    g = build_scene_graph(frame)
    assert g.frame_index == 5
    assert g.is_corner_case is True


def test_edges_are_sorted(simple_frame):
    g = build_scene_graph(simple_frame)
    keys = [e.key() for e in g.edges]
    assert keys == sorted(keys)
