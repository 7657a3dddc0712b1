import numpy as np
import pytest

from cornergraph.frames import FrameSnapshot, PlacedActor, RoadLayout, Strip
from cornergraph.graphs import ActorCategory, AgentState
from cornergraph.model import ModelDims


@pytest.fixture
def tiny_dims():
    # small enough that finite differences stay well-conditioned
    return ModelDims(
        encoder_hidden=8, gat1_out=8, mid_hidden=12, mid_out=16, triple_hidden=4
    )


@pytest.fixture
def two_lane_layout():
    return RoadLayout(
        strips=(
            Strip(ActorCategory.PAVEMENT, center=-4.5, width=2.0),
            Strip(ActorCategory.LANE, center=-1.75, width=3.5, direction=1),
            Strip(ActorCategory.LANE, center=1.75, width=3.5, direction=-1),
            Strip(ActorCategory.PAVEMENT, center=4.5, width=2.0),
        )
    )


def make_frame(layout, actors, index=0, corner=False):
    return FrameSnapshot(
        index=index, is_corner_case=corner, layout=layout, actors=tuple(actors)
    )


@pytest.fixture
def simple_frame(two_lane_layout):
    ego = PlacedActor(
        ActorCategory.EGO,
        AgentState(location=(-1.75, 0.0), heading=0.0, velocity=(0.0, 15.0), braking=False),
    )
    cyclist = PlacedActor(
        ActorCategory.BICYCLE,
        AgentState(location=(1.75, 40.0), heading=np.pi, velocity=(0.0, -5.0)),
    )
    return make_frame(two_lane_layout, [ego, cyclist])
