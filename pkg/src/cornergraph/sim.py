"""Kinematic episode simulator and scenario realization.

``realize`` turns a (current graph, predicted graph) pair into an executable
episode: adversaries whose predicted relations differ from their current ones
get a two-leg waypoint plan that holds their travel line and then cuts toward
the prescribed position late, while unchanged adversaries simply continue at
their current velocity.  ``run_episode`` then rolls the episode forward under
one of four ego driver profiles and classifies the outcome.

Outcome precedence is fixed: Collision > NearMiss > UnsafeManeuver >
NoCollision.  Collision means oriented-box IoU above 0.1, near miss means
surface clearance at or below 1.5 m, and an unsafe maneuver means the ego
never got moving (top speed below 0.5 m/s) after being held back by a hazard
already inside its caution range at the start.

Simulation is closed-form per agent (waypoint interpolation, explicit Euler
for the ego), uses no randomness, and is therefore bit-reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .extended import NodeMismatch
from .frames import RoadLayout
from .graphs import (
    ActorCategory,
    AgentState,
    RelationCategory,
    SceneGraph,
)
from .relations import (
    discretize_distance,
    discretize_relative_position,
    relative_angle,
    stopping_distance,
)

SIM_STEP = 0.05
HORIZON = 30.0
COLLISION_IOU = 0.1
NEAR_MISS_CLEARANCE = 1.5

#: oriented footprint (length along heading, width across), meters
BODY_SIZES = {
    ActorCategory.EGO: (4.5, 2.0),
    ActorCategory.CAR: (4.5, 2.0),
    ActorCategory.BICYCLE: (1.8, 0.6),
    ActorCategory.PEDESTRIAN: (0.6, 0.6),
}

SPEED_LIMITS = {
    ActorCategory.CAR: 30.0,
    ActorCategory.BICYCLE: 15.0,
    ActorCategory.PEDESTRIAN: 15.0,
}

#: lateral half-width of the strip of road the ego treats as its own
EGO_CORRIDOR_HALF = 2.0
#: surface gap kept when stopped behind something, meters
STANDSTILL_GAP = 2.5
EGO_ACCEL = 3.0
#: surface gap below which the non-reactive profile slams the brakes
BASIC_EMERGENCY_GAP = 5.0

_ADVERSARY_CATEGORIES = frozenset(
    {ActorCategory.CAR, ActorCategory.BICYCLE, ActorCategory.PEDESTRIAN}
)
_STRIP_CATEGORIES = frozenset(
    {ActorCategory.LANE, ActorCategory.PAVEMENT, ActorCategory.SHOULDER}
)


class Outcome(str, Enum):
    COLLISION = "Collision"
    NEAR_MISS = "NearMiss"
    UNSAFE_MANEUVER = "UnsafeManeuver"
    NO_COLLISION = "NoCollision"


@dataclass(frozen=True)
class ControllerProfile:
    """Longitudinal ego behavior.

    Reactive profiles keep a time-gap to the nearest hazard ahead in their
    corridor and refuse to pull away while anything sits inside
    ``hazard_range``.  The non-reactive profile drives at its target speed and
    only slams the brakes at very short range.
    """

    name: str
    reactive: bool
    time_gap: float
    brake_rate: float
    hazard_range: float


PROFILES = {
    "Basic": ControllerProfile("Basic", False, 0.0, 8.0, 0.0),
    "Normal": ControllerProfile("Normal", True, 1.5, 5.0, 25.0),
    "Cautious": ControllerProfile("Cautious", True, 2.5, 6.0, 35.0),
    "Aggressive": ControllerProfile("Aggressive", True, 0.8, 4.5, 12.0),
}


# --- oriented boxes --------------------------------------------------------


def box_corners(cx, cy, heading, length, width):
    """Counter-clockwise corners of an oriented box; heading 0 points +y."""
    fx, fy = math.sin(heading), math.cos(heading)
    rx, ry = math.cos(heading), -math.sin(heading)
    hl, hw = length / 2.0, width / 2.0
    return (
        (cx + fx * hl + rx * hw, cy + fy * hl + ry * hw),
        (cx + fx * hl - rx * hw, cy + fy * hl - ry * hw),
        (cx - fx * hl - rx * hw, cy - fy * hl - ry * hw),
        (cx - fx * hl + rx * hw, cy - fy * hl + ry * hw),
    )


def polygon_area(poly):
    total = 0.0
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        total += x1 * y2 - x2 * y1
    return abs(total) / 2.0


def _clip(subject, a, b):
    # keep points on the left of a->b (clip polygon is counter-clockwise)
    out = []
    n = len(subject)
    if n == 0:
        return out
    ax, ay = a
    bx, by = b
    ex, ey = bx - ax, by - ay

    def side(p):
        return ex * (p[1] - ay) - ey * (p[0] - ax)

    for i in range(n):
        cur = subject[i]
        nxt = subject[(i + 1) % n]
        s_cur = side(cur)
        s_nxt = side(nxt)
        if s_cur >= 0.0:
            out.append(cur)
        if (s_cur > 0.0 and s_nxt < 0.0) or (s_cur < 0.0 and s_nxt > 0.0):
            t = s_cur / (s_cur - s_nxt)
            out.append(
                (cur[0] + t * (nxt[0] - cur[0]), cur[1] + t * (nxt[1] - cur[1]))
            )
    return out


def intersection_area(poly_a, poly_b):
    clipped = list(poly_a)
    n = len(poly_b)
    for i in range(n):
        clipped = _clip(clipped, poly_b[i], poly_b[(i + 1) % n])
        if not clipped:
            return 0.0
    return polygon_area(clipped)


def box_iou(poly_a, poly_b):
    inter = intersection_area(poly_a, poly_b)
    union = polygon_area(poly_a) + polygon_area(poly_b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def _point_in_convex(p, poly):
    px, py = p
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        if (bx - ax) * (py - ay) - (by - ay) * (px - ax) < -1e-12:
            return False
    return True


def _point_seg_dist(p, a, b):
    px, py = p
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    if denom <= 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / denom
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def _segments_cross(a, b, c, d):
    def orient(p, q, r):
        v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
        if v > 1e-12:
            return 1
        if v < -1e-12:
            return -1
        return 0

    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    return o1 != o2 and o3 != o4 and o1 != 0 and o2 != 0 and o3 != 0 and o4 != 0


def polygon_clearance(poly_a, poly_b):
    """Minimum surface distance between two convex polygons, 0 on overlap."""
    if _point_in_convex(poly_a[0], poly_b) or _point_in_convex(poly_b[0], poly_a):
        return 0.0
    best = math.inf
    n_a, n_b = len(poly_a), len(poly_b)
    for i in range(n_a):
        a1, a2 = poly_a[i], poly_a[(i + 1) % n_a]
        for j in range(n_b):
            b1, b2 = poly_b[j], poly_b[(j + 1) % n_b]
            if _segments_cross(a1, a2, b1, b2):
                return 0.0
            best = min(
                best,
                _point_seg_dist(a1, b1, b2),
                _point_seg_dist(a2, b1, b2),
                _point_seg_dist(b1, a1, a2),
                _point_seg_dist(b2, a1, a2),
            )
    return best


# --- adversary plans -------------------------------------------------------


@dataclass(frozen=True)
class AdversaryPlan:
    """Piecewise-linear waypoint schedule with a terminal behavior.

    ``post_mode`` is one of "park" (hold the last waypoint), "cruise" (carry
    on with ``post_velocity``), or "linear" for single-waypoint continuation
    plans.
    """

    category: ActorCategory
    heading0: float
    waypoints: tuple
    post_mode: str
    post_velocity: tuple = (0.0, 0.0)
    perturbed: bool = False
    infeasible: bool = False

    def sample(self, t):
        """Position, velocity and box heading at time t >= 0."""
        wps = self.waypoints
        for i in range(len(wps) - 1):
            t0, x0, y0 = wps[i]
            t1, x1, y1 = wps[i + 1]
            if t <= t1:
                span = t1 - t0
                vx = (x1 - x0) / span
                vy = (y1 - y0) / span
                frac = (t - t0) / span
                x = x0 + (x1 - x0) * frac
                y = y0 + (y1 - y0) * frac
                return x, y, vx, vy, self._heading(vx, vy, i)
        t_last, x_last, y_last = wps[-1]
        if self.post_mode == "park":
            return x_last, y_last, 0.0, 0.0, self._heading(0.0, 0.0, len(wps) - 2)
        vx, vy = self.post_velocity
        dt = t - t_last
        return (
            x_last + vx * dt,
            y_last + vy * dt,
            vx,
            vy,
            self._heading(vx, vy, len(wps) - 2),
        )

    def _heading(self, vx, vy, leg):
        if math.hypot(vx, vy) > 0.05:
            return math.atan2(vx, vy)
        # fall back to the previous moving leg, then the initial pose
        wps = self.waypoints
        for i in range(leg, -1, -1):
            if i < 0 or i + 1 >= len(wps):
                break
            t0, x0, y0 = wps[i]
            t1, x1, y1 = wps[i + 1]
            lvx, lvy = (x1 - x0) / (t1 - t0), (y1 - y0) / (t1 - t0)
            if math.hypot(lvx, lvy) > 0.05:
                return math.atan2(lvx, lvy)
        return self.heading0


@dataclass(frozen=True)
class StaticActor:
    category: ActorCategory
    location: tuple
    heading: float


@dataclass(frozen=True)
class ExecutableScenario:
    scenario_id: str
    source_frame: int
    ego_start: tuple
    ego_target_speed: float
    ego_from_rest: bool
    plans: tuple
    statics: tuple
    infeasible: bool
    #: (matched prescribed relations, prescribed relations) over cut plans
    fidelity: tuple


def _relation_triple(graph: SceneGraph, actor: int):
    """(containment tail, distance relation, bearing relation) for an actor."""
    isin = None
    dist = None
    quad = None
    for e in graph.edges:
        if e.head != actor:
            continue
        if e.relation is RelationCategory.IS_IN:
            isin = e.tail
        elif e.relation in (
            RelationCategory.SAFE_DISTANCE,
            RelationCategory.UNSAFE_DISTANCE,
        ):
            if e.tail == graph.ego_id():
                dist = e.relation
        elif e.relation in (
            RelationCategory.IN_FRONT_OF,
            RelationCategory.AT_REAR_OF,
            RelationCategory.TO_LEFT_OF,
            RelationCategory.TO_RIGHT_OF,
        ):
            if e.tail == graph.ego_id():
                quad = e.relation
        # SelfState edges carry no geometry
    return isin, dist, quad


def _cut_targets(quad, sep, dx, y0, ego_y0):
    if quad is RelationCategory.IN_FRONT_OF:
        return max(math.sqrt(max(sep * sep - dx * dx, 0.0)), abs(dx) + 0.1)
    if quad is RelationCategory.AT_REAR_OF:
        return -max(math.sqrt(max(sep * sep - dx * dx, 0.0)), abs(dx) + 0.1)
    if quad in (RelationCategory.TO_LEFT_OF, RelationCategory.TO_RIGHT_OF):
        return 0.0
    # no bearing prescribed: stay on the current side
    side = 1.0 if y0 >= ego_y0 else -1.0
    return side * math.sqrt(max(sep * sep - dx * dx, 0.01))


def _cut_plan(category, state: AgentState, ego_x, ego_y0, v_e, x_t, sep, quad):
    x0, y0 = state.location
    limit = SPEED_LIMITS[category]
    dx = x_t - ego_x
    dy_off = _cut_targets(quad, sep, dx, y0, ego_y0)

    def legs(ts):
        y_t = ego_y0 + v_e * ts + dy_off
        t_cut = min(2.0, max(0.8, ts / 4.0))
        vy = (y_t - y0) / ts
        v2 = math.hypot((x_t - x0) / t_cut, vy)
        return y_t, t_cut, max(abs(vy), v2)

    d0 = math.hypot(x0 - ego_x, y0 - ego_y0)
    ts0 = min(25.0, max(1.5, d0 / max(v_e, 1.0)))
    chosen = None
    infeasible = False
    best = None
    for ts in [ts0] + [1.5 + 0.5 * k for k in range(48)]:
        y_t, t_cut, speed = legs(ts)
        if speed <= limit:
            chosen = (ts, y_t, t_cut)
            break
        if best is None or speed < best[3]:
            best = (ts, y_t, t_cut, speed)
    if chosen is None:
        chosen = best[:3]
        infeasible = True
    ts, y_t, t_cut = chosen
    y_mid = y0 + (y_t - y0) * (ts - t_cut) / ts
    waypoints = ((0.0, x0, y0), (ts - t_cut, x0, y_mid), (ts, x_t, y_t))
    return waypoints, ts, infeasible


def realize(
    regular: SceneGraph,
    predicted: SceneGraph,
    layout: RoadLayout,
    scenario_id: str = "",
) -> ExecutableScenario:
    """Build an executable episode that enacts the predicted relations.

    Adversaries whose (containment, distance, bearing) triple is unchanged
    between the two graphs continue at their current velocity.  Changed
    adversaries get a waypoint plan that reaches the prescribed geometry at a
    sync time on the nominal (constant-speed) ego trajectory, cutting
    laterally only over the final stretch.  Plans that would need a
    physically implausible speed are kept but flagged infeasible.
    """
    reg_ids = [(n.id, n.category) for n in regular.nodes]
    pred_ids = [(n.id, n.category) for n in predicted.nodes]
    if reg_ids != pred_ids:
        raise NodeMismatch("graphs describe different node sets")

    ego = regular.node(regular.ego_id())
    if ego.state is None:
        raise NodeMismatch("ego node carries no pose")
    ego_x, ego_y0 = ego.state.location
    v_e = ego.state.speed

    strip_ids = [n.id for n in regular.nodes if n.category in _STRIP_CATEGORIES]
    strip_center = {
        nid: layout.strips[i].center for i, nid in enumerate(strip_ids)
    }

    plans = []
    statics = []
    any_infeasible = False
    matches = 0
    prescribed = 0
    for node in regular.nodes:
        if node.category is ActorCategory.TRAFFIC_LIGHT or (
            node.category is ActorCategory.OBJECT and node.state is not None
        ):
            statics.append(
                StaticActor(node.category, node.state.location, node.state.heading)
            )
            continue
        if node.category not in _ADVERSARY_CATEGORIES:
            continue
        state = node.state
        x0, y0 = state.location
        reg_triple = _relation_triple(regular, node.id)
        pred_triple = _relation_triple(predicted, node.id)
        if reg_triple == pred_triple:
            vx, vy = state.velocity if state.velocity is not None else (0.0, 0.0)
            if math.hypot(vx, vy) < 0.05:
                plan = AdversaryPlan(
                    category=node.category,
                    heading0=state.heading,
                    waypoints=((0.0, x0, y0),),
                    post_mode="park",
                )
            else:
                plan = AdversaryPlan(
                    category=node.category,
                    heading0=state.heading,
                    waypoints=((0.0, x0, y0),),
                    post_mode="linear",
                    post_velocity=(vx, vy),
                )
            plans.append(plan)
            continue

        isin, dist, quad = pred_triple
        x_t = strip_center.get(isin, x0)
        if dist is RelationCategory.UNSAFE_DISTANCE:
            sep = 1.5
        elif dist is RelationCategory.SAFE_DISTANCE:
            sep = stopping_distance(v_e) + 5.0
        else:
            sep = max(math.hypot(x0 - ego_x, y0 - ego_y0), 1.5)
        waypoints, ts, infeasible = _cut_plan(
            node.category, state, ego_x, ego_y0, v_e, x_t, sep, quad
        )
        any_infeasible = any_infeasible or infeasible
        post_mode = "park" if dist is not RelationCategory.SAFE_DISTANCE else "cruise"
        plans.append(
            AdversaryPlan(
                category=node.category,
                heading0=state.heading,
                waypoints=waypoints,
                post_mode=post_mode,
                post_velocity=(0.0, v_e),
                perturbed=True,
                infeasible=infeasible,
            )
        )

        # replay check: does the planned pose at sync time discretize back to
        # the prescribed relations against the nominal ego?
        x_s, y_s = waypoints[-1][1], waypoints[-1][2]
        nominal = AgentState(
            location=(ego_x, ego_y0 + v_e * ts),
            heading=ego.state.heading,
            velocity=(0.0, v_e),
        )
        planned = AgentState(location=(x_s, y_s), heading=state.heading)
        if isin is not None:
            prescribed += 1
            idx = layout.strip_index_at(x_s)
            if idx is not None and strip_ids[idx] == isin:
                matches += 1
        if dist is not None:
            prescribed += 1
            gap = math.hypot(x_s - nominal.location[0], y_s - nominal.location[1])
            if discretize_distance(gap, v_e) is dist:
                matches += 1
        if quad is not None:
            prescribed += 1
            angle = relative_angle(planned, nominal)
            if discretize_relative_position(angle) is quad:
                matches += 1

    from_rest = any(
        s.category is ActorCategory.SHOULDER for s in layout.strips
    )
    return ExecutableScenario(
        scenario_id=scenario_id,
        source_frame=regular.frame_index,
        ego_start=(ego_x, ego_y0),
        ego_target_speed=v_e,
        ego_from_rest=from_rest,
        plans=tuple(plans),
        statics=tuple(statics),
        infeasible=any_infeasible,
        fidelity=(matches, prescribed),
    )


# --- episode rollout -------------------------------------------------------


@dataclass(frozen=True)
class EpisodeResult:
    outcome: Outcome
    t_final: float
    max_ego_speed: float
    min_clearance: float
    gated_start: bool
    trace: tuple = ()


def _body(category):
    return BODY_SIZES[category]


def run_episode(
    scn: ExecutableScenario,
    profile: ControllerProfile,
    dt: float = SIM_STEP,
    horizon: float = HORIZON,
    record: bool = False,
) -> EpisodeResult:
    ego_x, ego_y = scn.ego_start
    v_target = scn.ego_target_speed
    v = 0.0 if scn.ego_from_rest else v_target
    started = not scn.ego_from_rest
    ego_len, ego_wid = _body(ActorCategory.EGO)

    def adversary_states(t):
        return [p.sample(t) for p in scn.plans]

    def radial(states):
        return [math.hypot(x - ego_x, y - ego_y) for x, y, _, _, _ in states]

    states0 = adversary_states(0.0)
    gated_start = scn.ego_from_rest and any(
        r < profile.hazard_range for r in radial(states0)
    )

    max_speed = v
    min_clear = math.inf
    near_miss = False
    collision = False
    trace = []
    steps = int(round(horizon / dt))
    t = 0.0
    for _ in range(steps):
        states = adversary_states(t)

        if not started:
            if all(r >= profile.hazard_range for r in radial(states)):
                started = True

        # nearest corridor hazard ahead, by surface gap
        hazard_gap = None
        for plan, (ax, ay, _, _, _) in zip(scn.plans, states):
            if abs(ax - ego_x) > EGO_CORRIDOR_HALF:
                continue
            dy = ay - ego_y
            if dy <= 0.0:
                continue
            gap = dy - (ego_len + _body(plan.category)[0]) / 2.0
            if hazard_gap is None or gap < hazard_gap:
                hazard_gap = gap

        if started:
            if profile.reactive:
                target_gap = max(STANDSTILL_GAP, v * profile.time_gap)
                if hazard_gap is None or hazard_gap > 1.5 * target_gap:
                    v = min(v + EGO_ACCEL * dt, v_target)
                elif hazard_gap < target_gap:
                    v = max(v - profile.brake_rate * dt, 0.0)
            else:
                if hazard_gap is not None and hazard_gap < BASIC_EMERGENCY_GAP:
                    v = max(v - profile.brake_rate * dt, 0.0)
                else:
                    v = min(v + EGO_ACCEL * dt, v_target)

        ego_y += v * dt
        t += dt
        max_speed = max(max_speed, v)

        ego_poly = None
        for plan, (ax, ay, _, _, ah) in zip(scn.plans, states):
            a_len, a_wid = _body(plan.category)
            reach = (
                math.hypot(ego_len, ego_wid) + math.hypot(a_len, a_wid)
            ) / 2.0
            if math.hypot(ax - ego_x, ay - ego_y) - reach > NEAR_MISS_CLEARANCE:
                continue
            if ego_poly is None:
                ego_poly = box_corners(ego_x, ego_y, 0.0, ego_len, ego_wid)
            a_poly = box_corners(ax, ay, ah, a_len, a_wid)
            clear = polygon_clearance(ego_poly, a_poly)
            min_clear = min(min_clear, clear)
            if clear <= NEAR_MISS_CLEARANCE:
                near_miss = True
            if clear == 0.0 and box_iou(ego_poly, a_poly) > COLLISION_IOU:
                collision = True
                break

        if record:
            trace.append(("ego", t, ego_x, ego_y, 0.0, v))
            for i, (ax, ay, avx, avy, ah) in enumerate(states):
                trace.append(
                    (f"adv{i}", t, ax, ay, ah, math.hypot(avx, avy))
                )
        if collision:
            break

    if collision:
        outcome = Outcome.COLLISION
    elif near_miss:
        outcome = Outcome.NEAR_MISS
    elif gated_start and max_speed < 0.5:
        outcome = Outcome.UNSAFE_MANEUVER
    else:
        outcome = Outcome.NO_COLLISION
    return EpisodeResult(
        outcome=outcome,
        t_final=t,
        max_ego_speed=max_speed,
        min_clearance=min_clear,
        gated_start=gated_start,
        trace=tuple(trace),
    )


def simulate_batch(executables, profiles=None, dt=SIM_STEP, horizon=HORIZON):
    """Outcomes for every executable under every profile."""
    chosen = profiles if profiles is not None else list(PROFILES.values())
    out = {}
    for profile in chosen:
        out[profile.name] = [
            run_episode(scn, profile, dt=dt, horizon=horizon)
            for scn in executables
        ]
    return out


def scr_report(results_by_profile) -> dict:
    """Percentage of each outcome per profile; every row sums to 100."""
    report = {}
    for name, results in results_by_profile.items():
        total = len(results)
        if total == 0:
            raise ValueError(f"no episodes for profile {name}")
        row = {}
        for outcome in Outcome:
            count = sum(1 for r in results if r.outcome is outcome)
            row[outcome.value] = 100.0 * count / total
        report[name] = row
    return report


def format_scr_table(report) -> str:
    outcomes = [o.value for o in Outcome]
    names = list(report)
    width = max(len(n) for n in names + ["Profile"]) + 2
    header = "Profile".ljust(width) + "".join(o.rjust(16) for o in outcomes)
    lines = [header]
    for name in names:
        row = report[name]
        lines.append(
            name.ljust(width)
            + "".join(f"{row[o]:16.1f}" for o in outcomes)
        )
    return "\n".join(lines)


def write_trace_csv(path, result: EpisodeResult) -> None:
    with open(path, "w") as fh:
        fh.write("agent,t,x,y,heading,speed\n")
        for agent, t, x, y, heading, speed in result.trace:
            fh.write(
                f"{agent},{t:.6f},{x:.6f},{y:.6f},{heading:.6f},{speed:.6f}\n"
            )
