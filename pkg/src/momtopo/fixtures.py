"""Ready-made objects: the two-link demo objects, a 3-link synthetic chain and
an analytically integrated free body.

Demo links are 1.0 kg uniform boxes of 0.30 x 0.10 x 0.05 m. Each terminal
link frame sits at its handle (the outer end of the box), so the center of
mass is offset 0.15 m along the link. The joint sits at the shared inner
face. Joints have damping 0.1 and static friction 0.1; the prismatic range is
0.15 m and the revolute range 95 degrees.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import yaml

from .exploration import SinusoidSpec, evaluate, mask_from_names
from .model import JointSpec, LinkSpec, ObjectSpec, Topology
from .spatial import SpatialInertia, Transform, box_inertia, quat_from_axis_angle
from .store import SCHEMA, TrialRecord

BOX_SIZE = (0.30, 0.10, 0.05)
LINK_MASS = 1.0
JOINT_DAMPING = 0.1
JOINT_FRICTION = 0.1
PRISMATIC_RANGE = 0.15
REVOLUTE_RANGE = math.radians(95.0)


@dataclass(frozen=True)
class Fixture:
    """An object plus its true topology and which wrench components excite it."""

    name: str
    spec: ObjectSpec
    topology: Topology
    motion_mask: int
    constrained_mask: int
    initial_position: tuple | None = None


def _box_link(name, com_x, mass=LINK_MASS, size=BOX_SIZE):
    return LinkSpec(name, SpatialInertia.from_com(mass, (com_x, 0.0, 0.0), box_inertia(mass, size)))


def _two_link(name, axis, limits, damping=JOINT_DAMPING, friction=JOINT_FRICTION):
    length = BOX_SIZE[0]
    links = (_box_link("base", 0.5 * length), _box_link("free", -0.5 * length))
    joint = JointSpec(
        index=1,
        axis=axis,
        parent_frame=Transform.from_translation((length, 0.0, 0.0)),
        child_frame=Transform.from_translation((-length, 0.0, 0.0)),
        limits=limits,
        damping=damping,
        static_friction=friction,
    )
    return ObjectSpec(links, (joint,), anchored="base", name=name)


def revolute_demo(damping=JOINT_DAMPING, friction=JOINT_FRICTION, limits=(0.0, REVOLUTE_RANGE)):
    """Two links hinged about the vertical axis (gravity does no work on the joint)."""
    spec = _two_link("revolute-demo", (0.0, 0.0, 1.0), limits, damping, friction)
    return Fixture(
        "revolute-demo",
        spec,
        Topology.parse("R"),
        motion_mask=mask_from_names(["fy", "tz"]),
        constrained_mask=mask_from_names(["fx", "fz", "tx", "ty"]),
    )


def prismatic_demo(damping=JOINT_DAMPING, friction=JOINT_FRICTION, limits=(0.0, PRISMATIC_RANGE)):
    """Two links sliding along their common horizontal long axis."""
    spec = _two_link("prismatic-demo", (1.0, 0.0, 0.0), limits, damping, friction)
    return Fixture(
        "prismatic-demo",
        spec,
        Topology.parse("P"),
        motion_mask=mask_from_names(["fx"]),
        constrained_mask=mask_from_names(["fy", "fz", "tx", "ty", "tz"]),
    )


DEMOS = {"revolute-demo": revolute_demo, "prismatic-demo": prismatic_demo}


def chain3(topology, damping=0.1):
    """Three-link chain on a horizontal table, frictionless joints.

    Revolute joints turn about the vertical axis; the first prismatic joint
    slides along x and the second along y, so gravity does no work on either
    joint and two prismatic joints never share an axis. Limits are wide enough
    that the short synthetic excitation used in the tests never reaches them.
    """
    topology = Topology.parse(topology) if isinstance(topology, str) else topology
    length = BOX_SIZE[0]
    links = (
        _box_link("base", 0.5 * length),
        _box_link("middle", 0.5 * length, mass=1.5),
        _box_link("tip", -0.5 * length, mass=0.8),
    )
    prismatic_axes = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0))
    joints = []
    for index in (1, 2):
        model = topology.models[index - 1]
        revolute = model.value == "R"
        joints.append(
            JointSpec(
                index=index,
                axis=(0.0, 0.0, 1.0) if revolute else prismatic_axes[index - 1],
                parent_frame=Transform.from_translation((length, 0.0, 0.0)),
                child_frame=Transform.from_translation((0.0, 0.0, 0.0) if index == 1 else (-length, 0.0, 0.0)),
                limits=(-1.5, 1.5) if revolute else (-0.5, 0.5),
                damping=damping,
                static_friction=0.0,
            )
        )
    spec = ObjectSpec(links, tuple(joints), anchored="base", name=f"chain3-{topology}")
    return Fixture(f"chain3-{topology}", spec, topology, motion_mask=0b111111, constrained_mask=0)


CHAIN3_SIGNAL = SinusoidSpec(
    amplitude=[0.05, -0.04, 0.05, 0.03, -0.05, 0.04],
    frequency=[0.3, 0.25, 0.28, 0.22, 0.3, 0.26],
    mask=0b111111,
)


def load_fixture(path):
    """Custom fixture from a YAML/JSON file.

    Top-level keys: ``object`` (see :meth:`ObjectSpec.from_dict`),
    ``true_topology`` (e.g. ``"R"``), ``motion_components`` and
    ``constrained_components`` (lists such as ``["fx", "tz"]``) and optional
    ``initial_position``.
    """
    with open(path, encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict) or "object" not in data:
        raise ValueError(f"{path}: fixture file needs an 'object' section")
    spec = ObjectSpec.from_dict(data["object"])
    topology = Topology.parse(str(data.get("true_topology", "")))
    if len(topology) != spec.n_joints:
        raise ValueError(f"{path}: true_topology must name one model per joint")
    init = data.get("initial_position")
    return Fixture(
        spec.name,
        spec,
        topology,
        motion_mask=mask_from_names(data.get("motion_components", [])),
        constrained_mask=mask_from_names(data.get("constrained_components", [])),
        initial_position=tuple(init) if init is not None else None,
    )


def get_fixture(name):
    if name in DEMOS:
        return DEMOS[name]()
    return load_fixture(name)


def free_body(mass=1.0, size=BOX_SIZE):
    """Single unanchored link with its frame at the center of mass."""
    link = LinkSpec("body", SpatialInertia.from_com(mass, (0.0, 0.0, 0.0), box_inertia(mass, size)))
    return ObjectSpec((link,), (), anchored=None, name="free-body")


def free_body_trial(duration=5.0, dt=1e-3, gravity=(0.0, 0.0, -9.81), mass=1.0):
    """Closed-form trajectory of a free box under a sinusoidal vertical force and yaw torque.

    The force acts along the body z axis and the torque about it; with the
    rotation confined to z, both stay aligned with the inertial z axis and
    the motion integrates exactly. The body also drifts horizontally and
    spins with a nonzero initial rate.
    """
    spec = free_body(mass)
    Izz = spec.links[0].inertia.inertia_com[2, 2]
    signal = SinusoidSpec([0, 0, 0.2, 0, 0, 0.15], [0, 0, 0.25, 0, 0, 0.3], mask_from_names(["fz", "tz"]))
    Af, wf = 0.2, 2 * math.pi * 0.25
    At, wt = 0.15, 2 * math.pi * 0.3
    p0 = np.array([0.2, -0.1, 1.0])
    v0 = np.array([0.1, 0.05, 0.0])
    yaw0, yawd0 = 0.3, 0.2
    g = np.asarray(gravity, dtype=float)

    t = np.arange(int(round(duration / dt))) * dt
    p = p0 + np.outer(t, v0) + 0.5 * np.outer(t**2, g)
    p[:, 2] += Af / (mass * wf) * (t - np.sin(wf * t) / wf)
    yaw = yaw0 + yawd0 * t + At / (Izz * wt) * (t - np.sin(wt * t) / wt)
    q = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw)
    wrench = evaluate(signal, t)
    meta = {
        "schema": SCHEMA,
        "dt": dt,
        "duration": duration,
        "seed": 0,
        "gravity": list(map(float, g)),
        "object": spec.to_dict(),
        "object_hash": spec.digest(),
        "true_topology": "",
        "signal": signal.to_dict(),
    }
    record = TrialRecord(
        meta,
        t=t,
        positions=p[:, None, :],
        quaternions=q[:, None, :],
        f_left=np.zeros((t.size, 6)),
        f_right=-wrench,
        moving=np.ones(t.size, dtype=bool),
    )
    return spec, record
