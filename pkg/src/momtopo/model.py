"""Articulated object description: links, joints and candidate topologies."""
from __future__ import annotations

import enum
import hashlib
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import JointLimitError
from .spatial import (
    Pose,
    SpatialInertia,
    Transform,
    homogeneous_to_pose,
    quat_to_rotation,
    rotation_to_quat,
    so3_exp,
)

MAX_JOINTS = 20
HANDLE_MASS = 1e-6


class JointModel(enum.Enum):
    REVOLUTE = "R"
    PRISMATIC = "P"

    @classmethod
    def parse(cls, value):
        if isinstance(value, JointModel):
            return value
        key = str(value).strip().upper()
        aliases = {"R": cls.REVOLUTE, "REVOLUTE": cls.REVOLUTE, "P": cls.PRISMATIC, "PRISMATIC": cls.PRISMATIC}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown joint model {value!r}") from None

    def __lt__(self, other):
        order = {"R": 0, "P": 1}
        return order[self.value] < order[other.value]


def _unit_axis(axis):
    axis = np.array(axis, dtype=float).reshape(3)
    if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
        raise ValueError(f"joint axis must be unit length, got norm {np.linalg.norm(axis)!r}")
    return axis


@dataclass(frozen=True)
class JointSpec:
    """Joint ``index`` between link ``index - 1`` (parent) and link ``index`` (child).

    ``parent_frame`` places the joint frame in the parent link frame and
    ``child_frame`` places it in the child link frame; at zero joint position
    the two joint frames coincide. The axis is given in the joint frame.
    """

    index: int
    axis: np.ndarray
    parent_frame: Transform = field(default_factory=Transform.identity)
    child_frame: Transform = field(default_factory=Transform.identity)
    limits: tuple = (-np.inf, np.inf)
    damping: float = 0.0
    static_friction: float = 0.0

    def __post_init__(self):
        if int(self.index) < 1:
            raise ValueError("joint index must be >= 1")
        axis = _unit_axis(self.axis)
        axis.flags.writeable = False
        object.__setattr__(self, "axis", axis)
        lo, hi = (float(x) for x in self.limits)
        if not lo < hi:
            raise ValueError(f"joint {self.index}: lower limit must be below upper limit")
        object.__setattr__(self, "limits", (lo, hi))
        if self.damping < 0 or self.static_friction < 0:
            raise ValueError(f"joint {self.index}: damping and friction must be non-negative")


@dataclass(frozen=True)
class LinkSpec:
    name: str
    inertia: SpatialInertia
    is_handle: bool = False

    def __post_init__(self):
        if self.is_handle and self.inertia.mass > HANDLE_MASS:
            raise ValueError(f"handle link {self.name!r} must be massless (<= {HANDLE_MASS} kg)")


@dataclass(frozen=True)
class Topology:
    """One articulation model per joint, ordered by joint index."""

    pairs: tuple

    def __post_init__(self):
        pairs = tuple((int(i), JointModel.parse(m)) for i, m in self.pairs)
        indices = [i for i, _ in pairs]
        if sorted(indices) != list(range(1, len(pairs) + 1)):
            raise ValueError("topology joint indices must be exactly 1..n")
        object.__setattr__(self, "pairs", tuple(sorted(pairs)))

    @classmethod
    def from_models(cls, models):
        return cls(tuple((i + 1, m) for i, m in enumerate(models)))

    @classmethod
    def parse(cls, text):
        """Parse the compact form, e.g. ``"RP"``; the empty string is the rigid body."""
        return cls.from_models(list(text.strip()))

    @property
    def models(self):
        return tuple(m for _, m in self.pairs)

    def __len__(self):
        return len(self.pairs)

    def __str__(self):
        return "".join(m.value for m in self.models)

    def label(self):
        return "{" + ",".join(f"{{{i},{m.value}}}" for i, m in self.pairs) + "}"

    def sort_key(self):
        return tuple(0 if m is JointModel.REVOLUTE else 1 for m in self.models)


@dataclass(frozen=True)
class ObjectSpec:
    """Serial chain of links; ``joints[i]`` connects ``links[i]`` to ``links[i + 1]``.

    ``anchored`` names the terminal link welded to the world at ``base_pose``;
    ``None`` describes a free-floating object (only meaningful for estimation).
    """

    links: tuple
    joints: tuple
    anchored: str | None = None
    base_pose: Transform = field(default_factory=Transform.identity)
    name: str = "object"

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "joints", tuple(self.joints))
        if not self.links:
            raise ValueError("object needs at least one link")
        if len(self.joints) != len(self.links) - 1:
            raise ValueError("a serial chain of n+1 links needs exactly n joints")
        for k, joint in enumerate(self.joints):
            if joint.index != k + 1:
                raise ValueError("joints must be listed in index order 1..n")
        names = [link.name for link in self.links]
        if len(set(names)) != len(names):
            raise ValueError("link names must be unique")
        if self.anchored is not None and self.anchored != names[0]:
            raise ValueError("the anchored terminal must be the first link of the chain")
        if len(self.joints) > MAX_JOINTS:
            raise ValueError(f"at most {MAX_JOINTS} joints are supported")

    @property
    def n_joints(self):
        return len(self.joints)

    @property
    def n_links(self):
        return len(self.links)

    @property
    def terminals(self):
        return self.links[0].name, self.links[-1].name

    def scaled(self, k):
        """Copy with every mass and inertia multiplied by ``k``."""
        links = tuple(LinkSpec(l.name, l.inertia.scaled(k), l.is_handle) for l in self.links)
        return ObjectSpec(links, self.joints, self.anchored, self.base_pose, self.name)

    def to_dict(self):
        def tf(t):
            return {"position": t.translation.tolist(), "quaternion": rotation_to_quat(t.rotation).tolist()}

        return {
            "name": self.name,
            "anchored": self.anchored,
            "base_pose": tf(self.base_pose),
            "links": [
                {
                    "name": l.name,
                    "mass": l.inertia.mass,
                    "com": l.inertia.com.tolist(),
                    "inertia": l.inertia.rotational_inertia.tolist(),
                    "handle": l.is_handle,
                }
                for l in self.links
            ],
            "joints": [
                {
                    "index": j.index,
                    "axis": j.axis.tolist(),
                    "parent_frame": tf(j.parent_frame),
                    "child_frame": tf(j.child_frame),
                    "limits": list(j.limits),
                    "damping": j.damping,
                    "static_friction": j.static_friction,
                }
                for j in self.joints
            ],
        }

    @classmethod
    def from_dict(cls, data):
        """Inverse of :meth:`to_dict`.

        Link inertia may be given about the frame origin (``inertia``), about
        the center of mass (``inertia_com``) or as a uniform ``box`` size.
        """

        def tf(d):
            if d is None:
                return Transform.identity()
            q = d.get("quaternion", [1.0, 0.0, 0.0, 0.0])
            return Transform(quat_to_rotation(q), d.get("position", [0.0, 0.0, 0.0]))

        links = []
        for l in data["links"]:
            mass = float(l["mass"])
            com = l.get("com", [0.0, 0.0, 0.0])
            if "inertia" in l:
                inertia = SpatialInertia(mass, com, l["inertia"])
            elif "inertia_com" in l:
                inertia = SpatialInertia.from_com(mass, com, l["inertia_com"])
            elif "box" in l:
                from .spatial import box_inertia

                inertia = SpatialInertia.from_com(mass, com, box_inertia(mass, l["box"]))
            else:
                raise ValueError(f"link {l.get('name')!r} has no inertia")
            links.append(LinkSpec(str(l["name"]), inertia, bool(l.get("handle", False))))
        joints = []
        for j in data.get("joints", []):
            limits = j.get("limits", [-np.inf, np.inf])
            joints.append(
                JointSpec(
                    index=int(j["index"]),
                    axis=j["axis"],
                    parent_frame=tf(j.get("parent_frame")),
                    child_frame=tf(j.get("child_frame")),
                    limits=(float(limits[0]), float(limits[1])),
                    damping=float(j.get("damping", 0.0)),
                    static_friction=float(j.get("static_friction", 0.0)),
                )
            )
        return cls(
            links=tuple(links),
            joints=tuple(joints),
            anchored=data.get("anchored"),
            base_pose=tf(data.get("base_pose")),
            name=str(data.get("name", "object")),
        )

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, allow_nan=True).encode()
        return hashlib.sha256(blob).hexdigest()


def motion_subspace(model, axis):
    """Joint motion subspace column in its joint frame, linear components first."""
    model = JointModel.parse(model)
    axis = _unit_axis(axis)
    S = np.zeros(6)
    if model is JointModel.REVOLUTE:
        S[3:] = axis
    else:
        S[:3] = axis
    return S


def enumerate_topologies(n):
    """All ``2**n`` topologies, R before P, joint 1 varying slowest."""
    if not 1 <= int(n) <= MAX_JOINTS:
        raise ValueError(f"joint count must be in [1, {MAX_JOINTS}]")
    return [Topology.from_models(models) for models in itertools.product("RP", repeat=int(n))]


def joint_motion(model, axis, q):
    """Transform of the child-side joint frame relative to the parent-side one."""
    model = JointModel.parse(model)
    axis = np.asarray(axis, dtype=float)
    if model is JointModel.REVOLUTE:
        return Transform(so3_exp(axis * q), np.zeros(3))
    return Transform(np.eye(3), axis * q)


def check_topology(spec: ObjectSpec, topology: Topology):
    if len(topology) != spec.n_joints:
        raise ValueError(f"topology has {len(topology)} joints, object has {spec.n_joints}")


def link_transforms(spec: ObjectSpec, topology: Topology, q, check_limits=True):
    """World transform of every link frame for joint positions ``q``."""
    check_topology(spec, topology)
    q = np.asarray(q, dtype=float).reshape(spec.n_joints)
    out = [spec.base_pose]
    for joint, model, qi in zip(spec.joints, topology.models, q):
        lo, hi = joint.limits
        if check_limits and not lo <= qi <= hi:
            raise JointLimitError(f"joint {joint.index} position {qi!r} outside [{lo}, {hi}]")
        out.append(out[-1] @ joint.parent_frame @ joint_motion(model, joint.axis, qi) @ joint.child_frame.inverse())
    return out


def forward_kinematics(spec: ObjectSpec, topology: Topology, q):
    """Poses of all link frames in the inertial frame, anchored link first."""
    return [homogeneous_to_pose(t) for t in link_transforms(spec, topology, q)]


def link_pose_arrays(spec: ObjectSpec, topology: Topology, q_series):
    """Vectorized forward kinematics over a trajectory.

    Returns rotations ``(N, L, 3, 3)`` and positions ``(N, L, 3)``.
    """
    check_topology(spec, topology)
    q_series = np.asarray(q_series, dtype=float).reshape(-1, spec.n_joints)
    N = q_series.shape[0]
    R = np.empty((N, spec.n_links, 3, 3))
    p = np.empty((N, spec.n_links, 3))
    R[:, 0] = spec.base_pose.rotation
    p[:, 0] = spec.base_pose.translation
    for i, (joint, model) in enumerate(zip(spec.joints, topology.models)):
        Rj = R[:, i] @ joint.parent_frame.rotation
        pj = p[:, i] + R[:, i] @ joint.parent_frame.translation
        qi = q_series[:, i]
        if model is JointModel.REVOLUTE:
            Rm = so3_exp(qi[:, None] * joint.axis)
            pm = np.zeros((N, 3))
        else:
            Rm = np.broadcast_to(np.eye(3), (N, 3, 3))
            pm = qi[:, None] * joint.axis
        Rjm = Rj @ Rm
        pjm = pj + np.einsum("nij,nj->ni", Rj, pm)
        cinv = joint.child_frame.inverse()
        R[:, i + 1] = Rjm @ cinv.rotation
        p[:, i + 1] = pjm + Rjm @ cinv.translation
    return R, p


def pose_from_arrays(R, p):
    return Pose(p, rotation_to_quat(R))
