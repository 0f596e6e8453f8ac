"""Momentum-based topology selection from recorded trials.

For every candidate topology the recorded link motion is re-expressed as if
each joint were of the hypothesized type, the resulting system momentum is
differentiated numerically, and its mismatch with the measured net wrench is
summed over the trial. The candidate with the smallest mismatch wins.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .model import JointModel, ObjectSpec, Topology, check_topology, enumerate_topologies, motion_subspace
from .spatial import (
    Transform,
    apply_force_transform,
    apply_motion_transform,
    body_twists,
    quat_to_rotation,
    so3_log,
    spatial_inertia_matrix,
)
from .store import TrialRecord, TrialSample

DEFAULT_GRAVITY = (0.0, 0.0, -9.81)


@dataclass(frozen=True)
class EstimatorConfig:
    smoothing_window: int = 5
    eps_abs: float = 1e-6
    separation_threshold: float = 0.1
    min_motion_fraction: float = 0.05
    trim: int = 2
    weights: tuple | None = None

    def __post_init__(self):
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise ValueError("smoothing window must be a positive odd number of samples")
        if self.weights is not None and len(self.weights) != 6:
            raise ValueError("residual weights must have 6 entries")


@dataclass(frozen=True)
class HypothesisError:
    topology: Topology
    error: float
    per_sample_residuals: np.ndarray = field(repr=False)

    @property
    def mean_residual(self):
        return float(np.mean(self.per_sample_residuals))


@dataclass(frozen=True)
class EstimationReport:
    errors: tuple
    selected: Topology
    inconclusive: bool
    motion_fraction: float

    def error_of(self, topology):
        topology = Topology.parse(topology) if isinstance(topology, str) else topology
        for e in self.errors:
            if e.topology == topology:
                return e.error
        raise KeyError(str(topology))

    def to_dict(self):
        return {
            "errors": {str(e.topology): e.error for e in self.errors},
            "selected": str(self.selected),
            "inconclusive": self.inconclusive,
            "motion_fraction": self.motion_fraction,
        }


def record_object(record: TrialRecord) -> ObjectSpec:
    """The object description embedded in a trial's metadata."""
    return ObjectSpec.from_dict(record.metadata["object"])


def record_gravity(record: TrialRecord):
    return np.asarray(record.metadata.get("gravity", DEFAULT_GRAVITY), dtype=float)


# -- net wrench -------------------------------------------------------------


def net_wrenches(R, p, f_left, f_right, spec: ObjectSpec, gravity=DEFAULT_GRAVITY):
    """Inertial-frame net wrench on the object for a batch of samples.

    ``R``/``p`` are link rotations ``(N, L, 3, 3)`` and positions ``(N, L, 3)``;
    the terminal readings are wrenches the object exerts on the grasp, hence
    the minus signs.
    """
    g = np.asarray(gravity, dtype=float)
    W = -apply_force_transform(R[:, 0], p[:, 0], f_left) - apply_force_transform(R[:, -1], p[:, -1], f_right)
    for i, link in enumerate(spec.links):
        m = link.inertia.mass
        com = p[:, i] + R[:, i] @ link.inertia.com
        W[:, :3] += m * g
        W[:, 3:] += np.cross(com, m * g)
    return W


def net_wrench(sample: TrialSample, spec: ObjectSpec, gravity=DEFAULT_GRAVITY):
    """Net wrench for a single sample."""
    R = quat_to_rotation(np.array([pose.quaternion for pose in sample.poses]))[None]
    p = np.array([pose.position for pose in sample.poses])[None]
    return net_wrenches(R, p, np.asarray(sample.f_left)[None], np.asarray(sample.f_right)[None], spec, gravity)[0]


# -- twists and joint rates -------------------------------------------------


def measured_twists(R, p, dt):
    """Body twists of every link at every sample, ``(N, L, 6)``.

    Interior samples use the symmetric pair ``(k-1, k+1)``; the two ends fall
    back to one-sided differences.
    """
    N = R.shape[0]
    if N < 2:
        raise ValueError("need at least two samples to differentiate poses")
    v = np.empty(R.shape[:2] + (6,))
    if N > 2:
        v[1:-1] = body_twists(R[:-2], p[:-2], R[2:], p[2:], 2.0 * dt)
    v[0] = body_twists(R[0], p[0], R[1], p[1], dt)
    v[-1] = body_twists(R[-2], p[-2], R[-1], p[-1], dt)
    return v


def _relative(R_parent, p_parent, R_child, p_child):
    """Rotation and translation of the parent frame seen from the child frame."""
    Rct = np.swapaxes(R_child, -1, -2)
    return Rct @ R_parent, np.einsum("...ij,...j->...i", Rct, p_parent - p_child)


def _joint_rates(R_parent, p_parent, R_child, p_child, v_parent, v_child, joint, model):
    R_cp, p_cp = _relative(R_parent, p_parent, R_child, p_child)
    v_rel = v_child - apply_motion_transform(R_cp, p_cp, v_parent)
    joint_in_child = joint.child_frame
    Rj = joint_in_child.rotation.T
    v_joint = apply_motion_transform(Rj, -Rj @ joint_in_child.translation, v_rel)
    S = motion_subspace(model, joint.axis)
    return v_joint @ S / (S @ S)


def project_joint_rate(parent_pose, child_pose, parent_twist, child_twist, joint, model):
    """Least-squares joint rate of ``model`` explaining the measured relative twist.

    Twists are body twists of the two links, each in its own frame.
    """
    Rp = quat_to_rotation(parent_pose.quaternion)
    Rc = quat_to_rotation(child_pose.quaternion)
    return float(
        _joint_rates(
            Rp, parent_pose.position, Rc, child_pose.position,
            np.asarray(parent_twist, dtype=float), np.asarray(child_twist, dtype=float), joint, model,
        )
    )


def project_joint_position(parent_pose, child_pose, joint, model):
    """Joint coordinate of ``model`` that best explains the relative placement of two links.

    Exact (up to rounding) when the links really are related by that joint
    model; otherwise the component of the relative motion along the axis.
    """
    H_parent = Transform(quat_to_rotation(parent_pose.quaternion), parent_pose.position)
    H_child = Transform(quat_to_rotation(child_pose.quaternion), child_pose.position)
    rel = joint.parent_frame.inverse() @ H_parent.inverse() @ H_child @ joint.child_frame
    if JointModel.parse(model) is JointModel.REVOLUTE:
        return float(so3_log(rel.rotation) @ joint.axis)
    return float(rel.translation @ joint.axis)


def _hypothesis_twists(R, p, v_meas, spec, topology, joint_rates=None):
    """Link twists re-built from the base link's measured twist and hypothesized joint rates."""
    v = np.empty_like(v_meas)
    v[..., 0, :] = v_meas[..., 0, :]
    for i, (joint, model) in enumerate(zip(spec.joints, topology.models)):
        if joint_rates is None:
            qd = _joint_rates(R[..., i, :, :], p[..., i, :], R[..., i + 1, :, :], p[..., i + 1, :],
                              v_meas[..., i, :], v_meas[..., i + 1, :], joint, model)
        else:
            qd = np.asarray(joint_rates[..., i], dtype=float)
        R_cp, p_cp = _relative(R[..., i, :, :], p[..., i, :], R[..., i + 1, :, :], p[..., i + 1, :])
        C = joint.child_frame
        S_child = apply_motion_transform(C.rotation, C.translation, motion_subspace(model, joint.axis))
        v[..., i + 1, :] = apply_motion_transform(R_cp, p_cp, v[..., i, :]) + np.multiply.outer(qd, S_child)
    return v


def _system_momentum(R, p, v, spec):
    h = np.zeros(v.shape[:-2] + (6,))
    for i, link in enumerate(spec.links):
        h_body = v[..., i, :] @ spatial_inertia_matrix(link.inertia).T
        h += apply_force_transform(R[..., i, :, :], p[..., i, :], h_body)
    return h


def hypothesized_momentum(sample: TrialSample, spec, topology, joint_rates, base_twist=None):
    """Inertial-frame momentum of the object if it moved with ``joint_rates`` under ``topology``.

    The recursion starts from ``base_twist`` (zero for an anchored object).
    """
    check_topology(spec, topology)
    R = quat_to_rotation(np.array([pose.quaternion for pose in sample.poses]))
    p = np.array([pose.position for pose in sample.poses])
    v_meas = np.zeros((spec.n_links, 6))
    if base_twist is not None:
        v_meas[0] = base_twist
    v = _hypothesis_twists(R, p, v_meas, spec, topology, np.asarray(joint_rates, dtype=float).reshape(-1))
    return _system_momentum(R, p, v, spec)


# -- differentiation ---------------------------------------------------------


def moving_average(x, window):
    """Centered moving average along axis 0; the window shrinks symmetrically at the ends."""
    x = np.asarray(x, dtype=float)
    if window == 1:
        return x.copy()
    r = window // 2
    N = x.shape[0]
    csum = np.concatenate([np.zeros((1,) + x.shape[1:]), np.cumsum(x, axis=0)])
    k = np.arange(N)
    rad = np.minimum(np.minimum(k, N - 1 - k), r)
    shape = (N,) + (1,) * (x.ndim - 1)
    return (csum[k + rad + 1] - csum[k - rad]) / (2 * rad + 1).reshape(shape)


def momentum_rate(t, h, window=5):
    """Time derivative of a uniformly sampled momentum series.

    Optional centered smoothing, then central differences inside and
    second-order one-sided differences at both ends.
    """
    t = np.asarray(t, dtype=float)
    h = np.asarray(h, dtype=float)
    if t.shape[0] < 3 or h.shape[0] != t.shape[0]:
        raise ValueError("momentum rate needs at least 3 samples")
    steps = np.diff(t)
    dt = steps.mean()
    if np.any(np.abs(steps - dt) > 1e-9):
        raise ValueError("momentum series must be uniformly sampled")
    if window < 1 or window % 2 == 0:
        raise ValueError("smoothing window must be a positive odd integer")
    return np.gradient(moving_average(h, window), dt, axis=0, edge_order=2)


# -- hypothesis errors --------------------------------------------------------


class TrialAnalysis:
    """Per-trial quantities shared by every candidate topology."""

    def __init__(self, record: TrialRecord, spec: ObjectSpec | None = None, config: EstimatorConfig = EstimatorConfig()):
        self.record = record
        self.spec = spec if spec is not None else record_object(record)
        self.config = config
        if self.spec.n_links != record.n_links:
            raise ValueError(f"trial has {record.n_links} links, object has {self.spec.n_links}")
        if len(record) < 2 * config.trim + 1 or len(record) < 3:
            raise ValueError("trial too short for the configured trimming")

    @cached_property
    def R(self):
        return self.record.rotations

    @property
    def p(self):
        return self.record.positions

    @cached_property
    def twists(self):
        return measured_twists(self.R, self.p, self.record.dt)

    @cached_property
    def wrench(self):
        r = self.record
        return net_wrenches(self.R, self.p, r.f_left, r.f_right, self.spec, record_gravity(r))

    @property
    def aligned(self):
        trim = self.config.trim
        return slice(trim, len(self.record) - trim)

    def momentum(self, topology):
        check_topology(self.spec, topology)
        v = _hypothesis_twists(self.R, self.p, self.twists, self.spec, topology)
        return _system_momentum(self.R, self.p, v, self.spec)

    def momentum_rate(self, topology):
        return momentum_rate(self.record.t, self.momentum(topology), self.config.smoothing_window)

    def residuals(self, topology):
        diff = (self.wrench - self.momentum_rate(topology))[self.aligned]
        if self.config.weights is not None:
            diff = diff * np.asarray(self.config.weights, dtype=float)
        return np.linalg.norm(diff, axis=1)

    def hypothesis_error(self, topology):
        res = self.residuals(topology)
        return HypothesisError(topology, float(np.sum(res)), res)

    def closure_ratio(self, topology):
        """Mean residual divided by the mean net-wrench magnitude over aligned samples."""
        res = self.residuals(topology)
        return float(np.mean(res) / (np.mean(np.linalg.norm(self.wrench[self.aligned], axis=1)) + 1e-12))


def hypothesis_error(record, spec, topology, config: EstimatorConfig = EstimatorConfig()):
    """Summed residual norm between net wrench and hypothesized momentum rate."""
    return TrialAnalysis(record, spec, config).hypothesis_error(topology)


def select_topology(record, spec=None, candidates=None, config: EstimatorConfig = EstimatorConfig()):
    """Evaluate every candidate and pick the smallest hypothesis error.

    Ties go to the lexicographically smallest topology (R before P). The
    report is flagged inconclusive when the errors are not separated by at
    least ``separation_threshold`` (relative) or the object barely moved.
    """
    analysis = TrialAnalysis(record, spec, config)
    if candidates is None:
        candidates = enumerate_topologies(analysis.spec.n_joints) if analysis.spec.n_joints else [Topology(())]
    candidates = list(candidates)
    if not candidates:
        raise ValueError("no candidate topologies")
    errors = tuple(analysis.hypothesis_error(c) for c in candidates)
    best = min(errors, key=lambda e: (e.error, e.topology.sort_key()))
    values = [e.error for e in errors]
    hi, lo = max(values), min(values)
    separation = (hi - lo) / max(hi, config.eps_abs)
    motion = record.motion_fraction
    inconclusive = bool(separation < config.separation_threshold or motion < config.min_motion_fraction)
    return EstimationReport(errors, best.topology, inconclusive, motion)
