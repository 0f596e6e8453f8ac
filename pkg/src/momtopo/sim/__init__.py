"""Fixed-step forward dynamics of an anchored serial chain.

The integrator kernel is compiled (``_chain``, Cython) when available and
falls back to the pure-Python ``_chain_py``. Set ``MOMTOPO_PURE_PYTHON=1`` to
force the fallback.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError
from ..exploration import SinusoidSpec, evaluate
from ..model import JointModel, ObjectSpec, Topology, check_topology, link_pose_arrays
from ..spatial import apply_force_transform, rotation_to_quat
from ..store import SCHEMA, TrialRecord
from . import _chain_py

try:
    from . import _chain as _chain_c
except ImportError:  # extension not built
    _chain_c = None

BACKENDS = {"python": _chain_py}
if _chain_c is not None:
    BACKENDS["cython"] = _chain_c

if os.environ.get("MOMTOPO_PURE_PYTHON") or _chain_c is None:
    BACKEND = "python"
else:
    BACKEND = "cython"


def get_backend(name=None):
    name = name or BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"simulator backend {name!r} is not available (have {sorted(BACKENDS)})") from None


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.001
    gravity: tuple = (0.0, 0.0, -9.81)
    duration: float = 5.0
    seed: int = 0
    motion_threshold: float = 1e-5
    stiction_velocity: float = 1e-4

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.duration >= self.dt:
            raise ValueError("duration must be at least one step")
        object.__setattr__(self, "gravity", tuple(float(g) for g in self.gravity))

    @property
    def n_steps(self):
        return int(round(self.duration / self.dt))


@dataclass(frozen=True)
class JointState:
    q: float
    qd: float = 0.0


@dataclass(frozen=True)
class SimState:
    t: float
    joints: tuple
    applied_wrench: np.ndarray = field(default_factory=lambda: np.zeros(6))

    @classmethod
    def at_rest(cls, q, t=0.0):
        return cls(t, tuple(JointState(float(x), 0.0) for x in np.atleast_1d(q)))

    @property
    def q(self):
        return np.array([j.q for j in self.joints], dtype=float)

    @property
    def qd(self):
        return np.array([j.qd for j in self.joints], dtype=float)


def pack_chain(spec: ObjectSpec, topology: Topology, cfg: SimConfig):
    """Flatten the object description into the arrays the kernels consume."""
    check_topology(spec, topology)
    if spec.anchored is None:
        raise ValueError("the simulator needs an anchored terminal link")
    n = spec.n_joints
    cinv = [j.child_frame.inverse() for j in spec.joints]
    return {
        "kind": np.array([0 if m is JointModel.REVOLUTE else 1 for m in topology.models], dtype=np.int_),
        "axis": np.array([j.axis for j in spec.joints]).reshape(n, 3),
        "pR": np.array([j.parent_frame.rotation for j in spec.joints]).reshape(n, 3, 3),
        "pp": np.array([j.parent_frame.translation for j in spec.joints]).reshape(n, 3),
        "cR": np.array([c.rotation for c in cinv]).reshape(n, 3, 3),
        "cp": np.array([c.translation for c in cinv]).reshape(n, 3),
        "lo": np.array([j.limits[0] for j in spec.joints], dtype=float),
        "hi": np.array([j.limits[1] for j in spec.joints], dtype=float),
        "damping": np.array([j.damping for j in spec.joints], dtype=float),
        "friction": np.array([j.static_friction for j in spec.joints], dtype=float),
        "base_R": np.array(spec.base_pose.rotation),
        "base_p": np.array(spec.base_pose.translation),
        "mass": np.array([l.inertia.mass for l in spec.links]),
        "com": np.array([l.inertia.com for l in spec.links]),
        "inertia_com": np.array([l.inertia.inertia_com for l in spec.links]),
        "gravity": np.array(cfg.gravity, dtype=float),
        "stiction_velocity": float(cfg.stiction_velocity),
    }


@dataclass
class Trajectory:
    """Raw integrator output: ``q``/``qd`` have one more row than ``qdd``/``reaction``."""

    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    reaction: np.ndarray
    wrench: np.ndarray


def integrate(spec, topology, q0, qd0, wrench, cfg: SimConfig, backend=None):
    """Integrate ``len(wrench)`` steps from ``(q0, qd0)``.

    ``wrench[k]`` is the body-frame wrench applied to the free terminal link
    during step ``k``. ``reaction[k]`` is the inertial-frame wrench the anchor
    exerts on the object during that step, about the inertial origin.
    """
    ch = pack_chain(spec, topology, cfg)
    n = spec.n_joints
    q0 = np.array(q0, dtype=float).reshape(n)
    qd0 = np.array(qd0, dtype=float).reshape(n)
    lo, hi = ch["lo"], ch["hi"]
    if np.any(q0 < lo) or np.any(q0 > hi):
        raise ValueError("initial joint positions violate limits")
    wrench = np.ascontiguousarray(np.asarray(wrench, dtype=float).reshape(-1, 6))
    q, qd, qdd, reaction, status = get_backend(backend).integrate(ch, q0, qd0, wrench, float(cfg.dt))
    if status >= 0:
        raise DivergenceError(status)
    return Trajectory(q, qd, qdd, reaction, wrench)


def generalized_dynamics_step(spec, topology, state: SimState, external_wrench, cfg: SimConfig, backend=None):
    """Advance ``state`` by one step of ``cfg.dt`` under ``external_wrench``."""
    traj = integrate(spec, topology, state.q, state.qd, external_wrench, cfg, backend)
    joints = tuple(JointState(float(a), float(b)) for a, b in zip(traj.q[1], traj.qd[1]))
    return SimState(state.t + cfg.dt, joints, np.array(external_wrench, dtype=float).reshape(6))


def sensor_wrenches(spec: ObjectSpec, reaction, applied):
    """Force/torque readings at both terminals from anchor reactions and applied wrenches.

    Readings are the wrenches the object exerts on the grasp, each in its
    terminal link frame: the negated applied wrench on the free side and the
    negated anchor reaction on the anchored side.
    """
    base = spec.base_pose
    Rt = base.rotation.T
    on_object = apply_force_transform(Rt, -Rt @ base.translation, np.asarray(reaction))
    return -on_object, -np.asarray(applied, dtype=float)


def measured_terminal_wrenches(spec, topology, state: SimState, cfg: SimConfig = SimConfig(), backend=None):
    """Sensor readings ``(f_left, f_right)`` for ``state`` under its applied wrench."""
    traj = integrate(spec, topology, state.q, state.qd, state.applied_wrench, cfg, backend)
    f_left, f_right = sensor_wrenches(spec, traj.reaction[0], state.applied_wrench)
    return f_left, f_right


def default_initial_position(spec: ObjectSpec):
    """Mid-range of each joint's limits (0 when a limit is unbounded)."""
    out = []
    for j in spec.joints:
        lo, hi = j.limits
        out.append(0.5 * (lo + hi) if np.isfinite(lo) and np.isfinite(hi) else min(max(0.0, lo), hi))
    return np.array(out)


def kinetic_energy(spec, topology, q, qd, cfg: SimConfig = SimConfig()):
    ch = pack_chain(spec, topology, cfg)
    R, p, S = _chain_py.kinematics(ch, np.asarray(q, dtype=float))
    M = _chain_py.crba(_chain_py.world_inertias(ch, R, p), S)
    qd = np.asarray(qd, dtype=float)
    return 0.5 * float(qd @ M @ qd)


def run_trial(spec, topology, signal, cfg: SimConfig, q0=None, qd0=None, metadata=None, backend=None):
    """Simulate one exploration trial and record it.

    ``signal`` is a :class:`SinusoidSpec` or a callable mapping an array of
    times to ``(N, 6)`` body-frame wrenches on the free terminal link.
    """
    n_steps = cfg.n_steps
    t = np.arange(n_steps) * cfg.dt
    wrench = evaluate(signal, t) if isinstance(signal, SinusoidSpec) else np.asarray(signal(t), dtype=float)
    if q0 is None:
        q0 = default_initial_position(spec)
    if qd0 is None:
        qd0 = np.zeros(spec.n_joints)
    traj = integrate(spec, topology, q0, qd0, wrench, cfg, backend)

    q = traj.q[:n_steps]
    R, p = link_pose_arrays(spec, topology, q)
    f_left, f_right = sensor_wrenches(spec, traj.reaction, wrench)
    moving = np.any(np.abs(traj.qd[:n_steps]) > cfg.motion_threshold, axis=1)

    meta = {
        "schema": SCHEMA,
        "dt": cfg.dt,
        "duration": cfg.duration,
        "seed": int(cfg.seed),
        "gravity": list(cfg.gravity),
        "object": spec.to_dict(),
        "object_hash": spec.digest(),
        "true_topology": str(topology),
        "signal": signal.to_dict() if isinstance(signal, SinusoidSpec) else None,
    }
    meta.update(metadata or {})
    return TrialRecord(meta, t, p, rotation_to_quat(R), f_left, f_right, moving)


def _run_job(job):
    return run_trial(**job)


def run_trials(jobs, parallelism=1):
    """Run independent trials (dicts of :func:`run_trial` keyword arguments).

    Results keep the order of ``jobs`` regardless of ``parallelism``.
    """
    jobs = list(jobs)
    if parallelism <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_run_job, jobs))
