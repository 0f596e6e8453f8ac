"""Rotations, poses and 6D spatial vector algebra.

Conventions used everywhere in the package:

* Quaternions are Hamilton, scalar first ``(w, x, y, z)`` and rotate body
  vectors into the inertial frame (``A_R_B``).
* Motion vectors (twists) are ordered ``(linear; angular)``.
* Force vectors (wrenches, momenta) are ordered ``(force; moment)``.

Most functions broadcast over leading batch dimensions so that whole
trajectories can be processed without Python loops.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AliasingError

QUAT_TOL = 1e-6
_SMALL_ANGLE = 1e-6


def skew(u):
    """Return S(u) with ``S(u) @ v == cross(u, v)``; broadcasts over ``u[..., 3]``."""
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape[:-1] + (3, 3))
    x, y, z = u[..., 0], u[..., 1], u[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def vee(m):
    """Inverse of :func:`skew` applied to the antisymmetric part of ``m``."""
    m = np.asarray(m, dtype=float)
    return 0.5 * np.stack(
        [m[..., 2, 1] - m[..., 1, 2], m[..., 0, 2] - m[..., 2, 0], m[..., 1, 0] - m[..., 0, 1]],
        axis=-1,
    )


# -- quaternions -------------------------------------------------------------


def as_unit_quaternion(q, tol=QUAT_TOL):
    """Renormalize raw quaternion components.

    Raises ``ValueError`` if the input norm is further than ``tol`` from one:
    drift of that size points at an upstream bug and is not silently fixed.
    """
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if not np.all(np.isfinite(norm)) or np.any(np.abs(norm - 1.0) > tol):
        raise ValueError(f"quaternion is not unit norm (|q| = {np.ravel(norm)[0]!r})")
    return q / norm


def quat_multiply(a, b):
    """Hamilton product ``a * b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conjugate(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    half = 0.5 * np.asarray(angle, dtype=float)[..., None]
    return np.concatenate([np.cos(half), np.sin(half) * axis], axis=-1)


def quat_canonical(q):
    """Flip sign so that ``w >= 0`` (the double cover makes both equivalent)."""
    q = np.asarray(q, dtype=float)
    return np.where(q[..., :1] < 0.0, -q, q)


def quat_to_rotation(q):
    """Rotation matrix of a unit quaternion (body to inertial)."""
    w, x, y, z = np.moveaxis(as_unit_quaternion(q), -1, 0)
    R = np.empty(w.shape + (3, 3))
    R[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[..., 0, 1] = 2.0 * (x * y - w * z)
    R[..., 0, 2] = 2.0 * (x * z + w * y)
    R[..., 1, 0] = 2.0 * (x * y + w * z)
    R[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[..., 1, 2] = 2.0 * (y * z - w * x)
    R[..., 2, 0] = 2.0 * (x * z - w * y)
    R[..., 2, 1] = 2.0 * (y * z + w * x)
    R[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


def rotation_to_quat(R):
    """Unit quaternion (``w >= 0``) of a rotation matrix, Shepperd's method."""
    R = np.asarray(R, dtype=float)
    m00, m11, m22 = R[..., 0, 0], R[..., 1, 1], R[..., 2, 2]
    tr = m00 + m11 + m22
    # Candidate magnitudes 4*w^2, 4*x^2, 4*y^2, 4*z^2; pick the largest for stability.
    cand = np.stack([1 + tr, 1 + m00 - m11 - m22, 1 - m00 + m11 - m22, 1 - m00 - m11 + m22], -1)
    k = np.argmax(cand, axis=-1)
    s = 2.0 * np.sqrt(np.maximum(np.take_along_axis(cand, k[..., None], -1)[..., 0], 0.0))
    d21 = R[..., 2, 1] - R[..., 1, 2]
    d02 = R[..., 0, 2] - R[..., 2, 0]
    d10 = R[..., 1, 0] - R[..., 0, 1]
    s01 = R[..., 0, 1] + R[..., 1, 0]
    s02 = R[..., 0, 2] + R[..., 2, 0]
    s12 = R[..., 1, 2] + R[..., 2, 1]
    q = np.stack(
        [
            np.select([k == 0, k == 1, k == 2], [s / 4, d21 / s, d02 / s], d10 / s),
            np.select([k == 0, k == 1, k == 2], [d21 / s, s / 4, s01 / s], s02 / s),
            np.select([k == 0, k == 1, k == 2], [d02 / s, s01 / s, s / 4], s12 / s),
            np.select([k == 0, k == 1, k == 2], [d10 / s, s02 / s, s12 / s], s / 4),
        ],
        axis=-1,
    )
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return quat_canonical(q)


def quat_integrate(q, omega_body, dt):
    """Advance orientation by a constant body angular velocity over ``dt``.

    The increment is the exact exponential ``exp(omega*dt/2)``; the result is
    renormalized under the usual drift guard.
    """
    phi = np.asarray(omega_body, dtype=float) * dt
    angle = np.linalg.norm(phi, axis=-1)
    half = 0.5 * angle
    sinc = np.where(angle < _SMALL_ANGLE, 0.5 - angle**2 / 48.0, np.sin(half) / np.where(angle == 0, 1, angle))
    dq = np.concatenate([np.cos(half)[..., None], sinc[..., None] * phi], axis=-1)
    return as_unit_quaternion(quat_multiply(q, dq))


# -- SO(3) exp / log --------------------------------------------------------


def so3_exp(phi):
    """Rotation matrix of the rotation vector ``phi`` (Rodrigues)."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)[..., None, None]
    K = skew(phi)
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    return np.eye(3) + a * K + b * (K @ K)


def so3_log(R):
    """Rotation vector of ``R``.

    Raises :class:`AliasingError` when the angle reaches pi, where the
    rotation axis (and hence any finite-difference rate) is ambiguous.
    """
    R = np.asarray(R, dtype=float)
    w = vee(R)
    s = np.linalg.norm(w, axis=-1)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(s, c)
    if np.any(theta >= np.pi - 1e-9):
        raise AliasingError("relative rotation reached pi between samples")
    small = theta < _SMALL_ANGLE
    factor = np.where(small, 1.0 + theta**2 / 6.0, theta / np.where(small, 1.0, np.sin(theta)))
    phi = factor[..., None] * w
    # Near pi the antisymmetric part loses precision; recover the axis from the symmetric part.
    near_pi = theta > 3.0
    if np.any(near_pi):
        B = 0.5 * (R + np.swapaxes(R, -1, -2)) - c[..., None, None] * np.eye(3)
        col = np.argmax(np.diagonal(B, axis1=-2, axis2=-1), axis=-1)
        axis = np.take_along_axis(B, col[..., None, None], axis=-1)[..., 0]
        axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
        sign = np.where(np.sum(axis * w, axis=-1) < 0, -1.0, 1.0)
        phi = np.where(near_pi[..., None], (sign * theta)[..., None] * axis, phi)
    return phi


def is_rotation(R, tol=1e-9):
    R = np.asarray(R, dtype=float)
    return bool(
        np.allclose(np.swapaxes(R, -1, -2) @ R, np.eye(3), atol=tol)
        and np.allclose(np.linalg.det(R), 1.0, atol=tol)
    )


# -- poses and homogeneous transforms ----------------------------------------


@dataclass(frozen=True)
class Pose:
    """Position of a frame origin and its orientation, both w.r.t. the inertial frame."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        q = as_unit_quaternion(np.array(self.quaternion, dtype=float).reshape(4))
        p.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "quaternion", q)

    @classmethod
    def identity(cls):
        return cls()

    def as_vector(self):
        """The 7-vector ``(p; q)``."""
        return np.concatenate([self.position, self.quaternion])


@dataclass(frozen=True)
class Transform:
    """Homogeneous transform: rotation and translation of frame B in frame A."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        p = np.array(self.translation, dtype=float).reshape(3)
        if not is_rotation(R):
            raise ValueError("rotation block is not in SO(3)")
        R.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", p)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, H):
        H = np.asarray(H, dtype=float)
        if H.shape != (4, 4) or not np.allclose(H[3], [0, 0, 0, 1]):
            raise ValueError("not a homogeneous transform")
        return cls(H[:3, :3], H[:3, 3])

    @classmethod
    def from_translation(cls, p):
        return cls(np.eye(3), p)

    @property
    def matrix(self):
        H = np.eye(4)
        H[:3, :3] = self.rotation
        H[:3, 3] = self.translation
        return H

    def inverse(self):
        Rt = self.rotation.T
        return Transform(Rt, -Rt @ self.translation)

    def __matmul__(self, other):
        if isinstance(other, Transform):
            return Transform(
                self.rotation @ other.rotation,
                self.rotation @ other.translation + self.translation,
            )
        return NotImplemented

    def apply(self, point):
        return self.rotation @ np.asarray(point, dtype=float) + self.translation


def pose_to_homogeneous(pose: Pose) -> Transform:
    return Transform(quat_to_rotation(pose.quaternion), pose.position)


def homogeneous_to_pose(H: Transform) -> Pose:
    return Pose(H.translation, rotation_to_quat(H.rotation))


def lin(H: Transform):
    return np.array(H.translation)


def rot(H: Transform):
    return np.array(H.rotation)


# -- 6D transforms -----------------------------------------------------------


def motion_transform_rp(R, p):
    """6x6 twist transform from (R, p); broadcasts over leading dimensions."""
    R = np.asarray(R, dtype=float)
    p = np.asarray(p, dtype=float)
    X = np.zeros(np.broadcast_shapes(R.shape[:-2], p.shape[:-1]) + (6, 6))
    X[..., :3, :3] = R
    X[..., :3, 3:] = skew(p) @ R
    X[..., 3:, 3:] = R
    return X


def force_transform_rp(R, p):
    """6x6 wrench transform from (R, p); the inverse transpose of the twist transform."""
    R = np.asarray(R, dtype=float)
    p = np.asarray(p, dtype=float)
    X = np.zeros(np.broadcast_shapes(R.shape[:-2], p.shape[:-1]) + (6, 6))
    X[..., :3, :3] = R
    X[..., 3:, :3] = skew(p) @ R
    X[..., 3:, 3:] = R
    return X


def motion_transform(H: Transform):
    """Map a twist expressed in frame B to frame A, with H the pose of B in A.

    ``linear_A = R linear_B + S(p) R angular_B`` and ``angular_A = R angular_B``.
    """
    return motion_transform_rp(H.rotation, H.translation)


def force_transform(H: Transform):
    """Map a wrench expressed in frame B to frame A (moment taken about A's origin)."""
    return force_transform_rp(H.rotation, H.translation)


def apply_force_transform(R, p, f):
    """``force_transform_rp(R, p) @ f`` without forming the 6x6 matrix."""
    R = np.asarray(R, dtype=float)
    f = np.asarray(f, dtype=float)
    force = np.einsum("...ij,...j->...i", R, f[..., :3])
    moment = np.cross(p, force) + np.einsum("...ij,...j->...i", R, f[..., 3:])
    return np.concatenate([force, moment], axis=-1)


def apply_motion_transform(R, p, v):
    R = np.asarray(R, dtype=float)
    v = np.asarray(v, dtype=float)
    ang = np.einsum("...ij,...j->...i", R, v[..., 3:])
    lin_ = np.einsum("...ij,...j->...i", R, v[..., :3]) + np.cross(p, ang)
    return np.concatenate([lin_, ang], axis=-1)


def motion_cross(v, m):
    """Spatial cross product ``v x m`` for motion vectors (linear-first ordering)."""
    v = np.asarray(v, dtype=float)
    m = np.asarray(m, dtype=float)
    lin_ = np.cross(v[..., 3:], m[..., :3]) + np.cross(v[..., :3], m[..., 3:])
    ang = np.cross(v[..., 3:], m[..., 3:])
    return np.concatenate([lin_, ang], axis=-1)


def force_cross(v, f):
    """Spatial cross product ``v x* f`` acting on force vectors (force-first ordering)."""
    v = np.asarray(v, dtype=float)
    f = np.asarray(f, dtype=float)
    force = np.cross(v[..., 3:], f[..., :3])
    moment = np.cross(v[..., 3:], f[..., 3:]) + np.cross(v[..., :3], f[..., :3])
    return np.concatenate([force, moment], axis=-1)


# -- inertia and momentum ----------------------------------------------------


@dataclass(frozen=True)
class SpatialInertia:
    """Mass, center of mass and rotational inertia about the body frame origin.

    ``rotational_inertia`` is expressed with the orientation of the body frame
    and taken about its origin; use :meth:`from_com` to build it from the
    inertia about the center of mass.
    """

    mass: float
    com: np.ndarray
    rotational_inertia: np.ndarray

    def __post_init__(self):
        c = np.array(self.com, dtype=float).reshape(3)
        I = np.array(self.rotational_inertia, dtype=float).reshape(3, 3)
        m = float(self.mass)
        if not m > 0.0:
            raise ValueError("mass must be positive")
        if not np.allclose(I, I.T, atol=1e-12, rtol=0.0):
            raise ValueError("rotational inertia is not symmetric")
        Ic = I + m * skew(c) @ skew(c)
        try:
            np.linalg.cholesky(0.5 * (Ic + Ic.T))
        except np.linalg.LinAlgError:
            raise ValueError("inertia about the center of mass is not positive definite") from None
        I = 0.5 * (I + I.T)
        c.flags.writeable = False
        I.flags.writeable = False
        object.__setattr__(self, "mass", m)
        object.__setattr__(self, "com", c)
        object.__setattr__(self, "rotational_inertia", I)

    @classmethod
    def from_com(cls, mass, com, inertia_com):
        """Parallel-axis shift: ``I_B = I_c - m S(c) S(c)``."""
        S = skew(com)
        return cls(mass, com, np.asarray(inertia_com, dtype=float) - mass * S @ S)

    @property
    def inertia_com(self):
        S = skew(self.com)
        return self.rotational_inertia + self.mass * S @ S

    def matrix(self):
        return spatial_inertia_matrix(self)

    def scaled(self, k):
        return SpatialInertia(self.mass * k, self.com, self.rotational_inertia * k)


def spatial_inertia_matrix(inertia: SpatialInertia):
    """``[[m 1, -m S(c)], [m S(c), I_B]]``."""
    m = inertia.mass
    mS = m * skew(inertia.com)
    M = np.empty((6, 6))
    M[:3, :3] = m * np.eye(3)
    M[:3, 3:] = -mS
    M[3:, :3] = mS
    M[3:, 3:] = inertia.rotational_inertia
    return M


def momentum(inertia: SpatialInertia, v):
    """Spatial momentum ``M v`` in body coordinates, ordered (linear; angular)."""
    return spatial_inertia_matrix(inertia) @ np.asarray(v, dtype=float)


def box_inertia(mass, size):
    """Rotational inertia of a uniform box about its center."""
    a, b, c = size
    return mass / 12.0 * np.diag([b * b + c * c, a * a + c * c, a * a + b * b])


# -- kinematic differentiation ----------------------------------------------


def body_twists(R0, p0, R1, p1, dt):
    """Body-frame twist between two pose samples ``dt`` apart (batched).

    Angular part: ``log(R0^T R1) / dt``. Linear part: the displacement rate
    rotated into the orientation halfway along the geodesic, which keeps the
    estimate second-order accurate at the interval midpoint.
    """
    dt = np.asarray(dt, dtype=float)
    if np.any(dt <= 0):
        raise ValueError("dt must be positive")
    R0 = np.asarray(R0, dtype=float)
    dR = np.swapaxes(R0, -1, -2) @ np.asarray(R1, dtype=float)
    phi = so3_log(dR)
    dt_ = dt[..., None] if dt.ndim else dt
    omega = phi / dt_
    Rmid = R0 @ so3_exp(0.5 * phi)
    dp = (np.asarray(p1, dtype=float) - np.asarray(p0, dtype=float)) / dt_
    v = np.einsum("...ji,...j->...i", Rmid, dp)
    return np.concatenate([v, omega], axis=-1)


def body_twist_from_poses(prev: Pose, nxt: Pose, dt):
    """Twist of a body, expressed in its own frame, from two consecutive poses."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return body_twists(
        quat_to_rotation(prev.quaternion), prev.position, quat_to_rotation(nxt.quaternion), nxt.position, dt
    )
