"""Trial records and the ``trial/v1`` text file format.

A trial file is UTF-8 text. Line 1 is a JSON object (keys sorted) holding
the metadata; it always contains ``schema``, ``n_links``, ``n_samples``,
``dt`` and ``columns``. Every following line is one sample, comma separated,
in the column order

    t, then per link px,py,pz,qw,qx,qy,qz, then f_left (6), f_right (6), moving

Floats are written with ``repr`` (shortest string that round-trips exactly),
``moving`` as 0/1. Quaternions are written with ``qw >= 0``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import TrialFormatError
from .spatial import Pose, quat_canonical, quat_to_rotation

SCHEMA = "trial/v1"
DT_TOL = 1e-9


def column_names(n_links):
    cols = ["t"]
    for i in range(n_links):
        cols += [f"{c}{i}" for c in ("px", "py", "pz", "qw", "qx", "qy", "qz")]
    cols += [f"fl_{c}" for c in ("fx", "fy", "fz", "tx", "ty", "tz")]
    cols += [f"fr_{c}" for c in ("fx", "fy", "fz", "tx", "ty", "tz")]
    cols.append("moving")
    return cols


@dataclass(frozen=True)
class TrialSample:
    """One recorded instant: link poses (anchored link first) and terminal wrenches."""

    t: float
    poses: tuple
    f_left: np.ndarray
    f_right: np.ndarray
    moving: bool


@dataclass(eq=False)
class TrialRecord:
    """Time series of one exploration trial, stored column-wise.

    ``f_left`` is expressed in the first (anchored-side) link frame and
    ``f_right`` in the last (free-side) link frame. Both are the wrenches the
    object exerts on the grasp, i.e. the force/torque sensor readings.
    """

    metadata: dict
    t: np.ndarray
    positions: np.ndarray
    quaternions: np.ndarray
    f_left: np.ndarray
    f_right: np.ndarray
    moving: np.ndarray = field(default=None)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.positions = np.asarray(self.positions, dtype=float)
        self.quaternions = np.asarray(self.quaternions, dtype=float)
        self.f_left = np.asarray(self.f_left, dtype=float)
        self.f_right = np.asarray(self.f_right, dtype=float)
        if self.moving is None:
            self.moving = np.zeros(self.t.shape, dtype=bool)
        self.moving = np.asarray(self.moving, dtype=bool)
        self.metadata = dict(self.metadata)
        self.metadata.setdefault("schema", SCHEMA)

    @classmethod
    def from_samples(cls, metadata, samples):
        samples = list(samples)
        return cls(
            metadata,
            t=[s.t for s in samples],
            positions=[[p.position for p in s.poses] for s in samples],
            quaternions=[[p.quaternion for p in s.poses] for s in samples],
            f_left=[s.f_left for s in samples],
            f_right=[s.f_right for s in samples],
            moving=[s.moving for s in samples],
        )

    def __len__(self):
        return int(self.t.shape[0])

    @property
    def n_links(self):
        return int(self.positions.shape[1])

    @property
    def dt(self):
        return float(self.metadata["dt"])

    @cached_property
    def rotations(self):
        return quat_to_rotation(self.quaternions)

    @property
    def motion_fraction(self):
        return float(np.mean(self.moving)) if len(self) else 0.0

    def sample(self, k):
        return TrialSample(
            float(self.t[k]),
            tuple(Pose(self.positions[k, i], self.quaternions[k, i]) for i in range(self.n_links)),
            self.f_left[k].copy(),
            self.f_right[k].copy(),
            bool(self.moving[k]),
        )

    @property
    def samples(self):
        return [self.sample(k) for k in range(len(self))]

    def validate(self):
        """Raise ``ValueError`` unless the record satisfies its invariants."""
        N = len(self)
        if N < 2:
            raise ValueError("a trial needs at least 2 samples")
        if self.metadata.get("schema") != SCHEMA:
            raise ValueError(f"unsupported schema {self.metadata.get('schema')!r}")
        L = self.positions.shape[1] if self.positions.ndim == 3 else -1
        shapes = {
            "positions": (self.positions.shape, (N, L, 3)),
            "quaternions": (self.quaternions.shape, (N, L, 4)),
            "f_left": (self.f_left.shape, (N, 6)),
            "f_right": (self.f_right.shape, (N, 6)),
            "moving": (self.moving.shape, (N,)),
        }
        for name, (got, want) in shapes.items():
            if got != want or L < 1:
                raise ValueError(f"{name} has shape {got}, expected {want}")
        for arr in (self.t, self.positions, self.quaternions, self.f_left, self.f_right):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite values in trial")
        if np.any(np.abs(np.linalg.norm(self.quaternions, axis=-1) - 1.0) > 1e-6):
            raise ValueError("non-unit quaternion in trial")
        steps = np.diff(self.t)
        if np.any(steps <= 0):
            raise ValueError("non-monotone time")
        dt = self.metadata.get("dt")
        if dt is None or np.any(np.abs(steps - dt) > DT_TOL):
            raise ValueError("samples are not uniformly spaced by metadata dt")

    def equals(self, other):
        """Exact equality of metadata and every numeric field."""
        return (
            self.metadata == other.metadata
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("t", "positions", "quaternions", "f_left", "f_right", "moving")
            )
        )


def write_trial(record: TrialRecord, path):
    """Write ``record`` in ``trial/v1`` format; invalid records are refused."""
    record.validate()
    N, L = len(record), record.n_links
    header = dict(record.metadata)
    header.update(schema=SCHEMA, n_links=L, n_samples=N, columns=column_names(L))
    quats = quat_canonical(record.quaternions)
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    for k in range(N):
        row = [record.t[k]]
        for i in range(L):
            row.extend(record.positions[k, i])
            row.extend(quats[k, i])
        row.extend(record.f_left[k])
        row.extend(record.f_right[k])
        # repr of a Python float round-trips exactly; numpy scalars are converted first.
        lines.append(",".join(repr(float(x)) for x in row) + ("," + ("1" if record.moving[k] else "0")))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


def read_trial(path):
    """Parse and validate a ``trial/v1`` file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise TrialFormatError("file is not UTF-8 text", offset=exc.start) from None
    lines = text.split("\n")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise TrialFormatError(f"bad header: {exc.msg}", line=1, offset=exc.pos) from None
    if not isinstance(header, dict):
        raise TrialFormatError("header is not a JSON object", line=1, offset=0)
    if header.get("schema") != SCHEMA:
        raise TrialFormatError(f"schema mismatch: expected {SCHEMA!r}, got {header.get('schema')!r}", line=1, offset=0)
    try:
        L = int(header["n_links"])
        N = int(header["n_samples"])
        float(header["dt"])
    except (KeyError, TypeError, ValueError):
        raise TrialFormatError("header lacks n_links/n_samples/dt", line=1, offset=0) from None
    ncols = 1 + 7 * L + 13
    data = np.empty((N, ncols - 1))
    moving = np.empty(N, dtype=bool)
    offset = len(lines[0].encode()) + 1
    body = lines[1:]
    if body and body[-1] == "":
        body = body[:-1]
    for k, line in enumerate(body):
        lineno = k + 2
        if k >= N:
            raise TrialFormatError(f"more samples than the declared {N}", line=lineno, offset=offset)
        fields = line.split(",")
        if len(fields) != ncols:
            raise TrialFormatError(
                f"expected {ncols} columns, found {len(fields)} (truncated or corrupt row)", line=lineno, offset=offset
            )
        try:
            data[k] = [float(x) for x in fields[:-1]]
        except ValueError as exc:
            raise TrialFormatError(f"bad number: {exc}", line=lineno, offset=offset) from None
        if fields[-1] not in ("0", "1"):
            raise TrialFormatError("moving flag must be 0 or 1", line=lineno, offset=offset)
        moving[k] = fields[-1] == "1"
        offset += len(line.encode()) + 1
    if len(body) != N or not text.endswith("\n"):
        raise TrialFormatError(f"truncated file: {len(body)} of {N} samples present", line=len(body) + 1,
                               offset=len(raw))
    metadata = {k: v for k, v in header.items() if k not in ("n_links", "n_samples", "columns")}
    poses = data[:, 1 : 1 + 7 * L].reshape(N, L, 7)
    record = TrialRecord(
        metadata,
        t=data[:, 0],
        positions=poses[..., :3],
        quaternions=poses[..., 3:],
        f_left=data[:, 1 + 7 * L : 7 + 7 * L],
        f_right=data[:, 7 + 7 * L : 13 + 7 * L],
        moving=moving,
    )
    bad = np.flatnonzero(np.diff(record.t) <= 0)
    if bad.size:
        raise TrialFormatError("non-monotone time", line=int(bad[0]) + 3)
    try:
        record.validate()
    except ValueError as exc:
        raise TrialFormatError(str(exc)) from None
    return record
