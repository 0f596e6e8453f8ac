"""Random sinusoidal exploration wrenches (motor babbling)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

COMPONENTS = ("fx", "fy", "fz", "tx", "ty", "tz")
AMPLITUDE_LIMIT = 0.2
FREQUENCY_MAX = 0.3
FREQUENCY_FLOOR = 0.05


def mask_from_names(names):
    """6-bit mask with bit ``k`` set for each named wrench component."""
    mask = 0
    for name in names:
        try:
            mask |= 1 << COMPONENTS.index(name)
        except ValueError:
            raise ValueError(f"unknown wrench component {name!r}; expected one of {COMPONENTS}") from None
    return mask


def mask_names(mask):
    return [c for k, c in enumerate(COMPONENTS) if mask >> k & 1]


@dataclass(frozen=True)
class SinusoidSpec:
    """Per-component ``A_k sin(2 pi f_k t)`` on the free terminal link, in its body frame."""

    amplitude: np.ndarray
    frequency: np.ndarray
    mask: int

    def __post_init__(self):
        A = np.array(self.amplitude, dtype=float).reshape(6)
        f = np.array(self.frequency, dtype=float).reshape(6)
        mask = int(self.mask)
        if not 0 <= mask < 64:
            raise ValueError("mask must be a 6-bit integer")
        if np.any(np.abs(A) > AMPLITUDE_LIMIT) or np.any(f < 0) or np.any(f > FREQUENCY_MAX):
            raise ValueError(f"amplitudes must lie in [-{AMPLITUDE_LIMIT}, {AMPLITUDE_LIMIT}], "
                             f"frequencies in [0, {FREQUENCY_MAX}]")
        active = np.array([mask >> k & 1 for k in range(6)], dtype=bool)
        if np.any(A[~active] != 0) or np.any(f[~active] != 0):
            raise ValueError("inactive components must have zero amplitude and frequency")
        A.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "amplitude", A)
        object.__setattr__(self, "frequency", f)
        object.__setattr__(self, "mask", mask)

    def to_dict(self):
        return {"amplitude": self.amplitude.tolist(), "frequency": self.frequency.tolist(), "mask": self.mask}

    @classmethod
    def from_dict(cls, d):
        return cls(d["amplitude"], d["frequency"], d["mask"])


def sample_sinusoid(rng, mask, frequency_floor=FREQUENCY_FLOOR):
    """Draw amplitudes ~ U[-0.2, 0.2] and frequencies ~ U[floor, 0.3] for active components."""
    mask = int(mask)
    if mask == 0:
        raise ValueError("at least one wrench component must be active")
    if not 0 <= frequency_floor <= FREQUENCY_MAX:
        raise ValueError("frequency floor must lie in [0, 0.3]")
    A = np.zeros(6)
    f = np.zeros(6)
    for k in range(6):
        if mask >> k & 1:
            A[k] = rng.uniform(-AMPLITUDE_LIMIT, AMPLITUDE_LIMIT)
            f[k] = rng.uniform(frequency_floor, FREQUENCY_MAX)
    return SinusoidSpec(A, f, mask)


def evaluate(spec: SinusoidSpec, t):
    """Wrench at time(s) ``t``; returns shape ``t.shape + (6,)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("time must be non-negative")
    return spec.amplitude * np.sin(2.0 * np.pi * spec.frequency * t[..., None])
