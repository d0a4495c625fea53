"""Timestamped pose sequences and pose interpolation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform, slerp


class NonMonotoneTimestamps(ValueError):
    """Timestamps must be strictly increasing."""


class PoseGapTooLarge(ValueError):
    """Requested time falls in a gap wider than the allowed maximum."""


@dataclass
class Trajectory:
    """Sensor poses (sensor-to-map) sampled at strictly increasing times."""

    timestamps: np.ndarray
    poses: list[RigidTransform]

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float).reshape(-1)
        if self.timestamps.size != len(self.poses):
            raise ValueError("timestamp/pose count mismatch")
        if self.timestamps.size >= 2 and np.any(np.diff(self.timestamps) <= 0.0):
            raise NonMonotoneTimestamps("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.poses)

    def positions(self) -> np.ndarray:
        return np.array([p.t for p in self.poses]).reshape(-1, 3)

    def interpolate(self, time: float, max_gap: float = np.inf) -> RigidTransform:
        """Pose at an arbitrary time, linear in translation, slerp in rotation.

        Args:
            time: query time; must lie within the trajectory span.
            max_gap: raise PoseGapTooLarge when the bracketing samples are
                further apart than this.
        """
        ts = self.timestamps
        if ts.size == 0:
            raise ValueError("empty trajectory")
        if time < ts[0] - 1e-12 or time > ts[-1] + 1e-12:
            raise PoseGapTooLarge(f"time {time} outside trajectory span")
        i = int(np.searchsorted(ts, time, side="right")) - 1
        i = min(max(i, 0), ts.size - 1)
        if abs(ts[i] - time) < 1e-12 or i == ts.size - 1:
            return self.poses[i]
        gap = ts[i + 1] - ts[i]
        if gap > max_gap:
            raise PoseGapTooLarge(f"gap {gap:.3f}s exceeds max {max_gap:.3f}s")
        u = (time - ts[i]) / gap
        a, b = self.poses[i], self.poses[i + 1]
        return RigidTransform(slerp(a.q, b.q, u), (1.0 - u) * a.t + u * b.t)
