"""Real-time stiffness estimation from consecutive force readings.

The detector forms the secant slope (current_force - last_force) / dx over
the displacement commanded in the last control period.  It is the runtime
stand-in for the analytic contact-model derivative the policy solver trains
against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass
class StiffnessDetector:
    """Secant-slope stiffness estimator for one control loop.

    Near-zero displacements would blow up the quotient, so updates with
    |dx| < min_displacement hold the previous estimate.  Negative slopes
    (possible under sensor noise) are clamped to min_stiffness because the
    downstream gain network never sees negative stiffness in training.
    Smoothing factor 1.0 disables the exponential filter.
    """

    min_displacement: float = 1e-7
    min_stiffness: float = 0.0
    smoothing: float = 1.0
    last_force: float | None = field(default=None, init=False)
    last_stiffness: float | None = field(default=None, init=False)

    def __post_init__(self) -> None:
        if not (self.min_displacement > 0.0):
            raise ValueError("min_displacement must be positive")
        if not (0.0 < self.smoothing <= 1.0):
            raise ValueError("smoothing must be in (0, 1]")

    def update(self, current_force: float, displacement_last_period: float) -> float | None:
        """Feed one force reading; returns the stiffness estimate (N/m).

        Returns None until the first valid secant has been formed.  The
        current force is always stored as the next secant's base point.
        """
        if not (math.isfinite(current_force) and math.isfinite(displacement_last_period)):
            raise ValueError("non-finite input to stiffness detector")
        if (
            self.last_force is not None
            and abs(displacement_last_period) >= self.min_displacement
        ):
            raw = (current_force - self.last_force) / displacement_last_period
            raw = max(raw, self.min_stiffness)
            if self.last_stiffness is None or self.smoothing == 1.0:
                self.last_stiffness = raw
            else:
                s = self.smoothing
                self.last_stiffness = s * raw + (1.0 - s) * self.last_stiffness
        self.last_force = current_force
        return self.last_stiffness

    def reset(self) -> None:
        """Forget all history (e.g. on loss of contact)."""
        self.last_force = None
        self.last_stiffness = None
