"""Norm-ball geometry shared by all attacks and oracles.

Supports the l2 and l-infinity threat models: norms, exact projections
onto the perturbation ball, and the gradient step rules used by the
projected-descent loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

L2 = 2.0
LINF = math.inf


def as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ThreatModel:
    """Admissible perturbations: the lp ball of radius epsilon around a point.

    p must be 2 or math.inf.  epsilon = 0 is allowed as a degenerate budget
    (every attack becomes a no-op); it is used for clean-accuracy baselines.
    """

    p: float
    epsilon: float

    def __post_init__(self) -> None:
        if self.p not in (L2, LINF):
            raise ValueError(f"unsupported norm p={self.p!r}; use 2 or math.inf")
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon!r}")

    @classmethod
    def l2(cls, epsilon: float) -> "ThreatModel":
        return cls(L2, float(epsilon))

    @classmethod
    def linf(cls, epsilon: float) -> "ThreatModel":
        return cls(LINF, float(epsilon))

    @property
    def dual_p(self) -> float:
        """Index of the dual norm (2 for l2, 1 for l-infinity)."""
        return 2.0 if self.p == L2 else 1.0


def lp_norm(v, p: float) -> float:
    """||v||_p for p in {1, 2, inf}.  Rejects non-finite components."""
    arr = as_vector(v)
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector has non-finite components")
    if p == L2:
        return float(np.linalg.norm(arr))
    if p == LINF:
        return float(np.max(np.abs(arr))) if arr.size else 0.0
    if p == 1.0:
        return float(np.sum(np.abs(arr)))
    raise ValueError(f"unsupported norm p={p!r}")


def project_ball(v, center, tm: ThreatModel) -> np.ndarray:
    """Nearest point of B_p(center, epsilon) to v (in the same lp metric).

    Returns v unchanged when it is already inside, which makes the
    projection exactly idempotent.
    """
    arr = as_vector(v)
    ctr = as_vector(center)
    if arr.shape != ctr.shape:
        raise ValueError(f"dimension mismatch: {arr.shape} vs {ctr.shape}")
    if tm.p == LINF:
        return np.clip(arr, ctr - tm.epsilon, ctr + tm.epsilon)
    d = arr - ctr
    n = lp_norm(d, L2)
    if n <= tm.epsilon:
        return arr.copy()
    w = d * (tm.epsilon / n)
    # Round-off can leave the rescaled point an ulp outside the ball; nudge
    # componentwise toward the center until the inside check passes, so a
    # second projection is exactly a no-op.
    while lp_norm(w, L2) > tm.epsilon:
        w = np.nextafter(w, 0.0)
    return ctr + w


def descent_step(grad, eta: float, tm: ThreatModel, mode: str = "raw") -> np.ndarray:
    """Displacement for one descent iteration on the given threat model.

    "raw" returns -eta * grad (plain projected gradient descent).
    "steepest" returns the lp steepest-descent displacement of length eta:
    -eta * sign(grad) for l-infinity, -eta * grad / ||grad||_2 for l2.
    A zero gradient in steepest l2 mode stalls (zero displacement).
    """
    g = as_vector(grad)
    if not np.all(np.isfinite(g)):
        raise ValueError("gradient has non-finite components")
    if eta <= 0:
        raise ValueError(f"eta must be > 0, got {eta!r}")
    if mode == "raw":
        return -eta * g
    if mode == "steepest":
        if tm.p == LINF:
            return -eta * np.sign(g)
        n = lp_norm(g, L2)
        if n == 0.0:
            return np.zeros_like(g)
        return -eta * g / n
    raise ValueError(f"unknown step mode {mode!r}")
