"""Attacks on binary linear mixtures: EOL-PGD, ARC, and the lattice climber.

All three share one projected-descent solver (`pgd_minimize`) and one result
type.  The lattice climber grows a pool of jointly fooled classifiers one
candidate at a time, keeping a candidate only when the whole pool can still
be fooled simultaneously.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .geometry import ThreatModel, as_vector, descent_step, lp_norm, project_ball
from .linear import (
    LabeledPoint,
    Mixture,
    fooled_mask,
    margin_and_direction,
    srh,
    weighted_rev_hinge,
    zero_one_mixture,
)

SUCCESS_TOL = 1e-9


@dataclass
class PgdConfig:
    """Projected gradient descent settings.

    steps is the iteration count T, eta the step size.  mode "raw" takes
    -eta*grad steps (the convex-analysis setting); "steepest" takes
    lp-normalized steps.  halve_eta_at lists 0-based iterations at whose
    start the step size is halved.
    """

    steps: int
    eta: float
    mode: str = "raw"
    halve_eta_at: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.eta <= 0:
            raise ValueError("eta must be > 0")
        if self.mode not in ("raw", "steepest"):
            raise ValueError(f"unknown mode {self.mode!r}")


def lemma_pgd_config(m: int, tm: ThreatModel) -> PgdConfig:
    """Inner-PGD parameters guaranteeing joint-fooling convergence.

    T = max(2*m^2, 200) iterations with step size eps/sqrt(T); this
    satisfies the T > eps^2 * m^2 requirement of the convergence analysis
    for every pool size up to m (with eps = 1 and m <= 9).
    """
    steps = max(2 * m * m, 200)
    eps = tm.epsilon if tm.epsilon > 0 else 1.0
    return PgdConfig(steps=steps, eta=eps / math.sqrt(steps))


@dataclass
class AttackResult:
    """Outcome of one attack run.

    fooled is a bitmask over the mixture's classifiers; error is the fooled
    weight mass; grad_evals counts per-classifier gradient evaluations;
    success_tol is the slack used by the misclassification predicate.
    """

    delta: np.ndarray
    fooled: int
    error: float
    grad_evals: int
    iterations: int
    wall_time: float
    trace: list[float] | None = None
    success_tol: float = SUCCESS_TOL

    @property
    def fooled_indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.fooled.bit_length()) if self.fooled >> i & 1)

    def to_dict(self) -> dict:
        return {
            "delta": self.delta.tolist(),
            "fooled": list(self.fooled_indices),
            "error": self.error,
            "grad_evals": self.grad_evals,
            "iterations": self.iterations,
            "wall_time": self.wall_time,
        }


def pgd_minimize(
    objective,
    x0,
    center,
    tm: ThreatModel,
    cfg: PgdConfig,
    track=None,
) -> tuple[np.ndarray, float]:
    """Projected gradient descent on `objective` over B_p(center, epsilon).

    objective(x) must return (value, subgradient).  Returns the evaluated
    iterate with the smallest objective value, not the last iterate; the
    starting point is evaluated first, so a zero-loss start is returned
    unchanged.  `track(x, value)` is called at every evaluation.
    """
    x = as_vector(x0).copy()
    ctr = as_vector(center)
    if lp_norm(x - ctr, tm.p) > tm.epsilon + SUCCESS_TOL:
        raise ValueError("starting point lies outside the perturbation ball")
    x = project_ball(x, ctr, tm)
    best_x = x
    best_v = math.inf
    eta = cfg.eta
    halve_at = set(cfg.halve_eta_at)
    for t in range(cfg.steps):
        if t in halve_at:
            eta *= 0.5
        value, grad = objective(x)
        if track is not None:
            track(x, value)
        if value < best_v:
            best_v = value
            best_x = x
        x = project_ball(x + descent_step(grad, eta, tm, cfg.mode), ctr, tm)
    return best_x.copy(), best_v


def _order_indices(mix: Mixture, order) -> list[int]:
    """Resolve a visit order: "weight" for decreasing weight (ties by index),
    or an explicit permutation of classifier indices."""
    if isinstance(order, str):
        if order != "weight":
            raise ValueError(f"unknown order {order!r}")
        return sorted(range(mix.m), key=lambda i: (-mix.weights[i], i))
    perm = [int(i) for i in order]
    if sorted(perm) != list(range(mix.m)):
        raise ValueError("order must be a permutation of classifier indices")
    return perm


def eol_pgd_linear(
    mix: Mixture,
    pt: LabeledPoint,
    tm: ThreatModel,
    cfg: PgdConfig | None = None,
    record_trace: bool = False,
) -> AttackResult:
    """PGD on the weighted reverse hinge sum q_i * max(y f_i, 0).

    Attacks all classifiers at once through one averaged gradient; stalls
    whenever the weighted gradient cancels, which is the known failure mode
    against mixtures with opposed normals.  Returns the iterate with the
    highest mixture error.  Gradient evaluations: exactly steps * m.
    """
    start = time.perf_counter()
    if cfg is None:
        cfg = lemma_pgd_config(mix.m, tm)
    x, y = pt.x, pt.y
    init_fooled = fooled_mask(mix, x, y, SUCCESS_TOL)
    if init_fooled == (1 << mix.m) - 1:
        # nothing left to attack
        err = zero_one_mixture(mix, x, y, SUCCESS_TOL)
        return AttackResult(np.zeros_like(x), init_fooled, err, 0, 0,
                            time.perf_counter() - start)

    state = {"x": x, "err": zero_one_mixture(mix, x, y, SUCCESS_TOL)}
    trace: list[float] = []

    def follow(xi, _value):
        err = zero_one_mixture(mix, xi, y, SUCCESS_TOL)
        if record_trace:
            trace.append(err)
        if err > state["err"]:
            state["x"], state["err"] = xi.copy(), err

    pgd_minimize(lambda z: weighted_rev_hinge(mix, z, y), x, x, tm, cfg, track=follow)
    best = state["x"]
    return AttackResult(
        delta=best - x,
        fooled=fooled_mask(mix, best, y, SUCCESS_TOL),
        error=state["err"],
        grad_evals=cfg.steps * mix.m,
        iterations=cfg.steps,
        wall_time=time.perf_counter() - start,
        trace=trace if record_trace else None,
    )


def arc_linear(
    mix: Mixture,
    pt: LabeledPoint,
    tm: ThreatModel,
    order="weight",
    overshoot: float | None = None,
) -> AttackResult:
    """Greedy per-classifier attack with strict-improvement acceptance.

    Visits classifiers one at a time; each visit jumps just past the visited
    classifier's boundary using its closed-form margin from the clean point,
    re-projects into the ball, and keeps the candidate only if the mixture
    error strictly increased.  Single-classifier candidates cannot exploit
    alignment the way an averaged gradient can, but they never cancel out,
    so the attack stays effective under opposed normals.  One margin
    computation per visit.
    """
    start = time.perf_counter()
    x, y = pt.x, pt.y
    nu = 1e-6 * tm.epsilon if overshoot is None else overshoot
    cur = x.copy()
    cur_err = zero_one_mixture(mix, cur, y, SUCCESS_TOL)
    trace = [cur_err]
    visits = 0
    for i in _order_indices(mix, order):
        visits += 1
        h = mix.classifiers[i]
        if y * h.score(cur) <= SUCCESS_TOL or y * h.score(x) <= SUCCESS_TOL:
            trace.append(cur_err)
            continue
        margin, direction = margin_and_direction(h, x, y, tm)
        cand = project_ball(x + (margin + nu) * direction, x, tm)
        cand_err = zero_one_mixture(mix, cand, y, SUCCESS_TOL)
        if cand_err > cur_err:
            cur, cur_err = cand, cand_err
        trace.append(cur_err)
    return AttackResult(
        delta=cur - x,
        fooled=fooled_mask(mix, cur, y, SUCCESS_TOL),
        error=cur_err,
        grad_evals=visits,
        iterations=visits,
        wall_time=time.perf_counter() - start,
        trace=trace,
    )


def lca_linear(
    mix: Mixture,
    pt: LabeledPoint,
    tm: ThreatModel,
    cfg: PgdConfig | None = None,
    order="weight",
) -> AttackResult:
    """Lattice climber for binary linear mixtures.

    Keeps a pool of jointly fooled classifiers.  Each candidate is
    tentatively added, the pool's mean reverse hinge is minimized by PGD
    from the current perturbed point, and the candidate stays only when
    every pool member ends up misclassifying the result.  The pool never
    shrinks, so its weight mass climbs monotonically.
    """
    start = time.perf_counter()
    if cfg is None:
        cfg = lemma_pgd_config(mix.m, tm)
    x, y = pt.x, pt.y
    pool: list[int] = []
    delta = np.zeros_like(x)
    grad_evals = 0
    mass = 0.0
    trace = [0.0]
    for i in _order_indices(mix, order):
        trial = pool + [i]
        members = [mix.classifiers[j] for j in trial]
        cand, _ = pgd_minimize(
            lambda z: srh(members, z, y), x + delta, x, tm, cfg
        )
        grad_evals += cfg.steps * len(trial)
        worst = max(y * h.score(cand) for h in members)
        if worst <= SUCCESS_TOL:
            delta = cand - x
            pool = trial
            mass = float(sum(mix.weights[j] for j in pool))
        trace.append(mass)
    mask = 0
    for j in pool:
        mask |= 1 << j
    return AttackResult(
        delta=delta,
        fooled=mask,
        error=mass,
        grad_evals=grad_evals,
        iterations=cfg.steps * mix.m,
        wall_time=time.perf_counter() - start,
        trace=trace,
    )
