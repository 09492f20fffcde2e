"""Exact oracle over subsets of a binary linear mixture.

A subset S of classifiers is "attackable at least jointly" when some point
of the perturbation ball misclassifies every member of S.  Those subsets,
ordered by inclusion, form a lower semilattice whose maximal elements are
the best an attack can do; enumerating it is exponential in m by design
(the underlying decision problem is NP-hard), which is why construction is
guarded by an explicit classifier-count limit.

Feasibility of one subset reduces to the distance from the clean point to
an intersection of half-spaces:

- l2: Dykstra-corrected cyclic projections converge to the nearest point
  of the intersection; an aggregated-half-space dual certificate provides
  early, certified infeasibility (including empty intersections, where the
  projection iterates would diverge).
- l-infinity: the distance is a linear program, solved exactly.

A projected-gradient cross-check (`feasible_via_srh_pgd`) is provided for
both norms and doubles as the fallback when the projection sweeps hit
their cap.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .attacks import lemma_pgd_config, pgd_minimize
from .geometry import L2, LINF, ThreatModel, lp_norm
from .linear import LabeledPoint, Mixture, srh

MAX_ENUM_CLASSIFIERS = 20
MAX_SWEEPS = 1_000_000
DEFAULT_TOL = 1e-9


class ResourceLimitError(RuntimeError):
    """Raised when an exponential enumeration would exceed the allowed size."""


def indices_of(mask: int) -> tuple[int, ...]:
    return tuple(i for i in range(mask.bit_length()) if mask >> i & 1)


def mask_of(indices) -> int:
    mask = 0
    for i in indices:
        mask |= 1 << int(i)
    return mask


@dataclass
class FeasibilityResult:
    """Outcome of one joint-vulnerability feasibility check.

    feasible implies distance <= epsilon and a witness point; infeasible
    implies distance > epsilon (a certified lower bound when the check
    terminated early).  degenerate marks near-boundary instances where the
    distance sits within 10*tol of epsilon, or where the projection sweeps
    gave up and the PGD fallback decided.
    """

    feasible: bool
    distance: float
    witness: np.ndarray | None
    degenerate: bool = False
    method: str = ""


def _halfspace_system(subset: tuple[int, ...], mix: Mixture, y: int):
    """Constraints y*f_i(z) <= 0 for i in subset, as rows a_i.z <= c_i with
    unit-norm a_i, so violations are geometric distances."""
    A = y * mix.W[list(subset)]
    c = -y * mix.bvec[list(subset)]
    norms = np.linalg.norm(A, axis=1)
    return A / norms[:, None], c / norms


def _dykstra_distance(A, c, x, epsilon, tol, max_sweeps):
    """Distance from x to {z : A z <= c} via Dykstra's projection sweeps.

    Returns (status, distance, point) with status "feasible", "infeasible"
    or "cap".  Rows of A must be unit norm.  Infeasibility is certified by
    the aggregated half-space sum(lam_i a_i).z <= sum(lam_i c_i), whose
    distance to x lower-bounds the true distance for any lam >= 0; this is
    what terminates on empty intersections.
    """
    k = A.shape[0]
    z = x.copy()
    lam = np.zeros(k)
    Axc = A @ x - c
    conv_tol = 1e-13 * max(1.0, epsilon)
    for _ in range(max_sweeps):
        shift = 0.0
        for i in range(k):
            yi = z + lam[i] * A[i]
            v = float(A[i] @ yi - c[i])
            lam[i] = max(v, 0.0)
            znew = yi - lam[i] * A[i]
            shift = max(shift, float(np.max(np.abs(znew - z))))
            z = znew
        num = float(lam @ Axc)
        if num > 0.0:
            s = lam @ A
            sn = float(np.linalg.norm(s))
            bound = num / sn if sn > 1e-15 * num else math.inf
            if bound > epsilon + 10 * tol:
                return "infeasible", bound, None
        if shift < conv_tol:
            viol = float(np.max(A @ z - c))
            if viol <= tol:
                return ("feasible" if lp_norm(z - x, L2) <= epsilon else "infeasible",
                        lp_norm(z - x, L2), z)
            break
    return "cap", math.nan, None


def _linf_distance_lp(A, c, x):
    """Exact l-infinity distance from x to {z : A z <= c} via an LP over
    (z, t): minimize t subject to A z <= c and |z - x| <= t."""
    k, d = A.shape
    eye = np.eye(d)
    A_ub = np.block([
        [A, np.zeros((k, 1))],
        [eye, -np.ones((d, 1))],
        [-eye, -np.ones((d, 1))],
    ])
    b_ub = np.concatenate([c, x, -x])
    cost = np.zeros(d + 1)
    cost[-1] = 1.0
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub,
                  bounds=[(None, None)] * d + [(0, None)], method="highs")
    if res.status == 2:  # constraint system itself is empty
        return math.inf, None
    if not res.success:
        raise RuntimeError(f"distance LP failed: {res.message}")
    return float(res.fun), res.x[:d]


def feasible_via_srh_pgd(
    subset_mask: int,
    mix: Mixture,
    pt: LabeledPoint,
    tm: ThreatModel,
    tol: float = DEFAULT_TOL,
    cfg=None,
) -> tuple[bool, np.ndarray]:
    """Gradient-descent feasibility cross-check: minimize the subset's mean
    reverse hinge over the ball and test whether every member ends up
    misclassified.  One-sided: success certifies feasibility, failure does
    not certify infeasibility."""
    subset = indices_of(subset_mask)
    if not subset:
        raise ValueError("subset must be nonempty")
    members = [mix.classifiers[i] for i in subset]
    if cfg is None:
        cfg = lemma_pgd_config(len(members), tm)
    best, _ = pgd_minimize(lambda z: srh(members, z, pt.y), pt.x, pt.x, tm, cfg)
    worst = max(pt.y * h.score(best) / lp_norm(h.w, L2) for h in members)
    return worst <= tol, best


def at_least_feasible(
    subset_mask: int,
    mix: Mixture,
    pt: LabeledPoint,
    tm: ThreatModel,
    tol: float = DEFAULT_TOL,
    max_sweeps: int = MAX_SWEEPS,
) -> FeasibilityResult:
    """Decide whether some ball point misclassifies every classifier in the
    subset, and report the minimum distance at which that happens."""
    subset = indices_of(subset_mask)
    if not subset:
        raise ValueError("subset must be nonempty")
    x, y = pt.x, pt.y
    A, c = _halfspace_system(subset, mix, y)

    if len(subset) == 1:
        viol = float(A[0] @ x - c[0])
        dist = max(viol, 0.0)
        witness = x if viol <= 0 else x - viol * A[0]
        feas = dist <= tm.epsilon
        return FeasibilityResult(feas, dist, witness if feas else None,
                                 degenerate=abs(dist - tm.epsilon) < 10 * tol,
                                 method="margin")

    if tm.p == LINF:
        dist, witness = _linf_distance_lp(A, c, x)
        feas = dist <= tm.epsilon
        return FeasibilityResult(feas, dist, witness if feas else None,
                                 degenerate=(math.isfinite(dist)
                                             and abs(dist - tm.epsilon) < 10 * tol),
                                 method="lp")

    status, dist, witness = _dykstra_distance(A, c, x, tm.epsilon, tol, max_sweeps)
    if status == "cap":
        ok, best = feasible_via_srh_pgd(subset_mask, mix, pt, tm, tol)
        if ok:
            return FeasibilityResult(True, lp_norm(best - x, tm.p), best,
                                     degenerate=True, method="pgd")
        return FeasibilityResult(False, math.inf, None, degenerate=True, method="pgd")
    feas = status == "feasible"
    return FeasibilityResult(
        feas, dist, witness if feas else None,
        degenerate=abs(dist - tm.epsilon) < 10 * tol if math.isfinite(dist) else False,
        method="dykstra",
    )


@dataclass
class AdversarialLattice:
    """All jointly attackable classifier subsets of a mixture at one point.

    nodes maps each subset bitmask to a witness point (the empty set maps
    to the clean point).  Node sets are closed downward: every subset of a
    node is a node.  degenerate_masks records every feasibility check that
    came back flagged near-boundary, whether or not it produced a node.
    """

    m: int
    nodes: dict[int, np.ndarray]
    degenerate_masks: frozenset[int] = frozenset()

    @property
    def any_degenerate(self) -> bool:
        return bool(self.degenerate_masks)


def build_lattice(
    mix: Mixture,
    pt: LabeledPoint,
    tm: ThreatModel,
    tol: float = DEFAULT_TOL,
) -> AdversarialLattice:
    """Enumerate attackable subsets level by level.

    Subsets are visited in increasing cardinality; a candidate is only
    checked when all its one-smaller subsets are nodes (supersets of an
    infeasible subset cannot be feasible).
    """
    if mix.m > MAX_ENUM_CLASSIFIERS:
        raise ResourceLimitError(
            f"lattice enumeration is exponential in the classifier count; "
            f"m={mix.m} exceeds the limit of {MAX_ENUM_CLASSIFIERS}"
        )
    nodes: dict[int, np.ndarray] = {0: pt.x.copy()}
    degenerate: set[int] = set()
    prev_level = {0}
    for size in range(1, mix.m + 1):
        level: set[int] = set()
        for combo in itertools.combinations(range(mix.m), size):
            mask = mask_of(combo)
            if any((mask & ~(1 << i)) not in prev_level for i in combo):
                continue
            res = at_least_feasible(mask, mix, pt, tm, tol)
            if res.degenerate:
                degenerate.add(mask)
            if res.feasible:
                nodes[mask] = res.witness
                level.add(mask)
        if not level:
            break
        prev_level = level
    return AdversarialLattice(mix.m, nodes, frozenset(degenerate))


def maximal_elements(lat: AdversarialLattice) -> set[int]:
    """Nodes with no strict superset among the nodes.  A mixture robust at
    the point yields {0}: only the empty subset is attackable."""
    masks = set(lat.nodes)
    out = set()
    for s in masks:
        if not any(t != s and t & s == s for t in masks):
            out.add(s)
    return out


def optimal_attack_bruteforce(
    mix: Mixture,
    pt: LabeledPoint,
    tm: ThreatModel,
    tol: float = DEFAULT_TOL,
) -> tuple[np.ndarray, float]:
    """Ground-truth optimal attack by exhaustive subset search.

    Enumerates subsets in decreasing weight mass (ties: smaller bitmask)
    and returns the witness of the first feasible one together with its
    mass; by the enumeration order that mass is the exact optimum.
    Exponential in the classifier count by design.
    """
    if mix.m > MAX_ENUM_CLASSIFIERS:
        raise ResourceLimitError(
            f"optimal-attack search is exponential in the classifier count; "
            f"m={mix.m} exceeds the limit of {MAX_ENUM_CLASSIFIERS}"
        )
    m = mix.m
    infeasible: list[int] = []
    singles: dict[int, FeasibilityResult] = {}
    for i in range(m):
        res = at_least_feasible(1 << i, mix, pt, tm, tol)
        singles[1 << i] = res
        if not res.feasible:
            infeasible.append(1 << i)
    if len(infeasible) == m:
        return pt.x.copy(), 0.0

    n = 1 << m
    masses = np.zeros(n)
    for mask in range(1, n):
        low = mask & -mask
        masses[mask] = masses[mask ^ low] + mix.weights[low.bit_length() - 1]
    order = np.lexsort((np.arange(n), -masses))
    for mask in order:
        mask = int(mask)
        if mask == 0:
            continue
        if any(f & mask == f for f in infeasible):
            continue
        res = singles.get(mask)
        if res is None:
            res = at_least_feasible(mask, mix, pt, tm, tol)
        if res.feasible:
            return res.witness, float(masses[mask])
        infeasible.append(mask)
    return pt.x.copy(), 0.0


def lattice_to_dict(lat: AdversarialLattice, mix: Mixture) -> dict:
    """JSON-ready form: one entry per node with subset indices, witness and
    weight mass, plus the list of maximal subsets."""
    entries = []
    for mask in sorted(lat.nodes, key=lambda s: (s.bit_count(), s)):
        idx = indices_of(mask)
        entries.append({
            "subset": list(idx),
            "witness": lat.nodes[mask].tolist(),
            "mass": float(sum(mix.weights[i] for i in idx)),
        })
    maximal = sorted(maximal_elements(lat), key=lambda s: (s.bit_count(), s))
    return {
        "nodes": entries,
        "maximal": [list(indices_of(s)) for s in maximal],
    }
