"""Binary linear classifiers, mixtures, and their losses.

A classifier is a hyperplane (w, b) predicting sign(w.x + b) in {-1, +1};
a mixture adds a probability vector over m classifiers.  This module also
holds the reverse-hinge losses driving the attacks and the random-mixture
sampler used by the synthetic experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import L2, LINF, ThreatModel, as_vector, lp_norm

WEIGHT_SUM_TOL = 1e-9


def trial_rng(master_seed: int, *key: int) -> np.random.Generator:
    """Independent, reproducible random stream for (master_seed, *key).

    Philox is counter-based, so streams derived from distinct keys are
    independent and trials can run in any order or in parallel.
    """
    seq = np.random.SeedSequence((int(master_seed),) + tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True, eq=False)
class LinearClassifier:
    """Hyperplane classifier x -> sign(w.x + b), boundary mapped to -1."""

    w: np.ndarray
    b: float

    def __post_init__(self) -> None:
        w = as_vector(self.w)
        if not np.all(np.isfinite(w)) or not np.isfinite(self.b):
            raise ValueError("classifier parameters must be finite")
        if not np.any(w != 0):
            raise ValueError("weight vector must be nonzero")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self) -> int:
        return self.w.shape[0]

    def score(self, x) -> float:
        return float(self.w @ as_vector(x) + self.b)


@dataclass(frozen=True, eq=False)
class Mixture:
    """Finite set of classifiers with a probability vector over them."""

    classifiers: tuple[LinearClassifier, ...]
    weights: np.ndarray = None
    # stacked parameters, derived at construction for vectorized scoring
    W: np.ndarray = field(init=False, repr=False)
    bvec: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        cls = tuple(self.classifiers)
        if len(cls) < 1:
            raise ValueError("mixture needs at least one classifier")
        dims = {h.dim for h in cls}
        if len(dims) != 1:
            raise ValueError(f"classifiers disagree on dimension: {sorted(dims)}")
        if self.weights is None:
            q = np.full(len(cls), 1.0 / len(cls))
        else:
            q = as_vector(self.weights)
        if q.shape[0] != len(cls):
            raise ValueError("weights length must equal classifier count")
        if np.any(q < 0) or abs(float(q.sum()) - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "classifiers", cls)
        object.__setattr__(self, "weights", q)
        object.__setattr__(self, "W", np.stack([h.w for h in cls]))
        object.__setattr__(self, "bvec", np.array([h.b for h in cls]))

    @property
    def m(self) -> int:
        return len(self.classifiers)

    @property
    def dim(self) -> int:
        return self.classifiers[0].dim

    def scores(self, x) -> np.ndarray:
        """f_i(x) for every classifier, as one (m,) array."""
        return self.W @ as_vector(x) + self.bvec


@dataclass(frozen=True, eq=False)
class LabeledPoint:
    """Input point with its true label (-1/+1 binary, class index multiclass)."""

    x: np.ndarray
    y: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", as_vector(self.x))
        object.__setattr__(self, "y", int(self.y))


def decide(h: LinearClassifier, x) -> int:
    """Predicted label in {-1, +1}; the boundary f(x) = 0 maps to -1."""
    return 1 if h.score(x) > 0 else -1


def misclassified(scores: np.ndarray, y: int, tol: float = 0.0) -> np.ndarray:
    """Boolean mask of classifiers fooled at a point, from their scores.

    The success predicate is y*f(x) <= tol: a point exactly on a boundary
    counts as misclassified, matching the reverse hinge reaching zero.
    """
    return y * np.asarray(scores, dtype=float) <= tol


def zero_one_mixture(mix: Mixture, x, y: int, tol: float = 0.0) -> float:
    """Probability that the mixture mislabels (x, y): fooled weight mass."""
    return float(mix.weights @ misclassified(mix.scores(x), y, tol))


def fooled_mask(mix: Mixture, x, y: int, tol: float = 0.0) -> int:
    """Bitmask of the classifiers fooled at x."""
    mask = 0
    for i, hit in enumerate(misclassified(mix.scores(x), y, tol)):
        if hit:
            mask |= 1 << i
    return mask


def margin_and_direction(
    h: LinearClassifier, x, y: int, tm: ThreatModel
) -> tuple[float, np.ndarray]:
    """Exact lp distance to the decision boundary and the optimal direction.

    Requires y*f(x) > 0 (the point is currently classified correctly).
    Moving x by (margin + nu) * direction for any nu > 0 flips the decision.
    """
    yf = y * h.score(x)
    if yf <= 0:
        raise ValueError("margin undefined: point is already misclassified")
    if tm.p == L2:
        wn = lp_norm(h.w, L2)
        return yf / wn, -y * h.w / wn
    margin = yf / lp_norm(h.w, 1.0)
    return margin, -y * np.sign(h.w)


def srh(classifiers, x, y: int) -> tuple[float, np.ndarray]:
    """Mean reverse hinge max(y*f_i(x), 0) over a pool, with a subgradient.

    Zero exactly when every classifier in the pool misclassifies x.
    Classifiers sitting exactly on their boundary contribute nothing to the
    gradient.
    """
    cls = list(classifiers)
    if not cls:
        raise ValueError("empty classifier pool")
    xv = as_vector(x)
    value = 0.0
    grad = np.zeros_like(xv)
    for h in cls:
        yf = y * h.score(xv)
        if yf > 0:
            value += yf
            grad += y * h.w
    k = len(cls)
    return value / k, grad / k


def weighted_rev_hinge(mix: Mixture, x, y: int) -> tuple[float, np.ndarray]:
    """Mixture-weighted reverse hinge sum q_i * max(y*f_i(x), 0) and subgradient."""
    xv = as_vector(x)
    yf = y * mix.scores(xv)
    active = yf > 0
    value = float(mix.weights[active] @ yf[active])
    grad = y * (mix.weights[active] @ mix.W[active]) if np.any(active) else np.zeros_like(xv)
    return value, grad


def sample_random_mixture(
    d: int,
    m: int,
    alpha: float,
    beta: float,
    temperature: float = 10.0,
    rng: np.random.Generator | None = None,
) -> Mixture:
    """Random mixture: unit-sphere normals, folded-Gaussian distances, softmax weights.

    Each w_i is uniform on the l2 unit sphere in R^d.  Each bias is
    b_i = -|z| with z ~ Normal(alpha, beta), beta read as a standard
    deviation, so the decision boundaries sit at folded-Gaussian distances
    from the origin.  Weights are softmax(z_i / temperature) of i.i.d.
    standard normals.
    """
    if d < 1 or m < 1:
        raise ValueError("d and m must be >= 1")
    if beta <= 0 or temperature <= 0:
        raise ValueError("beta and temperature must be > 0")
    if rng is None:
        rng = trial_rng(42)
    W = rng.standard_normal((m, d))
    norms = np.linalg.norm(W, axis=1)
    if np.any(norms == 0):
        raise ValueError("degenerate zero draw for a normal vector")
    W /= norms[:, None]
    b = -np.abs(rng.normal(alpha, beta, size=m))
    z = rng.standard_normal(m)
    logits = z / temperature
    expz = np.exp(logits - logits.max())
    q = expz / expz.sum()
    cls = tuple(LinearClassifier(W[i], float(b[i])) for i in range(m))
    return Mixture(cls, q)


def mixture_to_dict(mix: Mixture) -> dict:
    return {
        "classifiers": [{"w": h.w.tolist(), "b": h.b} for h in mix.classifiers],
        "weights": mix.weights.tolist(),
    }


def mixture_from_dict(data: dict) -> Mixture:
    cls = tuple(
        LinearClassifier(np.asarray(c["w"], dtype=float), float(c["b"]))
        for c in data["classifiers"]
    )
    weights = data.get("weights")
    q = np.asarray(weights, dtype=float) if weights is not None else None
    return Mixture(cls, q)
