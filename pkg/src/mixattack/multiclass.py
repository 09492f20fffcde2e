"""Multiclass differentiable score models and the attacks against their mixtures.

Models map R^d -> R^K and expose reverse-mode input gradients of any scalar
function of their scores, which is all the attacks need.  The only concrete
model is a small dense network with hand-written forward/backward passes
(a single-layer instance is just a linear score map).

The attack set mirrors the binary-linear one: EOL-PGD (maximize the
weighted sum of per-model losses), LOE-PGD (maximize the loss of the
weighted-average score), a greedy per-model baseline with
strict-improvement acceptance, and the lattice climber with pool
recomputation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .attacks import SUCCESS_TOL, AttackResult, PgdConfig, pgd_minimize
from .geometry import L2, LINF, ThreatModel, as_vector
from .linear import LabeledPoint


def _activation(name: str):
    if name == "tanh":
        return np.tanh, lambda z: 1.0 - np.tanh(z) ** 2
    if name == "relu":
        return (lambda z: np.maximum(z, 0.0)), (lambda z: (z > 0).astype(float))
    raise ValueError(f"unknown activation {name!r}")


class MlpModel:
    """Dense feed-forward score model with manual reverse-mode gradients.

    layers is a list of (W, b) pairs applied as z = W a + b; the activation
    sits between layers, never after the last one, so outputs are raw scores.
    """

    def __init__(self, layers, activation: str = "tanh"):
        self.layers = [(np.asarray(W, dtype=float), np.asarray(b, dtype=float))
                       for W, b in layers]
        if not self.layers:
            raise ValueError("model needs at least one layer")
        for W, b in self.layers:
            if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
                raise ValueError("layer shapes inconsistent")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError("layer parameters must be finite")
        for (W1, _), (W2, _) in zip(self.layers, self.layers[1:]):
            if W2.shape[1] != W1.shape[0]:
                raise ValueError("layer shape chain inconsistent")
        self.activation = activation
        self._act, self._dact = _activation(activation)

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def num_classes(self) -> int:
        return self.layers[-1][0].shape[0]

    def scores(self, x) -> np.ndarray:
        a = as_vector(x)
        for i, (W, b) in enumerate(self.layers):
            z = W @ a + b
            a = self._act(z) if i < len(self.layers) - 1 else z
        return a

    def scores_and_vjp(self, x):
        """Scores plus a vector-Jacobian product: vjp(ds) = J(x)^T ds."""
        a = as_vector(x)
        pre = []
        for i, (W, b) in enumerate(self.layers):
            z = W @ a + b
            pre.append(z)
            a = self._act(z) if i < len(self.layers) - 1 else z

        def vjp(dscores: np.ndarray) -> np.ndarray:
            g = np.asarray(dscores, dtype=float)
            for i in range(len(self.layers) - 1, -1, -1):
                W, _ = self.layers[i]
                g = W.T @ g
                if i > 0:
                    g = g * self._dact(pre[i - 1])
            return g

        return a, vjp

    def to_dict(self) -> dict:
        return {
            "layers": [{"w": W.tolist(), "b": b.tolist()} for W, b in self.layers],
            "activation": self.activation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MlpModel":
        layers = [(np.asarray(l["w"], dtype=float), np.asarray(l["b"], dtype=float))
                  for l in data["layers"]]
        return cls(layers, data.get("activation", "tanh"))


@dataclass(frozen=True, eq=False)
class MulticlassMixture:
    """Score models plus a probability vector; all models share (d, K)."""

    models: tuple
    weights: np.ndarray = None

    def __post_init__(self) -> None:
        models = tuple(self.models)
        if not models:
            raise ValueError("mixture needs at least one model")
        dims = {(f.input_dim, f.num_classes) for f in models}
        if len(dims) != 1:
            raise ValueError(f"models disagree on (d, K): {sorted(dims)}")
        if self.weights is None:
            q = np.full(len(models), 1.0 / len(models))
        else:
            q = as_vector(self.weights)
        if q.shape[0] != len(models):
            raise ValueError("weights length must equal model count")
        if np.any(q < 0) or abs(float(q.sum()) - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "weights", q)

    @property
    def m(self) -> int:
        return len(self.models)

    @property
    def dim(self) -> int:
        return self.models[0].input_dim

    @property
    def num_classes(self) -> int:
        return self.models[0].num_classes


def mixture_to_dict(mix: MulticlassMixture) -> dict:
    return {
        "models": [f.to_dict() for f in mix.models],
        "weights": mix.weights.tolist(),
    }


def mixture_from_dict(data: dict) -> MulticlassMixture:
    models = tuple(MlpModel.from_dict(d) for d in data["models"])
    weights = data.get("weights")
    q = np.asarray(weights, dtype=float) if weights is not None else None
    return MulticlassMixture(models, q)


def target_label(scores, y: int) -> int:
    """Most-confident wrong class: argmax over j != y, ties to the smallest
    index."""
    s = np.asarray(scores, dtype=float)
    if s.shape[0] < 2:
        raise ValueError("need at least 2 classes")
    masked = s.copy()
    masked[y] = -np.inf
    return int(np.argmax(masked))


def model_misclassifies(model: MlpModel, x, y: int, tol: float = 0.0) -> bool:
    """Attack-success predicate: the true-class score does not beat the best
    other score by more than tol.  Consistent with the reverse hinge hitting
    zero."""
    s = model.scores(x)
    return float(s[y] - s[target_label(s, y)]) <= tol


def zero_one_multiclass(mix: MulticlassMixture, x, y: int, tol: float = 0.0) -> float:
    return float(sum(q for q, f in zip(mix.weights, mix.models)
                     if model_misclassifies(f, x, y, tol)))


def fooled_mask_multiclass(mix: MulticlassMixture, x, y: int, tol: float = 0.0) -> int:
    mask = 0
    for i, f in enumerate(mix.models):
        if model_misclassifies(f, x, y, tol):
            mask |= 1 << i
    return mask


def rev_hinge_multiclass(
    model: MlpModel, x, y: int, target: int | None = None
) -> tuple[float, np.ndarray]:
    """max(f^(y) - f^(y_adv), 0) and its input gradient.

    y_adv defaults to the best wrong class at x itself (recomputed per call);
    pass `target` to freeze it.  Zero value means the model is fooled, and
    the gradient is zero there.
    """
    scores, vjp = model.scores_and_vjp(x)
    y_adv = target_label(scores, y) if target is None else int(target)
    margin = float(scores[y] - scores[y_adv])
    if margin <= 0:
        return 0.0, np.zeros(model.input_dim)
    ds = np.zeros(model.num_classes)
    ds[y] = 1.0
    ds[y_adv] -= 1.0
    return margin, vjp(ds)


def srh_multiclass(
    pool, x, y: int, targets=None
) -> tuple[float, np.ndarray]:
    """Mean reverse hinge over a model pool, with the mean gradient."""
    pool = list(pool)
    if not pool:
        raise ValueError("empty model pool")
    value = 0.0
    grad = None
    for j, f in enumerate(pool):
        t = None if targets is None else targets[j]
        v, g = rev_hinge_multiclass(f, x, y, target=t)
        value += v
        grad = g if grad is None else grad + g
    k = len(pool)
    return value / k, grad / k


def cross_entropy_model(model: MlpModel, x, y: int) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy of the true class and its input gradient."""
    scores, vjp = model.scores_and_vjp(x)
    shifted = scores - scores.max()
    logz = float(np.log(np.sum(np.exp(shifted))))
    value = logz - float(shifted[y])
    p = np.exp(shifted - logz)
    p[y] -= 1.0
    return value, vjp(p)


def _random_ball_point(rng: np.random.Generator, center, tm: ThreatModel) -> np.ndarray:
    c = as_vector(center)
    if tm.epsilon == 0:
        return c.copy()
    if tm.p == LINF:
        return c + rng.uniform(-tm.epsilon, tm.epsilon, size=c.shape[0])
    u = rng.standard_normal(c.shape[0])
    u /= np.linalg.norm(u)
    r = tm.epsilon * rng.uniform() ** (1.0 / c.shape[0])
    return c + r * u


def default_multiclass_config(tm: ThreatModel, steps: int = 50) -> PgdConfig:
    """Steepest-descent PGD defaults: 50 iterations, step 2.5*eps/T."""
    eps = tm.epsilon if tm.epsilon > 0 else 1.0
    return PgdConfig(steps=steps, eta=2.5 * eps / steps, mode="steepest")


def _order_indices(mix: MulticlassMixture, order, rng=None) -> list[int]:
    if isinstance(order, str):
        if order == "weight":
            return sorted(range(mix.m), key=lambda i: (-mix.weights[i], i))
        if order == "random":
            if rng is None:
                raise ValueError("random order needs an rng")
            return list(rng.permutation(mix.m))
        raise ValueError(f"unknown order {order!r}")
    perm = [int(i) for i in order]
    if sorted(perm) != list(range(mix.m)):
        raise ValueError("order must be a permutation of model indices")
    return perm


def _finish(mix, x, y, best, grad_evals, iterations, start, trace=None) -> AttackResult:
    return AttackResult(
        delta=best - x,
        fooled=fooled_mask_multiclass(mix, best, y, SUCCESS_TOL),
        error=zero_one_multiclass(mix, best, y, SUCCESS_TOL),
        grad_evals=grad_evals,
        iterations=iterations,
        wall_time=time.perf_counter() - start,
        trace=trace,
    )


def eol_pgd_multiclass(
    mix: MulticlassMixture,
    pt: LabeledPoint,
    tm: ThreatModel,
    cfg: PgdConfig | None = None,
    loss: str = "cross-entropy",
    restarts: int = 0,
    random_init: bool = False,
    rng: np.random.Generator | None = None,
    frozen_target: bool = False,
) -> AttackResult:
    """PGD on the weighted per-model loss sum, the gradient being the
    weight-averaged per-model gradient.  Optional random initialization in
    the ball and best-of-restarts selection; keeps the iterate with the
    highest mixture error."""
    start = time.perf_counter()
    if cfg is None:
        cfg = default_multiclass_config(tm)
    x, y = pt.x, pt.y
    if (restarts > 0 or random_init) and rng is None:
        raise ValueError("restarts/random_init need an rng")
    frozen = [target_label(f.scores(x), y) for f in mix.models] if frozen_target else None

    def objective(z):
        total_v, total_g = 0.0, np.zeros_like(x)
        for j, (q, f) in enumerate(zip(mix.weights, mix.models)):
            if loss == "cross-entropy":
                v, g = cross_entropy_model(f, z, y)
                total_v -= q * v  # maximize the loss
                total_g -= q * g
            elif loss == "rev-hinge":
                v, g = rev_hinge_multiclass(f, z, y,
                                            None if frozen is None else frozen[j])
                total_v += q * v  # the reverse hinge is minimized
                total_g += q * g
            else:
                raise ValueError(f"unknown loss {loss!r}")
        return total_v, total_g

    best = {"x": x.copy(), "err": zero_one_multiclass(mix, x, y, SUCCESS_TOL)}

    def follow(xi, _v):
        err = zero_one_multiclass(mix, xi, y, SUCCESS_TOL)
        if err > best["err"]:
            best["x"], best["err"] = xi.copy(), err

    grad_evals = 0
    for _ in range(restarts + 1):
        x0 = _random_ball_point(rng, x, tm) if random_init else x
        pgd_minimize(objective, x0, x, tm, cfg, track=follow)
        grad_evals += cfg.steps * mix.m
    return _finish(mix, x, y, best["x"], grad_evals, cfg.steps * (restarts + 1), start)


def loe_pgd_multiclass(
    mix: MulticlassMixture,
    pt: LabeledPoint,
    tm: ThreatModel,
    cfg: PgdConfig | None = None,
    loss: str = "cross-entropy",
) -> AttackResult:
    """PGD on the loss of the weighted-average score function.

    The gradient is computed by reverse mode straight through the averaged
    scores: each model contributes q_i * J_i(x)^T applied to the loss
    gradient of the averaged scores."""
    start = time.perf_counter()
    if cfg is None:
        cfg = default_multiclass_config(tm)
    x, y = pt.x, pt.y

    def objective(z):
        pairs = [f.scores_and_vjp(z) for f in mix.models]
        avg = sum(q * s for q, (s, _) in zip(mix.weights, pairs))
        if loss == "cross-entropy":
            shifted = avg - avg.max()
            logz = float(np.log(np.sum(np.exp(shifted))))
            value = -(logz - float(shifted[y]))
            ds = np.exp(shifted - logz)
            ds[y] -= 1.0
            ds = -ds
        elif loss == "rev-hinge":
            y_adv = target_label(avg, y)
            margin = float(avg[y] - avg[y_adv])
            if margin <= 0:
                return 0.0, np.zeros_like(z)
            value = margin
            ds = np.zeros(mix.num_classes)
            ds[y] = 1.0
            ds[y_adv] -= 1.0
        else:
            raise ValueError(f"unknown loss {loss!r}")
        grad = sum(q * vjp(ds) for q, (_, vjp) in zip(mix.weights, pairs))
        return value, grad

    best = {"x": x.copy(), "err": zero_one_multiclass(mix, x, y, SUCCESS_TOL)}

    def follow(xi, _v):
        err = zero_one_multiclass(mix, xi, y, SUCCESS_TOL)
        if err > best["err"]:
            best["x"], best["err"] = xi.copy(), err

    pgd_minimize(objective, x, x, tm, cfg, track=follow)
    return _finish(mix, x, y, best["x"], cfg.steps * mix.m, cfg.steps, start)


def arc_greedy_multiclass(
    mix: MulticlassMixture,
    pt: LabeledPoint,
    tm: ThreatModel,
    cfg: PgdConfig | None = None,
    order="weight",
    rng: np.random.Generator | None = None,
) -> AttackResult:
    """Greedy per-model baseline: attack one model at a time with PGD on its
    reverse hinge, accepting a candidate only when the mixture error strictly
    increases.  This is an in-spirit stand-in for per-classifier greedy
    attacks, not a reimplementation of any published multiclass procedure;
    it is reported as "arc-greedy"."""
    start = time.perf_counter()
    if cfg is None:
        cfg = default_multiclass_config(tm)
    x, y = pt.x, pt.y
    cur = x.copy()
    cur_err = zero_one_multiclass(mix, cur, y, SUCCESS_TOL)
    trace = [cur_err]
    grad_evals = 0
    for i in _order_indices(mix, order, rng):
        f = mix.models[i]
        cand, _ = pgd_minimize(lambda z: rev_hinge_multiclass(f, z, y),
                               cur, x, tm, cfg)
        grad_evals += cfg.steps
        cand_err = zero_one_multiclass(mix, cand, y, SUCCESS_TOL)
        if cand_err > cur_err:
            cur, cur_err = cand, cand_err
        trace.append(cur_err)
    return _finish(mix, x, y, cur, grad_evals, cfg.steps * mix.m, start, trace)


def lca_multiclass(
    mix: MulticlassMixture,
    pt: LabeledPoint,
    tm: ThreatModel,
    cfg: PgdConfig | None = None,
    order="weight",
    restarts: int = 0,
    rng: np.random.Generator | None = None,
) -> AttackResult:
    """Lattice climber for multiclass mixtures.

    Adds each model in turn to the pool, attacks the pool's mean reverse
    hinge from the current perturbed point, keeps the new perturbation only
    when the mixture error strictly increases, and then recomputes the pool
    as the exact set of fooled models.  Restarts rerun the climb with fresh
    random orders, greedily keeping the best perturbation found."""
    start = time.perf_counter()
    if cfg is None:
        cfg = default_multiclass_config(tm)
    if restarts > 0 and rng is None:
        raise ValueError("restarts need an rng")
    x, y = pt.x, pt.y

    def climb(perm):
        delta = np.zeros_like(x)
        err = zero_one_multiclass(mix, x, y, SUCCESS_TOL)
        pool = [i for i in range(mix.m)
                if model_misclassifies(mix.models[i], x, y, SUCCESS_TOL)]
        trace = [err]
        evals = 0
        for i in perm:
            trial = pool + [i] if i not in pool else list(pool)
            members = [mix.models[j] for j in trial]
            cand, _ = pgd_minimize(lambda z: srh_multiclass(members, z, y),
                                   x + delta, x, tm, cfg)
            evals += cfg.steps * len(trial)
            cand_err = zero_one_multiclass(mix, cand, y, SUCCESS_TOL)
            if cand_err > err:
                delta, err = cand - x, cand_err
            pool = [j for j in range(mix.m)
                    if model_misclassifies(mix.models[j], x + delta, y, SUCCESS_TOL)]
            trace.append(err)
        return delta, err, trace, evals

    best_delta, best_err, best_trace, grad_evals = climb(_order_indices(mix, order, rng))
    for _ in range(restarts):
        perm = list(rng.permutation(mix.m))
        delta, err, trace, evals = climb(perm)
        grad_evals += evals
        if err > best_err:
            best_delta, best_err, best_trace = delta, err, trace
    return _finish(mix, x, y, x + best_delta, grad_evals,
                   cfg.steps * mix.m * (restarts + 1), start, best_trace)


def gaussian_blobs(
    n: int, d: int, k: int, rng: np.random.Generator,
    radius: float = 2.0, spread: float = 0.6,
) -> tuple[np.ndarray, np.ndarray]:
    """Synthetic K-class task: isotropic Gaussian blobs with means spaced on
    a circle (first two coordinates) and zero elsewhere."""
    if d < 2:
        raise ValueError("blob data needs d >= 2")
    means = np.zeros((k, d))
    angles = 2 * np.pi * np.arange(k) / k
    means[:, 0] = radius * np.cos(angles)
    means[:, 1] = radius * np.sin(angles)
    labels = rng.integers(0, k, size=n)
    X = means[labels] + spread * rng.standard_normal((n, d))
    return X, labels


def train_mlp(
    X: np.ndarray,
    labels: np.ndarray,
    hidden: tuple[int, ...] = (16,),
    activation: str = "tanh",
    epochs: int = 300,
    lr: float = 0.5,
    rng: np.random.Generator | None = None,
) -> MlpModel:
    """Plain full-batch gradient descent on softmax cross-entropy.

    Fixture generator only: small widths, no regularization, no batching.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    n, d = X.shape
    k = int(labels.max()) + 1
    sizes = [d, *hidden, k]
    act, dact = _activation(activation)
    Ws = [rng.standard_normal((sizes[i + 1], sizes[i])) / np.sqrt(sizes[i])
          for i in range(len(sizes) - 1)]
    bs = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    for _ in range(epochs):
        acts = [X]
        pre = []
        a = X
        for i, (W, b) in enumerate(zip(Ws, bs)):
            z = a @ W.T + b
            pre.append(z)
            a = act(z) if i < len(Ws) - 1 else z
            acts.append(a)
        shifted = a - a.max(axis=1, keepdims=True)
        p = np.exp(shifted)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / n
        for i in range(len(Ws) - 1, -1, -1):
            Ws[i] -= lr * (g.T @ acts[i])
            bs[i] -= lr * g.sum(axis=0)
            if i > 0:
                g = (g @ Ws[i]) * dact(pre[i - 1])
    return MlpModel(list(zip(Ws, bs)), activation)


def low_alignment_pair(theta_deg: float, margin: float = 0.7) -> MulticlassMixture:
    """Two-model, two-class fixture with opposing attack directions.

    Each model scores class 0 as u.x + c and class 1 as its negation, with
    the two u directions separated by theta degrees and both boundaries at
    `margin` from the origin.  The true label at the origin is 0 for both
    models; jointly fooling them requires entering the wedge where both
    u_i.x <= -c, which shrinks to nothing as theta approaches 180 degrees.
    """
    half = np.deg2rad(theta_deg) / 2.0
    models = []
    for sign in (+1.0, -1.0):
        u = np.array([np.cos(sign * half), np.sin(sign * half)])
        W = np.stack([u, -u])
        b = np.array([margin, -margin])
        models.append(MlpModel([(W, b)]))
    return MulticlassMixture(tuple(models))
