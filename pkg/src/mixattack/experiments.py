"""Synthetic experiment harness: angle sweep, random-mixture sweep,
maximality audit, and a desk-scale multiclass comparison.

Every experiment is a pure function of its config (master seed included):
each trial draws from its own counter-based stream keyed by (seed, trial),
so results are reproducible and trials can run in parallel in any order.
Only wall-time fields vary between runs.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .attacks import (
    AttackResult,
    PgdConfig,
    arc_linear,
    eol_pgd_linear,
    lca_linear,
    lemma_pgd_config,
)
from .geometry import ThreatModel
from .lattice import build_lattice, maximal_elements, optimal_attack_bruteforce
from .linear import (
    LabeledPoint,
    LinearClassifier,
    Mixture,
    mixture_to_dict,
    sample_random_mixture,
    trial_rng,
)
from .multiclass import (
    MulticlassMixture,
    arc_greedy_multiclass,
    eol_pgd_multiclass,
    gaussian_blobs,
    lca_multiclass,
    loe_pgd_multiclass,
    train_mlp,
    zero_one_multiclass,
)

# two-sided 99% normal quantile
Z99 = 2.5758293035489004

LINEAR_ATTACKS = ("eol-pgd", "arc", "lca")
MULTICLASS_ATTACKS = ("eol-pgd", "loe-pgd", "arc-greedy", "lca")
EXPERIMENTS = ("sweep-angle", "random-linear", "maximality-audit", "multiclass-demo")

ANGLE_CSV_HEADER = ["theta_deg", "attack", "error", "oracle_error",
                    "grad_evals", "wall_time_s"]
RANDOM_CSV_HEADER = ["m", "trial", "attack", "error", "grad_evals", "wall_time_s"]
SUMMARY_CSV_HEADER = ["m", "attack", "mean_error", "ci99_lo", "ci99_hi",
                      "mean_ratio_to_lca", "mean_time_s"]


@dataclass
class SweepConfig:
    """Settings for one experiment run; unused fields are ignored by the
    experiments that do not need them."""

    experiment: str
    d: int = 128
    m_values: tuple[int, ...] = tuple(range(1, 11))
    trials: int = 200
    alpha: float = 0.25
    beta: float = 0.2
    temperature: float = 10.0
    norm: str = "l2"
    epsilon: float = 1.0
    attacks: tuple[str, ...] = LINEAR_ATTACKS
    steps: int | None = None
    eta: float | None = None
    seed: int = 42
    jobs: int = 1
    # angle sweep
    theta_step_deg: float = 5.0
    classifier_distance: float = 0.7
    # maximality audit
    d_values: tuple[int, ...] = (2, 3, 4, 5, 6, 7, 8)
    # multiclass demo
    k_classes: int = 3
    hidden: tuple[int, ...] = (16,)
    train_n: int = 240
    test_n: int = 60
    epochs: int = 300

    def threat_model(self) -> ThreatModel:
        if self.norm == "l2":
            return ThreatModel.l2(self.epsilon)
        if self.norm == "linf":
            return ThreatModel.linf(self.epsilon)
        raise ValueError(f"norm: must be 'l2' or 'linf', got {self.norm!r}")


def validate_config(cfg: SweepConfig) -> None:
    """Raise ValueError naming the offending field."""
    if cfg.experiment not in EXPERIMENTS:
        raise ValueError(f"experiment: unknown experiment {cfg.experiment!r}")
    if cfg.trials < 1:
        raise ValueError("trials: must be >= 1")
    if cfg.d < 1:
        raise ValueError("d: must be >= 1")
    if not cfg.m_values or any(m < 1 for m in cfg.m_values):
        raise ValueError("m_values: need positive classifier counts")
    if cfg.beta <= 0:
        raise ValueError("beta: must be > 0")
    if cfg.temperature <= 0:
        raise ValueError("temperature: must be > 0")
    if cfg.epsilon < 0:
        raise ValueError("epsilon: must be >= 0")
    if cfg.norm not in ("l2", "linf"):
        raise ValueError(f"norm: must be 'l2' or 'linf', got {cfg.norm!r}")
    if cfg.jobs < 1:
        raise ValueError("jobs: must be >= 1")
    if cfg.theta_step_deg <= 0 or cfg.theta_step_deg > 180:
        raise ValueError("theta_step_deg: must be in (0, 180]")
    if cfg.classifier_distance <= 0:
        raise ValueError("classifier_distance: must be > 0")
    known = set(LINEAR_ATTACKS) | set(MULTICLASS_ATTACKS)
    for a in cfg.attacks:
        if a not in known:
            raise ValueError(f"attacks: unknown attack {a!r}")


@dataclass
class TrialRecord:
    """One trial's outcomes: per-attack error/time/gradient counts, the
    oracle error when computed, and whether the trial was flagged
    near-degenerate by the feasibility oracle."""

    trial: int
    m: int
    errors: dict[str, float] = field(default_factory=dict)
    wall_times: dict[str, float] = field(default_factory=dict)
    grad_evals: dict[str, int] = field(default_factory=dict)
    oracle_error: float | None = None
    degenerate: bool = False
    theta_deg: float | None = None


def run_linear_attack(
    name: str,
    mix: Mixture,
    pt: LabeledPoint,
    tm: ThreatModel,
    steps: int | None = None,
    eta: float | None = None,
    order="weight",
) -> AttackResult:
    """Dispatch one binary-linear attack with its standard defaults."""
    if name == "arc":
        return arc_linear(mix, pt, tm, order=order)
    cfg = lemma_pgd_config(mix.m, tm)
    if steps is not None:
        eps = tm.epsilon if tm.epsilon > 0 else 1.0
        cfg = PgdConfig(steps=steps, eta=eps / math.sqrt(steps))
    if eta is not None:
        cfg = PgdConfig(steps=cfg.steps, eta=eta, mode=cfg.mode)
    if name == "eol-pgd":
        return eol_pgd_linear(mix, pt, tm, cfg)
    if name == "lca":
        return lca_linear(mix, pt, tm, cfg, order=order)
    raise ValueError(f"unknown linear attack {name!r}")


def two_classifier_fan(theta_deg: float, distance: float) -> Mixture:
    """Two unit-normal classifiers at the given boundary distance from the
    origin, normals separated by theta degrees, uniform weights."""
    half = math.radians(theta_deg) / 2.0
    w1 = np.array([math.cos(half), math.sin(half)])
    w2 = np.array([math.cos(-half), math.sin(-half)])
    return Mixture((LinearClassifier(w1, -distance),
                    LinearClassifier(w2, -distance)))


def run_angle_sweep(cfg: SweepConfig) -> list[TrialRecord]:
    """Error of each attack vs. the optimal error as the two classifiers'
    normals rotate apart (0 to 180 degrees)."""
    validate_config(cfg)
    tm = cfg.threat_model()
    thetas = np.arange(0.0, 180.0 + 1e-9, cfg.theta_step_deg)
    records = []
    for idx, theta in enumerate(thetas):
        mix = two_classifier_fan(float(theta), cfg.classifier_distance)
        pt = LabeledPoint(np.zeros(2), -1)
        rec = TrialRecord(trial=idx, m=2, theta_deg=float(theta))
        for name in cfg.attacks:
            steps = cfg.steps if cfg.steps is not None else (100 if name == "eol-pgd" else None)
            res = run_linear_attack(name, mix, pt, tm, steps=steps, eta=cfg.eta)
            rec.errors[name] = res.error
            rec.wall_times[name] = res.wall_time
            rec.grad_evals[name] = res.grad_evals
        _, opt = optimal_attack_bruteforce(mix, pt, tm)
        rec.oracle_error = opt
        records.append(rec)
    return records


def _random_linear_trial(cfg: SweepConfig, m: int, trial: int) -> TrialRecord:
    rng = trial_rng(cfg.seed, m, trial)
    mix = sample_random_mixture(cfg.d, m, cfg.alpha, cfg.beta, cfg.temperature, rng)
    pt = LabeledPoint(np.zeros(cfg.d), -1)
    tm = cfg.threat_model()
    rec = TrialRecord(trial=trial, m=m)
    for name in cfg.attacks:
        res = run_linear_attack(name, mix, pt, tm, steps=cfg.steps, eta=cfg.eta)
        rec.errors[name] = res.error
        rec.wall_times[name] = res.wall_time
        rec.grad_evals[name] = res.grad_evals
    return rec


def run_random_linear(cfg: SweepConfig) -> tuple[list[TrialRecord], list[dict]]:
    """Random high-dimensional mixtures: per-trial attack errors plus a
    per-m summary with normal-approximation 99% confidence intervals and
    mean per-trial error ratios against the lattice climber."""
    validate_config(cfg)
    payloads = [(m, t) for m in cfg.m_values for t in range(cfg.trials)]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            records = list(pool.map(_trial_star, [(cfg, m, t) for m, t in payloads],
                                    chunksize=8))
    else:
        records = [_random_linear_trial(cfg, m, t) for m, t in payloads]
    records.sort(key=lambda r: (r.m, r.trial))

    summary = []
    for m in cfg.m_values:
        group = [r for r in records if r.m == m]
        lca_errors = np.array([r.errors.get("lca", math.nan) for r in group])
        for name in cfg.attacks:
            errs = np.array([r.errors[name] for r in group])
            times = np.array([r.wall_times[name] for r in group])
            mean = float(errs.mean())
            if len(errs) > 1:
                half = Z99 * float(errs.std(ddof=1)) / math.sqrt(len(errs))
            else:
                half = 0.0
            valid = lca_errors > 0
            ratio = float((errs[valid] / lca_errors[valid]).mean()) if valid.any() else math.nan
            summary.append({
                "m": m,
                "attack": name,
                "mean_error": mean,
                "ci99_lo": mean - half,
                "ci99_hi": mean + half,
                "mean_ratio_to_lca": ratio,
                "mean_time_s": float(times.mean()),
            })
    return records, summary


def _trial_star(args):
    return _random_linear_trial(*args)


def _audit_trial(cfg: SweepConfig, trial: int) -> dict:
    rng = trial_rng(cfg.seed, trial)
    m = int(rng.choice(np.asarray(cfg.m_values)))
    d = int(rng.choice(np.asarray(cfg.d_values)))
    mix = sample_random_mixture(d, m, cfg.alpha, cfg.beta, cfg.temperature, rng)
    pt = LabeledPoint(np.zeros(d), -1)
    tm = cfg.threat_model()
    lat = build_lattice(mix, pt, tm)
    res = run_linear_attack("lca", mix, pt, tm, steps=cfg.steps)
    maximal = maximal_elements(lat)
    entry = {
        "trial": trial,
        "m": m,
        "d": d,
        "degenerate": lat.any_degenerate,
        "fooled": list(res.fooled_indices),
        "error": res.error,
        "passed": res.fooled in maximal,
    }
    if not entry["passed"] and not entry["degenerate"]:
        entry["maximal"] = [sorted(_bits(s)) for s in maximal]
        entry["mixture"] = mixture_to_dict(mix)
    return entry


def _bits(mask: int) -> list[int]:
    return [i for i in range(mask.bit_length()) if mask >> i & 1]


def _audit_star(args):
    return _audit_trial(*args)


def run_maximality_audit(cfg: SweepConfig) -> dict:
    """Check, over random mixtures, that the lattice climber's fooled set is
    always a maximal element of the adversarial lattice.  Trials flagged
    near-degenerate by the feasibility oracle are excluded from the pass
    fraction (but counted)."""
    validate_config(cfg)
    if any(m > 8 for m in cfg.m_values):
        raise ValueError("m_values: audit requires m <= 8 (lattice brute force)")
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            entries = list(pool.map(_audit_star,
                                    [(cfg, t) for t in range(cfg.trials)],
                                    chunksize=4))
    else:
        entries = [_audit_trial(cfg, t) for t in range(cfg.trials)]
    entries.sort(key=lambda e: e["trial"])
    considered = [e for e in entries if not e["degenerate"]]
    failures = [e for e in considered if not e["passed"]]
    return {
        "trials": len(entries),
        "non_degenerate": len(considered),
        "degenerate_excluded": len(entries) - len(considered),
        "pass_fraction": (1.0 - len(failures) / len(considered)) if considered else math.nan,
        "failures": failures,
    }


def run_multiclass_demo(cfg: SweepConfig) -> list[dict]:
    """Clean vs. under-attack expected accuracy of small trained-MLP
    mixtures on held-out blob data; one row per mixture."""
    validate_config(cfg)
    tm = cfg.threat_model()
    rows = []
    for m in cfg.m_values:
        data_rng = trial_rng(cfg.seed, m, 0)
        X, labels = gaussian_blobs(cfg.train_n, cfg.d, cfg.k_classes, data_rng)
        models = tuple(
            train_mlp(X, labels, hidden=cfg.hidden, epochs=cfg.epochs,
                      rng=trial_rng(cfg.seed, m, 1 + i))
            for i in range(m)
        )
        mix = MulticlassMixture(models)
        Xt, yt = gaussian_blobs(cfg.test_n, cfg.d, cfg.k_classes,
                                trial_rng(cfg.seed, m, 999))
        row = {"mixture": f"mlp{cfg.hidden}/{m}"}
        clean = [1.0 - zero_one_multiclass(mix, x, int(y)) for x, y in zip(Xt, yt)]
        row["clean"] = float(np.mean(clean))
        for name in MULTICLASS_ATTACKS:
            accs = []
            for j, (x, y) in enumerate(zip(Xt, yt)):
                pt = LabeledPoint(x, int(y))
                res = run_multiclass_attack(name, mix, pt, tm, steps=cfg.steps,
                                            rng=trial_rng(cfg.seed, m, 5000 + j))
                accs.append(1.0 - res.error)
            row[name] = float(np.mean(accs))
        rows.append(row)
    return rows


def run_multiclass_attack(
    name: str,
    mix: MulticlassMixture,
    pt: LabeledPoint,
    tm: ThreatModel,
    steps: int | None = None,
    eta: float | None = None,
    order="weight",
    restarts: int = 0,
    rng: np.random.Generator | None = None,
) -> AttackResult:
    """Dispatch one multiclass attack with its standard defaults."""
    cfg = None
    if steps is not None or eta is not None:
        base = 50 if steps is None else steps
        eps = tm.epsilon if tm.epsilon > 0 else 1.0
        cfg = PgdConfig(steps=base, eta=eta if eta is not None else 2.5 * eps / base,
                        mode="steepest")
    if name == "eol-pgd":
        return eol_pgd_multiclass(mix, pt, tm, cfg, restarts=restarts,
                                  random_init=restarts > 0, rng=rng)
    if name == "loe-pgd":
        return loe_pgd_multiclass(mix, pt, tm, cfg)
    if name == "arc-greedy":
        return arc_greedy_multiclass(mix, pt, tm, cfg, order=order, rng=rng)
    if name == "lca":
        return lca_multiclass(mix, pt, tm, cfg, order=order,
                              restarts=restarts, rng=rng)
    raise ValueError(f"unknown multiclass attack {name!r}")


def write_angle_csv(records: list[TrialRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(ANGLE_CSV_HEADER)
        for rec in records:
            for name in rec.errors:
                out.writerow([rec.theta_deg, name, rec.errors[name],
                              rec.oracle_error, rec.grad_evals[name],
                              rec.wall_times[name]])
            out.writerow([rec.theta_deg, "oracle", rec.oracle_error,
                          rec.oracle_error, 0, 0.0])


def write_random_csv(records: list[TrialRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(RANDOM_CSV_HEADER)
        for rec in records:
            for name in rec.errors:
                out.writerow([rec.m, rec.trial, name, rec.errors[name],
                              rec.grad_evals[name], rec.wall_times[name]])


def write_summary_csv(summary: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(SUMMARY_CSV_HEADER)
        for row in summary:
            out.writerow([row[k] for k in SUMMARY_CSV_HEADER])


def write_demo_csv(rows: list[dict], path) -> None:
    header = ["mixture", "clean", *MULTICLASS_ATTACKS]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for row in rows:
            out.writerow([row[k] for k in header])


def run_experiment_to_dir(cfg: SweepConfig, outdir) -> list[Path]:
    """Run the configured experiment, writing its output files and a
    manifest (config echo + seed + version) into outdir."""
    from . import __version__

    validate_config(cfg)
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    if cfg.experiment == "sweep-angle":
        records = run_angle_sweep(cfg)
        path = out / "angle_sweep.csv"
        write_angle_csv(records, path)
        written.append(path)
    elif cfg.experiment == "random-linear":
        records, summary = run_random_linear(cfg)
        path = out / "random_linear.csv"
        write_random_csv(records, path)
        written.append(path)
        spath = out / "random_linear_summary.csv"
        write_summary_csv(summary, spath)
        written.append(spath)
    elif cfg.experiment == "maximality-audit":
        report = run_maximality_audit(cfg)
        path = out / "maximality_report.json"
        path.write_text(json.dumps(report, indent=2))
        written.append(path)
    elif cfg.experiment == "multiclass-demo":
        rows = run_multiclass_demo(cfg)
        path = out / "multiclass_demo.csv"
        write_demo_csv(rows, path)
        written.append(path)
    manifest = {
        "experiment": cfg.experiment,
        "config": asdict(cfg),
        "seed": cfg.seed,
        "version": __version__,
    }
    mpath = out / "manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2))
    written.append(mpath)
    return written
