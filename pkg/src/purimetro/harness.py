"""Trial orchestration: per-trial seeding, shot sampling, CIs and layer selection."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import channels as chn
from . import engine as eng
from . import tasks as tk
from .stats import (  # noqa: F401  (re-exported)
    EstimateRecord,
    confidence_interval,
    exact_moments,
    make_rng,
    shot_sample_ratio,
    splitmix64,
    trial_seed,
)

L_MAX_MULTI = 3
L_MAX_SINGLE = 5


@dataclass(frozen=True)
class ExperimentSpec:
    task: tk.TaskSpec
    noise: chn.NoiseModel = field(default_factory=chn.NoiseModel)
    mitigation: eng.PurificationConfig = field(default_factory=eng.PurificationConfig)
    shots: int | None = None
    trials: int = 1
    master_seed: int = 0
    pec_assumed_noise: tuple | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.shots is not None and self.shots < 1:
            raise ValueError("shots must be >= 1 in shot mode")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    @property
    def exact(self) -> bool:
        return self.shots is None


def default_l_max(task: tk.TaskSpec) -> int:
    return L_MAX_MULTI if task.kind.startswith("multiparam") else L_MAX_SINGLE


def method_label(config: eng.PurificationConfig) -> str:
    return config.method


def run_experiment(spec: ExperimentSpec) -> list[EstimateRecord]:
    """One record per trial (a single record in exact mode), sorted by (method, N, trial).

    The circuit output is computed once; each trial then draws its shots
    from an independent Philox stream seeded by ``trial_seed(master, i)``.
    """
    task, cfg = spec.task, spec.mitigation
    if task.kind == "multiparam-feedback":
        raise ValueError("use run_feedback for feedback tasks")
    circuit = tk.build_circuit(task, spec.noise)
    n_trials = 1 if spec.exact else spec.trials
    records = []
    out = None
    if task.kind != "zeeman-parallel":
        out = tk.method_output(circuit, spec.noise, cfg, signed=not spec.exact,
                               pec_assumed=spec.pec_assumed_noise)
    for i in range(n_trials):
        seed = trial_seed(spec.master_seed, i)
        rng = make_rng(seed)
        try:
            if out is None:
                est = tk.estimate_distribution(circuit, spec.noise, cfg, spec.shots, rng)
            else:
                est = _estimate_from_output(out, circuit, spec.shots, rng)
        except eng.PurificationBreakdown:
            if spec.exact:
                raise
            # a sampled denominator of zero: record the trial as failed
            nan = float("nan")
            k = task.n_outcomes
            est = tk.MethodEstimate(np.full(k, nan), np.full(k, nan), 0.0, out.gamma, nan)
        params = tk.estimate_params(task, est.probs) if np.all(np.isfinite(est.probs)) \
            else tuple([float("nan")] * len(task.true_params))
        records.append(EstimateRecord(
            trial=i, method=method_label(cfg), N=task.N, params=tuple(params),
            gap=tk.gap(task.true_params, params), p=spec.noise.cswap.p,
            layers=cfg.layers, m=cfg.m, numerators=tuple(est.numerators),
            denominator=est.denominator, gamma=est.gamma, eta=est.eta, seed=seed,
        ))
    attach_intervals(records)
    return sorted(records, key=EstimateRecord.sort_key)


def _estimate_from_output(out: eng.CircuitOutput, circuit, shots, rng) -> tk.MethodEstimate:
    exact_nums, _, exact_den = out.outcome_ratios()
    if shots is None:
        nums, den = exact_nums, exact_den
    else:
        nums, den = shot_sample_ratio(out.joint_distribution(), shots, rng, out.gamma)
    if abs(den) < eng.DENOMINATOR_FLOOR:
        raise eng.PurificationBreakdown(f"denominator {den:.3g} below {eng.DENOMINATOR_FLOOR}")
    nums = tk._reorder(nums, circuit.outcome_order)
    return tk.MethodEstimate(tk.normalise_probs(nums / den), nums, float(den), out.gamma, float(exact_den))


def attach_intervals(records: Sequence[EstimateRecord]) -> None:
    """Fill ci_low/ci_high of every record with the gap interval of its (method, N, layers, m) group."""
    groups = defaultdict(list)
    for r in records:
        groups[(r.method, r.N, r.layers, r.m)].append(r)
    for group in groups.values():
        gaps = [r.gap for r in group]
        if len(group) < 2 or not np.all(np.isfinite(gaps)):
            continue
        _, lo, hi = confidence_interval(gaps)
        for r in group:
            r.ci_low, r.ci_high = lo, hi


def select_optimal_layer(records: Iterable[EstimateRecord]) -> int:
    """L with the smallest mean gap (oracle selection); ties go to the smaller L."""
    by_l = defaultdict(list)
    for r in records:
        by_l[r.layers].append(r.gap)
    if not by_l:
        raise ValueError("no records to select from")

    def score(L):
        g = np.asarray(by_l[L], dtype=float)
        # a layer count with failed trials never wins
        return (float(g.mean()) if np.all(np.isfinite(g)) else float("inf"), L)

    return min(sorted(by_l), key=score)


def run_layer_scan(spec: ExperimentSpec, l_max: int | None = None) -> tuple[int, list[EstimateRecord]]:
    """Run L = 1..l_max and return L* with the records at L*."""
    cfg = spec.mitigation
    if not cfg.is_channel:
        return 1, run_experiment(spec)
    l_max = l_max or default_l_max(spec.task)
    all_records = {}
    for L in range(1, l_max + 1):
        all_records[L] = run_experiment(replace(spec, mitigation=replace(cfg, layers=L)))
    best = select_optimal_layer(r for recs in all_records.values() for r in recs)
    return best, all_records[best]


def run_feedback(spec: ExperimentSpec, iterations: int) -> list[EstimateRecord]:
    """Feedback loop per trial; records carry iteration and prob_gap extras."""
    out = []
    for i in range(spec.trials):
        seed = trial_seed(spec.master_seed, i)
        recs = tk.run_feedback_loop(
            spec.task, spec.noise, spec.mitigation, iterations, spec.shots,
            make_rng(seed), pec_assumed=spec.pec_assumed_noise,
        )
        for r in recs:
            r.trial, r.seed, r.p = i, seed, spec.noise.cswap.p
        out.extend(recs)
    return sorted(out, key=lambda r: (r.method, r.N, r.trial, r.extra["iteration"]))
