"""ADE/FDE evaluation over sweeping horizons."""

from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import State, Trajectory
from .predictor import MoDSampler, PredictionResult, PredictorParams, cvm_predict, predict_ranked, rank_results

__all__ = [
    "CaseOutcome",
    "EvalCase",
    "EvaluationReport",
    "MetricRow",
    "UndefinedCaseError",
    "ade",
    "evaluate",
    "evaluate_detailed",
    "fde",
    "make_eval_cases",
    "run_cases",
    "score",
    "write_per_case_log",
    "write_results",
]

MOST_LIKELY = "most_likely"
MEAN_OVER_K = "mean_over_k"


class UndefinedCaseError(ValueError):
    """A metric was requested on an empty prediction or ground truth."""


@dataclass
class EvalCase:
    observation: list[State]
    ground_truth: list[State]
    start_time: float
    case_id: str = ""

    def __post_init__(self):
        if len(self.ground_truth) < 1:
            raise ValueError("ground truth needs at least one state")
        if len(self.observation) < 1:
            raise ValueError("observation needs at least one state")


@dataclass(frozen=True)
class MetricRow:
    horizon: float
    ade_mean: float
    ade_std: float
    fde_mean: float
    fde_std: float
    n_cases: int


def _xy(seq) -> np.ndarray:
    if isinstance(seq, np.ndarray):
        return seq.reshape(-1, 2)
    return np.array([(s.x, s.y) if hasattr(s, "x") else (s[0], s[1]) for s in seq], dtype=float).reshape(-1, 2)


def _errors(pred, gt) -> np.ndarray:
    p, g = _xy(pred), _xy(gt)
    n = min(len(p), len(g))
    if n == 0:
        raise UndefinedCaseError("empty prediction or ground truth")
    return np.hypot(p[:n, 0] - g[:n, 0], p[:n, 1] - g[:n, 1])


def ade(pred, gt) -> float:
    """Mean Euclidean error over the first ``min(len(pred), len(gt))`` steps."""
    e = _errors(pred, gt)
    return math.fsum(e) / len(e)


def fde(pred, gt) -> float:
    """Euclidean error at the last compared step."""
    return float(_errors(pred, gt)[-1])


def make_eval_cases(trajectories: Iterable[Trajectory], obs_steps: int = 3, max_steps: int = 60) -> list[EvalCase]:
    """First ``obs_steps`` samples observe, up to ``max_steps`` following samples are ground truth."""
    cases = []
    for tr in trajectories:
        if len(tr) < obs_steps + 1:
            continue
        states = tr.states()
        cases.append(
            EvalCase(
                states[:obs_steps],
                states[obs_steps : obs_steps + max_steps],
                float(tr.t[obs_steps - 1]),
                tr.person_id,
            )
        )
    return cases


@dataclass
class CaseOutcome:
    case: EvalCase
    results: list[PredictionResult]
    runtime_s: float


def run_cases(
    cases: Sequence[EvalCase],
    sampler: MoDSampler | None,
    params: PredictorParams,
    seed: int = 0,
) -> list[CaseOutcome]:
    """Predict every case. ``sampler=None`` runs the constant-velocity baseline.

    Case ``i`` always gets the ``i``-th child of ``SeedSequence(seed)``, so
    results do not depend on evaluation order.
    """
    children = np.random.SeedSequence(seed).spawn(len(cases))
    out = []
    for case, ss in zip(cases, children):
        t0 = time.perf_counter()
        if sampler is None:
            results = [cvm_predict(case.observation, params.T_p, params.dt, params.sigma, params.normalize_obs_weights)]
        else:
            results = predict_ranked(case.observation, sampler, params, case.start_time, np.random.default_rng(ss))
        out.append(CaseOutcome(case, results, time.perf_counter() - t0))
    return out


def _mean_std(values: list[float]) -> tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    var = math.fsum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


@dataclass
class EvaluationReport:
    rows: list[MetricRow]
    per_case: list[dict] = field(default_factory=list)
    skipped: dict[float, int] = field(default_factory=dict)
    mean_runtime_ms: float = float("nan")


def score(
    outcomes: Sequence[CaseOutcome],
    horizons: Sequence[float],
    dt: float = 1.0,
    selection: str = MOST_LIKELY,
    rerank_per_horizon: bool = False,
) -> EvaluationReport:
    """Aggregate ADE/FDE per horizon.

    ``most_likely`` scores the top-ranked rollout that reached at least one
    step; ``mean_over_k`` averages the metrics of all non-empty rollouts. By
    default the ranking uses full-rollout fitness; ``rerank_per_horizon``
    re-accumulates fitness up to each horizon.
    """
    if selection not in (MOST_LIKELY, MEAN_OVER_K):
        raise ValueError(f"unknown selection {selection!r}")
    rows, per_case, skipped = [], [], {}
    for h in horizons:
        n = int(round(h / dt))
        ades, fdes = [], []
        for oc in outcomes:
            gt = oc.case.ground_truth[:n]
            live = [r for r in oc.results if len(r)]
            if not live:
                skipped[h] = skipped.get(h, 0) + 1
                continue
            if selection == MOST_LIKELY:
                best = rank_results(live, n if rerank_per_horizon else None)[0]
                pred = best.positions()[:n]
                a, f = ade(pred, gt), fde(pred, gt)
                n_cmp = min(len(pred), len(gt))
            else:
                pa = [_xy(r.positions()[:n]) for r in live]
                a = math.fsum(ade(p, gt) for p in pa) / len(pa)
                f = math.fsum(fde(p, gt) for p in pa) / len(pa)
                n_cmp = max(min(len(p), len(gt)) for p in pa)
            ades.append(a)
            fdes.append(f)
            per_case.append({"case_id": oc.case.case_id, "horizon_s": h, "ade": a, "fde": f, "n_compared": n_cmp})
        if ades:
            am, asd = _mean_std(ades)
            fm, fsd = _mean_std(fdes)
            rows.append(MetricRow(float(h), am, asd, fm, fsd, len(ades)))
    runtime = math.fsum(o.runtime_s for o in outcomes) / len(outcomes) * 1000.0 if outcomes else float("nan")
    return EvaluationReport(rows, per_case, skipped, runtime)


def evaluate_detailed(
    cases: Sequence[EvalCase],
    sampler: MoDSampler | None,
    params: PredictorParams,
    horizons: Sequence[float],
    selection: str = MOST_LIKELY,
    seed: int = 0,
    rerank_per_horizon: bool = False,
) -> EvaluationReport:
    if not cases:
        raise ValueError("no evaluation cases")
    horizons = list(horizons)
    if max(horizons) > params.T_p * params.dt + 1e-9:
        raise ValueError(f"horizon {max(horizons)} s exceeds T_p * dt = {params.T_p * params.dt} s")
    return score(run_cases(cases, sampler, params, seed), horizons, params.dt, selection, rerank_per_horizon)


def evaluate(
    cases: Sequence[EvalCase],
    sampler: MoDSampler | None,
    params: PredictorParams,
    horizons: Sequence[float],
    selection: str = MOST_LIKELY,
    seed: int = 0,
    rerank_per_horizon: bool = False,
) -> list[MetricRow]:
    return evaluate_detailed(cases, sampler, params, horizons, selection, seed, rerank_per_horizon).rows


RESULT_COLUMNS = (
    "method",
    "dataset",
    "horizon_s",
    "n_cases",
    "ade_mean",
    "ade_std",
    "fde_mean",
    "fde_std",
    "mean_runtime_ms",
)


def write_results(path: str | os.PathLike, blocks: Iterable[tuple[str, str, EvaluationReport]]) -> None:
    """Results table; metrics are rendered with 3 decimals."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_COLUMNS)
        for method, dataset, rep in blocks:
            for r in rep.rows:
                w.writerow(
                    [
                        method,
                        dataset,
                        f"{r.horizon:g}",
                        r.n_cases,
                        f"{r.ade_mean:.3f}",
                        f"{r.ade_std:.3f}",
                        f"{r.fde_mean:.3f}",
                        f"{r.fde_std:.3f}",
                        f"{rep.mean_runtime_ms:.3f}",
                    ]
                )


def write_per_case_log(path: str | os.PathLike, blocks: Iterable[tuple[str, str, EvaluationReport]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "dataset", "case_id", "horizon_s", "ade", "fde", "n_compared"])
        for method, dataset, rep in blocks:
            for row in rep.per_case:
                w.writerow(
                    [
                        method,
                        dataset,
                        row["case_id"],
                        f"{row['horizon_s']:g}",
                        f"{row['ade']:.6f}",
                        f"{row['fde']:.6f}",
                        row["n_compared"],
                    ]
                )
