"""Experiment orchestration: seeded scenario runs, classification, reports.

Runs are independent given their derived seeds, so the scenario executor
advances many runs in lockstep on batched arrays instead of looping rounds in
Python per run; every run still owns the exact random streams it would have
solo (seed derivation and stream layout match :func:`vecgames.bilevel
.simulate_run`), and the arithmetic goes through the same kernels as the
round-by-round reference engine.  The batch width is a fixed internal
constant so repeated executions are bit-identical.

Each finished run is classified by the joint action profile holding a strict
plurality over its final rounds, mapped through the labeled pure equilibria of
the objective-scalarized game; anything else counts as ``"None"``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .bandit_core import omd_entropy_raw, sample_from_uniform
from .bilevel import (
    ESTIMATE_TOL,
    BlockSchedule,
    RunHistory,
    block_indices,
    scalar_reward_table,
    simulate_run,
    stream_seeds,
)
from .config import ExperimentConfig, resolved_items
from .games import VectorGame, profile_label, pure_nash, scalarized_game

#: Fixed lockstep width of the batched executor.
BATCH_SIZE = 500

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def derive_run_seed(master_seed: int, run_id: int) -> int:
    """Per-run seed: splitmix64 finalizer of ``master + (run_id+1) * golden``.

    The constants are fixed so that an independent reimplementation can
    reproduce the same run partitioning even if its random streams differ.
    """
    x = (int(master_seed) + _GOLDEN * (int(run_id) + 1)) & _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


@dataclass
class RunRecord:
    """Summary of one finished run."""

    run_id: int
    seed: int
    outcome: str
    mean_obj_reward: float
    final_outer: np.ndarray | None = None
    series_focal: np.ndarray | None = None
    series_opp: np.ndarray | None = None


@dataclass
class OutcomeHistogram:
    """Counts and fractions of run outcomes over a fixed label order."""

    counts: dict[str, int]

    @property
    def runs(self) -> int:
        return sum(self.counts.values())

    @property
    def fractions(self) -> dict[str, float]:
        total = self.runs
        return {label: count / total for label, count in self.counts.items()}

    def to_json_dict(self) -> dict:
        fractions = self.fractions
        return {
            "runs": self.runs,
            "labels": {
                label: {"count": count, "fraction": fractions[label]}
                for label, count in self.counts.items()
            },
        }


def equilibrium_labels(
    game: VectorGame, objective, opponent_weight
) -> dict[tuple[int, ...], str]:
    """Labeled pure equilibria of the objective-scalarized game."""
    sg = scalarized_game(game, [objective, opponent_weight])
    return {prof: profile_label(game, prof) for prof in sorted(pure_nash(sg))}


def _classify_counts(counts: np.ndarray, code_labels: dict[int, str]) -> str:
    top = int(np.argmax(counts))
    if int((counts == counts[top]).sum()) > 1:
        return "None"
    return code_labels.get(top, "None")


def classify_outcome(
    history: RunHistory, window: int, diagonal_labels: dict[tuple[int, ...], str]
) -> str:
    """Label a run by the strict-plurality profile of its final ``window`` rounds.

    A plurality profile that is not a labeled equilibrium, or a tie for the
    plurality, yields ``"None"``.
    """
    if not 1 <= window <= history.horizon:
        raise ValueError(f"window must lie in 1..{history.horizon}")
    n_opp = history.obj_reward_table.shape[1]
    codes = history.actions[-window:] * n_opp + history.opp_actions[-window:]
    counts = np.bincount(codes, minlength=history.num_actions * n_opp)
    code_labels = {a * n_opp + b: lab for (a, b), lab in diagonal_labels.items()}
    return _classify_counts(counts, code_labels)


def moving_average(series, window: int) -> np.ndarray:
    """Trailing mean over the last ``window`` entries, length-preserving.

    ``out[t]`` averages ``series[max(0, t-window+1) .. t]``; a window of 1 is
    the identity.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    arr = np.asarray(series, dtype=float)
    if arr.ndim == 0:
        raise ValueError("series must be a sequence")
    if window == 1:
        return arr.copy()
    return _moving_average_last_axis(arr, window)


def _moving_average_last_axis(arr: np.ndarray, window: int) -> np.ndarray:
    n = arr.shape[-1]
    cs = np.cumsum(arr, axis=-1)
    out = np.empty_like(arr, dtype=float)
    head = min(window, n)
    out[..., :head] = cs[..., :head] / np.arange(1, head + 1)
    if n > window:
        out[..., window:] = (cs[..., window:] - cs[..., :-window]) / window
    return out


def _pregenerate_uniforms(seeds: Sequence[int], horizon: int, blocks: int):
    """Per-run uniform draws for the three streams, one row per run."""
    batch = len(seeds)
    out_u = np.empty((batch, blocks))
    f_u = np.empty((batch, horizon))
    o_u = np.empty((batch, horizon))
    for i, seed in enumerate(seeds):
        outer_ss, focal_ss, opp_ss = stream_seeds(seed)
        out_u[i] = np.random.default_rng(outer_ss).random(blocks)
        f_u[i] = np.random.default_rng(focal_ss).random(horizon)
        o_u[i] = np.random.default_rng(opp_ss).random(horizon)
    return out_u, f_u, o_u


def _check_batch_estimates(values: np.ndarray, cap: float, where: str) -> None:
    if np.max(np.abs(values)) > cap + ESTIMATE_TOL:
        raise AssertionError(f"{where} IX estimate exceeds the magnitude cap {cap!r}")


@dataclass
class _BatchResult:
    profile_counts: np.ndarray          # (batch, n_profiles) final-window tallies
    mean_obj: np.ndarray                # (batch,)
    final_outer: np.ndarray | None      # (batch, m) for the bilevel focal player
    series_focal: np.ndarray | None     # (batch, T)
    series_opp: np.ndarray | None
    actions: np.ndarray | None          # (batch, T), only when requested
    opp_actions: np.ndarray | None


def _cap(dim: int, bound: float, gamma: float) -> float:
    return math.sqrt(dim) * bound / gamma if gamma > 0 else math.inf


def _simulate_batch(
    cfg: ExperimentConfig,
    seeds: Sequence[int],
    collect_series: bool,
    collect_actions: bool = False,
) -> _BatchResult:
    """Advance one batch of runs in lockstep; both focal learner kinds."""
    game = cfg.game
    T, W = cfg.rounds, cfg.window
    n_a, n_b = game.action_counts
    d_f, d_o = game.payoff_dims
    bound = game.payoff_bound
    bilevel = cfg.focal_learner == "bilevel"
    schedule = BlockSchedule(T, cfg.block_len if bilevel else T)
    h = schedule.block_count
    batch = len(seeds)
    rows = np.arange(batch)

    obj_tab = scalar_reward_table(game, 0, cfg.objective)
    opp_tab = scalar_reward_table(game, 1, cfg.opponent_weight)
    out_u, f_u, o_u = _pregenerate_uniforms(seeds, T, h)

    if bilevel:
        m = len(cfg.candidates)
        shape_tabs = np.stack(
            [scalar_reward_table(game, 0, c) for c in cfg.candidates]
        )
        p = np.full((batch, m), 1.0 / m)
        policy = np.full((batch, m, n_a), 1.0 / n_a)
        eta_q, gamma_q = cfg.eta_q, cfg.gamma_q
        cap_q = _cap(d_f, bound, gamma_q)
        cap_p = _cap(d_f, bound, cfg.gamma_p)
    else:
        p = None
        q_act = np.full((batch, n_a), 1.0 / n_a)
        eta_q, gamma_q = cfg.baseline_eta, cfg.baseline_gamma
        cap_q = _cap(d_f, bound, gamma_q)

    opp_fixed = cfg.opponent_learner == "fixed"
    opp_init = cfg.opponent_policy if opp_fixed else cfg.opponent_init
    opp = np.tile(opp_init.probs, (batch, 1))
    cap_b = _cap(d_o, bound, cfg.baseline_gamma)

    codes = np.empty((batch, W), dtype=np.int64)
    obj_sum = np.zeros(batch)
    series_f = np.empty((batch, T)) if collect_series else None
    series_o = np.empty((batch, T)) if collect_series else None
    act_log = np.empty((batch, T), dtype=np.int64) if collect_actions else None
    opp_log = np.empty((batch, T), dtype=np.int64) if collect_actions else None

    for k in range(1, h + 1):
        start, stop = block_indices(k, schedule)
        if bilevel:
            jk = sample_from_uniform(p, out_u[:, k - 1])
            q_act = policy[rows, jk, :].copy()
            r_tabs = shape_tabs[jk]
            s_obj = np.zeros(batch)
        for t in range(start - 1, stop):
            a = sample_from_uniform(q_act, f_u[:, t])
            b = sample_from_uniform(opp, o_u[:, t])
            r_obj = obj_tab[a, b]
            obj_sum += r_obj
            r_focal = r_tabs[rows, a, b] if bilevel else r_obj
            if bilevel:
                s_obj += r_obj
            ghat = -r_focal / (q_act[rows, a] + gamma_q)
            _check_batch_estimates(ghat, cap_q, "inner")
            loss = np.zeros((batch, n_a))
            loss[rows, a] = ghat
            q_act = omd_entropy_raw(q_act, loss, eta_q)
            r_opp = opp_tab[a, b]
            if not opp_fixed:
                ghat_o = -r_opp / (opp[rows, b] + cfg.baseline_gamma)
                _check_batch_estimates(ghat_o, cap_b, "opponent")
                loss_o = np.zeros((batch, n_b))
                loss_o[rows, b] = ghat_o
                opp = omd_entropy_raw(opp, loss_o, cfg.baseline_eta)
            if collect_series:
                series_f[:, t] = r_obj
                series_o[:, t] = r_opp
            if collect_actions:
                act_log[:, t] = a
                opp_log[:, t] = b
            if t >= T - W:
                codes[:, t - (T - W)] = a * n_b + b
        if bilevel:
            policy[rows, jk, :] = q_act
            r_k = s_obj / (stop - start + 1)
            ghat_p = -r_k / (p[rows, jk] + cfg.gamma_p)
            _check_batch_estimates(ghat_p, cap_p, "outer")
            loss_p = np.zeros((batch, m))
            loss_p[rows, jk] = ghat_p
            p = omd_entropy_raw(p, loss_p, cfg.eta_p)

    n_profiles = n_a * n_b
    flat = codes + rows[:, None] * n_profiles
    profile_counts = np.bincount(
        flat.ravel(), minlength=batch * n_profiles
    ).reshape(batch, n_profiles)
    return _BatchResult(
        profile_counts=profile_counts,
        mean_obj=obj_sum / T,
        final_outer=p if bilevel else None,
        series_focal=series_f,
        series_opp=series_o,
        actions=act_log,
        opp_actions=opp_log,
    )


def run_scenario(
    cfg: ExperimentConfig,
) -> tuple[list[RunRecord], OutcomeHistogram]:
    """Execute ``cfg.runs`` independent seeded runs and classify each.

    Run ``i`` uses the derived seed ``derive_run_seed(cfg.seed, i)``; records
    come back in run-id order and the histogram covers the labeled equilibria
    plus ``"None"`` (fractions summing to one).
    """
    labels_map = equilibrium_labels(cfg.game, cfg.objective, cfg.opponent_weight)
    n_b = cfg.game.action_counts[1]
    code_labels = {a * n_b + b: lab for (a, b), lab in labels_map.items()}
    label_order = list(labels_map.values()) + ["None"]

    records: list[RunRecord] = []
    for lo in range(0, cfg.runs, BATCH_SIZE):
        run_ids = range(lo, min(lo + BATCH_SIZE, cfg.runs))
        seeds = [derive_run_seed(cfg.seed, rid) for rid in run_ids]
        result = _simulate_batch(cfg, seeds, collect_series=cfg.keep_series)
        for i, rid in enumerate(run_ids):
            outcome = _classify_counts(result.profile_counts[i], code_labels)
            records.append(
                RunRecord(
                    run_id=rid,
                    seed=seeds[i],
                    outcome=outcome,
                    mean_obj_reward=float(result.mean_obj[i]),
                    final_outer=(
                        result.final_outer[i].copy()
                        if result.final_outer is not None
                        else None
                    ),
                    series_focal=(
                        result.series_focal[i].copy() if cfg.keep_series else None
                    ),
                    series_opp=(
                        result.series_opp[i].copy() if cfg.keep_series else None
                    ),
                )
            )
    counts = {label: 0 for label in label_order}
    for rec in records:
        counts[rec.outcome] = counts.get(rec.outcome, 0) + 1
    return records, OutcomeHistogram(counts=counts)


def reference_history(cfg: ExperimentConfig, run_id: int) -> RunHistory:
    """Replay one run through the round-by-round reference engine.

    Only bilevel focal players produce a block-protocol history.
    """
    if cfg.focal_learner != "bilevel":
        raise ValueError("histories are defined for bilevel focal players only")
    if cfg.opponent_learner != "expix":
        raise ValueError("histories require the adaptive opponent")
    return simulate_run(
        cfg.game,
        cfg.candidates,
        cfg.objective,
        cfg.opponent_weight,
        BlockSchedule(cfg.rounds, cfg.block_len),
        eta_p=cfg.eta_p,
        eta_q=cfg.eta_q,
        gamma_p=cfg.gamma_p,
        gamma_q=cfg.gamma_q,
        opponent_eta=cfg.baseline_eta,
        opponent_gamma=cfg.baseline_gamma,
        seed=derive_run_seed(cfg.seed, run_id),
        opponent_init=cfg.opponent_init,
    )


def _float_repr(x: float) -> str:
    return repr(float(x))


def emit_report(
    records: Sequence[RunRecord],
    histogram: OutcomeHistogram,
    cfg: ExperimentConfig,
    out_dir,
) -> list[Path]:
    """Write outcomes, histogram, per-class trajectories, and resolved config.

    Trajectory files hold the across-run mean and standard deviation of the
    smoothed scalarized reward series (smoothing happens per run, before
    aggregation); classes with no runs, or runs without stored series, are
    omitted and noted in the histogram file.  Floats are written with their
    shortest round-trip representation so re-runs diff cleanly.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    outcomes_path = out / "outcomes.csv"
    with open(outcomes_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run_id", "seed", "outcome", "mean_obj_reward"])
        for rec in records:
            writer.writerow(
                [rec.run_id, rec.seed, rec.outcome, _float_repr(rec.mean_obj_reward)]
            )
    written.append(outcomes_path)

    omitted: list[str] = []
    have_series = all(rec.series_focal is not None for rec in records)
    for label in histogram.counts:
        group = [rec for rec in records if rec.outcome == label]
        if not group or not have_series:
            omitted.append(label)
            continue
        focal = np.stack(
            [_moving_average_last_axis(rec.series_focal, cfg.smoothing)
             if cfg.smoothing > 1 else rec.series_focal for rec in group]
        )
        opp = np.stack(
            [_moving_average_last_axis(rec.series_opp, cfg.smoothing)
             if cfg.smoothing > 1 else rec.series_opp for rec in group]
        )
        path = out / f"traj_{label}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["round", "mean_focal", "sd_focal", "mean_opp", "sd_opp"])
            mean_f, sd_f = focal.mean(axis=0), focal.std(axis=0)
            mean_o, sd_o = opp.mean(axis=0), opp.std(axis=0)
            for t in range(mean_f.shape[0]):
                writer.writerow(
                    [
                        t + 1,
                        _float_repr(mean_f[t]),
                        _float_repr(sd_f[t]),
                        _float_repr(mean_o[t]),
                        _float_repr(sd_o[t]),
                    ]
                )
        written.append(path)

    hist_path = out / "histogram.json"
    payload = histogram.to_json_dict()
    payload["omitted_trajectory_classes"] = omitted
    hist_path.write_text(json.dumps(payload, indent=2) + "\n")
    written.append(hist_path)

    resolved = resolved_items(cfg)
    resolved["out.dir"] = str(out)
    resolved_path = out / "config.resolved.json"
    resolved_path.write_text(json.dumps(resolved, indent=2) + "\n")
    written.append(resolved_path)
    return written
