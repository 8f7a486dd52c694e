"""Evaluation of trained models against a validation set."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from pita.errors import ConfigError, ContractError
from pita.evaluation.metrics import control_effort, rmse, smoothness_distance
from pita.evaluation.ukf import UkfConfig, ukf_smooth_batch

GROUND_TRUTH = "ground truth"
METRICS = ("rmse", "abs_accel", "abs_kappa", "smooth_distance")


def summarize(values) -> dict:
    v = np.asarray(values, dtype=np.float64).ravel()
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    return {
        "n": int(v.size),
        "mean": float(v.mean()),
        "median": float(med),
        "q1": float(q1),
        "q3": float(q3),
        "min": float(v.min()),
        "max": float(v.max()),
    }


@dataclass
class EvalReport:
    """Metric summaries per model plus a ground-truth reference row.

    ``samples`` keeps the raw pooled values behind every summary (used for
    plotting); ``per_trajectory`` has one value per validation trajectory.
    """

    config: dict
    models: dict[str, dict] = field(default_factory=dict)
    ground_truth: dict = field(default_factory=dict)
    per_trajectory: dict[str, dict] = field(default_factory=dict)
    samples: dict[str, dict] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "models": self.models,
            "ground_truth": self.ground_truth,
            "per_trajectory": self.per_trajectory,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def median(self, model: str, metric: str) -> float:
        row = self.ground_truth if model == GROUND_TRUTH else self.models[model]
        return row[metric]["median"]


def _path_metrics(positions, dt, ukf_config, trim, target=None) -> dict:
    accel, kappa = control_effort(positions, dt, trim=trim)
    smoothed = ukf_smooth_batch(positions, ukf_config)
    out = {}
    if target is not None:
        out["rmse"] = np.atleast_1d(rmse(positions, target))
    out.update(
        abs_accel=accel,
        abs_kappa=kappa,
        smooth_distance=np.atleast_1d(smoothness_distance(positions, smoothed)),
    )
    return out


def evaluate_models(models: dict, validation, ukf_config: UkfConfig | None = None, trim: int = 1,
                    batch_size: int = 256) -> EvalReport:
    """Compute all metrics for every model and for the ground truth.

    ``models`` maps a display name to an :class:`~pita.model.network.Autoencoder`.
    Every metric is computed over the same validation trajectories, in order.
    """
    if not validation:
        raise ContractError("validation set is empty")
    if GROUND_TRUTH in models:
        raise ConfigError(f"{GROUND_TRUTH!r} is reserved for the reference row")
    target = np.stack([np.asarray(t.positions, dtype=np.float64) for t in validation])
    dt = float(validation[0].dt)
    T = target.shape[1]
    for name, model in models.items():
        if model.config.T != T or not np.isclose(model.config.dt, dt):
            raise ConfigError(
                f"model {name!r} expects T={model.config.T}, dt={model.config.dt}; data has T={T}, dt={dt}"
            )
    if ukf_config is None:
        ukf_config = UkfConfig(dt=dt)
    elif not np.isclose(ukf_config.dt, dt):
        raise ConfigError(f"UKF dt {ukf_config.dt} differs from data dt {dt}")

    report = EvalReport(
        config={
            "ukf": ukf_config.to_dict(),
            "trim": trim,
            "T": T,
            "dt": dt,
            "n_trajectories": len(validation),
            "sources": [t.source for t in validation],
            "models": {name: m.config.to_dict() for name, m in models.items()},
        }
    )
    report.samples[GROUND_TRUTH] = _path_metrics(target, dt, ukf_config, trim)
    for name, model in models.items():
        pred = np.concatenate(
            [model.reconstruct(target[i : i + batch_size]) for i in range(0, len(target), batch_size)]
        )
        report.samples[name] = _path_metrics(pred, dt, ukf_config, trim, target)

    for name, samples in report.samples.items():
        summary = {k: summarize(v) for k, v in samples.items()}
        per_traj = {k: v.tolist() for k, v in samples.items() if k in ("rmse", "smooth_distance")}
        per_traj["mean_abs_accel"] = samples["abs_accel"].mean(axis=-1).tolist()
        per_traj["mean_abs_kappa"] = samples["abs_kappa"].mean(axis=-1).tolist()
        if name == GROUND_TRUTH:
            report.ground_truth = summary
        else:
            report.models[name] = summary
        report.per_trajectory[name] = per_traj
    return report
