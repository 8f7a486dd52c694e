from pita.evaluation.metrics import control_effort, point_to_polyline, rmse, smoothness_distance
from pita.evaluation.report import GROUND_TRUTH, EvalReport, evaluate_models, summarize
from pita.evaluation.ukf import UkfConfig, ukf_smooth, ukf_smooth_batch

__all__ = [
    "GROUND_TRUTH",
    "EvalReport",
    "UkfConfig",
    "control_effort",
    "evaluate_models",
    "point_to_polyline",
    "rmse",
    "smoothness_distance",
    "summarize",
    "ukf_smooth",
    "ukf_smooth_batch",
]
