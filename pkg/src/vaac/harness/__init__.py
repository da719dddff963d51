from .config import RunConfig, load_config, make_rngs
from .runner import (EvaluationResult, SweepResult, SweepSpec, aggregate, evaluate,
                     evaluate_policy, read_metrics, run, sweep)

__all__ = ["RunConfig", "load_config", "make_rngs", "EvaluationResult", "SweepResult",
           "SweepSpec", "aggregate", "evaluate", "evaluate_policy", "read_metrics", "run", "sweep"]
