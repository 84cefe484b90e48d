from .estimator import CheckpointError, PayloadCNNClassifier
from .evaluation import (
    EvalReport,
    Experiment,
    OcclusionDelta,
    RunResult,
    TrainConfig,
    evaluate,
    occlusion_delta,
    run_experiment,
    stratified_split,
    train,
)
from .network import Adam, Architecture, CnnNetwork
from .samples import INPUT_LENGTH, SampleSet, SampleVector, Task, build_samples, encode_payload, occlude

__all__ = [
    "Adam", "Architecture", "CheckpointError", "CnnNetwork", "EvalReport", "Experiment",
    "INPUT_LENGTH", "OcclusionDelta", "PayloadCNNClassifier", "RunResult", "SampleSet",
    "SampleVector", "Task", "TrainConfig", "build_samples", "encode_payload", "evaluate",
    "occlude", "occlusion_delta", "run_experiment", "stratified_split", "train",
]
