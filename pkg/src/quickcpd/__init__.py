"""Quickest change detection with recurrent detectors trained on a delay/false-alarm loss."""
from .types import ChangeLabel, Dataset, DataError, DetectionResult, LabeledSequence, MultiChangeLabel
from .loss import LossConfig, alarm_time_bound, combined_loss, delay_loss, stopping_time_oracle
from .recurrent import ModelSpec, forward, predict
from .training import TrainConfig, TrainingDiverged, train

__version__ = "0.1.0"
