"""Trajectory predictors: built-in baselines and the external-process bridge."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..metrics import PredictionSet
from ..scene_model import Pose, Scenario
from .bridge import (
    ExternalPredictor,
    ExternalPredictorError,
    ExternalProcessExited,
    ExternalTimeout,
    ProtocolError,
)
from .builtin import predict_centerline_mpc, predict_constant_velocity
from .mpc import MpcConfig, NoReferenceLane

CONSTANT_VELOCITY = "constant_velocity"
CENTERLINE_MPC = "centerline_mpc"
EXTERNAL = "external"
KINDS = (CONSTANT_VELOCITY, CENTERLINE_MPC, EXTERNAL)
ALIASES = {"cv": CONSTANT_VELOCITY, "mpc": CENTERLINE_MPC, "external": EXTERNAL}


@dataclass(frozen=True)
class PredictorHandle:
    kind: str
    external_command: Optional[str] = None
    mpc: MpcConfig = field(default_factory=MpcConfig)
    timeout: float = 30.0

    def __post_init__(self):
        kind = ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ValueError(f"unknown predictor kind {self.kind!r}")
        if kind == EXTERNAL and not self.external_command:
            raise ValueError("an external predictor needs a command")
        object.__setattr__(self, "kind", kind)

    @property
    def name(self) -> str:
        return self.kind if self.kind != EXTERNAL else f"external:{self.external_command}"


class Predictor:
    """Runtime side of a handle; owns the child process for external predictors."""

    def __init__(self, handle: PredictorHandle):
        self.handle = handle
        self._ext = ExternalPredictor(handle.external_command, handle.timeout) if handle.kind == EXTERNAL else None

    def predict(self, scn: Scenario) -> PredictionSet:
        """Predict for a scenario given in world coordinates."""
        if self.handle.kind == CONSTANT_VELOCITY:
            return predict_constant_velocity(scn)
        if self.handle.kind == CENTERLINE_MPC:
            return predict_centerline_mpc(scn, self.handle.mpc)
        return self._ext.predict(scn)

    def predict_local(self, local: Scenario, pose: Pose) -> PredictionSet:
        """Predict for a scenario already in the ego frame described by `pose`.

        Built-ins run in that frame directly; external models get world coordinates.
        """
        if self.handle.kind == CONSTANT_VELOCITY:
            return predict_constant_velocity(local)
        if self.handle.kind == CENTERLINE_MPC:
            return predict_centerline_mpc(local, self.handle.mpc, normalized=True)
        world = local.map_points(pose.to_world)
        return self._ext.predict(world).map_points(pose.to_local)

    def close(self):
        if self._ext is not None:
            self._ext.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def predict_external(scn: Scenario, handle: PredictorHandle) -> PredictionSet:
    """One-shot request to an external predictor process."""
    with ExternalPredictor(handle.external_command, handle.timeout) as ext:
        return ext.predict(scn)


__all__ = [
    "CENTERLINE_MPC",
    "CONSTANT_VELOCITY",
    "EXTERNAL",
    "ExternalPredictor",
    "ExternalPredictorError",
    "ExternalProcessExited",
    "ExternalTimeout",
    "MpcConfig",
    "NoReferenceLane",
    "Predictor",
    "PredictorHandle",
    "ProtocolError",
    "predict_centerline_mpc",
    "predict_constant_velocity",
    "predict_external",
]
