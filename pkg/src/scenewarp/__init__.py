"""Adversarial road-scene generation for trajectory predictors.

Scenes are warped with parametric lateral offsets, histories are slowed down to
stay physically drivable, and a brute-force search keeps the warp that pushes a
predictor's output off the road.
"""
from .metrics import DatasetReport, EvalRecord, PredictionSet, dataset_report, offroad_fraction
from .physics import PhysicsConfig, enforce_feasibility
from .scene_model import Pose, Scenario, Scene, Trajectory, load_scenario, normalize, denormalize, save_scenario
from .transforms import TransformSpec, eval_offset, make_spec, warp_scenario

__version__ = "0.1.0"
