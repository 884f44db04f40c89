from .motion import (
    GraspHandle,
    MotionEvent,
    MotionParams,
    PickPlaceAction,
    StageProfile,
    attach_nearest,
    execute_pick_place,
    perturb_scene,
)
from .scene import Bag, Cable, Fabric, RigidItem, Scene, Stage, Zone
from .snapshot import load_scene, save_scene
from .solver import max_link_residual, relax_constraints

__all__ = [
    "Bag", "Cable", "Fabric", "GraspHandle", "MotionEvent", "MotionParams", "PickPlaceAction",
    "RigidItem", "Scene", "Stage", "StageProfile", "Zone", "attach_nearest", "execute_pick_place",
    "load_scene", "max_link_residual", "perturb_scene", "relax_constraints", "save_scene",
]
