"""Python bindings for the skysentry pipeline."""

from ._core import (
    Error,
    Scenario,
    apparent_diag,
    bayes_update,
    dbscan,
    fit_calib,
    invert_diag,
    iou,
    load_scenario,
    nms,
    plan_tiles,
    reference_detect,
    run,
    stereo_sigma,
    triangulate,
)

__all__ = [
    "Error",
    "Scenario",
    "apparent_diag",
    "bayes_update",
    "dbscan",
    "fit_calib",
    "invert_diag",
    "iou",
    "load_scenario",
    "nms",
    "plan_tiles",
    "reference_detect",
    "run",
    "stereo_sigma",
    "triangulate",
]
