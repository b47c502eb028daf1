"""Sampler module for seeded draws, Haar subspaces and tilted measures."""

from .sampler import (
    SampleBatch,
    Seed,
    Subspace,
    draw,
    haar_subspace,
    load_frame,
    ordered_map,
    project,
    rotation_invariance_pvalue,
    save_frame,
    sphere_directions,
    stationarity_drift,
    tilted_draw,
)

__all__ = [
    "SampleBatch",
    "Seed",
    "Subspace",
    "draw",
    "haar_subspace",
    "load_frame",
    "ordered_map",
    "project",
    "rotation_invariance_pvalue",
    "save_frame",
    "sphere_directions",
    "stationarity_drift",
    "tilted_draw",
]
