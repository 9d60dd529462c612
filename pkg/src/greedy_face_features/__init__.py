"""Greedy Face Features - select spatial landmark features for expression recognition."""

from __future__ import annotations

from .evaluation import ConfusionMatrix, EvalConfig, cross_validate, stratified_kfold
from .features import Axis, DistanceMode, FeatureDataset, FeatureIndex, delta_features
from .labels import ExpressionLabel
from .landmarks import LandmarkFrame, SequenceExample, load_manifest
from .selection import SelectionConfig, SelectionTrace, sfs, stratified_split
from .svm import SvmConfig, SvmModel, predict, predict_proba, train_binary, train_multiclass

__version__ = "0.1.0"
__all__ = [
    "Axis",
    "ConfusionMatrix",
    "DistanceMode",
    "EvalConfig",
    "ExpressionLabel",
    "FeatureDataset",
    "FeatureIndex",
    "LandmarkFrame",
    "SelectionConfig",
    "SelectionTrace",
    "SequenceExample",
    "SvmConfig",
    "SvmModel",
    "cross_validate",
    "delta_features",
    "load_manifest",
    "predict",
    "predict_proba",
    "sfs",
    "stratified_kfold",
    "stratified_split",
    "train_binary",
    "train_multiclass",
]
