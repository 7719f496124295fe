"""Learning from field commands to Bezier control points."""

from .dataset import Dataset, split
from .forest import ForestModel, train_forest
from .modelio import load_model, save_model
from .net import NetModel, train_net

__all__ = ["Dataset", "ForestModel", "NetModel", "load_model", "save_model", "split",
           "train_forest", "train_net"]
