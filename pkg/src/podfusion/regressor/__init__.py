"""Multi-view fusion count regressor: layers, network, training, checkpoints."""

from .checkpoint import load_model, save_model
from .network import ConvBlock, Network, NetworkConfig, fuse_views, predict
from .train import TrainReport, train

__all__ = [
    "ConvBlock",
    "Network",
    "NetworkConfig",
    "TrainReport",
    "fuse_views",
    "load_model",
    "predict",
    "save_model",
    "train",
]
