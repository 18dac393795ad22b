"""Minimal feed-forward network engine (dense and small convolutional models)."""

from .layers import AvgPool2x2, Conv2D, Dense, Flatten, MaxPool2x2, ReLU, Softmax
from .model import (
    CLASSIFICATION, LINEAR, REGRESSION, RELU, FinalDenseSelector, Model, final_dense,
    forward, get_final_dense_weights, guided_gradient, input_gradient, reference_cnn,
    reference_mlp, set_final_dense_weights, with_activation_mode,
)
from .serialization import ModelFormatError, load_model, save_model
from .training import TrainParams, accuracy, loss_and_grads, train

__all__ = [
    "AvgPool2x2", "CLASSIFICATION", "Conv2D", "Dense", "FinalDenseSelector", "Flatten",
    "LINEAR", "MaxPool2x2", "Model", "ModelFormatError", "REGRESSION", "RELU", "ReLU",
    "Softmax", "TrainParams", "accuracy", "final_dense", "forward", "get_final_dense_weights",
    "guided_gradient", "input_gradient", "load_model", "loss_and_grads", "reference_cnn",
    "reference_mlp", "save_model", "set_final_dense_weights", "train", "with_activation_mode",
]
