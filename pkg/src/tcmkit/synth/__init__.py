"""Desk-scale tempo experiments: synthetic clips, a toy host network, training and evaluation."""

from .data import SynthSample, centroid_x, gen_dataset, load_dataset, resample_stride, save_dataset
from .model import ToyNet, ToyNetConfig
from .train import accuracy_drop, evaluate, stride_sweep, train, write_curve, write_sweep
