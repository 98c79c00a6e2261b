"""Similarity metrics, sample grids, loss graphs and the MNIST sanity check"""

from .metrics import MetricsReport, evaluate, pair_metrics
from .grid import largest_square, sample_grid, tile_images
from .plots import plot_loss_curves
from .mnist import (
    DiversityReport,
    MnistConfig,
    MnistReport,
    detect_collapse,
    mnist_sanity,
    pairwise_spread,
    prepare_digits,
    read_idx_images,
)

__all__ = [
    'MetricsReport', 'evaluate', 'pair_metrics',
    'largest_square', 'sample_grid', 'tile_images',
    'plot_loss_curves',
    'DiversityReport', 'MnistConfig', 'MnistReport', 'detect_collapse',
    'mnist_sanity', 'pairwise_spread', 'prepare_digits', 'read_idx_images',
]
