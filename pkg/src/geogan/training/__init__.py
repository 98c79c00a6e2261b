"""Adversarial training, checkpoints and gradient verification"""

from .state import TrainConfig, TrainState, new_state, set_determinism
from .data import ArrayPairs, Batch, PairedDataset, PairSource, epoch_order, fisher_yates
from .checkpoint import load_checkpoint, load_model, save_checkpoint, states_equal
from .gradcheck import GradCheckResult, gradient_check, run_gradient_suite
from .trainer import TrainResult, pretrain_encoder, train, train_step

__all__ = [
    'TrainConfig', 'TrainState', 'new_state', 'set_determinism',
    'ArrayPairs', 'Batch', 'PairedDataset', 'PairSource', 'epoch_order', 'fisher_yates',
    'load_checkpoint', 'load_model', 'save_checkpoint', 'states_equal',
    'GradCheckResult', 'gradient_check', 'run_gradient_suite',
    'TrainResult', 'pretrain_encoder', 'train', 'train_step',
]
