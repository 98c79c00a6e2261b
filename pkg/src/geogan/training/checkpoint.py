"""
Training checkpoints

A checkpoint is a tensor container (see geogan.models.params) holding:

* ``param/<path>``                 every ParamSet tensor, buffers included
* ``adam_g/<path>/<slot>``         generator-phase Adam state (step, exp_avg, exp_avg_sq)
* ``adam_d/<path>/<slot>``         discriminator-phase Adam state
* ``rng/torch``                    the global torch RNG state

plus the step counter and the training config in the metadata line.
"""
import logging
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, Tuple, Union

import torch

from geogan.errors import CheckpointError
from geogan.models.config import ArchConfig
from geogan.models.params import (
    CONTAINER_MAGIC,
    ParamSet,
    check_against,
    is_buffer,
    load_params,
    read_container,
    write_container,
)
from geogan.training.state import TrainConfig, TrainState, new_state

logger = logging.getLogger(__name__)

ADAM_SLOTS = ("step", "exp_avg", "exp_avg_sq")


def _optimizers(state: TrainState) -> List[Tuple[str, torch.optim.Adam, List[str]]]:
    return [("adam_g", state.g_opt, state.g_names), ("adam_d", state.d_opt, state.d_names)]


def state_tensors(state: TrainState) -> "OrderedDict[str, torch.Tensor]":
    """Flatten a TrainState into named tensors"""
    tensors: "OrderedDict[str, torch.Tensor]" = OrderedDict()
    for name, value in state.params.items():
        tensors[f"param/{name}"] = value
    for tag, opt, names in _optimizers(state):
        slots = opt.state_dict()["state"]
        for index, name in enumerate(names):
            for slot in ADAM_SLOTS:
                if index in slots and slot in slots[index]:
                    tensors[f"{tag}/{name}/{slot}"] = torch.as_tensor(slots[index][slot])
    tensors["rng/torch"] = torch.get_rng_state()
    return tensors


def save_checkpoint(path: Union[str, Path], state: TrainState, config: TrainConfig) -> Path:
    meta = {"step": state.step, "train": config.to_dict()}
    path = write_container(path, state_tensors(state), kind="CKPT", meta=meta)
    logger.info("Checkpoint at step %d written to %s", state.step, path)
    return path


def load_checkpoint(
    path: Union[str, Path],
    config: TrainConfig,
    restore_rng: bool = True
) -> TrainState:
    """
    Rebuild a TrainState from a checkpoint

    Args:
        config: Run configuration; its architecture must match the stored tensors
        restore_rng: Also reset the global torch RNG to the saved state

    Raises:
        CheckpointError: malformed file or architecture mismatch
    """
    tensors, meta = read_container(path, kind="CKPT")
    if "step" not in meta:
        raise CheckpointError(f"{path}: no step counter recorded")

    params = ParamSet()
    for name, value in tensors.items():
        if name.startswith("param/"):
            key = name[len("param/"):]
            params[key] = value.requires_grad_(not is_buffer(key))
    check_against(params, config.arch, str(path))

    state = new_state(config, params)
    state.step = int(meta["step"])
    for tag, opt, names in _optimizers(state):
        restored: Dict[int, Dict[str, torch.Tensor]] = {}
        for index, name in enumerate(names):
            slots = {s: tensors[f"{tag}/{name}/{s}"] for s in ADAM_SLOTS if f"{tag}/{name}/{s}" in tensors}
            if slots:
                if len(slots) != len(ADAM_SLOTS):
                    raise CheckpointError(f"{path}: incomplete optimizer state for {name}")
                restored[index] = slots
        state_dict = opt.state_dict()
        state_dict["state"] = restored
        opt.load_state_dict(state_dict)

    if restore_rng:
        if "rng/torch" not in tensors:
            raise CheckpointError(f"{path}: no RNG state recorded")
        torch.set_rng_state(tensors["rng/torch"])
    logger.info("Restored checkpoint %s at step %d", path, state.step)
    return state


def states_equal(a: TrainState, b: TrainState) -> bool:
    """Bit-identical parameters, optimizer state and step counter"""
    if a.step != b.step or not a.params.equal(b.params):
        return False
    ta = {k: v for k, v in state_tensors(a).items() if k != "rng/torch"}
    tb = {k: v for k, v in state_tensors(b).items() if k != "rng/torch"}
    if list(ta) != list(tb):
        return False
    return all(ta[k].dtype == tb[k].dtype and torch.equal(ta[k], tb[k]) for k in ta)


def load_model(path: Union[str, Path]) -> Tuple[ParamSet, ArchConfig]:
    """Parameters and architecture from either a checkpoint or a PARAMS file"""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"model file {path} does not exist")
    with open(path, "rb") as f:
        header = f.readline()
    if not header.startswith(CONTAINER_MAGIC + b"CKPT "):
        return load_params(path)
    tensors, meta = read_container(path, kind="CKPT")
    if "train" not in meta:
        raise CheckpointError(f"{path}: no training config recorded")
    arch = TrainConfig.from_dict(meta["train"]).arch
    params = ParamSet()
    for name, value in tensors.items():
        if name.startswith("param/"):
            params[name[len("param/"):]] = value
    check_against(params, arch, str(path))
    return params, arch
