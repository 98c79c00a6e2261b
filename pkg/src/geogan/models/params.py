"""
Parameter sets: shapes, initialization and the binary tensor container

Every tensor a model owns lives in one ParamSet keyed by a stable path string
(``encoder/conv0/kernel``, ``flow/coupling2/scale/bn1/running_var``...).
Kernels use torch layouts: conv (out, in, kh, kw), transposed conv
(in, out, kh, kw), fully connected (out, in).

Container format (little-endian)::

    b"GEOGAN-<KIND> v1\\n"
    <metadata JSON>\\n
    uint32 tensor count
    per tensor: uint32 name length, name (utf-8), uint8 dtype code,
                uint32 ndim, uint64 dims[ndim], float64 data[prod(dims)]
"""
import json
import logging
from collections import OrderedDict
from pathlib import Path
from typing import Dict, Iterable, Mapping, Optional, Tuple, Union

import numpy as np
import torch

from geogan.errors import CheckpointError
from geogan.models.config import ArchConfig, Variant

logger = logging.getLogger(__name__)

CONTAINER_MAGIC = b"GEOGAN-"
CONTAINER_VERSION = 1
BUFFER_SUFFIXES = ("running_mean", "running_var")

# dtype codes of the container; data is always stored as float64
DTYPE_CODES = {
    torch.float32: 0,
    torch.float64: 1,
    torch.uint8: 2,
    torch.int64: 3,
    torch.float16: 4,
}
CODE_DTYPES = {code: dtype for dtype, code in DTYPE_CODES.items()}


def is_buffer(name: str) -> bool:
    return name.rsplit("/", 1)[-1] in BUFFER_SUFFIXES


class ParamSet(OrderedDict):
    """Ordered mapping of parameter path to tensor"""

    def trainable(self) -> "ParamSet":
        return ParamSet((k, v) for k, v in self.items() if not is_buffer(k))

    def buffers(self) -> "ParamSet":
        return ParamSet((k, v) for k, v in self.items() if is_buffer(k))

    def group(self, prefixes: Union[str, Iterable[str]]) -> "ParamSet":
        """Trainable tensors whose path starts with any of the prefixes"""
        if isinstance(prefixes, str):
            prefixes = (prefixes,)
        prefixes = tuple(prefixes)
        return ParamSet(
            (k, v) for k, v in self.items()
            if k.startswith(prefixes) and not is_buffer(k)
        )

    def clone(self) -> "ParamSet":
        out = ParamSet()
        for k, v in self.items():
            out[k] = v.detach().clone().requires_grad_(v.requires_grad)
        return out

    def to(self, dtype: torch.dtype) -> "ParamSet":
        out = ParamSet()
        for k, v in self.items():
            out[k] = v.detach().to(dtype).clone().requires_grad_(not is_buffer(k))
        return out

    def count(self) -> int:
        return sum(v.numel() for k, v in self.items() if not is_buffer(k))

    def equal(self, other: Mapping[str, torch.Tensor]) -> bool:
        """Bit-identical names, dtypes, shapes and values"""
        if list(self.keys()) != list(other.keys()):
            return False
        return all(
            self[k].dtype == other[k].dtype and torch.equal(self[k].detach(), other[k].detach())
            for k in self
        )


def _conv_shapes(shapes, name, out_c, in_c, k, bias=True):
    shapes[f"{name}/kernel"] = (out_c, in_c, k, k)
    if bias:
        shapes[f"{name}/bias"] = (out_c,)


def _deconv_shapes(shapes, name, in_c, out_c, k):
    shapes[f"{name}/kernel"] = (in_c, out_c, k, k)
    shapes[f"{name}/bias"] = (out_c,)


def _dense_shapes(shapes, name, out_f, in_f, bias=True):
    shapes[f"{name}/kernel"] = (out_f, in_f)
    if bias:
        shapes[f"{name}/bias"] = (out_f,)


def _bn_shapes(shapes, name, c):
    for suffix in ("scale", "shift", "running_mean", "running_var"):
        shapes[f"{name}/{suffix}"] = (c,)


def _encoder_shapes(shapes, config: ArchConfig, prefix: str):
    in_c = config.channels
    for i, f in enumerate(config.encoder_table()):
        _conv_shapes(shapes, f"{prefix}/conv{i}", f, in_c, 3)
        in_c = f
    _conv_shapes(shapes, f"{prefix}/head", config.embed_dim, in_c, 4, bias=False)
    _bn_shapes(shapes, f"{prefix}/head/bn", config.embed_dim)


def _direct_disc_shapes(shapes, config: ArchConfig, prefix: str):
    in_c = 2 * config.channels
    for i, f in enumerate(config.direct_disc_table()):
        _conv_shapes(shapes, f"{prefix}/conv{i}", f, in_c, 3)
        in_c = f
    _conv_shapes(shapes, f"{prefix}/head", 1, in_c, 4)


def _coupling_net_shapes(shapes, name: str, dim: int, hidden: int):
    _dense_shapes(shapes, f"{name}/fc0", hidden, dim, bias=False)
    _bn_shapes(shapes, f"{name}/bn0", hidden)
    _dense_shapes(shapes, f"{name}/fc1", hidden, hidden, bias=False)
    _bn_shapes(shapes, f"{name}/bn1", hidden)
    _dense_shapes(shapes, f"{name}/fc2", dim, hidden)


def layer_shapes(config: ArchConfig) -> "OrderedDict[str, Tuple[int, ...]]":
    """Every tensor path of a variant with its shape, in initialization order"""
    shapes: "OrderedDict[str, Tuple[int, ...]]" = OrderedDict()

    if config.variant == Variant.ENCODER_GAN:
        _encoder_shapes(shapes, config, "encoder")
        in_c = config.latent_dim
        for i, spec in enumerate(config.generator_table()):
            _deconv_shapes(shapes, f"generator/deconv{i}", in_c, spec.filters, spec.kernel)
            in_c = spec.filters
        in_c = config.channels
        for i, f in enumerate(config.disc_table()):
            _conv_shapes(shapes, f"discriminator/conv{i}", f, in_c, 3)
            in_c = f
        _conv_shapes(shapes, "discriminator/head", config.disc_units, in_c, 4)
        _dense_shapes(shapes, "discriminator/fc0", config.disc_units, config.disc_units + config.embed_dim)
        _dense_shapes(shapes, "discriminator/fc1", 1, config.disc_units)
        if not config.shared_encoder:
            _encoder_shapes(shapes, config, "disc_encoder")

    elif config.variant == Variant.DIRECT_GAN:
        in_c = config.channels
        for i, n in enumerate(config.direct_gen_n):
            _conv_shapes(shapes, f"generator/block{i}/k3", n, in_c, 3)
            _conv_shapes(shapes, f"generator/block{i}/k5", n, in_c, 5)
            in_c = 2 * n
        _deconv_shapes(shapes, "generator/out", in_c, config.channels, 3)
        _direct_disc_shapes(shapes, config, "discriminator")

    else:
        for i, _ in enumerate(config.flow_couplings):
            for net in ("scale", "shift"):
                _coupling_net_shapes(
                    shapes, f"flow/coupling{i}/{net}", config.flat_dim, config.flow_hidden
                )
        _direct_disc_shapes(shapes, config, "discriminator")
        if config.flow_bidirectional:
            _direct_disc_shapes(shapes, config, "discriminator_inv")

    return shapes


def _truncated_normal(shape, std: float, generator: torch.Generator, dtype) -> torch.Tensor:
    """Normal samples redrawn until every value lies within two std"""
    values = torch.randn(shape, generator=generator, dtype=torch.float64)
    outside = values.abs() > 2.0
    while outside.any():
        values[outside] = torch.randn(int(outside.sum()), generator=generator, dtype=torch.float64)
        outside = values.abs() > 2.0
    return (values * std).to(dtype)


def init_params(
    config: ArchConfig,
    seed: int = 0,
    dtype: torch.dtype = torch.float32
) -> ParamSet:
    """
    Fresh parameters for a variant

    Kernels are truncated Gaussian with std config.init_std; biases and
    batch-norm shifts start at 0, scales at 1; running statistics start at
    mean 0 and variance 1. The result is a pure function of (config, seed).
    """
    generator = torch.Generator().manual_seed(int(seed))
    params = ParamSet()
    for name, shape in layer_shapes(config).items():
        leaf = name.rsplit("/", 1)[-1]
        if leaf == "kernel":
            value = _truncated_normal(shape, config.init_std, generator, dtype)
        elif leaf in ("scale", "running_var"):
            value = torch.ones(shape, dtype=dtype)
        else:
            value = torch.zeros(shape, dtype=dtype)
        params[name] = value.requires_grad_(not is_buffer(name))

    logger.debug(
        "Initialized %s: %d tensors, %d trainable values (seed %d)",
        config.variant.name, len(params), params.count(), seed
    )
    return params


def _u32(n: int) -> bytes:
    return np.array([n], dtype="<u4").tobytes()


def write_container(
    path: Union[str, Path],
    tensors: Mapping[str, torch.Tensor],
    kind: str = "PARAMS",
    meta: Optional[Dict] = None
) -> Path:
    """Write named tensors bit-exactly; replaces any existing file"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chunks = [
        CONTAINER_MAGIC + f"{kind} v{CONTAINER_VERSION}\n".encode(),
        (json.dumps(meta or {}, sort_keys=True) + "\n").encode(),
        _u32(len(tensors)),
    ]
    for name, tensor in tensors.items():
        tensor = tensor.detach().cpu()
        if tensor.dtype not in DTYPE_CODES:
            raise CheckpointError(f"cannot store {name}: unsupported dtype {tensor.dtype}")
        encoded = name.encode("utf-8")
        chunks.append(_u32(len(encoded)))
        chunks.append(encoded)
        chunks.append(np.array([DTYPE_CODES[tensor.dtype]], dtype="u1").tobytes())
        chunks.append(_u32(tensor.dim()))
        chunks.append(np.array(tensor.shape, dtype="<u8").tobytes())
        chunks.append(tensor.to(torch.float64).numpy().astype("<f8").tobytes())

    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(b"".join(chunks))
    tmp.replace(path)
    return path


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated container at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def line(self) -> bytes:
        end = self.data.find(b"\n", self.pos)
        if end < 0:
            raise CheckpointError(f"{self.path}: missing header line")
        chunk = self.data[self.pos:end]
        self.pos = end + 1
        return chunk

    def array(self, dtype: str, count: int) -> np.ndarray:
        size = np.dtype(dtype).itemsize * count
        return np.frombuffer(self.take(size), dtype=dtype, count=count)


def read_container(
    path: Union[str, Path],
    kind: str = "PARAMS"
) -> Tuple["OrderedDict[str, torch.Tensor]", Dict]:
    """
    Read a container written by write_container

    Returns:
        (tensors in stored order with their original dtypes, metadata dict)

    Raises:
        CheckpointError: wrong kind, unsupported version, or a malformed body
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    reader = _Reader(path.read_bytes(), path)

    header = reader.line()
    expected = CONTAINER_MAGIC + kind.encode() + b" v"
    if not header.startswith(expected):
        raise CheckpointError(f"{path}: not a {kind} container")
    version = header[len(expected):].decode(errors="replace")
    if version != str(CONTAINER_VERSION):
        raise CheckpointError(f"{path}: container version {version} not supported")
    try:
        meta = json.loads(reader.line().decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"{path}: bad metadata line ({exc})") from None

    tensors: "OrderedDict[str, torch.Tensor]" = OrderedDict()
    count = int(reader.array("<u4", 1)[0])
    for _ in range(count):
        name_len = int(reader.array("<u4", 1)[0])
        name = reader.take(name_len).decode("utf-8")
        code = int(reader.array("u1", 1)[0])
        if code not in CODE_DTYPES:
            raise CheckpointError(f"{path}: unknown dtype code {code} for {name}")
        ndim = int(reader.array("<u4", 1)[0])
        dims = tuple(int(d) for d in reader.array("<u8", ndim))
        numel = int(np.prod(dims)) if dims else 1
        data = reader.array("<f8", numel).astype(np.float64).reshape(dims)
        tensors[name] = torch.from_numpy(data.copy()).to(CODE_DTYPES[code])
    if reader.pos != len(reader.data):
        raise CheckpointError(f"{path}: {len(reader.data) - reader.pos} trailing bytes")
    return tensors, meta


def save_params(path: Union[str, Path], params: ParamSet, config: ArchConfig) -> Path:
    path = write_container(path, params, kind="PARAMS", meta={"arch": config.to_dict()})
    logger.info("Saved %d tensors to %s", len(params), path)
    return path


def load_params(
    path: Union[str, Path],
    config: Optional[ArchConfig] = None
) -> Tuple[ParamSet, ArchConfig]:
    """
    Load a parameter container, checking it against an architecture

    Args:
        path: File written by save_params
        config: Expected architecture; defaults to the one stored in the file

    Raises:
        CheckpointError: missing, extra or mis-shaped tensors
    """
    tensors, meta = read_container(path, kind="PARAMS")
    if config is None:
        if "arch" not in meta:
            raise CheckpointError(f"{path}: no architecture recorded")
        config = ArchConfig.from_dict(meta["arch"])
    check_against(tensors, config, str(path))
    params = ParamSet()
    for name, value in tensors.items():
        params[name] = value.requires_grad_(not is_buffer(name))
    return params, config


def check_against(tensors: Mapping[str, torch.Tensor], config: ArchConfig, source: str) -> None:
    shapes = layer_shapes(config)
    missing = [k for k in shapes if k not in tensors]
    extra = [k for k in tensors if k not in shapes]
    if missing or extra:
        raise CheckpointError(
            f"{source} does not match {config.variant.name}: "
            f"{len(missing)} missing, {len(extra)} unexpected tensor(s)"
        )
    for name, shape in shapes.items():
        if tuple(tensors[name].shape) != tuple(shape):
            raise CheckpointError(
                f"{source}: {name} has shape {tuple(tensors[name].shape)}, expected {shape}"
            )
