"""Model construction: the raw-ECG classifier and the RR-interval baseline.

Both are the same residual family -- a stack of conv/BN/ReLU blocks with
max-pooled shortcuts, then three dense layers ending in a single sigmoid
unit -- differing in input kind and capacity.  Defaults are sized so a
laptop CPU trains in minutes on synthetic data; every field is
overridable through the architecture config JSON embedded in checkpoints.

Checkpoint file layout: an 8-byte little-endian header length, a UTF-8
JSON header (format version, architecture config, tensor name -> shape /
byte-offset table, decision threshold, seed), then a contiguous
little-endian float32 blob holding all parameters and BN running
statistics.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigMismatch, InvalidConfig, IoFailure, ShapeMismatch
from .nn import Dense, Dropout, Flatten, Layer, ReLU, ResidualBlock, Sigmoid

INPUT_KIND_RAW = "RawEcg6000"
INPUT_KIND_RR = "Rr60"

INPUT_LENGTHS = {INPUT_KIND_RAW: 6000, INPUT_KIND_RR: 60}

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    input_kind: str
    n_blocks: int
    channels: tuple[int, ...]
    kernel_size: int
    pool_size: int
    dense_sizes: tuple[int, ...]
    dropout_p: float

    def validate(self) -> None:
        if self.input_kind not in INPUT_LENGTHS:
            raise InvalidConfig(f"unknown input_kind {self.input_kind!r}")
        if self.n_blocks < 1:
            raise InvalidConfig(f"n_blocks must be >= 1, got {self.n_blocks}")
        if len(self.channels) != self.n_blocks:
            raise InvalidConfig(
                f"need {self.n_blocks} channel counts, got {len(self.channels)}"
            )
        if any(c < 1 for c in self.channels):
            raise InvalidConfig("channel counts must be positive")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise InvalidConfig(
                f"kernel_size must be odd and >= 1 for same padding, got {self.kernel_size}"
            )
        if self.pool_size < 1:
            raise InvalidConfig(f"pool_size must be >= 1, got {self.pool_size}")
        if len(self.dense_sizes) != 3 or self.dense_sizes[-1] != 1:
            raise InvalidConfig(
                f"dense_sizes must have length 3 and end with 1, got {self.dense_sizes}"
            )
        if not 0.0 <= self.dropout_p < 1.0:
            raise InvalidConfig(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.flatten_size() < 1:
            raise InvalidConfig("pooling consumes the whole input; reduce pool_size or blocks")

    def spatial_lengths(self, input_len: int | None = None) -> list[int]:
        """Length after the input and after each block."""
        lengths = [INPUT_LENGTHS[self.input_kind] if input_len is None else input_len]
        for _ in range(self.n_blocks):
            if lengths[-1] < self.pool_size:
                return lengths + [0]
            lengths.append(lengths[-1] // self.pool_size)
        return lengths

    def flatten_size(self, input_len: int | None = None) -> int:
        return self.channels[-1] * self.spatial_lengths(input_len)[-1]

    def to_dict(self) -> dict:
        return {
            "input_kind": self.input_kind,
            "n_blocks": self.n_blocks,
            "channels": list(self.channels),
            "kernel_size": self.kernel_size,
            "pool_size": self.pool_size,
            "dense_sizes": list(self.dense_sizes),
            "dropout_p": self.dropout_p,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        try:
            cfg = cls(
                input_kind=str(d["input_kind"]),
                n_blocks=int(d["n_blocks"]),
                channels=tuple(int(c) for c in d["channels"]),
                kernel_size=int(d["kernel_size"]),
                pool_size=int(d["pool_size"]),
                dense_sizes=tuple(int(s) for s in d["dense_sizes"]),
                dropout_p=float(d["dropout_p"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidConfig(f"bad architecture config: {exc}") from exc
        cfg.validate()
        return cfg


def default_raw_config() -> ModelConfig:
    return ModelConfig(
        input_kind=INPUT_KIND_RAW,
        n_blocks=4,
        channels=(16, 32, 64, 64),
        kernel_size=7,
        pool_size=4,
        dense_sizes=(64, 16, 1),
        dropout_p=0.3,
    )


def default_rr_config() -> ModelConfig:
    return ModelConfig(
        input_kind=INPUT_KIND_RR,
        n_blocks=2,
        channels=(16, 32),
        kernel_size=5,
        pool_size=2,
        dense_sizes=(32, 8, 1),
        dropout_p=0.3,
    )


class Network:
    """A built model: residual blocks, flatten, dense head, sigmoid output.

    ``forward`` returns probabilities shaped [batch]; ``backward`` accepts
    the loss gradient either w.r.t. those probabilities or w.r.t. the
    pre-sigmoid logits (the numerically stable route used in training).
    """

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32,
                 input_len: int | None = None):
        config.validate()
        self.config = config
        self.seed = int(seed)
        self.dtype = dtype
        self.input_len = INPUT_LENGTHS[config.input_kind] if input_len is None else input_len
        self._dropout_rng = np.random.default_rng(np.random.SeedSequence((self.seed, 1)))

        self.blocks: list[ResidualBlock] = []
        c_prev = 1
        for c in config.channels:
            self.blocks.append(
                ResidualBlock(c_prev, c, config.kernel_size, config.pool_size, dtype=dtype)
            )
            c_prev = c
        self.flatten = Flatten()
        n_in = config.flatten_size(self.input_len)
        if n_in < 1:
            raise InvalidConfig("pooling consumes the whole input for this input length")
        self.head: list[Layer] = []
        for i, n_out in enumerate(config.dense_sizes):
            self.head.append(Dense(n_in, n_out, dtype=dtype))
            if i < len(config.dense_sizes) - 1:
                self.head.append(ReLU())
                self.head.append(Dropout(config.dropout_p, self._dropout_rng))
            n_in = n_out
        self.head.append(Sigmoid())

        init_parameters(self, self.seed)

    # -- naming ---------------------------------------------------------

    def _named_layers(self) -> list[tuple[str, Layer]]:
        named = []
        for i, block in enumerate(self.blocks):
            for child_name, child in block.children():
                named.append((f"block{i}.{child_name}", child))
        dense_idx = 0
        for layer in self.head:
            if isinstance(layer, Dense):
                named.append((f"head.dense{dense_idx}", layer))
                dense_idx += 1
        return named

    def named_params(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, layer in self._named_layers():
            for key, arr in layer.params().items():
                out[f"{prefix}.{key}"] = arr
        return out

    def named_grads(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, layer in self._named_layers():
            for key, arr in layer.grads().items():
                out[f"{prefix}.{key}"] = arr
        return out

    def named_state(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, layer in self._named_layers():
            for key, arr in layer.state().items():
                out[f"{prefix}.{key}"] = arr
        return out

    def zero_grads(self) -> None:
        for grad in self.named_grads().values():
            grad[...] = 0

    # -- execution ------------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 3 or x.shape[1] != 1 or x.shape[2] != self.input_len:
            raise ShapeMismatch(
                f"expected input [batch, 1, {self.input_len}], got {x.shape}"
            )
        h = x
        for block in self.blocks:
            h = block.forward(h, train)
        h = self.flatten.forward(h, train)
        for layer in self.head:
            h = layer.forward(h, train)
        return h[:, 0]

    def backward(self, grad: np.ndarray, wrt: str = "logits") -> None:
        """Backpropagate a [batch] loss gradient into all parameter grads.

        ``wrt="logits"`` injects the gradient below the sigmoid (pairs with
        ``weighted_bce``); ``wrt="prob"`` starts at the probabilities.
        """
        g = np.asarray(grad, dtype=self.dtype)[:, None]
        if wrt == "prob":
            layers = self.head
        elif wrt == "logits":
            layers = self.head[:-1]
        else:
            raise ValueError(f"wrt must be 'logits' or 'prob', got {wrt!r}")
        for layer in reversed(layers):
            g = layer.backward(g)
        g = self.flatten.backward(g)
        for block in reversed(self.blocks):
            g = block.backward(g)


def build_arnet_ecg(config: ModelConfig | None = None, seed: int = 0,
                    dtype=np.float32) -> Network:
    """Build the raw-ECG classifier (30 s window input)."""
    config = default_raw_config() if config is None else config
    if config.input_kind != INPUT_KIND_RAW:
        raise InvalidConfig(f"raw-ECG model requires input_kind {INPUT_KIND_RAW!r}")
    return Network(config, seed=seed, dtype=dtype)


def build_rr_baseline(config: ModelConfig | None = None, seed: int = 0,
                      dtype=np.float32) -> Network:
    """Build the RR-interval baseline (60-beat window input)."""
    config = default_rr_config() if config is None else config
    if config.input_kind != INPUT_KIND_RR:
        raise InvalidConfig(f"RR baseline requires input_kind {INPUT_KIND_RR!r}")
    return Network(config, seed=seed, dtype=dtype)


def build_model(config: ModelConfig, seed: int = 0, dtype=np.float32) -> Network:
    if config.input_kind == INPUT_KIND_RAW:
        return build_arnet_ecg(config, seed=seed, dtype=dtype)
    return build_rr_baseline(config, seed=seed, dtype=dtype)


def init_parameters(model: Network, seed: int) -> Network:
    """He-uniform weights (bound sqrt(6 / fan_in)), zero biases, unit BN gamma.

    Fully determined by the seed; safe to call again to re-initialize.
    """
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0)))
    model.seed = int(seed)
    for name, param in model.named_params().items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "w":
            fan_in = int(np.prod(param.shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            param[...] = rng.uniform(-bound, bound, size=param.shape).astype(param.dtype)
        elif leaf == "b" or leaf == "beta":
            param[...] = 0
        elif leaf == "gamma":
            param[...] = 1
    for name, arr in model.named_state().items():
        arr[...] = 1 if name.endswith("running_var") else 0
    return model


def save_checkpoint(model: Network, threshold: float, path: str | Path) -> None:
    """Serialize architecture, parameters, BN stats, threshold and seed."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors = dict(model.named_params())
    tensors.update(model.named_state())
    table = {}
    offset = 0
    blobs = []
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        table[name] = {"shape": list(arr.shape), "offset": offset}
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": model.config.to_dict(),
        "threshold": float(threshold),
        "seed": model.seed,
        "tensors": table,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    try:
        with path.open("wb") as fh:
            fh.write(struct.pack("<Q", len(header_bytes)))
            fh.write(header_bytes)
            for blob in blobs:
                fh.write(blob)
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path: str | Path, expect_input_kind: str | None = None,
                    dtype=np.float32) -> tuple[Network, float]:
    """Rebuild a model from a checkpoint; returns (model, decision threshold)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < 8:
        raise ConfigMismatch(f"checkpoint too short: {path}")
    (header_len,) = struct.unpack_from("<Q", raw, 0)
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigMismatch(f"checkpoint header is not valid JSON: {path}") from exc
    if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ConfigMismatch(
            f"unsupported checkpoint format version {header.get('format_version')}"
        )
    config = ModelConfig.from_dict(header["config"])
    if expect_input_kind is not None and config.input_kind != expect_input_kind:
        raise ConfigMismatch(
            f"checkpoint is a {config.input_kind} model, expected {expect_input_kind}"
        )
    model = Network(config, seed=int(header.get("seed", 0)), dtype=dtype)

    tensors = dict(model.named_params())
    tensors.update(model.named_state())
    table = header["tensors"]
    if set(table) != set(tensors):
        raise ConfigMismatch(
            f"checkpoint tensors do not match architecture: {sorted(set(table) ^ set(tensors))}"
        )
    blob_start = 8 + header_len
    for name, entry in table.items():
        target = tensors[name]
        shape = tuple(entry["shape"])
        if shape != target.shape:
            raise ConfigMismatch(
                f"tensor {name} shape {shape} != expected {target.shape}"
            )
        count = int(np.prod(shape)) if shape else 1
        start = blob_start + int(entry["offset"])
        values = np.frombuffer(raw, dtype="<f4", count=count, offset=start)
        target[...] = values.reshape(shape).astype(target.dtype)
    return model, float(header["threshold"])
