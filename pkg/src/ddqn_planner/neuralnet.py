"""Two-layer Q-network (conv -> ReLU -> affine) with hand-written backprop and Adam.

Everything is float64 numpy. Batched entry points (``forward_batch``,
``backward_batch``) are what the trainer uses; the single-state versions
wrap them.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

WEIGHT_NAMES = ("conv_w", "conv_b", "fc_w", "fc_b")
CHECKPOINT_MAGIC = b"DDQNCKPT"
CHECKPOINT_VERSION = 1

Gradients = dict  # name -> ndarray, keyed by WEIGHT_NAMES


@dataclass(frozen=True)
class NetworkArch:
    input_h: int = 20
    input_w: int = 20
    conv_filters: int = 16
    conv_kernel: int = 3
    conv_stride: int = 2
    conv_padding: int = 0
    output_dim: int = 8

    def __post_init__(self) -> None:
        if min(self.conv_out_h, self.conv_out_w) < 1:
            raise ValueError(f"kernel {self.conv_kernel} does not fit a {self.input_h}x{self.input_w} input")

    @property
    def conv_out_h(self) -> int:
        return (self.input_h + 2 * self.conv_padding - self.conv_kernel) // self.conv_stride + 1

    @property
    def conv_out_w(self) -> int:
        return (self.input_w + 2 * self.conv_padding - self.conv_kernel) // self.conv_stride + 1

    @property
    def flat_size(self) -> int:
        return self.conv_filters * self.conv_out_h * self.conv_out_w

    def shapes(self) -> dict[str, tuple[int, ...]]:
        k = self.conv_kernel
        return {
            "conv_w": (self.conv_filters, k, k),
            "conv_b": (self.conv_filters,),
            "fc_w": (self.output_dim, self.flat_size),
            "fc_b": (self.output_dim,),
        }


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")


@dataclass
class NetworkParams:
    conv_w: np.ndarray
    conv_b: np.ndarray
    fc_w: np.ndarray
    fc_b: np.ndarray
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    adam_t: int = 0

    def __post_init__(self) -> None:
        for name in WEIGHT_NAMES:
            w = getattr(self, name)
            self.adam_m.setdefault(name, np.zeros_like(w))
            self.adam_v.setdefault(name, np.zeros_like(w))

    def weights(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in WEIGHT_NAMES}

    @classmethod
    def zeros(cls, arch: NetworkArch) -> "NetworkParams":
        return cls(**{name: np.zeros(shape) for name, shape in arch.shapes().items()})


def init_params(arch: NetworkArch, seed: int) -> NetworkParams:
    """He-uniform weights (bound sqrt(6 / fan_in)), zero biases, zero moments."""
    rng = np.random.default_rng(seed)
    conv_bound = np.sqrt(6.0 / arch.conv_kernel**2)
    fc_bound = np.sqrt(6.0 / arch.flat_size)
    shapes = arch.shapes()
    return NetworkParams(
        conv_w=rng.uniform(-conv_bound, conv_bound, size=shapes["conv_w"]),
        conv_b=np.zeros(shapes["conv_b"]),
        fc_w=rng.uniform(-fc_bound, fc_bound, size=shapes["fc_w"]),
        fc_b=np.zeros(shapes["fc_b"]),
    )


def copy_params(src: NetworkParams) -> NetworkParams:
    """Deep copy of the weights only; optimizer state starts fresh."""
    return NetworkParams(**{name: w.copy() for name, w in src.weights().items()})


def _check_states(arch: NetworkArch, states: np.ndarray) -> np.ndarray:
    states = np.asarray(states, dtype=np.float64)
    if states.ndim != 3 or states.shape[1:] != (arch.input_h, arch.input_w):
        raise ValueError(
            f"expected states of shape (batch, {arch.input_h}, {arch.input_w}), got {states.shape}"
        )
    return states


@lru_cache(maxsize=8)
def _gather_index(arch: NetworkArch) -> np.ndarray:
    """Flat input offsets of every receptive field, shape (oh * ow, k * k)."""
    k, s = arch.conv_kernel, arch.conv_stride
    width = arch.input_w + 2 * arch.conv_padding
    rows = np.arange(arch.conv_out_h)[:, None] * s
    cols = np.arange(arch.conv_out_w)[None, :] * s
    origin = (rows * width + cols).reshape(-1, 1)
    offsets = (np.arange(k)[:, None] * width + np.arange(k)[None, :]).reshape(1, -1)
    return origin + offsets


def _patches(arch: NetworkArch, states: np.ndarray) -> np.ndarray:
    """(B, H, W) -> (B * oh * ow, k * k) im2col matrix."""
    p = arch.conv_padding
    if p:
        states = np.pad(states, ((0, 0), (p, p), (p, p)))
    flat = states.reshape(states.shape[0], -1)
    return flat[:, _gather_index(arch)].reshape(-1, arch.conv_kernel**2)


def _forward_cache(params: NetworkParams, arch: NetworkArch, states: np.ndarray):
    batch = states.shape[0]
    cols = _patches(arch, states)
    pre = cols @ params.conv_w.reshape(arch.conv_filters, -1).T
    pre += params.conv_b
    hidden = np.maximum(pre, 0.0)
    # flattened position-major: index = (i * ow + j) * filters + f
    flat = hidden.reshape(batch, -1)
    q = flat @ params.fc_w.T
    q += params.fc_b
    return q, cols, pre, flat


def forward_batch(params: NetworkParams, arch: NetworkArch, states: np.ndarray) -> np.ndarray:
    states = _check_states(arch, states)
    return _forward_cache(params, arch, states)[0]


def forward(params: NetworkParams, arch: NetworkArch, state: np.ndarray) -> np.ndarray:
    return forward_batch(params, arch, np.asarray(state)[None])[0]


def backward_batch(
    params: NetworkParams,
    arch: NetworkArch,
    states: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
) -> tuple[Gradients, np.ndarray]:
    """Gradients of mean((target - Q(s, a))^2) over the batch.

    ``actions`` are output indices (0-based). Returns the gradients and the
    Q-values computed on the way.
    """
    states = _check_states(arch, states)
    batch = states.shape[0]
    actions = np.asarray(actions, dtype=np.intp)
    targets = np.asarray(targets, dtype=np.float64)
    q, cols, pre, flat = _forward_cache(params, arch, states)
    rows = np.arange(batch)
    dq = np.zeros_like(q)
    dq[rows, actions] = -2.0 * (targets - q[rows, actions]) / batch

    grads = {"fc_w": dq.T @ flat, "fc_b": dq.sum(axis=0)}
    dflat = dq @ params.fc_w
    dhidden = dflat.reshape(-1, arch.conv_filters)
    dpre = dhidden * (pre > 0.0)
    grads["conv_w"] = (dpre.T @ cols).reshape(params.conv_w.shape)
    grads["conv_b"] = dpre.sum(axis=0)
    return grads, q


def backward(
    params: NetworkParams, arch: NetworkArch, state: np.ndarray, action: int, td_target: float
) -> Gradients:
    """Gradient of (td_target - Q(state, action))^2; ``action`` is 1-based."""
    grads, _ = backward_batch(params, arch, np.asarray(state)[None], [int(action) - 1], [td_target])
    return grads


def adam_step(params: NetworkParams, grads: Gradients, opt: OptimizerConfig) -> NetworkParams:
    """Bias-corrected Adam update, applied in place."""
    params.adam_t += 1
    t = params.adam_t
    c1 = 1.0 - opt.beta1**t
    c2 = 1.0 - opt.beta2**t
    for name in WEIGHT_NAMES:
        g = grads[name]
        m = params.adam_m[name]
        v = params.adam_v[name]
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * g * g
        w = getattr(params, name)
        w -= opt.learning_rate * (m / c1) / (np.sqrt(v / c2) + opt.epsilon)
    return params


# ---------------------------------------------------------------------------
# checkpoint format:
#   b"DDQNCKPT" | u32 version | u32 header length | JSON header | raw <f8 arrays
# arrays are written in header order; the header carries names and shapes.


def _checkpoint_arrays(params: NetworkParams) -> list[tuple[str, np.ndarray]]:
    out = [(name, w) for name, w in params.weights().items()]
    out += [(f"adam_m.{name}", params.adam_m[name]) for name in WEIGHT_NAMES]
    out += [(f"adam_v.{name}", params.adam_v[name]) for name in WEIGHT_NAMES]
    return out


def dumps_params(params: NetworkParams, arch: NetworkArch) -> bytes:
    arrays = _checkpoint_arrays(params)
    header = {
        "format": "ddqn-planner-checkpoint",
        "arch": asdict(arch),
        "adam_t": params.adam_t,
        "dtype": "<f8",
        "arrays": [{"name": name, "shape": list(a.shape)} for name, a in arrays],
    }
    head = json.dumps(header, sort_keys=True).encode()
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for _, a in arrays)
    return CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(head)) + head + body


def loads_params(blob: bytes) -> tuple[NetworkParams, NetworkArch]:
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise ValueError("not a ddqn-planner checkpoint")
    off = len(CHECKPOINT_MAGIC)
    version, head_len = struct.unpack_from("<II", blob, off)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    off += 8
    header = json.loads(blob[off : off + head_len])
    off += head_len
    arrays: dict[str, np.ndarray] = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        arrays[spec["name"]] = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape).copy()
        off += 8 * count
    if off != len(blob):
        raise ValueError("trailing bytes in checkpoint")
    params = NetworkParams(
        **{name: arrays[name] for name in WEIGHT_NAMES},
        adam_m={name: arrays[f"adam_m.{name}"] for name in WEIGHT_NAMES},
        adam_v={name: arrays[f"adam_v.{name}"] for name in WEIGHT_NAMES},
        adam_t=int(header["adam_t"]),
    )
    return params, NetworkArch(**header["arch"])


def save_params(params: NetworkParams, arch: NetworkArch, path: str | Path) -> None:
    Path(path).write_bytes(dumps_params(params, arch))


def load_params(path: str | Path) -> tuple[NetworkParams, NetworkArch]:
    return loads_params(Path(path).read_bytes())
