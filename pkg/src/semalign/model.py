"""Student encoder: per-frame transform, attentive pooling, projected tanh output.

Forward pass for frames x_1..x_T (each d_in):

    h_t = relu(W2 @ relu(W1 @ x_t + b1) + b2)        frame states, d_h
    e_t = v . tanh(Wa @ h_t + ba)                    attention logits
    a   = softmax(e)                                 attention weights
    c   = sum_t a_t * h_t                            pooled state
    s   = tanh(P @ c + bp)                           utterance embedding, d_e

backward() returns exact gradients of every parameter chain-ruled against an
upstream gradient on s, including the softmax Jacobian path through the
logits and the pooling path through the weights and frame states. Layer-one
activations are recomputed from the frames; they are bit-identical to the
forward pass since the same operations run on the same inputs.

Model file format: line 1 ``SENSE-MODEL 1``, line 2 ``d_in d_h d_a d_e``,
then one section per parameter: ``[NAME rows cols]`` followed by the rows,
or ``[NAME n]`` followed by one line, floats with 9 significant digits.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import FrameSequence, atomic_write_text, float_repr
from .errors import ConfigurationError
from .prng import SplitMix64, derive_seed

MODEL_MAGIC = "SENSE-MODEL 1"

# (name, shape builder, is_matrix) in canonical file and init-draw order
_PARAM_FIELDS = ("W1", "b1", "W2", "b2", "Wa", "ba", "v", "P", "bp")


@dataclass(frozen=True)
class ModelDims:
    d_in: int
    d_h: int
    d_a: int
    d_e: int

    def validate(self) -> None:
        if min(self.d_in, self.d_h, self.d_a, self.d_e) < 1:
            raise ConfigurationError(f"all model dims must be >= 1, got {self}")


@dataclass
class ModelParams:
    dims: ModelDims
    W1: np.ndarray  # (d_h, d_in)
    b1: np.ndarray  # (d_h,)
    W2: np.ndarray  # (d_h, d_h)
    b2: np.ndarray  # (d_h,)
    Wa: np.ndarray  # (d_a, d_h)
    ba: np.ndarray  # (d_a,)
    v: np.ndarray  # (d_a,)
    P: np.ndarray  # (d_e, d_h)
    bp: np.ndarray  # (d_e,)

    def items(self):
        return [(name, getattr(self, name)) for name in _PARAM_FIELDS]

    def copy(self) -> "ModelParams":
        return ModelParams(self.dims, *(getattr(self, n).copy() for n in _PARAM_FIELDS))


@dataclass
class ParamGrads:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    Wa: np.ndarray
    ba: np.ndarray
    v: np.ndarray
    P: np.ndarray
    bp: np.ndarray

    def items(self):
        return [(name, getattr(self, name)) for name in _PARAM_FIELDS]

    @classmethod
    def zeros_like(cls, params: ModelParams) -> "ParamGrads":
        return cls(*(np.zeros_like(getattr(params, n)) for n in _PARAM_FIELDS))

    def add_(self, other: "ParamGrads") -> None:
        for name in _PARAM_FIELDS:
            getattr(self, name).__iadd__(getattr(other, name))

    def scale_(self, factor: float) -> None:
        for name in _PARAM_FIELDS:
            getattr(self, name).__imul__(factor)


@dataclass
class AttentionRecord:
    """Pre-softmax logits and post-softmax weights, one scalar per frame."""

    utt_id: str
    logits: np.ndarray  # (T,)
    weights: np.ndarray  # (T,)


def param_shapes(dims: ModelDims) -> dict[str, tuple[int, ...]]:
    return {
        "W1": (dims.d_h, dims.d_in),
        "b1": (dims.d_h,),
        "W2": (dims.d_h, dims.d_h),
        "b2": (dims.d_h,),
        "Wa": (dims.d_a, dims.d_h),
        "ba": (dims.d_a,),
        "v": (dims.d_a,),
        "P": (dims.d_e, dims.d_h),
        "bp": (dims.d_e,),
    }


def init_params(dims: ModelDims, seed: int) -> ModelParams:
    """Glorot-uniform matrices, zero biases, deterministic in seed.

    Matrices are drawn row-major in the order W1, W2, Wa, v, P with bound
    r = sqrt(6 / (fan_in + fan_out)); v uses fan_out 1.
    """
    dims.validate()
    rng = SplitMix64(derive_seed(seed, "init"))

    def glorot(fan_out: int, fan_in: int) -> np.ndarray:
        r = np.sqrt(6.0 / (fan_in + fan_out))
        u = np.array([rng.uniform() for _ in range(fan_out * fan_in)])
        return ((2.0 * u - 1.0) * r).reshape(fan_out, fan_in)

    w1 = glorot(dims.d_h, dims.d_in)
    w2 = glorot(dims.d_h, dims.d_h)
    wa = glorot(dims.d_a, dims.d_h)
    v = glorot(1, dims.d_a).reshape(dims.d_a)
    p = glorot(dims.d_e, dims.d_h)
    return ModelParams(
        dims,
        w1,
        np.zeros(dims.d_h),
        w2,
        np.zeros(dims.d_h),
        wa,
        np.zeros(dims.d_a),
        v,
        p,
        np.zeros(dims.d_e),
    )


def softmax(e: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax."""
    z = np.exp(e - np.max(e))
    return z / z.sum()


def forward(
    params: ModelParams, frames: FrameSequence
) -> tuple[np.ndarray, np.ndarray, AttentionRecord]:
    """Run the encoder; returns (embedding s, frame states H, attention record)."""
    x = frames.frames
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"frames must be a non-empty (T, d_in) matrix, got {x.shape}")
    if x.shape[1] != params.dims.d_in:
        raise ValueError(f"frame dim {x.shape[1]} does not match model d_in {params.dims.d_in}")

    a1 = np.maximum(x @ params.W1.T + params.b1, 0.0)
    h = np.maximum(a1 @ params.W2.T + params.b2, 0.0)
    u = np.tanh(h @ params.Wa.T + params.ba)
    e = u @ params.v
    a = softmax(e)
    c = a @ h
    s = np.tanh(params.P @ c + params.bp)
    return s, h, AttentionRecord(frames.utt_id, e, a)


def backward(
    params: ModelParams,
    frames: FrameSequence,
    h: np.ndarray,
    record: AttentionRecord,
    grad_s: np.ndarray,
) -> ParamGrads:
    """Exact parameter gradients of s against an upstream grad on s.

    h and record must be the values produced by a matching forward call.
    """
    x = frames.frames
    t = x.shape[0]
    if h.shape != (t, params.dims.d_h):
        raise ValueError(f"H shape {h.shape} does not match (T={t}, d_h={params.dims.d_h})")
    if record.logits.shape != (t,) or record.weights.shape != (t,):
        raise ValueError("attention record length does not match frame count")
    if grad_s.shape != (params.dims.d_e,):
        raise ValueError(f"grad_s shape {grad_s.shape} does not match d_e {params.dims.d_e}")

    # recompute layer-1 and attention activations (identical ops, identical values)
    z1 = x @ params.W1.T + params.b1
    a1 = np.maximum(z1, 0.0)
    u = np.tanh(h @ params.Wa.T + params.ba)
    a = record.weights
    c = a @ h
    s = np.tanh(params.P @ c + params.bp)

    dz3 = grad_s * (1.0 - s * s)
    g_p = np.outer(dz3, c)
    g_bp = dz3
    dc = params.P.T @ dz3

    da = h @ dc  # d loss / d a_t via the pooled sum
    de = a * (da - float(a @ da))  # softmax Jacobian
    du = np.outer(de, params.v)
    dza = du * (1.0 - u * u)
    g_wa = dza.T @ h
    g_ba = dza.sum(axis=0)
    g_v = u.T @ de

    dh = np.outer(a, dc) + dza @ params.Wa  # pooling path + attention path
    dz2 = dh * (h > 0.0)
    g_w2 = dz2.T @ a1
    g_b2 = dz2.sum(axis=0)
    dz1 = (dz2 @ params.W2) * (z1 > 0.0)
    g_w1 = dz1.T @ x
    g_b1 = dz1.sum(axis=0)

    return ParamGrads(g_w1, g_b1, g_w2, g_b2, g_wa, g_ba, g_v, g_p, g_bp)


def save_model(params: ModelParams, path: Path) -> None:
    d = params.dims
    lines = [MODEL_MAGIC, f"{d.d_in} {d.d_h} {d.d_a} {d.d_e}"]
    for name, value in params.items():
        if value.ndim == 2:
            lines.append(f"[{name} {value.shape[0]} {value.shape[1]}]")
            for row in value:
                lines.append(" ".join(float_repr(x) for x in row))
        else:
            lines.append(f"[{name} {value.shape[0]}]")
            lines.append(" ".join(float_repr(x) for x in value))
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def load_model(path: Path) -> ModelParams:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != MODEL_MAGIC:
        raise ValueError(f"bad model header in {path}")
    d_in, d_h, d_a, d_e = (int(x) for x in lines[1].split())
    dims = ModelDims(d_in, d_h, d_a, d_e)
    shapes = param_shapes(dims)

    values: dict[str, np.ndarray] = {}
    i = 2
    while i < len(lines):
        head = lines[i].strip()
        if not head:
            i += 1
            continue
        if not (head.startswith("[") and head.endswith("]")):
            raise ValueError(f"expected section header at line {i + 1} of {path}")
        fields = head[1:-1].split()
        name = fields[0]
        if name not in shapes:
            raise ValueError(f"unknown parameter {name} in {path}")
        shape = tuple(int(x) for x in fields[1:])
        rows = shape[0] if len(shape) == 2 else 1
        block = [
            [float(x) for x in lines[i + 1 + r].split()] for r in range(rows)
        ]
        arr = np.array(block).reshape(shape)
        if arr.shape != shapes[name]:
            raise ValueError(f"parameter {name} has shape {arr.shape}, expected {shapes[name]}")
        values[name] = arr
        i += 1 + rows

    missing = [n for n in _PARAM_FIELDS if n not in values]
    if missing:
        raise ValueError(f"model file {path} is missing sections: {missing}")
    return ModelParams(dims, *(values[n] for n in _PARAM_FIELDS))
