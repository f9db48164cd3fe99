"""Spatiotemporal subtitle-salient adapter, float64 reference implementation.

Per frame i the adapter emits p*p pooled visual tokens and K query tokens,
each projected to width D by its own affine map, and interleaves them:

    [Pv(pool(F_0)), Pt(attn(Q, ctx_0)), ..., Pv(pool(F_N-1)), Pt(attn(Q, ctx_N-1))]

where ctx_i stacks the flattened features of frames i-window .. i+window
(truncated at the ends). Attention is single-head scaled dot-product with
learned C x C query/key/value maps and no normalization or MLP.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from typing import Optional, Sequence, Union

import numpy as np

_MAGIC = b"S3P1"


class ShapeMismatch(ValueError):
    pass


class GradMismatch(AssertionError):
    def __init__(self, name: str, error: float, tol: float):
        super().__init__(f"gradient of {name} off by relative error {error:.3e} (tol {tol:.0e})")
        self.name = name
        self.error = error


@dataclass(frozen=True)
class S3Config:
    p: int = 4
    K: int = 10
    window: int = 1
    C: int = 8
    D: int = 8
    frame_index_slot: bool = False

    def __post_init__(self):
        if min(self.p, self.K, self.C, self.D) < 1 or self.window < 0:
            raise ValueError(f"invalid S3 config {self}")

    @property
    def visual_tokens(self) -> int:
        return self.p * self.p

    @property
    def tokens_per_frame(self) -> int:
        return self.visual_tokens + self.K + int(self.frame_index_slot)


@dataclass
class AttentionParams:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray


@dataclass
class ProjectorParams:
    weight: np.ndarray
    bias: np.ndarray


@dataclass
class S3Params:
    queries: np.ndarray
    attention: AttentionParams
    proj_v: ProjectorParams
    proj_t: ProjectorParams

    @classmethod
    def init(cls, cfg: S3Config, seed: int = 0, scale: float = 0.1) -> "S3Params":
        """Seeded uniform init in [-scale, scale]."""
        rng = np.random.default_rng(seed)

        def u(*shape):
            return rng.uniform(-scale, scale, size=shape)

        return cls(u(cfg.K, cfg.C),
                   AttentionParams(u(cfg.C, cfg.C), u(cfg.C, cfg.C), u(cfg.C, cfg.C)),
                   ProjectorParams(u(cfg.C, cfg.D), u(cfg.D)),
                   ProjectorParams(u(cfg.C, cfg.D), u(cfg.D)))

    def named(self) -> dict[str, np.ndarray]:
        return {
            "queries": self.queries,
            "w_q": self.attention.w_q,
            "w_k": self.attention.w_k,
            "w_v": self.attention.w_v,
            "proj_v.weight": self.proj_v.weight,
            "proj_v.bias": self.proj_v.bias,
            "proj_t.weight": self.proj_t.weight,
            "proj_t.bias": self.proj_t.bias,
        }

    @classmethod
    def from_named(cls, arrays: dict[str, np.ndarray]) -> "S3Params":
        a = {k: np.array(v, dtype=np.float64) for k, v in arrays.items()}
        return cls(a["queries"], AttentionParams(a["w_q"], a["w_k"], a["w_v"]),
                   ProjectorParams(a["proj_v.weight"], a["proj_v.bias"]),
                   ProjectorParams(a["proj_t.weight"], a["proj_t.bias"]))

    def copy(self) -> "S3Params":
        return S3Params.from_named({k: v.copy() for k, v in self.named().items()})


def _finite(x: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values in {what}")
    return x


def as_frame(frame) -> np.ndarray:
    x = np.asarray(frame, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeMismatch(f"frame feature must be H x W x C, got shape {x.shape}")
    return _finite(x, "frame feature")


def ssca_pool(frame, p: int) -> np.ndarray:
    """Average-pool an H x W x C feature map onto a p x p grid."""
    x = as_frame(frame)
    h, w, c = x.shape
    if h % p or w % p:
        raise ShapeMismatch(f"{h}x{w} feature map is not divisible by pooling grid {p}")
    return x.reshape(p, h // p, p, w // p, c).mean(axis=(1, 3))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_attention_shapes(queries, context, params: AttentionParams):
    q = np.asarray(queries, dtype=np.float64)
    x = np.asarray(context, dtype=np.float64)
    if q.ndim != 2 or x.ndim != 2 or x.shape[0] < 1:
        raise ShapeMismatch(f"queries {q.shape} and context {x.shape} must be 2-D, M >= 1")
    c = q.shape[1]
    for name in ("w_q", "w_k", "w_v"):
        if getattr(params, name).shape != (c, c):
            raise ShapeMismatch(f"{name} must be {c}x{c}, got {getattr(params, name).shape}")
    if x.shape[1] != c:
        raise ShapeMismatch(f"context width {x.shape[1]} != query width {c}")
    return q, x


def attention_weights(queries, context, params: AttentionParams,
                      logit_offset: Union[float, np.ndarray] = 0.0) -> np.ndarray:
    """Row-stochastic K x M attention matrix."""
    q, x = _check_attention_shapes(queries, context, params)
    logits = (q @ params.w_q) @ (x @ params.w_k).T / np.sqrt(q.shape[1])
    return _softmax(logits + np.reshape(logit_offset, (-1, 1)) if np.ndim(logit_offset)
                    else logits + logit_offset)


def cross_attention(queries, context, params: AttentionParams,
                    logit_offset: Union[float, np.ndarray] = 0.0) -> np.ndarray:
    """softmax((Q Wq)(X Wk)^T / sqrt(C)) (X Wv).

    ``logit_offset`` (scalar or one value per query row) is added to the logits;
    it exists to check shift invariance.
    """
    weights = attention_weights(queries, context, params, logit_offset)
    x = np.asarray(context, dtype=np.float64)
    return _finite(weights @ (x @ params.w_v), "cross attention")


def temporal_context(frames: Sequence[np.ndarray], i: int, window: int) -> np.ndarray:
    if not 0 <= i < len(frames):
        raise IndexError(f"frame {i} outside 0..{len(frames) - 1}")
    lo, hi = max(0, i - window), min(len(frames) - 1, i + window)
    return np.concatenate([as_frame(f).reshape(-1, np.shape(f)[-1]) for f in frames[lo:hi + 1]])


def tstq_window(queries, frames: Sequence[np.ndarray], i: int, window: int,
                params: AttentionParams) -> np.ndarray:
    return cross_attention(queries, temporal_context(frames, i, window), params)


def project(x, proj: ProjectorParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or proj.weight.ndim != 2 or x.shape[1] != proj.weight.shape[0]:
        raise ShapeMismatch(f"cannot project {x.shape} with weight {proj.weight.shape}")
    if proj.bias.shape != (proj.weight.shape[1],):
        raise ShapeMismatch(f"bias {proj.bias.shape} does not fit weight {proj.weight.shape}")
    return _finite(x @ proj.weight + proj.bias, "projection")


def interleave(per_frame: Sequence[tuple[np.ndarray, np.ndarray]],
               index_slot: bool = False) -> np.ndarray:
    """Stack [v_0, t_0, v_1, t_1, ...]; ``index_slot`` reserves one zero row per frame first."""
    if not per_frame:
        raise ShapeMismatch("nothing to interleave")
    width = per_frame[0][0].shape[1]
    blocks = []
    for v, t in per_frame:
        if v.ndim != 2 or t.ndim != 2 or v.shape[1] != width or t.shape[1] != width:
            raise ShapeMismatch(f"token blocks {v.shape} / {t.shape} do not share width {width}")
        if index_slot:
            blocks.append(np.zeros((1, width)))
        blocks.extend((v, t))
    return np.concatenate(blocks)


def _check_config(frames, params: S3Params, cfg: S3Config):
    if params.queries.shape != (cfg.K, cfg.C):
        raise ShapeMismatch(f"queries {params.queries.shape} != ({cfg.K}, {cfg.C})")
    for proj in (params.proj_v, params.proj_t):
        if proj.weight.shape != (cfg.C, cfg.D):
            raise ShapeMismatch(f"projector {proj.weight.shape} != ({cfg.C}, {cfg.D})")
    if len(frames) == 0:
        raise ShapeMismatch("no frames")


def s3_forward(frames: Sequence[np.ndarray], params: S3Params, cfg: S3Config) -> np.ndarray:
    """Adapter output of shape (N * tokens_per_frame) x D."""
    frames = [as_frame(f) for f in frames]
    _check_config(frames, params, cfg)
    per_frame = []
    for i, f in enumerate(frames):
        v = ssca_pool(f, cfg.p).reshape(-1, f.shape[-1])
        t = tstq_window(params.queries, frames, i, cfg.window, params.attention)
        per_frame.append((project(v, params.proj_v), project(t, params.proj_t)))
    return interleave(per_frame, cfg.frame_index_slot)


def sum_squares_loss(frames, params: S3Params, cfg: S3Config) -> float:
    return float(np.sum(s3_forward(frames, params, cfg) ** 2))


def loss_and_grads(frames: Sequence[np.ndarray], params: S3Params, cfg: S3Config
                   ) -> tuple[float, dict[str, np.ndarray]]:
    """Sum-of-squares loss over the adapter output and its reverse-mode gradients."""
    frames = [as_frame(f) for f in frames]
    _check_config(frames, params, cfg)
    a = params.attention
    grads = {k: np.zeros_like(v) for k, v in params.named().items()}
    scale = 1.0 / np.sqrt(cfg.C)
    q = params.queries @ a.w_q
    loss = 0.0
    d_q = np.zeros_like(q)
    for i, f in enumerate(frames):
        v = ssca_pool(f, cfg.p).reshape(-1, cfg.C)
        x = temporal_context(frames, i, cfg.window)
        k = x @ a.w_k
        val = x @ a.w_v
        att = _softmax(q @ k.T * scale)
        t = att @ val
        out_v = v @ params.proj_v.weight + params.proj_v.bias
        out_t = t @ params.proj_t.weight + params.proj_t.bias
        loss += float(np.sum(out_v ** 2) + np.sum(out_t ** 2))

        g_v, g_t = 2 * out_v, 2 * out_t
        grads["proj_v.weight"] += v.T @ g_v
        grads["proj_v.bias"] += g_v.sum(axis=0)
        grads["proj_t.weight"] += t.T @ g_t
        grads["proj_t.bias"] += g_t.sum(axis=0)

        g_att_out = g_t @ params.proj_t.weight.T
        g_att = g_att_out @ val.T
        g_val = att.T @ g_att_out
        g_logits = att * (g_att - np.sum(g_att * att, axis=1, keepdims=True)) * scale
        d_q += g_logits @ k
        g_k = g_logits.T @ q
        grads["w_k"] += x.T @ g_k
        grads["w_v"] += x.T @ g_val
    grads["w_q"] = params.queries.T @ d_q
    grads["queries"] = d_q @ a.w_q.T
    return loss, grads


def numeric_grads(frames, params: S3Params, cfg: S3Config, step: float = 1e-5
                  ) -> dict[str, np.ndarray]:
    """Central finite differences of the sum-of-squares loss, one entry at a time."""
    work = params.copy()
    out = {}
    for name, arr in work.named().items():
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            keep = arr[idx]
            arr[idx] = keep + step
            up = sum_squares_loss(frames, work, cfg)
            arr[idx] = keep - step
            down = sum_squares_loss(frames, work, cfg)
            arr[idx] = keep
            g[idx] = (up - down) / (2 * step)
        out[name] = g
    return out


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b|| / max(||a||, ||b||); absolute when both are ~0."""
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    diff = float(np.linalg.norm(a - b))
    return diff if scale < 1e-12 else diff / scale


def grad_check(frames, params: S3Params, cfg: S3Config, step: float = 1e-5,
               tol: float = 1e-5) -> float:
    """Max relative error between analytic and finite-difference gradients.

    Raises GradMismatch naming the first parameter over ``tol``.
    """
    _, analytic = loss_and_grads(frames, params, cfg)
    numeric = numeric_grads(frames, params, cfg, step)
    worst = 0.0
    for name, g in analytic.items():
        err = relative_error(g, numeric[name])
        if err >= tol:
            raise GradMismatch(name, err, tol)
        worst = max(worst, err)
    return worst


def random_instance(seed: int, n_frames: int = 3, size: int = 4, cfg: Optional[S3Config] = None
                    ) -> tuple[list[np.ndarray], S3Params, S3Config]:
    """Small seeded problem for gradient checks (defaults: N=3, H=W=4, C=4, K=2, p=2, D=3)."""
    cfg = cfg or S3Config(p=2, K=2, window=1, C=4, D=3)
    rng = np.random.default_rng(seed)
    frames = [rng.normal(size=(size, size, cfg.C)) for _ in range(n_frames)]
    params = S3Params.init(cfg, seed=seed + 1, scale=0.5)
    return frames, params, cfg


# --- parameter files --------------------------------------------------------

def save_params(params: S3Params, path) -> None:
    """Binary container: magic, count, then per array name, shape and float64 LE data."""
    named = params.named()
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<I", len(named)))
        for name, arr in named.items():
            raw = name.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)) + raw)
            fh.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path) -> S3Params:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: not an S3 parameter file")
    (count,), pos = struct.unpack_from("<I", data, 4), 8
    arrays = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + n].decode("utf-8")
        pos += n
        (ndim,) = struct.unpack_from("<B", data, pos)
        shape = struct.unpack_from(f"<{ndim}I", data, pos + 1)
        pos += 1 + 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape)
        pos += 8 * size
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes")
    return S3Params.from_named(arrays)


def dump_params_text(params: S3Params) -> str:
    lines = []
    for name, arr in params.named().items():
        lines.append(f"{name} shape={'x'.join(map(str, arr.shape))}")
        for row in np.atleast_2d(arr):
            lines.append("  " + " ".join(f"{v: .17g}" for v in row))
    return "\n".join(lines) + "\n"


def config_fields() -> list[str]:
    return [f.name for f in fields(S3Config)]
