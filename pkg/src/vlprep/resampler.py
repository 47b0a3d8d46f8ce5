"""Reference implementation of the position-aware feature resampler.

A fixed bank of learnable query vectors cross-attends onto a grid of patch
features, compressing any ``grid_h * grid_w`` input to exactly ``n_queries``
output rows. Both sides of the attention product carry 2D absolute sinusoidal
positional encodings, added to the inputs of the query / key projections:
queries live on a virtual ``sqrt(n_queries)`` square grid, keys on the patch
grid. Values are unencoded patch features.

Everything runs in float64 with hand-written backward passes so gradients can
be audited entry by entry against central finite differences (``grad_check``).
No normalization layers, no MLP, single attention layer; head count is
configurable and defaults to 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidWidth, NumericalError, ShapeError

INIT_STD = 0.02
PARAM_NAMES = ("queries", "w_q", "w_k", "w_v", "w_o")


@dataclass(frozen=True)
class ResamplerConfig:
    d_model: int
    grid_h: int
    grid_w: int
    n_queries: int = 256
    n_heads: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.grid_h < 1 or self.grid_w < 1:
            raise ValueError(f"grid must be >= 1x1, got {self.grid_h}x{self.grid_w}")
        if self.n_heads < 1:
            raise ValueError(f"n_heads must be >= 1, got {self.n_heads}")
        if self.d_model % (4 * self.n_heads) != 0:
            raise ValueError(
                f"d_model ({self.d_model}) must be divisible by 4*n_heads "
                f"({4 * self.n_heads}) for per-axis sin/cos channels"
            )
        side = math.isqrt(self.n_queries)
        if side * side != self.n_queries:
            raise ValueError(
                f"n_queries ({self.n_queries}) must be a perfect square"
            )

    @property
    def query_side(self) -> int:
        return math.isqrt(self.n_queries)

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads

    @property
    def n_keys(self) -> int:
        return self.grid_h * self.grid_w


@dataclass
class ResamplerParams:
    queries: np.ndarray  # (n_queries, d_model)
    w_q: np.ndarray  # (d_model, d_model)
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}


def init_params(cfg: ResamplerConfig, rng: np.random.Generator | None = None) -> ResamplerParams:
    """Draw all parameters from normal(0, 0.02) in a fixed order."""
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    d = cfg.d_model
    return ResamplerParams(
        queries=rng.normal(0.0, INIT_STD, (cfg.n_queries, d)),
        w_q=rng.normal(0.0, INIT_STD, (d, d)),
        w_k=rng.normal(0.0, INIT_STD, (d, d)),
        w_v=rng.normal(0.0, INIT_STD, (d, d)),
        w_o=rng.normal(0.0, INIT_STD, (d, d)),
    )


def _axis_encoding(positions: np.ndarray, half: int) -> np.ndarray:
    pairs = np.arange(half // 2)
    inv_freq = np.power(10000.0, -2.0 * pairs / half)
    angles = positions[:, None].astype(np.float64) * inv_freq[None, :]
    out = np.empty((len(positions), half), dtype=np.float64)
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out


def posenc_2d(h: int, w: int, d: int) -> np.ndarray:
    """Sinusoidal 2D positions for an ``h x w`` grid, row-major, shape (h*w, d).

    The first d/2 channels encode the row index, the last d/2 the column
    index, each as interleaved sin/cos over geometric frequencies.
    """
    if d % 4 != 0:
        raise InvalidWidth(f"encoding width must be divisible by 4, got {d}")
    if h < 1 or w < 1:
        raise ShapeError(f"grid must be >= 1x1, got {h}x{w}")
    rows = np.repeat(np.arange(h), w)
    cols = np.tile(np.arange(w), h)
    half = d // 2
    return np.concatenate([_axis_encoding(rows, half), _axis_encoding(cols, half)], axis=1)


def _check_features(x: np.ndarray, cfg: ResamplerConfig) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cfg.n_keys, cfg.d_model):
        raise ShapeError(
            f"features must have shape ({cfg.n_keys}, {cfg.d_model}), got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise NumericalError("features contain NaN or Inf")
    return x


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward_with_cache(
    x: np.ndarray,
    params: ResamplerParams,
    cfg: ResamplerConfig,
    key_posenc: np.ndarray | None = None,
) -> tuple[np.ndarray, dict]:
    """Run the resampler and keep every intermediate needed by ``backward``.

    ``key_posenc`` overrides the default grid encoding on the keys; callers
    use it to verify that jointly permuting keys and their encodings is a
    no-op.
    """
    x = _check_features(x, cfg)
    d, dh, n_heads = cfg.d_model, cfg.d_head, cfg.n_heads
    q_pos = posenc_2d(cfg.query_side, cfg.query_side, d)
    if key_posenc is None:
        k_pos = posenc_2d(cfg.grid_h, cfg.grid_w, d)
    else:
        k_pos = np.asarray(key_posenc, dtype=np.float64)
        if k_pos.shape != (cfg.n_keys, d):
            raise ShapeError(
                f"key_posenc must have shape ({cfg.n_keys}, {d}), got {k_pos.shape}"
            )

    q_in = params.queries + q_pos
    k_in = x + k_pos
    q = q_in @ params.w_q
    k = k_in @ params.w_k
    v = x @ params.w_v

    scale = 1.0 / math.sqrt(dh)
    attn = np.empty((n_heads, cfg.n_queries, cfg.n_keys), dtype=np.float64)
    concat = np.empty((cfg.n_queries, d), dtype=np.float64)
    for h in range(n_heads):
        sl = slice(h * dh, (h + 1) * dh)
        logits = (q[:, sl] @ k[:, sl].T) * scale
        a = _softmax_rows(logits)
        attn[h] = a
        concat[:, sl] = a @ v[:, sl]
    y = concat @ params.w_o

    cache = {
        "x": x,
        "q_in": q_in,
        "k_in": k_in,
        "q": q,
        "k": k,
        "v": v,
        "attn": attn,
        "concat": concat,
        "scale": scale,
        "params": params,
        "cfg": cfg,
    }
    return y, cache


def resample(
    x: np.ndarray,
    params: ResamplerParams,
    cfg: ResamplerConfig,
    key_posenc: np.ndarray | None = None,
) -> np.ndarray:
    """Compress patch features to exactly ``n_queries`` output rows."""
    y, _ = forward_with_cache(x, params, cfg, key_posenc)
    return y


def attention_weights(
    x: np.ndarray,
    params: ResamplerParams,
    cfg: ResamplerConfig,
    key_posenc: np.ndarray | None = None,
) -> np.ndarray:
    """Per-head softmax matrices, shape (n_heads, n_queries, n_keys)."""
    _, cache = forward_with_cache(x, params, cfg, key_posenc)
    return cache["attn"]


def backward(cache: dict, d_y: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. all parameters, given dLoss/dOutput."""
    params: ResamplerParams = cache["params"]
    cfg: ResamplerConfig = cache["cfg"]
    d, dh, n_heads = cfg.d_model, cfg.d_head, cfg.n_heads
    scale = cache["scale"]

    d_w_o = cache["concat"].T @ d_y
    d_concat = d_y @ params.w_o.T

    d_q = np.empty_like(cache["q"])
    d_k = np.empty_like(cache["k"])
    d_v = np.empty_like(cache["v"])
    for h in range(n_heads):
        sl = slice(h * dh, (h + 1) * dh)
        a = cache["attn"][h]
        d_out_h = d_concat[:, sl]
        d_a = d_out_h @ cache["v"][:, sl].T
        d_v[:, sl] = a.T @ d_out_h
        # softmax backward, row-wise
        d_logits = a * (d_a - np.sum(d_a * a, axis=1, keepdims=True))
        d_q[:, sl] = scale * (d_logits @ cache["k"][:, sl])
        d_k[:, sl] = scale * (d_logits.T @ cache["q"][:, sl])

    grads = {
        "queries": d_q @ params.w_q.T,
        "w_q": cache["q_in"].T @ d_q,
        "w_k": cache["k_in"].T @ d_k,
        "w_v": cache["x"].T @ d_v,
        "w_o": d_w_o,
    }
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for {name}")
    return grads


def loss_and_grads(
    x: np.ndarray,
    params: ResamplerParams,
    cfg: ResamplerConfig,
    loss_scale: float = 1.0,
) -> tuple[float, dict[str, np.ndarray]]:
    """Sum-of-squared-outputs loss and its analytic parameter gradients."""
    y, cache = forward_with_cache(x, params, cfg)
    loss = loss_scale * float(np.sum(y * y))
    grads = backward(cache, 2.0 * loss_scale * y)
    return loss, grads


def grad_check(cfg: ResamplerConfig, step: float = 1e-5) -> float:
    """Max relative error of analytic vs central-finite-difference gradients.

    The loss is the sum of squared outputs on one seeded input. Relative
    error per entry is |analytic - numeric| / max(|analytic|, |numeric|,
    1e-8); the maximum over all parameter entries is returned.
    """
    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg, rng)
    x = rng.standard_normal((cfg.n_keys, cfg.d_model))

    _, analytic = loss_and_grads(x, params, cfg)

    def loss_only() -> float:
        y = resample(x, params, cfg)
        return float(np.sum(y * y))

    worst = 0.0
    for name in PARAM_NAMES:
        array = getattr(params, name)
        grad = analytic[name]
        it = np.nditer(array, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            saved = array[idx]
            array[idx] = saved + step
            up = loss_only()
            array[idx] = saved - step
            down = loss_only()
            array[idx] = saved
            numeric = (up - down) / (2.0 * step)
            a = grad[idx]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    if not math.isfinite(worst):
        raise NumericalError("non-finite relative error in gradient check")
    return worst
