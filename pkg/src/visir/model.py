"""The sine-activated transformer super-resolution network and its baselines.

Pipeline: split the LR image into P x P patches, embed them linearly, add
learned positional encodings, run L residual attention blocks whose
feed-forward sublayers are sine-activated stacks, then decode to the HR grid
through a final sine stack.  Two ablation baselines share the machinery:
an equal-parameter MLP variant (GELU feed-forward, sigmoid output) and a
per-image coordinate network fitted directly to pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .autodiff import (
    ShapeError,
    Tensor,
    add,
    affine,
    concat,
    gelu,
    layer_norm,
    matmul,
    mean,
    narrow,
    reshape,
    scale,
    sigmoid,
    sine_activation,
    softmax,
    transpose,
)

__all__ = [
    "ModelConfig",
    "SirenStack",
    "VisirModel",
    "extract_patches",
    "embed_patches",
    "add_positional_encoding",
    "mhsa",
    "siren_ffn",
    "encode",
    "pool_tokens",
    "decode_hr",
    "forward",
    "vit_mlp_forward",
    "siren_inr_forward",
    "predict",
    "coordinate_grid",
    "init_parameters",
    "init_siren_stack",
    "parameter_count",
]

VARIANTS = ("visir", "vit_mlp")
DECODER_MODES = ("per_token", "global_pooled")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; parameter count is a pure function of this."""

    patch_size: int
    num_layers: int
    num_heads: int
    embed_dim: int
    lr_height: int
    lr_width: int
    omega0: float = 20.0
    siren_hidden_layers: int = 2
    siren_hidden_dim: int = 64
    scale: int = 4
    decoder_mode: str = "per_token"
    channels: int = 3
    variant: str = "visir"
    post_norm: bool = False
    decoder_hidden_layers: int | None = None

    def __post_init__(self):
        if self.embed_dim % self.num_heads != 0:
            raise ValueError(f"embed_dim {self.embed_dim} not divisible by {self.num_heads} heads")
        if self.lr_height % self.patch_size != 0 or self.lr_width % self.patch_size != 0:
            raise ValueError(f"patch size {self.patch_size} does not tile {self.lr_height}x{self.lr_width}")
        if self.scale < 1:
            raise ValueError("scale must be >= 1")
        if not 1 <= self.siren_hidden_layers <= 6:
            raise ValueError("siren_hidden_layers must lie in [1, 6]")
        if self.omega0 <= 0:
            raise ValueError("omega0 must be positive")
        if self.num_layers < 0:
            raise ValueError("num_layers must be >= 0")
        if self.decoder_mode not in DECODER_MODES:
            raise ValueError(f"decoder_mode must be one of {DECODER_MODES}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")

    @property
    def grid_rows(self) -> int:
        return self.lr_height // self.patch_size

    @property
    def grid_cols(self) -> int:
        return self.lr_width // self.patch_size

    @property
    def num_tokens(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    @property
    def hr_height(self) -> int:
        return self.lr_height * self.scale

    @property
    def hr_width(self) -> int:
        return self.lr_width * self.scale

    @property
    def decoder_depth(self) -> int:
        return self.decoder_hidden_layers if self.decoder_hidden_layers is not None else self.siren_hidden_layers

    @property
    def decoder_out_dim(self) -> int:
        if self.decoder_mode == "per_token":
            p_out = self.patch_size * self.scale
            return p_out * p_out * self.channels
        return self.hr_height * self.hr_width * self.channels


@dataclass
class SirenStack:
    """Ordered (weight, bias) pairs sharing one frequency; weights are out x in."""

    layers: list[tuple[Tensor, Tensor]]
    omega0: float

    def __post_init__(self):
        for (w_a, _), (w_b, _) in zip(self.layers, self.layers[1:]):
            if w_b.shape[1] != w_a.shape[0]:
                raise ShapeError(f"stack dimensions do not chain: {w_a.shape} -> {w_b.shape}")

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[0]


@dataclass
class VisirModel:
    config: ModelConfig
    params: dict[str, Tensor]

    def ffn_stack(self, block: int) -> SirenStack:
        return self._stack(f"block{block}.ffn", self.config.siren_hidden_layers)

    def decoder_stack(self) -> SirenStack:
        return self._stack("decoder", self.config.decoder_depth)

    def _stack(self, prefix: str, hidden_layers: int) -> SirenStack:
        layers = [(self.params[f"{prefix}.w{j}"], self.params[f"{prefix}.b{j}"])
                  for j in range(hidden_layers + 1)]
        return SirenStack(layers, self.config.omega0)


def parameter_count(model: VisirModel) -> int:
    return sum(p.size for p in model.params.values())


# ---------------------------------------------------------------------------
# Patch plumbing
# ---------------------------------------------------------------------------

def _as_image_tensor(img) -> Tensor:
    t = img if isinstance(img, Tensor) else Tensor(img)
    if t.ndim == 2:
        t = reshape(t, (t.shape[0], t.shape[1], 1))
    if t.ndim != 3:
        raise ShapeError(f"image must be HxWxC, got shape {t.shape}")
    return t


def extract_patches(img, patch_size: int) -> Tensor:
    """Row-major non-overlapping patches, each flattened to length P*P*C."""
    t = _as_image_tensor(img)
    h, w, c = t.shape
    p = patch_size
    if h % p != 0 or w % p != 0:
        raise ShapeError(f"patch size {p} does not tile a {h}x{w} image")
    gh, gw = h // p, w // p
    x = reshape(t, (gh, p, gw, p, c))
    x = transpose(x, (0, 2, 1, 3, 4))
    return reshape(x, (gh * gw, p * p * c))


def patches_to_image(tokens: Tensor, grid_rows: int, grid_cols: int, p_out: int, channels: int) -> Tensor:
    """Inverse of extract_patches at the output resolution."""
    x = reshape(tokens, (grid_rows, grid_cols, p_out, p_out, channels))
    x = transpose(x, (0, 2, 1, 3, 4))
    return reshape(x, (grid_rows * p_out, grid_cols * p_out, channels))


def embed_patches(patches: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    if weight.shape[1] != patches.shape[1]:
        raise ShapeError(f"embedding expects patch dim {weight.shape[1]}, got {patches.shape[1]}")
    return affine(patches, weight, bias)


def add_positional_encoding(tokens: Tensor, pos: Tensor) -> Tensor:
    if tokens.shape != pos.shape:
        raise ShapeError(f"positional encoding {pos.shape} does not match tokens {tokens.shape}")
    return add(tokens, pos)


# ---------------------------------------------------------------------------
# Attention and sine stacks
# ---------------------------------------------------------------------------

def mhsa(tokens: Tensor, wq: Tensor, bq: Tensor, wk: Tensor, bk: Tensor,
         wv: Tensor, bv: Tensor, wo: Tensor, bo: Tensor, num_heads: int) -> Tensor:
    """Scaled dot-product attention per head, heads concatenated, projected."""
    d = tokens.shape[1]
    if d % num_heads != 0:
        raise ShapeError(f"token dim {d} not divisible by {num_heads} heads")
    dh = d // num_heads
    q = affine(tokens, wq, bq)
    k = affine(tokens, wk, bk)
    v = affine(tokens, wv, bv)
    heads = []
    for h in range(num_heads):
        qh = narrow(q, 1, h * dh, dh)
        kh = narrow(k, 1, h * dh, dh)
        vh = narrow(v, 1, h * dh, dh)
        scores = scale(matmul(qh, transpose(kh)), 1.0 / math.sqrt(dh))
        heads.append(matmul(softmax(scores, axis=-1), vh))
    return affine(concat(heads, axis=1), wo, bo)


def apply_stack(x: Tensor, stack: SirenStack, hidden: str = "sine", final: str = "affine") -> Tensor:
    """Run a stack of affine layers with the chosen activations.

    hidden: "sine" or "gelu", applied after every layer but the last.
    final: "affine" (unbounded), "sine", or "sigmoid".
    """
    for w, b in stack.layers[:-1]:
        x = affine(x, w, b)
        x = sine_activation(x, stack.omega0) if hidden == "sine" else gelu(x)
    w, b = stack.layers[-1]
    x = affine(x, w, b)
    if final == "sine":
        x = sine_activation(x, stack.omega0)
    elif final == "sigmoid":
        x = sigmoid(x)
    return x


def siren_ffn(x: Tensor, stack: SirenStack) -> Tensor:
    """Sine hidden layers, affine output (unbounded, residual-friendly)."""
    return apply_stack(x, stack, hidden="sine", final="affine")


def pool_tokens(tokens: Tensor) -> Tensor:
    if tokens.shape[0] < 1:
        raise ShapeError("cannot pool an empty token sequence")
    return mean(tokens, axis=0)


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

def _hidden_act(cfg: ModelConfig) -> str:
    return "sine" if cfg.variant == "visir" else "gelu"


def _check_input(cfg: ModelConfig, img: Tensor) -> None:
    expected = (cfg.lr_height, cfg.lr_width, cfg.channels)
    if img.shape != expected:
        raise ShapeError(f"model expects LR input of shape {expected}, got {img.shape}")


def _encoder_block(tokens: Tensor, model: VisirModel, i: int, act: str) -> Tensor:
    cfg = model.config
    p = model.params

    def att(x):
        return mhsa(
            x,
            p[f"block{i}.attn.wq"], p[f"block{i}.attn.bq"],
            p[f"block{i}.attn.wk"], p[f"block{i}.attn.bk"],
            p[f"block{i}.attn.wv"], p[f"block{i}.attn.bv"],
            p[f"block{i}.attn.wo"], p[f"block{i}.attn.bo"],
            cfg.num_heads,
        )

    def ffn(x):
        return apply_stack(x, model.ffn_stack(i), hidden=act, final="affine")

    def ln(which, x):
        return layer_norm(x, p[f"block{i}.{which}.gain"], p[f"block{i}.{which}.shift"])

    if cfg.post_norm:
        tokens = ln("ln1", add(tokens, att(tokens)))
        tokens = ln("ln2", add(tokens, ffn(tokens)))
    else:
        tokens = add(tokens, att(ln("ln1", tokens)))
        tokens = add(tokens, ffn(ln("ln2", tokens)))
    return tokens


def encode(img, model: VisirModel) -> Tensor:
    """LR image -> contextualized token sequence (N x D)."""
    cfg = model.config
    t = _as_image_tensor(img)
    _check_input(cfg, t)
    p = model.params
    tokens = embed_patches(extract_patches(t, cfg.patch_size), p["embed.weight"], p["embed.bias"])
    tokens = add_positional_encoding(tokens, p["pos"])
    act = _hidden_act(cfg)
    for i in range(cfg.num_layers):
        tokens = _encoder_block(tokens, model, i, act)
    return tokens


def decode_hr(tokens: Tensor, model: VisirModel) -> Tensor:
    """Token sequence -> HR image in [0, 1].

    per_token: the shared decoder stack maps each token to its own HR patch.
    global_pooled: tokens are averaged to one feature vector which decodes
    to the whole HR image at once.
    """
    cfg = model.config
    if tokens.shape != (cfg.num_tokens, cfg.embed_dim):
        raise ShapeError(f"decoder expects {cfg.num_tokens}x{cfg.embed_dim} tokens, got {tokens.shape}")
    stack = model.decoder_stack()
    act = _hidden_act(cfg)
    final = "sine" if cfg.variant == "visir" else "sigmoid"
    if cfg.decoder_mode == "per_token":
        out = apply_stack(tokens, stack, hidden=act, final=final)
        if final == "sine":
            out = scale(add(out, Tensor(np.ones(out.shape))), 0.5)
        return patches_to_image(out, cfg.grid_rows, cfg.grid_cols, cfg.patch_size * cfg.scale, cfg.channels)
    pooled = reshape(pool_tokens(tokens), (1, cfg.embed_dim))
    out = apply_stack(pooled, stack, hidden=act, final=final)
    if final == "sine":
        out = scale(add(out, Tensor(np.ones(out.shape))), 0.5)
    return reshape(out, (cfg.hr_height, cfg.hr_width, cfg.channels))


def forward(img, model: VisirModel) -> Tensor:
    """End-to-end sine-variant reconstruction; differentiable throughout."""
    if model.config.variant != "visir":
        raise ValueError("forward() runs the sine variant; use vit_mlp_forward for the MLP baseline")
    return decode_hr(encode(img, model), model)


def vit_mlp_forward(img, model: VisirModel) -> Tensor:
    """Equal-parameter baseline: GELU feed-forward stacks, sigmoid output."""
    if model.config.variant != "vit_mlp":
        raise ValueError("vit_mlp_forward() needs a model initialized with variant='vit_mlp'")
    return decode_hr(encode(img, model), model)


def predict(img, model: VisirModel) -> Tensor:
    """Variant-dispatching forward pass (training and evaluation entry)."""
    return forward(img, model) if model.config.variant == "visir" else vit_mlp_forward(img, model)


# ---------------------------------------------------------------------------
# Coordinate-network baseline
# ---------------------------------------------------------------------------

def coordinate_grid(h: int, w: int) -> np.ndarray:
    """Pixel-center coordinates of an h x w grid, both axes in [-1, 1]."""
    ys = (np.arange(h) + 0.5) / h * 2.0 - 1.0
    xs = (np.arange(w) + 0.5) / w * 2.0 - 1.0
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    return np.stack([yy, xx], axis=-1)


def siren_inr_forward(coords, stack: SirenStack) -> Tensor:
    """Coordinate network: (..., 2) grid -> (..., C) image values in [0, 1]."""
    t = coords if isinstance(coords, Tensor) else Tensor(coords)
    lead = t.shape[:-1]
    if t.shape[-1] != stack.in_dim:
        raise ShapeError(f"coordinates have dim {t.shape[-1]}, stack expects {stack.in_dim}")
    flat = reshape(t, (int(np.prod(lead)) if lead else 1, stack.in_dim))
    out = apply_stack(flat, stack, hidden="sine", final="sine")
    out = scale(add(out, Tensor(np.ones(out.shape))), 0.5)
    return reshape(out, lead + (stack.out_dim,))


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def _uniform(rng: np.random.Generator, shape, bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape)


def _stack_params(rng: np.random.Generator, dims: list[int], omega0: float, sine_init: bool) -> list[tuple[np.ndarray, np.ndarray]]:
    out = []
    for j, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        if sine_init:
            bound = 1.0 / fan_in if j == 0 else math.sqrt(6.0 / fan_in) / omega0
        else:
            bound = 1.0 / math.sqrt(fan_in)
        w = _uniform(rng, (fan_out, fan_in), bound)
        b = _uniform(rng, (fan_out,), 1.0 / math.sqrt(fan_in))
        out.append((w, b))
    return out


def init_siren_stack(dims: list[int], omega0: float, seed: int) -> SirenStack:
    """Standalone sine stack (used by the coordinate-network baseline)."""
    rng = np.random.default_rng(seed)
    layers = [(Tensor(w, requires_grad=True), Tensor(b, requires_grad=True))
              for w, b in _stack_params(rng, dims, omega0, sine_init=True)]
    return SirenStack(layers, omega0)


def init_parameters(config: ModelConfig, seed: int) -> VisirModel:
    """Fresh model, reproducible bit-for-bit from the seed.

    Sine stacks follow the coordinate-network scheme: first layer uniform in
    +-1/fan_in, deeper layers +-sqrt(6/fan_in)/omega0.  Attention, embedding
    and MLP-variant stacks use uniform +-1/sqrt(fan_in).
    """
    rng = np.random.default_rng(seed)
    cfg = config
    sine_init = cfg.variant == "visir"
    raw: dict[str, np.ndarray] = {}

    raw["embed.weight"] = _uniform(rng, (cfg.embed_dim, cfg.patch_dim), 1.0 / math.sqrt(cfg.patch_dim))
    raw["embed.bias"] = _uniform(rng, (cfg.embed_dim,), 1.0 / math.sqrt(cfg.patch_dim))
    raw["pos"] = _uniform(rng, (cfg.num_tokens, cfg.embed_dim), 1.0 / math.sqrt(cfg.embed_dim))

    attn_bound = 1.0 / math.sqrt(cfg.embed_dim)
    for i in range(cfg.num_layers):
        for name in ("wq", "wk", "wv", "wo"):
            raw[f"block{i}.attn.{name}"] = _uniform(rng, (cfg.embed_dim, cfg.embed_dim), attn_bound)
            raw[f"block{i}.attn.{name.replace('w', 'b')}"] = _uniform(rng, (cfg.embed_dim,), attn_bound)
        raw[f"block{i}.ln1.gain"] = np.ones(cfg.embed_dim)
        raw[f"block{i}.ln1.shift"] = np.zeros(cfg.embed_dim)
        raw[f"block{i}.ln2.gain"] = np.ones(cfg.embed_dim)
        raw[f"block{i}.ln2.shift"] = np.zeros(cfg.embed_dim)
        ffn_dims = [cfg.embed_dim] + [cfg.siren_hidden_dim] * cfg.siren_hidden_layers + [cfg.embed_dim]
        for j, (w, b) in enumerate(_stack_params(rng, ffn_dims, cfg.omega0, sine_init)):
            raw[f"block{i}.ffn.w{j}"] = w
            raw[f"block{i}.ffn.b{j}"] = b

    dec_dims = [cfg.embed_dim] + [cfg.siren_hidden_dim] * cfg.decoder_depth + [cfg.decoder_out_dim]
    for j, (w, b) in enumerate(_stack_params(rng, dec_dims, cfg.omega0, sine_init)):
        raw[f"decoder.w{j}"] = w
        raw[f"decoder.b{j}"] = b

    params = {name: Tensor(arr, requires_grad=True) for name, arr in raw.items()}
    return VisirModel(config=cfg, params=params)


def as_mlp_baseline(config: ModelConfig) -> ModelConfig:
    """Same geometry, MLP variant: parameter count matches exactly."""
    return replace(config, variant="vit_mlp")
