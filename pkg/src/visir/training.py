"""Optimization loop, split evaluation, the frequency x depth sweep, and
checkpoint persistence.

Training is deterministic: (seed, config, data) fully determine the final
parameters, so checkpoints from identical runs are byte-identical.  The loss
is plain MSE on unit-interval pixels.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, asdict, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import (
    NonFiniteError,
    Tensor,
    add,
    backward,
    clear_tape,
    init_adam,
    adam_step,
    mean,
    mul,
    no_grad,
    scale,
    sub,
)
from .data import DatasetManifest, SRPair, load_pairs
from .metrics import MetricsReport, evaluate_pair
from .model import (
    ModelConfig,
    SirenStack,
    VisirModel,
    coordinate_grid,
    init_parameters,
    init_siren_stack,
    predict,
    siren_inr_forward,
)

__all__ = [
    "TrainConfig",
    "TrainResult",
    "SummaryStat",
    "EvalSummary",
    "SweepResult",
    "DivergenceError",
    "CheckpointFormatError",
    "CheckpointMismatchError",
    "train",
    "evaluate",
    "sweep",
    "fit_siren_inr",
    "save_checkpoint",
    "load_checkpoint",
    "write_loss_curve",
    "write_eval_csv",
    "write_sweep_csv",
]

CHECKPOINT_MAGIC = b"VSCK"
CHECKPOINT_VERSION = 1


class DivergenceError(RuntimeError):
    """Training loss became non-finite."""

    def __init__(self, step: int, detail: str = ""):
        self.step = step
        super().__init__(f"training diverged at step {step}" + (f": {detail}" if detail else ""))


class CheckpointFormatError(ValueError):
    """Checkpoint bytes are not a valid model file."""


class CheckpointMismatchError(ValueError):
    """Checkpoint holds a different configuration than the caller expects."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    steps: int = 500
    batch_size: int = 1
    seed: int = 0
    eval_interval: int = 0

    def __post_init__(self):
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")


@dataclass
class TrainResult:
    model: VisirModel
    curve: list[tuple[int, float]]
    eval_curve: list[tuple[int, float]] = field(default_factory=list)

    @property
    def final_loss(self) -> float | None:
        return self.curve[-1][1] if self.curve else None


def _resolve_pairs(data, split: str | None) -> list[SRPair]:
    """Accepts a DatasetManifest, a {"train": [...], "test": [...]} dict, or a
    plain pair sequence (used verbatim regardless of the requested split)."""
    if isinstance(data, DatasetManifest):
        return load_pairs(data, split)
    if isinstance(data, dict):
        if split is None:
            return [p for pairs in data.values() for p in pairs]
        return list(data.get(split, ()))
    return list(data)


def _mse_loss(out: Tensor, target: np.ndarray) -> Tensor:
    diff = sub(out, Tensor(target))
    return mean(mul(diff, diff))


def train(model: VisirModel, data, cfg: TrainConfig, eval_pairs: Sequence[SRPair] | None = None) -> TrainResult:
    """Adam on the MSE reconstruction loss over the training split."""
    pairs = _resolve_pairs(data, "train")
    if not pairs:
        raise ValueError("no training pairs")
    rng = np.random.default_rng(cfg.seed)
    opt = init_adam(model.params, lr=cfg.learning_rate)
    curve: list[tuple[int, float]] = []
    eval_curve: list[tuple[int, float]] = []
    for step in range(1, cfg.steps + 1):
        idx = rng.integers(0, len(pairs), size=cfg.batch_size)
        clear_tape()
        try:
            total = None
            for i in idx:
                term = _mse_loss(predict(pairs[i].lr, model), pairs[i].hr)
                total = term if total is None else add(total, term)
            loss = scale(total, 1.0 / cfg.batch_size)
            value = loss.item()
            backward(loss)
            grads = {name: (p.grad if p.grad is not None else np.zeros(p.shape))
                     for name, p in model.params.items()}
            model.params = adam_step(model.params, opt, grads)
        except NonFiniteError as exc:
            clear_tape()
            raise DivergenceError(step, str(exc)) from exc
        if not math.isfinite(value):
            raise DivergenceError(step)
        curve.append((step, value))
        if eval_pairs and cfg.eval_interval > 0 and step % cfg.eval_interval == 0:
            _, summary = evaluate(model, eval_pairs)
            eval_curve.append((step, summary.psnr.mean))
    return TrainResult(model=model, curve=curve, eval_curve=eval_curve)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SummaryStat:
    max: float
    mean: float
    min: float


@dataclass(frozen=True)
class EvalSummary:
    mse: SummaryStat
    psnr: SummaryStat
    ssim: SummaryStat
    count: int
    psnr_inf_count: int


def _summarize(reports: Sequence[MetricsReport]) -> EvalSummary:
    mses = [r.mse for r in reports]
    psnrs = [r.psnr for r in reports]
    ssims = [r.ssim for r in reports]
    finite_psnrs = [p for p in psnrs if math.isfinite(p)]
    psnr_mean = float(np.mean(finite_psnrs)) if finite_psnrs else math.inf
    return EvalSummary(
        mse=SummaryStat(max(mses), float(np.mean(mses)), min(mses)),
        psnr=SummaryStat(max(psnrs), psnr_mean, min(psnrs)),
        ssim=SummaryStat(max(ssims), float(np.mean(ssims)), min(ssims)),
        count=len(reports),
        psnr_inf_count=len(psnrs) - len(finite_psnrs),
    )


def evaluate(model: VisirModel, data, split: str = "test") -> tuple[list[MetricsReport], EvalSummary]:
    """Per-image metric reports plus their Max/Mean/Min summary.

    Infinite PSNR values (perfect reconstructions) are excluded from the
    mean; psnr_inf_count says how many were dropped.
    """
    pairs = _resolve_pairs(data, split)
    if not pairs:
        raise ValueError("empty evaluation split")
    reports = []
    with no_grad():
        for pair in pairs:
            out = predict(pair.lr, model).data
            reports.append(evaluate_pair(pair.hr, out))
    return reports, _summarize(reports)


# ---------------------------------------------------------------------------
# Hyperparameter sweep
# ---------------------------------------------------------------------------

DEFAULT_FREQUENCIES = (10.0, 20.0, 30.0, 40.0, 50.0, 60.0)
DEFAULT_LAYER_COUNTS = (1, 2, 3, 4, 5, 6)


@dataclass
class SweepResult:
    frequencies: tuple[float, ...]
    layer_counts: tuple[int, ...]
    cells: dict[tuple[int, float], float]  # (layers, omega0) -> mean test PSNR, NaN = failed
    failures: list[tuple[int, float, str]]

    def best(self) -> tuple[tuple[int, float], float]:
        finite = {k: v for k, v in self.cells.items() if math.isfinite(v)}
        if not finite:
            raise ValueError("every sweep cell failed")
        key = max(finite, key=finite.get)
        return key, finite[key]


def sweep(base_config: ModelConfig, data, train_cfg: TrainConfig,
          frequencies: Sequence[float] = DEFAULT_FREQUENCIES,
          layer_counts: Sequence[int] = DEFAULT_LAYER_COUNTS) -> SweepResult:
    """Train one model per (hidden layers, omega0) cell under one budget.

    Every requested cell appears in the result exactly once: either a finite
    mean test PSNR or NaN with an entry in `failures`.
    """
    if not frequencies or not layer_counts:
        raise ValueError("sweep grid must be non-empty")
    train_pairs = _resolve_pairs(data, "train")
    test_pairs = _resolve_pairs(data, "test")
    cells: dict[tuple[int, float], float] = {}
    failures: list[tuple[int, float, str]] = []
    for layers in layer_counts:
        for freq in frequencies:
            cfg = replace(base_config, siren_hidden_layers=layers, omega0=float(freq))
            model = init_parameters(cfg, train_cfg.seed)
            try:
                train(model, train_pairs, train_cfg)
                _, summary = evaluate(model, test_pairs)
                cells[(layers, float(freq))] = summary.psnr.mean
            except DivergenceError as exc:
                cells[(layers, float(freq))] = math.nan
                failures.append((layers, float(freq), str(exc)))
    return SweepResult(tuple(float(f) for f in frequencies), tuple(layer_counts), cells, failures)


# ---------------------------------------------------------------------------
# Per-image coordinate-network fitting (the "SIREN" baseline)
# ---------------------------------------------------------------------------

def fit_siren_inr(pair: SRPair, hidden_dim: int = 64, hidden_layers: int = 2,
                  omega0: float = 20.0, steps: int = 1000, learning_rate: float = 1e-4,
                  seed: int = 0) -> tuple[SirenStack, np.ndarray]:
    """Fit a coordinate network to one image's LR pixels, decode the HR grid.

    Returns the fitted stack and the HR-grid reconstruction.
    """
    channels = pair.lr.shape[2]
    stack = init_siren_stack([2] + [hidden_dim] * hidden_layers + [channels], omega0, seed)
    params = {}
    for j, (w, b) in enumerate(stack.layers):
        params[f"w{j}"] = w
        params[f"b{j}"] = b
    opt = init_adam(params, lr=learning_rate)
    lr_coords = coordinate_grid(pair.lr.shape[0], pair.lr.shape[1])
    for step in range(1, steps + 1):
        clear_tape()
        stack = SirenStack([(params[f"w{j}"], params[f"b{j}"]) for j in range(hidden_layers + 1)], omega0)
        try:
            loss = _mse_loss(siren_inr_forward(lr_coords, stack), pair.lr)
            backward(loss)
            grads = {name: (p.grad if p.grad is not None else np.zeros(p.shape))
                     for name, p in params.items()}
            params = adam_step(params, opt, grads)
        except NonFiniteError as exc:
            clear_tape()
            raise DivergenceError(step, str(exc)) from exc
    stack = SirenStack([(params[f"w{j}"], params[f"b{j}"]) for j in range(hidden_layers + 1)], omega0)
    with no_grad():
        hr_coords = coordinate_grid(pair.hr.shape[0], pair.hr.shape[1])
        recon = siren_inr_forward(hr_coords, stack).data
    return stack, recon


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def _config_json(cfg: ModelConfig) -> bytes:
    return json.dumps(asdict(cfg), sort_keys=True).encode("utf-8")


def save_checkpoint(model: VisirModel, path) -> None:
    """Magic, version, canonical config, then each tensor as
    (name, rank, extents, little-endian f64 values), names sorted."""
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    config = _config_json(model.config)
    blob += struct.pack("<II", CHECKPOINT_VERSION, len(config))
    blob += config
    names = sorted(model.params)
    blob += struct.pack("<I", len(names))
    for name in names:
        p = model.params[name]
        encoded = name.encode("utf-8")
        blob += struct.pack("<I", len(encoded))
        blob += encoded
        blob += struct.pack("<I", p.ndim)
        blob += struct.pack(f"<{p.ndim}I", *p.shape)
        blob += p.data.astype("<f8").tobytes(order="C")
    Path(path).write_bytes(bytes(blob))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointFormatError(
                f"truncated checkpoint: wanted {n} bytes at offset {self.pos}, have {len(self.blob) - self.pos}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path, expected_config: ModelConfig | None = None) -> VisirModel:
    reader = _Reader(Path(path).read_bytes())
    if reader.take(4) != CHECKPOINT_MAGIC:
        raise CheckpointFormatError("bad checkpoint magic")
    version = reader.u32()
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"unsupported checkpoint version {version}")
    config_bytes = reader.take(reader.u32())
    try:
        config = ModelConfig(**json.loads(config_bytes.decode("utf-8")))
    except (ValueError, TypeError) as exc:
        raise CheckpointFormatError(f"bad checkpoint config: {exc}") from exc
    if expected_config is not None and config != expected_config:
        raise CheckpointMismatchError(f"checkpoint config {config} != expected {expected_config}")
    params: dict[str, Tensor] = {}
    for _ in range(reader.u32()):
        name = reader.take(reader.u32()).decode("utf-8")
        rank = reader.u32()
        shape = struct.unpack(f"<{rank}I", reader.take(4 * rank))
        count = int(np.prod(shape)) if shape else 1
        values = np.frombuffer(reader.take(8 * count), dtype="<f8").reshape(shape)
        params[name] = Tensor(values, requires_grad=True)
    if reader.pos != len(reader.blob):
        raise CheckpointFormatError("trailing bytes after checkpoint payload")
    return VisirModel(config=config, params=params)


# ---------------------------------------------------------------------------
# CSV emission (decimal, '.' radix, locale-independent)
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_loss_curve(curve: Sequence[tuple[int, float]], path) -> None:
    lines = ["step,loss"]
    lines += [f"{step},{_fmt(loss)}" for step, loss in curve]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_eval_csv(ids: Sequence[str], reports: Sequence[MetricsReport], path) -> None:
    lines = ["image_id,mse,psnr,ssim"]
    for pair_id, r in zip(ids, reports):
        lines.append(f"{pair_id},{_fmt(r.mse)},{_fmt(r.psnr)},{_fmt(r.ssim)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_sweep_csv(result: SweepResult, path) -> None:
    header = "hidden_layers," + ",".join(_fmt(f) for f in result.frequencies)
    lines = [header]
    for layers in result.layer_counts:
        row = [str(layers)]
        for freq in result.frequencies:
            value = result.cells[(layers, freq)]
            row.append("failed" if math.isnan(value) else _fmt(value))
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
