"""Least-squares adversarial training with two discriminators.

Each generator update is preceded by `d1_steps` updates of the first
discriminator and `d2_steps` of the second, on independent real batches.
The generator loss averages both discriminators' least-squares terms.
Orthogonal regularization is added to every player; learning rates decay
by a constant factor per epoch.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
from torch.nn.utils import parametrize

from .conditioning import MaskConfig, draw_condition_batch
from .networks import (
    Discriminator,
    DiscriminatorSpec,
    Generator,
    GeneratorSpec,
    build_discriminator,
    build_generator,
)
from .schema import RawTable, RecordLayout
from .transform import FittedTransformer, decode_table

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1.8e-3
    adam_betas: tuple[float, float] = (0.0, 0.9)
    batch_size: int = 500
    d1_steps: int = 2
    d2_steps: int = 3
    decay_rate: float = 0.99
    max_epochs: int = 400
    ortho_reg_weight: float = 1e-4
    chordal_reg_weight: float = 0.0
    seed: int = 0
    stop_window: int = 20
    d_loss_floor: float = 1e-4
    entropy_floor: float = 1e-3
    dtype: str = "float64"

    def __post_init__(self):
        if self.d1_steps < 1 or self.d2_steps < 1:
            raise ValueError("discriminator step counts must be >= 1")
        if min(self.learning_rate, self.batch_size, self.decay_rate, self.max_epochs) <= 0:
            raise ValueError("learning_rate, batch_size, decay_rate, max_epochs must be > 0")
        if self.ortho_reg_weight < 0 or self.chordal_reg_weight < 0:
            raise ValueError("regularizer weights must be >= 0")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be 'float32' or 'float64'")

    @property
    def torch_dtype(self) -> torch.dtype:
        return getattr(torch, self.dtype)


def lsgan_d_loss(real_logits, fake_logits) -> torch.Tensor:
    """mean[(real - 1)^2] + mean[fake^2]; zero exactly at (1, 0)."""
    real = torch.as_tensor(real_logits, dtype=torch.float64)
    fake = torch.as_tensor(fake_logits, dtype=torch.float64)
    return ((real - 1.0) ** 2).mean() + (fake ** 2).mean()


def lsgan_g_loss(fake_logits_d1, fake_logits_d2) -> torch.Tensor:
    """Unweighted average of the two discriminators' least-squares terms."""
    f1 = torch.as_tensor(fake_logits_d1, dtype=torch.float64)
    f2 = torch.as_tensor(fake_logits_d2, dtype=torch.float64)
    return 0.5 * ((f1 - 1.0) ** 2).mean() + 0.5 * ((f2 - 1.0) ** 2).mean()


def orthogonal_penalty(module: nn.Module) -> torch.Tensor:
    """Sum of ||W^T W - I||_F^2 over matrix-shaped parameters (gram on the
    smaller side); zero iff every such matrix has orthonormal rows/columns."""
    total = None
    for name, p in module.named_parameters():
        if p.dim() < 2 or "bias" in name:
            continue
        w = p.reshape(p.shape[0], -1)
        if w.shape[0] <= w.shape[1]:
            gram = w @ w.t()
        else:
            gram = w.t() @ w
        eye = torch.eye(gram.shape[0], dtype=w.dtype, device=w.device)
        term = ((gram - eye) ** 2).sum()
        total = term if total is None else total + term
    if total is None:
        return torch.zeros((), dtype=torch.float64)
    return total


def chordal_penalty(fake: torch.Tensor, real: torch.Tensor) -> torch.Tensor:
    """Mean chordal distance between direction-normalized fake and real rows."""
    f = fake / fake.norm(dim=1, keepdim=True).clamp_min(1e-12)
    r = real / real.norm(dim=1, keepdim=True).clamp_min(1e-12)
    cos = (f * r).sum(dim=1).clamp(-1.0, 1.0)
    return torch.sqrt((1.0 - cos ** 2).clamp_min(0.0)).mean()


@dataclass
class TrainState:
    generator: Generator
    d1: Discriminator
    d2: Discriminator
    opt_g: torch.optim.Adam
    opt_d1: torch.optim.Adam
    opt_d2: torch.optim.Adam
    mask_config: MaskConfig
    rng: np.random.Generator
    torch_gen: torch.Generator
    epoch: int = 0
    step: int = 0
    g_updates: int = 0
    d1_updates: int = 0
    d2_updates: int = 0
    loss_history: deque = field(default_factory=lambda: deque(maxlen=4000))

    @property
    def lr(self) -> float:
        return self.opt_g.param_groups[0]["lr"]


def init_train_state(
    gen_spec: GeneratorSpec,
    disc_spec: DiscriminatorSpec,
    mask_config: MaskConfig,
    config: TrainConfig,
) -> TrainState:
    g = build_generator(gen_spec, seed=config.seed, dtype=config.torch_dtype)
    # distinct sub-seeds so the two discriminators start at different points
    d1 = build_discriminator(disc_spec, seed=config.seed + 1, dtype=config.torch_dtype)
    d2 = build_discriminator(disc_spec, seed=config.seed + 2, dtype=config.torch_dtype)
    make_opt = lambda net: torch.optim.Adam(
        net.parameters(), lr=config.learning_rate, betas=config.adam_betas
    )
    return TrainState(
        generator=g,
        d1=d1,
        d2=d2,
        opt_g=make_opt(g),
        opt_d1=make_opt(d1),
        opt_d2=make_opt(d2),
        mask_config=mask_config,
        rng=np.random.default_rng(config.seed),
        torch_gen=torch.Generator().manual_seed(config.seed),
    )


def _model_dtype(state: TrainState) -> torch.dtype:
    return next(state.generator.parameters()).dtype


def _draw_batch(state: TrainState, encoded: np.ndarray, layout: RecordLayout, batch: int):
    real, cond = draw_condition_batch(encoded, layout, batch, state.mask_config, state.rng)
    dtype = _model_dtype(state)
    return torch.tensor(real, dtype=dtype), torch.tensor(cond, dtype=dtype)


def _fake_batch(state: TrainState, cond: torch.Tensor):
    z = torch.randn(
        cond.shape[0], state.generator.spec.noise_width,
        generator=state.torch_gen, dtype=_model_dtype(state),
    )
    return state.generator(z, cond, generator=state.torch_gen)


def discriminator_step(
    state: TrainState,
    disc: Discriminator,
    opt: torch.optim.Adam,
    encoded: np.ndarray,
    layout: RecordLayout,
    config: TrainConfig,
) -> float:
    real, cond = _draw_batch(state, encoded, layout, config.batch_size)
    with torch.no_grad():
        fake = _fake_batch(state, cond)
    with parametrize.cached():
        loss = lsgan_d_loss(disc(real, cond), disc(fake, cond))
    loss = loss + config.ortho_reg_weight * orthogonal_penalty(disc)
    opt.zero_grad()
    loss.backward()
    opt.step()
    return float(loss.detach())


def generator_loss_on_batch(
    state: TrainState,
    real: torch.Tensor,
    cond: torch.Tensor,
    config: TrainConfig,
    d2_scale: float = 1.0,
) -> torch.Tensor:
    """Generator objective on one batch; `d2_scale=0` ablates the second
    discriminator's contribution (its half of the loss is zeroed)."""
    loss, _fake = _generator_objective(state, real, cond, config, d2_scale)
    return loss


def _generator_objective(state, real, cond, config, d2_scale=1.0):
    fake = _fake_batch(state, cond)
    with parametrize.cached():
        f1 = state.d1(fake, cond)
        f2 = state.d2(fake, cond)
    loss = 0.5 * ((f1 - 1.0) ** 2).mean() + d2_scale * 0.5 * ((f2 - 1.0) ** 2).mean()
    loss = loss + config.ortho_reg_weight * orthogonal_penalty(state.generator)
    if config.chordal_reg_weight > 0:
        loss = loss + config.chordal_reg_weight * chordal_penalty(fake, real)
    return loss, fake


def generator_step(
    state: TrainState, encoded: np.ndarray, layout: RecordLayout, config: TrainConfig
) -> tuple[float, float]:
    real, cond = _draw_batch(state, encoded, layout, config.batch_size)
    loss, fake = _generator_objective(state, real, cond, config)
    state.opt_g.zero_grad()
    loss.backward()
    state.opt_g.step()
    entropy = _discrete_entropy(fake.detach(), layout)
    return float(loss.detach()), entropy


def _discrete_entropy(fake: torch.Tensor, layout: RecordLayout) -> float:
    """Mean Shannon entropy of the batch-average distribution over each
    discrete span; collapses to 0 when all generated records agree."""
    if not layout.discrete_spans:
        return float("inf")
    ent = 0.0
    for span in layout.discrete_spans:
        p = fake[:, span.start : span.stop].mean(dim=0)
        p = p / p.sum()
        ent += float(-(p * torch.log(p.clamp_min(1e-12))).sum())
    return ent / len(layout.discrete_spans)


def train_epoch(
    state: TrainState,
    encoded: np.ndarray,
    layout: RecordLayout,
    config: TrainConfig,
    log_fn=None,
) -> TrainState:
    """One pass: per generator update, d1_steps + d2_steps discriminator
    updates on fresh independent batches; epoch-end learning-rate decay."""
    n_batches = max(1, len(encoded) // config.batch_size)
    epoch_t0 = time.monotonic()
    for _ in range(n_batches):
        d1_losses = [
            discriminator_step(state, state.d1, state.opt_d1, encoded, layout, config)
            for _ in range(config.d1_steps)
        ]
        state.d1_updates += config.d1_steps
        d2_losses = [
            discriminator_step(state, state.d2, state.opt_d2, encoded, layout, config)
            for _ in range(config.d2_steps)
        ]
        state.d2_updates += config.d2_steps
        g_loss, entropy = generator_step(state, encoded, layout, config)
        state.g_updates += 1
        state.step += 1

        rec = {
            "epoch": state.epoch,
            "step": state.step,
            "g_loss": g_loss,
            "d1_loss": float(np.mean(d1_losses)),
            "d2_loss": float(np.mean(d2_losses)),
            "entropy": entropy,
            "lr": state.lr,
        }
        state.loss_history.append(rec)
        if not all(np.isfinite([g_loss, rec["d1_loss"], rec["d2_loss"]])):
            raise TrainingInstability(f"non-finite loss at step {state.step}")
        if log_fn is not None:
            log_fn({**rec, "wall_ms": int((time.monotonic() - epoch_t0) * 1000)})
    for opt in (state.opt_g, state.opt_d1, state.opt_d2):
        for group in opt.param_groups:
            group["lr"] *= config.decay_rate
    state.epoch += 1
    return state


class TrainingInstability(RuntimeError):
    pass


def early_stop_check(loss_history, config: TrainConfig):
    """Decide ('continue', None) or ('stop', reason) from recent loss records."""
    window = config.stop_window
    records = list(loss_history)
    for rec in records:
        vals = [rec["g_loss"], rec["d1_loss"], rec["d2_loss"]]
        if not all(np.isfinite(v) for v in vals):
            return ("stop", "instability: non-finite loss")
    if len(records) < window:
        return ("continue", None)
    tail = records[-window:]
    if all(min(r["d1_loss"], r["d2_loss"]) < config.d_loss_floor for r in tail):
        return ("stop", "discriminator domination")
    if all(r["entropy"] < config.entropy_floor for r in tail):
        return ("stop", "mode collapse: discrete-span entropy floor")
    return ("continue", None)


def train(
    state: TrainState,
    encoded: np.ndarray,
    layout: RecordLayout,
    config: TrainConfig,
    log_fn=None,
    checkpoint_fn=None,
    checkpoint_every: int = 50,
) -> tuple[TrainState, str]:
    """Run until max_epochs or an early-stop trigger; returns the stop reason."""
    reason = "max epochs reached"
    while state.epoch < config.max_epochs:
        try:
            train_epoch(state, encoded, layout, config, log_fn=log_fn)
        except TrainingInstability as exc:
            reason = f"stopped early: {exc}"
            break
        if checkpoint_fn is not None and state.epoch % checkpoint_every == 0:
            checkpoint_fn(state)
        decision, why = early_stop_check(state.loss_history, config)
        if decision == "stop":
            reason = f"stopped early: {why}"
            break
    return state, reason


def synthesize(
    state: TrainState,
    n_rows: int,
    transformer: FittedTransformer,
    encoded_real: np.ndarray,
    rng: np.random.Generator,
) -> RawTable:
    """Hard-decode generator output into a table with the input schema.

    Conditions come from masking uniformly sampled real records, as in
    training; noise is standard normal.
    """
    if state.g_updates == 0:
        raise RuntimeError("untrained state")
    layout = transformer.layout
    dtype = _model_dtype(state)
    _, cond_np = draw_condition_batch(encoded_real, layout, n_rows, state.mask_config, rng)
    cond = torch.tensor(cond_np, dtype=dtype)
    state.generator.eval()
    try:
        with torch.no_grad():
            z = torch.randn(n_rows, state.generator.spec.noise_width,
                            generator=state.torch_gen, dtype=dtype)
            fake = state.generator(z, cond, hard=True)
    finally:
        state.generator.train()
    return decode_table(fake.numpy(), transformer)


# -- checkpointing --------------------------------------------------------


def save_checkpoint(path, state: TrainState, config: TrainConfig) -> None:
    torch.save(
        {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "generator": state.generator.state_dict(),
            "d1": state.d1.state_dict(),
            "d2": state.d2.state_dict(),
            "opt_g": state.opt_g.state_dict(),
            "opt_d1": state.opt_d1.state_dict(),
            "opt_d2": state.opt_d2.state_dict(),
            "epoch": state.epoch,
            "step": state.step,
            "g_updates": state.g_updates,
            "d1_updates": state.d1_updates,
            "d2_updates": state.d2_updates,
            "numpy_rng": state.rng.bit_generator.state,
            "torch_rng": state.torch_gen.get_state(),
            "loss_history": list(state.loss_history),
            "config": config.__dict__,
        },
        path,
    )


def checkpoint_manifest(state: TrainState, config: TrainConfig, layout: RecordLayout) -> dict:
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "epoch": state.epoch,
        "step": state.step,
        "seed": config.seed,
        "mask_dof": state.mask_config.dof,
        "layout_width": layout.total_width,
        "layout_n_t": layout.n_t,
    }


def load_checkpoint(path, state: TrainState) -> TrainState:
    """Restore weights, optimizer moments, counters, and RNG streams in place."""
    doc = torch.load(path, weights_only=False)
    if doc["format_version"] != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {doc['format_version']}")
    state.generator.load_state_dict(doc["generator"])
    state.d1.load_state_dict(doc["d1"])
    state.d2.load_state_dict(doc["d2"])
    state.opt_g.load_state_dict(doc["opt_g"])
    state.opt_d1.load_state_dict(doc["opt_d1"])
    state.opt_d2.load_state_dict(doc["opt_d2"])
    state.epoch = doc["epoch"]
    state.step = doc["step"]
    state.g_updates = doc["g_updates"]
    state.d1_updates = doc["d1_updates"]
    state.d2_updates = doc["d2_updates"]
    state.rng.bit_generator.state = doc["numpy_rng"]
    state.torch_gen.set_state(doc["torch_rng"])
    state.loss_history = deque(doc["loss_history"], maxlen=state.loss_history.maxlen)
    return state
