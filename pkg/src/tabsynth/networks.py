"""Generator and twin-discriminator architectures.

The generator projects noise-plus-condition onto a coarse channel grid, runs
convolutional stages with re-injected latent (skip connections on the input
vector), and finishes with a per-span output head: tanh on continuous scalar
slots, gumbel-softmax on every one-hot span. Both discriminators share one
architecture (spectrally normalized convolutions, leaky ReLU, no dropout) but
are initialized from distinct sub-seeds.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.nn.utils import parametrize
from torch.nn.utils.parametrizations import spectral_norm, weight_norm

from .schema import RecordLayout

GUMBEL_TEMPERATURE = 0.2
LEAKY_SLOPE = 0.2


@dataclass(frozen=True)
class GeneratorSpec:
    layout: RecordLayout
    cond_width: int
    base_channels: int = 256
    grid: tuple[int, int] = (8, 32)
    gumbel_temperature: float = GUMBEL_TEMPERATURE

    def __post_init__(self):
        if self.gumbel_temperature <= 0:
            raise ValueError("gumbel_temperature must be > 0")

    @property
    def noise_width(self) -> int:
        # latent dimension matches the record width
        return self.layout.total_width

    @property
    def input_width(self) -> int:
        return self.noise_width + self.cond_width

    @property
    def output_width(self) -> int:
        return self.layout.total_width


@dataclass(frozen=True)
class DiscriminatorSpec:
    layout: RecordLayout
    cond_width: int
    channels: tuple[int, int, int] = (256, 512, 1024)
    grid: tuple[int, int] = (16, 64)

    @property
    def input_width(self) -> int:
        return self.layout.total_width + self.cond_width


def _orthogonal_(tensor: torch.Tensor, generator: torch.Generator) -> None:
    """Orthogonal init (rows or columns orthonormal) from a seeded draw."""
    rows = tensor.shape[0]
    cols = tensor.numel() // rows
    flat = torch.randn(max(rows, cols), min(rows, cols), generator=generator, dtype=tensor.dtype)
    q, r = torch.linalg.qr(flat)
    q = q * torch.sign(torch.diagonal(r))
    if rows < cols:
        q = q.t()
    with torch.no_grad():
        tensor.copy_(q.reshape(tensor.shape))


def init_weights(module: nn.Module, seed: int) -> None:
    """Orthogonal matrices, zero biases, ones/zeros for norm layers; seeded.

    Parametrized weights (spectral/weight norm) are initialized through their
    underlying tensors so the effective weight comes out orthogonal.
    """
    gen = torch.Generator().manual_seed(seed)
    for m in module.modules():
        if isinstance(m, (nn.Linear, nn.Conv2d, nn.ConvTranspose2d)):
            if parametrize.is_parametrized(m, "weight"):
                plist = m.parametrizations.weight
                if hasattr(plist, "original"):  # spectral norm: sigma(orthogonal) = 1
                    _orthogonal_(plist.original, gen)
                else:  # weight norm: direction orthogonal, unit gains
                    _orthogonal_(plist.original1, gen)
                    with torch.no_grad():
                        plist.original0.fill_(1.0)
            else:
                _orthogonal_(m.weight, gen)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.BatchNorm2d):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def gumbel_softmax_span(
    logits: torch.Tensor,
    temperature: float,
    noise: torch.Tensor | None = None,
    hard: bool = False,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Gumbel-softmax over the last dimension.

    `noise=None, hard=True` means deterministic argmax decoding (synthesis);
    an explicit noise tensor makes the draw reproducible for gradient checks.
    """
    if noise is None and not hard:
        u = torch.rand(logits.shape, generator=generator, dtype=logits.dtype, device=logits.device)
        neg_log_u = (-torch.log(u.clamp_min(1e-20))).clamp_min(1e-20)
        noise = -torch.log(neg_log_u)
    perturbed = logits if noise is None else logits + noise
    soft = F.softmax(perturbed / temperature, dim=-1)
    if hard:
        index = perturbed.argmax(dim=-1, keepdim=True)
        one_hot = torch.zeros_like(soft).scatter_(-1, index, 1.0)
        if soft.requires_grad:
            # straight-through estimator; adds float round-off to the values
            return one_hot + soft - soft.detach()
        return one_hot
    return soft


class OutputHead(nn.Module):
    """Per-span activations mapping raw features to a valid record vector."""

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        layout = spec.layout
        self.scalar_slots = [s.start for s in layout.continuous_spans]
        self.softmax_spans = [
            (s.start + 1, s.stop) for s in layout.continuous_spans
        ] + [(s.start, s.stop) for s in layout.discrete_spans]

    def forward(self, pre, gumbel_noise=None, hard=False, generator=None):
        out = torch.zeros_like(pre)
        if self.scalar_slots:
            idx = torch.tensor(self.scalar_slots, device=pre.device)
            out[:, idx] = torch.tanh(pre[:, idx])
        for start, stop in self.softmax_spans:
            noise = gumbel_noise[:, start:stop] if gumbel_noise is not None else None
            out[:, start:stop] = gumbel_softmax_span(
                pre[:, start:stop],
                self.spec.gumbel_temperature,
                noise=noise,
                hard=hard,
                generator=generator,
            )
        return out


class SkipInject(nn.Module):
    """Re-projects the raw input vector and adds it per-channel on the grid."""

    def __init__(self, input_width: int, channels: int, use_weight_norm: bool = True, use_spectral_norm: bool = False):
        super().__init__()
        proj = nn.Linear(input_width, channels)
        if use_spectral_norm:
            proj = spectral_norm(proj)
        elif use_weight_norm:
            proj = weight_norm(proj)
        self.proj = proj

    def forward(self, grid, zc):
        return grid + self.proj(zc)[:, :, None, None]


class Generator(nn.Module):
    """Convolutional generator with latent re-injection and a span-typed head."""

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        gh, gw = spec.grid
        ch1 = spec.base_channels
        ch2 = 2 * spec.base_channels
        self.grid1 = (gh, gw)
        self.grid2 = (2 * gh, 2 * gw)

        self.project = nn.Linear(spec.input_width, ch1 * gh * gw)
        self.stage1 = nn.Conv2d(ch1, ch1, kernel_size=5, padding=2)
        self.bn1 = nn.BatchNorm2d(ch1)

        self.stage2 = nn.ModuleList(
            [weight_norm(nn.Conv2d(ch1 if i == 0 else ch2, ch2, kernel_size=5, padding=2)) for i in range(3)]
        )
        self.skips = nn.ModuleList([SkipInject(spec.input_width, ch2) for _ in range(3)])

        reduce_ch = 4
        self.reduce = nn.ConvTranspose2d(ch2, reduce_ch, kernel_size=5, padding=2)
        self.head_fc = nn.Linear(reduce_ch * self.grid2[0] * self.grid2[1], spec.output_width)
        self.head = OutputHead(spec)

    def forward(self, z, cond, gumbel_noise=None, hard=False, generator=None):
        if z.dim() != 2 or z.shape[1] != self.spec.noise_width:
            raise ValueError(f"expected noise of width {self.spec.noise_width}, got {tuple(z.shape)}")
        if cond.shape[1] != self.spec.cond_width:
            raise ValueError(f"expected condition of width {self.spec.cond_width}, got {tuple(cond.shape)}")
        zc = torch.cat([z, cond], dim=1)
        gh, gw = self.grid1
        h = self.project(zc).view(-1, self.spec.base_channels, gh, gw)
        h = F.relu(self.bn1(self.stage1(h)))
        h = F.interpolate(h, size=self.grid2, mode="nearest")
        for conv, skip in zip(self.stage2, self.skips):
            h = torch.tanh(skip(conv(h), zc))
        h = self.reduce(h)
        pre = self.head_fc(h.flatten(1))
        return self.head(pre, gumbel_noise=gumbel_noise, hard=hard, generator=generator)


class Discriminator(nn.Module):
    """Spectrally normalized convolutional critic with a scalar logit output."""

    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        self.spec = spec
        gh, gw = spec.grid
        c0, c1, c2 = spec.channels

        self.project = spectral_norm(nn.Linear(spec.input_width, c0 * gh * gw))
        self.stages = nn.ModuleList(
            [
                spectral_norm(nn.Conv2d(c0, c0, kernel_size=5, padding=2)),
                spectral_norm(nn.Conv2d(c0, c1, kernel_size=5, padding=2)),
                spectral_norm(nn.Conv2d(c1, c2, kernel_size=5, padding=2)),
            ]
        )
        self.skips = nn.ModuleList(
            [
                SkipInject(spec.input_width, c, use_weight_norm=False, use_spectral_norm=True)
                for c in (c0, c1, c2)
            ]
        )
        reduce_ch = 4
        self.reduce = spectral_norm(nn.Conv2d(c2, reduce_ch, kernel_size=1))
        self.head = spectral_norm(nn.Linear(reduce_ch * gh * gw, 1))

    def forward(self, x, cond):
        if torch.isnan(x).any():
            raise ValueError("NaN in discriminator input")
        xc = torch.cat([x, cond], dim=1)
        if xc.shape[1] != self.spec.input_width:
            raise ValueError(f"expected input of width {self.spec.input_width}, got {tuple(xc.shape)}")
        gh, gw = self.spec.grid
        h = self.project(xc).view(-1, self.spec.channels[0], gh, gw)
        for stage, skip in zip(self.stages, self.skips):
            h = F.leaky_relu(skip(stage(h), xc), LEAKY_SLOPE)
        h = self.reduce(h)
        return self.head(h.flatten(1))


def build_generator(spec: GeneratorSpec, seed: int, dtype=torch.float64) -> Generator:
    torch.manual_seed(seed)  # spectral-norm power-iteration vectors draw from the global RNG
    net = Generator(spec).to(dtype)
    init_weights(net, seed)
    return net


def build_discriminator(spec: DiscriminatorSpec, seed: int, dtype=torch.float64) -> Discriminator:
    torch.manual_seed(seed)
    net = Discriminator(spec).to(dtype)
    init_weights(net, seed)
    return net
