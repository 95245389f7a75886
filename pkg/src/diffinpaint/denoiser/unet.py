"""Small convolutional U-Net noise predictor (unconditional or concat-conditional)."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from ..conditioning import concat_condition
from ..diffusion import build_schedule
from ..errors import ConfigurationError, ShapeError
from ..rng import SeedLike, as_seed_sequence
from .base import Denoiser


@dataclass(frozen=True)
class DenoiserSpec:
    """Architecture hyperparameters.

    The defaults are the full-size configuration (128 base channels, four
    levels with multipliers 1, 2, 3, 4); tests and the CLI's desk runs use
    much smaller values.

    ``output="epsilon"`` makes the last convolution emit the noise estimate
    directly. ``output="v"`` makes it emit ``v = sqrt(abar) eps - sqrt(1 - abar) x0``
    and converts with ``eps = sqrt(abar) v + sqrt(1 - abar) x_t``; the network
    error is then damped by ``sqrt(abar)`` at high noise levels, where an
    accurate noise estimate matters most for sampling. ``schedule`` (a
    :meth:`NoiseSchedule.to_dict`) is required for ``"v"``.
    """

    data_channels: int = 3
    base_channels: int = 128
    channel_multipliers: tuple = (1, 2, 3, 4)
    conditional: bool = False
    norm_groups: int = 8
    activation: str = "silu"
    time_embed_dim: int | None = None
    zero_init_output: bool = True
    output: str = "epsilon"
    schedule: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "channel_multipliers", tuple(int(m) for m in self.channel_multipliers))
        if self.output not in OUTPUTS:
            raise ConfigurationError(f"unknown output parameterization {self.output!r}")
        if self.output == "v" and self.schedule is None:
            raise ConfigurationError("output='v' needs the training schedule (spec.schedule)")
        if self.data_channels < 1 or self.base_channels < 1 or self.norm_groups < 1:
            raise ConfigurationError("channel counts and norm groups must be positive")
        if not self.channel_multipliers or min(self.channel_multipliers) < 1:
            raise ConfigurationError("channel_multipliers must be a non-empty list of positive ints")
        if self.activation not in _ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")

    @property
    def depth(self) -> int:
        return len(self.channel_multipliers)

    @property
    def in_channels(self) -> int:
        c = self.data_channels
        return 2 * c + 1 if self.conditional else c

    @property
    def spatial_factor(self) -> int:
        return 2 ** (self.depth - 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channel_multipliers"] = list(self.channel_multipliers)
        return d

    @classmethod
    def from_dict(cls, d) -> "DenoiserSpec":
        return cls(**d)


_ACTIVATIONS = {"silu": nn.SiLU, "relu": nn.ReLU, "gelu": nn.GELU}
OUTPUTS = ("epsilon", "v")


def _groups(channels, wanted):
    g = min(wanted, channels)
    while channels % g:
        g -= 1
    return g


def timestep_embedding(t, dim):
    """Sinusoidal embedding of (float) timesteps, shape ``(N, dim)``."""
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=t.dtype, device=t.device) / max(half, 1))
    args = t[:, None] * freqs[None]
    emb = torch.cat([torch.sin(args), torch.cos(args)], dim=1)
    if dim % 2:
        emb = F.pad(emb, (0, 1))
    return emb


class ResBlock(nn.Module):
    def __init__(self, cin, cout, temb_dim, groups, act):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(cin, groups), cin)
        self.conv1 = nn.Conv2d(cin, cout, 3, padding=1)
        self.temb = nn.Linear(temb_dim, cout)
        self.norm2 = nn.GroupNorm(_groups(cout, groups), cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, padding=1)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()
        self.act = act()

    def forward(self, x, temb):
        h = self.conv1(self.act(self.norm1(x)))
        h = h + self.temb(temb)[:, :, None, None]
        h = self.conv2(self.act(self.norm2(h)))
        return h + self.skip(x)


class UNet(nn.Module):
    def __init__(self, spec: DenoiserSpec):
        super().__init__()
        self.spec = spec
        act = _ACTIVATIONS[spec.activation]
        base = spec.base_channels
        temb_dim = spec.time_embed_dim or 4 * base
        self.temb_in = base
        self.time_mlp = nn.Sequential(nn.Linear(base, temb_dim), act(), nn.Linear(temb_dim, temb_dim))
        self.conv_in = nn.Conv2d(spec.in_channels, base, 3, padding=1)

        widths = [base * m for m in spec.channel_multipliers]
        self.down = nn.ModuleList()
        self.downsample = nn.ModuleList()
        ch = base
        for i, w in enumerate(widths):
            self.down.append(ResBlock(ch, w, temb_dim, spec.norm_groups, act))
            ch = w
            if i < len(widths) - 1:
                self.downsample.append(nn.Conv2d(ch, ch, 3, stride=2, padding=1))
        self.mid = ResBlock(ch, ch, temb_dim, spec.norm_groups, act)
        self.up = nn.ModuleList()
        self.upsample = nn.ModuleList()
        for i in reversed(range(len(widths))):
            self.up.append(ResBlock(ch + widths[i], widths[i], temb_dim, spec.norm_groups, act))
            ch = widths[i]
            if i > 0:
                self.upsample.append(nn.Conv2d(ch, ch, 3, padding=1))
        self.norm_out = nn.GroupNorm(_groups(ch, spec.norm_groups), ch)
        self.act_out = act()
        self.conv_out = nn.Conv2d(ch, spec.data_channels, 3, padding=1)
        if spec.zero_init_output:
            nn.init.zeros_(self.conv_out.weight)
            nn.init.zeros_(self.conv_out.bias)
        if spec.output == "v":
            sched = build_schedule(spec.schedule["kind"], spec.schedule["T"], spec.schedule.get("beta_start"),
                                   spec.schedule.get("beta_end"))
            padded = np.concatenate([[1.0], sched.alpha_bars])
            self.register_buffer("sqrt_ab", torch.from_numpy(np.sqrt(padded)), persistent=False)
            self.register_buffer("sqrt_1m_ab", torch.from_numpy(np.sqrt(1.0 - padded)), persistent=False)

    def forward(self, x, t):
        out = self.backbone(x, t)
        if self.spec.output == "v":
            idx = t.long()
            a = self.sqrt_ab[idx].to(out.dtype)[:, None, None, None]
            b = self.sqrt_1m_ab[idx].to(out.dtype)[:, None, None, None]
            out = a * out + b * x[:, : self.spec.data_channels]
        return out

    def backbone(self, x, t):
        temb = self.time_mlp(timestep_embedding(t.to(x.dtype), self.temb_in))
        h = self.conv_in(x)
        skips = []
        for i, block in enumerate(self.down):
            h = block(h, temb)
            skips.append(h)
            if i < len(self.downsample):
                h = self.downsample[i](h)
        h = self.mid(h, temb)
        for j, block in enumerate(self.up):
            h = block(torch.cat([h, skips.pop()], dim=1), temb)
            if j < len(self.upsample):
                h = self.upsample[j](F.interpolate(h, scale_factor=2, mode="nearest"))
        return self.conv_out(self.act_out(self.norm_out(h)))


class TorchDenoiser(Denoiser):
    """Numpy-facing wrapper around :class:`UNet`.

    ``meta`` carries free-form provenance (e.g. the training schedule) and is
    stored alongside the weights in checkpoints.
    """

    def __init__(self, spec: DenoiserSpec, module: UNet | None = None, meta: dict | None = None):
        self.spec = spec
        self.module = module if module is not None else UNet(spec)
        self.meta = dict(meta or {})

    @property
    def conditional(self):
        return self.spec.conditional

    def check_input(self, x):
        if x.ndim not in (3, 4):
            raise ShapeError(f"expected (C, H, W) or (N, C, H, W), got {x.shape}")
        if x.shape[-3] != self.spec.data_channels:
            raise ShapeError(f"expected {self.spec.data_channels} data channels, got {x.shape[-3]}")
        f = self.spec.spatial_factor
        if x.shape[-2] % f or x.shape[-1] % f:
            raise ShapeError(f"spatial size {x.shape[-2:]} must be divisible by {f}")

    def network_input(self, x_t, condition):
        self._check_condition(condition)
        if condition is not None:
            x_known, mask = condition
            return concat_condition(x_t, np.asarray(x_known, dtype=x_t.dtype), mask)
        return x_t

    def predict_epsilon(self, x_t, t, condition=None):
        x_t = np.asarray(x_t, dtype=np.float32)
        self.check_input(x_t)
        inp = self.network_input(x_t, condition)
        single = inp.ndim == 3
        if single:
            inp = inp[None]
        t_arr = np.broadcast_to(np.asarray(t, dtype=np.float32), (inp.shape[0],))
        if self.spec.output == "v" and (t_arr.min() < 1 or t_arr.max() > self.spec.schedule["T"]):
            raise ConfigurationError(f"timestep outside the model's training schedule (T={self.spec.schedule['T']})")
        param = next(self.module.parameters())
        self.module.eval()
        with torch.no_grad():
            out = self.module(torch.from_numpy(np.ascontiguousarray(inp)).to(param.dtype),
                              torch.from_numpy(np.array(t_arr)).to(param.dtype))
        out = out.to(torch.float32).numpy()
        return out[0] if single else out

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.module.parameters())


def make_trainable_denoiser(spec: DenoiserSpec, rng: SeedLike = 0, meta: dict | None = None) -> TorchDenoiser:
    """Build a freshly initialized U-Net; initialization is fixed by ``rng``."""
    seed = int(as_seed_sequence(rng).generate_state(1)[0])
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        module = UNet(spec)
    return TorchDenoiser(spec, module, meta)
