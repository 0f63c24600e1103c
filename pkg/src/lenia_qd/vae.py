"""Convolutional VAE over phenotype crops, plus the latent-trajectory descriptor and fitness.

Crops are (h, w, C) float arrays in [0, 1]; the network sees them as NCHW.
Descriptors always use the posterior mean.
"""
from __future__ import annotations

import io
import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

CHECKPOINT_FORMAT = "lenia-qd-vae"
CHECKPOINT_VERSION = 1


class NonFiniteActivation(FloatingPointError):
    pass


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass(frozen=True)
class VaeConfig:
    latent_dim: int = 8
    features: int = 64
    input_size: int = 32
    channels: int = 3
    stages: int = 3
    kernel_size: int = 3

    @property
    def bottleneck(self) -> int:
        return self.input_size // 2**self.stages


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    batch_size: int = 256
    kl_weight: float = 1.0
    decoder_variance: float = 0.1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.decoder_variance <= 0:
            raise ValueError("decoder_variance must be > 0")


class ConvVAE(nn.Module):
    def __init__(self, config: VaeConfig = VaeConfig()):
        super().__init__()
        if config.input_size % 2**config.stages:
            raise ValueError("input size must be divisible by 2**stages")
        self.config = config
        f, k, pad = config.features, config.kernel_size, config.kernel_size // 2
        enc = []
        in_ch = config.channels
        for _ in range(config.stages):
            enc += [nn.Conv2d(in_ch, f, k, stride=2, padding=pad), nn.ReLU()]
            in_ch = f
        self.encoder = nn.Sequential(*enc, nn.Flatten())
        flat = f * config.bottleneck**2
        self.mean_head = nn.Linear(flat, config.latent_dim)
        self.logvar_head = nn.Linear(flat, config.latent_dim)
        self.decoder_input = nn.Linear(config.latent_dim, flat)
        dec = []
        for s in range(config.stages):
            out_ch = config.channels if s == config.stages - 1 else f
            dec.append(nn.ConvTranspose2d(f, out_ch, k, stride=2, padding=pad, output_padding=1))
            if s < config.stages - 1:
                dec.append(nn.ReLU())
        self.decoder = nn.Sequential(*dec)

    def encode(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h = self.encoder(x)
        return self.mean_head(h), self.logvar_head(h)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        c = self.config
        h = torch.relu(self.decoder_input(z)).view(-1, c.features, c.bottleneck, c.bottleneck)
        return torch.sigmoid(self.decoder(h))


def init_weights(model: nn.Module, seed: int) -> nn.Module:
    """Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)), from a dedicated generator."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in model.modules():
            if isinstance(module, (nn.Conv2d, nn.Linear)):
                fan_in = module.weight[0].numel()
            elif isinstance(module, nn.ConvTranspose2d):
                fan_in = module.weight.shape[0] * module.weight[0, 0].numel()
            else:
                continue
            bound = 1 / math.sqrt(fan_in)
            for p in (module.weight, module.bias):
                p.copy_(torch.rand(p.shape, generator=gen, dtype=p.dtype) * 2 * bound - bound)
    return model


def make_model(config: VaeConfig = VaeConfig(), seed: int = 0, dtype=torch.float32) -> ConvVAE:
    return init_weights(ConvVAE(config).to(dtype), seed)


def to_tensor(crops, dtype=torch.float32) -> torch.Tensor:
    arr = np.asarray(crops)
    if arr.ndim == 3:
        arr = arr[None]
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(0, 3, 1, 2))).to(dtype)


def kl_divergence(mean: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """Per-sample KL(N(mean, exp(logvar)) || N(0, I))."""
    return 0.5 * (mean**2 + logvar.exp() - 1 - logvar).sum(dim=-1)


def gaussian_nll(x: torch.Tensor, recon: torch.Tensor, variance: float) -> torch.Tensor:
    """Per-sample negative log-likelihood of x under N(recon, variance I)."""
    dims = x[0].numel()
    sq = ((x - recon) ** 2).flatten(1).sum(dim=1)
    return sq / (2 * variance) + 0.5 * dims * math.log(2 * math.pi * variance)


def elbo_loss(model: ConvVAE, batch: torch.Tensor, generator: torch.Generator, config: TrainConfig) -> torch.Tensor:
    mean, logvar = model.encode(batch)
    eps = torch.randn(mean.shape, generator=generator, dtype=mean.dtype)
    z = mean + torch.exp(0.5 * logvar) * eps
    recon = model.decode(z)
    loss = (gaussian_nll(batch, recon, config.decoder_variance) + config.kl_weight * kl_divergence(mean, logvar)).mean()
    if not torch.isfinite(loss):
        raise NonFiniteLoss(f"loss is {loss.item()}")
    return loss


def loss_and_gradients(model: ConvVAE, crops, seed: int, config: TrainConfig) -> tuple[float, dict[str, np.ndarray]]:
    dtype = next(model.parameters()).dtype
    model.zero_grad()
    loss = elbo_loss(model, to_tensor(crops, dtype), torch.Generator().manual_seed(seed), config)
    loss.backward()
    grads = {name: p.grad.detach().numpy().copy() for name, p in model.named_parameters()}
    return float(loss.item()), grads


def make_optimizer(model: ConvVAE, config: TrainConfig) -> torch.optim.Adam:
    return torch.optim.Adam(model.parameters(), lr=config.learning_rate)


def train_step(model: ConvVAE, optimizer: torch.optim.Optimizer, crops, seed: int, config: TrainConfig) -> float:
    """One Adam update on ``crops``; returns the loss before the update."""
    dtype = next(model.parameters()).dtype
    optimizer.zero_grad()
    loss = elbo_loss(model, to_tensor(crops, dtype), torch.Generator().manual_seed(seed), config)
    loss.backward()
    optimizer.step()
    return float(loss.item())


ENCODE_CHUNK = 64


@torch.no_grad()
def encode_batch(model: ConvVAE, crops, chunk: int = ENCODE_CHUNK) -> tuple[np.ndarray, np.ndarray]:
    """Posterior (mean, logvar) for a stack of crops, as float64 arrays.

    Crops go through the encoder in zero-padded chunks of a fixed size, so a
    crop's encoding does not depend on what else is in the batch (conv
    kernels pick different float paths for different batch sizes).
    """
    crops = np.asarray(crops, dtype=np.float32)
    if crops.ndim == 3:
        crops = crops[None]
    dtype = next(model.parameters()).dtype
    means, logvars = [], []
    for start in range(0, len(crops), chunk):
        part = crops[start: start + chunk]
        n = len(part)
        if n < chunk:
            part = np.concatenate([part, np.zeros((chunk - n,) + part.shape[1:], part.dtype)])
        m, lv = model.encode(to_tensor(part, dtype))
        means.append(m[:n].double().numpy())
        logvars.append(lv[:n].double().numpy())
    mean = np.concatenate(means) if means else np.zeros((0, model.config.latent_dim))
    logvar = np.concatenate(logvars) if logvars else np.zeros((0, model.config.latent_dim))
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(logvar))):
        raise NonFiniteActivation("encoder produced non-finite outputs")
    return mean, logvar


def encode(model: ConvVAE, crop) -> tuple[np.ndarray, np.ndarray]:
    pixels = getattr(crop, "pixels", crop)
    mean, logvar = encode_batch(model, np.asarray(pixels)[None])
    return mean[0], logvar[0]


@torch.no_grad()
def decode(model: ConvVAE, z) -> np.ndarray:
    dtype = next(model.parameters()).dtype
    out = model.decode(torch.as_tensor(np.atleast_2d(z), dtype=dtype))
    return out.double().numpy().transpose(0, 2, 3, 1)


def encode_trajectory(model: ConvVAE, crops) -> np.ndarray:
    """Latent trajectory (k, latent_dim): posterior means of each retained crop."""
    stack = np.stack([getattr(c, "pixels", c) for c in crops]) if isinstance(crops, list) else np.asarray(crops)
    if len(stack) == 0:
        raise ValueError("need at least one crop")
    return encode_batch(model, stack)[0]


def unsupervised_descriptor(latents) -> np.ndarray:
    latents = np.asarray(latents, dtype=np.float64)
    if len(latents) == 0:
        raise ValueError("empty latent trajectory")
    # offset from the first latent so a constant trajectory averages to itself exactly
    return latents[0] + (latents - latents[0]).mean(axis=0)


def unsupervised_fitness(latents, descriptor=None) -> float:
    """Negative mean Euclidean distance of the latents to their mean."""
    latents = np.asarray(latents, dtype=np.float64)
    if descriptor is None:
        descriptor = unsupervised_descriptor(latents)
    return -float(np.linalg.norm(latents - descriptor, axis=1).mean())


def describe_crops(model: ConvVAE, crop_stacks) -> tuple[np.ndarray, np.ndarray]:
    """Descriptor and unsupervised fitness for many members in one encoder pass."""
    if not crop_stacks:
        return np.zeros((0, model.config.latent_dim)), np.zeros(0)
    lengths = [len(c) for c in crop_stacks]
    means, _ = encode_batch(model, np.concatenate(crop_stacks))
    descriptors, fitnesses = [], []
    start = 0
    for n in lengths:
        z = means[start: start + n]
        d = unsupervised_descriptor(z)
        descriptors.append(d)
        fitnesses.append(unsupervised_fitness(z, d))
        start += n
    return np.stack(descriptors), np.array(fitnesses)


def checkpoint_bytes(model: ConvVAE, optimizer: torch.optim.Optimizer | None = None) -> bytes:
    """Versioned npz archive of named weight arrays (and Adam state when given)."""
    arrays = {"__format__": np.array(CHECKPOINT_FORMAT), "__version__": np.array(CHECKPOINT_VERSION),
              "__config__": np.array(repr(sorted(asdict(model.config).items())))}
    for name, tensor in model.state_dict().items():
        arrays[f"param/{name}"] = tensor.detach().numpy().copy()
    if optimizer is not None:
        names = [n for n, _ in model.named_parameters()]
        params = [p for _, p in model.named_parameters()]
        for name, p in zip(names, params):
            state = optimizer.state.get(p)
            if not state:
                continue
            arrays[f"adam/{name}/step"] = np.array(float(state["step"]))
            arrays[f"adam/{name}/exp_avg"] = state["exp_avg"].numpy().copy()
            arrays[f"adam/{name}/exp_avg_sq"] = state["exp_avg_sq"].numpy().copy()
        arrays["__lr__"] = np.array(optimizer.param_groups[0]["lr"])
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    return buf.getvalue()


def load_checkpoint_bytes(data: bytes, config: VaeConfig, train_config: TrainConfig | None = None):
    """Rebuild (model, optimizer) from ``checkpoint_bytes`` output."""
    with np.load(io.BytesIO(data), allow_pickle=False) as z:
        if str(z["__format__"]) != CHECKPOINT_FORMAT:
            raise ValueError("not a VAE checkpoint")
        version = int(z["__version__"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported VAE checkpoint version {version}")
        arrays = {k: z[k] for k in z.files}
    model = ConvVAE(config)
    state = {k[len("param/"):]: torch.from_numpy(v) for k, v in arrays.items() if k.startswith("param/")}
    dtype = next(iter(state.values())).dtype
    model = model.to(dtype)
    model.load_state_dict(state)
    optimizer = None
    if train_config is not None:
        optimizer = make_optimizer(model, train_config)
        for name, p in model.named_parameters():
            key = f"adam/{name}"
            if f"{key}/step" in arrays:
                optimizer.state[p] = {
                    "step": torch.tensor(float(arrays[f"{key}/step"])),
                    "exp_avg": torch.from_numpy(arrays[f"{key}/exp_avg"].copy()),
                    "exp_avg_sq": torch.from_numpy(arrays[f"{key}/exp_avg_sq"].copy()),
                }
    return model, optimizer


def save_checkpoint(path, model: ConvVAE, optimizer=None) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(model, optimizer))


def load_checkpoint(path, config: VaeConfig, train_config: TrainConfig | None = None):
    with open(path, "rb") as fh:
        return load_checkpoint_bytes(fh.read(), config, train_config)
