"""Bi-LSTM generator/discriminator pair, their losses and per-cluster training."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .neural import autodiff as ad
from .neural.adam import AdamState, adam_step
from .neural.layers import bilstm_stack, init_bilstm, init_dense, sample_noise
from .neural.params import (
    FORMAT_VERSION,
    GATE_ORDER,
    CheckpointError,
    ParameterStore,
    read_store,
    write_store,
)

log = logging.getLogger(__name__)

T = 24
PROB_EPS = 1e-7


class TrainingError(RuntimeError):
    """Raised when a loss becomes non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    """Per-cluster training settings. Defaults are the full-scale values.

    ``stat_mode`` selects how the statistical-matching term is read:
    ``"pattern"`` compares batch averages of per-pattern scalar mean and
    variance; ``"hourly"`` compares the per-hour mean and variance profiles
    across the batch with an L1 norm.
    """

    epochs: int = 10000
    batch_size: int = 1024
    g_lr: float = 1e-4
    d_lr: float = 1e-4
    lam: float = 100.0
    seed: int = 0
    hidden: int = 16
    layers: int = 5
    stat_mode: str = "pattern"
    non_saturating: bool = False
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    log_every: int = 0

    def __post_init__(self):
        for name in ("epochs", "batch_size", "hidden", "layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.g_lr <= 0 or self.d_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.stat_mode not in ("pattern", "hourly"):
            raise ValueError(f"unknown stat_mode {self.stat_mode!r}")

    @classmethod
    def desk(cls, **overrides) -> TrainConfig:
        """Small-budget settings for laptops and CI (500 epochs)."""
        return cls(**{"epochs": 500, **overrides})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> TrainConfig:
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


# -- networks -----------------------------------------------------------------

@dataclass(frozen=True)
class GeneratorNet:
    params: ParameterStore
    hidden: int
    layers: int

    @classmethod
    def init(cls, rng: np.random.Generator, hidden: int = 16, layers: int = 5) -> GeneratorNet:
        entries = init_bilstm(rng, "", 1, hidden, layers) + init_dense(rng, "", 2 * hidden, 1)
        return cls(ParameterStore(entries), hidden, layers)

    def __call__(self, noise) -> np.ndarray:
        return generator_forward(noise, self)


@dataclass(frozen=True)
class DiscriminatorNet:
    params: ParameterStore
    hidden: int
    layers: int

    @classmethod
    def init(cls, rng: np.random.Generator, hidden: int = 16, layers: int = 5) -> DiscriminatorNet:
        entries = init_bilstm(rng, "", 1, hidden, layers) + init_dense(rng, "", 2 * hidden, 1)
        return cls(ParameterStore(entries), hidden, layers)

    def __call__(self, values) -> np.ndarray:
        return discriminator_forward(values, self)


def generate(noise, params, layers: int):
    """Differentiable generator pass: noise (B, T, 1) -> values (B, T)."""
    per_step, _, _ = bilstm_stack(noise, params, "", layers)
    out = ad.sigmoid(ad.dense(per_step, params["dense_W"], params["dense_b"]))
    return ad.reshape(out, out.value.shape[:2])


def discriminate(values, params, layers: int):
    """Differentiable discriminator pass: values (B, T) -> probabilities (B,)."""
    v = ad.as_var(values)
    seq = ad.reshape(v, v.value.shape + (1,))
    _, last_f, last_b = bilstm_stack(seq, params, "", layers)
    h = ad.concat([last_f, last_b], axis=-1)
    out = ad.sigmoid(ad.dense(h, params["dense_W"], params["dense_b"]))
    return ad.reshape(out, out.value.shape[:1])


def generator_forward(noise, gen: GeneratorNet) -> np.ndarray:
    """Map noise of shape (T, 1), (T,) or (B, T, 1) to values in (0, 1)."""
    z = np.asarray(noise, dtype=np.float64)
    single = z.ndim < 3
    if z.ndim == 1:
        z = z[:, None]
    if single:
        z = z[None]
    if z.shape[-1] != 1:
        raise ValueError(f"generator expects scalar noise per step, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite noise")
    out = generate(z, gen.params, gen.layers).value
    return out[0] if single else out


def discriminator_forward(values, disc: DiscriminatorNet):
    """Probability that each length-24 profile is real; scalar for one profile."""
    x = np.asarray(values, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None]
    if x.ndim != 2 or x.shape[1] != T:
        raise ValueError(f"discriminator expects profiles of length {T}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite profile values")
    out = discriminate(x, disc.params, disc.layers).value
    return float(out[0]) if single else out


# -- losses -------------------------------------------------------------------

def _clamped(p):
    return ad.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def disc_loss(real_scores, fake_scores):
    """Mean over the batch of ``-log D(x) - log(1 - D(G(z)))``."""
    real = _clamped(real_scores)
    fake = _clamped(fake_scores)
    per_real = ad.mul(ad.log(real), -1.0)
    per_fake = ad.mul(ad.log(ad.sub(1.0, fake)), -1.0)
    return ad.add(ad.mean(per_real), ad.mean(per_fake))


def stat_gap(fake_batch, real_batch, mode: str = "pattern"):
    """Statistical-matching penalty between two (B, 24) batches."""
    real = np.asarray(ad.value_of(real_batch))
    if mode == "pattern":
        fake_mu = ad.mean(ad.mean(fake_batch, axis=1))
        fake_var = ad.mean(ad.variance(fake_batch, axis=1))
        real_mu = real.mean(axis=1).mean()
        real_var = real.var(axis=1).mean()
        return ad.add(ad.absolute(ad.sub(fake_mu, real_mu)), ad.absolute(ad.sub(fake_var, real_var)))
    if mode == "hourly":
        fake_mu = ad.mean(fake_batch, axis=0)
        fake_var = ad.variance(fake_batch, axis=0)
        d_mu = ad.total(ad.absolute(ad.sub(fake_mu, real.mean(axis=0))))
        d_var = ad.total(ad.absolute(ad.sub(fake_var, real.var(axis=0))))
        return ad.add(d_mu, d_var)
    raise ValueError(f"unknown stat mode {mode!r}")


def gen_loss(fake_scores, fake_batch, real_batch, lam: float, *,
             mode: str = "pattern", non_saturating: bool = False):
    """Adversarial term plus ``lam`` times the statistical-matching gap.

    The adversarial term is the saturating ``log(1 - D(G(z)))`` unless
    ``non_saturating`` selects ``-log D(G(z))``.
    """
    fake = _clamped(fake_scores)
    if non_saturating:
        adv = ad.mul(ad.mean(ad.log(fake)), -1.0)
    else:
        adv = ad.mean(ad.log(ad.sub(1.0, fake)))
    if lam == 0:
        return adv
    return ad.add(adv, ad.mul(stat_gap(fake_batch, real_batch, mode), float(lam)))


# -- training -----------------------------------------------------------------

@dataclass
class GanPair:
    generator: ParameterStore
    discriminator: ParameterStore
    g_state: AdamState
    d_state: AdamState
    config: TrainConfig
    cluster: int = 0
    history: list[tuple[float, float]] = field(default_factory=list)

    @property
    def generator_net(self) -> GeneratorNet:
        return GeneratorNet(self.generator, self.config.hidden, self.config.layers)

    @property
    def discriminator_net(self) -> DiscriminatorNet:
        return DiscriminatorNet(self.discriminator, self.config.hidden, self.config.layers)


def init_pair(config: TrainConfig, cluster: int = 0) -> tuple[GanPair, np.random.Generator]:
    rng = np.random.default_rng(config.seed)
    gen = GeneratorNet.init(rng, config.hidden, config.layers)
    disc = DiscriminatorNet.init(rng, config.hidden, config.layers)
    hyper = dict(beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    pair = GanPair(
        generator=gen.params,
        discriminator=disc.params,
        g_state=AdamState.for_params(gen.params, lr=config.g_lr, **hyper),
        d_state=AdamState.for_params(disc.params, lr=config.d_lr, **hyper),
        config=config,
        cluster=cluster,
    )
    return pair, rng


def train_cluster_gan(cluster_data, config: TrainConfig, cluster: int = 0) -> GanPair:
    """Adversarially train one generator/discriminator pair on a cluster.

    Each shuffled batch gets one discriminator Adam step followed by one
    generator Adam step on fresh noise. ``cluster_data`` is a Dataset or an
    (N, 24) array.
    """
    X = np.asarray(getattr(cluster_data, "values", cluster_data), dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] != T:
        raise ValueError(f"cluster data must be a non-empty (N, {T}) array, got {X.shape}")
    pair, rng = init_pair(config, cluster)
    layers = config.layers
    batch = min(config.batch_size, X.shape[0])
    G, D = pair.generator, pair.discriminator
    g_state, d_state = pair.g_state, pair.d_state

    for epoch in range(config.epochs):
        order = rng.permutation(X.shape[0])
        g_sum = d_sum = 0.0
        n_batches = 0
        for b, start in enumerate(range(0, X.shape[0], batch)):
            real = X[order[start:start + batch]]
            n = real.shape[0]

            fake = generate(sample_noise(T, n, rng), G, layers).value
            try:
                d_val, d_grads = ad.value_and_grad(
                    lambda P: disc_loss(discriminate(real, P, layers), discriminate(fake, P, layers)),
                    D,
                )
            except ad.NonFiniteError as exc:
                raise TrainingError(
                    f"non-finite discriminator step at epoch {epoch}, batch {b}: {exc}"
                ) from exc
            D, d_state = adam_step(D, d_grads, d_state)

            z = sample_noise(T, n, rng)

            def g_objective(P, z=z, real=real, D=D):
                fake_batch = generate(z, P, layers)
                return gen_loss(
                    discriminate(fake_batch, D, layers), fake_batch, real, config.lam,
                    mode=config.stat_mode, non_saturating=config.non_saturating,
                )

            try:
                g_val, g_grads = ad.value_and_grad(g_objective, G)
            except ad.NonFiniteError as exc:
                raise TrainingError(
                    f"non-finite generator step at epoch {epoch}, batch {b}: {exc}"
                ) from exc
            G, g_state = adam_step(G, g_grads, g_state)

            g_sum += g_val
            d_sum += d_val
            n_batches += 1
        pair.history.append((g_sum / n_batches, d_sum / n_batches))
        if config.log_every and (epoch + 1) % config.log_every == 0:
            log.info("cluster %d epoch %d g_loss %.6f d_loss %.6f",
                     cluster, epoch + 1, *pair.history[-1])

    pair.generator, pair.discriminator = G, D
    pair.g_state, pair.d_state = g_state, d_state
    return pair


# -- persistence --------------------------------------------------------------

def save_checkpoint(pair: GanPair, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"ergan-checkpoint {FORMAT_VERSION}\n")
        fh.write(f"gate_order {','.join(GATE_ORDER)}\n")
        fh.write(f"hidden {pair.config.hidden}\nlayers {pair.config.layers}\n")
        fh.write(f"cluster {pair.cluster}\n")
        fh.write(f"config {json.dumps(pair.config.to_dict(), sort_keys=True)}\n")
        fh.write(f"adam_t {pair.g_state.t} {pair.d_state.t}\n")
        fh.write(f"history {len(pair.history)}\n")
        for g, d in pair.history:
            fh.write(f"{float(g).hex()} {float(d).hex()}\n")
        write_store(fh, "generator", pair.generator)
        write_store(fh, "discriminator", pair.discriminator)
        write_store(fh, "generator.adam.m", pair.g_state.m)
        write_store(fh, "generator.adam.v", pair.g_state.v)
        write_store(fh, "discriminator.adam.m", pair.d_state.m)
        write_store(fh, "discriminator.adam.v", pair.d_state.v)
        fh.write("eof\n")


def _header(lines, key: str) -> str:
    try:
        line = next(lines).rstrip("\n")
    except StopIteration:
        raise CheckpointError("unexpected end of checkpoint (truncated file?)") from None
    k, _, v = line.partition(" ")
    if k != key:
        raise CheckpointError(f"expected {key!r} header, found {k!r}")
    return v


def load_checkpoint(path, config: TrainConfig | None = None) -> GanPair:
    """Read a checkpoint; if ``config`` is given its network shape must match."""
    try:
        text = Path(path).read_text(encoding="ascii")
    except UnicodeDecodeError as exc:
        raise CheckpointError("checkpoint is not ASCII text") from exc
    lines = iter(text.splitlines())
    try:
        version = _header(lines, "ergan-checkpoint")
        if version.strip() != str(FORMAT_VERSION):
            raise CheckpointError(f"unsupported checkpoint version {version.strip()}")
        if _header(lines, "gate_order") != ",".join(GATE_ORDER):
            raise CheckpointError("unsupported gate order")
        hidden = int(_header(lines, "hidden"))
        layers = int(_header(lines, "layers"))
        cluster = int(_header(lines, "cluster"))
        saved = TrainConfig.from_dict(json.loads(_header(lines, "config")))
        g_t, d_t = (int(x) for x in _header(lines, "adam_t").split())
        n_hist = int(_header(lines, "history"))
        history = []
        for _ in range(n_hist):
            g, d = _header_line(lines).split()
            history.append((float.fromhex(g), float.fromhex(d)))
        stores = {
            label: read_store(lines, label)
            for label in ("generator", "discriminator", "generator.adam.m",
                          "generator.adam.v", "discriminator.adam.m", "discriminator.adam.v")
        }
        if _header_line(lines).strip() != "eof":
            raise CheckpointError("missing end marker")
    except (ValueError, json.JSONDecodeError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc

    if (saved.hidden, saved.layers) != (hidden, layers):
        raise CheckpointError("checkpoint header disagrees with its config echo")
    expected = GeneratorNet.init(np.random.default_rng(0), hidden, layers).params.shapes()
    for label in ("generator", "discriminator"):
        if stores[label].shapes() != expected:
            raise CheckpointError(f"{label} parameters do not match hidden={hidden}, layers={layers}")
    if config is not None and (config.hidden, config.layers) != (hidden, layers):
        raise CheckpointError(
            f"shape mismatch: checkpoint has hidden={hidden}, layers={layers}; "
            f"config expects hidden={config.hidden}, layers={config.layers}"
        )
    hyper = dict(beta1=saved.beta1, beta2=saved.beta2, eps=saved.eps)
    return GanPair(
        generator=stores["generator"],
        discriminator=stores["discriminator"],
        g_state=AdamState(stores["generator.adam.m"], stores["generator.adam.v"], g_t,
                          lr=saved.g_lr, **hyper),
        d_state=AdamState(stores["discriminator.adam.m"], stores["discriminator.adam.v"], d_t,
                          lr=saved.d_lr, **hyper),
        config=saved,
        cluster=cluster,
        history=history,
    )


def _header_line(lines) -> str:
    try:
        return next(lines)
    except StopIteration:
        raise CheckpointError("unexpected end of checkpoint (truncated file?)") from None


def write_history(pair: GanPair, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,g_loss,d_loss\n")
        for epoch, (g, d) in enumerate(pair.history, start=1):
            fh.write(f"{epoch},{g:.9g},{d:.9g}\n")
