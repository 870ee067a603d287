"""Adversarial losses and the two-timescale training loop.

The critic is trained n_critic times per generator update, each time on
a fresh real batch and fresh noise, while the other network's weights
stay fixed. Three loss variants are supported: the gradient-penalty
Wasserstein loss (default), the weight-clipping Wasserstein loss, and
the original log-loss GAN (scores squashed through a sigmoid for that
variant only).

Critic arguments below are callables mapping a [batch, seq_len, 1]
tensor to one score per sample, so losses work for any scoring
function; ``train`` wires in ``critic_forward`` over its ParamSet.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tensor as T
from .data import WindowedDataset, sample_real_batch
from .nn import ArchitectureSpec, ParamSet, critic_forward, generator_forward, init_params
from .optim import OptimConfig, RmspropState, clip_weights, rmsprop_step
from .tensor import Graph, Tensor

logger = logging.getLogger(__name__)

LABEL_REAL = 1.0
LABEL_FAKE = -1.0

LOSS_VARIANTS = ("wgan_gp", "wgan_clip", "gan")


class TrainingDiverged(RuntimeError):
    """A loss became NaN/Inf; the run is aborted rather than continued."""


@dataclass
class TrainConfig:
    epochs: int = 3000
    n_critic: int = 5
    lambda_gp: float = 10.0
    batch_size: int = 32
    noise_len: int = 25
    seq_len: int = 50
    lstm_units: int = 50
    loss_variant: str = "wgan_gp"
    seed: int = 0
    checkpoint_every: int = 500
    g_loss_nonsaturating: bool = False
    optim: OptimConfig = field(default_factory=OptimConfig)

    def __post_init__(self):
        for name in ("epochs", "n_critic", "batch_size", "noise_len",
                     "seq_len", "lstm_units", "checkpoint_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lambda_gp < 0:
            raise ValueError("lambda_gp must be non-negative")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ValueError(f"loss_variant must be one of {LOSS_VARIANTS}")

    def arch(self, features: int = 1) -> ArchitectureSpec:
        return ArchitectureSpec(noise_len=self.noise_len, seq_len=self.seq_len,
                                features=features, lstm_units=self.lstm_units)


@dataclass
class LossHistory:
    """Per-epoch diagnostics; one row per generator update."""

    epochs: list[int] = field(default_factory=list)
    critic_loss: list[float] = field(default_factory=list)
    generator_loss: list[float] = field(default_factory=list)
    wasserstein: list[float] = field(default_factory=list)
    gradient_penalty: list[float] = field(default_factory=list)

    def append(self, epoch: int, c: float, g: float, w: float, gp: float) -> None:
        self.epochs.append(epoch)
        self.critic_loss.append(c)
        self.generator_loss.append(g)
        self.wasserstein.append(w)
        self.gradient_penalty.append(gp)

    def __len__(self) -> int:
        return len(self.epochs)

    def last_finite(self) -> bool:
        vals = (self.critic_loss[-1], self.generator_loss[-1],
                self.wasserstein[-1], self.gradient_penalty[-1])
        return all(np.isfinite(v) for v in vals)


@dataclass
class TrainSnapshot:
    """Everything needed to resume training mid-run, bit for bit."""

    epoch: int
    generator: ParamSet
    critic: ParamSet
    opt_generator: RmspropState
    opt_critic: RmspropState
    rng_state: dict
    mode_collapse: float = 0.0


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox generator: deterministic across platforms."""
    return np.random.Generator(np.random.Philox(seed))


def sample_noise(batch: int, noise_len: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. standard-normal noise [batch, noise_len]."""
    return rng.standard_normal((batch, noise_len))


def interpolate(real: np.ndarray, fake: np.ndarray, rng: np.random.Generator,
                eps: np.ndarray | float | None = None) -> np.ndarray:
    """Per-sample convex mix eps*real + (1-eps)*fake, eps ~ Uniform[0,1]."""
    real = np.asarray(real, dtype=np.float64)
    fake = np.asarray(fake, dtype=np.float64)
    if real.shape != fake.shape:
        raise ValueError(f"interpolate: shapes {real.shape} and {fake.shape} differ")
    if eps is None:
        eps = rng.uniform(0.0, 1.0, size=real.shape[0])
    eps = np.broadcast_to(np.asarray(eps, dtype=np.float64).reshape(-1, *([1] * (real.ndim - 1))),
                          (real.shape[0],) + (1,) * (real.ndim - 1))
    return eps * real + (1.0 - eps) * fake


Critic = Callable[[Tensor], Tensor]


def _per_sample_sq_norm(g: Tensor) -> Tensor:
    """Squared L2 norm per sample over all non-batch axes."""
    sq = T.square(g)
    for _ in range(g.rank - 1):
        sq = T.reduce("sum", sq, axis=1)
    return sq


def gradient_penalty(critic: Critic, x_hat: Tensor, lambda_gp: float) -> Tensor:
    """lambda * E[(||grad_x D(x_hat)||_2 - 1)^2], differentiable in the
    critic parameters.

    The per-sample gradient norm is taken jointly over all timesteps;
    the expectation is the batch mean. Requires an active graph and an
    x_hat recorded with requires_grad.
    """
    scores = critic(x_hat)
    # Samples are scored independently, so the gradient of the summed
    # scores stacks the per-sample input gradients.
    total = T.reduce("sum", scores)
    g = T.grad(total, x_hat)
    norms = T.sqrt(_per_sample_sq_norm(g))
    return T.mul(T.reduce("mean", T.square(T.sub(norms, 1.0))), float(lambda_gp))


def _wgan_terms(critic: Critic, real_t: Tensor, fake_t: Tensor) -> tuple[Tensor, Tensor]:
    mean_real = T.reduce("mean", critic(real_t))
    mean_fake = T.reduce("mean", critic(fake_t))
    return mean_real, mean_fake


def _critic_objective_wgan_gp(critic: Critic, real: np.ndarray, fake: np.ndarray,
                              lambda_gp: float, rng: np.random.Generator,
                              eps=None) -> tuple[Tensor, float, float]:
    """Loss tensor plus (wasserstein estimate, penalty value) diagnostics."""
    real_t = Tensor(real, requires_grad=False, op="real-batch")
    fake_t = Tensor(fake, requires_grad=False, op="fake-batch")
    mean_real, mean_fake = _wgan_terms(critic, real_t, fake_t)
    loss = T.sub(mean_fake, mean_real)
    gp_val = 0.0
    if lambda_gp > 0:
        x_hat = Tensor(interpolate(real, fake, rng, eps=eps), op="x-hat")
        penalty = gradient_penalty(critic, x_hat, lambda_gp)
        gp_val = penalty.item()
        loss = T.add(loss, penalty)
    return loss, mean_real.item() - mean_fake.item(), gp_val


def critic_loss_wgan_gp(critic: Critic, real_batch, fake_batch, lambda_gp: float,
                        rng: np.random.Generator, eps=None) -> Tensor:
    """mean D(fake) - mean D(real) + gradient penalty at interpolates.

    With lambda_gp = 0 the penalty term (and its interpolation draw) is
    skipped entirely, reducing to the plain Wasserstein critic loss.
    """
    real = np.asarray(real_batch, dtype=np.float64)
    fake = np.asarray(fake_batch, dtype=np.float64)
    loss, _, _ = _critic_objective_wgan_gp(critic, real, fake, lambda_gp, rng, eps=eps)
    return loss


def critic_loss_wgan_clip(critic: Critic, real_batch, fake_batch) -> Tensor:
    """Plain Wasserstein critic loss; clipping happens after the update."""
    real_t = Tensor(np.asarray(real_batch, dtype=np.float64), requires_grad=False, op="real-batch")
    fake_t = Tensor(np.asarray(fake_batch, dtype=np.float64), requires_grad=False, op="fake-batch")
    mean_real, mean_fake = _wgan_terms(critic, real_t, fake_t)
    return T.sub(mean_fake, mean_real)


def generator_loss_wgan(critic: Critic, fake_batch: Tensor) -> Tensor:
    """-mean D(fake): the generator climbs the critic's scores."""
    return T.negate(T.reduce("mean", critic(fake_batch)))


_PROB_FLOOR = 1e-7


def _probs(critic: Critic, x: Tensor) -> Tensor:
    return T.clip(T.sigmoid(critic(x)), _PROB_FLOOR, 1.0 - _PROB_FLOOR)


def gan_losses_standard(critic: Critic, real_batch, fake_batch,
                        nonsaturating: bool = False) -> tuple[Tensor, Tensor]:
    """The original log losses; only this variant squashes the scores.

    d_loss = -mean log D(real) - mean log(1 - D(fake)); the generator
    minimizes mean log(1 - D(fake)), or -mean log D(fake) when the
    non-saturating alternative is selected.
    """
    real_t = real_batch if isinstance(real_batch, Tensor) else \
        Tensor(np.asarray(real_batch, dtype=np.float64), requires_grad=False, op="real-batch")
    fake_t = fake_batch if isinstance(fake_batch, Tensor) else \
        Tensor(np.asarray(fake_batch, dtype=np.float64), requires_grad=False, op="fake-batch")
    p_real = _probs(critic, real_t)
    p_fake = _probs(critic, fake_t)
    d_loss = T.sub(T.negate(T.reduce("mean", T.log(p_real))),
                   T.reduce("mean", T.log(T.sub(1.0, p_fake))))
    if nonsaturating:
        g_loss = T.negate(T.reduce("mean", T.log(p_fake)))
    else:
        g_loss = T.reduce("mean", T.log(T.sub(1.0, p_fake)))
    return d_loss, g_loss


def generator_loss_gan(critic: Critic, fake_batch: Tensor,
                       nonsaturating: bool = False) -> Tensor:
    """Generator side of the log-loss variant."""
    p_fake = _probs(critic, fake_batch)
    if nonsaturating:
        return T.negate(T.reduce("mean", T.log(p_fake)))
    return T.reduce("mean", T.log(T.sub(1.0, p_fake)))


def wasserstein_estimate(critic: Critic, real_batch, fake_batch) -> float:
    """mean D(real) - mean D(fake); the per-step convergence diagnostic."""
    real_t = Tensor(np.asarray(real_batch, dtype=np.float64), requires_grad=False)
    fake_t = Tensor(np.asarray(fake_batch, dtype=np.float64), requires_grad=False)
    return float(np.mean(critic(real_t).data) - np.mean(critic(fake_t).data))


def lipschitz_ratio_check(critic: Critic, x1, x2) -> float:
    """|D(x1) - D(x2)| / ||x1 - x2||_2 for a single pair of inputs.

    Diagnostic only; a 1-Lipschitz critic keeps this at most 1.
    """
    a = np.asarray(x1, dtype=np.float64)
    b = np.asarray(x2, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("inputs must share a shape")
    dist = float(np.sqrt(np.sum((a - b) ** 2)))
    if dist == 0.0:
        raise ValueError("inputs are identical")
    if a.ndim == 2:
        a = a[None, :, :]
        b = b[None, :, :]
    s1 = float(np.mean(critic(Tensor(a, requires_grad=False)).data))
    s2 = float(np.mean(critic(Tensor(b, requires_grad=False)).data))
    return abs(s1 - s2) / dist


def mode_collapse_score(batch: np.ndarray) -> float:
    """Mean pairwise distance between samples, RMS-normalized per element.

    Two samples offset by a constant d per element sit at distance d;
    identical samples give exactly 0.
    """
    batch = np.asarray(batch, dtype=np.float64)
    n = batch.shape[0]
    if n < 2:
        raise ValueError("mode collapse score needs at least 2 samples")
    flat = batch.reshape(n, -1)
    per_sample = flat.shape[1]
    total = 0.0
    pairs = 0
    for i in range(n):
        diff = flat[i + 1:] - flat[i]
        total += float(np.sum(np.sqrt(np.sum(diff * diff, axis=1))))
        pairs += diff.shape[0]
    return total / pairs / np.sqrt(per_sample)


def generate(generator: ParamSet, n_samples: int, seed: int) -> np.ndarray:
    """Sample noise and run the generator; [n_samples, seq_len, 1]."""
    if generator.arch is None:
        raise ValueError("generator ParamSet carries no architecture")
    rng = make_rng(seed)
    z = sample_noise(n_samples, generator.arch.noise_len, rng)
    out = generator_forward(generator, Tensor(z, requires_grad=False))
    return np.array(out.data)


def _generate_eager(generator: ParamSet, z: np.ndarray) -> np.ndarray:
    out = generator_forward(generator, Tensor(z, requires_grad=False))
    return np.array(out.data)


def _param_grads(gmap: T.GradientMap, params: ParamSet) -> dict[str, np.ndarray]:
    return {name: gmap[t].data for name, t in params.items()}


def train(config: TrainConfig, data: WindowedDataset, *,
          resume: TrainSnapshot | None = None,
          on_checkpoint: Callable[[TrainSnapshot], None] | None = None,
          ) -> tuple[ParamSet, ParamSet, LossHistory, list[TrainSnapshot]]:
    """Run the alternating training loop.

    One epoch = n_critic critic updates (fresh real batch and fresh
    noise each, generator frozen) followed by one generator update
    (critic frozen). Real batches are drawn uniformly with replacement.
    Deterministic given (seed, config, data); aborts on NaN/Inf after
    persisting a crash snapshot through ``on_checkpoint``.
    """
    if len(data) == 0:
        raise ValueError("training dataset is empty")
    if data.seq_len != config.seq_len:
        raise ValueError(f"dataset seq_len {data.seq_len} != config seq_len {config.seq_len}")

    if resume is not None:
        gen = resume.generator.copy()
        critic = resume.critic.copy()
        opt_g = resume.opt_generator.copy()
        opt_c = resume.opt_critic.copy()
        rng = make_rng(0)
        rng.bit_generator.state = resume.rng_state
        start_epoch = resume.epoch
    else:
        seeds = np.random.SeedSequence(config.seed).generate_state(3, dtype=np.uint64)
        gen = init_params(config.arch(), "generator", int(seeds[0]))
        critic = init_params(config.arch(), "critic", int(seeds[1]))
        opt_g = RmspropState()
        opt_c = RmspropState()
        rng = make_rng(int(seeds[2]))
        start_epoch = 0

    critic_fn: Critic = lambda x: critic_forward(critic, x)
    history = LossHistory()
    checkpoints: list[TrainSnapshot] = []
    B = config.batch_size

    def snapshot(epoch: int, batch: np.ndarray | None = None) -> TrainSnapshot:
        mc = mode_collapse_score(batch) if batch is not None and batch.shape[0] >= 2 else 0.0
        return TrainSnapshot(epoch=epoch, generator=gen.copy(), critic=critic.copy(),
                             opt_generator=opt_g.copy(), opt_critic=opt_c.copy(),
                             rng_state=rng.bit_generator.state, mode_collapse=mc)

    critic_wrt = [t for _, t in critic.items()]
    gen_wrt = [t for _, t in gen.items()]

    for epoch in range(start_epoch + 1, config.epochs + 1):
        c_loss = w_est = gp_val = 0.0
        last_fake = None

        def abort(detail: str):
            err = TrainingDiverged(f"non-finite loss at epoch {epoch}: {detail}")
            err.history = history
            err.snapshot = snapshot(epoch, last_fake)
            raise err

        for _ in range(config.n_critic):
            real = sample_real_batch(data, B, rng)
            z = sample_noise(B, config.noise_len, rng)
            with gen.frozen():
                fake = _generate_eager(gen, z)
            last_fake = fake
            graph = Graph()
            with graph:
                if config.loss_variant == "wgan_gp":
                    loss, w_est, gp_val = _critic_objective_wgan_gp(
                        critic_fn, real, fake, config.lambda_gp, rng)
                elif config.loss_variant == "wgan_clip":
                    loss = critic_loss_wgan_clip(critic_fn, real, fake)
                    w_est = -loss.item()
                else:
                    loss, _ = gan_losses_standard(critic_fn, real, fake)
                    w_est = wasserstein_estimate(critic_fn, real, fake)
                gmap = T.backward(graph, loss, wrt=critic_wrt)
                grads = _param_grads(gmap, critic)
            c_loss = loss.item()
            graph.clear()
            if not all(np.isfinite(v) for v in (c_loss, w_est, gp_val)):
                history.append(epoch, c_loss, float("nan"), w_est, gp_val)
                abort(f"critic={c_loss}, wasserstein={w_est}, penalty={gp_val}")
            rmsprop_step(critic, grads, opt_c, config.optim)
            if config.loss_variant == "wgan_clip":
                clip_weights(critic, config.optim.clip_c)

        z = sample_noise(B, config.noise_len, rng)
        graph = Graph()
        with graph:
            fake_t = generator_forward(gen, Tensor(z, requires_grad=False))
            with critic.frozen():
                if config.loss_variant == "gan":
                    g_loss = generator_loss_gan(critic_fn, fake_t,
                                                nonsaturating=config.g_loss_nonsaturating)
                else:
                    g_loss = generator_loss_wgan(critic_fn, fake_t)
            gmap = T.backward(graph, g_loss, wrt=gen_wrt)
            grads = _param_grads(gmap, gen)
        g_val = g_loss.item()
        graph.clear()
        rmsprop_step(gen, grads, opt_g, config.optim)

        history.append(epoch, c_loss, g_val, w_est, gp_val)
        if epoch == start_epoch + 1 or epoch % 100 == 0:
            logger.debug("epoch %d: critic=%.5f generator=%.5f w=%.5f gp=%.5f",
                         epoch, c_loss, g_val, w_est, gp_val)
        if not history.last_finite():
            # crash snapshot travels on the exception so callers can persist it
            abort(f"critic={c_loss}, generator={g_val}")
        if epoch % config.checkpoint_every == 0:
            sample = _generate_eager(gen, sample_noise(B, config.noise_len, make_rng(config.seed + epoch)))
            snap = snapshot(epoch, sample)
            checkpoints.append(snap)
            if on_checkpoint is not None:
                on_checkpoint(snap)

    return gen, critic, history, checkpoints
