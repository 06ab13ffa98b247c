"""Off-policy actor-critic with a layer-normalized critic ensemble.

Squashed-Gaussian actor, 10 critics regressing to a min-over-2-subsampled
target with entropy correction, learnable temperature, Polyak-averaged target
nets, and fractional update-to-data accounting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .buffers import Batch
from .nets import Adam, EnsembleMLP, polyak

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0


@dataclass
class SACConfig:
    discount: float = 0.99
    polyak_tau: float = 0.005
    utd: float = 10.0
    actor_update_every: int = 20
    lr: float = 3e-4
    num_critics: int = 10
    num_sampled_critics: int = 2
    init_temperature: float = 1.0
    learnable_temperature: bool = True
    hidden: tuple = (256, 256, 256)
    batch_size: int = 256
    seed_steps: int = 5000
    target_entropy: float | None = None  # None -> -action_dim


def _squash_logpi(log_std, eps, u):
    """log pi of a = tanh(mean + std*eps) under the squashed Gaussian, per sample."""
    log_normal = -0.5 * np.log(2 * np.pi) - log_std - 0.5 * eps ** 2
    # log(1 - tanh(u)^2) = 2*(log 2 - u - softplus(-2u)), numerically stable
    squash = 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))
    return (log_normal - squash).sum(axis=-1, dtype=np.float64)


class SACLearner:
    def __init__(self, state_dim: int, action_dim: int, config: SACConfig,
                 rng: np.random.Generator, dtype=np.float32):
        self.cfg = config
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.dtype = dtype
        sizes_a = [state_dim, *config.hidden, 2 * action_dim]
        sizes_c = [state_dim + action_dim, *config.hidden, 1]
        self.actor = EnsembleMLP(sizes_a, ensemble=1, layer_norm=False, rng=rng, dtype=dtype)
        self.critics = EnsembleMLP(sizes_c, ensemble=config.num_critics, layer_norm=True,
                                   rng=rng, dtype=dtype)
        self.target_critics = self.critics.copy()
        self.log_alpha = {"log_alpha": np.array(np.log(config.init_temperature), dtype=np.float64)}
        self.opt_actor = Adam(self.actor.params, lr=config.lr)
        self.opt_critics = Adam(self.critics.params, lr=config.lr)
        self.opt_alpha = Adam(self.log_alpha, lr=config.lr)
        self.target_entropy = (config.target_entropy if config.target_entropy is not None
                               else -float(action_dim))
        self.critic_updates = 0
        self.actor_updates = 0
        self._update_debt = 0.0

    @property
    def temperature(self) -> float:
        return float(np.exp(self.log_alpha["log_alpha"]))

    # -- acting ------------------------------------------------------------

    def _actor_out(self, states, want_cache=False):
        out = self.actor.forward(states, want_cache=want_cache)
        y, cache = out if want_cache else (out, None)
        raw = y[0]
        mean = raw[:, :self.action_dim]
        log_std_raw = raw[:, self.action_dim:]
        log_std = np.clip(log_std_raw, LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std, log_std_raw, cache

    def act(self, state, deterministic: bool, rng: np.random.Generator = None) -> np.ndarray:
        a = self.act_batch(np.asarray(state)[None], deterministic, rng)[0]
        if not np.all(np.isfinite(a)):
            raise FloatingPointError("non-finite action: training diverged")
        return a

    def act_batch(self, states, deterministic: bool, rng: np.random.Generator = None):
        mean, log_std, _, _ = self._actor_out(states)
        if deterministic:
            return np.tanh(mean.astype(np.float64))
        eps = rng.standard_normal(mean.shape)
        return np.tanh(mean.astype(np.float64) + np.exp(log_std.astype(np.float64)) * eps)

    def _sample_with_logpi(self, states, eps):
        mean, log_std, log_std_raw, cache = self._actor_out(states, want_cache=True)
        mean = mean.astype(np.float64)
        log_std = log_std.astype(np.float64)
        std = np.exp(log_std)
        u = mean + std * eps
        a = np.tanh(u)
        logpi = _squash_logpi(log_std, eps, u)
        return a, logpi, u, std, log_std_raw, cache

    # -- critic update -----------------------------------------------------

    def _critic_target(self, batch: Batch, eps_next, pair):
        """y = r + gamma*(1-terminal)*(min_2 targetQ(s', a') - alpha*logpi')."""
        a_next, logpi_next, _, _, _, _ = self._sample_with_logpi(batch.next_states, eps_next)
        sa_next = np.concatenate([batch.next_states, a_next], axis=1)
        q_next = self.target_critics.forward(sa_next, members=pair)[:, :, 0].astype(np.float64)
        min_q = q_next.min(axis=0)
        not_terminal = 1.0 - batch.terminals.astype(np.float64)  # truncation still bootstraps
        return batch.rewards + self.cfg.discount * not_terminal * (min_q - self.temperature * logpi_next)

    def critic_loss(self, batch: Batch, eps_next, pair) -> float:
        """Loss only, same randomness contract as update_critics (for oracles)."""
        y = self._critic_target(batch, eps_next, pair)
        q = self.critics.forward(np.concatenate([batch.states, batch.actions], axis=1))[:, :, 0]
        return float(np.mean((q.astype(np.float64) - y[None, :]) ** 2, dtype=np.float64))

    def update_critics(self, batch: Batch, rng: np.random.Generator,
                       eps_next=None, pair=None) -> float:
        if eps_next is None:
            eps_next = rng.standard_normal((len(batch), self.action_dim))
        if pair is None:
            pair = rng.choice(self.cfg.num_critics, size=self.cfg.num_sampled_critics, replace=False)
        y = self._critic_target(batch, eps_next, pair)
        sa = np.concatenate([batch.states, batch.actions], axis=1)
        q, cache = self.critics.forward(sa, want_cache=True)
        diff = q.astype(np.float64) - y[None, :, None]
        loss = float(np.mean(diff ** 2, dtype=np.float64))
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite critic loss")
        dout = (2.0 * diff / diff.size).astype(self.critics.dtype)
        grads, _ = self.critics.backward(cache, dout)
        self.opt_critics.step(self.critics.params, grads)
        self.critic_updates += 1
        return loss

    # -- actor / temperature update ---------------------------------------

    def actor_loss(self, states, eps) -> float:
        """Loss only (alpha*logpi - mean-ensemble Q), for finite-difference oracles."""
        a, logpi, _, _, _, _ = self._sample_with_logpi(states, eps)
        q = self.critics.forward(np.concatenate([states, a], axis=1))[:, :, 0].astype(np.float64)
        return float(np.mean(self.temperature * logpi - q.mean(axis=0), dtype=np.float64))

    def update_actor_and_temperature(self, batch: Batch, rng: np.random.Generator, eps=None):
        states = batch.states
        B = len(states)
        if eps is None:
            eps = rng.standard_normal((B, self.action_dim))
        a, logpi, u, std, log_std_raw, cache = self._sample_with_logpi(states, eps)
        sa = np.concatenate([states, a], axis=1)
        q, qcache = self.critics.forward(sa, want_cache=True)
        q = q[:, :, 0].astype(np.float64)
        loss = float(np.mean(self.temperature * logpi - q.mean(axis=0), dtype=np.float64))
        if not np.isfinite(loss):
            raise FloatingPointError("non-finite actor loss")

        # dL/d(critic input), param grads skipped; action slice is dL/da
        dq = np.full((self.critics.ensemble, B, 1), -1.0 / (self.critics.ensemble * B),
                     dtype=self.critics.dtype)
        _, dinput = self.critics.backward(qcache, dq, want_input_grad=True, want_param_grads=False)
        dL_da = dinput[:, self.state_dim:].astype(np.float64)

        alpha = self.temperature
        tanh_u = a
        dlogpi_du = 2.0 * tanh_u          # Gaussian terms cancel under reparameterization
        dL_du = alpha * dlogpi_du / B + dL_da * (1.0 - tanh_u ** 2)
        dL_dmean = dL_du
        dL_dlogstd = alpha * (-1.0 + dlogpi_du * std * eps) / B + dL_da * (1.0 - tanh_u ** 2) * std * eps
        clamp_mask = (log_std_raw > LOG_STD_MIN) & (log_std_raw < LOG_STD_MAX)
        dout = np.concatenate([dL_dmean, dL_dlogstd * clamp_mask], axis=1)[None].astype(self.actor.dtype)
        grads, _ = self.actor.backward(cache, dout)
        self.opt_actor.step(self.actor.params, grads)
        self.actor_updates += 1

        temp_loss = float(np.mean(-self.log_alpha["log_alpha"] * (logpi + self.target_entropy)))
        if self.cfg.learnable_temperature:
            g = np.array(-np.mean(logpi + self.target_entropy), dtype=np.float64)
            self.opt_alpha.step(self.log_alpha, {"log_alpha": g})
        return loss, temp_loss

    # -- orchestration -----------------------------------------------------

    def polyak_update(self):
        polyak(self.target_critics, self.critics, self.cfg.polyak_tau)

    def train_step(self, sampler, env_steps: int, rng: np.random.Generator) -> dict:
        """Run the gradient updates owed for `env_steps` fresh environment steps."""
        self._update_debt += self.cfg.utd * env_steps
        metrics = {"critic_updates": 0, "actor_updates": 0, "critic_loss": 0.0, "actor_loss": 0.0}
        while self._update_debt >= 1.0:
            self._update_debt -= 1.0
            batch = sampler.sample(self.cfg.batch_size, rng)
            metrics["critic_loss"] = self.update_critics(batch, rng)
            self.polyak_update()
            metrics["critic_updates"] += 1
            if self.critic_updates % self.cfg.actor_update_every == 0:
                metrics["actor_loss"], _ = self.update_actor_and_temperature(batch, rng)
                metrics["actor_updates"] += 1
        metrics["temperature"] = self.temperature
        return metrics

    # -- checkpointing -----------------------------------------------------

    def state_arrays(self) -> dict:
        out = {"log_alpha": self.log_alpha["log_alpha"],
               "counters": np.array([self.critic_updates, self.actor_updates,
                                     self.opt_actor.t, self.opt_critics.t, self.opt_alpha.t]),
               "update_debt": np.array(self._update_debt)}
        for prefix, net in (("actor", self.actor), ("critics", self.critics),
                            ("targets", self.target_critics)):
            for k, v in net.params.items():
                out[f"{prefix}/{k}"] = v
        for prefix, opt in (("opt_actor", self.opt_actor), ("opt_critics", self.opt_critics),
                            ("opt_alpha", self.opt_alpha)):
            for k, v in opt.m.items():
                out[f"{prefix}/m/{k}"] = v
            for k, v in opt.v.items():
                out[f"{prefix}/v/{k}"] = v
        return out

    def load_state_arrays(self, data: dict):
        self.log_alpha["log_alpha"] = np.array(data["log_alpha"], dtype=np.float64)
        c = data["counters"]
        self.critic_updates, self.actor_updates = int(c[0]), int(c[1])
        self.opt_actor.t, self.opt_critics.t, self.opt_alpha.t = int(c[2]), int(c[3]), int(c[4])
        self._update_debt = float(data["update_debt"])
        for prefix, net in (("actor", self.actor), ("critics", self.critics),
                            ("targets", self.target_critics)):
            for k in net.params:
                net.params[k] = np.array(data[f"{prefix}/{k}"])
        for prefix, opt in (("opt_actor", self.opt_actor), ("opt_critics", self.opt_critics),
                            ("opt_alpha", self.opt_alpha)):
            for k in opt.m:
                opt.m[k] = np.array(data[f"{prefix}/m/{k}"])
                opt.v[k] = np.array(data[f"{prefix}/v/{k}"])
