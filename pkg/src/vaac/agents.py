"""VAAC learner and the SAC / RND baselines.

All three share one skeleton: twin soft critics with Polyak targets and a
tanh-Gaussian actor trained with the usual reparameterised surrogate. VAAC adds
a virtual actor, trained on anticipated novelty, whose log-density enters the
critic's backup; RND adds a novelty bonus to the reward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .anrm import Anrm, DynamicsModel, NoveltyModule
from .distributions import (GaussianHead, entropy_pre_squash,
                            reparam_backward, sample_reparameterized)
from .env_maze import EnvState, Maze
from .nn_core import (AdamState, Mlp, MlpSpec, NonFiniteError, adam_init, adam_step,
                      load_checkpoint, polyak_update, save_checkpoint, zero_grads)
from .replay import Batch, ReplayBuffer, Transition

AGENT_KINDS = ("vaac", "sac", "rnd")


@dataclass
class AgentConfig:
    gamma: float = 0.99
    alpha: float = 0.2
    beta: float = 1.0
    lr: float = 3e-4
    tau: float = 0.005
    batch_size: int = 256
    warmup: int = 1000
    hidden_dims: tuple[int, ...] = (64, 64)
    phi_scale: float = 1.0
    c_int: float = 1.0
    rnd_embed_dim: int = 32
    twin_critics: bool = True
    head_scale: float = 1e-2
    policy_log_std_init: float = 0.0
    virtual_log_std_init: float = -1.0
    vaac_intrinsic: bool = False
    buffer_capacity: int = 1_000_000

    def __post_init__(self):
        self.hidden_dims = tuple(int(h) for h in self.hidden_dims)


class PhiModel(Protocol):
    def phi_and_action_grad(self, s, a, out_grad) -> tuple[np.ndarray, np.ndarray]: ...


# -- components -------------------------------------------------------------

class Critic:
    def __init__(self, state_dim: int, action_dim: int, hidden_dims, rng: np.random.Generator,
                 gamma: float = 0.99, tau: float = 0.005, lr: float = 3e-4, twin: bool = True):
        spec = MlpSpec(state_dim + action_dim, tuple(hidden_dims), 1)
        self.online = [Mlp.create(spec, rng) for _ in range(2 if twin else 1)]
        self.targets = [q.copy() for q in self.online]
        self.optimizers = [adam_init(q.params, lr) for q in self.online]
        self.gamma = gamma
        self.tau = tau

    @staticmethod
    def _sa(s, a) -> np.ndarray:
        return np.concatenate([s, a], axis=-1)

    def min_target(self, s, a) -> np.ndarray:
        x = self._sa(s, a)
        q = self.targets[0](x)[..., 0]
        for net in self.targets[1:]:
            q = np.minimum(q, net(x)[..., 0])
        return q

    def min_online_with_action_grad(self, s, a) -> tuple[np.ndarray, np.ndarray]:
        """min_i Q_i(s, a) and its gradient wrt a; no critic weights change."""
        x = self._sa(s, a)
        outs = [net.forward(x) for net in self.online]
        qs = np.stack([o[0][..., 0] for o in outs])
        pick = np.argmin(qs, axis=0)  # ties go to q1
        grad = np.zeros_like(a)
        for i, (net, (_, cache)) in enumerate(zip(self.online, outs)):
            sel = (pick == i).astype(np.float64)[:, None]
            gx = net.backward(cache, sel, accumulate=False)
            grad += gx[..., s.shape[-1]:]
        return qs.min(axis=0), grad


class PolicyNet:
    """s -> GaussianHead; used for both the actor and the virtual actor."""

    def __init__(self, state_dim: int, action_dim: int, hidden_dims, rng: np.random.Generator,
                 lr: float = 3e-4, head_scale: float = 1e-2, log_std_init: float = 0.0):
        spec = MlpSpec(state_dim, tuple(hidden_dims), 2 * action_dim)
        bias = np.concatenate([np.zeros(action_dim), np.full(action_dim, log_std_init)])
        self.net = Mlp.create(spec, rng, head_scale=head_scale, head_bias=bias)
        self.optimizer: AdamState = adam_init(self.net.params, lr)
        self.action_dim = action_dim

    def head(self, s) -> GaussianHead:
        return GaussianHead.from_output(self.net(s))

    def head_cached(self, s):
        out, cache = self.net.forward(s)
        return GaussianHead.from_output(out), cache

    def apply_head_grads(self, cache, grad_mean, grad_log_std) -> None:
        zero_grads(self.net.params)
        self.net.backward(cache, np.concatenate([grad_mean, grad_log_std], axis=-1))
        adam_step(self.net.params, self.optimizer)


class Actor(PolicyNet):
    def __init__(self, *args, alpha: float = 0.2, **kwargs):
        super().__init__(*args, **kwargs)
        self.alpha = alpha


class VirtualActor(PolicyNet):
    def __init__(self, *args, beta: float = 1.0, **kwargs):
        super().__init__(*args, **kwargs)
        self.beta = beta


# -- operations -------------------------------------------------------------

def act(actor: PolicyNet, s, rng: np.random.Generator | None, deterministic: bool = False) -> np.ndarray:
    head = actor.head(s)
    if deterministic:
        return np.tanh(head.mean)
    return sample_reparameterized(head, rng.standard_normal(head.mean.shape)).action


def sac_critic_target(critic: Critic, actor: Actor, batch: Batch, noise: np.ndarray,
                      rewards: np.ndarray | None = None) -> np.ndarray:
    """r + gamma (1 - done) [min Q'(s', a') - alpha log pi(a'|s')], a' ~ pi(.|s')."""
    return _backup(critic, batch, _soft_value(critic, actor, batch.next_state, noise), rewards)


def compute_critic_target(critic: Critic, actor: Actor, virtual_actor: VirtualActor, batch: Batch,
                          noise: np.ndarray, virtual_noise: np.ndarray,
                          rewards: np.ndarray | None = None) -> np.ndarray:
    """SAC backup whose next-state value also carries ``beta * log psi(a''|s')``.

    ``a''`` is drawn from the virtual policy independently of ``a'``, so states
    where the virtual policy is spread out (high entropy) are valued lower.
    """
    v = _soft_value(critic, actor, batch.next_state, noise)
    psi = sample_reparameterized(virtual_actor.head(batch.next_state), virtual_noise)
    v = v + virtual_actor.beta * psi.log_prob
    return _backup(critic, batch, v, rewards)


def _soft_value(critic: Critic, actor: Actor, s_next, noise) -> np.ndarray:
    pi = sample_reparameterized(actor.head(s_next), noise)
    return critic.min_target(s_next, pi.action) - actor.alpha * pi.log_prob


def _backup(critic: Critic, batch: Batch, v_next: np.ndarray, rewards) -> np.ndarray:
    r = batch.reward if rewards is None else rewards
    return r + critic.gamma * (1.0 - batch.done) * v_next


def critic_update(critic: Critic, targets: np.ndarray, batch: Batch) -> float:
    """Adam step on 0.5 * mean over the batch of sum_i (Q_i - y)^2, then Polyak."""
    x = Critic._sa(batch.state, batch.action)
    n = len(targets)
    loss = 0.0
    for net, opt in zip(critic.online, critic.optimizers):
        q, cache = net.forward(x)
        err = q[:, 0] - targets
        loss += 0.5 * float(np.mean(err * err))
        zero_grads(net.params)
        net.backward(cache, (err / n)[:, None])
        adam_step(net.params, opt)
    for tgt, net in zip(critic.targets, critic.online):
        polyak_update(tgt.params, net.params, critic.tau)
    return loss


def actor_update(actor: Actor, critic: Critic, states: np.ndarray, noise: np.ndarray) -> float:
    """Adam step on mean[alpha log pi(a|s) - min Q(s, a)], a reparameterised."""
    head, cache = actor.head_cached(states)
    sample = sample_reparameterized(head, noise)
    q, dq_da = critic.min_online_with_action_grad(states, sample.action)
    n = len(states)
    loss = float(np.mean(actor.alpha * sample.log_prob - q))
    gm, gs = reparam_backward(head, sample, noise, actor.alpha / n, -dq_da / n)
    actor.apply_head_grads(cache, gm, gs)
    return loss


def virtual_actor_update(virtual_actor: VirtualActor, anrm: PhiModel, states: np.ndarray,
                         noise: np.ndarray, anrm_states: np.ndarray | None = None
                         ) -> tuple[float, float, float]:
    """Adam step on mean[log psi(a|s) - phi(s, a)]; only the virtual actor moves.

    ``anrm_states`` are the states as the ANRM sees them (defaults to ``states``).
    Returns (loss, mean phi, mean pre-squash entropy).
    """
    head, cache = virtual_actor.head_cached(states)
    sample = sample_reparameterized(head, noise)
    n = len(states)
    ph, dphi_da = anrm.phi_and_action_grad(states if anrm_states is None else anrm_states,
                                           sample.action, np.full(n, -1.0 / n))
    loss = float(np.mean(sample.log_prob - ph))
    gm, gs = reparam_backward(head, sample, noise, 1.0 / n, dphi_da)
    virtual_actor.apply_head_grads(cache, gm, gs)
    return loss, float(np.mean(ph)), float(np.mean(entropy_pre_squash(head)))


def intrinsic_reward(noveltym: NoveltyModule, s_next) -> np.ndarray:
    return noveltym.novelty(s_next)


# -- the learner ------------------------------------------------------------

@dataclass
class StepReport:
    step: int
    position: np.ndarray
    reward: float
    done: bool
    critic_loss: float = math.nan
    actor_loss: float = math.nan
    va_loss: float = math.nan
    dyn_loss: float = math.nan
    rnd_loss: float = math.nan
    virtual_entropy: float = math.nan
    phi_mean: float = math.nan


class Agent:
    """One learner of a given kind plus its environment, buffer and RNG streams.

    ``rngs`` must provide the streams ``init.critic``, ``init.actor``,
    ``init.virtual``, ``init.dynamics``, ``init.rnd``, ``act``, ``actor``,
    ``virtual`` and ``replay``. Each consumer owns its stream so that adding
    one (e.g. the virtual actor) never changes what another draws.
    """

    def __init__(self, kind: str, config: AgentConfig, env: Maze, rngs: dict[str, np.random.Generator]):
        if kind not in AGENT_KINDS:
            raise ValueError(f"unknown agent kind {kind!r}; expected one of {AGENT_KINDS}")
        self.kind = kind
        self.config = config
        self.env = env
        self.rngs = rngs
        size = env.config.size
        # fixed affine map of positions into [-1, 1] for the policy and critic nets
        self.obs_center = size / 2
        self.obs_scale = size / 2
        sd, ad, h = 2, 2, config.hidden_dims
        self.critic = Critic(sd, ad, h, rngs["init.critic"], config.gamma, config.tau,
                             config.lr, config.twin_critics)
        self.actor = Actor(sd, ad, h, rngs["init.actor"], lr=config.lr, head_scale=config.head_scale,
                           log_std_init=config.policy_log_std_init, alpha=config.alpha)
        self.virtual_actor: VirtualActor | None = None
        self.anrm: Anrm | None = None
        self.novelty: NoveltyModule | None = None
        if kind in ("vaac", "rnd"):
            self.novelty = NoveltyModule(sd, h, rngs["init.rnd"], config.rnd_embed_dim, config.lr)
        if kind == "vaac":
            self.virtual_actor = VirtualActor(
                sd, ad, h, rngs["init.virtual"], lr=config.lr, head_scale=config.head_scale,
                log_std_init=config.virtual_log_std_init, beta=config.beta)
            dyn = DynamicsModel(sd, ad, h, rngs["init.dynamics"], config.lr,
                                state_center=self.obs_center, state_scale=self.obs_scale)
            self.anrm = Anrm(dyn, self.novelty, config.phi_scale)
        self.buffer = ReplayBuffer(config.buffer_capacity, sd, ad)
        self.env_state: EnvState = env.reset()
        self.total_steps = 0
        self.n_updates = 0
        self.n_virtual_updates = 0
        self.n_anrm_updates = 0

    def obs(self, s) -> np.ndarray:
        return (np.asarray(s, dtype=np.float64) - self.obs_center) / self.obs_scale

    def _normalized(self, batch: Batch) -> Batch:
        return Batch(self.obs(batch.state), batch.action, batch.reward,
                     self.obs(batch.next_state), batch.done)

    def select_action(self, deterministic: bool = False) -> np.ndarray:
        if self.total_steps < self.config.warmup and not deterministic:
            return self.rngs["act"].uniform(-1.0, 1.0, size=2)
        return act(self.actor, self.obs(self.env_state.position), self.rngs["act"], deterministic)

    def train_iteration(self) -> StepReport:
        s = self.env_state
        a = self.select_action()
        s2, r, done = self.env.step(s, a)
        # the maze has no terminal states; the episode clock only truncates
        self.buffer.push(Transition(s.position.copy(), a, r, s2.position.copy(), False))
        self.total_steps += 1
        report = StepReport(self.total_steps, s2.position.copy(), r, done)
        self.env_state = self.env.reset() if done else s2
        if self.total_steps >= self.config.warmup:
            self.update(report)
        return report

    def update(self, report: StepReport | None = None) -> StepReport:
        cfg = self.config
        report = report or StepReport(self.total_steps, self.env_state.position.copy(), 0.0, False)
        raw = self.buffer.sample(cfg.batch_size, self.rngs["replay"])
        batch = self._normalized(raw)
        n = len(batch)
        if self.anrm is not None:
            report.dyn_loss, report.rnd_loss = self.anrm.train_step(raw)
            self.n_anrm_updates += 1
        elif self.novelty is not None:
            report.rnd_loss = self.novelty.train_step(raw.next_state)
            self.n_anrm_updates += 1

        rewards = None
        if self.kind == "rnd" or (self.kind == "vaac" and cfg.vaac_intrinsic):
            rewards = raw.reward + cfg.c_int * intrinsic_reward(self.novelty, raw.next_state)

        noise = self.rngs["actor"].standard_normal((n, 2))
        if self.kind == "vaac":
            vnoise = self.rngs["virtual"].standard_normal((n, 2))
            y = compute_critic_target(self.critic, self.actor, self.virtual_actor, batch,
                                      noise, vnoise, rewards)
        else:
            y = sac_critic_target(self.critic, self.actor, batch, noise, rewards)
        report.critic_loss = critic_update(self.critic, y, batch)
        report.actor_loss = actor_update(self.actor, self.critic, batch.state,
                                         self.rngs["actor"].standard_normal((n, 2)))
        if self.kind == "vaac":
            report.va_loss, report.phi_mean, report.virtual_entropy = virtual_actor_update(
                self.virtual_actor, self.anrm, batch.state,
                self.rngs["virtual"].standard_normal((n, 2)), anrm_states=raw.state)
            self.n_virtual_updates += 1
        self.n_updates += 1
        active = {"critic_loss": report.critic_loss, "actor_loss": report.actor_loss}
        if self.kind == "vaac":
            active.update(va_loss=report.va_loss, dyn_loss=report.dyn_loss)
        if self.novelty is not None:
            active["rnd_loss"] = report.rnd_loss
        bad = {k: v for k, v in active.items() if not math.isfinite(v)}
        if bad:
            raise NonFiniteError(f"non-finite loss at step {self.total_steps}: {bad}")
        return report

    # -- checkpointing ------------------------------------------------------

    def _nets(self) -> dict[str, Mlp]:
        nets = {"actor": self.actor.net}
        for i, (q, qt) in enumerate(zip(self.critic.online, self.critic.targets), start=1):
            nets[f"q{i}"] = q
            nets[f"q{i}_target"] = qt
        if self.virtual_actor is not None:
            nets["virtual_actor"] = self.virtual_actor.net
        if self.anrm is not None:
            nets["dynamics"] = self.anrm.dynamics.net
        if self.novelty is not None:
            nets["rnd_target"] = self.novelty.target
            nets["rnd_predictor"] = self.novelty.predictor
        return nets

    def _optimizers(self) -> dict[str, AdamState]:
        opts = {"actor": self.actor.optimizer}
        for i, o in enumerate(self.critic.optimizers, start=1):
            opts[f"q{i}"] = o
        if self.virtual_actor is not None:
            opts["virtual_actor"] = self.virtual_actor.optimizer
        if self.anrm is not None:
            opts["dynamics"] = self.anrm.dynamics.optimizer
        if self.novelty is not None:
            opts["rnd_predictor"] = self.novelty.optimizer
        return opts

    def save(self, path) -> None:
        extra_arrays = {}
        extra = {"kind": self.kind, "total_steps": self.total_steps}
        if self.novelty is not None:
            extra_arrays.update({
                "obs_mean": self.novelty.obs_rms.mean, "obs_var": self.novelty.obs_rms.var,
                "err_mean": self.novelty.err_rms.mean, "err_var": self.novelty.err_rms.var,
            })
            extra["obs_count"] = self.novelty.obs_rms.count
            extra["err_count"] = self.novelty.err_rms.count
        rng_states = {k: g.bit_generator.state for k, g in self.rngs.items()}
        save_checkpoint(path, self._nets(), self._optimizers(), rng_states, extra, extra_arrays)

    def load(self, path) -> None:
        ck = load_checkpoint(path)
        if ck["extra"]["kind"] != self.kind:
            raise ValueError(f"checkpoint holds a {ck['extra']['kind']!r} agent, not {self.kind!r}")
        for name, net in self._nets().items():
            src = ck["nets"][name].params
            for dst, s in zip(net.params.arrays(), src.arrays()):
                dst[...] = s
        for name, opt in self._optimizers().items():
            src = ck["optimizers"][name]
            opt.step_count = src.step_count
            for dst, s in zip(opt.first_moment + opt.second_moment, src.first_moment + src.second_moment):
                dst[...] = s
        for name, state in ck["rng_states"].items():
            if name in self.rngs:
                self.rngs[name].bit_generator.state = state
        if self.novelty is not None:
            ea = ck["extra_arrays"]
            self.novelty.obs_rms.mean, self.novelty.obs_rms.var = ea["obs_mean"], ea["obs_var"]
            self.novelty.err_rms.mean, self.novelty.err_rms.var = ea["err_mean"][()], ea["err_var"][()]
            self.novelty.obs_rms.count = ck["extra"]["obs_count"]
            self.novelty.err_rms.count = ck["extra"]["err_count"]
        self.total_steps = ck["extra"]["total_steps"]

