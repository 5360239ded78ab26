"""Multi-agent PPO with a shared policy, central critic, and demo annealing.

All agents run one shared policy over their local observation (correlation
features plus the question representation); a central value network scores
the concatenated observations of every agent, in fixed server order.  Agents
therefore train centrally but act on local information only.

Expert demonstrations collected from a heuristic scheduler are mixed into
early updates under a shrinking quota (pool size divided by the update
index); once the quota falls to the configured floor the learner runs on its
own experience alone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .nn.models import EncoderConfig, FeatureEncoder, PolicyNet, ValueNet
from .nn.params import Adam, ParamSet, accumulate_grads
from .seeding import DOMAIN_PARAMS, DOMAIN_POLICY, DOMAIN_TRAINER, substream

log = logging.getLogger(__name__)


def correlation_features(corr_matrix: np.ndarray) -> np.ndarray:
    """Flatten a (3, width) correlation matrix into network inputs.

    Use counts grow without bound, so they pass through log1p; similarity
    and kind codes are already O(1) and stay raw.
    """
    m = np.array(corr_matrix, dtype=float)
    m[2] = np.log1p(m[2])
    return m.ravel()


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    bootstrap_value: float,
    gamma: float,
    lam: float,
) -> np.ndarray:
    """Generalized advantage estimates over one trajectory segment.

    ``values`` aligns with ``rewards``; ``bootstrap_value`` is the critic's
    estimate for the state following the last step.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if rewards.shape != values.shape:
        raise ConfigError(
            f"rewards {rewards.shape} and values {values.shape} must align"
        )
    T = rewards.shape[0]
    adv = np.zeros(T)
    carry = 0.0
    next_value = float(bootstrap_value)
    for t in range(T - 1, -1, -1):
        delta = rewards[t] + gamma * next_value - values[t]
        carry = delta + gamma * lam * carry
        adv[t] = carry
        next_value = values[t]
    return adv


def expert_quota(pool_size: int, update_index: int, min_quota: int = 16) -> int:
    """Demonstrations to mix into update number ``update_index`` (1-based).

    The quota is the pool size divided by the update index, rounded down;
    callers stop using demonstrations once it is no longer above
    ``min_quota``.
    """
    if update_index < 1:
        raise ValueError(f"update_index must be >= 1, got {update_index}")
    if pool_size < 0:
        raise ValueError(f"pool_size must be >= 0, got {pool_size}")
    return pool_size // update_index


@dataclass(frozen=True)
class TrainerConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    value_coeff: float = 0.5
    entropy_coeff: float = 0.01
    lr_policy: float = 3e-4
    lr_value: float = 1e-3
    min_agent_batch: int = 128  # segment length per agent before a handoff
    min_demo_quota: int = 16  # demos stop once the quota is not above this
    epochs: int = 4
    minibatch_size: int = 64
    max_updates: int = 10**9
    normalize_advantages: bool = True
    policy_hidden: tuple[int, ...] = (128, 128)
    value_hidden: tuple[int, ...] = (128, 128)

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ConfigError(f"gae_lambda must lie in [0, 1], got {self.gae_lambda}")
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ConfigError(f"clip_epsilon must lie in (0, 1), got {self.clip_epsilon}")
        if self.min_agent_batch < 1 or self.minibatch_size < 1 or self.epochs < 1:
            raise ConfigError("batch sizes and epochs must be >= 1")
        if self.min_demo_quota < 0:
            raise ConfigError("min_demo_quota must be >= 0")


@dataclass
class Segment:
    """A contiguous run of synchronous slots for all agents.

    ``final_corr``/``final_question`` hold the observation right after the
    last recorded slot, used to bootstrap the value of the tail state.
    """

    corr: np.ndarray  # (T, N, corr_dim)
    question: np.ndarray  # (T, N, question_dim)
    actions: np.ndarray  # (T, N) int
    probs: np.ndarray  # (T, N) probability of the action taken
    rewards: np.ndarray  # (T, N)
    final_corr: np.ndarray  # (N, corr_dim)
    final_question: np.ndarray  # (N, question_dim)

    @property
    def steps(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_agents(self) -> int:
        return self.rewards.shape[1]


class ExperienceBuffer:
    """Per-agent staging lists plus the shared pool of finished segments."""

    def __init__(self, n_agents: int):
        if n_agents < 1:
            raise ConfigError(f"n_agents must be >= 1, got {n_agents}")
        self.n_agents = n_agents
        self._pending: list[tuple] = []
        self.segments: list[Segment] = []

    @property
    def pending_steps(self) -> int:
        return len(self._pending)

    def agent_counts(self) -> list[int]:
        """Transitions per agent sitting in the finished-segment pool."""
        total = sum(seg.steps for seg in self.segments)
        return [total] * self.n_agents

    def record_slot(
        self,
        corr: np.ndarray,
        question: np.ndarray,
        actions: np.ndarray,
        probs: np.ndarray,
        rewards: np.ndarray,
    ) -> None:
        if corr.shape[0] != self.n_agents:
            raise ConfigError(
                f"expected one observation per agent ({self.n_agents}), "
                f"got {corr.shape[0]}"
            )
        self._pending.append(
            (
                np.array(corr, dtype=float),
                np.array(question, dtype=float),
                np.array(actions, dtype=int),
                np.array(probs, dtype=float),
                np.array(rewards, dtype=float),
            )
        )

    def hand_off(
        self, final_corr: np.ndarray, final_question: np.ndarray
    ) -> Segment | None:
        """Close the pending run into a segment; no-op when nothing is staged."""
        if not self._pending:
            return None
        corr, question, actions, probs, rewards = (
            np.stack(x) for x in zip(*self._pending)
        )
        seg = Segment(
            corr=corr,
            question=question,
            actions=actions,
            probs=probs,
            rewards=rewards,
            final_corr=np.array(final_corr, dtype=float),
            final_question=np.array(final_question, dtype=float),
        )
        self.segments.append(seg)
        self._pending = []
        return seg

    def drop_pending(self) -> None:
        self._pending = []

    def clear_pool(self) -> None:
        self.segments = []


class DemoSet:
    """A frozen pool of expert segments with a flat per-transition index."""

    def __init__(self, segments: list[Segment], limit: int | None = None):
        self.segments = list(segments)
        self._flat: list[tuple[int, int, int]] = []
        for si, seg in enumerate(self.segments):
            for t in range(seg.steps):
                for n in range(seg.n_agents):
                    self._flat.append((si, t, n))
        if limit is not None:
            self._flat = self._flat[:limit]

    def __len__(self) -> int:
        return len(self._flat)

    def sample(self, k: int, rng: np.random.Generator) -> list[tuple[int, int, int]]:
        """Draw ``k`` distinct transitions (all of them when k >= pool size)."""
        if k >= len(self._flat):
            return list(self._flat)
        idx = rng.choice(len(self._flat), size=k, replace=False)
        return [self._flat[int(i)] for i in idx]

    def mean_reward(self) -> float:
        total = 0.0
        for si, t, n in self._flat:
            total += self.segments[si].rewards[t, n]
        return total / len(self._flat) if self._flat else 0.0


@dataclass
class NetBundle:
    """The trainable networks: optional encoder, shared policy, central critic."""

    encoder: FeatureEncoder | None
    policy: PolicyNet
    value: ValueNet


@dataclass
class PpoBatch:
    """Flattened agent-level samples plus each sample's global observation."""

    corr: np.ndarray  # (B, corr_dim)
    question: np.ndarray  # (B, question_dim)
    actions: np.ndarray  # (B,)
    old_probs: np.ndarray  # (B,)
    advantages: np.ndarray  # (B,)
    returns: np.ndarray  # (B,)
    global_corr: np.ndarray  # (B, N, corr_dim)
    global_question: np.ndarray  # (B, N, question_dim)

    def __len__(self) -> int:
        return self.actions.shape[0]

    def take(self, idx: np.ndarray) -> "PpoBatch":
        return PpoBatch(
            corr=self.corr[idx],
            question=self.question[idx],
            actions=self.actions[idx],
            old_probs=self.old_probs[idx],
            advantages=self.advantages[idx],
            returns=self.returns[idx],
            global_corr=self.global_corr[idx],
            global_question=self.global_question[idx],
        )

    @staticmethod
    def concat(parts: list["PpoBatch"]) -> "PpoBatch":
        return PpoBatch(
            corr=np.concatenate([p.corr for p in parts]),
            question=np.concatenate([p.question for p in parts]),
            actions=np.concatenate([p.actions for p in parts]),
            old_probs=np.concatenate([p.old_probs for p in parts]),
            advantages=np.concatenate([p.advantages for p in parts]),
            returns=np.concatenate([p.returns for p in parts]),
            global_corr=np.concatenate([p.global_corr for p in parts]),
            global_question=np.concatenate([p.global_question for p in parts]),
        )


@dataclass
class PpoLossResult:
    loss: float
    policy_grads: dict[str, np.ndarray]
    value_grads: dict[str, np.ndarray]
    surrogate: float
    value_mse: float
    entropy: float
    clip_fraction: float


def ppo_loss(
    nets: NetBundle,
    policy_params: ParamSet,
    value_params: ParamSet,
    batch: PpoBatch,
    cfg: TrainerConfig,
) -> PpoLossResult:
    """Clipped-surrogate PPO loss and its gradients for one minibatch.

    The objective is ``surrogate - value_coeff * value_mse +
    entropy_coeff * entropy`` and the returned loss is its negation.  The
    critic consumes encoded features as data: encoder gradients flow only
    through the policy path.
    """
    B = len(batch)
    if B == 0:
        raise ConfigError("cannot compute a loss over an empty batch")
    if np.any(batch.old_probs <= 0.0):
        raise ConfigError("recorded action probabilities must be positive")
    eps = cfg.clip_epsilon
    idx = np.arange(B)

    # Policy path (differentiated end to end, encoder included).
    if nets.encoder is not None:
        feats, enc_cache = nets.encoder.forward(policy_params, batch.question)
    else:
        feats = batch.question
    corr_dim = batch.corr.shape[1]
    state = np.concatenate([batch.corr, feats], axis=1)
    probs, pi_cache = nets.policy.forward(policy_params, state)
    p_taken = probs[idx, batch.actions]
    ratio = p_taken / batch.old_probs
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
    s_raw = ratio * batch.advantages
    s_clip = clipped * batch.advantages
    take_raw = s_raw <= s_clip  # min(); ties resolve to the unclipped branch
    surrogate = float(np.where(take_raw, s_raw, s_clip).mean())
    safe_probs = np.maximum(probs, 1e-300)
    logp = np.log(safe_probs)
    entropy = float(-(probs * logp).sum(axis=1).mean())

    # Critic path; encoded features enter as constants (no encoder gradient).
    n_agents = batch.global_corr.shape[1]
    gq_flat = batch.global_question.reshape(B * n_agents, -1)
    if nets.encoder is not None:
        gfeats, _ = nets.encoder.forward(policy_params, gq_flat)
    else:
        gfeats = gq_flat
    per_agent = np.concatenate(
        [
            batch.global_corr.reshape(B * n_agents, -1),
            gfeats,
        ],
        axis=1,
    ).reshape(B, -1)
    values, v_cache = nets.value.forward(value_params, per_agent)
    v_err = values - batch.returns
    value_mse = float(np.mean(v_err**2))

    objective = surrogate - cfg.value_coeff * value_mse + cfg.entropy_coeff * entropy
    loss = -objective

    # Backward: d loss / d probs.
    inside = (ratio > 1.0 - eps) & (ratio < 1.0 + eps)
    dsurr_dp = (
        batch.advantages
        * np.where(take_raw, 1.0, inside.astype(float))
        / (B * batch.old_probs)
    )
    dobj_dprobs = np.zeros_like(probs)
    dobj_dprobs[idx, batch.actions] += dsurr_dp
    dobj_dprobs += cfg.entropy_coeff * (-(logp + 1.0) / B)
    dstate, pol_grads = nets.policy.backward(policy_params, pi_cache, -dobj_dprobs)
    if nets.encoder is not None:
        dfeats = dstate[:, corr_dim:]
        _, enc_grads = nets.encoder.backward(policy_params, enc_cache, dfeats)
        pol_grads = accumulate_grads(pol_grads, enc_grads)

    dv = cfg.value_coeff * 2.0 * v_err / B
    _, val_grads = nets.value.backward(value_params, v_cache, dv)

    return PpoLossResult(
        loss=float(loss),
        policy_grads=pol_grads,
        value_grads=val_grads,
        surrogate=surrogate,
        value_mse=value_mse,
        entropy=entropy,
        clip_fraction=float(np.mean(~inside)),
    )


@dataclass
class PolicySnapshot:
    """A frozen copy of the shared policy that agents act from."""

    version: int
    params: ParamSet
    nets: NetBundle

    def action_probs(
        self, corr_features: np.ndarray, question: np.ndarray
    ) -> np.ndarray:
        """Action distribution for a batch of local observations."""
        if self.nets.encoder is not None:
            feats, _ = self.nets.encoder.forward(self.params, question)
        else:
            feats = question
        state = np.concatenate([corr_features, feats], axis=1)
        probs, _ = self.nets.policy.forward(self.params, state)
        return probs


@dataclass
class UpdateResult:
    status: str  # 'updated' | 'insufficient' | 'capped'
    batch_size: int = 0
    demo_count: int = 0
    demo_quota: int = 0
    loss: float = 0.0
    surrogate: float = 0.0
    value_mse: float = 0.0
    entropy: float = 0.0
    clip_fraction: float = 0.0
    version: int = 0


class Trainer:
    """Owns the networks, their optimizers, and the update loop."""

    def __init__(
        self,
        n_agents: int,
        corr_dim: int,
        question_dim: int,
        cfg: TrainerConfig | None = None,
        encoder_cfg: EncoderConfig | None = None,
        demos: DemoSet | None = None,
        seed: int = 0,
    ):
        if n_agents < 1:
            raise ConfigError(f"n_agents must be >= 1, got {n_agents}")
        self.cfg = cfg or TrainerConfig()
        self.n_agents = n_agents
        self.corr_dim = corr_dim
        self.question_dim = question_dim
        self.seed = seed
        self.demos = demos
        feature_dim = encoder_cfg.feature_dim if encoder_cfg else question_dim
        self.state_dim = corr_dim + feature_dim
        encoder = FeatureEncoder(encoder_cfg, prefix="enc") if encoder_cfg else None
        self.nets = NetBundle(
            encoder=encoder,
            policy=PolicyNet(self.state_dim, self.cfg.policy_hidden),
            value=ValueNet(n_agents * self.state_dim, self.cfg.value_hidden),
        )
        pol_rng = substream(seed, DOMAIN_PARAMS, 0)
        tensors = {} if encoder is None else encoder.init_params(pol_rng)
        tensors.update(self.nets.policy.init_params(pol_rng))
        self.policy_params = ParamSet(tensors)
        self.value_params = ParamSet(
            self.nets.value.init_params(substream(seed, DOMAIN_PARAMS, 1))
        )
        self.policy_opt = Adam(self.cfg.lr_policy)
        self.value_opt = Adam(self.cfg.lr_value)
        self.buffer = ExperienceBuffer(n_agents)
        self.update_index = 1  # 1-based divisor for the demo quota
        self.updates_done = 0
        self.history: list[UpdateResult] = []

    # -- inference helpers -------------------------------------------------

    def snapshot(self) -> PolicySnapshot:
        return PolicySnapshot(
            version=self.policy_params.version,
            params=self.policy_params,
            nets=self.nets,
        )

    def _global_states(self, corr: np.ndarray, question: np.ndarray) -> np.ndarray:
        """(T, N, *) observations -> (T, global_dim) critic inputs."""
        T = corr.shape[0]
        q_flat = question.reshape(T * self.n_agents, -1)
        if self.nets.encoder is not None:
            feats, _ = self.nets.encoder.forward(self.policy_params, q_flat)
        else:
            feats = q_flat
        per = np.concatenate([corr.reshape(T * self.n_agents, -1), feats], axis=1)
        return per.reshape(T, -1)

    def values_of(self, corr: np.ndarray, question: np.ndarray) -> np.ndarray:
        gstate = self._global_states(corr, question)
        return self.nets.value.forward(self.value_params, gstate)[0]

    # -- batch assembly ----------------------------------------------------

    def _flatten_segment(self, seg: Segment) -> PpoBatch:
        """GAE + flattening for one segment under the current critic."""
        T, N = seg.steps, seg.n_agents
        corr_all = np.concatenate([seg.corr, seg.final_corr[None]], axis=0)
        q_all = np.concatenate([seg.question, seg.final_question[None]], axis=0)
        values = self.values_of(corr_all, q_all)  # (T+1,)
        adv = np.stack(
            [
                compute_gae(
                    seg.rewards[:, n],
                    values[:T],
                    values[T],
                    self.cfg.gamma,
                    self.cfg.gae_lambda,
                )
                for n in range(N)
            ],
            axis=1,
        )
        returns = adv + values[:T, None]
        gcorr = np.broadcast_to(
            seg.corr[:, None, :, :], (T, N) + seg.corr.shape[1:]
        ).reshape(T * N, N, -1)
        gq = np.broadcast_to(
            seg.question[:, None, :, :], (T, N) + seg.question.shape[1:]
        ).reshape(T * N, N, -1)
        return PpoBatch(
            corr=seg.corr.reshape(T * N, -1),
            question=seg.question.reshape(T * N, -1),
            actions=seg.actions.ravel(),
            old_probs=seg.probs.ravel(),
            advantages=adv.ravel(),
            returns=returns.ravel(),
            global_corr=np.ascontiguousarray(gcorr),
            global_question=np.ascontiguousarray(gq),
        )

    # -- the update --------------------------------------------------------

    def train_update(self) -> UpdateResult:
        """One PPO update over the pooled segments plus the demo quota.

        Requires every agent's pooled transition count to be strictly above
        ``min_agent_batch``; otherwise the pool is left to grow and the
        result reports ``insufficient``.
        """
        cfg = self.cfg
        if self.updates_done >= cfg.max_updates:
            return UpdateResult(status="capped", version=self.policy_params.version)
        counts = self.buffer.agent_counts()
        if not self.buffer.segments or min(counts) <= cfg.min_agent_batch:
            return UpdateResult(
                status="insufficient", version=self.policy_params.version
            )

        parts = [self._flatten_segment(seg) for seg in self.buffer.segments]
        quota = 0
        demo_count = 0
        if self.demos is not None and len(self.demos) > 0:
            quota = expert_quota(len(self.demos), self.update_index, cfg.min_demo_quota)
            if quota > cfg.min_demo_quota:
                rng = substream(self.seed, DOMAIN_TRAINER, self.update_index, 0)
                chosen = self.demos.sample(quota, rng)
                by_seg: dict[int, list[int]] = {}
                for si, t, n in chosen:
                    row = t * self.demos.segments[si].n_agents + n
                    by_seg.setdefault(si, []).append(row)
                for si in sorted(by_seg):
                    # GAE needs the whole segment under the current critic,
                    # even though only the sampled rows join the batch.
                    seg_batch = self._flatten_segment(self.demos.segments[si])
                    parts.append(seg_batch.take(np.array(sorted(by_seg[si]))))
                demo_count = len(chosen)

        batch = PpoBatch.concat(parts)
        if cfg.normalize_advantages:
            adv = batch.advantages
            batch.advantages = (adv - adv.mean()) / (adv.std() + 1e-8)

        B = len(batch)
        stats: list[PpoLossResult] = []
        for epoch in range(cfg.epochs):
            order = substream(
                self.seed, DOMAIN_TRAINER, self.update_index, 1 + epoch
            ).permutation(B)
            for start in range(0, B, cfg.minibatch_size):
                take = order[start : start + cfg.minibatch_size]
                result = ppo_loss(
                    self.nets,
                    self.policy_params,
                    self.value_params,
                    batch.take(take),
                    cfg,
                )
                self.policy_params = self.policy_opt.step(
                    self.policy_params, result.policy_grads
                )
                self.value_params = self.value_opt.step(
                    self.value_params, result.value_grads
                )
                stats.append(result)

        self.update_index += 1
        self.updates_done += 1
        self.buffer.clear_pool()
        out = UpdateResult(
            status="updated",
            batch_size=B,
            demo_count=demo_count,
            demo_quota=quota,
            loss=float(np.mean([s.loss for s in stats])),
            surrogate=float(np.mean([s.surrogate for s in stats])),
            value_mse=float(np.mean([s.value_mse for s in stats])),
            entropy=float(np.mean([s.entropy for s in stats])),
            clip_fraction=float(np.mean([s.clip_fraction for s in stats])),
            version=self.policy_params.version,
        )
        self.history.append(out)
        return out


@dataclass
class AgentHandle:
    """One agent's view of the shared policy: its index and held version."""

    index: int
    version: int


class RolloutDriver:
    """Synchronous collection: act, record, and train at segment boundaries.

    The driver enforces the centralized-training contract: every agent must
    hold the current policy version when asked to act, and each successful
    update refreshes all agents at once.
    """

    def __init__(self, trainer: Trainer, seed: int | None = None):
        self.trainer = trainer
        self.seed = trainer.seed if seed is None else seed
        self.snapshot = trainer.snapshot()
        self.agents = [
            AgentHandle(index=i, version=self.snapshot.version)
            for i in range(trainer.n_agents)
        ]

    def begin_slot(
        self, corr: np.ndarray, question: np.ndarray
    ) -> UpdateResult | None:
        """Hand off a full segment (using this slot's observation as the
        bootstrap state) and attempt a train update."""
        buffer = self.trainer.buffer
        if buffer.pending_steps >= self.trainer.cfg.min_agent_batch:
            buffer.hand_off(corr, question)
            result = self.trainer.train_update()
            if result.status == "updated":
                self.snapshot = self.trainer.snapshot()
                for handle in self.agents:
                    handle.version = self.snapshot.version
            return result
        return None

    def choose(
        self,
        corr: np.ndarray,
        question: np.ndarray,
        decision_keys,
        sample: bool = True,
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pick one action per agent; returns (actions, taken probs, dists).

        ``decision_keys`` supplies one non-negative integer per agent keying
        that agent's decision stream (e.g. the request id), so identical
        observations draw identical exploration noise across runs.
        """
        for handle in self.agents:
            if handle.version != self.snapshot.version:
                raise RuntimeError(
                    f"agent {handle.index} holds policy version {handle.version}, "
                    f"expected {self.snapshot.version}; agents must resync "
                    "after every update"
                )
        dists = self.snapshot.action_probs(corr, question)
        actions = np.zeros(len(self.agents), dtype=int)
        probs = np.zeros(len(self.agents))
        for handle in self.agents:
            n = handle.index
            if sample:
                rng = substream(self.seed, DOMAIN_POLICY, int(decision_keys[n]), n)
                actions[n] = 0 if rng.random() < dists[n, 0] else 1
            else:
                actions[n] = int(np.argmax(dists[n]))
            probs[n] = dists[n, actions[n]]
        return actions, probs, dists

    def record(
        self,
        corr: np.ndarray,
        question: np.ndarray,
        actions: np.ndarray,
        probs: np.ndarray,
        rewards: np.ndarray,
    ) -> None:
        self.trainer.buffer.record_slot(corr, question, actions, probs, rewards)
