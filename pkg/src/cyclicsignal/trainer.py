"""Clipped policy-gradient training with a behavior-cloning term and curriculum.

Episodes are collected one at a time with the recurrent state snapshotted at
every decision, so the update phase re-evaluates each record as a single step
(no backprop through time). Losses: clipped surrogate actor loss, squared
value error, and cross-entropy against the active rule-based controller's
per-phase labels. Terms with a zero coefficient stay out of the graph
entirely but are still reported.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Tensor, clip, exp, mean_, minimum, sum_
from .env import CyclicSignalEnv, N_ACTION_CLASSES, RewardWeights
from .errors import ConfigError, NonFiniteLossError
from .nn import Adam, clip_grad_norm
from .policy import PolicyDims, PolicyNet
from .sim import N_MOVEMENTS, N_PHASES, Bounds, FlowProfile
from .teachers import (
    GUIDE_ORDER,
    LinearTeacher,
    LogisticConfig,
    LogisticTeacher,
    FixedTimeTeacher,
    ScatsConfig,
    ScatsLikeTeacher,
    Teacher,
    TeacherKind,
    WebsterTeacher,
    plan_labels,
)

KEEP_CLASS = 2  # always-admissible fallback label


@dataclass(frozen=True)
class CurriculumStage:
    teacher: TeacherKind
    episodes: int | None  # None: open-ended, allowed for the last stage only


DEFAULT_CURRICULUM = (
    CurriculumStage(TeacherKind.LINEAR, 100),
    CurriculumStage(TeacherKind.LOGISTIC, 100),
    CurriculumStage(TeacherKind.SCATS_LIKE, None),
)


def validate_curriculum(stages) -> None:
    if not stages:
        raise ConfigError("curriculum needs at least one stage")
    last_rank = -1
    for i, stage in enumerate(stages):
        if stage.teacher not in GUIDE_ORDER:
            raise ConfigError(f"stage {i}: {stage.teacher} is not a guiding controller")
        rank = GUIDE_ORDER.index(stage.teacher)
        if rank <= last_rank:
            raise ConfigError(f"stage {i}: curriculum must advance, never repeat or go back")
        last_rank = rank
        if stage.episodes is None:
            if i != len(stages) - 1:
                raise ConfigError(f"stage {i}: only the last stage may be open-ended")
        elif stage.episodes < 1:
            raise ConfigError(f"stage {i}: episode count must be positive")


def curriculum_select(stages, episode: int) -> TeacherKind:
    """Teacher for a 0-based episode index; overflow sticks to the last stage."""
    remaining = episode
    for stage in stages:
        if stage.episodes is None or remaining < stage.episodes:
            return stage.teacher
        remaining -= stage.episodes
    return stages[-1].teacher


@dataclass
class TrainConfig:
    episodes: int = 300
    seed: int = 0
    gamma: float = 0.95
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 4
    minibatch: int = 64
    lr: float = 5e-4
    grad_clip: float = 5.0
    actor_coef: float = 1.0
    critic_coef: float = 1.0
    bc_coef: float = 0.5
    curriculum: tuple[CurriculumStage, ...] = DEFAULT_CURRICULUM
    episodes_per_update: int = 1
    entropy_coef: float = 0.0
    lr_final: float | None = None

    def __post_init__(self):
        validate_curriculum(self.curriculum)
        if self.episodes < 1:
            raise ConfigError("episodes must be positive")
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ConfigError("gamma and gae_lambda must lie in [0, 1]")
        if self.clip_eps <= 0:
            raise ConfigError("clip_eps must be positive")
        if self.actor_coef == 0 and self.critic_coef == 0 and self.bc_coef == 0:
            raise ConfigError("at least one loss coefficient must be nonzero")
        if self.episodes_per_update < 1:
            raise ConfigError("episodes_per_update must be positive")
        if self.entropy_coef < 0:
            raise ConfigError("entropy_coef must be nonnegative")
        if self.lr_final is not None and self.lr_final <= 0:
            raise ConfigError("lr_final must be positive when set")


def ablation_variants(cfg: TrainConfig) -> dict[str, TrainConfig]:
    """The four standard configurations sharing every other knob."""
    first = cfg.curriculum[0]
    return {
        "full": cfg,
        "no_bc": replace(cfg, bc_coef=0.0),
        "no_easy": replace(
            cfg, curriculum=(CurriculumStage(TeacherKind.SCATS_LIKE, None),)
        ),
        "no_advanced": replace(
            cfg,
            curriculum=(
                CurriculumStage(TeacherKind.LINEAR, first.episodes or 100),
                CurriculumStage(TeacherKind.LOGISTIC, None),
            ),
        ),
    }


def make_teacher(
    kind: TeacherKind,
    bounds: Bounds,
    lost_time: int,
    total_capacity_vph: float,
    window_s: int = 300,
) -> Teacher:
    """Instantiate a controller with demand-scale knobs tied to capacity."""
    if kind is TeacherKind.FIXED_TIME:
        return FixedTimeTeacher(bounds, lost_time)
    if kind is TeacherKind.WEBSTER:
        return WebsterTeacher(bounds, lost_time)
    if kind is TeacherKind.LINEAR:
        return LinearTeacher(bounds, lost_time, window_s=window_s)
    if kind is TeacherKind.LOGISTIC:
        cfg = LogisticConfig(
            midpoint_vph=0.6 * total_capacity_vph,
            width_vph=0.15 * total_capacity_vph,
            cmin_s=bounds.min_cycle,
            cmax_s=bounds.max_cycle,
        )
        return LogisticTeacher(bounds, lost_time, cfg)
    if kind is TeacherKind.SCATS_LIKE:
        cfg = ScatsConfig(
            breakpoints_vph=tuple(
                f * total_capacity_vph for f in (0.25, 0.45, 0.6, 0.85)
            ),
            saturation_flow_vph=total_capacity_vph,
        )
        return ScatsLikeTeacher(bounds, lost_time, cfg)
    raise ConfigError(f"unknown controller kind {kind}")


@dataclass
class Trajectory:
    """One episode's decisions, stacked. Recurrent state is pre-step."""

    movement: np.ndarray   # (T, 8, 3)
    phase: np.ndarray      # (T, 4, 3)
    mask: np.ndarray       # (T, 4, 3) bool
    hidden: np.ndarray     # (T, H)
    cell: np.ndarray       # (T, H)
    actions: np.ndarray    # (T, 4) int64
    log_probs: np.ndarray  # (T, 4) chosen-class log-probs at collection
    values: np.ndarray     # (T,)
    rewards: np.ndarray    # (T,)
    labels: np.ndarray     # (T, 4) int64 teacher classes, already mask-safe
    remapped: int = 0      # labels forced to "keep" because the mask barred them

    def __len__(self) -> int:
        return self.movement.shape[0]


def concat_trajectories(trajs: list[Trajectory]) -> Trajectory:
    if not trajs:
        raise ValueError("no trajectories to concatenate")
    return Trajectory(
        movement=np.concatenate([t.movement for t in trajs]),
        phase=np.concatenate([t.phase for t in trajs]),
        mask=np.concatenate([t.mask for t in trajs]),
        hidden=np.concatenate([t.hidden for t in trajs]),
        cell=np.concatenate([t.cell for t in trajs]),
        actions=np.concatenate([t.actions for t in trajs]),
        log_probs=np.concatenate([t.log_probs for t in trajs]),
        values=np.concatenate([t.values for t in trajs]),
        rewards=np.concatenate([t.rewards for t in trajs]),
        labels=np.concatenate([t.labels for t in trajs]),
        remapped=sum(t.remapped for t in trajs),
    )


def teacher_labels_for(
    teacher: Teacher, flows_vph: np.ndarray, env: CyclicSignalEnv, mask: np.ndarray
) -> tuple[np.ndarray, int]:
    """Per-phase classes toward the controller's target, remapped when masked."""
    expert = teacher.target_plan(flows_vph)
    labels = plan_labels(expert, env.plan)
    remapped = 0
    for p in range(N_PHASES):
        if not mask[p, labels[p]]:
            labels[p] = KEEP_CLASS
            remapped += 1
    return labels, remapped


def collect_episode(
    env: CyclicSignalEnv,
    policy: PolicyNet,
    teacher: Teacher,
    rng: np.random.Generator,
) -> Trajectory:
    obs = env.reset()
    h, c = policy.initial_state()
    movement, phase, masks, hs, cs = [], [], [], [], []
    actions, logps, values, rewards, labels = [], [], [], [], []
    remapped = 0
    while not env.done:
        mask = env.action_mask()
        lab, n_rem = teacher_labels_for(
            teacher, obs.movement_features[:, 0], env, mask
        )
        choice = policy.act(
            obs.movement_features, obs.phase_features, mask, h, c, rng=rng
        )
        movement.append(obs.movement_features)
        phase.append(obs.phase_features)
        masks.append(mask)
        hs.append(h)
        cs.append(c)
        actions.append(choice.action)
        logps.append(choice.log_probs)
        values.append(choice.value)
        labels.append(lab)
        remapped += n_rem
        obs, reward, _, _ = env.step(choice.action)
        rewards.append(reward)
        h, c = choice.hidden, choice.cell
    return Trajectory(
        movement=np.stack(movement),
        phase=np.stack(phase),
        mask=np.stack(masks),
        hidden=np.stack(hs),
        cell=np.stack(cs),
        actions=np.stack(actions),
        log_probs=np.stack(logps),
        values=np.asarray(values, dtype=np.float64),
        rewards=np.asarray(rewards, dtype=np.float64),
        labels=np.stack(labels),
        remapped=remapped,
    )


def gae_advantages(
    rewards: np.ndarray, values: np.ndarray, gamma: float, lam: float
) -> tuple[np.ndarray, np.ndarray]:
    """Raw generalized advantages and returns; terminal bootstrap is zero."""
    n = len(rewards)
    adv = np.zeros(n)
    running = 0.0
    for t in reversed(range(n)):
        next_value = values[t + 1] if t + 1 < n else 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
    return adv, adv + values


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def _onehot(indices: np.ndarray, n_classes: int) -> np.ndarray:
    out = np.zeros(indices.shape + (n_classes,))
    np.put_along_axis(out, indices[..., None], 1.0, axis=-1)
    return out


@dataclass
class LossBreakdown:
    actor: float
    critic: float
    bc: float
    total: float
    grad_norm: float = 0.0


def compute_losses(
    policy: PolicyNet,
    movement: np.ndarray,
    phase: np.ndarray,
    mask: np.ndarray,
    hidden: np.ndarray,
    cell: np.ndarray,
    actions: np.ndarray,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
    labels: np.ndarray,
    clip_eps: float,
) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """Actor, critic, and cloning losses plus the mean policy entropy."""
    logits, value, _, _ = policy.forward(movement, phase, hidden, cell)
    logp = policy.masked_log_probs(logits, mask)  # (B, 4, 3)

    chosen = _onehot(actions, N_ACTION_CLASSES)
    new_joint = sum_(logp * Tensor(chosen), axis=(1, 2))        # (B,)
    old_joint = old_log_probs.sum(axis=1)
    ratio = exp(new_joint - Tensor(old_joint))
    adv = Tensor(advantages)
    surrogate = minimum(ratio * adv, clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv)
    actor_loss = -mean_(surrogate)

    err = value - Tensor(returns)
    critic_loss = mean_(err * err)

    label_hot = _onehot(labels, N_ACTION_CLASSES)
    batch = movement.shape[0]
    bc_loss = -sum_(logp * Tensor(label_hot)) * (1.0 / (batch * N_PHASES))

    # exp underflows to exactly zero on masked classes, so they drop out
    entropy = -sum_(exp(logp) * logp) * (1.0 / (batch * N_PHASES))
    return actor_loss, critic_loss, bc_loss, entropy


def update(
    policy: PolicyNet,
    optimizer: Adam,
    traj: Trajectory,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> LossBreakdown:
    """Several epochs of minibatch steps over one collected batch.

    The combined objective only contains terms with nonzero coefficients;
    zero-coefficient losses are still evaluated for the report. A non-finite
    combined loss aborts before backward, leaving parameters untouched.
    """
    adv_raw, returns = gae_advantages(traj.rewards, traj.values, cfg.gamma, cfg.gae_lambda)
    advantages = normalize_advantages(adv_raw)
    n = len(traj)
    sums = np.zeros(4)
    grad_norms = []
    steps = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.minibatch):
            idx = order[start : start + cfg.minibatch]
            la, lc, lb, ent = compute_losses(
                policy,
                traj.movement[idx],
                traj.phase[idx],
                traj.mask[idx],
                traj.hidden[idx],
                traj.cell[idx],
                traj.actions[idx],
                traj.log_probs[idx],
                advantages[idx],
                returns[idx],
                traj.labels[idx],
                cfg.clip_eps,
            )
            total: Tensor | None = None
            terms = (
                (la, cfg.actor_coef),
                (lc, cfg.critic_coef),
                (lb, cfg.bc_coef),
                (ent, -cfg.entropy_coef),  # bonus: higher entropy lowers the loss
            )
            for loss, coef in terms:
                if coef == 0.0:
                    continue
                term = loss * coef
                total = term if total is None else total + term
            assert total is not None  # config guarantees a nonzero coefficient
            if not np.isfinite(total.item()):
                raise NonFiniteLossError(
                    f"non-finite combined loss {total.item()} "
                    f"(actor={la.item()}, critic={lc.item()}, bc={lb.item()})"
                )
            policy.zero_grad()
            total.backward()
            grad_norms.append(clip_grad_norm(policy.parameters(), cfg.grad_clip))
            optimizer.step()
            sums += (la.item(), lc.item(), lb.item(), total.item())
            steps += 1
    mean = sums / steps
    return LossBreakdown(
        actor=mean[0],
        critic=mean[1],
        bc=mean[2],
        total=mean[3],
        grad_norm=float(np.mean(grad_norms)),
    )


def anneal_lr(lr0: float, lr1: float, frac: float) -> float:
    """Cosine interpolation from lr0 (frac 0) down to lr1 (frac 1)."""
    return lr1 + 0.5 * (lr0 - lr1) * (1.0 + math.cos(math.pi * frac))


@dataclass
class TrainLogRow:
    episode: int
    teacher: str
    records: int
    mean_reward: float
    actor_loss: float
    critic_loss: float
    bc_loss: float
    total_loss: float
    grad_norm: float
    remapped_labels: int


HISTORY_HEADER = (
    "episode", "teacher", "records", "mean_reward", "actor_loss",
    "critic_loss", "bc_loss", "total_loss", "grad_norm", "remapped_labels",
)


def write_history(path, rows: list[TrainLogRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_HEADER)
        for r in rows:
            w.writerow(
                [r.episode, r.teacher, r.records, format(r.mean_reward, ".10g"),
                 format(r.actor_loss, ".10g"), format(r.critic_loss, ".10g"),
                 format(r.bc_loss, ".10g"), format(r.total_loss, ".10g"),
                 format(r.grad_norm, ".10g"), r.remapped_labels]
            )


@dataclass
class TrainResult:
    policy: PolicyNet
    history: list[TrainLogRow]
    config: TrainConfig


def train(
    cfg: TrainConfig,
    patterns: list[FlowProfile],
    capacity_vph: float | np.ndarray = 450.0,
    bounds: Bounds | None = None,
    lost_time: int = 4,
    window_s: int = 300,
    initial_durations: tuple[int, int, int, int] = (25, 25, 25, 25),
    weights: RewardWeights | None = None,
    present: np.ndarray | None = None,
    dims: PolicyDims | None = None,
    policy: PolicyNet | None = None,
    out_dir=None,
    checkpoint_every: int = 0,
    progress=None,
) -> TrainResult:
    """Full training loop: curriculum-guided collection then minibatch updates.

    All randomness (network init, action sampling, per-episode simulator
    seeds, minibatch shuffling) descends from cfg.seed through spawned
    seed sequences, so runs are reproducible end to end.
    """
    if not patterns:
        raise ConfigError("need at least one training flow pattern")
    bounds = bounds or Bounds()
    ss = np.random.SeedSequence(cfg.seed)
    policy_ss, action_ss, shuffle_ss, env_ss = ss.spawn(4)
    if policy is None:
        policy = PolicyNet(dims, seed=int(policy_ss.generate_state(1)[0]))
    action_rng = np.random.default_rng(action_ss)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    episode_seeds = [int(child.generate_state(1)[0]) for child in env_ss.spawn(cfg.episodes)]

    if present is None:
        present = np.ones(N_MOVEMENTS, dtype=bool)
    cap = np.asarray(capacity_vph, dtype=np.float64)
    if cap.ndim == 0:
        cap = np.full(N_MOVEMENTS, float(cap))
    total_capacity = float(cap[np.asarray(present, dtype=bool)].sum())

    teachers: dict[TeacherKind, Teacher] = {}
    optimizer = Adam(policy.parameters(), lr=cfg.lr)
    history: list[TrainLogRow] = []

    n_updates = math.ceil(cfg.episodes / cfg.episodes_per_update)
    episode = 0
    for update_idx in range(n_updates):
        if cfg.lr_final is not None and n_updates > 1:
            optimizer.lr = anneal_lr(cfg.lr, cfg.lr_final, update_idx / (n_updates - 1))
        chunk: list[Trajectory] = []
        for _ in range(min(cfg.episodes_per_update, cfg.episodes - episode)):
            kind = curriculum_select(cfg.curriculum, episode)
            teacher = teachers.get(kind)
            if teacher is None:
                teacher = make_teacher(kind, bounds, lost_time, total_capacity, window_s)
                teachers[kind] = teacher
            env = CyclicSignalEnv(
                patterns[episode % len(patterns)],
                bounds=bounds,
                initial_durations=initial_durations,
                lost_time=lost_time,
                capacity_vph=cap,
                present=present,
                observation_window_s=window_s,
                weights=weights,
                seed=episode_seeds[episode],
            )
            chunk.append(collect_episode(env, policy, teacher, action_rng))
            episode += 1
        traj = chunk[0] if len(chunk) == 1 else concat_trajectories(chunk)
        losses = update(policy, optimizer, traj, cfg, shuffle_rng)
        row = TrainLogRow(
            episode=episode - 1,
            teacher=kind.name.lower(),
            records=len(traj),
            mean_reward=float(traj.rewards.mean()),
            actor_loss=losses.actor,
            critic_loss=losses.critic,
            bc_loss=losses.bc,
            total_loss=losses.total,
            grad_norm=losses.grad_norm,
            remapped_labels=traj.remapped,
        )
        history.append(row)
        if progress is not None:
            progress(row)
        if out_dir is not None and checkpoint_every > 0 and episode % checkpoint_every == 0:
            policy.save(f"{out_dir}/checkpoint_ep{episode:04d}.npz")

    if out_dir is not None:
        policy.save(f"{out_dir}/policy_final.npz")
        write_history(f"{out_dir}/history.csv", history)
    return TrainResult(policy=policy, history=history, config=cfg)


def evaluate_bc(
    policy: PolicyNet,
    patterns: list[FlowProfile],
    teacher: Teacher,
    seeds,
    capacity_vph: float | np.ndarray = 450.0,
    bounds: Bounds | None = None,
    lost_time: int = 4,
    window_s: int = 300,
    initial_durations: tuple[int, int, int, int] = (25, 25, 25, 25),
    weights: RewardWeights | None = None,
) -> float:
    """Mean cloning loss of the greedy policy on held-out episodes."""
    bounds = bounds or Bounds()
    total = 0.0
    count = 0
    for pattern, seed in zip(patterns, seeds):
        env = CyclicSignalEnv(
            pattern,
            bounds=bounds,
            initial_durations=initial_durations,
            lost_time=lost_time,
            capacity_vph=capacity_vph,
            observation_window_s=window_s,
            weights=weights,
            seed=int(seed),
        )
        obs = env.reset()
        h, c = policy.initial_state()
        while not env.done:
            mask = env.action_mask()
            labels, _ = teacher_labels_for(
                teacher, obs.movement_features[:, 0], env, mask
            )
            logits, _, h2, c2 = policy.forward(
                obs.movement_features[None], obs.phase_features[None], h[None], c[None]
            )
            logp = policy.masked_log_probs(logits, mask[None]).data[0]
            total += -float(logp[np.arange(N_PHASES), labels].sum()) / N_PHASES
            count += 1
            action = logp.argmax(axis=1)
            obs, _, _, _ = env.step(action)
            h, c = h2.data[0], c2.data[0]
        if not env.trace:
            raise ConfigError("held-out pattern too short for a single cycle")
    return total / count
