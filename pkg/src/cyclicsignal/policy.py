"""Actor-critic policy network over intersection observations.

Pipeline: per-feature embeddings of the 8 movement rows (sigmoid), pairwise
phase-competition block in the FRAP style (phase sums, ordered-pair concat,
1x1 conv, learned 4x4 competition mask, row sum), per-feature phase-context
embeddings, one LSTM step over the flattened phase vectors, then four
3-way actor heads (+5 / -5 / keep per phase) and a scalar critic.

Gradients come from the package's own reverse-mode tape; no framework.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import (
    Tensor,
    broadcast_to,
    concat,
    log_softmax,
    reshape,
    sigmoid,
    sum_,
    take,
    tanh,
)
from .errors import CheckpointError
from .nn import Linear, LSTMCell
from .sim import N_PHASES, PHASE_MOVEMENTS, PHASE_ORDER

N_MOVEMENT_FEATURES = 3   # flow, capacity, existence
N_PHASE_FEATURES = 3      # previous green, utilization, imbalance
N_ACTION_CLASSES = 3

# fixed input scaling so raw veh/h and seconds land near unit range
FLOW_SCALE = 1e-3
DURATION_SCALE = 1e-2
MASK_PENALTY = -1e9

CHECKPOINT_FORMAT = "cyclicsignal-policy"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PolicyDims:
    embed: int = 4         # per-feature embedding width
    frap: int = 16         # pair-competition feature width
    hidden: int = 64       # LSTM hidden size
    head_hidden: int = 64  # actor/critic hidden layer


@dataclass
class ActionChoice:
    action: np.ndarray        # (4,) classes
    log_probs: np.ndarray     # (4,) log-prob of the chosen class per phase
    value: float
    hidden: np.ndarray        # (H,)
    cell: np.ndarray          # (H,)

    @property
    def joint_log_prob(self) -> float:
        return float(self.log_probs.sum())


class PolicyNet:
    def __init__(self, dims: PolicyDims | None = None, seed: int = 0):
        self.dims = dims or PolicyDims()
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        d = self.dims

        self.movement_mlps = [
            Linear(rng, 1, d.embed, f"movement_embed{k}") for k in range(N_MOVEMENT_FEATURES)
        ]
        self.context_mlps = [
            Linear(rng, 1, d.embed, f"phase_context{k}") for k in range(N_PHASE_FEATURES)
        ]
        self.movement_dim = N_MOVEMENT_FEATURES * d.embed
        self.pair_conv = Linear(rng, 2 * self.movement_dim, d.frap, "pair_conv")
        # competition mask: 1.0 between distinct phases, 0.5 on the diagonal
        omega = np.ones((N_PHASES, N_PHASES))
        np.fill_diagonal(omega, 0.5)
        self.competition_mask = Tensor(omega, requires_grad=True)

        self.fused_dim = d.frap + N_PHASE_FEATURES * d.embed
        self.lstm = LSTMCell(rng, N_PHASES * self.fused_dim, d.hidden, "lstm")

        self.actor_heads = [
            (
                Linear(rng, d.hidden, d.head_hidden, f"actor{p}_hidden"),
                Linear(rng, d.head_hidden, N_ACTION_CLASSES, f"actor{p}_out"),
            )
            for p in range(N_PHASES)
        ]
        self.critic_hidden = Linear(rng, d.hidden, d.head_hidden, "critic_hidden")
        self.critic_out = Linear(rng, d.head_hidden, 1, "critic_out")

        # row index (0-based) of each phase's two member movements
        self._first_idx = np.array([PHASE_MOVEMENTS[p][0] - 1 for p in PHASE_ORDER])
        self._second_idx = np.array([PHASE_MOVEMENTS[p][1] - 1 for p in PHASE_ORDER])

    # -- parameters -------------------------------------------------------

    def parameters(self) -> list[tuple[str, Tensor]]:
        params: list[tuple[str, Tensor]] = []
        for layer in self.movement_mlps + self.context_mlps:
            params.extend(layer.parameters())
        params.extend(self.pair_conv.parameters())
        params.append(("competition_mask", self.competition_mask))
        params.extend(self.lstm.parameters())
        for l1, l2 in self.actor_heads:
            params.extend(l1.parameters())
            params.extend(l2.parameters())
        params.extend(self.critic_hidden.parameters())
        params.extend(self.critic_out.parameters())
        return params

    def zero_grad(self):
        for _, p in self.parameters():
            p.grad = None

    def initial_state(self) -> tuple[np.ndarray, np.ndarray]:
        """Zeroed (hidden, cell) pair carried across the episode's cycles."""
        h = np.zeros(self.dims.hidden)
        return h, h.copy()

    # -- network pieces ---------------------------------------------------

    def embed_movements(self, x: Tensor) -> Tensor:
        """(B, 8, 3) raw-scaled features -> (B, 8, 3*embed) sigmoid embeddings."""
        parts = []
        for k, layer in enumerate(self.movement_mlps):
            parts.append(sigmoid(layer(x[:, :, k : k + 1])))
        return concat(parts, axis=-1)

    def frap_block(self, e: Tensor) -> Tensor:
        """Phase competition over movement embeddings -> (B, 4, frap)."""
        phase = take(e, self._first_idx, axis=1) + take(e, self._second_idx, axis=1)
        b = phase.data.shape[0]
        dm = self.movement_dim
        left = broadcast_to(reshape(phase, (b, N_PHASES, 1, dm)), (b, N_PHASES, N_PHASES, dm))
        right = broadcast_to(reshape(phase, (b, 1, N_PHASES, dm)), (b, N_PHASES, N_PHASES, dm))
        pairs = concat([left, right], axis=-1)
        conv = self.pair_conv(pairs)  # 1x1 conv over the feature axis
        scaled = conv * reshape(self.competition_mask, (1, N_PHASES, N_PHASES, 1))
        return sum_(scaled, axis=2)   # sum over the partner phase

    def embed_phase_context(self, x: Tensor) -> Tensor:
        """(B, 4, 3) scaled context -> (B, 4, 3*embed), linear per feature."""
        parts = []
        for k, layer in enumerate(self.context_mlps):
            parts.append(layer(x[:, :, k : k + 1]))
        return concat(parts, axis=-1)

    def recurrent_step(self, fused: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        return self.lstm.step(fused, h, c)

    def heads(self, h: Tensor) -> tuple[Tensor, Tensor]:
        """Hidden state -> ((B, 4, 3) logits, (B,) value)."""
        b = h.data.shape[0]
        rows = []
        for l1, l2 in self.actor_heads:
            z = l2(tanh(l1(h)))
            rows.append(reshape(z, (b, 1, N_ACTION_CLASSES)))
        logits = concat(rows, axis=1)
        v = self.critic_out(tanh(self.critic_hidden(h)))
        return logits, reshape(v, (b,))

    @staticmethod
    def scale_inputs(movement: np.ndarray, phase: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mov = np.asarray(movement, dtype=np.float64) * np.array([FLOW_SCALE, FLOW_SCALE, 1.0])
        ph = np.asarray(phase, dtype=np.float64) * np.array([DURATION_SCALE, 1.0, 1.0])
        return mov, ph

    def forward(
        self,
        movement: np.ndarray,
        phase: np.ndarray,
        h: np.ndarray,
        c: np.ndarray,
    ) -> tuple[Tensor, Tensor, Tensor, Tensor]:
        """Batched single-cycle forward. movement (B,8,3), phase (B,4,3), h/c (B,H)."""
        mov, ph = self.scale_inputs(movement, phase)
        e = self.embed_movements(Tensor(mov))
        pf = self.frap_block(e)
        pc = self.embed_phase_context(Tensor(ph))
        fused = concat([pf, pc], axis=-1)
        b = fused.data.shape[0]
        flat = reshape(fused, (b, N_PHASES * self.fused_dim))
        h2, c2 = self.recurrent_step(flat, Tensor(h), Tensor(c))
        logits, value = self.heads(h2)
        return logits, value, h2, c2

    @staticmethod
    def masked_log_probs(logits: Tensor, mask: np.ndarray) -> Tensor:
        """Additively bury masked classes, then log-softmax per phase row."""
        penalty = np.where(np.asarray(mask, dtype=bool), 0.0, MASK_PENALTY)
        return log_softmax(logits + Tensor(penalty), axis=-1)

    # -- acting -----------------------------------------------------------

    def act(
        self,
        movement: np.ndarray,
        phase: np.ndarray,
        mask: np.ndarray,
        h: np.ndarray,
        c: np.ndarray,
        rng: np.random.Generator | None = None,
        greedy: bool = False,
    ) -> ActionChoice:
        """One decision for one observation; samples unless greedy."""
        logits, value, h2, c2 = self.forward(
            movement[None], phase[None], h[None], c[None]
        )
        logp = self.masked_log_probs(logits, mask[None]).data[0]  # (4, 3)
        action = np.zeros(N_PHASES, dtype=np.int64)
        chosen = np.zeros(N_PHASES)
        for p in range(N_PHASES):
            if greedy:
                a = int(np.argmax(logp[p]))
            else:
                if rng is None:
                    raise ValueError("sampling requires an rng; pass greedy=True otherwise")
                probs = np.exp(logp[p])
                probs = probs / probs.sum()
                a = int(rng.choice(N_ACTION_CLASSES, p=probs))
            action[p] = a
            chosen[p] = logp[p, a]
        return ActionChoice(
            action=action,
            log_probs=chosen,
            value=float(value.data[0]),
            hidden=h2.data[0].copy(),
            cell=c2.data[0].copy(),
        )

    # -- checkpoints ------------------------------------------------------

    def save(self, path) -> None:
        """Versioned container of named float64 tensors; round-trips bit-exactly."""
        meta = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "dims": asdict(self.dims),
            "seed": self.seed,
        }
        arrays = {name: p.data for name, p in self.parameters()}
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)

    @classmethod
    def load(cls, path) -> "PolicyNet":
        try:
            with np.load(path) as data:
                if "__meta__" not in data:
                    raise CheckpointError(f"{path}: not a policy checkpoint (no header)")
                meta = json.loads(bytes(data["__meta__"]).decode())
                if meta.get("format") != CHECKPOINT_FORMAT:
                    raise CheckpointError(f"{path}: wrong format {meta.get('format')!r}")
                if meta.get("version") != CHECKPOINT_VERSION:
                    raise CheckpointError(
                        f"{path}: version {meta.get('version')} unsupported "
                        f"(expected {CHECKPOINT_VERSION})"
                    )
                net = cls(PolicyDims(**meta["dims"]), seed=meta.get("seed", 0))
                for name, p in net.parameters():
                    if name not in data:
                        raise CheckpointError(f"{path}: missing tensor {name}")
                    stored = data[name]
                    if stored.shape != p.data.shape:
                        raise CheckpointError(
                            f"{path}: tensor {name} has shape {stored.shape}, "
                            f"expected {p.data.shape}"
                        )
                    p.data = stored.astype(np.float64)
        except (OSError, ValueError, KeyError) as exc:
            raise CheckpointError(f"{path}: unreadable checkpoint: {exc}") from exc
        return net

    def parameter_checksum(self) -> str:
        import hashlib

        digest = hashlib.sha256()
        for name, p in self.parameters():
            digest.update(name.encode())
            digest.update(p.data.tobytes())
        return digest.hexdigest()
