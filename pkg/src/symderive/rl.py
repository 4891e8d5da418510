"""Learners that pick the next rewrite rule.

Two learners share one action-selection interface: a tabular Q store updated
by one-step temporal differences, and a small softmax network trained on
expert traces. States are the fixed-length integer encodings from
:mod:`symderive.encoding`; actions are indices into a rule set.

Reward shape used by the derivation environment: reaching the goal pays
``GOAL_REWARD``, choosing a rule that matches nowhere pays
``INVALID_ACTION_REWARD`` and leaves the state unchanged, and every other
applied step pays ``STEP_REWARD`` so shorter derivations score higher.
"""

from __future__ import annotations

import random
from typing import Callable, NamedTuple, Protocol, Sequence

import numpy as np

from .encoding import FeatureVector, format_vector, parse_vector
from .errors import EmptyDataset, FileFormatError, NoApplicableAction

GOAL_REWARD = 1.0
INVALID_ACTION_REWARD = -1.0
STEP_REWARD = -0.01
DEFAULT_STEP_CAP = 50


class QTable:
    """Tabular action values keyed by feature vector.

    Unseen states read as all zeros without being inserted, so terminal
    states (which are read but never acted from) are never written.
    """

    def __init__(self, n_actions: int, gamma: float = 0.9, alpha: float = 0.5):
        if n_actions < 1:
            raise ValueError("n_actions must be positive")
        if not 0.0 <= gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {gamma}")
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1], got {alpha}")
        self.n_actions = n_actions
        self.gamma = gamma
        self.alpha = alpha
        self.entries: dict[FeatureVector, np.ndarray] = {}

    def values(self, state: FeatureVector) -> np.ndarray:
        """Q-values for a state; zeros (not stored) when the state is unseen."""
        row = self.entries.get(state)
        if row is None:
            return np.zeros(self.n_actions)
        return row

    def _row(self, state: FeatureVector) -> np.ndarray:
        row = self.entries.get(state)
        if row is None:
            row = np.zeros(self.n_actions)
            self.entries[state] = row
        return row

    def __len__(self) -> int:
        return len(self.entries)


def q_update(
    qtable: QTable, s: FeatureVector, a: int, r: float, s_next: FeatureVector, terminal: bool = False
) -> QTable:
    """One temporal-difference backup:
    Q(s,a) <- (1 - alpha) * Q(s,a) + alpha * (r + gamma * max_a' Q(s',a')).

    With alpha = 1 this is the plain one-step Bellman assignment. Pass
    terminal=True when the transition ended the episode for real (goal or
    dead end): the backup then uses the bare reward. Episodes cut off by the
    step cap are truncations, not terminals, and should keep bootstrapping.
    """
    row = qtable._row(s)
    bootstrap = 0.0 if terminal else qtable.gamma * float(np.max(qtable.values(s_next)))
    row[a] = (1.0 - qtable.alpha) * row[a] + qtable.alpha * (r + bootstrap)
    return qtable


class PolicyModel:
    """One-hidden-layer softmax network over encoded states.

    Built from scratch on numpy: x -> tanh(x W1 + b1) -> softmax(h W2 + b2).
    Weights are float64; ``create`` draws them uniformly from
    [-init_scale, init_scale] with a seeded generator, ``zeros`` starts flat
    (every action equally likely, handy as a known baseline).
    """

    def __init__(self, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray, b2: np.ndarray, step_size: float = 0.1):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = np.asarray(b2, dtype=np.float64)
        if self.w1.ndim != 2 or self.w2.ndim != 2:
            raise ValueError("weight matrices must be 2-d")
        if self.w1.shape[1] != self.b1.shape[0] or self.w2.shape[0] != self.w1.shape[1]:
            raise ValueError("layer shapes do not line up")
        if self.w2.shape[1] != self.b2.shape[0]:
            raise ValueError("layer shapes do not line up")
        self.step_size = float(step_size)

    @property
    def n_inputs(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def n_actions(self) -> int:
        return self.w2.shape[1]

    @classmethod
    def create(
        cls,
        n_inputs: int,
        n_actions: int,
        hidden: int = 64,
        seed: int = 0,
        step_size: float = 0.1,
        init_scale: float = 0.1,
    ) -> "PolicyModel":
        rng = np.random.default_rng(seed)
        w1 = rng.uniform(-init_scale, init_scale, (n_inputs, hidden))
        b1 = rng.uniform(-init_scale, init_scale, hidden)
        w2 = rng.uniform(-init_scale, init_scale, (hidden, n_actions))
        b2 = rng.uniform(-init_scale, init_scale, n_actions)
        return cls(w1, b1, w2, b2, step_size)

    @classmethod
    def zeros(cls, n_inputs: int, n_actions: int, hidden: int = 64, step_size: float = 0.1) -> "PolicyModel":
        return cls(
            np.zeros((n_inputs, hidden)),
            np.zeros(hidden),
            np.zeros((hidden, n_actions)),
            np.zeros(n_actions),
            step_size,
        )

    def forward_batch(self, states: np.ndarray) -> np.ndarray:
        h = np.tanh(states @ self.w1 + self.b1)
        return _softmax_rows(h @ self.w2 + self.b2)

    def forward(self, state: Sequence[int]) -> np.ndarray:
        x = np.asarray(state, dtype=np.float64)
        if x.shape != (self.n_inputs,):
            raise ValueError(f"state has length {x.shape}, model expects {self.n_inputs}")
        return self.forward_batch(x[None, :])[0]


def policy_forward(model: PolicyModel, state: Sequence[int]) -> np.ndarray:
    """Action probabilities for one encoded state (sums to 1)."""
    return model.forward(state)


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class TraceSample(NamedTuple):
    state: FeatureVector
    action: int


def cross_entropy_and_grads(
    model: PolicyModel, states: np.ndarray, actions: np.ndarray
) -> tuple[float, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
    """Mean cross-entropy of the expert actions and its exact gradients.

    Returned gradients are (dw1, db1, dw2, db2), each the derivative of the
    mean loss. Kept separate from the training loop so the analytic gradients
    can be checked against finite differences.
    """
    n = states.shape[0]
    z1 = states @ model.w1 + model.b1
    h = np.tanh(z1)
    probs = _softmax_rows(h @ model.w2 + model.b2)
    picked = probs[np.arange(n), actions]
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())

    dz2 = probs.copy()
    dz2[np.arange(n), actions] -= 1.0
    dz2 /= n
    dw2 = h.T @ dz2
    db2 = dz2.sum(axis=0)
    dh = dz2 @ model.w2.T
    dz1 = dh * (1.0 - h * h)
    dw1 = states.T @ dz1
    db1 = dz1.sum(axis=0)
    return loss, (dw1, db1, dw2, db2)


def policy_train(
    model: PolicyModel,
    samples: Sequence[TraceSample],
    epochs: int,
    step_size: float | None = None,
) -> list[float]:
    """Full-batch gradient descent on expert (state, action) pairs.

    Updates the model in place and returns the loss measured at the start of
    each epoch (so losses[0] is the untrained loss).
    """
    if not samples:
        raise EmptyDataset("policy_train received no samples")
    lr = model.step_size if step_size is None else float(step_size)
    states = np.asarray([s.state for s in samples], dtype=np.float64)
    actions = np.asarray([s.action for s in samples], dtype=np.int64)
    if actions.min() < 0 or actions.max() >= model.n_actions:
        raise ValueError("sample action index out of range")
    losses: list[float] = []
    for _ in range(epochs):
        loss, (dw1, db1, dw2, db2) = cross_entropy_and_grads(model, states, actions)
        losses.append(loss)
        model.w1 -= lr * dw1
        model.b1 -= lr * db1
        model.w2 -= lr * dw2
        model.b2 -= lr * db2
    return losses


def top1_accuracy(model: PolicyModel, samples: Sequence[TraceSample]) -> float:
    """Fraction of samples whose expert action is the model's argmax."""
    if not samples:
        raise EmptyDataset("no samples to score")
    states = np.asarray([s.state for s in samples], dtype=np.float64)
    actions = np.asarray([s.action for s in samples], dtype=np.int64)
    predicted = model.forward_batch(states).argmax(axis=1)
    return float((predicted == actions).mean())


# ---------------------------------------------------------------------------
# action selection


def select_action(
    learner: "QTable | PolicyModel",
    state: FeatureVector,
    mask: Sequence[bool] | None = None,
    mode: str = "greedy",
    epsilon: float = 0.1,
    rng: random.Random | None = None,
) -> int:
    """Choose an action index under a mode: 'greedy' (ties to the lowest
    index), 'epsilon' (uniform over allowed actions with probability
    epsilon, else greedy), or 'sample' (draw from the policy's renormalized
    probabilities; policy models only).

    ``mask`` marks allowed actions; all-false raises NoApplicableAction.
    """
    if isinstance(learner, QTable):
        scores = learner.values(state)
        if mode == "sample":
            raise ValueError("mode 'sample' needs a policy model, not a Q-table")
    else:
        scores = learner.forward(state)
    n = len(scores)
    if mask is None:
        allowed = list(range(n))
    else:
        if len(mask) != n:
            raise ValueError(f"mask has length {len(mask)}, expected {n}")
        allowed = [i for i, ok in enumerate(mask) if ok]
        if not allowed:
            raise NoApplicableAction("every action is masked out")
    if mode == "epsilon":
        if rng is None:
            raise ValueError("mode 'epsilon' needs an rng")
        if rng.random() < epsilon:
            return allowed[rng.randrange(len(allowed))]
        mode_now = "greedy"
    elif mode == "sample":
        if rng is None:
            raise ValueError("mode 'sample' needs an rng")
        weights = [float(scores[i]) for i in allowed]
        total = sum(weights)
        if total <= 0.0:
            return allowed[rng.randrange(len(allowed))]
        pick = rng.random() * total
        acc = 0.0
        for i, w in zip(allowed, weights):
            acc += w
            if pick < acc:
                return i
        return allowed[-1]
    elif mode == "greedy":
        mode_now = "greedy"
    else:
        raise ValueError(f"unknown selection mode {mode!r}")
    # greedy: first index achieving the maximum among allowed actions
    best = allowed[0]
    best_score = scores[best]
    for i in allowed[1:]:
        if scores[i] > best_score:
            best, best_score = i, scores[i]
    return best


class _Env(Protocol):
    done: bool

    def state_vector(self) -> FeatureVector: ...

    def applicable_mask(self) -> list[bool]: ...

    def env_step(self, action: int) -> tuple[FeatureVector, float, bool]: ...


def q_learn(
    env_factory: Callable[[int], _Env],
    n_actions: int,
    episodes: int,
    gamma: float = 0.9,
    alpha: float = 0.5,
    epsilon: float = 0.1,
    seed: int = 0,
    masked: bool = False,
) -> QTable:
    """Epsilon-greedy Q-learning over environments from env_factory(episode).

    With masked=False the agent explores the full action set, including
    inapplicable rules (their negative reward is how it learns to avoid
    them); masked=True restricts exploration to applicable rules.

    An episode that ends with outcome "cap_exceeded" is treated as truncated
    (its last backup still bootstraps); any other ending is a real terminal.
    """
    rng = random.Random(seed)
    qtable = QTable(n_actions, gamma=gamma, alpha=alpha)
    for episode in range(episodes):
        env = env_factory(episode)
        state = env.state_vector()
        while not env.done:
            mask = env.applicable_mask() if masked else None
            action = select_action(qtable, state, mask, "epsilon", epsilon, rng)
            next_state, reward, done = env.env_step(action)
            terminal = done and getattr(env, "outcome", None) != "cap_exceeded"
            q_update(qtable, state, action, reward, next_state, terminal)
            state = next_state
    return qtable


# ---------------------------------------------------------------------------
# persistence


_POLICY_MAGIC = "symderive-policy v1"
_QTABLE_MAGIC = "symderive-qtable v1"


def save_policy(model: PolicyModel, path: str, seed: int, rules_hash: str) -> None:
    """Write a checkpoint: shape header, the hash of the rule set whose action
    order the model was trained against, then every weight in a fixed order."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_POLICY_MAGIC + "\n")
        fh.write(f"n_inputs={model.n_inputs}\n")
        fh.write(f"hidden={model.hidden}\n")
        fh.write(f"n_actions={model.n_actions}\n")
        fh.write(f"step_size={model.step_size!r}\n")
        fh.write(f"seed={seed}\n")
        fh.write(f"rules_sha256={rules_hash}\n")
        fh.write("weights\n")
        for block in (model.w1, model.b1, model.w2, model.b2):
            for value in block.ravel():
                fh.write(repr(float(value)) + "\n")


def load_policy(path: str) -> tuple[PolicyModel, dict[str, str]]:
    """Read a checkpoint; returns (model, header metadata)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _POLICY_MAGIC:
        raise FileFormatError(f"{path} is not a policy checkpoint")
    meta: dict[str, str] = {}
    i = 1
    while i < len(lines) and lines[i] != "weights":
        key, sep, value = lines[i].partition("=")
        if not sep:
            raise FileFormatError(f"bad checkpoint header line: {lines[i]!r}")
        meta[key] = value
        i += 1
    if i >= len(lines):
        raise FileFormatError("checkpoint has no weights section")
    try:
        n_inputs = int(meta["n_inputs"])
        hidden = int(meta["hidden"])
        n_actions = int(meta["n_actions"])
        step_size = float(meta["step_size"])
    except (KeyError, ValueError) as exc:
        raise FileFormatError(f"bad checkpoint header: {exc}") from None
    flat = lines[i + 1 :]
    expected = n_inputs * hidden + hidden + hidden * n_actions + n_actions
    if len(flat) != expected:
        raise FileFormatError(f"checkpoint has {len(flat)} weights, expected {expected}")
    try:
        values = np.asarray([float(v) for v in flat], dtype=np.float64)
    except ValueError:
        raise FileFormatError("checkpoint contains a non-numeric weight") from None
    at = 0

    def take(count: int) -> np.ndarray:
        nonlocal at
        chunk = values[at : at + count]
        at += count
        return chunk

    w1 = take(n_inputs * hidden).reshape(n_inputs, hidden)
    b1 = take(hidden)
    w2 = take(hidden * n_actions).reshape(hidden, n_actions)
    b2 = take(n_actions)
    return PolicyModel(w1, b1, w2, b2, step_size), meta


def save_qtable(qtable: QTable, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_QTABLE_MAGIC + "\n")
        fh.write(f"n_actions={qtable.n_actions}\n")
        fh.write(f"gamma={qtable.gamma!r}\n")
        fh.write(f"alpha={qtable.alpha!r}\n")
        for state in sorted(qtable.entries):
            row = qtable.entries[state]
            fh.write(format_vector(state) + " : " + " ".join(repr(float(v)) for v in row) + "\n")


def load_qtable(path: str) -> QTable:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != _QTABLE_MAGIC:
        raise FileFormatError(f"{path} is not a Q-table dump")
    meta: dict[str, str] = {}
    body_start = 1
    for line in lines[1:]:
        if "=" not in line:
            break
        key, _, value = line.partition("=")
        meta[key] = value
        body_start += 1
    try:
        qtable = QTable(int(meta["n_actions"]), float(meta["gamma"]), float(meta["alpha"]))
    except (KeyError, ValueError) as exc:
        raise FileFormatError(f"bad Q-table header: {exc}") from None
    for line in lines[body_start:]:
        if not line.strip():
            continue
        left, sep, right = line.partition(" : ")
        if not sep:
            raise FileFormatError(f"bad Q-table line: {line!r}")
        state = parse_vector(left)
        row = np.asarray([float(v) for v in right.split()], dtype=np.float64)
        if row.shape[0] != qtable.n_actions:
            raise FileFormatError(f"Q-table row has {row.shape[0]} values, expected {qtable.n_actions}")
        qtable.entries[state] = row
    return qtable
