"""Goal-directed derivation: environment, rollouts, traces, search oracle.

A derivation episode starts from a formula and tries to reach a goal — an
exact target tree, or a pattern the final tree must match at the root — by
repeatedly choosing a rewrite rule. The chosen rule is always applied at its
first matching site in pre-order; choosing a rule that matches nowhere
leaves the state unchanged and costs ``INVALID_ACTION_REWARD``. Episodes end
on the goal, on a repeated state (a loop is a dead end), or at the step cap.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

from . import kernels, pattern
from .encoding import FeatureVector, SymbolTable, encode
from .errors import (
    EpisodeFinished,
    FileFormatError,
    RuleNotApplicable,
    SearchNotFound,
    ValidationFailed,
)
from .expr import Formula, Path, parse, replace_at, to_text
from .rewrite import RuleSet, apply_rule_at, apply_rule_first, substitute
from .rl import (
    DEFAULT_STEP_CAP,
    GOAL_REWARD,
    INVALID_ACTION_REWARD,
    STEP_REWARD,
    PolicyModel,
    QTable,
    select_action,
)

OUTCOME_REACHED = "reached"
OUTCOME_DEAD_END = "dead_end"
OUTCOME_CAP = "cap_exceeded"


@dataclass(frozen=True)
class GoalSpec:
    """What counts as done: an exact tree, or a root-anchored pattern."""

    kind: str
    formula: Formula
    vars: frozenset[str] = frozenset()

    @classmethod
    def exact(cls, formula: Formula) -> "GoalSpec":
        return cls("exact", formula, frozenset())

    @classmethod
    def pattern(cls, template: Formula, var_names) -> "GoalSpec":
        names = frozenset(var_names)
        if not names:
            raise ValueError("a pattern goal needs at least one variable; use an exact goal instead")
        return cls("pattern", template, names)

    def __post_init__(self) -> None:
        if self.kind not in ("exact", "pattern"):
            raise ValueError(f"unknown goal kind {self.kind!r}")

    def satisfied(self, f: Formula) -> bool:
        if self.kind == "exact":
            return f == self.formula
        return kernels.match_root(f, self.formula, self.vars) is not None

    def text(self) -> str:
        if self.kind == "exact":
            return f"exact:{to_text(self.formula)}"
        return f"pattern[{','.join(sorted(self.vars))}]:{to_text(self.formula)}"


def parse_goal(text: str) -> GoalSpec:
    if text.startswith("exact:"):
        return GoalSpec.exact(parse(text[len("exact:"):]))
    if text.startswith("pattern[") and "]:" in text:
        head, _, body = text.partition("]:")
        names = [n for n in head[len("pattern["):].split(",") if n]
        return GoalSpec.pattern(parse(body), names)
    raise FileFormatError(f"not a goal spec: {text!r}")


class TraceStep(NamedTuple):
    before: Formula
    rule_id: str
    site: Path
    after: Formula


@dataclass
class DerivationTrace:
    goal: GoalSpec
    outcome: str
    steps: list[TraceStep] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def reached(self) -> bool:
        return self.outcome == OUTCOME_REACHED

    @property
    def final(self) -> Formula | None:
        return self.steps[-1].after if self.steps else None

    def replay(self, rules: RuleSet) -> None:
        """Re-apply every step and check it reproduces the recorded trees.

        Raises ValidationFailed on the first discrepancy. A reached trace
        must also satisfy its goal at the end.
        """
        for i, step in enumerate(self.steps):
            if i and step.before != self.steps[i - 1].after:
                raise ValidationFailed(f"trace step {i} does not start where step {i - 1} ended")
            try:
                redone = apply_rule_at(step.before, rules.by_id(step.rule_id), step.site)
            except RuleNotApplicable as exc:
                raise ValidationFailed(f"trace step {i} cannot be replayed: {exc}") from None
            if redone != step.after:
                raise ValidationFailed(
                    f"trace step {i} ({step.rule_id}) replays to {to_text(redone)}, recorded {to_text(step.after)}"
                )
        if self.reached:
            last = self.steps[-1].after if self.steps else None
            if last is not None and not self.goal.satisfied(last):
                raise ValidationFailed("trace claims 'reached' but its final tree misses the goal")


def _format_site(site: Path) -> str:
    return ".".join(str(s) for s in site)


def _parse_site(text: str) -> Path:
    if not text:
        return ()
    try:
        return tuple(int(p) for p in text.split("."))
    except ValueError:
        raise FileFormatError(f"bad site path {text!r}") from None


def serialize_trace(trace: DerivationTrace) -> str:
    lines = [f"{trace.goal.text()}\t{trace.outcome}"]
    for step in trace.steps:
        lines.append(
            f"{to_text(step.before)}\t{step.rule_id}\t{_format_site(step.site)}\t{to_text(step.after)}"
        )
    return "\n".join(lines) + "\n"


def parse_trace(text: str) -> DerivationTrace:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise FileFormatError("empty trace file")
    header = lines[0].split("\t")
    if len(header) != 2:
        raise FileFormatError(f"bad trace header: {lines[0]!r}")
    goal = parse_goal(header[0])
    outcome = header[1]
    if outcome not in (OUTCOME_REACHED, OUTCOME_DEAD_END, OUTCOME_CAP):
        raise FileFormatError(f"unknown trace outcome {outcome!r}")
    steps: list[TraceStep] = []
    for line in lines[1:]:
        fields = line.split("\t")
        if len(fields) != 4:
            raise FileFormatError(f"bad trace step line: {line!r}")
        steps.append(TraceStep(parse(fields[0]), fields[1], _parse_site(fields[2]), parse(fields[3])))
    return DerivationTrace(goal, outcome, steps)


def save_trace(trace: DerivationTrace, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_trace(trace))


def load_trace(path: str) -> DerivationTrace:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trace(fh.read())


class DerivationEnv:
    """Episode state for one derivation attempt.

    Chosen actions are rule indices; the rule is applied at its first
    pre-order match. The environment tracks visited trees: re-entering one
    ends the episode as a dead end (rewrite loops cannot make progress).
    """

    def __init__(
        self,
        start: Formula,
        goal: GoalSpec,
        rules: RuleSet,
        table: SymbolTable,
        step_cap: int = DEFAULT_STEP_CAP,
    ):
        if step_cap < 1:
            raise ValueError("step_cap must be positive")
        self.start = start
        self.goal = goal
        self.rules = rules
        self.table = table
        self.step_cap = step_cap
        self.reset()

    def reset(self) -> FeatureVector:
        self.current = self.start
        self.step_count = 0
        self.steps: list[TraceStep] = []
        self._seen = {self.start}
        if self.goal.satisfied(self.start):
            self.done = True
            self.outcome: str | None = OUTCOME_REACHED
        else:
            self.done = False
            self.outcome = None
        return self.state_vector()

    def state_vector(self) -> FeatureVector:
        return encode(self.current, self.table)

    def applicable_mask(self) -> list[bool]:
        """Which rules match somewhere in the current tree."""
        return [pattern.find_first(self.current, rule.lhs, rule.vars) is not None for rule in self.rules]

    def env_step(self, action: int) -> tuple[FeatureVector, float, bool]:
        """Apply one chosen rule. Returns (next state vector, reward, done)."""
        if self.done:
            raise EpisodeFinished("env_step called after the episode ended")
        if not 0 <= action < len(self.rules):
            raise ValueError(f"action {action} out of range for {len(self.rules)} rules")
        self.step_count += 1
        result = apply_rule_first(self.current, self.rules[action])
        if result is None:
            reward = INVALID_ACTION_REWARD
            if self.step_count >= self.step_cap:
                self.done = True
                self.outcome = OUTCOME_CAP
            return self.state_vector(), reward, self.done
        new, site = result
        self.steps.append(TraceStep(self.current, self.rules[action].id, site, new))
        self.current = new
        if self.goal.satisfied(new):
            self.done = True
            self.outcome = OUTCOME_REACHED
            reward = GOAL_REWARD
        elif new in self._seen:
            self.done = True
            self.outcome = OUTCOME_DEAD_END
            reward = INVALID_ACTION_REWARD
        elif self.step_count >= self.step_cap:
            self.done = True
            self.outcome = OUTCOME_CAP
            reward = STEP_REWARD
        else:
            self._seen.add(new)
            reward = STEP_REWARD
        return self.state_vector(), reward, self.done

    def trace(self) -> DerivationTrace:
        outcome = self.outcome if self.outcome is not None else OUTCOME_CAP
        return DerivationTrace(self.goal, outcome, list(self.steps))


def rollout(
    env: DerivationEnv,
    learner: QTable | PolicyModel,
    mode: str = "greedy",
    epsilon: float = 0.1,
    rng: random.Random | None = None,
) -> DerivationTrace:
    """Drive an environment with a learner until it terminates.

    Action choice is masked to applicable rules, so a rollout never burns
    steps on rules that match nowhere; when no rule applies at all the
    episode ends as a dead end.
    """
    if rng is None:
        rng = random.Random(0)
    while not env.done:
        mask = env.applicable_mask()
        if not any(mask):
            env.done = True
            env.outcome = OUTCOME_DEAD_END
            break
        action = select_action(learner, env.state_vector(), mask, mode, epsilon, rng)
        env.env_step(action)
    return env.trace()


def bfs_oracle(
    start: Formula,
    goal: GoalSpec,
    rules: RuleSet,
    depth_cap: int = 8,
    first_site_only: bool = False,
) -> DerivationTrace:
    """Breadth-first search over rewrites; returns a shortest reached trace.

    Expansion order is deterministic: rules in set order, and for each rule
    every match site in pre-order (or only the first site when
    first_site_only is set, which mirrors what the environment can do).
    Raises SearchNotFound when no derivation exists within depth_cap steps.
    """
    if goal.satisfied(start):
        return DerivationTrace(goal, OUTCOME_REACHED, [])
    # entries: (formula, parent entry index, rule id, site)
    entries: list[tuple[Formula, int, str | None, Path | None]] = [(start, -1, None, None)]
    visited = {start}
    queue: deque[tuple[int, int]] = deque([(0, 0)])  # (entry index, depth)
    while queue:
        entry_idx, depth = queue.popleft()
        if depth >= depth_cap:
            continue
        current = entries[entry_idx][0]
        for rule in rules:
            if first_site_only:
                hit = pattern.find_first(current, rule.lhs, rule.vars)
                matches = [hit] if hit is not None else []
            else:
                matches = pattern.find_all(current, rule.lhs, rule.vars)
            for site, binding in matches:
                candidate = replace_at(current, site, substitute(rule.rhs, binding))
                if candidate in visited:
                    continue
                visited.add(candidate)
                entries.append((candidate, entry_idx, rule.id, site))
                if goal.satisfied(candidate):
                    return DerivationTrace(goal, OUTCOME_REACHED, _unwind(entries, len(entries) - 1))
                queue.append((len(entries) - 1, depth + 1))
    raise SearchNotFound(f"no derivation within {depth_cap} steps from {to_text(start)}")


def _unwind(
    entries: list[tuple[Formula, int, str | None, Path | None]], last: int
) -> list[TraceStep]:
    steps: list[TraceStep] = []
    idx = last
    while entries[idx][1] >= 0:
        formula, parent, rule_id, site = entries[idx]
        assert rule_id is not None and site is not None
        steps.append(TraceStep(entries[parent][0], rule_id, site, formula))
        idx = parent
    steps.reverse()
    return steps
