"""Training corpus: first-order linear ODE instances with expert traces.

Instances are drawn from a family of equations around ``dy/dx + P*y = Q``
with constant coefficients — presented in shuffled forms (term order swapped,
ratio-of-differentials node, already isolated, flipped sides, ...) — and each
carries the expert rule script that solves it by separation of variables,
either to the closed-form solution or to the separated-integrals milestone.

Every generated trace replays, the set of traces exercises every rule in the
base set, and no two traces disagree about the action taken from the same
encoded state (the encoding is blind to leaf names, so differently named
instances of one shape must be solved the same way — the generator enforces
this instead of assuming it).
"""

from __future__ import annotations

import os
import random
from dataclasses import dataclass, field

from .derivation import (
    OUTCOME_REACHED,
    DerivationTrace,
    GoalSpec,
    TraceStep,
    load_trace,
    save_trace,
)
from .encoding import DEFAULT_L_MAX, SymbolTable, default_table, encode, format_vector
from .errors import CorpusError, FileFormatError, UnsolvableInstance
from .expr import Formula, mk, num, parse, sym, to_text
from .rewrite import RuleSet, apply_rule_first
from .rl import TraceSample

CONST_NAMES = ("a", "b", "k", "m", "p", "q")
VAR_PAIRS = (("y", "x"), ("N", "t"), ("u", "r"), ("g", "z"), ("h", "w"))

TRAIN = "train"
TEST = "test"


@dataclass(frozen=True)
class GenConfig:
    count: int = 500
    max_degree: int = 4
    coeff_low: int = 1
    coeff_high: int = 5
    l_max: int = DEFAULT_L_MAX
    test_fraction: float = 0.2

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be positive")
        if not 2 <= self.max_degree:
            raise ValueError("max_degree must be at least 2")
        if self.coeff_low > self.coeff_high:
            raise ValueError("empty coefficient range")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in [0, 1)")


@dataclass(frozen=True)
class OdeInstance:
    index: int
    variant: str
    start: Formula
    goal: GoalSpec
    script: tuple[str, ...]


# ---------------------------------------------------------------------------
# shared tree shapes


def _dydx(y: Formula, x: Formula) -> Formula:
    return mk("Divide", mk("Der", y), mk("Der", x))


def _milestone(y: Formula, x: Formula, denom: Formula) -> GoalSpec:
    return GoalSpec.exact(mk("Equal", mk("Integral", mk("Divide", num(1), denom), y), x))


def _full_goal(y: Formula, x: Formula, k: Formula, lam: Formula) -> GoalSpec:
    decay = mk("Exp", mk("Times", x, mk("Times", num(-1), lam)))
    return GoalSpec.exact(mk("Equal", y, mk("Divide", mk("Minus", k, decay), lam)))


def _draw_const(rng: random.Random, cfg: GenConfig) -> Formula:
    if rng.random() < 0.5:
        return num(rng.randint(cfg.coeff_low, cfg.coeff_high))
    return sym(rng.choice(CONST_NAMES))


def _draw_vars(rng: random.Random) -> tuple[Formula, Formula]:
    y_name, x_name = rng.choice(VAR_PAIRS)
    return sym(y_name), sym(x_name)


def _draw_forcing(rng: random.Random, cfg: GenConfig, x: Formula) -> Formula:
    """One member of the forcing family {a, a*x, a*x^n, e^x, sin x}."""
    shape = rng.choice(("const", "linear", "power", "exp", "sin"))
    if shape == "const":
        return _draw_const(rng, cfg)
    if shape == "linear":
        return mk("Times", _draw_const(rng, cfg), x)
    if shape == "power":
        degree = rng.randint(2, cfg.max_degree)
        return mk("Times", _draw_const(rng, cfg), mk("Power", x, num(degree)))
    if shape == "exp":
        return mk("Exp", x)
    return mk("Sin", x)


# Tail scripts shared by the separable variants: isolate dy/(Q - P*y) = dx,
# integrate both sides, and (for the *_full variants) evaluate the integrals
# and solve for y.
_TAIL_MILESTONE = ("clear_divisor", "divide_by_first", "integrate_separated", "integral_of_unit")
_TAIL_FULL = _TAIL_MILESTONE + (
    "integral_of_linear_reciprocal",
    "clear_divisor",
    "ln_to_exp",
    "isolate_linear_term",
)

Draw = tuple[Formula, GoalSpec, tuple[str, ...]]


def _v_plus_full(rng: random.Random, cfg: GenConfig) -> Draw:
    y, x = _draw_vars(rng)
    k = _draw_const(rng, cfg)
    lam = _draw_const(rng, cfg)
    start = mk("Equal", mk("Plus", _dydx(y, x), mk("Times", lam, y)), k)
    return start, _full_goal(y, x, k, lam), ("move_first_term",) + _TAIL_FULL


def _v_plus_swapped(rng: random.Random, cfg: GenConfig) -> Draw:
    y, x = _draw_vars(rng)
    k = _draw_const(rng, cfg)
    lam = _draw_const(rng, cfg)
    start = mk("Equal", mk("Plus", mk("Times", lam, y), _dydx(y, x)), k)
    return start, _full_goal(y, x, k, lam), ("move_second_term",) + _TAIL_FULL


def _v_isolated_full(rng: random.Random, cfg: GenConfig) -> Draw:
    y, x = _draw_vars(rng)
    k = _draw_const(rng, cfg)
    lam = _draw_const(rng, cfg)
    start = mk("Equal", _dydx(y, x), mk("Minus", k, mk("Times", lam, y)))
    return start, _full_goal(y, x, k, lam), _TAIL_FULL


def _v_isolated_product(rng: random.Random, cfg: GenConfig) -> Draw:
    y, x = _draw_vars(rng)
    source = mk("Times", _draw_const(rng, cfg), mk("Times", _draw_const(rng, cfg), _draw_const(rng, cfg)))
    lam = _draw_const(rng, cfg)
    denom = mk("Minus", source, mk("Times", lam, y))
    start = mk("Equal", _dydx(y, x), denom)
    return start, _milestone(y, x, denom), _TAIL_MILESTONE


def _v_minus_form(rng: random.Random, cfg: GenConfig) -> Draw:
    y, x = _draw_vars(rng)
    k = _draw_const(rng, cfg)
    lam = _draw_const(rng, cfg)
    start = mk("Equal", mk("Minus", _dydx(y, x), mk("Times", lam, y)), k)
    denom = mk("Plus", k, mk("Times", lam, y))
    return start, _milestone(y, x, denom), ("move_neg_term",) + _TAIL_MILESTONE


def _v_direct(rng: random.Random, cfg: GenConfig) -> Draw:
    y, x = _draw_vars(rng)
    forcing = _draw_forcing(rng, cfg, x)
    start = mk("Equal", _dydx(y, x), forcing)
    goal = GoalSpec.exact(mk("Equal", y, mk("Integral", forcing, x)))
    return start, goal, ("clear_divisor", "integrate_product")


def _v_deriv_ratio(rng: random.Random, cfg: GenConfig) -> Draw:
    y, x = _draw_vars(rng)
    k = _draw_const(rng, cfg)
    lam = _draw_const(rng, cfg)
    start = mk("Equal", mk("DerivRatio", y, x), mk("Minus", k, mk("Times", lam, y)))
    return start, _full_goal(y, x, k, lam), ("expand_deriv_ratio",) + _TAIL_FULL


def _v_deriv_ratio_product(rng: random.Random, cfg: GenConfig) -> Draw:
    y, x = _draw_vars(rng)
    source = mk("Times", _draw_const(rng, cfg), mk("Times", _draw_const(rng, cfg), _draw_const(rng, cfg)))
    lam = _draw_const(rng, cfg)
    denom = mk("Minus", source, mk("Times", lam, y))
    start = mk("Equal", mk("DerivRatio", y, x), denom)
    return start, _milestone(y, x, denom), ("expand_deriv_ratio",) + _TAIL_MILESTONE


def _v_flipped(rng: random.Random, cfg: GenConfig) -> Draw:
    y, x = _draw_vars(rng)
    forcing = _draw_forcing(rng, cfg, x)
    start = mk("Equal", forcing, _dydx(y, x))
    goal = GoalSpec.exact(mk("Equal", y, mk("Integral", forcing, x)))
    return start, goal, ("swap_sides", "clear_divisor", "integrate_product")


def _v_multiply_route(rng: random.Random, cfg: GenConfig) -> Draw:
    y, x = _draw_vars(rng)
    source = mk("Times", _draw_const(rng, cfg), _draw_const(rng, cfg))
    lam = _draw_const(rng, cfg)
    denom = mk("Minus", source, mk("Times", lam, y))
    start = mk("Equal", _dydx(y, x), denom)
    script = ("multiply_by_diff", "cancel_diff", "divide_by_first", "integrate_separated", "integral_of_unit")
    return start, _milestone(y, x, denom), script


def _v_premultiplied(rng: random.Random, cfg: GenConfig) -> Draw:
    y, x = _draw_vars(rng)
    k = _draw_const(rng, cfg)
    start = mk("Equal", mk("Der", y), mk("Times", mk("Der", x), k))
    goal = GoalSpec.exact(mk("Equal", mk("Integral", mk("Divide", num(1), k), y), x))
    return start, goal, ("divide_by_second", "integrate_separated", "integral_of_unit")


_VARIANTS: tuple[tuple[str, object], ...] = (
    ("plus_full", _v_plus_full),
    ("plus_swapped", _v_plus_swapped),
    ("isolated_full", _v_isolated_full),
    ("isolated_product", _v_isolated_product),
    ("minus_form", _v_minus_form),
    ("direct", _v_direct),
    ("deriv_ratio", _v_deriv_ratio),
    ("deriv_ratio_product", _v_deriv_ratio_product),
    ("flipped", _v_flipped),
    ("multiply_route", _v_multiply_route),
    ("premultiplied", _v_premultiplied),
)

VARIANT_NAMES = tuple(name for name, _ in _VARIANTS)


def gen_instances(config: GenConfig, seed: int) -> list[OdeInstance]:
    """Deterministically draw ``config.count`` instances, cycling through the
    variant catalog so every presentation shape stays represented."""
    rng = random.Random(seed)
    instances: list[OdeInstance] = []
    for i in range(config.count):
        name, builder = _VARIANTS[i % len(_VARIANTS)]
        start, goal, script = builder(rng, config)  # type: ignore[operator]
        instances.append(OdeInstance(i, name, start, goal, script))
    return instances


def solve_instance(instance: OdeInstance, rules: RuleSet) -> DerivationTrace:
    """Run an instance's expert script; raises UnsolvableInstance if any step
    fails to apply or the script misses the instance's goal."""
    current = instance.start
    steps: list[TraceStep] = []
    for rule_id in instance.script:
        result = apply_rule_first(current, rules.by_id(rule_id))
        if result is None:
            raise UnsolvableInstance(
                f"instance {instance.index} ({instance.variant}): {rule_id} "
                f"does not apply to {to_text(current)}"
            )
        after, site = result
        steps.append(TraceStep(current, rule_id, site, after))
        current = after
    if not instance.goal.satisfied(current):
        raise UnsolvableInstance(
            f"instance {instance.index} ({instance.variant}): script ended at "
            f"{to_text(current)} without reaching its goal"
        )
    return DerivationTrace(instance.goal, OUTCOME_REACHED, steps)


@dataclass
class Corpus:
    instances: list[OdeInstance]
    traces: list[DerivationTrace]
    split: list[str]
    seed: int
    config: GenConfig
    rules_hash: str
    dropped: list[tuple[int, str]] = field(default_factory=list)

    def indices(self, which: str | None = None) -> list[int]:
        if which is None:
            return list(range(len(self.instances)))
        return [i for i, s in enumerate(self.split) if s == which]

    def samples(self, rules: RuleSet, table: SymbolTable, which: str | None = None) -> list[TraceSample]:
        """Flatten traces into (encoded state, expert action index) pairs."""
        out: list[TraceSample] = []
        for i in self.indices(which):
            for step in self.traces[i].steps:
                out.append(TraceSample(encode(step.before, table), rules.index_of(step.rule_id)))
        return out

    def n_samples(self) -> int:
        return sum(len(t.steps) for t in self.traces)


def _split_assignment(n: int, seed: int, test_fraction: float) -> list[str]:
    rng = random.Random(f"split:{seed}")
    order = list(range(n))
    rng.shuffle(order)
    n_test = int(round(n * test_fraction))
    test_set = set(order[:n_test])
    return [TEST if i in test_set else TRAIN for i in range(n)]


def check_consistency(traces: list[DerivationTrace], table: SymbolTable) -> None:
    """No two trace steps may take different actions from the same encoded
    state; the policy cannot represent such a corpus."""
    seen: dict[tuple[int, ...], str] = {}
    for trace in traces:
        for step in trace.steps:
            vec = encode(step.before, table)
            prev = seen.get(vec)
            if prev is None:
                seen[vec] = step.rule_id
            elif prev != step.rule_id:
                raise CorpusError(
                    f"conflicting expert actions ({prev} vs {step.rule_id}) for "
                    f"encoded state {format_vector(vec)} ({to_text(step.before)})"
                )


def check_coverage(traces: list[DerivationTrace], rules: RuleSet) -> None:
    used = {step.rule_id for trace in traces for step in trace.steps}
    missing = sorted(set(rules.ids()) - used)
    if missing:
        raise CorpusError(f"rules never exercised by the corpus: {', '.join(missing)}")


def build_corpus(config: GenConfig, seed: int, rules: RuleSet) -> Corpus:
    """Generate instances, solve them, split, and run the integrity checks."""
    table = default_table(config.l_max)
    raw = gen_instances(config, seed)
    kept: list[OdeInstance] = []
    traces: list[DerivationTrace] = []
    dropped: list[tuple[int, str]] = []
    for instance in raw:
        try:
            trace = solve_instance(instance, rules)
        except UnsolvableInstance as exc:
            dropped.append((instance.index, str(exc)))
            continue
        kept.append(instance)
        traces.append(trace)
    if not kept:
        raise CorpusError("every generated instance was dropped")
    check_consistency(traces, table)
    check_coverage(traces, rules)
    split = _split_assignment(len(kept), seed, config.test_fraction)
    return Corpus(kept, traces, split, seed, config, rules.content_hash(), dropped)


# ---------------------------------------------------------------------------
# on-disk layout: instances.txt, traces/NNNNN.trace, split.txt, seed.txt


def save_corpus(corpus: Corpus, out_dir: str) -> None:
    os.makedirs(os.path.join(out_dir, "traces"), exist_ok=True)
    with open(os.path.join(out_dir, "instances.txt"), "w", encoding="utf-8") as fh:
        for instance in corpus.instances:
            fh.write(to_text(instance.start) + "\n")
    for i, trace in enumerate(corpus.traces):
        save_trace(trace, os.path.join(out_dir, "traces", f"{i:05d}.trace"))
    with open(os.path.join(out_dir, "split.txt"), "w", encoding="utf-8") as fh:
        for i, which in enumerate(corpus.split):
            fh.write(f"{i:05d}\t{which}\n")
    cfg = corpus.config
    with open(os.path.join(out_dir, "seed.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"seed={corpus.seed}\n")
        fh.write(f"count={cfg.count}\n")
        fh.write(f"max_degree={cfg.max_degree}\n")
        fh.write(f"coeff_low={cfg.coeff_low}\n")
        fh.write(f"coeff_high={cfg.coeff_high}\n")
        fh.write(f"l_max={cfg.l_max}\n")
        fh.write(f"test_fraction={cfg.test_fraction}\n")
        fh.write(f"rules_sha256={corpus.rules_hash}\n")


def load_corpus(corpus_dir: str) -> Corpus:
    seed_path = os.path.join(corpus_dir, "seed.txt")
    if not os.path.isfile(seed_path):
        raise FileFormatError(f"{corpus_dir} is not a corpus directory (no seed.txt)")
    meta: dict[str, str] = {}
    with open(seed_path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise FileFormatError(f"bad seed.txt line: {line!r}")
            meta[key] = value
    try:
        config = GenConfig(
            count=int(meta["count"]),
            max_degree=int(meta["max_degree"]),
            coeff_low=int(meta["coeff_low"]),
            coeff_high=int(meta["coeff_high"]),
            l_max=int(meta["l_max"]),
            test_fraction=float(meta["test_fraction"]),
        )
        seed = int(meta["seed"])
        rules_hash = meta["rules_sha256"]
    except (KeyError, ValueError) as exc:
        raise FileFormatError(f"bad seed.txt: {exc}") from None

    with open(os.path.join(corpus_dir, "instances.txt"), "r", encoding="utf-8") as fh:
        starts = [parse(line.strip()) for line in fh if line.strip()]

    instances: list[OdeInstance] = []
    traces: list[DerivationTrace] = []
    for i, start in enumerate(starts):
        trace = load_trace(os.path.join(corpus_dir, "traces", f"{i:05d}.trace"))
        script = tuple(step.rule_id for step in trace.steps)
        instances.append(OdeInstance(i, "", start, trace.goal, script))
        traces.append(trace)

    split: list[str] = [""] * len(instances)
    with open(os.path.join(corpus_dir, "split.txt"), "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            idx_text, sep, which = line.partition("\t")
            if not sep or which not in (TRAIN, TEST):
                raise FileFormatError(f"bad split.txt line: {line!r}")
            idx = int(idx_text)
            if not 0 <= idx < len(split):
                raise FileFormatError(f"split.txt index {idx} out of range")
            split[idx] = which
    if "" in split:
        raise FileFormatError("split.txt does not cover every instance")
    return Corpus(instances, traces, split, seed, config, rules_hash)
