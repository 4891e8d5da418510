"""Time the pure-Python kernels against the compiled extension.

Four workloads, coarse to fine:

  find_all   scan random trees for every packaged rule template
  encode     pre-order integer encoding of random trees
  hamming    positional mismatch count over encoded vector pairs
  bfs        end-to-end breadth-first search for a 3-step rearrangement

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeats 9 --trees 300
"""

import argparse
import random
import statistics
import sys
import time

from symderive import kernels
from symderive.derivation import GoalSpec, bfs_oracle
from symderive.encoding import default_table, encode
from symderive.expr import Formula, mk, num, parse, sym
from symderive.rewrite import packaged_rules

MECH_START = 'Equal(Plus(Divide(Times(Sym("m"),Power(Sym("v"),Num(2))),Num(2)),Sym("E")),Sym("Q"))'
MECH_FINAL = 'Equal(Sym("v"),Sqrt(Divide(Times(Num(2),Minus(Sym("Q"),Sym("E"))),Sym("m"))))'

LEAVES = ["x", "t", "m", "k", "N", "y"]
OPS = [
    ("Plus", 2), ("Plus", 3), ("Minus", 2), ("Times", 2), ("Times", 3),
    ("Divide", 2), ("Power", 2), ("Equal", 2), ("Sqrt", 1), ("Ln", 1),
    ("Exp", 1), ("Sin", 1), ("Cos", 1), ("Der", 1), ("Integral", 2),
]


def random_tree(rng: random.Random, depth: int) -> Formula:
    if depth == 0 or rng.random() < 0.3:
        if rng.random() < 0.8:
            return sym(rng.choice(LEAVES))
        return num(str(rng.randrange(-9, 10)))
    tag, arity = OPS[rng.randrange(len(OPS))]
    return mk(tag, *(random_tree(rng, depth - 1) for _ in range(arity)))


def best_of(fn, repeats: int) -> float:
    """Median wall time of `repeats` runs, in seconds."""
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def make_workloads(trees: int, seed: int):
    rng = random.Random(seed)
    hosts = [random_tree(rng, 6) for _ in range(trees)]
    rules = packaged_rules("ode_base")
    table = default_table()
    vectors = [encode(random_tree(rng, 4), table) for _ in range(trees)]
    pairs = [(vectors[rng.randrange(trees)], vectors[rng.randrange(trees)]) for _ in range(4000)]
    start, goal = parse(MECH_START), parse(MECH_FINAL)
    mech_rules = packaged_rules("mechanics")

    def bench_find_all():
        hits = 0
        for host in hosts:
            for rule in rules:
                hits += len(kernels.find_all(host, rule.lhs, rule.vars))
        return hits

    def bench_encode():
        total = 0
        for host in hosts:
            total += len(kernels.encode_prefix(host, table._by_kind))
        return total

    def bench_hamming():
        total = 0
        for a, b in pairs:
            total += kernels.hamming(a, b)
        return total

    def bench_bfs():
        route = bfs_oracle(start, GoalSpec.exact(goal), mech_rules)
        assert len(route) == 3
        return [(step.rule_id, step.site) for step in route.steps]

    return [("find_all", bench_find_all), ("encode", bench_encode),
            ("hamming", bench_hamming), ("bfs", bench_bfs)]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trees", type=int, default=200, help="random trees per workload (default 200)")
    parser.add_argument("--repeats", type=int, default=5, help="runs per timing, median reported (default 5)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    try:
        kernels.get_backend("compiled")
    except Exception as exc:
        print(f"compiled backend unavailable ({exc}); nothing to compare", file=sys.stderr)
        return 1

    workloads = make_workloads(args.trees, args.seed)
    results = {}
    checksums = {}
    original = kernels.BACKEND
    try:
        for backend in ("python", "compiled"):
            kernels.use_backend(backend)
            for name, fn in workloads:
                out = fn()  # warm-up, and the cross-backend checksum
                assert checksums.setdefault(name, out) == out, f"{name}: backends disagree"
                results[(backend, name)] = best_of(fn, args.repeats)
    finally:
        kernels.use_backend(original)

    print(f"{'workload':<10} {'python':>10} {'compiled':>10} {'speedup':>8}")
    for name, _ in workloads:
        py = results[("python", name)]
        cc = results[("compiled", name)]
        print(f"{name:<10} {py * 1e3:>8.2f}ms {cc * 1e3:>8.2f}ms {py / cc:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
