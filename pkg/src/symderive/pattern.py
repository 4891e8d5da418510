"""Subtree matching with pattern variables.

A template is an ordinary formula plus a set of variable names. Sym leaves
of the template whose name is in that set bind whole subtrees of the subject;
every other node must coincide exactly (same kind, payload, and child count).
Matching is purely syntactic: no commutativity, no arithmetic.
"""

from __future__ import annotations

from typing import Iterable, NamedTuple

from . import kernels
from .expr import Formula, Path, subtree_at


class Match(NamedTuple):
    site: Path
    binding: dict[str, Formula]


def _varset(var_names: Iterable[str]) -> frozenset[str]:
    return var_names if isinstance(var_names, frozenset) else frozenset(var_names)


def match_at(f: Formula, site: Path, template: Formula, var_names: Iterable[str]) -> dict[str, Formula] | None:
    """Match template against the subtree of f at site; None if it does not fit."""
    return kernels.match_root(subtree_at(f, site), template, _varset(var_names))


def find_first(f: Formula, template: Formula, var_names: Iterable[str]) -> Match | None:
    """First matching site in pre-order (a node precedes its children,
    children are visited left to right)."""
    hit = kernels.find_first(f, template, _varset(var_names))
    if hit is None:
        return None
    return Match(hit[0], hit[1])


def find_all(f: Formula, template: Formula, var_names: Iterable[str]) -> list[Match]:
    """Every matching site, in the same pre-order as find_first."""
    return [Match(site, binding) for site, binding in kernels.find_all(f, template, _varset(var_names))]
