"""Pure-Python reference implementations of the hot tree kernels.

These are the semantics of record. The optional compiled extension
(``symderive._ckernels``) must agree with them exactly; ``symderive.kernels``
picks whichever backend is available at import time.
"""

from __future__ import annotations

from .expr import SYM, Formula, Path


def match_root(node: Formula, template: Formula, var_names: frozenset[str]) -> dict[str, Formula] | None:
    """Match template against node, anchored at node's root.

    Pattern variables are Sym leaves of the template whose name is in
    var_names; each binds a whole subtree. Repeated variables must bind
    structurally equal subtrees. Returns the binding, or None.
    """
    binding: dict[str, Formula] = {}
    if _match(node, template, var_names, binding):
        return binding
    return None


def _match(node: Formula, tpl: Formula, var_names: frozenset[str], binding: dict[str, Formula]) -> bool:
    if tpl.kind == SYM:
        name = tpl.payload
        if name in var_names:
            bound = binding.get(name)
            if bound is None:
                binding[name] = node
                return True
            return bound == node
    if node.kind != tpl.kind or node.payload != tpl.payload:
        return False
    a = node.children
    b = tpl.children
    if len(a) != len(b):
        return False
    for ca, cb in zip(a, b):
        if not _match(ca, cb, var_names, binding):
            return False
    return True


def find_first(root: Formula, template: Formula, var_names: frozenset[str]) -> tuple[Path, dict[str, Formula]] | None:
    """First match site in pre-order (node before children, left to right)."""
    out: list[tuple[Path, dict[str, Formula]]] = []
    _scan(root, (), template, var_names, out, True)
    return out[0] if out else None


def find_all(root: Formula, template: Formula, var_names: frozenset[str]) -> list[tuple[Path, dict[str, Formula]]]:
    """All match sites in pre-order."""
    out: list[tuple[Path, dict[str, Formula]]] = []
    _scan(root, (), template, var_names, out, False)
    return out


def _scan(
    node: Formula,
    path: Path,
    template: Formula,
    var_names: frozenset[str],
    out: list[tuple[Path, dict[str, Formula]]],
    first_only: bool,
) -> bool:
    binding = match_root(node, template, var_names)
    if binding is not None:
        out.append((path, binding))
        if first_only:
            return True
    for i, child in enumerate(node.children):
        if _scan(child, path + (i,), template, var_names, out, first_only):
            return True
    return False


def encode_prefix(root: Formula, codes: list[int]) -> list[int]:
    """Unpadded integer encoding of a tree.

    Pre-order over nodes that have children: append the node's code, then one
    code per child, then recurse into children that themselves have children.
    Leaves contribute only their code in the parent's child block, so the
    encoding is blind to leaf names and literals. A childless root encodes
    to the empty prefix.
    """
    out: list[int] = []
    if root.children:
        _encode(root, codes, out)
    return out


def _encode(node: Formula, codes: list[int], out: list[int]) -> None:
    out.append(codes[node.kind])
    for child in node.children:
        out.append(codes[child.kind])
    for child in node.children:
        if child.children:
            _encode(child, codes, out)


def hamming(a: tuple[int, ...], b: tuple[int, ...]) -> int:
    """Number of positions where two equal-length vectors differ."""
    if len(a) != len(b):
        raise ValueError("hamming requires equal-length vectors")
    n = 0
    for x, y in zip(a, b):
        if x != y:
            n += 1
    return n
