# cython: language_level=3
"""Compiled tree kernels.

Same contract as symderive._kernels_py (the reference implementation); the
differential tests in the suite hold the two backends to identical outputs.
"""

from symderive.expr import SYM as _SYM_ID

cdef int SYM = _SYM_ID


def match_root(node, template, var_names):
    cdef dict binding = {}
    if _match(node, template, var_names, binding):
        return binding
    return None


cdef bint _match(object node, object tpl, object var_names, dict binding) except? -1:
    cdef int tk = tpl.kind
    cdef tuple a
    cdef tuple b
    cdef Py_ssize_t i
    cdef Py_ssize_t n
    cdef object name
    cdef object bound
    if tk == SYM:
        name = tpl.payload
        if name in var_names:
            bound = binding.get(name)
            if bound is None:
                binding[name] = node
                return True
            return bound == node
    if node.kind != tk or node.payload != tpl.payload:
        return False
    a = node.children
    b = tpl.children
    n = len(a)
    if n != len(b):
        return False
    for i in range(n):
        if not _match(a[i], b[i], var_names, binding):
            return False
    return True


def find_first(root, template, var_names):
    cdef list out = []
    _scan(root, (), template, var_names, out, True)
    if out:
        return out[0]
    return None


def find_all(root, template, var_names):
    cdef list out = []
    _scan(root, (), template, var_names, out, False)
    return out


cdef bint _scan(object node, tuple path, object template, object var_names,
                list out, bint first_only) except? -1:
    cdef dict binding = {}
    cdef tuple children
    cdef Py_ssize_t i
    if _match(node, template, var_names, binding):
        out.append((path, binding))
        if first_only:
            return True
    children = node.children
    for i in range(len(children)):
        if _scan(children[i], path + (i,), template, var_names, out, first_only):
            return True
    return False


def encode_prefix(root, codes):
    cdef list out = []
    if len(root.children) > 0:
        _encode(root, codes, out)
    return out


cdef int _encode(object node, list codes, list out) except -1:
    cdef tuple children = node.children
    cdef Py_ssize_t n = len(children)
    cdef Py_ssize_t i
    cdef object child
    out.append(codes[<Py_ssize_t> node.kind])
    for i in range(n):
        out.append(codes[<Py_ssize_t> children[i].kind])
    for i in range(n):
        child = children[i]
        if len(child.children) > 0:
            _encode(child, codes, out)
    return 0


def hamming(a, b):
    cdef tuple ta = a
    cdef tuple tb = b
    cdef Py_ssize_t n = len(ta)
    cdef Py_ssize_t i
    cdef Py_ssize_t count = 0
    if len(tb) != n:
        raise ValueError("hamming requires equal-length vectors")
    for i in range(n):
        if ta[i] != tb[i]:
            count += 1
    return count
