"""Tree kernels: compiled when the extension is available, numpy otherwise.

Both backends produce identical trees; :func:`use_backend` switches between
them for benchmarking and equivalence testing.
"""

from . import _pytree

try:
    from . import _ctree
except ImportError:  # extension not built
    _ctree = None

_BACKENDS = {"python": _pytree}
if _ctree is not None:
    _BACKENDS["cython"] = _ctree

_active = _ctree if _ctree is not None else _pytree


def available_backends():
    return tuple(sorted(_BACKENDS))


def backend_name():
    return _active.NAME


def use_backend(name):
    """Select the kernel backend ("cython" or "python"); returns the previous name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
    previous = _active.NAME
    _active = _BACKENDS[name]
    return previous


def get(name=None):
    return _active if name is None else _BACKENDS[name]


def build_tree(*args, **kwargs):
    return _active.build_tree(*args, **kwargs)


def apply_tree(*args, **kwargs):
    return _active.apply_tree(*args, **kwargs)
