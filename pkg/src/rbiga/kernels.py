"""Backend selection for the numerical hot kernels.

The compiled ``rbiga._speedups`` extension is used when it can be imported;
otherwise the numpy implementations from ``rbiga._kernels_py`` are used.
Setting ``RBIGA_PURE_PYTHON=1`` forces the fallback.
"""
import contextlib
import os

from . import _kernels_py

BACKENDS = {"python": _kernels_py}

try:
    from . import _speedups
except ImportError:  # extension not built
    _speedups = None
else:
    BACKENDS["cython"] = _speedups

if _speedups is not None and os.environ.get("RBIGA_PURE_PYTHON", "") in ("", "0"):
    BACKEND = "cython"
else:
    BACKEND = "python"

_impl = BACKENDS[BACKEND]

find_spans = _impl.find_spans
basis_funs_ders = _impl.basis_funs_ders
element_matrices = _impl.element_matrices
tensor_basis = _impl.tensor_basis


def get_backend(name):
    """Return the kernel module registered under ``name`` ('cython' or 'python')."""
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available; "
                         f"have {sorted(BACKENDS)}") from None


@contextlib.contextmanager
def use_backend(name):
    """Temporarily route the module-level kernels to backend ``name``."""
    global BACKEND
    impl = get_backend(name)
    names = ("find_spans", "basis_funs_ders", "element_matrices", "tensor_basis")
    saved = BACKEND, {n: globals()[n] for n in names}
    BACKEND = name
    globals().update({n: getattr(impl, n) for n in names})
    try:
        yield impl
    finally:
        BACKEND = saved[0]
        globals().update(saved[1])
