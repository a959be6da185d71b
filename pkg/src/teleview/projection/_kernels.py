"""Kernel backend selection: compiled extension when available, else pure Python."""

try:
    from . import _kernels_cy as _impl

    COMPILED = True
except ImportError:  # extension not built; fall back to the slow path
    from . import _kernels_py as _impl

    COMPILED = False

paint_spans = _impl.paint_spans
telea_inpaint = _impl.telea_inpaint


def get_backend(name: str):
    """Return a kernel module by name ('compiled' | 'python'), for benchmarks."""
    if name == "python":
        from . import _kernels_py

        return _kernels_py
    if name == "compiled":
        if not COMPILED:
            raise RuntimeError("compiled kernels are not available")
        from . import _kernels_cy

        return _kernels_cy
    raise ValueError(f"unknown backend {name!r}")
