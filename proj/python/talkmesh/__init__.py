"""Python bindings for the talkmesh core: speech-driven 3D talking mesh ops.

The heavy lifting lives in the C++ extension ``_talkmesh_core``; this package
re-exports its operations.
"""

try:
    from talkmesh._talkmesh_core import *  # noqa: F401,F403
    from talkmesh import _talkmesh_core as _core
except ImportError:  # dev mode: extension on PYTHONPATH next to the build tree
    from _talkmesh_core import *  # noqa: F401,F403
    import _talkmesh_core as _core

__all__ = [name for name in dir(_core) if not name.startswith("_")]
