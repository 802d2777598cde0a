"""Hot-loop kernels with a compiled fast path.

The compiled extension is optional; if it failed to build we silently fall
back to the numpy reference implementation, which is semantically
identical (and is what the compiled code is tested against).
"""

from . import _ref

try:
    from . import _fast

    COMPILED = True
except ImportError:  # extension not built; numpy fallback
    _fast = None
    COMPILED = False

advance_stack = _ref.advance_stack
fill_design = _fast.fill_design if COMPILED else _ref.fill_design
