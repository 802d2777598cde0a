"""Pure-numpy reference kernels.

These are the semantics of record: the compiled variants in ``_fast`` must
match them exactly (same dtypes, same block layout), and the test suite
cross-checks the two implementations on random inputs.
"""

import numpy as np


def advance_stack(left, core, feat):
    """Contract one mode into a running left stack.

    ``out[m, b] = sum_{a,i} left[m, a] * core[a, i, b] * feat[m, i]``

    Parameters
    ----------
    left : (M, r0) ndarray
    core : (r0, p, r1) ndarray
    feat : (M, p) ndarray

    Returns
    -------
    (M, r1) ndarray
    """
    r0, p, r1 = core.shape
    tmp = (left @ core.reshape(r0, p * r1)).reshape(-1, p, r1)
    return np.einsum("mi,mib->mb", feat, tmp)


def fill_design(D, left, right, feat, blocks):
    """Assemble least-squares design columns for one block-sparse core.

    Each row of ``blocks`` is ``(i, a0, la, b0, lb, col0)``: physical index
    ``i``, row-block offset/size, column-block offset/size, and the first
    design column of the block.  The block's columns are the free entries
    in row-major ``(a, b)`` order:

    ``D[m, col0 + a*lb + b] = left[m, a0+a] * feat[m, i] * right[m, b0+b]``
    """
    for i, a0, la, b0, lb, col0 in blocks:
        scaled = left[:, a0 : a0 + la] * feat[:, i, None]
        block = scaled[:, :, None] * right[:, None, b0 : b0 + lb]
        D[:, col0 : col0 + la * lb] = block.reshape(D.shape[0], la * lb)
