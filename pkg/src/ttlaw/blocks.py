"""Block-sparse support patterns of TT cores for degree-bounded functions.

A coefficient tensor of total degree at most (or exactly) ``λ`` admits a
TT representation whose cores are block sparse: interface indices split
into blocks labeled by the *cumulative degree* ``a`` consumed by the
modes to their left, and slice ``i`` of a core may connect row block
``a`` to column block ``a + w(i)`` only.  The last core accepts a path
iff its final degree is admissible (``≤ λ`` bounded, ``= λ`` fixed), so
a single chain realizes the bounded-degree direct sum implicitly.

Block sizes are capped by ``ρ`` and by the exact number of index tuples
realizing each label on either side (a dynamic-programming count), which
prunes structurally-zero blocks near the chain ends.
"""

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    NumericalAbortError,
    StructureError,
)
from .tt import TensorTrain

#: column label of the terminal accept block on the last core
SENTINEL = -1


def _validate_weights(weights):
    w = [int(v) for v in weights]
    if not w:
        raise ConfigError("degree map is empty")
    if any(v < 0 for v in w):
        raise ConfigError(f"degree map must be non-negative, got {w}")
    if any(b < a for a, b in zip(w, w[1:])):
        raise ConfigError(f"degree map must be non-decreasing, got {w}")
    return tuple(w)


def _count_row(weights, max_target, n_modes):
    """Exact tuple counts: row[a] = #{(i_1..i_n): Σ w(i_k) = a}, a ≤ max_target."""
    row = [1] + [0] * max_target
    for _ in range(n_modes):
        new = [0] * (max_target + 1)
        for a in range(max_target + 1):
            acc = 0
            for w in weights:
                if w > a:
                    break
                acc += row[a - w]
            new[a] = acc
        row = new
    return row


def count_block_solutions(weights, target, n_modes):
    """Number of index tuples ``(i_1..i_n)`` with ``Σ w(i_k) = target``.

    Exact integer dynamic programming over modes; the printed closed
    forms are only upper bounds in general.
    """
    weights = _validate_weights(weights)
    target = int(target)
    n_modes = int(n_modes)
    if target < 0 or n_modes < 0:
        raise ConfigError("target and n_modes must be non-negative")
    return _count_row(weights, target, n_modes)[target]


def _interface_blocks(weights, lam, d, rho, fixed):
    """Per interface ``t = 0..d-1``: (labels, sizes) of the degree blocks.

    A label ``a`` survives at interface ``t`` iff it is reachable by ``t``
    modes on the left and completable to an admissible total by the
    ``d - t`` modes on the right; its block size is
    ``min(ρ, #left realizations, #right completions)``.
    """
    left = [1] + [0] * lam
    tables = [list(left)]
    for _ in range(d):
        left = _count_row_step(weights, left)
        tables.append(left)
    interfaces = []
    for t in range(d):
        right = _count_row(weights, lam, d - t)
        labels, sizes = [], []
        for a in range(lam + 1):
            n_left = tables[t][a]
            if fixed:
                n_right = right[lam - a]
            else:
                n_right = sum(right[: lam - a + 1])
            if n_left > 0 and n_right > 0:
                labels.append(a)
                sizes.append(min(rho, n_left, n_right))
        interfaces.append((tuple(labels), tuple(sizes)))
    return interfaces


def _count_row_step(weights, row):
    lam = len(row) - 1
    new = [0] * (lam + 1)
    for a in range(lam + 1):
        acc = 0
        for w in weights:
            if w > a:
                break
            acc += row[a - w]
        new[a] = acc
    return new


class BlockPattern:
    """Support pattern of one block-sparse core.

    Attributes
    ----------
    row_labels, col_labels : tuple of int
        Cumulative-degree labels of the interface blocks; the last core's
        column side is the single accept block labeled ``SENTINEL``.
    row_sizes, col_sizes : tuple of int
        Block sizes (each ``≤ ρ`` and ≤ the combinatorial count).
    allowed : dict
        Physical index ``i`` (0-based) → tuple of ``(row_block, col_block)``
        index pairs that may hold nonzero entries.
    """

    def __init__(self, weights, lam, rho, d, ell, fixed,
                 row_labels, row_sizes, col_labels, col_sizes):
        self.weights = weights
        self.lam = lam
        self.rho = rho
        self.d = d
        self.ell = ell
        self.fixed = fixed
        self.row_labels = tuple(row_labels)
        self.row_sizes = tuple(row_sizes)
        self.col_labels = tuple(col_labels)
        self.col_sizes = tuple(col_sizes)
        allowed = {}
        col_of = {b: j for j, b in enumerate(self.col_labels)}
        for i, w in enumerate(weights):
            pairs = []
            for rb, a in enumerate(self.row_labels):
                if ell == d:
                    ok = (a + w == lam) if fixed else (a + w <= lam)
                    if ok:
                        pairs.append((rb, 0))
                elif a + w in col_of:
                    pairs.append((rb, col_of[a + w]))
            if pairs:
                allowed[i] = tuple(pairs)
        self.allowed = allowed
        self._design = None

    @property
    def p(self):
        return len(self.weights)

    @property
    def row_rank(self):
        return sum(self.row_sizes)

    @property
    def col_rank(self):
        return sum(self.col_sizes)

    @property
    def row_offsets(self):
        return tuple(np.concatenate([[0], np.cumsum(self.row_sizes)])[:-1])

    @property
    def col_offsets(self):
        return tuple(np.concatenate([[0], np.cumsum(self.col_sizes)])[:-1])

    def sorted_blocks(self):
        """Allowed blocks as (i, row_block, col_block), in storage order."""
        return [
            (i, rb, cb)
            for i in sorted(self.allowed)
            for rb, cb in self.allowed[i]
        ]

    def block_shape(self, i, rb, cb):
        return (self.row_sizes[rb], self.col_sizes[cb])

    @property
    def n_free(self):
        return sum(
            self.row_sizes[rb] * self.col_sizes[cb]
            for _, rb, cb in self.sorted_blocks()
        )

    def design_blocks(self):
        """Free-parameter layout as an int64 array for the design kernels.

        Rows are ``(i, row_offset, row_size, col_offset, col_size, col0)``
        in storage order; ``col0`` is the block's first design column.
        """
        if self._design is None:
            roff, coff = self.row_offsets, self.col_offsets
            rows, col0 = [], 0
            for i, rb, cb in self.sorted_blocks():
                la, lb = self.row_sizes[rb], self.col_sizes[cb]
                rows.append((i, roff[rb], la, coff[cb], lb, col0))
                col0 += la * lb
            self._design = np.asarray(rows, dtype=np.int64).reshape(-1, 6)
        return self._design

    def mask(self, i):
        """Allowed (row_label, col_label) pairs of physical index ``i``."""
        return {
            (self.row_labels[rb], self.col_labels[cb])
            for rb, cb in self.allowed.get(i, ())
        }

    def same_chain(self, other):
        return (
            self.weights == other.weights
            and self.lam == other.lam
            and self.rho == other.rho
            and self.d == other.d
            and self.fixed == other.fixed
        )

    def compatible_with(self, other):
        """True iff ``other`` can follow this pattern in a chain."""
        return (
            self.same_chain(other)
            and other.ell == self.ell + 1
            and self.col_labels == other.row_labels
            and self.col_sizes == other.row_sizes
        )


def chain_patterns(weights, lam, d, rho, fixed=False):
    """Patterns for all ``d`` cores of one degree-structured chain."""
    weights = _validate_weights(weights)
    lam, d, rho = int(lam), int(d), int(rho)
    if lam < 0 or d < 1 or rho < 1:
        raise ConfigError(f"need lam >= 0, d >= 1, rho >= 1, got {(lam, d, rho)}")
    interfaces = _interface_blocks(weights, lam, d, rho, fixed)
    patterns = []
    for ell in range(1, d + 1):
        row_labels, row_sizes = interfaces[ell - 1]
        if ell == d:
            col_labels, col_sizes = (SENTINEL,), (1,)
        else:
            col_labels, col_sizes = interfaces[ell]
        patterns.append(
            BlockPattern(weights, lam, rho, d, ell, fixed,
                         row_labels, row_sizes, col_labels, col_sizes)
        )
    return patterns


def bounded_degree_pattern(weights, lam, d, ell, rho):
    """Support pattern of core ``ell`` for total degree ≤ ``lam``."""
    if not 1 <= int(ell) <= int(d):
        raise ConfigError(f"core index {ell} outside 1..{d}")
    return chain_patterns(weights, lam, d, rho, fixed=False)[int(ell) - 1]


def fixed_degree_pattern(weights, lam, d, ell, rho):
    """Support pattern of core ``ell`` for total degree exactly ``lam``."""
    if not 1 <= int(ell) <= int(d):
        raise ConfigError(f"core index {ell} outside 1..{d}")
    return chain_patterns(weights, lam, d, rho, fixed=True)[int(ell) - 1]


class BlockSparseCore:
    """One TT core stored as dense blocks on an allowed pattern.

    Mutable (the optimizer overwrites block entries in place); everything
    else in the chain — the pattern — is shared and immutable.
    """

    def __init__(self, pattern, blocks=None):
        self.pattern = pattern
        if blocks is None:
            blocks = {
                key: np.zeros(pattern.block_shape(*key))
                for key in pattern.sorted_blocks()
            }
        else:
            expect = set(pattern.sorted_blocks())
            if set(blocks) != expect:
                raise StructureError("block keys do not match the pattern")
            for key, mat in blocks.items():
                if mat.shape != pattern.block_shape(*key):
                    raise StructureError(
                        f"block {key} has shape {mat.shape}, "
                        f"expected {pattern.block_shape(*key)}"
                    )
        self.blocks = blocks

    def copy(self):
        return BlockSparseCore(
            self.pattern, {k: v.copy() for k, v in self.blocks.items()}
        )

    def to_dense(self):
        """Densify to an order-3 core of shape (row_rank, p, col_rank)."""
        pat = self.pattern
        out = np.zeros((pat.row_rank, pat.p, pat.col_rank))
        roff, coff = pat.row_offsets, pat.col_offsets
        for (i, rb, cb), mat in self.blocks.items():
            la, lb = mat.shape
            out[roff[rb] : roff[rb] + la, i, coff[cb] : coff[cb] + lb] = mat
        return out

    def get_vector(self):
        """Free parameters in storage order (matches ``design_blocks``)."""
        return np.concatenate(
            [self.blocks[key].ravel() for key in self.pattern.sorted_blocks()]
        )

    def set_vector(self, vec):
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (self.pattern.n_free,):
            raise DimensionError(
                f"parameter vector has shape {vec.shape}, "
                f"expected ({self.pattern.n_free},)"
            )
        pos = 0
        for key in self.pattern.sorted_blocks():
            block = self.blocks[key]
            n = block.size
            block[...] = vec[pos : pos + n].reshape(block.shape)
            pos += n


def init_block_sparse_cores(patterns, rng):
    """Random block-sparse chain: unit-variance fills, then block-wise
    left orthogonalization (QR per column block, carry absorbed rightward).

    Deterministic given the generator state; draws happen in storage
    order, core by core.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(rng))))
    for left, right in zip(patterns, patterns[1:]):
        if not left.compatible_with(right):
            raise StructureError(
                f"patterns at cores {left.ell} and {right.ell} are incompatible"
            )
    cores = []
    for pat in patterns:
        core = BlockSparseCore(pat)
        for key in pat.sorted_blocks():
            core.blocks[key][...] = rng.standard_normal(pat.block_shape(*key))
        cores.append(core)
    for c in range(len(cores) - 1):
        _orthogonalize_core(cores[c], cores[c + 1])
    return cores


def _orthogonalize_core(core, nxt):
    """Column-block-wise QR; the triangular carries move into ``nxt``."""
    pat = core.pattern
    for cb in range(len(pat.col_sizes)):
        contribs = sorted(
            (i, rb) for (i, rb, cb2) in pat.sorted_blocks() if cb2 == cb
        )
        if not contribs:
            continue
        stacked = np.vstack([core.blocks[(i, rb, cb)] for i, rb in contribs])
        n = pat.col_sizes[cb]
        if stacked.shape[0] < n:
            raise StructureError(
                f"core {pat.ell}: column block {cb} has {stacked.shape[0]} rows "
                f"for {n} columns; pattern caps are unsound"
            )
        q, r = np.linalg.qr(stacked, mode="reduced")
        pos = 0
        for i, rb in contribs:
            la = pat.row_sizes[rb]
            core.blocks[(i, rb, cb)][...] = q[pos : pos + la]
            pos += la
        for (i2, rb2, cb2), mat in nxt.blocks.items():
            if rb2 == cb:
                mat[...] = r @ mat


_EQUILIBRATION_ROUNDS = 3


def draw_isometric_chain(patterns, feature_gram, rng):
    """Random chain whose cut unfoldings have near-flat singular spectra.

    Block fills are unit Gaussians.  Raw fills assemble to functions whose
    unfolding singular values within a block routinely spread over two or
    three decades — some degree channels carry almost nothing — and the
    contraction rate of alternating fits degrades with exactly that
    spread.  The draw therefore equilibrates the chain: alternating
    left-to-right and right-to-left passes re-gauge every bond block by
    the inverse Cholesky factor of its interface Gram (no compensation on
    the neighbour — this reshapes the drawn law, not its pattern), which
    drives both-sided interface frames toward orthonormality and the cut
    spectra toward balance.  A final left pass leaves every law with unit
    norm under the sampling measure.

    Under a product measure the Grams propagate in closed form,
    ``G ← Cᵀ (G ⊗ g) C`` leftward and ``H ← Ĉ (H ⊗ g) Ĉᵀ`` rightward,
    with ``g`` the per-mode feature Gram, so no sampling is involved and
    the result is a deterministic function of the generator state.

    Parameters
    ----------
    patterns : sequence of BlockSparsePattern
        Chain patterns, validated for compatibility.
    feature_gram : ndarray
        ``(p, p)`` Gram of the mode features under the sampling measure.
    rng : numpy.random.Generator or int
        Draw source; integers seed a fresh Philox stream.

    Returns
    -------
    list of BlockSparseCore
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(rng))))
    for left, right in zip(patterns, patterns[1:]):
        if not left.compatible_with(right):
            raise StructureError(
                f"patterns at cores {left.ell} and {right.ell} are incompatible"
            )
    feature_gram = np.asarray(feature_gram, dtype=float)
    p = len(patterns[0].weights)
    if feature_gram.shape != (p, p):
        raise DimensionError(
            f"feature Gram has shape {feature_gram.shape}, expected ({p}, {p})"
        )
    cores = []
    for pat in patterns:
        core = BlockSparseCore(pat)
        for key in pat.sorted_blocks():
            core.blocks[key][...] = rng.standard_normal(pat.block_shape(*key))
        cores.append(core)
    for _ in range(_EQUILIBRATION_ROUNDS):
        _normalize_columns(cores, feature_gram)
        _normalize_rows(cores, feature_gram)
    _normalize_columns(cores, feature_gram)
    return cores


def _interface_gram(core, prev_gram, feature_gram):
    """Gram of the bond functions after ``core``: ``Cᵀ (G ⊗ g) C``."""
    pat = core.pattern
    roff, coff = pat.row_offsets, pat.col_offsets
    out = np.zeros((pat.col_rank, pat.col_rank))
    blocks = pat.sorted_blocks()
    for i, rb, cb in blocks:
        left = core.blocks[(i, rb, cb)]
        for i2, rb2, cb2 in blocks:
            weight = feature_gram[i, i2]
            if weight == 0.0:
                continue
            sub = prev_gram[
                roff[rb] : roff[rb] + pat.row_sizes[rb],
                roff[rb2] : roff[rb2] + pat.row_sizes[rb2],
            ]
            out[
                coff[cb] : coff[cb] + pat.col_sizes[cb],
                coff[cb2] : coff[cb2] + pat.col_sizes[cb2],
            ] += weight * (left.T @ sub @ core.blocks[(i2, rb2, cb2)])
    return out


def _reverse_gram(core, next_gram, feature_gram):
    """Gram of the bond functions before ``core``: ``Ĉ (H ⊗ g) Ĉᵀ``."""
    pat = core.pattern
    roff, coff = pat.row_offsets, pat.col_offsets
    out = np.zeros((pat.row_rank, pat.row_rank))
    blocks = pat.sorted_blocks()
    for i, rb, cb in blocks:
        left = core.blocks[(i, rb, cb)]
        for i2, rb2, cb2 in blocks:
            weight = feature_gram[i, i2]
            if weight == 0.0:
                continue
            sub = next_gram[
                coff[cb] : coff[cb] + pat.col_sizes[cb],
                coff[cb2] : coff[cb2] + pat.col_sizes[cb2],
            ]
            out[
                roff[rb] : roff[rb] + pat.row_sizes[rb],
                roff[rb2] : roff[rb2] + pat.row_sizes[rb2],
            ] += weight * (left @ sub @ core.blocks[(i2, rb2, cb2)].T)
    return out


def _block_cholesky(gram, offsets, sizes, ell):
    """Cholesky factor (lower) of each diagonal block, with jitter retry."""
    factors = []
    for b, size in enumerate(sizes):
        sub = gram[offsets[b] : offsets[b] + size, offsets[b] : offsets[b] + size]
        jitter = 0.0
        for _ in range(3):
            try:
                factors.append(np.linalg.cholesky(sub + jitter * np.eye(size)))
                break
            except np.linalg.LinAlgError:
                jitter = max(jitter * 100.0, 1e-12 * (np.trace(sub) + 1.0))
        else:
            raise NumericalAbortError(
                f"core {ell}: bond block {b} has a degenerate interface Gram"
            )
    return factors


def _apply_block_inverse(gram, inv, offsets, sizes):
    """In-place congruence ``gram ← S gram Sᵀ`` with ``S = blockdiag(inv)``."""
    for b, size in enumerate(sizes):
        rows = slice(offsets[b], offsets[b] + size)
        gram[rows, :] = inv[b] @ gram[rows, :]
    for b, size in enumerate(sizes):
        cols = slice(offsets[b], offsets[b] + size)
        gram[:, cols] = gram[:, cols] @ inv[b].T


def _normalize_columns(cores, feature_gram):
    """Left-to-right pass: orthonormalize each column block's functions."""
    gram = np.ones((1, 1))
    for core in cores:
        pat = core.pattern
        gram = _interface_gram(core, gram, feature_gram)
        factors = _block_cholesky(gram, pat.col_offsets, pat.col_sizes, pat.ell)
        for (i, rb, cb), mat in core.blocks.items():
            mat[...] = np.linalg.solve(factors[cb], mat.T).T
        inv = [np.linalg.inv(f) for f in factors]
        _apply_block_inverse(gram, inv, pat.col_offsets, pat.col_sizes)


def _normalize_rows(cores, feature_gram):
    """Right-to-left pass: orthonormalize each row block's functions."""
    gram = np.ones((1, 1))
    for core in reversed(cores):
        pat = core.pattern
        gram = _reverse_gram(core, gram, feature_gram)
        factors = _block_cholesky(gram, pat.row_offsets, pat.row_sizes, pat.ell)
        for (i, rb, cb), mat in core.blocks.items():
            mat[...] = np.linalg.solve(factors[rb], mat)
        inv = [np.linalg.inv(f) for f in factors]
        _apply_block_inverse(gram, inv, pat.row_offsets, pat.row_sizes)


def chain_to_tt(cores, label_dim=None):
    """Densify a block-sparse chain into a :class:`TensorTrain`."""
    if not cores:
        raise StructureError("empty core chain")
    for left, right in zip(cores, cores[1:]):
        if not left.pattern.compatible_with(right.pattern):
            raise StructureError(
                f"patterns at cores {left.pattern.ell} and "
                f"{right.pattern.ell} are incompatible"
            )
    return TensorTrain([c.to_dense() for c in cores], label_dim=label_dim)


def apply_degree_operator(phi, weights):
    """Multiply each entry by its total degree: ``(Lφ)_I = (Σ_k w(i_k)) φ_I``."""
    weights = _validate_weights(weights)
    phi = np.asarray(phi, dtype=float)
    p = len(weights)
    if phi.shape != (p,) * phi.ndim or phi.ndim == 0:
        raise DimensionError(
            f"tensor shape {phi.shape} is not ({p},)^d for the degree map"
        )
    w = np.asarray(weights, dtype=float)
    total = np.zeros(phi.shape)
    for axis in range(phi.ndim):
        shape = [1] * phi.ndim
        shape[axis] = p
        total += w.reshape(shape)
    return total * phi


def assemble_bounded_degree(fixed_degree_tts):
    """Direct sum of fixed-degree trains into one bounded-degree train.

    The inputs' terminal accept labels are summed implicitly by TT
    addition (first cores concatenate, interiors go block diagonal, last
    cores stack), which is the all-ones contraction of the explicit
    block-diagonal construction.
    """
    tts = list(fixed_degree_tts)
    if not tts:
        raise StructureError("no fixed-degree summands given")
    first = tts[0]
    for tt in tts[1:]:
        if tt.dims != first.dims or tt.label_dim != first.label_dim:
            raise StructureError(
                f"summand dims {tt.dims} do not match {first.dims}"
            )
    out = tts[0]
    for tt in tts[1:]:
        out = out + tt
    return out
