"""Selection tables and the shared-core model ensemble.

Each component law f̂_k is a TT assembled from a pool of cores: at mode
``ℓ``, component ``k`` uses the core of *activation type* ``S_{k,ℓ}``.
For laws with local interactions of window ``L`` the table is banded:
type 1 left of the band, types ``2..2L+2`` across it, and the
pass-through type ``2L+3`` right of it, so distant components share the
same cores and the sample complexity stops growing with ``d``.
"""

import numpy as np

from .blocks import BlockSparseCore, chain_patterns, draw_isometric_chain
from .errors import ConfigError, StructureError
from .tt import TensorTrain


class SelectionTable:
    """d×d table of activation types, entries in ``1..alpha``."""

    def __init__(self, table, alpha):
        table = np.asarray(table, dtype=int)
        if table.ndim != 2 or table.shape[0] != table.shape[1]:
            raise ConfigError(f"selection table must be square, got {table.shape}")
        alpha = int(alpha)
        if table.min() < 1 or table.max() > alpha:
            raise ConfigError(
                f"table entries span [{table.min()}, {table.max()}], "
                f"allowed range is [1, {alpha}]"
            )
        self.table = table
        self.table.setflags(write=False)
        self.alpha = alpha

    @property
    def d(self):
        return self.table.shape[0]

    def entry(self, k, ell):
        """Activation type of core ``ell`` inside component ``k`` (1-based)."""
        if not (1 <= k <= self.d and 1 <= ell <= self.d):
            raise IndexError(f"entry ({k}, {ell}) outside [1, {self.d}]^2")
        return int(self.table[k - 1, ell - 1])

    def row(self, k):
        """Activation types of component ``k`` across all modes."""
        if not 1 <= k <= self.d:
            raise IndexError(f"component {k} outside 1..{self.d}")
        return tuple(int(v) for v in self.table[k - 1])

    def column_types(self, ell):
        """Sorted distinct types appearing at mode ``ell``."""
        return sorted(int(v) for v in set(self.table[:, ell - 1]))

    def usage(self, ell, j):
        """Components using core ``(ell, j)`` and their left-type partition.

        Returns ``(E, partition)`` where ``E`` is the sorted tuple of
        components ``e`` with ``S_{e,ell} = j`` and ``partition`` maps each
        left-neighbor type ``a = S_{e,ell-1}`` to its subset of ``E``
        (empty dict when ``ell = 1``).
        """
        if not 1 <= ell <= self.d:
            raise IndexError(f"mode {ell} outside 1..{self.d}")
        if not 1 <= j <= self.alpha:
            raise IndexError(f"type {j} outside 1..{self.alpha}")
        E = tuple(
            int(e) for e in np.flatnonzero(self.table[:, ell - 1] == j) + 1
        )
        partition = {}
        if ell > 1:
            for e in E:
                partition.setdefault(self.entry(e, ell - 1), []).append(e)
            partition = {a: tuple(es) for a, es in sorted(partition.items())}
        return E, partition


def local_selection_table(d, L):
    """Banded table for interaction window ``L``: ``alpha = 2L + 3`` types.

    ``S_{k,ℓ} = 1`` left of the band (``ℓ < k-L``), ``2L+3`` right of it
    (``ℓ > k+L``), and ``ℓ-k+L+2`` across it.
    """
    d, L = int(d), int(L)
    if d < 1 or L < 0:
        raise ConfigError(f"need d >= 1 and L >= 0, got d={d}, L={L}")
    alpha = 2 * L + 3
    k = np.arange(1, d + 1)[:, None]
    ell = np.arange(1, d + 1)[None, :]
    middle = ell - k + L + 2
    table = np.where(ell < k - L, 1, np.where(ell > k + L, alpha, middle))
    return SelectionTable(table, alpha)


def activation_usage(table, ell, j):
    """Usage sets of core ``(ell, j)`` (operation-name alias)."""
    return table.usage(ell, j)


class ModelEnsemble:
    """The trainable object: ``d·alpha`` block-sparse cores plus the table.

    All cores at a position share one :class:`BlockPattern`, so gauge
    matrices between activation types are shape-compatible by
    construction.
    """

    def __init__(self, dictionary, table, patterns, cores, lam, rho):
        if table.d != dictionary.d:
            raise StructureError(
                f"table is {table.d}x{table.d} but dictionary has "
                f"{dictionary.d} modes"
            )
        if len(patterns) != table.d:
            raise StructureError(
                f"got {len(patterns)} patterns for {table.d} modes"
            )
        for pat in patterns:
            if pat.p != dictionary.p:
                raise StructureError(
                    f"pattern at core {pat.ell} has p={pat.p}, "
                    f"dictionary has p={dictionary.p}"
                )
        for (ell, j), core in cores.items():
            if core.pattern is not patterns[ell - 1]:
                raise StructureError(
                    f"core ({ell}, {j}) does not share the position pattern"
                )
        for ell in range(1, table.d + 1):
            for j in table.column_types(ell):
                if (ell, j) not in cores:
                    raise StructureError(
                        f"table references core ({ell}, {j}) which is missing"
                    )
        self.dictionary = dictionary
        self.table = table
        self.patterns = list(patterns)
        self.cores = cores
        self.lam = int(lam)
        self.rho = int(rho)

    @property
    def d(self):
        return self.table.d

    def assemble_law(self, k):
        """Dense TT of component ``k``'s law, type-selected per mode."""
        if not 1 <= k <= self.d:
            raise IndexError(f"component {k} outside 1..{self.d}")
        dense = []
        for ell in range(1, self.d + 1):
            j = self.table.entry(k, ell)
            core = self.cores.get((ell, j))
            if core is None:
                raise StructureError(f"core ({ell}, {j}) is missing")
            dense.append(core.to_dense())
        return TensorTrain(dense)

    def predict(self, X):
        """Evaluate all component laws at the rows of ``X`` → (M, d)."""
        feats = self.dictionary.featurize_batch(X)
        out = np.empty((len(X), self.d))
        for k in range(1, self.d + 1):
            out[:, k - 1] = self.assemble_law(k).evaluate_batch(feats)
        return out

    def copy(self):
        cores = {key: core.copy() for key, core in self.cores.items()}
        return ModelEnsemble(
            self.dictionary, self.table, self.patterns, cores, self.lam, self.rho
        )

    def reinitialized(self, rng):
        """Fresh random ensemble with identical structure."""
        return random_ensemble(
            self.dictionary, self.table, self.lam, self.rho, rng
        )


def random_ensemble(dictionary, table, lam, rho, rng):
    """Random ensemble: one interface-isometric chain per activation type.

    Each chain is drawn by :func:`~ttlaw.blocks.draw_isometric_chain`, so
    every law's bond functions are orthonormal (within blocks) under the
    sampling measure — raw Gaussian fills produce laws with nearly
    degenerate interfaces that alternating fits recover only slowly.
    Draws happen type by type from a single generator, so the result is
    a deterministic function of the generator state.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(rng))))
    patterns = chain_patterns(dictionary.weights, lam, table.d, rho)
    gram = dictionary.feature_gram()
    cores = {}
    for j in range(1, table.alpha + 1):
        chain = draw_isometric_chain(patterns, gram, rng)
        for ell, core in enumerate(chain, start=1):
            cores[(ell, j)] = core
    return ModelEnsemble(dictionary, table, patterns, cores, lam, rho)


def ensemble_from_cores(dictionary, table, patterns, core_map, lam, rho):
    """Assemble an ensemble from explicit cores (deserialization path)."""
    cores = {}
    for (ell, j), blocks in core_map.items():
        cores[(ell, j)] = BlockSparseCore(patterns[ell - 1], blocks)
    return ModelEnsemble(dictionary, table, patterns, cores, lam, rho)
