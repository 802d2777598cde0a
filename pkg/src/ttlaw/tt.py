"""Tensor trains with an optional label leg on the last core.

A :class:`TensorTrain` stores an order-``d`` coefficient tensor as a chain
of order-3 cores ``C_l`` of shape ``(r_{l-1}, p_l, r_l)`` with boundary
ranks ``r_0 = r_d = 1``.  A vector-valued coefficient tensor (one output
per law component, say) carries an extra *label* leg of size ``n`` on the
last core; that core is stored as ``(r_{d-1}, p_d, n)``, which is the
row-major flattening of the order-4 core ``(r_{d-1}, p_d, 1, n)``.

Instances are immutable value objects: constructors copy their inputs and
mark the arrays read-only, and every operation returns a new train.
"""

import numpy as np

from .errors import CapExceededError, DimensionError, InputError, SingularGaugeError

#: largest dense tensor ``to_full`` will materialize (entries, not bytes)
DENSE_CAP = 10_000_000

#: relative singular-value cutoff for rank truncation in canonicalization
TRUNCATION_RTOL = 1e-12

#: gauge matrices with a larger condition estimate are rejected as singular
GAUGE_COND_LIMIT = 1e14


class TensorTrain:
    """Immutable tensor train.

    Parameters
    ----------
    cores : sequence of ndarray
        ``d`` arrays; core ``l`` has shape ``(r_{l-1}, p_l, r_l)``.  When
        ``label_dim`` is given, the trailing axis of the *last* core is the
        label leg of that size (the hidden boundary rank ``r_d`` is 1).
    label_dim : int, optional
        Size of the label leg on the last core, or ``None`` for a
        scalar-valued train.

    Raises
    ------
    DimensionError
        If adjacent ranks are incompatible, a boundary rank is not 1, or
        the label leg does not match ``label_dim``.
    InputError
        If any core contains a non-finite entry.
    """

    __slots__ = ("cores", "label_dim")

    def __init__(self, cores, label_dim=None):
        if len(cores) == 0:
            raise DimensionError("a tensor train needs at least one core")
        frozen = []
        for ell, core in enumerate(cores, start=1):
            arr = np.ascontiguousarray(core, dtype=float)
            if arr.ndim != 3:
                raise DimensionError(
                    f"core {ell} has order {arr.ndim}, expected 3", mode=ell
                )
            if not np.all(np.isfinite(arr)):
                raise InputError(f"core {ell} contains non-finite entries")
            frozen.append(arr)
        if frozen[0].shape[0] != 1:
            raise DimensionError(
                f"left boundary rank is {frozen[0].shape[0]}, expected 1", mode=1
            )
        d = len(frozen)
        for ell in range(d - 1):
            if frozen[ell].shape[2] != frozen[ell + 1].shape[0]:
                raise DimensionError(
                    f"rank mismatch at interface {ell + 1}: "
                    f"{frozen[ell].shape[2]} vs {frozen[ell + 1].shape[0]}",
                    mode=ell + 2,
                )
        tail = frozen[-1].shape[2]
        if label_dim is None:
            if tail != 1:
                raise DimensionError(
                    f"right boundary rank is {tail}, expected 1", mode=d
                )
        else:
            label_dim = int(label_dim)
            if label_dim < 1:
                raise DimensionError(f"label_dim must be positive, got {label_dim}")
            if tail != label_dim:
                raise DimensionError(
                    f"label leg has size {tail}, expected {label_dim}", mode=d
                )
        for arr in frozen:
            arr.setflags(write=False)
        object.__setattr__(self, "cores", tuple(frozen))
        object.__setattr__(self, "label_dim", label_dim)

    def __setattr__(self, name, value):
        raise AttributeError("TensorTrain is immutable")

    # -- basic descriptors -------------------------------------------------

    @property
    def order(self):
        """Number of modes ``d``."""
        return len(self.cores)

    @property
    def dims(self):
        """Physical dimensions ``(p_1, …, p_d)``."""
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self):
        """Ranks ``(r_0, …, r_d)`` including both boundaries (``r_d = 1``)."""
        inner = tuple(c.shape[0] for c in self.cores[1:])
        return (1,) + inner + (1,) if len(self.cores) > 1 else (1, 1)

    def __repr__(self):
        label = "" if self.label_dim is None else f", label_dim={self.label_dim}"
        return f"TensorTrain(dims={list(self.dims)}, ranks={list(self.ranks)}{label})"

    # -- evaluation --------------------------------------------------------

    def _check_features(self, features):
        if len(features) != self.order:
            raise DimensionError(
                f"got {len(features)} feature vectors for {self.order} modes"
            )

    def evaluate(self, features):
        """Contract against one feature vector per mode.

        Parameters
        ----------
        features : sequence of array_like
            ``d`` vectors; vector ``l`` must have length ``p_l``.

        Returns
        -------
        float or ndarray
            A scalar, or a vector of length ``label_dim`` when the train
            carries a label leg.
        """
        self._check_features(features)
        v = np.ones(1)
        for ell, (core, feat) in enumerate(zip(self.cores, features), start=1):
            feat = np.asarray(feat, dtype=float)
            if feat.shape != (core.shape[1],):
                raise DimensionError(
                    f"feature vector for mode {ell} has shape {feat.shape}, "
                    f"expected ({core.shape[1]},)",
                    mode=ell,
                )
            v = np.einsum("a,aib,i->b", v, core, feat)
        return v if self.label_dim is not None else float(v[0])

    def evaluate_batch(self, features, chunk=8192):
        """Vectorized :meth:`evaluate` over ``M`` points.

        Parameters
        ----------
        features : sequence of ndarray
            ``d`` matrices of shape ``(M, p_l)``.
        chunk : int
            Rows contracted per block, bounding transient memory.

        Returns
        -------
        ndarray
            Shape ``(M,)``, or ``(M, label_dim)`` with a label leg.
        """
        self._check_features(features)
        mats = []
        rows = None
        for ell, (core, feat) in enumerate(zip(self.cores, features), start=1):
            feat = np.asarray(feat, dtype=float)
            if feat.ndim != 2 or feat.shape[1] != core.shape[1]:
                raise DimensionError(
                    f"feature matrix for mode {ell} has shape {feat.shape}, "
                    f"expected (M, {core.shape[1]})",
                    mode=ell,
                )
            if rows is None:
                rows = feat.shape[0]
            elif feat.shape[0] != rows:
                raise DimensionError(
                    f"feature matrix for mode {ell} has {feat.shape[0]} rows, "
                    f"expected {rows}",
                    mode=ell,
                )
            mats.append(feat)
        tail = 1 if self.label_dim is None else self.label_dim
        out = np.empty((rows, tail))
        for start in range(0, rows, chunk):
            stop = min(start + chunk, rows)
            left = np.ones((stop - start, 1))
            for core, feat in zip(self.cores, mats):
                r0, p, r1 = core.shape
                tmp = (left @ core.reshape(r0, p * r1)).reshape(-1, p, r1)
                left = np.einsum("mi,mib->mb", feat[start:stop], tmp)
            out[start:stop] = left
        return out[:, 0] if self.label_dim is None else out

    def to_full(self, cap=DENSE_CAP):
        """Materialize the dense coefficient tensor.

        The result has shape ``dims`` (plus a trailing label axis when
        present).  Intended for tests and small-``d`` diagnostics only.

        Raises
        ------
        CapExceededError
            If the dense tensor would exceed ``cap`` entries.
        """
        tail = 1 if self.label_dim is None else self.label_dim
        required = int(np.prod([float(p) for p in self.dims]) * tail)
        if required > cap:
            raise CapExceededError(
                f"dense tensor needs {required} entries, cap is {cap}",
                required=required,
            )
        out = np.ones((1, 1))
        for core in self.cores:
            r0, p, r1 = core.shape
            out = out @ core.reshape(r0, p * r1)
            out = out.reshape(-1, r1)
        shape = self.dims + (() if self.label_dim is None else (self.label_dim,))
        return out.reshape(shape)

    def norm(self):
        """Frobenius norm of the coefficient tensor (label leg included)."""
        carry = np.ones((1, 1))
        for core in self.cores:
            r0, p, r1 = core.shape
            mat = (carry @ core.reshape(r0, p * r1)).reshape(carry.shape[0] * p, r1)
            if mat.shape[0] < mat.shape[1]:
                carry = mat
            else:
                carry = np.linalg.qr(mat, mode="r")
        return float(np.linalg.norm(carry))

    # -- canonical forms ---------------------------------------------------

    def left_orthogonalize(self, rtol=TRUNCATION_RTOL):
        """Return an equal train whose cores ``1..d-1`` are left isometries.

        A right-to-left QR pass first gathers the whole tensor's weight
        into the first core; a left-to-right SVD pass then restores the
        train, dropping singular values below ``rtol`` times the largest
        one at each interface.  Ranks therefore shrink to minimal up to
        the tolerance while the tensor itself is preserved.
        """
        d = self.order
        cores = [np.array(c) for c in self.cores]
        for ell in range(d - 1, 0, -1):
            r0, p, r1 = cores[ell].shape
            mat = cores[ell].reshape(r0, p * r1)
            q, r = np.linalg.qr(mat.T, mode="reduced")
            cores[ell] = q.T.reshape(-1, p, r1)
            cores[ell - 1] = np.einsum("aib,cb->aic", cores[ell - 1], r)
        for ell in range(d - 1):
            r0, p, r1 = cores[ell].shape
            mat = cores[ell].reshape(r0 * p, r1)
            u, s, vt = np.linalg.svd(mat, full_matrices=False)
            keep = max(1, int(np.sum(s > rtol * s[0]))) if s.size else 1
            cores[ell] = u[:, :keep].reshape(r0, p, keep)
            carry = s[:keep, None] * vt[:keep]
            cores[ell + 1] = np.einsum("ab,bic->aic", carry, cores[ell + 1])
        return TensorTrain(cores, label_dim=self.label_dim)

    def apply_gauge(self, gauges):
        """Insert ``A_l A_l^{-1}`` at every interface.

        Cores map as ``C_1 -> C_1 A_1^{-1}``, ``C_l -> A_{l-1} C_l A_l^{-1}``
        and ``C_d -> A_{d-1} C_d``, which leaves the represented tensor
        unchanged for invertible ``A_l``.

        Parameters
        ----------
        gauges : sequence of ndarray
            ``d-1`` square matrices; ``A_l`` has size ``r_l``.

        Raises
        ------
        SingularGaugeError
            If any gauge matrix has a condition estimate above 1e14.
        """
        d = self.order
        ranks = self.ranks
        if len(gauges) != d - 1:
            raise DimensionError(
                f"got {len(gauges)} gauge matrices for {d - 1} interfaces"
            )
        mats = []
        for ell, g in enumerate(gauges, start=1):
            g = np.asarray(g, dtype=float)
            if g.shape != (ranks[ell], ranks[ell]):
                raise DimensionError(
                    f"gauge matrix {ell} has shape {g.shape}, expected "
                    f"({ranks[ell]}, {ranks[ell]})",
                    mode=ell,
                )
            if not np.all(np.isfinite(g)):
                raise SingularGaugeError(f"gauge matrix {ell} has non-finite entries")
            with np.errstate(divide="ignore", invalid="ignore"):
                cond = np.linalg.cond(g)
            if not np.isfinite(cond) or cond > GAUGE_COND_LIMIT:
                raise SingularGaugeError(
                    f"gauge matrix {ell} is singular to working precision "
                    f"(condition estimate {cond:.3g})"
                )
            mats.append(g)
        cores = []
        for ell in range(d):
            core = self.cores[ell]
            if ell > 0:
                r0, p, r1 = core.shape
                core = (mats[ell - 1] @ core.reshape(r0, p * r1)).reshape(-1, p, r1)
            if ell < d - 1:
                r0, p, r1 = core.shape
                # right-multiply by A^{-1} via a solve, not an explicit inverse
                flat = core.reshape(r0 * p, r1)
                core = np.linalg.solve(mats[ell].T, flat.T).T.reshape(r0, p, r1)
            cores.append(core)
        return TensorTrain(cores, label_dim=self.label_dim)

    def interface_singular_values(self, ell):
        """Singular values of the mode-``(1..ell)`` unfolding.

        Uses the mixed-canonical route: a left QR sweep up to ``ell``, a
        right LQ sweep down to ``ell+1``, and one small SVD of the product
        of the two carry matrices.  No dense unfolding is formed.

        Parameters
        ----------
        ell : int
            Interface index in ``1..d-1``.

        Returns
        -------
        ndarray
            Non-increasing singular values; their squares sum to the
            squared Frobenius norm of the tensor.
        """
        d = self.order
        if not 1 <= ell <= d - 1:
            raise IndexError(f"interface index {ell} outside 1..{d - 1}")
        left = np.ones((1, 1))
        for t in range(ell):
            r0, p, r1 = self.cores[t].shape
            mat = (left @ self.cores[t].reshape(r0, p * r1)).reshape(-1, r1)
            if mat.shape[0] < mat.shape[1]:
                left = mat
            else:
                left = np.linalg.qr(mat, mode="r")
        # the label leg (if any) joins the column index group of the unfolding
        right = np.eye(self.cores[-1].shape[2])
        for t in range(d - 1, ell - 1, -1):
            r0, p, r1 = self.cores[t].shape
            mat = (self.cores[t].reshape(r0 * p, r1) @ right).reshape(r0, -1)
            if mat.shape[1] < mat.shape[0]:
                right = mat
            else:
                right = np.linalg.qr(mat.T, mode="r").T
        return np.linalg.svd(left @ right, compute_uv=False)

    # -- algebra -----------------------------------------------------------

    def __add__(self, other):
        """Direct-sum addition of two trains over the same mode space."""
        if not isinstance(other, TensorTrain):
            return NotImplemented
        if self.dims != other.dims:
            raise DimensionError(
                f"cannot add trains with dims {self.dims} and {other.dims}"
            )
        if self.label_dim != other.label_dim:
            raise DimensionError(
                f"cannot add trains with label dims {self.label_dim} "
                f"and {other.label_dim}"
            )
        d = self.order
        if d == 1:
            return TensorTrain(
                [self.cores[0] + other.cores[0]], label_dim=self.label_dim
            )
        cores = []
        for ell in range(d):
            a, b = self.cores[ell], other.cores[ell]
            p = a.shape[1]
            if ell == 0:
                cores.append(np.concatenate([a, b], axis=2))
            elif ell == d - 1:
                cores.append(np.concatenate([a, b], axis=0))
            else:
                block = np.zeros((a.shape[0] + b.shape[0], p, a.shape[2] + b.shape[2]))
                block[: a.shape[0], :, : a.shape[2]] = a
                block[a.shape[0] :, :, a.shape[2] :] = b
                cores.append(block)
        return TensorTrain(cores, label_dim=self.label_dim)

    def scale(self, factor):
        """Return the train multiplied by a scalar."""
        factor = float(factor)
        cores = list(self.cores)
        cores[0] = cores[0] * factor
        return TensorTrain(cores, label_dim=self.label_dim)


# -- free-function aliases mirroring the operation names -------------------


def tt_evaluate(tt, features):
    """Evaluate ``tt`` on one feature vector per mode."""
    return tt.evaluate(features)


def tt_to_full(tt, cap=DENSE_CAP):
    """Materialize the dense coefficient tensor of ``tt``."""
    return tt.to_full(cap=cap)


def left_orthogonalize(tt, rtol=TRUNCATION_RTOL):
    """Left-canonicalize ``tt`` with rank truncation at relative ``rtol``."""
    return tt.left_orthogonalize(rtol=rtol)


def apply_gauge(tt, gauges):
    """Apply a gauge sequence to ``tt`` (tensor-preserving for invertible gauges)."""
    return tt.apply_gauge(gauges)


def interface_singular_values(tt, ell):
    """Singular values of the mode-``(1..ell)`` unfolding of ``tt``."""
    return tt.interface_singular_values(ell)
