"""Alternating least squares with gauge-mediated weight sharing.

One sweep walks the mode positions left to right. At position ``ℓ``
every activation type ``j`` present in that table column is updated
once: if the core has a single user (or ``ℓ = 1``) it is refit by
restricted least squares over its users; a core shared across
components is refit on the largest left-type class, and every other
class adapts through a block-diagonal gauge on its own left-neighbor
core.  Each update minimizes the loss restricted to the components it
touches, so per-step losses are non-increasing up to solver tolerance;
an acceptance guard keeps the incumbent parameters whenever a candidate
would not improve on them.

By default each restricted problem is solved exactly: the design is
materialized and factorized orthogonally (minimum-norm when
rank-deficient), so noiseless recovery runs converge to solver
precision.  With ``ridge > 0`` normal equations are accumulated
chunk-wise with a symmetric rank-k update, solved by Cholesky with a
relative ridge, and polished by one step of iterative refinement; the
ridge biases every fit, which puts a floor under the reachable loss,
so it is an opt-in stabilizer rather than the default.  Candidates are
always compared on their exact restricted loss.
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag, cho_factor, cho_solve
from scipy.linalg.blas import dsyrk

from .errors import ConfigError, InputError, NumericalAbortError, StructureError
from .kernels import advance_stack, fill_design
from .rng import INIT, substream

DEFAULT_RIDGE = 0.0
#: Relative slack on the acceptance guard: a candidate replaces the
#: incumbent core only if its restricted loss is within this factor of
#: never exceeding the incumbent's.
ACCEPT_SLACK = 5e-10
_CHUNK_DOUBLES = 1 << 22  # ~32 MB design chunks
_CACHE_DOUBLES = 1 << 25  # cache assembled designs up to ~256 MB


# -- data & options -----------------------------------------------------------


class TrainingSet:
    """States ``X`` and derivative targets ``Y``, both ``(M, d)``."""

    def __init__(self, X, Y, domains=None):
        X = np.ascontiguousarray(X, dtype=float)
        Y = np.ascontiguousarray(Y, dtype=float)
        if X.ndim != 2 or Y.shape != X.shape:
            raise InputError(
                f"states {X.shape} and targets {Y.shape} must match as (M, d)"
            )
        if X.shape[0] < 1:
            raise InputError("training set is empty")
        if not (np.isfinite(X).all() and np.isfinite(Y).all()):
            raise InputError("training data contain non-finite entries")
        self.X = X
        self.Y = Y
        self.domains = None if domains is None else tuple(map(tuple, domains))

    @property
    def M(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]


@dataclass(frozen=True)
class TrainOptions:
    max_sweeps: int = 10
    loss_rel_tol: float = 1e-8
    ridge: float = DEFAULT_RIDGE
    seed: int = 0
    restarts: int = 1

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ConfigError(f"max_sweeps must be >= 1, got {self.max_sweeps}")
        if self.loss_rel_tol < 0:
            raise ConfigError("loss_rel_tol must be non-negative")
        if self.ridge < 0:
            raise ConfigError("ridge must be non-negative")
        if self.restarts < 1:
            raise ConfigError(f"restarts must be >= 1, got {self.restarts}")


@dataclass
class StepRecord:
    restart: int
    sweep: int
    step: int
    kind: str  # "fit", "gauge", or "sweep"
    ell: int  # position of the updated core (0 for sweep rows)
    type: int  # activation type of the updated core (0 for sweep rows)
    restricted_loss: float  # loss over the touched components, after
    loss_before: float  # same restriction, before the update
    full_loss: float  # only on sweep rows
    millis: float
    flags: tuple = ()


@dataclass
class TrainHistory:
    """Step-by-step record of a training run (all restarts)."""

    records: list = field(default_factory=list)
    final_losses: dict = field(default_factory=dict)

    def add(self, record):
        self.records.append(record)

    @property
    def best_restart(self):
        return min(self.final_losses, key=lambda r: (self.final_losses[r], r))

    @property
    def final_loss(self):
        return self.final_losses[self.best_restart]

    def sweep_records(self, restart=None):
        return [
            r
            for r in self.records
            if r.kind == "sweep" and (restart is None or r.restart == restart)
        ]

    def step_records(self, restart=None):
        return [
            r
            for r in self.records
            if r.kind != "sweep" and (restart is None or r.restart == restart)
        ]

    def to_csv(self, path):
        """Write the pinned 7-column history CSV."""
        close = False
        if hasattr(path, "write"):
            fh = path
        else:
            fh = open(path, "w")
            close = True
        try:
            fh.write("sweep,step,ell,type,restricted_loss,full_loss,millis\n")
            for r in self.records:
                rl = "" if r.kind == "sweep" else repr(r.restricted_loss)
                fl = repr(r.full_loss) if r.kind == "sweep" else ""
                fh.write(
                    f"{r.sweep},{r.step},{r.ell},{r.type},{rl},{fl},"
                    f"{r.millis:.3f}\n"
                )
        finally:
            if close:
                fh.close()


# -- restricted loss (assembly route) -----------------------------------------


def restricted_loss(ens, data, E):
    """Loss over components ``E``, via full per-component law assembly.

    This is the slow reference route: each law is assembled as a dense
    TT and evaluated point-wise. The trainer never calls it; tests use
    it to cross-check the incremental stack contractions.
    """
    E = tuple(sorted(set(int(e) for e in E)))
    if not E:
        warnings.warn("restricted loss over an empty component set is 0",
                      RuntimeWarning, stacklevel=2)
        return 0.0
    if E[0] < 1 or E[-1] > ens.d:
        raise IndexError(f"components {E} outside 1..{ens.d}")
    feats = ens.dictionary.featurize_batch(data.X)
    total = 0.0
    for e in E:
        resid = ens.assemble_law(e).evaluate_batch(feats) - data.Y[:, e - 1]
        total += float(resid @ resid)
    return total


def full_loss(ens, data):
    """Loss over all components (assembly route)."""
    return restricted_loss(ens, data, range(1, ens.d + 1))


# -- solver internals ----------------------------------------------------------


class _DenseCache:
    """Dense (and transposed) views of the ensemble's cores, invalidated
    whenever the trainer updates a core."""

    def __init__(self, ens):
        self.ens = ens
        self._dense = {}
        self._trans = {}

    def __call__(self, ell, j):
        key = (ell, j)
        out = self._dense.get(key)
        if out is None:
            out = self.ens.cores[key].to_dense()
            self._dense[key] = out
        return out

    def transposed(self, ell, j):
        key = (ell, j)
        out = self._trans.get(key)
        if out is None:
            out = np.ascontiguousarray(self(ell, j).transpose(2, 1, 0))
            self._trans[key] = out
        return out

    def invalidate(self, ell, j):
        self._dense.pop((ell, j), None)
        self._trans.pop((ell, j), None)


def _advance_right(right, core_t, feat):
    """Pull a right interface stack one mode leftward.

    ``core_t`` is the dense core already transposed to ``(r1, p, r0)``.
    """
    return advance_stack(right, core_t, feat)


class _DesignSource:
    """Re-iterable chunked assembly of a stacked restricted design.

    ``parts`` is a list of ``(left, right, y)`` triples, one per
    component, each over the same samples; chunks are yielded in a fixed
    order so repeated passes are bit-reproducible. Assembled chunks are
    cached when the whole design fits the cache bound.
    """

    def __init__(self, parts, feat, blocks, n):
        self.parts = parts
        self.feat = feat
        self.blocks = blocks
        self.n = int(n)
        self.rows = sum(part[2].shape[0] for part in parts)
        self._cache = [] if self.rows * self.n <= _CACHE_DOUBLES else None
        self._cached = False

    def chunks(self):
        if self._cached:
            yield from self._cache
            return
        caching = self._cache is not None
        step = max(256, _CHUNK_DOUBLES // max(self.n, 1))
        for left, right, y in self.parts:
            M = y.shape[0]
            for s in range(0, M, step):
                t = min(M, s + step)
                D = np.empty((t - s, self.n))
                fill_design(D, left[s:t], right[s:t], self.feat[s:t], self.blocks)
                pair = (D, y[s:t])
                if caching:
                    self._cache.append(pair)
                yield pair
        if caching:
            self._cached = True


def _solve_restricted(src, ridge, theta_inc):
    """Fit the stacked restricted least-squares problem.

    Returns ``(theta, loss_after, loss_before, flags)``; ``theta`` is
    ``None`` when the incumbent was kept by the acceptance guard.
    """
    n = src.n
    flags = set()

    if ridge == 0.0:
        pairs = list(src.chunks())
        D = np.vstack([p[0] for p in pairs])
        y = np.concatenate([p[1] for p in pairs])
        with np.errstate(over="ignore", invalid="ignore"):
            resid_inc = y - D @ theta_inc
            loss_inc = float(resid_inc @ resid_inc)
        if not (np.isfinite(loss_inc) and np.isfinite(D).all()):
            return None, float("inf"), float(loss_inc), {"non-finite"}
        theta, _, rank, _ = np.linalg.lstsq(D, y, rcond=None)
        if rank < n:
            flags.add("min-norm")
        resid = y - D @ theta
        candidates = [(theta, float(resid @ resid))]
    else:
        G = np.zeros((n, n), order="F")
        b = np.zeros(n)
        loss_inc = 0.0
        ynorm2 = 0.0
        for D, y in src.chunks():
            G = dsyrk(1.0, D.T, beta=1.0, c=G, trans=0, lower=0, overwrite_c=1)
            b += D.T @ y
            r = y - D @ theta_inc
            loss_inc += r @ r
            ynorm2 += y @ y
        trace = float(np.trace(G))
        if not np.isfinite(trace) or not np.isfinite(loss_inc):
            return None, float("inf"), float(loss_inc), {"non-finite"}
        if not b.any():
            # Zero right-hand side: the ridge solution is exactly zero.
            candidates = [(np.zeros(n), float(ynorm2))]
            flags.add("zero-rhs")
        else:
            lam = ridge * (trace / n if trace > 0 else 1.0)
            factor = None
            for _ in range(4):
                Greg = G.copy(order="F")
                Greg.flat[:: n + 1] += lam
                try:
                    factor = cho_factor(Greg, lower=False)
                    break
                except np.linalg.LinAlgError:
                    lam *= 100.0
                    flags.add("regularized")
            if factor is None:
                Gs = np.triu(G) + np.triu(G, 1).T
                Gs.flat[:: n + 1] += lam
                theta0 = np.linalg.lstsq(Gs, b, rcond=None)[0]
                flags.add("fallback-gram")
            else:
                theta0 = cho_solve(factor, b)
            loss0 = 0.0
            rhs = np.zeros(n)
            for D, y in src.chunks():
                e = y - D @ theta0
                loss0 += e @ e
                rhs += D.T @ e
            candidates = [(theta0, float(loss0))]
            if factor is not None:
                # One step of iterated ridge refinement: the correction
                # drives theta toward the unregularized least-squares
                # solution (bias O(lam^2) instead of O(lam)); the
                # candidate comparison below keeps whichever achieves
                # the lower true loss.
                theta1 = theta0 + cho_solve(factor, rhs)
                loss1 = 0.0
                for D, y in src.chunks():
                    e = y - D @ theta1
                    loss1 += e @ e
                candidates.append((theta1, float(loss1)))

    theta, loss = min(candidates, key=lambda c: c[1])
    loss_inc = float(loss_inc)
    if not np.isfinite(loss):
        return None, float("inf"), loss_inc, flags | {"non-finite"}
    if loss <= loss_inc * (1.0 + ACCEPT_SLACK):
        return theta, loss, loss_inc, flags
    flags.add("kept-incumbent")
    return None, loss_inc, loss_inc, flags


def _fit_core(ens, dense, ell, j, parts, feat, ridge):
    """Refit core ``(ell, j)`` on stacked designs; returns loss info."""
    core = ens.cores[(ell, j)]
    pat = core.pattern
    src = _DesignSource(parts, feat, pat.design_blocks(), pat.n_free)
    theta, loss, loss_before, flags = _solve_restricted(
        src, ridge, core.get_vector()
    )
    if theta is not None:
        core.set_vector(theta)
        dense.invalidate(ell, j)
    return loss, loss_before, flags


def _gauge_layout(sizes):
    rows, col0, off = [], 0, 0
    for s in sizes:
        rows.append((0, off, s, off, s, col0))
        col0 += s * s
        off += s
    return np.asarray(rows, dtype=np.int64).reshape(-1, 6), col0


def _identity_gauge(sizes):
    return np.concatenate([np.eye(s).ravel() for s in sizes])


def _fit_gauge(ens, dense, ell, a, parts, ones, ridge):
    """Refit the gauge on core ``(ell-1, a)``; returns (U, losses, flags)."""
    sizes = ens.patterns[ell - 1].row_sizes
    blocks, n_u = _gauge_layout(sizes)
    src = _DesignSource(parts, ones, blocks, n_u)
    theta_id = _identity_gauge(sizes)
    theta, loss, loss_before, flags = _solve_restricted(src, ridge, theta_id)
    changed = theta is not None
    vec = theta if changed else theta_id
    mats, off = [], 0
    for s in sizes:
        mats.append(vec[off : off + s * s].reshape(s, s))
        off += s * s
    if changed:
        left = ens.cores[(ell - 1, a)]
        for (i, rb, cb), blk in left.blocks.items():
            blk[...] = blk @ mats[cb]
        dense.invalidate(ell - 1, a)
    return block_diag(*mats), loss, loss_before, flags, changed


# -- sweeping ------------------------------------------------------------------


class _Sweeper:
    """One restart's incremental training state."""

    def __init__(self, ens, data, feats, options, history, restart):
        self.ens = ens
        self.table = ens.table
        self.d = ens.d
        self.M = data.M
        self.feats = feats
        self.opt = options
        self.hist = history
        self.restart = restart
        self.dense = _DenseCache(ens)
        self.ones = np.ones((self.M, 1))
        self.rows = {e: ens.table.row(e) for e in range(1, self.d + 1)}
        self.ycols = [
            np.ascontiguousarray(data.Y[:, e - 1]) for e in range(1, self.d + 1)
        ]
        self.step = 0

    def prefix_key(self, e, t):
        return self.rows[e][:t]

    def suffix_key(self, e, t):
        return self.rows[e][t - 1 :]

    def run(self):
        prev = None
        final = None
        for sweep in range(1, self.opt.max_sweeps + 1):
            t0 = time.perf_counter()
            final = self._one_sweep(sweep)
            self.step += 1
            self.hist.add(
                StepRecord(
                    self.restart, sweep, self.step, "sweep", 0, 0,
                    float("nan"), float("nan"), final,
                    (time.perf_counter() - t0) * 1e3,
                )
            )
            if not np.isfinite(final):
                raise NumericalAbortError(
                    "full loss became non-finite",
                    snapshot={"restart": self.restart, "sweep": sweep,
                              "full_loss": final},
                )
            if final == 0.0:
                break
            if prev is not None and (prev - final) < self.opt.loss_rel_tol * prev:
                break
            prev = final
        return final

    def _right_maps(self):
        maps = {self.d + 1: {(): self.ones}}
        for t in range(self.d, 1, -1):
            cur = {}
            for e in range(1, self.d + 1):
                key = self.suffix_key(e, t)
                if key in cur:
                    continue
                cur[key] = _advance_right(
                    maps[t + 1][key[1:]],
                    self.dense.transposed(t, key[0]),
                    self.feats[t - 1],
                )
            maps[t] = cur
        return maps

    def _advance_left(self, prev, ell):
        cur = {}
        for e in range(1, self.d + 1):
            key = self.prefix_key(e, ell)
            if key in cur:
                continue
            cur[key] = advance_stack(
                prev[key[:-1]], self.dense(ell, key[-1]), self.feats[ell - 1]
            )
        return cur

    def _one_sweep(self, sweep):
        right = self._right_maps()
        left = {0: {(): self.ones}}
        for ell in range(1, self.d + 1):
            lmap = left[ell - 1]
            for j in self.table.column_types(ell):
                E, parts = self.table.usage(ell, j)
                if ell == 1 or len(E) == 1:
                    self._do_fit(sweep, ell, j, E, lmap, right)
                else:
                    a_star = min(parts, key=lambda a: (-len(parts[a]), a))
                    self._do_fit(sweep, ell, j, parts[a_star], lmap, right)
                    for a in sorted(parts):
                        if a != a_star:
                            self._do_gauge(sweep, ell, j, a, parts[a], left, right)
            left[ell] = self._advance_left(lmap, ell)
            left.pop(ell - 2, None)
        total = 0.0
        last = left[self.d]
        for e in range(1, self.d + 1):
            resid = last[self.prefix_key(e, self.d)][:, 0] - self.ycols[e - 1]
            total += float(resid @ resid)
        return total

    def _do_fit(self, sweep, ell, j, E_fit, lmap, right):
        t0 = time.perf_counter()
        parts = [
            (
                lmap[self.prefix_key(e, ell - 1)],
                right[ell + 1][self.suffix_key(e, ell + 1)],
                self.ycols[e - 1],
            )
            for e in E_fit
        ]
        loss, before, flags = _fit_core(
            self.ens, self.dense, ell, j, parts, self.feats[ell - 1],
            self.opt.ridge,
        )
        self._record(sweep, "fit", ell, j, loss, before, flags, t0)

    def _do_gauge(self, sweep, ell, j, a, E_a, left, right):
        t0 = time.perf_counter()
        core_t = self.dense.transposed(ell, j)
        lmap = left[ell - 1]
        rtil = {}
        parts = []
        for e in E_a:
            skey = self.suffix_key(e, ell + 1)
            if skey not in rtil:
                rtil[skey] = _advance_right(
                    right[ell + 1][skey], core_t, self.feats[ell - 1]
                )
            parts.append(
                (lmap[self.prefix_key(e, ell - 1)], rtil[skey], self.ycols[e - 1])
            )
        _, loss, before, flags, changed = _fit_gauge(
            self.ens, self.dense, ell, a, parts, self.ones, self.opt.ridge
        )
        if changed:
            prev = left[ell - 2]
            upd = self.dense(ell - 1, a)
            for key in list(lmap):
                if key[-1] == a:
                    lmap[key] = advance_stack(
                        prev[key[:-1]], upd, self.feats[ell - 2]
                    )
        self._record(sweep, "gauge", ell - 1, a, loss, before, flags, t0)

    def _record(self, sweep, kind, ell, jtype, loss, before, flags, t0):
        self.step += 1
        self.hist.add(
            StepRecord(
                self.restart, sweep, self.step, kind, ell, jtype,
                loss, before, float("nan"),
                (time.perf_counter() - t0) * 1e3, tuple(sorted(flags)),
            )
        )
        if not np.isfinite(loss):
            raise NumericalAbortError(
                f"{kind} step at core ({ell}, {jtype}) produced a "
                "non-finite loss",
                snapshot={"restart": self.restart, "sweep": sweep,
                          "kind": kind, "ell": ell, "type": jtype},
            )


# -- public operations ---------------------------------------------------------


def _contiguous_feats(dictionary, X):
    return [np.ascontiguousarray(f) for f in dictionary.featurize_batch(X)]


def _fresh_stacks(ens, dense, feats, e, ell, M):
    row = ens.table.row(e)
    left = np.ones((M, 1))
    for t in range(1, ell):
        left = advance_stack(left, dense(t, row[t - 1]), feats[t - 1])
    right = np.ones((M, 1))
    for t in range(ens.d, ell, -1):
        right = _advance_right(right, dense.transposed(t, row[t - 1]), feats[t - 1])
    return left, right


def _warn_flags(flags):
    notes = {
        "min-norm": "rank-deficient system: returned the minimum-norm solution",
        "regularized": "singular normal equations: ridge escalated",
        "fallback-gram": "Cholesky failed: solved the Gram system directly",
    }
    for key, msg in notes.items():
        if key in flags:
            warnings.warn(msg, RuntimeWarning, stacklevel=3)


def _check_users(ens, ell, j, E):
    E = tuple(sorted(set(int(e) for e in E)))
    if not E:
        raise ConfigError("component set is empty")
    users, _ = ens.table.usage(ell, j)
    extra = set(E) - set(users)
    if extra:
        raise StructureError(
            f"components {sorted(extra)} do not use core ({ell}, {j})"
        )
    return E


def als_local_step(ens, ell, j, data, E, ridge=DEFAULT_RIDGE):
    """Refit core ``(ell, j)`` on the loss restricted to components ``E``.

    Mutates the ensemble and returns ``(core, achieved restricted loss)``.
    """
    E = _check_users(ens, ell, j, E)
    feats = _contiguous_feats(ens.dictionary, data.X)
    dense = _DenseCache(ens)
    parts = []
    for e in E:
        left, right = _fresh_stacks(ens, dense, feats, e, ell, data.M)
        parts.append((left, right, np.ascontiguousarray(data.Y[:, e - 1])))
    loss, _, flags = _fit_core(
        ens, dense, ell, j, parts, feats[ell - 1], ridge
    )
    _warn_flags(flags)
    if not np.isfinite(loss):
        raise NumericalAbortError(
            "local step produced a non-finite loss",
            snapshot={"ell": ell, "type": j},
        )
    return ens.cores[(ell, j)], loss


def gauge_fix_step(ens, ell, a, data, E_a, ridge=DEFAULT_RIDGE):
    """Refit the block-diagonal gauge on core ``(ell-1, a)`` for class ``E_a``.

    All components of ``E_a`` must share left type ``a`` at position
    ``ell-1`` and a common activation type at ``ell``. Mutates the left
    core in place and returns ``(U, updated core)``.
    """
    if ell < 2:
        raise ConfigError("gauge steps need ell >= 2")
    E_a = tuple(sorted(set(int(e) for e in E_a)))
    if not E_a:
        raise ConfigError("component set is empty")
    js = {ens.table.entry(e, ell) for e in E_a}
    if len(js) != 1:
        raise StructureError(
            f"components {E_a} mix activation types {sorted(js)} at {ell}"
        )
    for e in E_a:
        if ens.table.entry(e, ell - 1) != a:
            raise StructureError(
                f"component {e} has left type {ens.table.entry(e, ell - 1)}, "
                f"not {a}"
            )
    j = js.pop()
    feats = _contiguous_feats(ens.dictionary, data.X)
    dense = _DenseCache(ens)
    core_t = dense.transposed(ell, j)
    parts = []
    for e in E_a:
        left, right = _fresh_stacks(ens, dense, feats, e, ell, data.M)
        rtil = _advance_right(right, core_t, feats[ell - 1])
        parts.append((left, rtil, np.ascontiguousarray(data.Y[:, e - 1])))
    ones = np.ones((data.M, 1))
    U, loss, _, flags, _ = _fit_gauge(ens, dense, ell, a, parts, ones, ridge)
    _warn_flags(flags)
    if not np.isfinite(loss):
        raise NumericalAbortError(
            "gauge step produced a non-finite loss",
            snapshot={"ell": ell, "type": a},
        )
    return U, ens.cores[(ell - 1, a)]


def train(ens_init, data, options=None):
    """Run ALS-GMWS from ``ens_init``; returns ``(ensemble, history)``.

    Restart 0 starts from ``ens_init`` itself (copied); further restarts
    redraw the cores from the ``(seed, INIT, r)`` substream. The
    returned ensemble is the restart with the lowest final full loss.
    """
    if options is None:
        options = TrainOptions()
    if data.d != ens_init.d:
        raise InputError(
            f"training set has {data.d} components, model has {ens_init.d}"
        )
    feats = _contiguous_feats(ens_init.dictionary, data.X)
    history = TrainHistory()
    best_loss, best_ens = None, None
    for r in range(options.restarts):
        if r == 0:
            ens_r = ens_init.copy()
        else:
            ens_r = ens_init.reinitialized(substream(options.seed, INIT, r))
        sweeper = _Sweeper(ens_r, data, feats, options, history, r)
        final = sweeper.run()
        history.final_losses[r] = final
        if best_loss is None or final < best_loss:
            best_loss, best_ens = final, ens_r
    return best_ens, history
