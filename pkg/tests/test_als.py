"""Training loop: restricted fits, gauge adaptation, and sweep mechanics.

The reference route for every check is ``restricted_loss``/``full_loss``,
which assembles each component law as a dense TT and evaluates it
point-wise — entirely independent of the trainer's incremental interface
stacks and chunked normal equations.
"""

import io

import numpy as np
import pytest

from ttlaw.als import (
    TrainHistory,
    TrainOptions,
    TrainingSet,
    als_local_step,
    full_loss,
    gauge_fix_step,
    restricted_loss,
    train,
)
from ttlaw.dictionaries import make_dictionary
from ttlaw.errors import (
    ConfigError,
    InputError,
    NumericalAbortError,
    StructureError,
)
from ttlaw.rng import INIT, substream
from ttlaw.selection import local_selection_table, random_ensemble
from ttlaw.systems import PlantedSpec, default_sampler, sample_dataset


def _setup(d=5, L=1, lam=2, rho=2, M=300, seed=3, kind="monomial"):
    if kind == "trigonometric":
        dic = make_dictionary(kind, domains=[(0.0, 2 * np.pi)] * d)
        lo, hi = 0.0, 2 * np.pi
    else:
        dic = make_dictionary(kind, max_degree=lam, domains=[(-1.0, 1.0)] * d)
        lo, hi = -1.0, 1.0
    table = local_selection_table(d, L)
    truth = random_ensemble(dic, table, lam=lam, rho=rho, rng=seed)
    rng = np.random.default_rng(seed + 1)
    X = rng.uniform(lo, hi, size=(M, d))
    data = TrainingSet(X, truth.predict(X))
    return dic, table, truth, data


def test_training_set_validation():
    with pytest.raises(InputError):
        TrainingSet(np.zeros((4, 3)), np.zeros((4, 2)))
    with pytest.raises(InputError):
        TrainingSet(np.zeros((0, 3)), np.zeros((0, 3)))
    bad = np.zeros((4, 3))
    bad[1, 1] = np.nan
    with pytest.raises(InputError):
        TrainingSet(np.zeros((4, 3)), bad)


def test_options_validation():
    with pytest.raises(ConfigError):
        TrainOptions(max_sweeps=0)
    with pytest.raises(ConfigError):
        TrainOptions(restarts=0)
    with pytest.raises(ConfigError):
        TrainOptions(ridge=-1e-3)
    with pytest.raises(ConfigError):
        TrainOptions(loss_rel_tol=-1.0)


def test_restricted_loss_matches_direct_sum():
    _, _, truth, data = _setup()
    model = truth.copy()
    key = next(iter(model.cores[(3, 4)].blocks))
    model.cores[(3, 4)].blocks[key][...] += 0.3
    pred = model.predict(data.X)
    for E in [(1,), (2, 4), tuple(range(1, 6))]:
        want = sum(
            float(np.sum((pred[:, e - 1] - data.Y[:, e - 1]) ** 2)) for e in E
        )
        got = restricted_loss(model, data, E)
        assert got == pytest.approx(want, rel=1e-12)


def test_restricted_loss_empty_set_warns():
    _, _, truth, data = _setup()
    with pytest.warns(RuntimeWarning):
        assert restricted_loss(truth, data, ()) == 0.0


def test_local_step_plants_and_recovers_singleton():
    # Perturb core (3, 4), used only by component 2; one restricted fit
    # must restore a zero-residual law for that component and leave every
    # other component's prediction bit-identical.
    _, _, truth, data = _setup()
    model = truth.copy()
    before = model.predict(data.X)
    core = model.cores[(3, 4)]
    for blk in core.blocks.values():
        blk += np.random.default_rng(0).normal(size=blk.shape)
    _, loss = als_local_step(model, 3, 4, data, (2,), ridge=0.0)
    ynorm2 = float(np.sum(data.Y[:, 1] ** 2))
    assert loss <= 1e-14 * ynorm2
    assert restricted_loss(model, data, (2,)) <= 1e-14 * ynorm2
    after = model.predict(data.X)
    for e in (1, 3, 4, 5):
        assert np.array_equal(before[:, e - 1], after[:, e - 1])


def test_local_step_plants_and_recovers_shared():
    # Core (5, 5) is shared by components {1, 2, 3}; the joint restricted
    # fit recovers all three at once because the planted core is a
    # zero-residual solution for the stacked system.
    _, _, truth, data = _setup()
    model = truth.copy()
    E, _ = model.table.usage(5, 5)
    assert E == (1, 2, 3)
    for blk in model.cores[(5, 5)].blocks.values():
        blk += 0.7
    _, loss = als_local_step(model, 5, 5, data, E, ridge=0.0)
    ynorm2 = sum(float(np.sum(data.Y[:, e - 1] ** 2)) for e in E)
    assert loss <= 1e-14 * ynorm2


def test_local_step_loss_matches_assembly_route():
    # The solver's claimed restricted loss must agree with the dense
    # assembly route, across positions and activation types.
    _, _, truth, data = _setup(kind="trigonometric")
    model = truth.reinitialized(np.random.default_rng(5))
    for ell, j in [(1, 3), (2, 3), (3, 4), (4, 5), (5, 2)]:
        E, _ = model.table.usage(ell, j)
        if not E:
            continue
        _, loss = als_local_step(model, ell, j, data, E)
        want = restricted_loss(model, data, E)
        assert loss == pytest.approx(want, rel=1e-9, abs=1e-12)


def test_local_step_never_underperforms_direct_lstsq():
    _, _, truth, data = _setup()
    model = truth.reinitialized(np.random.default_rng(11))
    model2 = model.copy()
    _, loss_default = als_local_step(model, 4, 3, data, (4,))
    _, loss_exact = als_local_step(model2, 4, 3, data, (4,), ridge=0.0)
    assert loss_default <= loss_exact * (1 + 1e-6) + 1e-12


def test_local_step_zero_targets_gives_zero_core():
    _, _, truth, data = _setup()
    model = truth.copy()
    zero = TrainingSet(data.X, np.zeros_like(data.Y))
    core, loss = als_local_step(model, 3, 4, zero, (2,))
    assert loss == 0.0
    assert np.array_equal(core.get_vector(), np.zeros(core.pattern.n_free))


def test_local_step_min_norm_warns():
    # Two distinct samples cannot determine the core: rank-deficient
    # exact least squares must warn and return the minimum-norm solution.
    dic, table, truth, data = _setup()
    model = truth.copy()
    tiny = TrainingSet(data.X[:2], data.Y[:2])
    with pytest.warns(RuntimeWarning):
        als_local_step(model, 3, 4, tiny, (2,), ridge=0.0)


def test_local_step_rejects_non_users():
    _, _, truth, data = _setup()
    with pytest.raises(StructureError):
        als_local_step(truth.copy(), 3, 4, data, (1, 2))
    with pytest.raises(ConfigError):
        als_local_step(truth.copy(), 3, 4, data, ())


def _block_diag_gauge(pattern, rng):
    mats = []
    for s in pattern.col_sizes:
        mats.append(rng.normal(size=(s, s)) + 2.0 * np.eye(s))
    return mats


def test_gauge_step_undoes_planted_gauge():
    # Right-multiply the blocks of core (2, 1) by an invertible
    # block-diagonal W.  Component 5 reaches that core through left type
    # 1 at position 3; its gauge step can absorb W^{-1} exactly, while
    # component 4 (also a user of the damaged core) stays wrong.
    _, _, truth, data = _setup()
    model = truth.copy()
    core = model.cores[(2, 1)]
    mats = _block_diag_gauge(core.pattern, np.random.default_rng(7))
    for (i, rb, cb), blk in core.blocks.items():
        blk[...] = blk @ mats[cb]
    y5 = float(np.sum(data.Y[:, 4] ** 2))
    assert restricted_loss(model, data, (5,)) > 1e-6 * y5
    pred4_before = model.predict(data.X)[:, 3]

    U, fixed = gauge_fix_step(model, 3, 1, data, (5,), ridge=0.0)
    assert fixed is model.cores[(2, 1)]
    assert U.shape[0] == U.shape[1] == sum(core.pattern.col_sizes)
    assert restricted_loss(model, data, (5,)) <= 1e-12 * y5
    # The update was chosen for component 5 alone, but the gauged core is
    # shared: component 4's prediction moves as a side effect.  (Here the
    # planted gauge is exactly invertible, so the side effect happens to
    # repair component 4 too.)
    assert not np.array_equal(model.predict(data.X)[:, 3], pred4_before)
    assert restricted_loss(model, data, (4,)) <= 1e-10 * float(
        np.sum(data.Y[:, 3] ** 2)
    )


def test_gauge_step_validation():
    _, _, truth, data = _setup()
    with pytest.raises(ConfigError):
        gauge_fix_step(truth.copy(), 1, 1, data, (5,))
    with pytest.raises(ConfigError):
        gauge_fix_step(truth.copy(), 3, 1, data, ())
    # Component 5 has left type 1 at position 3, not 2.
    with pytest.raises(StructureError):
        gauge_fix_step(truth.copy(), 3, 2, data, (5,))
    # Components 1 and 5 use different cores at position 3.
    with pytest.raises(StructureError):
        gauge_fix_step(truth.copy(), 3, 1, data, (1, 5))


def test_train_recovers_planted_law():
    # Plant-and-recover at the documented operating point: d=8, L=1,
    # monomial degree cap 2, ρ=2, 500 noiseless samples of a random
    # anchored law; within 10 sweeps at least one of 3 restarts reaches
    # a full loss negligible against the target norm.
    d = 8
    spec = PlantedSpec(d=d, locality=1, degree=2, coupling_degree=1, seed=9)
    data = sample_dataset(spec, default_sampler(spec, seed=9), 500)
    dic = make_dictionary("monomial", max_degree=2, domains=[(-1.0, 1.0)] * d)
    table = local_selection_table(d, 1)
    ens0 = random_ensemble(dic, table, lam=2, rho=2, rng=substream(0, INIT, 0))
    opts = TrainOptions(max_sweeps=10, restarts=3, seed=0)
    ens, hist = train(ens0, data, opts)
    ynorm2 = float(np.sum(data.Y**2))
    assert hist.final_loss <= 1e-12 * ynorm2
    assert full_loss(ens, data) == pytest.approx(hist.final_loss, rel=1e-6, abs=1e-18)


def test_train_sweep_loss_matches_assembly_route():
    # The incremental sweep-end full loss must match the slow assembly
    # route on the returned ensemble (single restart, fixed sweeps).
    dic, table, truth, data = _setup(d=6, M=150, seed=13)
    ens0 = truth.reinitialized(np.random.default_rng(2))
    opts = TrainOptions(max_sweeps=3, restarts=1, loss_rel_tol=0.0)
    ens, hist = train(ens0, data, opts)
    last = hist.sweep_records()[-1]
    want = full_loss(ens, data)
    assert last.full_loss == pytest.approx(want, rel=1e-9, abs=1e-15)


def test_train_steps_never_increase_restricted_loss():
    dic, table, truth, data = _setup(d=6, M=150, seed=21, kind="trigonometric")
    ens0 = truth.reinitialized(np.random.default_rng(4))
    opts = TrainOptions(max_sweeps=4, restarts=2, seed=5, loss_rel_tol=0.0)
    _, hist = train(ens0, data, opts)
    assert hist.step_records()
    for rec in hist.step_records():
        assert rec.restricted_loss <= rec.loss_before * (1 + 1e-9) + 1e-300
    # Full loss is non-increasing sweep over sweep within each restart.
    for r in range(2):
        sweeps = [rec.full_loss for rec in hist.sweep_records(restart=r)]
        assert all(b <= a * (1 + 1e-9) for a, b in zip(sweeps, sweeps[1:]))


def test_train_is_deterministic():
    dic, table, truth, data = _setup(d=5, M=120, seed=17)
    opts = TrainOptions(max_sweeps=3, restarts=2, seed=11, loss_rel_tol=0.0)
    runs = []
    for _ in range(2):
        ens0 = random_ensemble(dic, table, lam=2, rho=2, rng=substream(11, INIT, 0))
        runs.append(train(ens0, data, opts))
    (ens_a, hist_a), (ens_b, hist_b) = runs
    assert len(hist_a.records) == len(hist_b.records)
    for ra, rb in zip(hist_a.records, hist_b.records):
        assert (ra.restart, ra.sweep, ra.step, ra.kind, ra.ell, ra.type) == (
            rb.restart, rb.sweep, rb.step, rb.kind, rb.ell, rb.type,
        )
        if ra.kind != "sweep":
            assert ra.restricted_loss == rb.restricted_loss
            assert ra.flags == rb.flags
        else:
            assert ra.full_loss == rb.full_loss
    for key in ens_a.cores:
        for bk, blk in ens_a.cores[key].blocks.items():
            assert np.array_equal(blk, ens_b.cores[key].blocks[bk])


def test_train_preserves_block_masks():
    dic, table, truth, data = _setup(d=5, M=120, seed=19)
    ens0 = truth.reinitialized(np.random.default_rng(6))
    ens, _ = train(ens0, data, TrainOptions(max_sweeps=2))
    for (ell, j), core in ens.cores.items():
        dense = core.to_dense()
        pat = core.pattern
        roff, coff = pat.row_offsets, pat.col_offsets
        allowed = np.zeros(dense.shape, dtype=bool)
        for i, rb, cb in pat.sorted_blocks():
            allowed[
                roff[rb] : roff[rb] + pat.row_sizes[rb],
                i,
                coff[cb] : coff[cb] + pat.col_sizes[cb],
            ] = True
        assert np.all(dense[~allowed] == 0.0)


def test_train_gauge_tie_breaks_to_smallest_left_type():
    # d=10, L=1: core (4, 5) has users {1, 2} with left types {5, 4} of
    # equal class size; the fit must take the smallest type (4) and the
    # gauge must land on core (3, 5).
    dic = make_dictionary("monomial", max_degree=2, domains=[(-1.0, 1.0)] * 10)
    table = local_selection_table(10, 1)
    truth = random_ensemble(dic, table, lam=2, rho=2, rng=23)
    rng = np.random.default_rng(24)
    X = rng.uniform(-1.0, 1.0, size=(100, 10))
    data = TrainingSet(X, truth.predict(X))
    ens0 = truth.reinitialized(np.random.default_rng(1))
    _, hist = train(ens0, data, TrainOptions(max_sweeps=1))
    E, parts = table.usage(4, 5)
    assert {a: len(es) for a, es in parts.items()} == {4: 1, 5: 1}
    gauges = [
        rec for rec in hist.step_records()
        if rec.kind == "gauge" and rec.sweep == 1 and rec.ell == 3
    ]
    assert any(rec.type == 5 for rec in gauges)
    assert not any(rec.type == 4 for rec in gauges)


def test_train_aborts_on_overflow():
    _, _, truth, data = _setup()
    model = truth.copy()
    for blk in model.cores[(3, 4)].blocks.values():
        blk[...] = 1e200
    with pytest.raises(NumericalAbortError) as err:
        train(model, data, TrainOptions(max_sweeps=2))
    assert err.value.snapshot


def test_train_restarts_pick_best():
    dic, table, truth, data = _setup(M=400, seed=9)
    ens0 = random_ensemble(dic, table, lam=2, rho=2, rng=substream(0, INIT, 0))
    opts = TrainOptions(max_sweeps=6, restarts=3, seed=0, loss_rel_tol=0.0)
    ens, hist = train(ens0, data, opts)
    assert set(hist.final_losses) == {0, 1, 2}
    best = hist.best_restart
    assert hist.final_losses[best] == min(hist.final_losses.values())
    assert full_loss(ens, data) == pytest.approx(
        hist.final_losses[best], rel=1e-6, abs=1e-18
    )


def test_history_csv_layout():
    _, _, truth, data = _setup(d=5, M=80)
    ens0 = truth.reinitialized(np.random.default_rng(8))
    _, hist = train(ens0, data, TrainOptions(max_sweeps=2, loss_rel_tol=0.0))
    buf = io.StringIO()
    hist.to_csv(buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "sweep,step,ell,type,restricted_loss,full_loss,millis"
    assert len(lines) == 1 + len(hist.records)
    sweep_rows = [ln for ln in lines[1:] if ln.split(",")[2] == "0"]
    assert len(sweep_rows) == 2
    for ln in sweep_rows:
        cells = ln.split(",")
        assert cells[4] == "" and cells[5] != ""
    step_rows = [ln for ln in lines[1:] if ln.split(",")[2] != "0"]
    for ln in step_rows:
        cells = ln.split(",")
        assert cells[4] != "" and cells[5] == ""
