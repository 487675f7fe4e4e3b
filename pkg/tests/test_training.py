"""Loss, optimizer, schedule, training loop, and evaluation helpers."""

import numpy as np
import pytest

import oracles
from dgdeblur import autodiff as ad
from dgdeblur.autodiff import Parameter, Tape
from dgdeblur.blur import DatasetItem
from dgdeblur.model import ModelConfig, build_model, forward_model
from dgdeblur.training import (AdamWConfig, AdamWState, CosineSchedule,
                               LossConfig, NonFiniteGradientError, TrainConfig,
                               adamw_step, aggregate_reports, evaluate,
                               input_baseline, multiscale_loss,
                               rank_trajectories, train, validation_psnr)


def loss_value(pred, target, lam=0.1, scales=1):
    tape = Tape()
    out = multiscale_loss(tape.constant(pred), target, LossConfig(lam, scales))
    return float(out.data)


def make_items(n, h=16, w=16, seed=0):
    rng = np.random.default_rng(seed)
    items = []
    for i in range(n):
        sharp = rng.random((h, w, 1))
        blurred = np.clip(sharp + rng.standard_normal((h, w, 1)) * 0.05, 0, 1)
        sigma = np.full((h, w), 1.5)
        items.append(DatasetItem(f"{i:04d}", sharp, blurred, sigma, i, 1.0, 1.0))
    return items


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def test_loss_zero_iff_equal():
    rng = np.random.default_rng(1)
    x = rng.random((8, 8, 1))
    assert loss_value(x, x) == 0.0
    assert loss_value(x, x, scales=3) == 0.0
    assert loss_value(x + 0.01, x) > 0.0


def test_loss_constant_offset_closed_form():
    # pred - target == c everywhere: the spatial term is |c|; the
    # spectral term is |c| * H * W / (H * W) = |c| (only the DC bin is
    # nonzero, with modulus |c| * H * W)
    x = np.full((8, 8, 1), 0.25)
    target = np.zeros((8, 8, 1))
    assert np.isclose(loss_value(x, target, lam=0.0), 0.25, atol=1e-14)
    assert np.isclose(loss_value(x, target, lam=0.1), 0.25 + 0.1 * 0.25,
                      atol=1e-12)


def test_loss_matches_dft_oracle():
    rng = np.random.default_rng(2)
    pred = rng.random((6, 5, 1))
    target = rng.random((6, 5, 1))
    diff = (pred - target)[:, :, 0]
    spatial = np.abs(diff).sum() / diff.size
    spectral = np.abs(oracles.naive_dft2(diff)).sum() / diff.size
    ref = spatial + 0.1 * spectral
    assert np.isclose(loss_value(pred, target), ref, atol=1e-10)


def test_loss_flip_invariance():
    rng = np.random.default_rng(3)
    pred = rng.random((8, 8, 1))
    target = rng.random((8, 8, 1))
    base = loss_value(pred, target)
    assert np.isclose(loss_value(pred[::-1].copy(), target[::-1].copy()),
                      base, atol=1e-10)
    assert np.isclose(loss_value(pred[:, ::-1].copy(), target[:, ::-1].copy()),
                      base, atol=1e-10)


def test_loss_scales_decompose():
    rng = np.random.default_rng(4)
    pred = rng.random((8, 8, 1))
    target = rng.random((8, 8, 1))
    one = loss_value(pred, target, scales=1)
    two = loss_value(pred, target, scales=2)
    pooled_pred = pred.reshape(4, 2, 4, 2, 1).mean(axis=(1, 3))
    pooled_target = target.reshape(4, 2, 4, 2, 1).mean(axis=(1, 3))
    second = loss_value(pooled_pred, pooled_target, scales=1)
    assert np.isclose(two, one + second, atol=1e-12)


def test_loss_gradient_passes_finite_differences():
    rng = np.random.default_rng(5)
    target = rng.random((6, 6, 1))
    p = Parameter(rng.random((6, 6, 1)), "pred")

    def f():
        tape = Tape()
        return multiscale_loss(tape.param(p), target, LossConfig(0.1, 2))

    entries = ad.grad_check(f, [p], step=1e-6, tol=1e-5)
    assert entries[0].passed, entries[0].max_rel_err


# ---------------------------------------------------------------------------
# optimizer and schedule
# ---------------------------------------------------------------------------

def test_adamw_first_step_closed_form():
    rng = np.random.default_rng(6)
    theta0 = rng.standard_normal((3, 2))
    grad = rng.standard_normal((3, 2))
    p = Parameter(theta0.copy(), "w")
    p.gradient = grad.copy()
    cfg = AdamWConfig(0.9, 0.999, 1e-8, 1e-4)
    state = AdamWState([p])
    adamw_step([p], state, 3e-4, cfg)
    expected = theta0 * (1 - 3e-4 * 1e-4) - 3e-4 * grad / (np.abs(grad) + 1e-8)
    assert np.allclose(p.value, expected, atol=1e-12)
    assert state.t == 1


def test_adamw_zero_gradient_is_pure_decay():
    p = Parameter(np.full((2, 2), 2.0), "w")
    state = AdamWState([p])
    adamw_step([p], state, 0.1, AdamWConfig(weight_decay=0.5))
    assert np.allclose(p.value, 2.0 * (1 - 0.1 * 0.5), atol=1e-15)


def test_adamw_zero_lr_is_identity():
    rng = np.random.default_rng(7)
    p = Parameter(rng.standard_normal((4,)), "w")
    p.gradient = rng.standard_normal((4,))
    before = p.value.copy()
    adamw_step([p], AdamWState([p]), 0.0, AdamWConfig())
    assert np.array_equal(p.value, before)


def test_adamw_rejects_nonfinite_gradient_without_mutating():
    a = Parameter(np.ones(3), "a")
    b = Parameter(np.ones(3), "b")
    a.gradient = np.ones(3)
    b.gradient = np.array([1.0, np.nan, 1.0])
    state = AdamWState([a, b])
    with pytest.raises(NonFiniteGradientError):
        adamw_step([a, b], state, 1e-3, AdamWConfig())
    assert np.array_equal(a.value, np.ones(3))
    assert np.array_equal(b.value, np.ones(3))
    assert state.t == 0


def test_cosine_schedule_endpoints_and_midpoint():
    sched = CosineSchedule(3e-4, 1e-6, 2000)
    assert sched.lr(0) == 3e-4
    assert sched.lr(2000) == 1e-6
    assert np.isclose(sched.lr(1000), (3e-4 + 1e-6) / 2, atol=1e-18)
    values = [sched.lr(s) for s in range(0, 2001, 50)]
    assert all(x >= y for x, y in zip(values, values[1:]))
    assert sched.lr(5000) == 1e-6  # clamped past the horizon


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

def small_model(seed=7):
    return build_model(ModelConfig(channels=8, heads=2, element_size=4,
                                   layers=1, variant="face", seed=seed))


def test_train_logs_and_shapes():
    items = make_items(4)
    res = train(small_model(), items, items[:2],
                TrainConfig(steps=4, batch=2, seed=5))
    assert not res.diverged
    assert len(res.log_rows) == 2  # 4 steps / (4 items / batch 2) per epoch
    for row in res.log_rows:
        assert len(row) == 5
    assert res.log_rows[0][1] == 2 and res.log_rows[1][1] == 4
    assert res.final_val_psnr > 0.0


def test_train_zero_lr_keeps_parameters():
    items = make_items(2)
    model = small_model()
    before = {n: v.copy() for n, v in model.named_values()}
    train(model, items, [], TrainConfig(steps=2, batch=2, lr=0.0, lr_min=0.0,
                                        seed=5))
    for n, v in model.named_values():
        assert np.array_equal(v, before[n]), n


def test_train_is_deterministic():
    items = make_items(3)
    runs = []
    for _ in range(2):
        model = small_model(seed=9)
        res = train(model, items, items[:1],
                    TrainConfig(steps=6, batch=2, seed=11))
        runs.append((dict(model.named_values()), res.log_rows))
    values_a, rows_a = runs[0]
    values_b, rows_b = runs[1]
    assert rows_a == rows_b
    for n in values_a:
        assert np.array_equal(values_a[n], values_b[n]), n


def test_train_overfits_single_image():
    from dgdeblur.blur import BlurConfig, PatternSpec, blur, render_scene
    specs = [PatternSpec("filled_square", {"row": 3, "col": 2, "side": 6},
                         0.9, 0),
             PatternSpec("thin_line", {"row": 11, "col": 1, "length": 13,
                                       "orientation": "h", "width": 1},
                         0.7, 0)]
    sharp = render_scene(specs, 16, 16)[:, :, None]
    blurred = blur(sharp, np.full((16, 16), 1.2), BlurConfig())
    item = DatasetItem("0000", sharp, blurred, np.full((16, 16), 1.2),
                       0, 1.2, 1.2)
    model = small_model(seed=15)
    initial = loss_value(blurred, sharp)  # untrained model = identity
    res = train(model, [item], [], TrainConfig(steps=600, batch=1, lr=3e-3,
                                               lr_min=1e-5, augment=False,
                                               seed=17))
    final = loss_value(forward_model(blurred, model, Tape()).data, sharp)
    assert not res.diverged
    assert final < 0.25 * initial, (initial, final)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_flags_and_leaves_finite_state():
    items = make_items(2, seed=19)
    model = small_model(seed=21)
    res = train(model, items, [], TrainConfig(steps=50, batch=2, lr=1e6,
                                              lr_min=1e6, augment=False,
                                              seed=23))
    assert res.diverged
    # the loop rolls back to the last completed epoch, so whatever is
    # left in the model must still be finite and the log only covers
    # completed epochs
    for n, v in model.named_values():
        assert np.isfinite(v).all(), n
    assert len(res.log_rows) < 50
    for row in res.log_rows:
        assert np.isfinite(row[3])


def test_train_rejects_empty_training_set():
    with pytest.raises(Exception):
        train(small_model(), [], [], TrainConfig(steps=1, batch=1))


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def test_validation_psnr_perfect_model_is_capped():
    items = make_items(2, seed=25)
    perfect = [DatasetItem(it.image_id, it.sharp, it.sharp, it.sigma,
                           it.seed, it.sigma_min, it.sigma_max)
               for it in items]
    model = small_model()  # untrained: identity on the blurred input
    assert validation_psnr(model, perfect) == 99.0


def test_evaluate_reports_and_aggregate():
    items = make_items(3, seed=27)
    model = small_model()
    reports, agg = evaluate(model, items)
    assert len(reports) == 3
    assert set(agg) == {"psnr", "ssim", "edge_psnr", "interior_psnr"}
    assert np.isclose(agg["psnr"], np.mean([r.psnr for r in reports]))
    reports2, agg2, outputs = evaluate(model, items, keep_outputs=True)
    assert len(outputs) == 3
    for out, it in zip(outputs, items):
        assert out.shape == it.sharp.shape
        assert out.min() >= 0.0 and out.max() <= 1.0


def test_input_baseline_equals_identity_model():
    # the untrained model is the identity, so its evaluation must agree
    # with the blurred-input baseline exactly
    items = make_items(2, seed=29)
    _, base = input_baseline(items)
    _, agg = evaluate(small_model(), items)
    for key in base:
        assert np.isclose(agg[key], base[key], atol=1e-12), key


def test_aggregate_handles_missing_edge_bands():
    from dgdeblur.metrics import MetricReport
    r1 = MetricReport("a", 20.0, False, 0.9, None, 21.0, True)
    r2 = MetricReport("b", 30.0, False, 0.8, 25.0, 31.0, False)
    agg = aggregate_reports([r1, r2])
    assert agg["psnr"] == 25.0
    assert agg["edge_psnr"] == 25.0  # mean over defined values only


def test_rank_trajectory_rows():
    items = make_items(2, seed=31)
    model = small_model()
    rows = rank_trajectories(model, items)
    assert len(rows) == 2  # post-lift plus one layer
    for t, row in enumerate(rows):
        scale, step, variant, r_eff, d, util = row
        assert (scale, step, variant, d) == (1, t, "face", 8)
        assert 1.0 <= r_eff <= 8.0
        assert np.isclose(util, r_eff / 8.0)
