"""Training strategies: member independence, weight averaging, capture
placement, MC dropout, and weight-space interpolation."""

import numpy as np
import pytest

import uaperceiver as ua
from uaperceiver.errors import RangeError, UsageError
from uaperceiver.model import forward_logits, init_params
from uaperceiver.metrics import softmax_rows
from uaperceiver.rng import derive_seed, generator
from uaperceiver.strategies import train_model

FAST = ua.TrainSettings(batch_size=4)


def constant(steps, lr=1e-3):
    return ua.LRSchedule("constant", lr, lr, steps, 1)


# ---- deep ensembles --------------------------------------------------


def test_deep_m1_equals_single_training(tiny_config, tiny_dataset):
    predictor, _ = ua.deep_ensemble_train(
        tiny_config, 1, 123, tiny_dataset, constant(4), FAST
    )
    assert predictor.kind == "single"
    store, temp, _ = ua.train_member(
        tiny_config, tiny_dataset, constant(4), derive_seed(123, 0), FAST
    )
    assert predictor.members[0].allclose(store)
    assert predictor.temperatures[0] == temp


def test_deep_member_isolation_oracle(tiny_config, tiny_dataset):
    """Member m trained alone with the derived seed bit-equals ensemble
    member m."""
    predictor, _ = ua.deep_ensemble_train(
        tiny_config, 3, 7, tiny_dataset, constant(3), FAST
    )
    for m in (0, 2):
        store, _, _ = ua.train_member(
            tiny_config, tiny_dataset, constant(3), derive_seed(7, m), FAST
        )
        assert predictor.members[m].allclose(store)


def test_deep_members_differ(tiny_config, tiny_dataset):
    predictor, _ = ua.deep_ensemble_train(
        tiny_config, 2, 7, tiny_dataset, constant(3), FAST
    )
    assert not predictor.members[0].allclose(predictor.members[1])


def test_deep_rejects_empty(tiny_config, tiny_dataset):
    with pytest.raises(UsageError):
        ua.deep_ensemble_train(tiny_config, 0, 0, tiny_dataset, constant(2), FAST)


def test_predictor_rows_sum_to_one(tiny_config, tiny_dataset):
    predictor, _ = ua.deep_ensemble_train(
        tiny_config, 2, 5, tiny_dataset, constant(3), FAST
    )
    probs = predictor.probabilities(tiny_dataset.images[:6])
    assert probs.shape == (6, 3)
    np.testing.assert_allclose(probs.sum(axis=1), np.ones(6), atol=1e-12)


def test_predictor_restricted(tiny_config, tiny_dataset):
    predictor, _ = ua.deep_ensemble_train(
        tiny_config, 3, 5, tiny_dataset, constant(2), FAST
    )
    sub = predictor.restricted(2)
    assert sub.ensemble_size == 2
    assert sub.members[0] is predictor.members[0]
    with pytest.raises(UsageError):
        predictor.restricted(4)


# ---- ensemble averaging ----------------------------------------------


def test_ensemble_average_identity():
    p = np.array([[0.2, 0.8]])
    np.testing.assert_array_equal(ua.ensemble_average([p]), p)


def test_ensemble_average_two_onehots():
    out = ua.ensemble_average([np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])])
    np.testing.assert_array_equal(out, [[0.5, 0.5]])


def test_ensemble_average_loop_oracle():
    rng = np.random.default_rng(0)
    members = [softmax_rows(rng.normal(size=(5, 4))) for _ in range(3)]
    out = ua.ensemble_average(members)
    for i in range(5):
        for k in range(4):
            expected = sum(m[i, k] for m in members) / 3
            assert abs(out[i, k] - expected) < 1e-15


def test_ensemble_average_ragged_rejected():
    with pytest.raises(Exception):
        ua.ensemble_average([np.ones((2, 3)) / 3, np.ones((3, 3)) / 3])


# ---- SWA -------------------------------------------------------------


def test_swa_update_identical_store_unchanged(tiny_config):
    from uaperceiver.params import swa_update

    w = init_params(tiny_config, 0).detached()
    out = swa_update(w, 3, w)
    assert out.allclose(w, atol=1e-15)


def test_swa_update_scalar_sequence():
    from uaperceiver.params import swa_update
    from uaperceiver import Tensor
    from uaperceiver.params import ParamStore

    def scalar_store(v):
        s = ParamStore()
        s.add("x", Tensor(np.array([v])))
        return s

    avg = scalar_store(1.0)
    avg = swa_update(avg, 1, scalar_store(2.0))
    avg = swa_update(avg, 2, scalar_store(3.0))
    np.testing.assert_allclose(avg["x"].data, [2.0], atol=1e-15)


def test_swa_single_capture_equals_final_iterate(tiny_config, tiny_dataset):
    pre = init_params(tiny_config, 1).detached()
    schedule = ua.LRSchedule("swa_linear", 1e-3, 2e-4, 4, 4)  # c = n: one capture
    predictor, log = ua.swa_train(tiny_config, pre, tiny_dataset, schedule, 9, FAST)
    assert log.captures == [(4, 0)]
    # replay the same trajectory and compare the final weights
    params = pre.copy(requires_grad=True)
    train_model(tiny_config, params, tiny_dataset, schedule, 9, FAST)
    assert predictor.members[0].allclose(params.detached())


def test_swa_mean_replay_oracle(tiny_config, tiny_dataset):
    pre = init_params(tiny_config, 2).detached()
    schedule = ua.LRSchedule("swa_linear", 1e-3, 2e-4, 6, 2)  # captures at 2,4,6
    predictor, log = ua.swa_train(tiny_config, pre, tiny_dataset, schedule, 3, FAST)
    assert [t for t, _ in log.captures] == [2, 4, 6]
    captured = []
    params = pre.copy(requires_grad=True)
    train_model(
        tiny_config, params, tiny_dataset, schedule, 3, FAST,
        on_step=lambda t, p, _log: captured.append(p.detached()) if t % 2 == 0
        else None,
    )
    mean = captured[0].map(lambda a: a / len(captured))
    for extra in captured[1:]:
        mean = mean.map2(extra, lambda a, b: a + b / len(captured))
    assert predictor.members[0].allclose(mean, atol=1e-12)


def test_swa_rejects_cycle_longer_than_budget():
    # a cycle longer than the step budget would produce zero captures;
    # the schedule itself refuses to be built
    with pytest.raises(UsageError):
        ua.LRSchedule("swa_linear", 1e-3, 2e-4, 4, 5)


def test_swa_requires_swa_schedule(tiny_config, tiny_dataset):
    pre = init_params(tiny_config, 0).detached()
    with pytest.raises(UsageError):
        ua.swa_train(tiny_config, pre, tiny_dataset, constant(4), 0, FAST)


# ---- snapshot --------------------------------------------------------


def test_snapshot_capture_count_and_steps(tiny_config, tiny_dataset):
    predictor, log = ua.snapshot_train(
        tiny_config, 4, tiny_dataset, total_steps=8, num_snapshots=4,
        initial_lr=1e-3, settings=FAST,
    )
    assert len(predictor.members) == 4
    assert [t for t, _ in log.captures] == [2, 4, 6, 8]


def test_snapshot_lr_at_captures_is_cycle_minimum(tiny_config, tiny_dataset):
    _, log = ua.snapshot_train(
        tiny_config, 4, tiny_dataset, total_steps=8, num_snapshots=2,
        initial_lr=1e-3, settings=FAST,
    )
    schedule = ua.LRSchedule("snapshot_cosine", 1e-3, 0.0, 8, 2)
    c = schedule.cycle_length
    lrs = {t: lr for t, lr, _ in log.steps}
    for t, _ in log.captures:
        assert lrs[t] == min(lrs[u] for u in range(t - c + 1, t + 1))


def test_snapshot_average_last(tiny_config, tiny_dataset):
    predictor, _ = ua.snapshot_train(
        tiny_config, 4, tiny_dataset, total_steps=8, num_snapshots=4,
        initial_lr=1e-3, settings=FAST, average_last=2,
    )
    assert predictor.ensemble_size == 2
    assert predictor.active_members() == predictor.members[-2:]


# ---- fast ------------------------------------------------------------


def test_fast_member_count(tiny_config, tiny_dataset):
    pre = init_params(tiny_config, 5).detached()
    predictor, log = ua.fast_train(
        tiny_config, pre, tiny_dataset, 6, cycles=3, alpha1=1e-3, alpha2=1e-4,
        steps_per_cycle=2, settings=FAST,
    )
    assert len(predictor.members) == 4  # starting weights + one per cycle
    assert predictor.members[0].allclose(pre)
    assert [t for t, _ in log.captures] == [2, 4, 6]


def test_fast_zero_lr_members_all_equal_start(tiny_config, tiny_dataset):
    pre = init_params(tiny_config, 6).detached()
    predictor, _ = ua.fast_train(
        tiny_config, pre, tiny_dataset, 6, cycles=2, alpha1=0.0, alpha2=0.0,
        steps_per_cycle=2, settings=FAST,
    )
    for member in predictor.members:
        assert member.allclose(pre)


def test_fast_lr_trace_matches_closed_form(tiny_config, tiny_dataset):
    pre = init_params(tiny_config, 7).detached()
    _, log = ua.fast_train(
        tiny_config, pre, tiny_dataset, 8, cycles=4, alpha1=5e-6, alpha2=5e-7,
        steps_per_cycle=5, settings=FAST,
    )
    schedule = ua.LRSchedule("fast_cyclic", 5e-6, 5e-7, 20, 4)
    for t, lr, _ in log.steps:
        assert lr == ua.lr_at(schedule, t)


# ---- MC dropout ------------------------------------------------------


def test_mask_delta_zero_identity():
    image = np.random.default_rng(0).random((4, 4, 3))
    out = ua.mc_dropout_mask(image, 0.0, generator(0, 0))
    np.testing.assert_array_equal(out, image)


def test_mask_delta_one_zeroes_everything():
    image = np.random.default_rng(0).random((4, 4, 3)) + 0.1
    out = ua.mc_dropout_mask(image, 1.0, generator(0, 0))
    np.testing.assert_array_equal(out, np.zeros_like(image))


def test_mask_zeroes_whole_pixels():
    image = np.ones((8, 8, 3))
    out = ua.mc_dropout_mask(image, 0.5, generator(1, 0))
    per_pixel = out.reshape(64, 3)
    for row in per_pixel:
        assert np.all(row == 0.0) or np.all(row == 1.0)


def test_mask_binomial_fraction():
    image = np.ones((100, 100, 1))
    out = ua.mc_dropout_mask(image, 0.3, generator(2, 0))
    zeroed = float((out == 0).mean())
    sigma = np.sqrt(0.3 * 0.7 / 10_000)
    assert abs(zeroed - 0.3) < 3 * sigma


def test_mask_rejects_bad_delta():
    with pytest.raises(RangeError):
        ua.mc_dropout_mask(np.ones((2, 2, 1)), 1.5, generator(0, 0))


def test_mc_predict_delta_zero_equals_forward(tiny_config):
    params = init_params(tiny_config, 8).detached()
    image = np.random.default_rng(9).random((4, 4, 1))
    probs = ua.mc_predict(tiny_config, params, image, 0.0, 5, 77)
    direct = softmax_rows(forward_logits(tiny_config, params, image))[0]
    np.testing.assert_array_equal(probs, direct)


def test_mc_predict_replay_oracle(tiny_config):
    params = init_params(tiny_config, 10).detached()
    image = np.random.default_rng(11).random((4, 4, 1))
    n, seed, delta = 6, 55, 0.25
    probs = ua.mc_predict(tiny_config, params, image, delta, n, seed)
    acc = np.zeros(3)
    for i in range(n):
        masked = ua.mc_dropout_mask(image, delta, generator(seed, i))
        acc += softmax_rows(forward_logits(tiny_config, params, masked))[0]
    np.testing.assert_array_equal(probs, acc / n)


def test_mc_predictor_probabilities(tiny_config, tiny_dataset):
    params = init_params(tiny_config, 12).detached()
    predictor = ua.Predictor(
        "mc_dropout", tiny_config, [params], mc_delta=0.2, mc_samples=4,
        mc_seed=13,
    )
    probs = predictor.probabilities(tiny_dataset.images[:3])
    np.testing.assert_allclose(probs.sum(axis=1), np.ones(3), atol=1e-12)
    again = predictor.probabilities(tiny_dataset.images[:3])
    np.testing.assert_array_equal(probs, again)


# ---- bezier ----------------------------------------------------------


def scalar_stores():
    from uaperceiver import Tensor
    from uaperceiver.params import ParamStore

    def make(v):
        s = ParamStore()
        s.add("x", Tensor(np.array([v])))
        return s

    return make(1.0), make(5.0), make(2.0)


def test_bezier_endpoints():
    w0, w1, theta = scalar_stores()
    assert ua.bezier_point(w0, w1, theta, 0.0).allclose(w0)
    assert ua.bezier_point(w0, w1, theta, 1.0).allclose(w1)


def test_bezier_midpoint_closed_form():
    w0, w1, theta = scalar_stores()
    mid = ua.bezier_point(w0, w1, theta, 0.5)
    np.testing.assert_allclose(
        mid["x"].data, 0.25 * 1.0 + 0.5 * 2.0 + 0.25 * 5.0, atol=1e-15
    )


def test_bezier_rejects_bad_t():
    w0, w1, theta = scalar_stores()
    with pytest.raises(RangeError):
        ua.bezier_point(w0, w1, theta, 1.5)


# ---- shared training loop -------------------------------------------


def test_train_is_deterministic(tiny_config, tiny_dataset):
    runs = []
    for _ in range(2):
        params = init_params(tiny_config, 20)
        train_model(tiny_config, params, tiny_dataset, constant(3), 21, FAST)
        runs.append(params.detached())
    assert runs[0].allclose(runs[1])


def test_train_logs_lr_and_loss(tiny_config, tiny_dataset):
    params = init_params(tiny_config, 22)
    log = train_model(tiny_config, params, tiny_dataset, constant(5, 2e-3), 23, FAST)
    assert [t for t, _, _ in log.steps] == [1, 2, 3, 4, 5]
    assert all(lr == 2e-3 for _, lr, _ in log.steps)
    assert all(np.isfinite(loss) for _, _, loss in log.steps)


def test_train_member_temperature_positive(tiny_config, tiny_dataset):
    _, temp, _ = ua.train_member(
        tiny_config, tiny_dataset, constant(3), 30, FAST, fit_temperature=True
    )
    assert temp > 0.0
    _, temp_off, _ = ua.train_member(
        tiny_config, tiny_dataset, constant(3), 30, FAST, fit_temperature=False
    )
    assert temp_off == 1.0
