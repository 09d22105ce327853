import numpy as np
import pytest

from spreadpool import (BevGridSpec, DomainError, ExecMode, FrustumBatch,
                        WeightKind, WeightParams, spread_pool_backward,
                        spread_pool_forward)

from gradcheck import make_config, run_gradcheck

GAUSS = WeightParams(kind=WeightKind.GAUSSIAN, alpha=0.02)
DELTA = WeightParams(kind=WeightKind.DELTA)


def small_batch(seed=0, n=40, channels=3):
    rng = np.random.default_rng(seed)
    return FrustumBatch(
        rng.uniform(0, 9, size=(n, 2)),
        rng.uniform(5, 95, size=n),
        rng.standard_normal((n, channels)).astype(np.float32),
    )


def test_delta_backward_is_gather():
    spec = BevGridSpec(0.0, 0.0, 1.0, 10, 10)
    batch = small_batch(2)
    fmap = spread_pool_forward(batch, spec, DELTA, 1, ExecMode.DETERMINISTIC)
    rng = np.random.default_rng(3)
    grad_bev = rng.standard_normal(fmap.data.shape)
    grads = spread_pool_backward(grad_bev, fmap.saved, batch, DELTA)
    assert grads.grad_alpha == 0.0
    assert not grads.grad_depths.any()
    flat = grad_bev.reshape(-1, batch.num_channels)
    for row, t in enumerate(fmap.saved.kept):
        cell = fmap.saved.cells[row, 0]
        np.testing.assert_allclose(grads.grad_features[t], flat[cell], rtol=1e-6)


def test_shape_mismatch_rejected():
    spec = BevGridSpec(0.0, 0.0, 1.0, 10, 10)
    batch = small_batch(4)
    fmap = spread_pool_forward(batch, spec, GAUSS, 2)
    with pytest.raises(DomainError):
        spread_pool_backward(np.zeros((9, 10, 3)), fmap.saved, batch, GAUSS)
    with pytest.raises(DomainError):
        spread_pool_backward(np.zeros((10, 10, 5)), fmap.saved, batch, GAUSS)
    other = small_batch(4, n=12)
    with pytest.raises(DomainError):
        spread_pool_backward(np.zeros((10, 10, 3)), fmap.saved, other, GAUSS)


def test_dropped_points_get_zero_gradients():
    spec = BevGridSpec(0.0, 0.0, 1.0, 4, 4)
    batch = FrustumBatch(np.array([[1.0, 1.0], [50.0, 50.0]]),
                         np.array([40.0, 40.0]),
                         np.ones((2, 2), np.float32))
    fmap = spread_pool_forward(batch, spec, GAUSS, 2)
    grads = spread_pool_backward(np.ones((4, 4, 2)), fmap.saved, batch, GAUSS)
    assert not grads.grad_features[1].any()
    assert grads.grad_depths[1] == 0.0
    assert grads.grad_features[0].any()


def test_fully_clamped_alpha_and_depth_grads_vanish():
    cfg = None
    seed = 0
    while cfg is None:
        cfg = make_config(seed, WeightKind.GAUSSIAN, "clamped")
        seed += 1
    batch, spec, params, k = cfg
    fmap = spread_pool_forward(batch, spec, params, k, ExecMode.REFERENCE)
    grads = spread_pool_backward(2.0 * fmap.data, fmap.saved, batch, params)
    assert fmap.saved.clamped.all()
    assert grads.grad_alpha == 0.0
    assert not grads.grad_depths.any()
    assert grads.grad_features.any()


@pytest.mark.parametrize("kind", [WeightKind.GAUSSIAN, WeightKind.LINEAR, WeightKind.L2])
@pytest.mark.parametrize("regime", ["unclamped", "clamped", "mixed"])
def test_gradcheck_small(kind, regime):
    done = 0
    seed = 100
    while done < 4:
        cfg = make_config(seed, kind, regime)
        seed += 1
        if cfg is None:
            continue
        batch, spec, params, k = cfg
        worst = run_gradcheck(batch, spec, params, k,
                              rng=np.random.default_rng(seed))
        assert worst < 1e-4, f"kind={kind} regime={regime} seed={seed} err={worst}"
        done += 1


def test_backward_worker_count_invariant():
    # n large enough to split into several point blocks (the parallel path).
    spec = BevGridSpec(0.0, 0.0, 1.0, 16, 16)
    batch = small_batch(21, n=200_000, channels=2)
    fmap = spread_pool_forward(batch, spec, GAUSS, 3)
    grad_bev = np.random.default_rng(22).standard_normal((16, 16, 2))
    base = spread_pool_backward(grad_bev, fmap.saved, batch, GAUSS, workers=1)
    for workers in (2, 8):
        got = spread_pool_backward(grad_bev, fmap.saved, batch, GAUSS,
                                   workers=workers)
        np.testing.assert_array_equal(base.grad_features, got.grad_features)
        np.testing.assert_array_equal(base.grad_depths, got.grad_depths)
        assert base.grad_alpha == got.grad_alpha


def test_backward_consistent_across_forward_modes():
    # Saved context is built before accumulation, so gradients agree no
    # matter which mode produced the map.
    spec = BevGridSpec(0.0, 0.0, 1.0, 12, 12)
    batch = small_batch(9)
    grad_bev = np.random.default_rng(10).standard_normal((12, 12, 3))
    results = []
    for mode in ExecMode:
        fmap = spread_pool_forward(batch, spec, GAUSS, 3, mode)
        results.append(spread_pool_backward(grad_bev, fmap.saved, batch, GAUSS))
    for g in results[1:]:
        np.testing.assert_array_equal(results[0].grad_features, g.grad_features)
        assert results[0].grad_alpha == g.grad_alpha
        np.testing.assert_array_equal(results[0].grad_depths, g.grad_depths)
