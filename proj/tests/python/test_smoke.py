import json

import numpy as np
import pytest

import cyclereg


def test_charbonnier_at_zero():
    assert abs(cyclereg.charbonnier(0.0) - 1e-6 ** 0.45) < 1e-12


def test_warp_by_integer_shift():
    src = np.random.default_rng(0).random((6, 7, 8))
    field = np.zeros((6, 7, 8, 3))
    field[..., 0] = 1.0
    out = cyclereg.warp_scalar(src, field)
    np.testing.assert_array_equal(out[:, :, :-1], src[:, :, 1:])
    np.testing.assert_array_equal(out[:, :, -1], src[:, :, -1])


def test_shape_errors_surface_as_value_errors():
    with pytest.raises(ValueError):
        cyclereg.warp_scalar(np.zeros((4, 4, 4)), np.zeros((4, 4, 5, 3)))


def test_dice_counting():
    a = np.zeros((4, 4, 4), dtype=np.uint16)
    b = np.zeros_like(a)
    a.flat[[0, 1, 2, 3, 4]] = 1
    b.flat[[3, 4, 9]] = 1
    assert cyclereg.dice_score(a, b, 1) == 0.5
    assert cyclereg.dice_score(a, a, 1) == 1.0


def test_inverse_translation_has_no_consistency_error():
    f = np.zeros((10, 10, 10, 3))
    f[..., 0] = 1.5
    mean, worst, _ = cyclereg.inverse_consistency_error(f, -f)
    assert mean == 0.0 and worst == 0.0


def test_gradient_suite_passes():
    errors = cyclereg.gradient_suite(size=6, seed=3)
    assert set(errors) == {"sim", "smooth_f", "smooth_b", "cyc", "trans", "anatomy_cyc", "diff_cyc", "total"}
    assert max(errors.values()) < 1e-4


def test_config_round_trip_and_rejection():
    cfg = json.loads(cyclereg.default_config())
    assert cfg["lambda1"] == 10.0 and cfg["lambda2"] == 3.0
    with pytest.raises(ValueError):
        cyclereg.transfer_labels(np.zeros((8, 8, 8)), np.zeros((8, 8, 8), np.uint16),
                                 np.zeros((8, 8, 8)), '{"no_such_key": 1}')


def test_identity_transfer_on_small_phantom():
    image, labels = cyclereg.gen_phantom(shape=(32, 32, 32), seed=3)
    cfg = json.dumps({"pyramid_levels": 2, "iters_per_level": [40, 20]})
    out = cyclereg.transfer_labels(image, labels, image, cfg)
    assert out["segmentation"].shape == labels.shape
    assert out["forward"].shape == (32, 32, 32, 3)
    assert np.mean(out["segmentation"] == labels) > 0.99
    assert min(cyclereg.foreground_dice(out["segmentation"], labels, 5)) > 0.95
