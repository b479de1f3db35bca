from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from hlseg import config
from hlseg.core import hlnet
from hlseg.core.base import ConvParams
from hlseg.core.errors import LoadError, ShapeError
from hlseg.core.modelio import WeightStore


def test_shape_trace_matches_reference_architecture(default_model, rng):
    trace = []
    default_model.forward(rng.uniform(0, 1, (224, 224, 3)), trace=trace)
    assert trace == config.REFERENCE_TRACE
    assert hlnet.shape_trace(hlnet.HLNetConfig()) == config.REFERENCE_TRACE


def test_forward_is_a_probability_map(default_model, rng):
    prob = default_model.forward(rng.uniform(0, 1, (224, 224, 3)))
    assert prob.shape == (224, 224, 3)
    assert prob.dtype == np.float32
    np.testing.assert_allclose(prob.sum(axis=2), 1.0, atol=1e-6)


def test_zero_weights_give_uniform_probabilities(default_store, rng):
    zeros = WeightStore({name: np.zeros_like(arr) for name, arr in default_store.items()})
    # BN variance of zero with the build epsilon keeps the fold finite
    model = hlnet.build(zeros)
    prob = model.forward(rng.uniform(0, 1, (224, 224, 3)))
    np.testing.assert_allclose(prob, 1.0 / 3.0, atol=1e-6)


def test_forward_is_deterministic(default_store, rng):
    image = rng.uniform(0, 1, (224, 224, 3))
    first = hlnet.build(default_store).forward(image)
    second = hlnet.build(default_store).forward(image)
    assert first.tobytes() == second.tobytes()


def test_forward_rejects_wrong_input_size(default_model):
    with pytest.raises(ShapeError):
        default_model.forward(np.zeros((112, 112, 3)))


def test_build_names_missing_tensor(default_store):
    partial = WeightStore({n: a for n, a in default_store.items() if not n.startswith("stage6.project")})
    with pytest.raises(LoadError, match="stage6.project"):
        hlnet.build(partial)


def test_build_reports_expected_and_actual_shape(default_store):
    broken = WeightStore(dict(default_store.items()))
    broken["stage1.conv.kernel"] = np.zeros((3, 3, 3, 16))
    with pytest.raises(ShapeError, match=r"\(3, 3, 3, 32\).*\(3, 3, 3, 16\)"):
        hlnet.build(broken)


def test_expansion_factor_six():
    shapes = {s.name: s.kernel_shape for s in hlnet.layer_specs(hlnet.HLNetConfig())}
    assert shapes["stage4.low_block.expand"] == (1, 1, 64, 6 * 64)
    assert shapes["stage4.low_block.depthwise"] == (3, 3, 6 * 64, 1)


def test_dilation_rates_are_two_four_eight(default_model):
    rates = [default_model.layers[f"stage6.branch{i}"].dilation for i in range(3)]
    assert rates == [2, 4, 8]


def test_param_count_single_conv():
    layer = ConvParams(kernel=np.zeros((3, 3, 3, 32)), bias=np.zeros(32), stride=2)
    model = hlnet.HLNetModel(cfg=hlnet.HLNetConfig(), layers={"stage1.conv": layer})
    assert hlnet.param_count(model) == 896


def _kernel_params(cfg):
    model = hlnet.build(hlnet.init_weights(cfg, seed=1), cfg=cfg)
    return sum(p.kernel.size for p in model.layers.values())


def test_doubling_width_roughly_quadruples_conv_weights():
    ratio = _kernel_params(hlnet.HLNetConfig(width_mult=2.0)) / _kernel_params(hlnet.HLNetConfig())
    assert 3.5 < ratio <= 4.0


def test_eleven_class_head(default_store, rng):
    cfg = hlnet.HLNetConfig(num_classes=11)
    model = hlnet.build(hlnet.init_weights(cfg, seed=3), cfg=cfg)
    assert model.layers["stage8.classifier"].kernel.shape == (1, 1, 32, 11)
    prob = model.forward(rng.uniform(0, 1, (224, 224, 3)))
    assert prob.shape == (224, 224, 11)
    np.testing.assert_allclose(prob.sum(axis=2), 1.0, atol=1e-5)
    with pytest.raises(ShapeError):
        hlnet.build(default_store, num_classes=11)


def test_concurrent_forward_matches_sequential(default_model):
    images = [np.random.default_rng(i).uniform(0, 1, (224, 224, 3)) for i in range(4)]
    sequential = [default_model.forward(im) for im in images]
    with ThreadPoolExecutor(max_workers=4) as pool:
        concurrent = list(pool.map(default_model.forward, images))
    for a, b in zip(sequential, concurrent):
        np.testing.assert_allclose(a, b, atol=1e-6)


def _closed_form_param_count(k=3, t=6):
    conv = lambda kh, kw, cin, cout: kh * kw * cin * cout + cout
    dw = lambda c: 9 * c + c
    ir = conv(1, 1, 64, 64 * t) + dw(64 * t) + conv(1, 1, 64 * t, 64)
    return (conv(3, 3, 3, 32)
            + dw(32) + conv(1, 1, 32, 64)
            + dw(64) + conv(1, 1, 64, 64)
            + 2 * ir + 2 * conv(1, 1, 64, 64)
            + conv(3, 3, 128, 64) + conv(1, 1, 64, 16) + conv(1, 1, 16, 64)
            + 3 * conv(3, 3, 64, 64) + conv(1, 1, 64, 32)
            + conv(1, 1, 32, k))


def test_param_count_matches_closed_form(default_model):
    assert hlnet.param_count(default_model) == _closed_form_param_count()


def test_ablation_without_interaction_or_dilation(rng):
    cfg = hlnet.HLNetConfig(use_interaction=False, use_dilated=False)
    model = hlnet.build(hlnet.init_weights(cfg, seed=1), cfg=cfg)
    assert "stage4.low_to_high" not in model.layers
    assert all(model.layers[f"stage6.branch{i}"].dilation == 1 for i in range(3))
    trace = []
    prob = model.forward(rng.uniform(0, 1, (224, 224, 3)), trace=trace)
    assert trace == config.REFERENCE_TRACE
    np.testing.assert_allclose(prob.sum(axis=2), 1.0, atol=1e-6)


def test_smaller_input_size_builds_and_runs(rng):
    cfg = hlnet.HLNetConfig(input_size=64, num_classes=2)
    model = hlnet.build(hlnet.init_weights(cfg), cfg=cfg)
    assert model.forward(rng.uniform(0, 1, (64, 64, 3))).shape == (64, 64, 2)
