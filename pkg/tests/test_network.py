import numpy as np
import pytest

from aqng2.exceptions import ShapeMismatch
from aqng2.regressors.network import (
    DEFAULT_LAYERS,
    PccnnModel,
    backward,
    backward_batch,
    forward,
    fold_input_affine,
    forward_batch,
    infer_batch,
    init_parameters,
    plan,
    predict_raw,
)
from aqng2.regressors.pccnn import predict_batch
from aqng2.homodyne import Method
from gradcheck import fd_check, input_gradient_check, layer_coordinates


@pytest.fixture(scope="module")
def trained_like():
    """Default model with Glorot weights and a random output bias."""
    model = PccnnModel()
    theta = init_parameters(model.layer_spec, model.input_len, seed=3)
    theta[-1] = 1.4
    return model, theta


@pytest.fixture(scope="module")
def window():
    return np.random.default_rng(7).standard_normal(5000)


class TestPlan:
    def test_default_shapes(self):
        shapes, slots = plan(DEFAULT_LAYERS, 5000)
        assert shapes == [(1247, 8), (1247, 8), (311, 8), (152, 16), (152, 16), (38, 16), (1, 1)]
        assert sum(s.size for s in slots if s) == 1785

    def test_seven_counted_layers(self):
        assert PccnnModel().counted_layers() == 7

    def test_layout_offsets_contiguous(self):
        layout = [x for x in PccnnModel().param_layout if x]
        assert layout[0][0] == 0
        assert layout[1][0] == 8 * 16 + 8
        assert layout[2][0] == 136 + 16 * 8 * 8 + 16

    def test_last_layer_must_be_scalar_dense(self):
        with pytest.raises(ValueError):
            plan(({"kind": "conv1d", "filters": 2, "kernel": 3},), 10)

    def test_kernel_too_long(self):
        with pytest.raises(ShapeMismatch):
            plan(({"kind": "conv1d", "filters": 2, "kernel": 30}, {"kind": "dense"}), 10)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            plan(({"kind": "lstm"}, {"kind": "dense"}), 10)

    def test_parameter_count_checked(self):
        with pytest.raises(ShapeMismatch):
            PccnnModel(parameters=np.zeros(3))


class TestForward:
    def test_zero_model(self, window):
        assert forward(PccnnModel(), window) == 0.0

    def test_zero_weights_return_bias(self, window):
        theta = np.zeros(1785, dtype=np.float32)
        theta[-1] = 1.25
        assert forward(PccnnModel(parameters=theta), window) == 1.25

    def test_dense_dot_product(self):
        spec = ({"kind": "dense", "units": 1},)
        theta = np.concatenate([np.ones(5000), [0.0]])
        model = PccnnModel(spec, 5000, theta)
        assert forward(model, np.full(5000, 1 / 5000), np.float64) == pytest.approx(1.0, rel=1e-12)

    def test_deterministic(self, trained_like, window):
        model = PccnnModel(parameters=trained_like[1].astype(np.float32))
        outs = {forward(model, window) for _ in range(100)}
        assert len(outs) == 1

    def test_does_not_mutate(self, trained_like, window):
        model = PccnnModel(parameters=trained_like[1].astype(np.float32))
        before = model.parameters.copy()
        forward(model, window)
        assert np.array_equal(before, model.parameters)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            forward(PccnnModel(), np.zeros(4999))
        with pytest.raises(ShapeMismatch):
            forward(PccnnModel(), np.zeros((2, 5000)))

    def test_conv_matches_direct_loop(self):
        spec = ({"kind": "conv1d", "filters": 2, "kernel": 3, "stride": 2}, {"kind": "dense"})
        model = PccnnModel(spec, 9, init_parameters(spec, 9, 0))
        x = np.arange(9.0)
        w, b = model.parameters[:6].reshape(2, 1, 3), model.parameters[6:8]
        conv = np.array([[w[f, 0] @ x[2 * t : 2 * t + 3] + b[f] for f in range(2)] for t in range(4)])
        dense_w, dense_b = model.parameters[8:16], model.parameters[16]
        assert forward(model, x, np.float64) == pytest.approx(conv.ravel() @ dense_w + dense_b, rel=1e-12)


class TestBackward:
    def test_zero_at_minimum(self, trained_like, window):
        model, theta = trained_like
        y = forward(PccnnModel(parameters=theta), window, np.float64)
        assert np.all(backward(model, window, y, theta) == 0.0)

    def test_linear_hand_derivative(self):
        spec = ({"kind": "dense", "units": 1, "bias": False},)
        model = PccnnModel(spec, 1, np.array([1.0]))
        assert backward(model, np.array([2.0]), 0.0)[0] == 8.0

    @pytest.mark.parametrize("kind", ["conv1d", "dense"])
    def test_parameter_gradient(self, trained_like, window, kind):
        model, theta = trained_like
        assert fd_check(model, theta, window, 0.3, layer_coordinates(model, kind)) < 1e-4

    @pytest.mark.parametrize("kind", ["pool", "activation"])
    def test_input_gradient_through(self, kind):
        layer = {"kind": "pool", "size": 4} if kind == "pool" else {"kind": "activation", "fn": "relu"}
        assert input_gradient_check(layer) < 1e-4

    def test_batch_gradient_is_sum(self, trained_like):
        model, theta = trained_like
        x = np.random.default_rng(5).standard_normal((3, 5000))
        y, cache = forward_batch(model.layer_spec, model.slots, theta, x, keep_cache=True)
        total = backward_batch(model.layer_spec, model.slots, theta, cache, 2 * (y - 1.0))
        single = sum(backward(model, x[i], 1.0, theta) for i in range(3))
        assert np.allclose(total, single, rtol=1e-10, atol=1e-14)


class TestPredict:
    def test_batch_equals_forward(self, trained_like):
        model = PccnnModel(parameters=trained_like[1].astype(np.float32))
        x = np.random.default_rng(8).standard_normal((300, 5000))
        batch = predict_raw(model, x)
        single = np.array([forward(model, row) for row in x])
        assert np.array_equal(batch, single)

    def test_predict_batch_estimates(self, trained_like):
        model = PccnnModel(parameters=trained_like[1].astype(np.float32))
        x = np.random.default_rng(9).standard_normal((5, 5000))
        est = predict_batch(model, x)
        assert [e.value for e in est] == [forward(model, row) for row in x]
        assert all(e.method is Method.PCCNN and np.isnan(e.std_error) for e in est)
        assert predict_batch(model, np.zeros((0, 5000))) == []

    def test_batch_of_one(self, trained_like):
        model = PccnnModel(parameters=trained_like[1].astype(np.float32))
        x = np.random.default_rng(10).standard_normal(5000)
        assert predict_batch(model, x[None])[0].value == forward(model, x)

    def test_order_preserved_6107(self, trained_like):
        model = PccnnModel(parameters=trained_like[1].astype(np.float32))
        x = np.random.default_rng(11).standard_normal((6107, 5000)).astype(np.float32)
        pred = predict_raw(model, x)
        assert pred.shape == (6107,)
        rev = predict_raw(model, x[::-1])
        assert np.array_equal(pred, rev[::-1])

    def test_uniform_length_required(self):
        with pytest.raises(ShapeMismatch):
            predict_batch(PccnnModel(), np.zeros((2, 4000)))


class TestInferencePath:
    SPECS = [
        DEFAULT_LAYERS,
        ({"kind": "conv1d", "filters": 3, "kernel": 5, "stride": 2}, {"kind": "conv1d", "filters": 2, "kernel": 3},
         {"kind": "dense"}),
        ({"kind": "pool", "size": 3}, {"kind": "activation", "fn": "relu"}, {"kind": "dense"}),
    ]

    @pytest.mark.parametrize("spec", SPECS)
    def test_matches_training_pass(self, spec):
        length = 5000 if spec is DEFAULT_LAYERS else 50
        model = PccnnModel(spec, length, init_parameters(spec, length, 1))
        x = np.random.default_rng(2).standard_normal((6, length))
        a = forward_batch(spec, model.slots, model.parameters, x)
        assert np.allclose(infer_batch(spec, model.slots, model.parameters, x), a, rtol=1e-12, atol=1e-12)

    def test_input_not_modified(self):
        spec = ({"kind": "activation", "fn": "relu"}, {"kind": "dense"})
        model = PccnnModel(spec, 20, init_parameters(spec, 20, 0))
        x = np.random.default_rng(0).standard_normal((2, 20))
        before = x.copy()
        infer_batch(spec, model.slots, model.parameters, x)
        assert np.array_equal(x, before)

    def test_fold_input_affine(self, trained_like):
        model = PccnnModel(parameters=trained_like[1])
        raw = np.random.default_rng(12).normal(0.3, 2.5, (4, 5000))
        folded = fold_input_affine(model, 0.3, 2.5)
        want = predict_raw(model, (raw - 0.3) / 2.5, dtype=np.float64)
        assert np.allclose(predict_raw(folded, raw, dtype=np.float64), want, rtol=1e-10)

    def test_fold_needs_leading_conv(self):
        spec = ({"kind": "dense"},)
        assert fold_input_affine(PccnnModel(spec, 5, np.zeros(6)), 0.0, 1.0) is None

    def test_chunk_size_irrelevant(self, trained_like):
        model = PccnnModel(parameters=trained_like[1].astype(np.float32))
        x = np.random.default_rng(13).standard_normal((70, 5000))
        assert np.array_equal(predict_raw(model, x, batch_size=7), predict_raw(model, x, batch_size=64))
