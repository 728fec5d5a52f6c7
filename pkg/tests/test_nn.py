import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photonfi import nn
from photonfi.accelerator import FC, INPUT_ARRAY, FaultedAccelerator, map_model
from photonfi.errors import ContractError, ShapeError
from tests.conftest import random_model


def test_identity_conv_preserves_input():
    w = np.ones((1, 1, 1, 1), dtype=np.float32)
    model = nn.Model(name="id", layers=[nn.Conv2d(1, 1, (1, 1), weight=w, name="c")])
    x = np.random.default_rng(0).random((2, 1, 5, 5)).astype(np.float32)
    out = nn.reference_forward(model, x)
    np.testing.assert_array_equal(out, x)


def test_zero_weight_fc_returns_bias():
    b = np.array([0.5, -1.5, 3.0], dtype=np.float32)
    model = nn.Model(name="b", layers=[
        nn.Flatten(),
        nn.Linear(3, 4, weight=np.zeros((3, 4), dtype=np.float32), bias=b, name="f")])
    x = np.random.default_rng(1).random((5, 1, 2, 2)).astype(np.float32)
    out = nn.reference_forward(model, x)
    np.testing.assert_array_equal(out, np.tile(b, (5, 1)))


def test_argmax_agreement_on_100_random_inputs(small_acc):
    rng = np.random.default_rng(2)
    model = random_model(rng, with_bias=True)
    plan = map_model(model, small_acc)
    x = rng.random((100, 1, 28, 28)).astype(np.float32)
    ref = nn.reference_forward(model, x)
    got = nn.accelerated_forward(model, x, plan, FaultedAccelerator.healthy(small_acc))
    assert (ref.argmax(axis=1) == got.argmax(axis=1)).all()
    rel = np.abs(got - ref) / np.maximum(np.abs(ref), 1e-12)
    assert rel.max() < 1e-4


def test_forward_rejects_bad_rank():
    model = nn.Model(name="m", layers=[nn.ReLU()])
    with pytest.raises(ShapeError):
        nn.reference_forward(model, np.zeros((2, 3, 4)))


@settings(max_examples=40)
@given(st.integers(1, 3), st.integers(2, 30), st.integers(2, 30), st.integers(1, 4))
def test_shape_safety_channel_mismatch(n, h, w, c):
    conv = nn.Conv2d(2, c + 1, (1, 1),
                     weight=np.ones((2, c + 1, 1, 1), dtype=np.float32), name="c")
    model = nn.Model(name="m", layers=[conv])
    with pytest.raises(ShapeError):
        nn.reference_forward(model, np.zeros((n, c, h, w), dtype=np.float32))


@settings(max_examples=40)
@given(st.integers(1, 6), st.integers(1, 6))
def test_shape_safety_kernel_fit(h, w):
    conv = nn.Conv2d(1, 1, (7, 7), weight=np.ones((1, 1, 7, 7), dtype=np.float32), name="c")
    model = nn.Model(name="m", layers=[conv])
    with pytest.raises(ShapeError):
        nn.reference_forward(model, np.zeros((1, 1, h, w), dtype=np.float32))


def test_linear_width_mismatch():
    model = nn.Model(name="m", layers=[
        nn.Flatten(), nn.Linear(2, 9, weight=np.ones((2, 9), dtype=np.float32), name="f")])
    with pytest.raises(ShapeError):
        nn.reference_forward(model, np.zeros((1, 1, 2, 2), dtype=np.float32))


def test_residual_add():
    w = np.ones((1, 1, 1, 1), dtype=np.float32)
    model = nn.Model(name="res", layers=[
        nn.Conv2d(1, 1, (1, 1), weight=w, name="c0"),   # 0: x
        nn.Conv2d(1, 1, (1, 1), weight=2 * w, name="c1"),  # 1: 2x
        nn.Residual(source=0),                          # 2: 2x + x
    ])
    x = np.random.default_rng(3).random((2, 1, 3, 3)).astype(np.float32)
    out = nn.reference_forward(model, x)
    np.testing.assert_allclose(out, 3 * x, rtol=1e-6)


def test_batchnorm_fold_matches_unfolded():
    rng = np.random.default_rng(4)
    conv = nn.Conv2d(3, 1, (3, 3), weight=rng.normal(size=(3, 1, 3, 3)).astype(np.float32),
                     name="c")
    bn = nn.BatchNorm2d(
        gamma=rng.random(3).astype(np.float32) + 0.5,
        beta=rng.normal(size=3).astype(np.float32),
        running_mean=rng.normal(size=3).astype(np.float32),
        running_var=rng.random(3).astype(np.float32) + 0.1,
        name="bn")
    model = nn.Model(name="m", layers=[conv, bn])
    x = rng.random((2, 1, 8, 8)).astype(np.float32)
    unfolded = nn.reference_forward(model, x)
    import copy

    folded = nn.fold_batchnorm(copy.deepcopy(model))
    assert len(folded.layers) == 1
    out = nn.reference_forward(folded, x)
    np.testing.assert_allclose(out, unfolded, rtol=1e-4, atol=1e-5)


def test_avgpool_matches_manual():
    model = nn.Model(name="m", layers=[nn.AvgPool2d(2, 2)])
    x = np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4)
    out = nn.reference_forward(model, x)
    np.testing.assert_allclose(out[0, 0], [[2.5, 4.5], [10.5, 12.5]])


def test_accelerated_forward_unmapped_layer(small_acc):
    rng = np.random.default_rng(5)
    model = random_model(rng)
    plan = map_model(model, small_acc)
    extended = nn.Model(name="m", layers=model.layers + [
        nn.Linear(2, 10, weight=rng.normal(size=(2, 10)).astype(np.float32), name="extra")])
    x = rng.random((1, 1, 28, 28)).astype(np.float32)
    with pytest.raises(ContractError):
        nn.accelerated_forward(extended, x, plan, FaultedAccelerator.healthy(small_acc))


def test_fault_monotone_exposure(toy_acc):
    """A superset of faults never perturbs fewer logits."""
    rng = np.random.default_rng(6)
    w = rng.normal(size=(4, 3)).astype(np.float32)
    model = nn.Model(name="m", layers=[nn.Linear(4, 3, weight=w, name="f")])
    plan = map_model(model, toy_acc)
    x = (rng.random((5, 3)) + 0.1)

    from photonfi.accelerator import layer_forward_via_accelerator

    def perturbed(cols):
        facc = FaultedAccelerator(
            toy_acc, off_columns={(FC, 0, 0, INPUT_ARRAY): np.array(sorted(cols))},
            off_resonance_value=0.0)
        out = layer_forward_via_accelerator(model.layers[0], x, plan.layer(0), facc)
        base = layer_forward_via_accelerator(model.layers[0], x, plan.layer(0),
                                             FaultedAccelerator.healthy(toy_acc))
        return np.abs(out - base) > 1e-12

    small = perturbed([0])
    big = perturbed([0, 2])
    assert (small <= big).all()  # set inclusion per (sample, logit)


def test_accuracy_constant_predictor_on_balanced_set():
    b = np.zeros(10, dtype=np.float32)
    b[0] = 1.0
    model = nn.Model(name="const", layers=[
        nn.Flatten(),
        nn.Linear(10, 4, weight=np.zeros((10, 4), dtype=np.float32), bias=b, name="f")])
    images = np.random.default_rng(7).random((50, 1, 2, 2)).astype(np.float32)
    labels = np.repeat(np.arange(10), 5)
    res = nn.evaluate_accuracy(model, images, labels)
    assert res.accuracy == pytest.approx(0.10)
    assert res.per_class_total.sum() == 50
    assert res.per_class_correct[0] == 5 and res.per_class_correct[1:].sum() == 0


def test_accuracy_rejects_empty_and_mismatched():
    model = nn.Model(name="m", layers=[nn.Flatten()])
    with pytest.raises(ContractError):
        nn.evaluate_accuracy(model, np.zeros((0, 1, 2, 2)), np.zeros(0, dtype=int))
    with pytest.raises(ContractError):
        nn.evaluate_accuracy(model, np.zeros((3, 1, 2, 2)), np.zeros(2, dtype=int))


def test_accuracy_deterministic(small_acc, dataset):
    from photonfi import faults

    rng = np.random.default_rng(8)
    model = random_model(rng)
    plan = map_model(model, small_acc)
    images, labels = dataset[0][:64], dataset[1][:64]
    spec = faults.AttackSpec(kind="actuation", scope="BOTH", fraction=0.2, seed=5)
    facc = faults.apply_attack(small_acc, spec, trial=0)
    a = nn.evaluate_accuracy(model, images, labels, plan, facc)
    b = nn.evaluate_accuracy(model, images, labels, plan, facc)
    assert a.accuracy == b.accuracy
