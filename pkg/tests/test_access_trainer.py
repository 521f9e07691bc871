import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sagin_secure.access_trainer import (
    AccessNet, InferencePipeline, QTargetTable, build_q_targets, select_access, train_access_net,
    uniform_phi, weighted_abs_loss,
)
from sagin_secure.config import ScenarioConfig
from sagin_secure.dataset import generate_dataset
from sagin_secure.neural import TrainConfig, init_mlp
from sagin_secure.power_trainer import TrainingError, feature_stats, train_power_bundle
from sagin_secure.rates import N_ACCESS, check_constraints

CFG = ScenarioConfig()


def test_weighted_abs_examples():
    phi = uniform_phi()
    assert weighted_abs_loss(np.zeros(27), np.ones(27), phi) == pytest.approx(1.0)
    assert weighted_abs_loss(np.arange(27.0), np.arange(27.0), phi) == 0.0
    one_hot = np.eye(27)[4]
    assert weighted_abs_loss(np.zeros(27), 2 * one_hot, one_hot) == pytest.approx(2.0)
    rows = np.stack([np.zeros(27), np.full(27, 3.0)])
    np.testing.assert_allclose(weighted_abs_loss(rows, np.zeros((2, 27)), phi), [0.0, 3.0])


def test_select_access_spike_and_ties():
    v = np.zeros(27)
    v[7] = 1.0
    assert select_access(v, None) == 7
    assert select_access(np.zeros(27), None) == 0  # ties go to the lowest index


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=27, max_size=27),
       st.floats(1e-3, 1e3), st.floats(-1e3, 1e3))
def test_select_access_affine_invariance(v, a, b):
    v = np.array(v)
    w = a * v + b
    # the map is monotone, so the argmax of w is a maximizer of v
    assert v[select_access(w, None)] == v.max() or np.isclose(v[select_access(w, None)], v.max())


@pytest.fixture(scope="module")
def tiny():
    train = generate_dataset(CFG, 256, seed=1)
    bundle = train_power_bundle(train, TrainConfig(learning_rate=3e-3, epochs=2, optimizer="adam"), CFG)
    q = build_q_targets(train, bundle, CFG)
    return train, bundle, q


def test_targets_shape_and_masking(tiny):
    train, bundle, q = tiny
    assert q.targets.shape == (256, N_ACCESS)
    assert np.all(q.targets >= 0)
    np.testing.assert_array_equal(q.targets, np.where(q.qos_ok, q.raw_targets, 0.0))
    # every entry equals the secrecy its own net achieves
    k = 5
    rep = check_constraints(k, bundle[k].allocate(train, CFG), train.channels, CFG)
    np.testing.assert_array_equal(q.raw_targets[:, k], rep.sum_secrecy)
    unmasked = build_q_targets(train, bundle, CFG, mask_infeasible=False)
    np.testing.assert_array_equal(unmasked.targets, q.raw_targets)


def test_target_table_round_trip(tmp_path, tiny):
    _, _, q = tiny
    q.save(tmp_path / "q.npz")
    q2 = QTargetTable.load(tmp_path / "q.npz")
    for a, b in [(q.targets, q2.targets), (q.qos_ok, q2.qos_ok), (q.raw_targets, q2.raw_targets)]:
        np.testing.assert_array_equal(a, b)
    np.savez(tmp_path / "bad.npz", targets=np.zeros((3, 5)), qos_ok=np.zeros((3, 5)),
             raw_targets=np.zeros((3, 5)))
    with pytest.raises(ValueError):
        QTargetTable.load(tmp_path / "bad.npz")


def test_lr_zero_leaves_parameters(tiny):
    train, bundle, q = tiny
    norm = (bundle.feature_mean, bundle.feature_std)
    tc = TrainConfig(learning_rate=0.0, epochs=1, optimizer="sgd", seed=2)
    a = train_access_net(q, train, tc, norm)
    b = train_access_net(q, train, tc.replace(epochs=3), norm)
    for x, y in zip(a.model.params(), b.model.params()):
        np.testing.assert_array_equal(x, y)


def test_training_is_deterministic_and_reduces_error(tiny):
    train, bundle, q = tiny
    norm = (bundle.feature_mean, bundle.feature_std)
    tc = TrainConfig(learning_rate=1e-3, epochs=30, optimizer="adam", seed=3)
    a = train_access_net(q, train, tc, norm)
    b = train_access_net(q, train, tc, norm)
    assert a.model.dumps() == b.model.dumps()
    assert a.metric_history == b.metric_history
    assert a.metric_history[-1] < a.metric_history[0]
    assert a.model.layer_dims == (12, 40, 27)


def test_misaligned_targets_rejected(tiny):
    train, bundle, q = tiny
    short = QTargetTable(q.targets[:10], q.qos_ok[:10], q.raw_targets[:10])
    with pytest.raises(TrainingError):
        train_access_net(short, train, TrainConfig(), (bundle.feature_mean, bundle.feature_std))


def test_learns_a_smooth_target_map():
    # targets that are a simple function of the features must be learnable to a few percent
    data = generate_dataset(CFG, 3000, seed=4)
    held = generate_dataset(CFG, 500, seed=4, start=10_000)
    mean, std = feature_stats(data.features)

    def targets_of(ds):
        z = (ds.features - mean) / std
        w = np.random.default_rng(5).normal(size=(12, 27)) * 0.3
        return np.maximum(2.0 + z @ w, 0.0)

    q = QTargetTable(targets_of(data), np.ones((3000, 27), bool), targets_of(data))
    qv = QTargetTable(targets_of(held), np.ones((500, 27), bool), targets_of(held))
    tc = TrainConfig(learning_rate=3e-3, epochs=60, optimizer="adam", seed=0)
    net = train_access_net(q, data, tc, (mean, std), validation=(held.features, qv), dropout_rate=0.0)
    assert net.metric_history[-1] < 0.05 * qv.targets.mean()


def test_inference_pipeline_round_trip_and_tamper(tmp_path, tiny):
    train, bundle, q = tiny
    rng = np.random.default_rng(6)
    net = AccessNet(init_mlp((12, 40, 27), rng).with_standardization(bundle.feature_mean,
                                                                     bundle.feature_std))
    pipe = InferencePipeline(net, bundle)
    res = pipe.run(train, CFG)
    assert res.power.shape == (256, 3)
    assert np.all(res.budget_ok)
    np.testing.assert_array_equal(res.access, select_access(net, train.features))
    path = pipe.save(tmp_path / "bundle")
    again = InferencePipeline.load(path).run(train, CFG)
    np.testing.assert_array_equal(again.access, res.access)
    np.testing.assert_array_equal(again.power, res.power)
    manifest = json.loads(path.read_text())
    assert set(manifest["files"]) == {"power_bundle.json", "access_net.json"}
    f = tmp_path / "bundle" / "access_net.json"
    f.write_text(f.read_text().replace("0", "1", 1))
    with pytest.raises(ValueError):
        InferencePipeline.load(path)
