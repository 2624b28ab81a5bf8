import struct

import numpy as np
import pytest

from primnav.common import CheckpointError, InputValidationError
from primnav.dqn import (
    ACTION_COUNT,
    ARCHITECTURE,
    EXPECTED_PARAMETER_COUNT,
    MAGIC,
    activation_pattern,
    backward,
    build_network,
    forward,
    forward_batch,
    load_checkpoint,
    read_checkpoint,
    save_checkpoint,
    select_action,
    td_target,
    td_targets,
    write_checkpoint,
)
from primnav.tensor_nn import AdamState, adam_step, gradient_check


def _inputs(seed: int, batch: int = 2):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, size=(batch, 32, 32)), rng.normal(0.0, 2.0, size=(batch, 3))


def test_parameter_count():
    params = build_network(0)
    assert params.parameter_count == EXPECTED_PARAMETER_COUNT == 69_786
    per_layer = [spec.num_params for spec in ARCHITECTURE.values()]
    assert per_layer == [808, 4624, 4640, 51264, 32, 16, 16, 528, 5184, 2080, 594]


def test_layer_shapes():
    assert ARCHITECTURE["conv1"].output_shape == (12, 12, 8)
    assert ARCHITECTURE["conv2"].output_shape == (7, 7, 16)
    assert ARCHITECTURE["conv3"].output_shape == (5, 5, 32)
    assert ARCHITECTURE["depth_dense"].weight_shape == (800, 64)
    assert ARCHITECTURE["head_1"].weight_shape == (80, 64)
    assert ARCHITECTURE["q_values"].weight_shape == (32, 18)
    assert ARCHITECTURE["q_values"].activation == "none"
    assert all(spec.activation == "relu" for name, spec in ARCHITECTURE.items() if name != "q_values")


def test_build_network_deterministic():
    first, second, other = build_network(1), build_network(1), build_network(2)
    for a, b in zip(first.arrays(), second.arrays()):
        np.testing.assert_array_equal(a, b)
    assert any(not np.array_equal(a, b) for a, b in zip(first.arrays(), other.arrays()))


def test_zero_input_gives_bias_propagated_values():
    """With zero biases everywhere, zero input propagates to all-zero Q-values."""
    params = build_network(3)
    q = forward(params, np.zeros((32, 32)), np.zeros(3))
    assert q.shape == (ACTION_COUNT,)
    np.testing.assert_array_equal(q, np.zeros(ACTION_COUNT))

    params.biases["q_values"][:] = np.arange(ACTION_COUNT)
    np.testing.assert_array_equal(forward(params, np.zeros((32, 32)), np.zeros(3)), np.arange(ACTION_COUNT))


def test_forward_flattens_to_800():
    depths, positions = _inputs(0)
    _, cache = forward_batch(build_network(0), depths, positions, keep_cache=True)
    assert cache.activations["flatten"].shape == (2, 800)
    assert cache.activations["fused"].shape == (2, 80)


def test_forward_deterministic_and_batch_consistent():
    params = build_network(4)
    depths, positions = _inputs(1, batch=3)
    q_batch, _ = forward_batch(params, depths, positions)
    for n in range(3):
        single = forward(params, depths[n], positions[n])
        np.testing.assert_array_equal(single, forward(params, depths[n], positions[n]))
        np.testing.assert_allclose(single, q_batch[n], rtol=0, atol=1e-12)


@pytest.mark.parametrize(
    "depth,relpos",
    [
        (np.full((32, 32), 1.5), np.zeros(3)),
        (np.full((32, 32), -0.1), np.zeros(3)),
        (np.zeros((16, 16)), np.zeros(3)),
        (np.zeros((32, 32)), np.array([np.nan, 0.0, 0.0])),
    ],
)
def test_forward_rejects_invalid_input(depth, relpos):
    with pytest.raises(InputValidationError):
        forward(build_network(0), depth, relpos)


@pytest.mark.parametrize("seed", [0, 1, 2, 3, 4])
def test_full_network_gradient_check(seed):
    """Backpropagation through both lanes matches central differences."""
    params = build_network(seed)
    params.biases["q_values"][:] = np.random.default_rng(seed).normal(size=ACTION_COUNT)
    depths, positions = _inputs(100 + seed)
    upstream = np.random.default_rng(200 + seed).normal(size=(2, ACTION_COUNT))

    def loss():
        q, _ = forward_batch(params, depths, positions)
        return float(np.sum(q * upstream))

    _, cache = forward_batch(params, depths, positions, keep_cache=True)
    grads = backward(params, cache, upstream)
    report = gradient_check(
        loss,
        params.arrays(),
        grads,
        tolerance=1e-4,
        step=1e-7,
        max_entries_per_param=12,
        rng=np.random.default_rng(seed),
        region_fn=lambda: activation_pattern(params, depths, positions),
    )
    assert report.passed, report.max_relative_error
    assert report.skipped <= 2


def test_backward_shapes_align_with_arrays():
    params = build_network(0)
    depths, positions = _inputs(0)
    _, cache = forward_batch(params, depths, positions, keep_cache=True)
    grads = backward(params, cache, np.ones((2, ACTION_COUNT)))
    assert [g.shape for g in grads] == [a.shape for a in params.arrays()]


def test_select_action_greedy():
    rng = np.random.default_rng(0)
    q = np.zeros(ACTION_COUNT)
    q[7] = 1.0
    assert select_action(q, 0.0, rng) == 7
    assert select_action(np.ones(ACTION_COUNT), 0.0, rng) == 0


def test_select_action_uniform_when_epsilon_one():
    rng = np.random.default_rng(0)
    q = np.arange(ACTION_COUNT, dtype=float)
    counts = np.bincount([select_action(q, 1.0, rng) for _ in range(10_000)], minlength=ACTION_COUNT)
    assert np.all(np.abs(counts / 10_000 - 1 / ACTION_COUNT) < 0.02)


def test_select_action_argmax_invariant_under_affine_transform():
    rng = np.random.default_rng(5)
    for _ in range(20):
        q = rng.normal(size=ACTION_COUNT)
        assert select_action(q, 0.0, rng) == select_action(3.0 * q + 7.0, 0.0, rng)


def test_td_target_examples():
    next_q = np.linspace(-1.0, 2.0, ACTION_COUNT)
    assert td_target(-1.0, next_q, 0.99, terminal=True) == -1.0
    assert td_target(0.3, next_q, 0.0, terminal=False) == pytest.approx(0.3)
    assert td_target(0.5, next_q, 0.99, terminal=False) == pytest.approx(2.48)


def test_td_targets_batched():
    next_q = np.stack([np.linspace(-1.0, 2.0, ACTION_COUNT), np.zeros(ACTION_COUNT)])
    targets = td_targets(np.array([0.5, -1.0]), next_q, 0.99, np.array([False, True]))
    np.testing.assert_allclose(targets, [2.48, -1.0])


def test_checkpoint_round_trip_bit_exact(tmp_path):
    params = build_network(7)
    optimizer = AdamState.fresh(params.arrays())
    depths, positions = _inputs(3)
    _, cache = forward_batch(params, depths, positions, keep_cache=True)
    adam_step(params.arrays(), backward(params, cache, np.ones((2, ACTION_COUNT))), optimizer)

    path = write_checkpoint(tmp_path / "net.ckpt", params, optimizer, {"episode": 12})
    loaded = read_checkpoint(path)
    for a, b in zip(params.arrays(), loaded.params.arrays()):
        np.testing.assert_array_equal(a, b)
    assert loaded.optimizer.step_count == 1
    for a, b in zip(optimizer.second_moment, loaded.optimizer.second_moment):
        np.testing.assert_array_equal(a, b)
    assert loaded.metadata == {"episode": 12}
    np.testing.assert_array_equal(
        forward(params, depths[0], positions[0]), forward(loaded.params, depths[0], positions[0])
    )


def test_checkpoint_without_optimizer():
    data = save_checkpoint(build_network(0))
    assert data.startswith(MAGIC)
    assert load_checkpoint(data).optimizer is None


def test_truncated_checkpoint_rejected():
    data = save_checkpoint(build_network(0))
    for cut in (5, len(MAGIC) + 2, len(data) // 2, len(data) - 1):
        with pytest.raises(CheckpointError):
            load_checkpoint(data[:cut])


def test_bad_magic_and_version_rejected():
    data = save_checkpoint(build_network(0))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(b"X" + data[1:])
    bumped = data[: len(MAGIC)] + struct.pack("<I", 99) + data[len(MAGIC) + 4 :]
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(bumped)


def test_trailing_bytes_rejected():
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(save_checkpoint(build_network(0)) + b"\x00")


def test_fingerprint_mismatch_rejected(monkeypatch):
    """A checkpoint written for a differently shaped network is refused."""
    import primnav.dqn as dqn

    original = dqn.architecture_fingerprint()
    altered = [list(layer) for layer in original]
    altered[3][2] = [800, 128]
    monkeypatch.setattr(dqn, "architecture_fingerprint", lambda: altered)
    data = save_checkpoint(build_network(0))
    monkeypatch.setattr(dqn, "architecture_fingerprint", lambda: original)
    with pytest.raises(CheckpointError, match="fingerprint"):
        load_checkpoint(data)
