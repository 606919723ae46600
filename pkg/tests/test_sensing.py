import numpy as np
import pytest

from dkfsim.errors import ConfigError
from dkfsim.sensing import (
    R_MIN,
    DelaySpec,
    SensorNetwork,
    SensorNode,
    delay_steps,
    load_network,
    measure,
    resolve_delays,
    sample_network,
    save_network,
)


def make_node(h_row=(0.0, 1.0), r=0.25, base=0.0, jitter=0.0, node_id=1):
    return SensorNode(
        id=node_id,
        h=np.array([list(h_row)]),
        r=np.array([[r]]),
        delay=DelaySpec(base=base, jitter_std=jitter),
    )


def test_measure_selector_rows(zero_rng):
    assert measure(make_node((0, 1)), [1.0, 2.0], zero_rng) == pytest.approx(2.0)
    assert measure(make_node((1, 0)), [3.0, -1.0], zero_rng) == pytest.approx(3.0)


def test_measure_noise_variance():
    node = make_node(r=0.25)
    rng = np.random.default_rng(5)
    x = np.array([0.3, -1.2])
    draws = np.array([measure(node, x, rng)[0] for _ in range(10_000)])
    assert np.var(draws) == pytest.approx(0.25, rel=0.1)


def test_measure_dimension_check(zero_rng):
    with pytest.raises(ConfigError):
        measure(make_node(), [1.0, 2.0, 3.0], zero_rng)


def test_sample_network_scenario_statistics():
    rng = np.random.default_rng(11)
    net = sample_network(2000, (0.0, 0.5), (0.0, 2.0), rng)
    assert len(net) == 2000
    variances = np.array([node.r[0, 0] for node in net])
    delays = np.array([node.delay.base for node in net])
    rows = np.array([int(np.argmax(node.h[0])) for node in net])
    assert np.all((variances >= R_MIN) & (variances <= 0.5))
    assert np.all((delays >= 0.0) & (delays <= 2.0))
    # both measurement rows present in roughly even proportion
    assert 0.4 < rows.mean() < 0.6
    assert net.ids() == list(range(1, 2001))


def test_sample_network_degenerate_ranges_clamped():
    rng = np.random.default_rng(3)
    net = sample_network(1, (0.0, 0.0), (0.0, 0.0), rng)
    node = net.node(1)
    assert node.r[0, 0] == pytest.approx(R_MIN)
    assert node.delay.base == 0.0


def test_sample_network_deterministic():
    net1 = sample_network(50, (0.0, 0.5), (0.0, 2.0), np.random.default_rng(9))
    net2 = sample_network(50, (0.0, 0.5), (0.0, 2.0), np.random.default_rng(9))
    for a, b in zip(net1, net2):
        assert a.id == b.id
        np.testing.assert_array_equal(a.h, b.h)
        np.testing.assert_array_equal(a.r, b.r)
        assert a.delay == b.delay


def test_sample_network_empty_rejected():
    with pytest.raises(ConfigError):
        sample_network(0, (0.0, 0.5), (0.0, 2.0), np.random.default_rng(0))


def test_sample_network_bad_range_rejected():
    with pytest.raises(ConfigError):
        sample_network(5, (0.5, 0.1), (0.0, 2.0), np.random.default_rng(0))


def test_delay_steps_exact_division():
    assert delay_steps(make_node(base=0.02), ts=0.01) == 2


def test_delay_steps_ties_away_from_zero():
    # 0.015 / 0.01 = 1.5 rounds to 2
    assert delay_steps(make_node(base=0.015), ts=0.01) == 2
    assert delay_steps(make_node(base=0.0149), ts=0.01) == 1


def test_delay_steps_negative_jitter_clamped(zero_rng):
    class NegRng:
        def normal(self, loc, scale):
            return -0.03

    node = make_node(base=0.0, jitter=0.02)
    assert delay_steps(node, ts=0.01, rng=NegRng()) == 0


def test_delay_steps_requires_rng_for_jitter():
    with pytest.raises(ConfigError):
        delay_steps(make_node(jitter=0.1), ts=0.01)


def test_delay_steps_integer_multiple_exact():
    for k in range(0, 300, 13):
        assert delay_steps(make_node(base=k * 0.01), ts=0.01) == k


def test_resolve_delays_folds_jitter_once():
    nodes = tuple(make_node(base=1.0, jitter=0.5, node_id=i + 1) for i in range(4))
    net = SensorNetwork(nodes)
    resolved = resolve_delays(net, np.random.default_rng(2))
    assert all(node.delay.jitter_std == 0.0 for node in resolved)
    bases = [node.delay.base for node in resolved]
    assert len(set(bases)) > 1  # distinct draws per node
    assert all(b >= 0.0 for b in bases)


def test_node_invariants_enforced():
    with pytest.raises(ConfigError):
        SensorNode(id=1, h=np.array([[1.0, 0.0]]), r=np.array([[0.0]]))
    with pytest.raises(ConfigError):
        SensorNode(id=1, h=np.array([[1.0, 0.0], [2.0, 0.0]]), r=np.eye(2))
    with pytest.raises(ConfigError):
        SensorNetwork((make_node(node_id=1), make_node(node_id=3)))


def test_network_file_roundtrip(tmp_path):
    rng = np.random.default_rng(4)
    net = sample_network(10, (0.0, 0.5), (0.0, 2.0), rng, jitter_std=0.05)
    path = tmp_path / "net.txt"
    save_network(net, path)
    loaded = load_network(path)
    assert len(loaded) == 10
    for a, b in zip(net, loaded):
        np.testing.assert_array_equal(a.h, b.h)
        np.testing.assert_allclose(a.r, b.r)
        assert a.delay.base == pytest.approx(b.delay.base)
        assert a.delay.jitter_std == pytest.approx(b.delay.jitter_std)
